//! Per-sample activity plans for the two APs over one frame.
//!
//! Slot 1 of every frame uses the broken flow, where AP 2 moves the last
//! `tau_g + 1` uplink samples to the end of the slot and starts its downlink
//! early. The remaining `F - 1` slots are conventional.

use std::fmt;
use std::fmt::Write as _;

use crate::config::{SlotLayout, SystemParams};
use crate::error::{Error, Result};

/// Samples of overlap between opposite link directions in the broken slot.
pub const TAU_S: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activity {
    UlPilot,
    UlData,
    Guard,
    DlData,
    DlDemodPilot,
    SyncTx,
    SyncRx,
    Idle,
}

impl Activity {
    pub fn label(self) -> &'static str {
        match self {
            Activity::UlPilot => "UL_PILOT",
            Activity::UlData => "UL_DATA",
            Activity::Guard => "GUARD",
            Activity::DlData => "DL_DATA",
            Activity::DlDemodPilot => "DL_DEMOD_PILOT",
            Activity::SyncTx => "SYNC_TX",
            Activity::SyncRx => "SYNC_RX",
            Activity::Idle => "IDLE",
        }
    }

    /// The AP radiates at this sample.
    pub fn transmits(self) -> bool {
        matches!(self, Activity::DlData | Activity::DlDemodPilot | Activity::SyncTx)
    }

    pub fn is_uplink_side(self) -> bool {
        matches!(self, Activity::UlPilot | Activity::UlData | Activity::SyncRx)
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Labels of one slot, `labels[n - 1] = [ap1, ap2]`.
pub type SlotLabels = Vec<[Activity; 2]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncEvent {
    /// 1-based position within the frame.
    pub time: usize,
    pub tx_ap: u8,
    pub rx_ap: u8,
}

fn conventional_ap(layout: &SlotLayout) -> Vec<Activity> {
    let mut out = vec![Activity::Guard; layout.tau_c];
    for n in layout.ul_pilot.iter() {
        out[n - 1] = Activity::UlPilot;
    }
    for n in layout.ul_data.iter() {
        out[n - 1] = Activity::UlData;
    }
    for n in layout.downlink.iter() {
        out[n - 1] = Activity::DlData;
    }
    out[layout.demod_pilot - 1] = Activity::DlDemodPilot;
    out
}

pub fn build_conventional_slot(layout: &SlotLayout) -> SlotLabels {
    conventional_ap(layout).into_iter().map(|a| [a, a]).collect()
}

/// Broken slot: AP 1 keeps the conventional flow, AP 2 shifts its downlink to
/// start at `i1`. Sync samples carry no data.
pub fn build_broken_slot(layout: &SlotLayout) -> Result<SlotLabels> {
    let tau_g = layout.tau_g;
    if layout.ul_data.len < tau_g + TAU_S {
        return Err(Error::Geometry(format!(
            "broken slot needs tau_u >= tau_g + {TAU_S} to relocate the uplink tail (tau_u = {})",
            layout.ul_data.len
        )));
    }
    if layout.downlink.len < tau_g + TAU_S + 1 {
        return Err(Error::Geometry(format!(
            "broken slot needs tau_d >= tau_g + {} so both APs share the demodulation pilot (tau_d = {})",
            TAU_S + 1,
            layout.downlink.len
        )));
    }
    let (i1, i2) = (layout.i1, layout.i2);
    let tau_d = layout.downlink.len;
    let ap1 = conventional_ap(layout);
    let mut ap2 = vec![Activity::UlData; layout.tau_c];
    for n in layout.ul_pilot.iter() {
        ap2[n - 1] = Activity::UlPilot;
    }
    for n in (i1 - tau_g)..i1 {
        ap2[n - 1] = Activity::Guard;
    }
    for n in i1..i1 + tau_d {
        ap2[n - 1] = Activity::DlData;
    }
    for n in (i1 + tau_d)..(i1 + tau_d + tau_g) {
        ap2[n - 1] = Activity::Guard;
    }
    ap2[i1 - 1] = Activity::SyncTx;
    ap2[layout.demod_pilot - 1] = Activity::DlDemodPilot;
    ap2[i2 - 1] = Activity::SyncRx;

    let mut labels: SlotLabels = ap1.into_iter().zip(ap2).map(|(a, b)| [a, b]).collect();
    labels[i1 - 1][0] = Activity::SyncRx;
    labels[i2 - 1][0] = Activity::SyncTx;
    Ok(labels)
}

/// `[i]_k`: global index of the most recent pilot of UE `k` (1-based) strictly before `i`.
pub fn estimation_time(i: i64, k: usize, tau_c: usize) -> i64 {
    i - 1 - (i - 1 - k as i64).rem_euclid(tau_c as i64)
}

/// Activity plan of one frame of `F` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub tau_c: usize,
    pub frame_len: usize,
    pub n_ues: usize,
    pub labels: Vec<[Activity; 2]>,
    pub sync_events: Vec<SyncEvent>,
    /// Frame position of the demodulation pilot of each slot.
    pub demod_pilots: Vec<usize>,
}

impl SamplePlan {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label of AP `ap` (1 or 2) at 1-based frame position `n`.
    pub fn label(&self, ap: u8, n: usize) -> Activity {
        self.labels[n - 1][ap as usize - 1]
    }

    /// Downlink indicator `a[ap, n]`.
    pub fn a(&self, ap: u8, n: usize) -> f64 {
        if self.label(ap, n).transmits() {
            1.0
        } else {
            0.0
        }
    }

    /// The AP sends data to the UEs at `n`.
    pub fn carries_data(&self, ap: u8, n: usize) -> bool {
        self.label(ap, n) == Activity::DlData
    }

    /// Frame positions of UE `k`'s (1-based) uplink pilot, one per slot.
    pub fn pilot_times(&self, k: usize) -> Vec<usize> {
        (0..self.frame_len).map(|s| s * self.tau_c + k).collect()
    }

    /// Demodulation pilot governing position `n`: the latest one at or before `n`,
    /// or `None` when it lies in the previous frame.
    pub fn governing_demod_pilot(&self, n: usize) -> Option<usize> {
        self.demod_pilots.iter().copied().take_while(|&p| p <= n).last()
    }

    pub fn count(&self, ap: u8, activity: Activity) -> usize {
        self.labels.iter().filter(|l| l[ap as usize - 1] == activity).count()
    }

    /// CSV with columns `n,ap1_label,ap2_label,a1,a2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,ap1_label,ap2_label,a1,a2\n");
        for n in 1..=self.len() {
            let _ = writeln!(out, "{n},{},{},{},{}", self.label(1, n), self.label(2, n), self.a(1, n), self.a(2, n));
        }
        out
    }
}

/// Frame of one broken slot followed by `F - 1` conventional slots.
pub fn build_frame_schedule(params: &SystemParams, layout: &SlotLayout) -> Result<SamplePlan> {
    if params.frame_len == 0 {
        return Err(Error::Param("frame_len must be at least 1".into()));
    }
    let tau_c = layout.tau_c;
    let mut labels = build_broken_slot(layout)?;
    let conv = build_conventional_slot(layout);
    for _ in 1..params.frame_len {
        labels.extend_from_slice(&conv);
    }
    Ok(SamplePlan {
        tau_c,
        frame_len: params.frame_len,
        n_ues: params.n_ues,
        labels,
        sync_events: vec![
            SyncEvent { time: layout.i1, tx_ap: 2, rx_ap: 1 },
            SyncEvent { time: layout.i2, tx_ap: 1, rx_ap: 2 },
        ],
        demod_pilots: (0..params.frame_len).map(|s| s * tau_c + layout.demod_pilot).collect(),
    })
}

/// AP 1 alone with conventional slots; AP 2 is silent.
pub fn build_ap1_only_schedule(params: &SystemParams, layout: &SlotLayout) -> Result<SamplePlan> {
    if params.frame_len == 0 {
        return Err(Error::Param("frame_len must be at least 1".into()));
    }
    let slot: SlotLabels = conventional_ap(layout).into_iter().map(|a| [a, Activity::Idle]).collect();
    let mut labels = Vec::with_capacity(slot.len() * params.frame_len);
    for _ in 0..params.frame_len {
        labels.extend_from_slice(&slot);
    }
    Ok(SamplePlan {
        tau_c: layout.tau_c,
        frame_len: params.frame_len,
        n_ues: params.n_ues,
        labels,
        sync_events: Vec::new(),
        demod_pilots: (0..params.frame_len).map(|s| s * layout.tau_c + layout.demod_pilot).collect(),
    })
}
