//! Over-the-air bidirectional phase measurements between the two APs.

use rand::Rng;

use crate::channel::{complex_normal, inner, SyncLink};
use crate::error::{Error, Result};
use crate::timeline::{Activity, SamplePlan};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncMeasurement {
    pub frame_index: u64,
    pub alpha_21: f64,
    pub alpha_12: f64,
    pub alpha_bar: f64,
    /// `(nu_2[i1] + nu_2[i2]) - (nu_1[i1] + nu_1[i2])`, diagnostics only.
    pub true_target: f64,
}

/// Angle of the matched-filter output for one sync direction.
///
/// `nu = [nu_1, nu_2]` at `time`. The receiver sees
/// `y = sqrt(rho_ap) e^{j(nu_rx - nu_tx)} r + z` with `r` the beamformed
/// response and returns `arg(r^H y)`. With `noiseless` the noise is dropped.
#[allow(clippy::too_many_arguments)]
pub fn measure_direction<R: Rng + ?Sized>(
    rng: &mut R,
    tx_ap: u8,
    time: usize,
    plan: &SamplePlan,
    link: &SyncLink,
    nu: [f64; 2],
    rho_ap: f64,
    noiseless: bool,
) -> Result<f64> {
    let rx_ap = match tx_ap {
        1 => 2,
        2 => 1,
        _ => return Err(Error::Contract(format!("tx_ap must be 1 or 2, got {tx_ap}"))),
    };
    if time == 0 || time > plan.len() {
        return Err(Error::Contract(format!("sync time {time} outside the frame")));
    }
    if plan.label(tx_ap, time) != Activity::SyncTx || plan.label(rx_ap, time) != Activity::SyncRx {
        return Err(Error::Contract(format!(
            "sample {time} is not a sync instant from AP {tx_ap} (labels {} / {})",
            plan.label(1, time),
            plan.label(2, time)
        )));
    }
    let alpha = nu[rx_ap as usize - 1] - nu[tx_ap as usize - 1];
    let r = if tx_ap == 2 { &link.rx_at_ap1 } else { &link.rx_at_ap2 };
    Ok(matched_angle(rng, r, alpha, rho_ap, noiseless))
}

pub(crate) fn matched_angle<R: Rng + ?Sized>(rng: &mut R, r: &[C64], alpha: f64, rho_ap: f64, noiseless: bool) -> f64 {
    let gain = C64::from_polar(rho_ap.sqrt(), alpha);
    let y: Vec<C64> = if noiseless {
        r.iter().map(|x| gain * x).collect()
    } else {
        r.iter().map(|x| gain * x + complex_normal(rng, 1.0)).collect()
    };
    inner(r, &y).arg()
}

/// `alpha_12 - alpha_21`, left unwrapped.
pub fn combine_bidirectional(alpha_21: f64, alpha_12: f64) -> f64 {
    alpha_12 - alpha_21
}

/// Total measurement-error variance `1 / (rho_ap ||G||^2)` of the combined estimate.
pub fn measurement_variance(rho_ap: f64, op_norm: f64) -> Result<f64> {
    if op_norm.is_nan() || op_norm <= 0.0 {
        return Err(Error::Param(format!("operator norm must be positive, got {op_norm}")));
    }
    Ok(1.0 / (rho_ap * op_norm * op_norm))
}

/// Both sync measurements of one frame.
#[allow(clippy::too_many_arguments)]
pub fn measure_frame<R: Rng + ?Sized>(
    rng: &mut R,
    frame_index: u64,
    plan: &SamplePlan,
    link: &SyncLink,
    nu_i1: [f64; 2],
    nu_i2: [f64; 2],
    rho_ap: f64,
    noiseless: bool,
) -> Result<SyncMeasurement> {
    let (t21, t12) = sync_times(plan)?;
    let alpha_21 = measure_direction(rng, 2, t21, plan, link, nu_i1, rho_ap, noiseless)?;
    let alpha_12 = measure_direction(rng, 1, t12, plan, link, nu_i2, rho_ap, noiseless)?;
    Ok(SyncMeasurement {
        frame_index,
        alpha_21,
        alpha_12,
        alpha_bar: combine_bidirectional(alpha_21, alpha_12),
        true_target: (nu_i1[1] + nu_i2[1]) - (nu_i1[0] + nu_i2[0]),
    })
}

/// `(i1, i2)` of the plan: the AP 2 -> AP 1 and AP 1 -> AP 2 sync instants.
pub fn sync_times(plan: &SamplePlan) -> Result<(usize, usize)> {
    let find = |tx: u8| {
        plan.sync_events
            .iter()
            .find(|e| e.tx_ap == tx)
            .map(|e| e.time)
            .ok_or_else(|| Error::Contract(format!("plan has no sync event from AP {tx}")))
    };
    Ok((find(2)?, find(1)?))
}
