//! AP-side and UE-side phase compensation, the residual factor `Delta`, and its
//! Monte Carlo mean over frame realizations.
//!
//! One run draws fresh initial phases, tracks the inter-AP phase over
//! `warmup_frames` frames and then records `Delta[k, l, n]` at every position
//! `n` of the following frame. Warm-up frames only need the phases at the two
//! sync instants, so they are walked with [`WienerWalker`] jumps; the last
//! warm-up frame and the recorded frame are generated sample by sample.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{InterApChannel, SyncLink};
use crate::config::{derive_sigma_nu, derive_slot_layout, PilotErrorModel, SlotLayout, SystemParams};
use crate::error::{Error, Result};
use crate::par;
use crate::phase_noise::{generate_trajectory_with, uniform_phase, PhaseTrajectory, WienerWalker};
use crate::rng::{self, Purpose};
use crate::sync::{measure_frame, sync_times};
use crate::timeline::{build_ap1_only_schedule, build_frame_schedule, estimation_time, SamplePlan};
use crate::tracker::{derive_noise_model, kalman_init, kalman_update, TraceRow, Tracker};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Kalman,
    Direct,
    Ap1Only,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Kalman, Scheme::Direct, Scheme::Ap1Only];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Kalman => "kalman",
            Scheme::Direct => "direct",
            Scheme::Ap1Only => "ap1_only",
        }
    }

    pub fn uses_sync(self) -> bool {
        self != Scheme::Ap1Only
    }

    pub fn plan(self, params: &SystemParams, layout: &SlotLayout) -> Result<SamplePlan> {
        match self {
            Scheme::Ap1Only => build_ap1_only_schedule(params, layout),
            _ => build_frame_schedule(params, layout),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kalman" => Ok(Scheme::Kalman),
            "direct" => Ok(Scheme::Direct),
            "ap1_only" | "ap1" => Ok(Scheme::Ap1Only),
            other => Err(Error::Param(format!("unknown scheme `{other}` (kalman, direct, ap1_only)"))),
        }
    }
}

/// Compensation terms in force at a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationState {
    /// `theta[0]` is always 0.
    pub theta: [f64; 2],
    pub psi: Vec<f64>,
    pub theta_reset: Option<i64>,
    pub psi_reset: Option<i64>,
}

impl CompensationState {
    pub fn new(n_ues: usize) -> Self {
        CompensationState { theta: [0.0; 2], psi: vec![0.0; n_ues], theta_reset: None, psi_reset: None }
    }

    pub fn reset_theta(&mut self, tracker_output: f64, time: i64) {
        self.theta[1] = ap2_theta_from_tracker(tracker_output);
        self.theta_reset = Some(time);
    }

    pub fn reset_psi(&mut self, values: Vec<f64>, time: i64) {
        self.psi = values;
        self.psi_reset = Some(time);
    }
}

/// AP 2's compensation term: the tracker output, held until the next one.
pub fn ap2_theta_from_tracker(tracker_output: f64) -> f64 {
    tracker_output
}

/// UE reference phase `nu_1[p] + nu_1[[p]_kh]` learned from the demodulation pilot at `p`.
pub fn ue_psi_update(pilot_time: i64, nu1: &PhaseTrajectory, representative_ue: usize, tau_c: usize) -> f64 {
    nu1.at(pilot_time) + nu1.at(estimation_time(pilot_time, representative_ue, tau_c))
}

/// `exp(j(-nu_l[i] - nu_l[[i]_k] + theta_l + psi_k))`, `k` 1-based.
pub fn residual_delta(k: usize, i: i64, nu_l: &PhaseTrajectory, theta_l: f64, psi_k: f64, tau_c: usize) -> C64 {
    let est = estimation_time(i, k, tau_c);
    C64::from_polar(1.0, -nu_l.at(i) - nu_l.at(est) + theta_l + psi_k)
}

/// Variance of UE `k`'s (0-based) demodulation-pilot phase error given the
/// indicators `a` of the two APs at the pilot.
pub fn pilot_error_variance(params: &SystemParams, k: usize, a: [f64; 2]) -> f64 {
    match params.pilot_error {
        PilotErrorModel::None => 0.0,
        PilotErrorModel::Fixed(v) => v,
        PilotErrorModel::Coherent => {
            let amp: f64 = (0..2).map(|l| a[l] * (params.eta[k][l] * params.gamma(k, l)).sqrt()).sum();
            let snr = 2.0 * params.n_antennas as f64 * params.rho_ap * amp * amp;
            if snr > 0.0 {
                1.0 / snr
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Monte Carlo means of `Delta[k, l, n]` over one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaStats {
    pub n_ues: usize,
    pub n_positions: usize,
    pub n_realizations: usize,
    means: Vec<C64>,
    /// Means over disjoint batches of runs, for batch-means error bars.
    pub batch_means: Vec<Vec<C64>>,
}

fn cell(n_positions: usize, k: usize, ap: u8, n: usize) -> usize {
    (k * 2 + ap as usize - 1) * n_positions + n - 1
}

impl DeltaStats {
    /// Statistics with every cell set to `value` (used for synthetic inputs).
    pub fn constant(n_ues: usize, n_positions: usize, value: C64) -> Self {
        DeltaStats {
            n_ues,
            n_positions,
            n_realizations: 1,
            means: vec![value; n_ues * 2 * n_positions],
            batch_means: Vec::new(),
        }
    }

    /// Mean of `Delta` for UE `k` (0-based), AP `ap` (1 or 2), position `n` (1-based).
    pub fn mean(&self, k: usize, ap: u8, n: usize) -> C64 {
        self.means[cell(self.n_positions, k, ap, n)]
    }

    pub fn set(&mut self, k: usize, ap: u8, n: usize, v: C64) {
        let i = cell(self.n_positions, k, ap, n);
        self.means[i] = v;
    }

    /// The same statistics seen through one batch.
    pub fn batch(&self, b: usize) -> DeltaStats {
        DeltaStats {
            n_ues: self.n_ues,
            n_positions: self.n_positions,
            n_realizations: self.n_realizations / self.batch_means.len().max(1),
            means: self.batch_means[b].clone(),
            batch_means: Vec::new(),
        }
    }

    /// Averages over UEs: the per-UE `|E[Delta]|` spread is a symmetry check.
    pub fn ue_average(&self, ap: u8, n: usize) -> C64 {
        (0..self.n_ues).map(|k| self.mean(k, ap, n)).sum::<C64>() / self.n_ues as f64
    }

    /// CSV with columns `position,ap,ue,re,im,abs` (1-based indices).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,ap,ue,re,im,abs\n");
        for n in 1..=self.n_positions {
            for ap in [1u8, 2] {
                for k in 0..self.n_ues {
                    let m = self.mean(k, ap, n);
                    let _ = writeln!(out, "{n},{ap},{},{:.9e},{:.9e},{:.9e}", k + 1, m.re, m.im, m.norm());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Frames tracked before the recorded frame (at least 1).
    pub warmup_frames: usize,
    /// Drop the receiver noise of the sync measurements.
    pub noiseless_sync: bool,
    /// Worker threads; 0 uses every core.
    pub n_workers: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { warmup_frames: 20, noiseless_sync: false, n_workers: 0 }
    }
}

/// Inter-AP channels of every run, drawn at unit large-scale fading.
///
/// Run `r` always sees the same small-scale channel, so cells of a sweep that
/// differ only in `beta_g` share their random numbers.
#[derive(Debug, Clone)]
pub struct ChannelBank {
    pub master_seed: u64,
    pub n_antennas: usize,
    links: Vec<SyncLink>,
}

impl ChannelBank {
    pub fn build(master_seed: u64, n_runs: usize, n_antennas: usize, n_workers: usize) -> Result<Self> {
        let links = par::map_indexed(n_workers, n_runs, |run| {
            let mut r = rng::stream(master_seed, run as u64, Purpose::InterApChannel);
            InterApChannel::sample(&mut r, n_antennas, 1.0).map(|ch| ch.sync_link())
        })?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(ChannelBank { master_seed, n_antennas, links })
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn link(&self, run: usize, beta_g: f64) -> SyncLink {
        self.links[run].scaled(beta_g.sqrt())
    }
}

struct RunContext<'a> {
    params: &'a SystemParams,
    layout: SlotLayout,
    plan: SamplePlan,
    scheme: Scheme,
    sigma_nu_sq: f64,
    pilot_var: Vec<f64>,
    /// Slot whose demodulation pilot governs each frame position (0 = previous frame).
    governing_slot: Vec<usize>,
    opts: SimOptions,
    bank: Option<&'a ChannelBank>,
    master_seed: u64,
}

impl RunContext<'_> {
    fn frame_samples(&self) -> usize {
        self.plan.len()
    }

    fn run(&self, run: usize, acc: &mut [C64]) -> Result<()> {
        let p = self.params;
        let k_count = p.n_ues;
        let tau_c = self.layout.tau_c;
        let len = self.frame_samples() as i64;
        let w = self.opts.warmup_frames as i64;
        let s2 = self.sigma_nu_sq;
        let mut rng = rng::stream(self.master_seed, run as u64, Purpose::Run);
        let mut walkers =
            [WienerWalker::new(1, uniform_phase(&mut rng), s2), WienerWalker::new(1, uniform_phase(&mut rng), s2)];

        let mut sync = match (self.scheme, self.bank) {
            (Scheme::Ap1Only, _) => None,
            (scheme, Some(bank)) => {
                let link = bank.link(run, p.beta_g);
                let tracker = match scheme {
                    Scheme::Kalman => Tracker::kalman(derive_noise_model(p, &self.layout, link.op_norm)?),
                    _ => Tracker::direct(),
                };
                Some((tracker, link))
            }
            (_, None) => return Err(Error::Contract("synchronized schemes need a channel bank".into())),
        };
        let (i1, i2) = match sync {
            Some(_) => {
                let (a, b) = sync_times(&self.plan)?;
                (a as i64, b as i64)
            }
            None => (0, 0),
        };

        if let Some((tracker, link)) = sync.as_mut() {
            for f in 0..(w - 1) {
                let base = f * len;
                let nu_i1 = [walkers[0].advance_to(&mut rng, base + i1), walkers[1].advance_to(&mut rng, base + i1)];
                let nu_i2 = [walkers[0].advance_to(&mut rng, base + i2), walkers[1].advance_to(&mut rng, base + i2)];
                let m = measure_frame(
                    &mut rng,
                    f as u64,
                    &self.plan,
                    link,
                    nu_i1,
                    nu_i2,
                    p.rho_ap,
                    self.opts.noiseless_sync,
                )?;
                tracker.observe(m.alpha_bar);
            }
        }

        let start = (w - 1) * len + 1;
        let mut nu = Vec::with_capacity(2);
        for (l, walker) in walkers.iter_mut().enumerate() {
            let v0 = walker.advance_to(&mut rng, start);
            nu.push(PhaseTrajectory {
                ap_id: l as u8 + 1,
                start_index: start,
                values: generate_trajectory_with(&mut rng, 2 * len as usize, s2, v0)?,
            });
        }

        let frame_start = w * len;
        let (theta_prev, theta_next, reset_time) = match sync.as_mut() {
            Some((tracker, link)) => {
                let mut outputs = [0.0; 2];
                for (j, base) in [frame_start - len, frame_start].into_iter().enumerate() {
                    let at = |t: i64| [nu[0].at(base + t), nu[1].at(base + t)];
                    let m = measure_frame(
                        &mut rng,
                        (w - 1 + j as i64) as u64,
                        &self.plan,
                        link,
                        at(i1),
                        at(i2),
                        p.rho_ap,
                        self.opts.noiseless_sync,
                    )?;
                    outputs[j] = ap2_theta_from_tracker(tracker.observe(m.alpha_bar));
                }
                (outputs[0], outputs[1], frame_start + i2)
            }
            None => (0.0, 0.0, i64::MAX),
        };

        let kh = p.representative_ue();
        let pilots = &self.plan.demod_pilots;
        let f_slots = pilots.len();
        let mut psi = vec![vec![0.0; k_count]; f_slots + 1];
        for (s, row) in psi.iter_mut().enumerate() {
            let t = if s == 0 {
                frame_start - len + pilots[f_slots - 1] as i64
            } else {
                frame_start + pilots[s - 1] as i64
            };
            let reference = ue_psi_update(t, &nu[0], kh, tau_c);
            for (k, v) in row.iter_mut().enumerate() {
                *v = reference + pilot_error(&mut rng, self.pilot_var[k]);
            }
        }

        let n_pos = len as usize;
        let mut a = vec![C64::new(0.0, 0.0); n_pos];
        for (l, nu_l) in nu.iter().enumerate() {
            for (idx, slot) in a.iter_mut().enumerate() {
                let g = frame_start + idx as i64 + 1;
                let theta = match (l, g >= reset_time) {
                    (0, _) => 0.0,
                    (_, true) => theta_next,
                    (_, false) => theta_prev,
                };
                *slot = C64::from_polar(1.0, theta - nu_l.at(g));
            }
            #[allow(clippy::needless_range_loop)]
            for k in 0..k_count {
                let base = (k * 2 + l) * n_pos;
                let out = &mut acc[base..base + n_pos];
                let mut key = (i64::MIN, usize::MAX);
                let mut b = C64::new(1.0, 0.0);
                for (idx, (o, av)) in out.iter_mut().zip(&a).enumerate() {
                    let g = frame_start + idx as i64 + 1;
                    let est = estimation_time(g, k + 1, tau_c);
                    let s = self.governing_slot[idx];
                    if (est, s) != key {
                        key = (est, s);
                        b = C64::from_polar(1.0, psi[s][k] - nu_l.at(est));
                    }
                    *o += av * b;
                }
            }
        }
        Ok(())
    }
}

fn pilot_error<R: Rng + ?Sized>(rng: &mut R, var: f64) -> f64 {
    if var == 0.0 {
        0.0
    } else if var.is_finite() {
        let z: f64 = rng.sample(StandardNormal);
        var.sqrt() * z
    } else {
        uniform_phase(rng)
    }
}

/// Full chain for `n_realizations` runs with default options.
pub fn monte_carlo_delta(
    params: &SystemParams,
    scheme: Scheme,
    n_realizations: usize,
    master_seed: u64,
) -> Result<DeltaStats> {
    simulate_delta(params, scheme, n_realizations, master_seed, &SimOptions::default(), None)
}

pub const MAX_CHUNKS: usize = 100;
pub const MAX_BATCHES: usize = 10;

/// Runs are split into a fixed set of contiguous chunks whose sums are added
/// in order, so results do not depend on `opts.n_workers`.
pub fn simulate_delta(
    params: &SystemParams,
    scheme: Scheme,
    n_realizations: usize,
    master_seed: u64,
    opts: &SimOptions,
    bank: Option<&ChannelBank>,
) -> Result<DeltaStats> {
    params.validate()?;
    if n_realizations == 0 {
        return Err(Error::Param("n_realizations must be at least 1".into()));
    }
    if opts.warmup_frames == 0 {
        return Err(Error::Param("warmup_frames must be at least 1".into()));
    }
    let layout = derive_slot_layout(params)?;
    let plan = scheme.plan(params, &layout)?;
    let owned;
    let bank = match bank {
        _ if !scheme.uses_sync() => None,
        Some(b) if b.len() >= n_realizations && b.n_antennas == params.n_antennas && b.master_seed == master_seed => {
            Some(b)
        }
        Some(_) => return Err(Error::Contract("channel bank does not match the run set".into())),
        None => {
            owned = ChannelBank::build(master_seed, n_realizations, params.n_antennas, opts.n_workers)?;
            Some(&owned)
        }
    };
    let pilot = plan.demod_pilots[0];
    let pilot_a = [plan.a(1, pilot), plan.a(2, pilot)];
    let governing_slot = (1..=plan.len())
        .map(|n| match plan.governing_demod_pilot(n) {
            Some(p) => plan.demod_pilots.iter().position(|&x| x == p).expect("pilot in plan") + 1,
            None => 0,
        })
        .collect();
    let ctx = RunContext {
        params,
        layout,
        scheme,
        sigma_nu_sq: derive_sigma_nu(params)?,
        pilot_var: (0..params.n_ues).map(|k| pilot_error_variance(params, k, pilot_a)).collect(),
        governing_slot,
        plan,
        opts: *opts,
        bank,
        master_seed,
    };

    let n_cells = params.n_ues * 2 * ctx.frame_samples();
    let chunks = MAX_CHUNKS.min(n_realizations);
    let chunk_range = |c: usize| (c * n_realizations / chunks)..((c + 1) * n_realizations / chunks);
    let sums = par::map_indexed(opts.n_workers, chunks, |c| -> Result<Vec<C64>> {
        let mut acc = vec![C64::new(0.0, 0.0); n_cells];
        for run in chunk_range(c) {
            ctx.run(run, &mut acc)?;
        }
        Ok(acc)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let batches = MAX_BATCHES.min(n_realizations);
    let mut total = vec![C64::new(0.0, 0.0); n_cells];
    let mut batch_means = Vec::with_capacity(batches);
    for b in 0..batches {
        let mut acc = vec![C64::new(0.0, 0.0); n_cells];
        let chunk_ids = (b * chunks / batches)..((b + 1) * chunks / batches);
        let runs: usize = chunk_ids.clone().map(|c| chunk_range(c).len()).sum();
        for c in chunk_ids {
            for (a, s) in acc.iter_mut().zip(&sums[c]) {
                *a += s;
            }
        }
        for (t, a) in total.iter_mut().zip(&acc) {
            *t += a;
        }
        batch_means.push(acc.into_iter().map(|x| x / runs as f64).collect());
    }
    Ok(DeltaStats {
        n_ues: params.n_ues,
        n_positions: ctx.frame_samples(),
        n_realizations,
        means: total.into_iter().map(|x| x / n_realizations as f64).collect(),
        batch_means,
    })
}

/// Per-frame tracker trace of one long run, with the true phase difference
/// `(nu_2 + nu_2[[i2]_kh]) - (nu_1 + nu_1[[i2]_kh])` at `i2`.
///
/// For the direct scheme `alpha_hat` equals the observation, `p` is the
/// measurement variance and `kappa` is 1.
pub fn tracking_trace(
    params: &SystemParams,
    scheme: Scheme,
    n_frames: usize,
    master_seed: u64,
    noiseless_sync: bool,
) -> Result<Vec<TraceRow>> {
    params.validate()?;
    if !scheme.uses_sync() {
        return Err(Error::Param("ap1_only has no inter-AP tracker".into()));
    }
    let layout = derive_slot_layout(params)?;
    let plan = build_frame_schedule(params, &layout)?;
    let s2 = derive_sigma_nu(params)?;
    let mut rng = rng::stream(master_seed, 0, Purpose::InterApChannel);
    let link = InterApChannel::sample(&mut rng, params.n_antennas, params.beta_g)?.sync_link();
    let model = derive_noise_model(params, &layout, link.op_norm)?;
    let mut rng = rng::stream(master_seed, 0, Purpose::Run);
    let mut walkers =
        [WienerWalker::new(1, uniform_phase(&mut rng), s2), WienerWalker::new(1, uniform_phase(&mut rng), s2)];
    let (i1, i2) = sync_times(&plan)?;
    let len = plan.len() as i64;
    let kh = params.representative_ue();
    let mut state = None;
    let mut rows = Vec::with_capacity(n_frames);
    for f in 0..n_frames as i64 {
        let base = f * len;
        let t_ref = estimation_time(base + i2 as i64, kh, layout.tau_c).max(1);
        let mut at = |t: i64| [walkers[0].advance_to(&mut rng, t), walkers[1].advance_to(&mut rng, t)];
        let nu_ref = at(t_ref);
        let nu_i1 = at(base + i1 as i64);
        let nu_i2 = at(base + i2 as i64);
        let m = measure_frame(&mut rng, f as u64, &plan, &link, nu_i1, nu_i2, params.rho_ap, noiseless_sync)?;
        let true_alpha = (nu_i2[1] + nu_ref[1]) - (nu_i2[0] + nu_ref[0]);
        let (alpha_hat, p_var, kappa) = match scheme {
            Scheme::Kalman => {
                let (next, kappa) = match state {
                    None => (kalman_init(m.alpha_bar, &model), 1.0),
                    Some(s) => kalman_update(&s, m.alpha_bar, &model),
                };
                state = Some(next);
                (next.alpha_hat, next.p_var, kappa)
            }
            _ => (m.alpha_bar, model.meas_var, 1.0),
        };
        rows.push(TraceRow { n: f as u64 + 1, obs: m.alpha_bar, alpha_hat, p_var, kappa, true_alpha });
    }
    Ok(rows)
}
