//! Closed-form downlink rate per frame position, spectral efficiency, and
//! brute-force oracles for the rate and the LMMSE moment identities.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{complex_normal, complex_normal_vec, dot_conj, norm_sqr};
use crate::compensation::DeltaStats;
use crate::config::SystemParams;
use crate::error::{Error, Result};
use crate::phase_noise::uniform_phase;
use crate::rng;
use crate::timeline::SamplePlan;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    pub ds_power: f64,
    pub bu_power: f64,
    pub ui_power: f64,
    pub rate_bits: f64,
}

impl RateBreakdown {
    pub const ZERO: RateBreakdown = RateBreakdown { ds_power: 0.0, bu_power: 0.0, ui_power: 0.0, rate_bits: 0.0 };

    fn from_powers(ds: f64, bu: f64, ui: f64) -> Self {
        RateBreakdown { ds_power: ds, bu_power: bu, ui_power: ui, rate_bits: (1.0 + ds / (bu + ui + 1.0)).log2() }
    }
}

/// Per-UE, per-AP quantities entering the closed form for one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeTerms {
    pub gamma: [f64; 2],
    pub beta: [f64; 2],
    pub eta: [f64; 2],
    /// `sum_k' eta[k', l]` over all UEs.
    pub eta_total: [f64; 2],
}

impl UeTerms {
    pub fn from_params(params: &SystemParams, k: usize) -> Self {
        let eta_total = [0, 1].map(|l| params.eta.iter().map(|e| e[l]).sum());
        UeTerms {
            gamma: [params.gamma(k, 0), params.gamma(k, 1)],
            beta: params.beta_ue[k],
            eta: params.eta[k],
            eta_total,
        }
    }
}

/// Closed form with the single-denominator grouping:
/// `ds = N rho |sum a sqrt(eta gamma) E|^2`, `bu = N rho sum a eta gamma (1 - |E|^2)`,
/// `ui = rho sum a beta sum_k' eta`.
pub fn closed_form(n_antennas: usize, rho_ap: f64, a: [f64; 2], mean_delta: [C64; 2], t: &UeTerms) -> RateBreakdown {
    if a == [0.0, 0.0] {
        return RateBreakdown::ZERO;
    }
    let n = n_antennas as f64;
    let mut amp = C64::new(0.0, 0.0);
    let mut bu = 0.0;
    let mut ui = 0.0;
    for l in 0..2 {
        amp += mean_delta[l] * (a[l] * (t.eta[l] * t.gamma[l]).sqrt());
        bu += a[l] * t.eta[l] * t.gamma[l] * (1.0 - mean_delta[l].norm_sqr());
        ui += a[l] * t.beta[l] * t.eta_total[l];
    }
    RateBreakdown::from_powers(n * rho_ap * amp.norm_sqr(), n * rho_ap * bu, rho_ap * ui)
}

/// The same totals split as beamforming uncertainty including the own-`beta`
/// term, and interference from the other UEs only. Returns `(bu, ui)`.
pub fn closed_form_split(n_antennas: usize, rho_ap: f64, a: [f64; 2], mean_delta: [C64; 2], t: &UeTerms) -> (f64, f64) {
    let n = n_antennas as f64;
    let mut bu = 0.0;
    let mut ui = 0.0;
    for l in 0..2 {
        bu += a[l] * t.eta[l] * (t.beta[l] + n * t.gamma[l] * (1.0 - mean_delta[l].norm_sqr()));
        ui += a[l] * t.beta[l] * (t.eta_total[l] - t.eta[l]);
    }
    (rho_ap * bu, rho_ap * ui)
}

/// Everything the per-position rate needs.
#[derive(Debug, Clone)]
pub struct RateInputs<'a> {
    pub params: &'a SystemParams,
    pub plan: &'a SamplePlan,
    pub delta: &'a DeltaStats,
}

impl RateInputs<'_> {
    /// Data indicators at position `n`; pilots and sync samples carry no data.
    pub fn a(&self, n: usize) -> [f64; 2] {
        [1u8, 2].map(|ap| if self.plan.carries_data(ap, n) { 1.0 } else { 0.0 })
    }
}

/// Rate of UE `k` (0-based) at frame position `n` (1-based); zero where no AP sends data.
pub fn rate_at_position(k: usize, n: usize, inputs: &RateInputs) -> RateBreakdown {
    let a = inputs.a(n);
    let md = [inputs.delta.mean(k, 1, n), inputs.delta.mean(k, 2, n)];
    closed_form(inputs.params.n_antennas, inputs.params.rho_ap, a, md, &UeTerms::from_params(inputs.params, k))
}

/// Mean of the per-position rates over the frame.
pub fn spectral_efficiency(rates: &[f64]) -> f64 {
    if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

pub fn ue_spectral_efficiency(k: usize, inputs: &RateInputs) -> f64 {
    let rates: Vec<f64> = (1..=inputs.plan.len()).map(|n| rate_at_position(k, n, inputs).rate_bits).collect();
    spectral_efficiency(&rates)
}

/// Spectral efficiency averaged over all UEs.
pub fn average_spectral_efficiency(inputs: &RateInputs) -> f64 {
    let k = inputs.params.n_ues;
    (0..k).map(|u| ue_spectral_efficiency(u, inputs)).sum::<f64>() / k as f64
}

/// Average SE and its batch-means standard error.
pub fn spectral_efficiency_with_error(params: &SystemParams, plan: &SamplePlan, delta: &DeltaStats) -> (f64, f64) {
    let mean = average_spectral_efficiency(&RateInputs { params, plan, delta });
    let b = delta.batch_means.len();
    if b < 2 {
        return (mean, f64::NAN);
    }
    let per_batch: Vec<f64> = (0..b)
        .map(|i| {
            let d = delta.batch(i);
            average_spectral_efficiency(&RateInputs { params, plan, delta: &d })
        })
        .collect();
    let m = per_batch.iter().sum::<f64>() / b as f64;
    let var = per_batch.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// CSV with columns `n,k,ds,bu,ui,rate` over data positions (1-based indices).
pub fn rate_table_csv(inputs: &RateInputs) -> String {
    let mut out = String::from("n,k,ds,bu,ui,rate\n");
    for n in 1..=inputs.plan.len() {
        if inputs.a(n) == [0.0, 0.0] {
            continue;
        }
        for k in 0..inputs.params.n_ues {
            let r = rate_at_position(k, n, inputs);
            let _ = writeln!(
                out,
                "{n},{},{:.9e},{:.9e},{:.9e},{:.9e}",
                k + 1,
                r.ds_power,
                r.bu_power,
                r.ui_power,
                r.rate_bits
            );
        }
    }
    out
}

/// Distribution of a synthetic residual factor `e^{j(m + X)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaLaw {
    /// `X ~ N(0, var)`.
    Gaussian { mean_phase: f64, var: f64 },
    /// Uniform phase, zero mean.
    Uniform,
}

impl DeltaLaw {
    /// Law with `E[Delta] = modulus * e^{j mean_phase}` (`modulus` in `[0, 1]`).
    pub fn with_mean(modulus: f64, mean_phase: f64) -> Self {
        if modulus <= 0.0 {
            DeltaLaw::Uniform
        } else {
            DeltaLaw::Gaussian { mean_phase, var: -2.0 * modulus.min(1.0).ln() }
        }
    }

    pub fn mean(&self) -> C64 {
        match *self {
            DeltaLaw::Gaussian { mean_phase, var } => C64::from_polar((-var / 2.0).exp(), mean_phase),
            DeltaLaw::Uniform => C64::new(0.0, 0.0),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> C64 {
        match *self {
            DeltaLaw::Gaussian { mean_phase, var } => {
                let z: f64 = rng.sample(StandardNormal);
                C64::from_polar(1.0, mean_phase + var.sqrt() * z)
            }
            DeltaLaw::Uniform => C64::from_polar(1.0, uniform_phase(rng)),
        }
    }
}

/// A small system for the brute-force rate oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleInstance {
    pub n_antennas: usize,
    pub rho_ue: f64,
    pub rho_ap: f64,
    /// `beta[k][l]`, all positive.
    pub beta: Vec<[f64; 2]>,
    pub eta: Vec<[f64; 2]>,
    pub a: [f64; 2],
    pub delta: [DeltaLaw; 2],
    /// UE under test (0-based).
    pub k: usize,
}

impl OracleInstance {
    pub fn n_ues(&self) -> usize {
        self.beta.len()
    }

    fn c(&self, k: usize, l: usize) -> f64 {
        let p = (self.rho_ue * self.n_ues() as f64).sqrt();
        p * self.beta[k][l] / (p * p * self.beta[k][l] + 1.0)
    }

    fn gamma(&self, k: usize, l: usize) -> f64 {
        (self.rho_ue * self.n_ues() as f64).sqrt() * self.beta[k][l] * self.c(k, l)
    }

    pub fn terms(&self) -> UeTerms {
        let k = self.k;
        UeTerms {
            gamma: [self.gamma(k, 0), self.gamma(k, 1)],
            beta: self.beta[k],
            eta: self.eta[k],
            eta_total: [0, 1].map(|l| self.eta.iter().map(|e| e[l]).sum()),
        }
    }

    pub fn closed_form(&self) -> RateBreakdown {
        closed_form(self.n_antennas, self.rho_ap, self.a, [self.delta[0].mean(), self.delta[1].mean()], &self.terms())
    }

    pub fn closed_form_split(&self) -> (f64, f64) {
        closed_form_split(
            self.n_antennas,
            self.rho_ap,
            self.a,
            [self.delta[0].mean(), self.delta[1].mean()],
            &self.terms(),
        )
    }
}

/// Empirical powers with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub ds_power: f64,
    pub ds_stderr: f64,
    pub bu_power: f64,
    pub bu_stderr: f64,
    pub ui_power: f64,
    pub ui_stderr: f64,
    pub n_samples: usize,
}

/// Direct simulation of the received-signal decomposition: the gain
/// `X = sqrt(rho) sum_l a sqrt(eta / (N gamma)) Delta q^T q_hat^*` is drawn with
/// fresh channels, pilot noise and residual factors; `DS = E[X]`,
/// `BU = Var(X)`, and `UI` is the power leaked by the other UEs' beams.
pub fn monte_carlo_rate_oracle(inst: &OracleInstance, n_samples: usize, seed: u64) -> Result<OracleEstimate> {
    let k_count = inst.n_ues();
    if n_samples < 2 || inst.k >= k_count || inst.eta.len() != k_count {
        return Err(Error::Param("oracle needs >= 2 samples and consistent UE arrays".into()));
    }
    if inst.beta.iter().flatten().any(|&b| b.is_nan() || b <= 0.0) {
        return Err(Error::Param("oracle needs positive beta".into()));
    }
    let n = inst.n_antennas;
    let nf = n as f64;
    let pilot_gain = (inst.rho_ue * k_count as f64).sqrt();
    let mut r = rng::seeded(seed);
    let mut xs = Vec::with_capacity(n_samples);
    let mut uis = Vec::with_capacity(n_samples);
    let mut q_hat = vec![[Vec::new(), Vec::new()]; k_count];
    for _ in 0..n_samples {
        let delta = [inst.delta[0].sample(&mut r), inst.delta[1].sample(&mut r)];
        let mut q_k: [Vec<C64>; 2] = [Vec::new(), Vec::new()];
        for (kp, est) in q_hat.iter_mut().enumerate() {
            for l in 0..2 {
                let q = complex_normal_vec(&mut r, n, inst.beta[kp][l]);
                let c = inst.c(kp, l);
                est[l] = q.iter().map(|&x| (x * pilot_gain + complex_normal(&mut r, 1.0)) * c).collect();
                if kp == inst.k {
                    q_k[l] = q;
                }
            }
        }
        let beam = |kp: usize| -> C64 {
            (0..2)
                .map(|l| {
                    let w = inst.a[l] * (inst.rho_ap * inst.eta[kp][l] / (nf * inst.gamma(kp, l))).sqrt();
                    delta[l] * dot_conj(&q_k[l], &q_hat[kp][l]) * w
                })
                .sum()
        };
        xs.push(beam(inst.k));
        uis.push((0..k_count).filter(|&kp| kp != inst.k).map(|kp| beam(kp).norm_sqr()).sum::<f64>());
    }
    let m = n_samples as f64;
    let ds: C64 = xs.iter().sum::<C64>() / m;
    let dev: Vec<f64> = xs.iter().map(|x| (x - ds).norm_sqr()).collect();
    let (bu, bu_sd) = mean_sd(&dev);
    let (ui, ui_sd) = mean_sd(&uis);
    Ok(OracleEstimate {
        ds_power: ds.norm_sqr(),
        ds_stderr: 2.0 * ds.norm() * (bu / m).sqrt() + bu / m,
        bu_power: bu,
        bu_stderr: bu_sd / m.sqrt(),
        ui_power: ui,
        ui_stderr: ui_sd / m.sqrt(),
        n_samples,
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Empirical LMMSE moments next to their closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmmseMoments {
    pub gamma: f64,
    /// Largest relative deviation of `diag E[q_hat q_hat^H]` from `gamma`.
    pub cov_diag_rel_err: f64,
    /// Largest off-diagonal `|E[q_hat q_hat^H]|` divided by `gamma`.
    pub cov_offdiag_rel: f64,
    /// `E[q_err^T q_hat^*]` and its standard error.
    pub cross_mean: C64,
    pub cross_mean_stderr: f64,
    pub cross_sq: f64,
    pub cross_sq_theory: f64,
    pub q_hat_4: f64,
    pub q_hat_4_theory: f64,
}

/// Draws `n_samples` pilot observations with a uniform pilot phase and
/// measures the moments of the estimate and its error.
pub fn lmmse_moments(
    n_antennas: usize,
    n_ues: usize,
    beta: f64,
    rho_ue: f64,
    n_samples: usize,
    seed: u64,
) -> LmmseMoments {
    let p = (rho_ue * n_ues as f64).sqrt();
    let c = p * beta / (p * p * beta + 1.0);
    let gamma = p * beta * c;
    let nf = n_antennas as f64;
    let m = n_samples as f64;
    let mut r = rng::seeded(seed);
    let mut cov = vec![C64::new(0.0, 0.0); n_antennas * n_antennas];
    let mut cross = Vec::with_capacity(n_samples);
    let mut cross_sq = 0.0;
    let mut q4 = 0.0;
    for _ in 0..n_samples {
        let phase = C64::from_polar(1.0, uniform_phase(&mut r));
        let h = complex_normal_vec(&mut r, n_antennas, beta);
        let q: Vec<C64> = h.iter().map(|x| x * phase).collect();
        let q_hat: Vec<C64> = q.iter().map(|&x| (x * p + complex_normal(&mut r, 1.0)) * c).collect();
        let q_err: Vec<C64> = q.iter().zip(&q_hat).map(|(a, b)| a - b).collect();
        for i in 0..n_antennas {
            for j in 0..n_antennas {
                cov[i * n_antennas + j] += q_hat[i] * q_hat[j].conj();
            }
        }
        let x = dot_conj(&q_err, &q_hat);
        cross_sq += x.norm_sqr();
        cross.push(x);
        q4 += norm_sqr(&q_hat).powi(2);
    }
    let mut diag_err: f64 = 0.0;
    let mut off: f64 = 0.0;
    for i in 0..n_antennas {
        for j in 0..n_antennas {
            let v = cov[i * n_antennas + j] / m;
            if i == j {
                diag_err = diag_err.max((v.re / gamma - 1.0).abs());
            } else {
                off = off.max(v.norm() / gamma);
            }
        }
    }
    let cross_mean = cross.iter().sum::<C64>() / m;
    let cross_var = cross.iter().map(|x| (x - cross_mean).norm_sqr()).sum::<f64>() / (m - 1.0);
    LmmseMoments {
        gamma,
        cov_diag_rel_err: diag_err,
        cov_offdiag_rel: off,
        cross_mean,
        cross_mean_stderr: (cross_var / m).sqrt(),
        cross_sq: cross_sq / m,
        cross_sq_theory: nf * gamma * (beta - gamma),
        q_hat_4: q4 / m,
        q_hat_4_theory: nf * (nf + 1.0) * gamma * gamma,
    }
}
