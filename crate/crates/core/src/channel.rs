//! UE-AP Rayleigh channels, LMMSE effective-channel estimation and the
//! inter-AP channel with its leading singular pair.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SystemParams;
use crate::error::{Error, Result};
use crate::C64;

/// One draw of `CN(0, variance)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> Vec<C64> {
    (0..len).map(|_| complex_normal(rng, variance)).collect()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `a^T b*`, the bilinear form `q^T q_hat^*` used throughout the rate analysis.
pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Channels `h[k][l]` of one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct UeChannelSet {
    pub h: Vec<[Vec<C64>; 2]>,
    pub slot_index: i64,
}

pub fn sample_ue_channels<R: Rng + ?Sized>(rng: &mut R, params: &SystemParams, slot_index: i64) -> UeChannelSet {
    let n = params.n_antennas;
    let h =
        params.beta_ue.iter().map(|b| [complex_normal_vec(rng, n, b[0]), complex_normal_vec(rng, n, b[1])]).collect();
    UeChannelSet { h, slot_index }
}

/// Correlated uplink pilot observation `sqrt(rho_ue K) e^{j nu} h + z`, `z ~ CN(0, I)`.
pub fn pilot_observation<R: Rng + ?Sized>(rng: &mut R, h: &[C64], pilot_phase: f64, params: &SystemParams) -> Vec<C64> {
    let gain = C64::from_polar((params.rho_ue * params.n_ues as f64).sqrt(), pilot_phase);
    h.iter().map(|&x| gain * x + complex_normal(rng, 1.0)).collect()
}

/// LMMSE estimate of the effective channel `q_{k,l} = e^{j nu_{l,[i]_k}} h_{k,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub q_hat: Vec<C64>,
    pub gamma: f64,
    pub c: f64,
    /// Global sample index `[i]_k` at which the pilot was received.
    pub estimation_time: i64,
}

pub fn lmmse_estimate(
    y_pilot: &[C64],
    k: usize,
    l: usize,
    params: &SystemParams,
    estimation_time: i64,
) -> ChannelEstimate {
    let c = params.lmmse_scale(k, l);
    ChannelEstimate { q_hat: y_pilot.iter().map(|y| y * c).collect(), gamma: params.gamma(k, l), c, estimation_time }
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = CMatrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m.data[i * d.len() + i] = x;
        }
        m
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> Self {
        CMatrix { rows, cols, data: complex_normal_vec(rng, rows * cols, variance) }
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn scaled(&self, s: f64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// `M v`
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        self.data.chunks_exact(self.cols).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `M^T v`
    pub fn transpose_mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (row, &x) in self.data.chunks_exact(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * x;
            }
        }
        out
    }

    /// `M^H v`
    pub fn adjoint_mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (row, &x) in self.data.chunks_exact(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * x;
            }
        }
        out
    }

    /// Gram matrix `M^H M`.
    pub fn gram(&self) -> CMatrix {
        let n = self.cols;
        let mut g = CMatrix::zeros(n, n);
        for row in self.data.chunks_exact(n) {
            for i in 0..n {
                let ai = row[i].conj();
                let out = &mut g.data[i * n..(i + 1) * n];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += ai * b;
                }
            }
        }
        g
    }

    pub fn frobenius_sqr(&self) -> f64 {
        norm_sqr(&self.data)
    }
}

pub const POWER_ITERATION_TOL: f64 = 1e-12;
pub const POWER_ITERATION_CAP: usize = 10_000;

/// Leading left/right singular vectors and the operator norm of `g`.
///
/// Power iteration on `g^H g`, stopped when the relative change of the
/// Rayleigh quotient drops below [`POWER_ITERATION_TOL`]. The right vector is
/// rotated so its largest-magnitude entry is real and nonnegative.
pub fn leading_singular_pair(g: &CMatrix) -> Result<(Vec<C64>, Vec<C64>, f64)> {
    let n = g.cols;
    if n == 0 || g.frobenius_sqr() == 0.0 {
        return Err(Error::Param("leading_singular_pair needs a nonzero matrix".into()));
    }
    let gram = g.gram();
    let mut v: Vec<C64> = (0..n).map(|j| C64::new(1.0 + 0.1 * j as f64, 0.05 * j as f64)).collect();
    normalize(&mut v);
    let mut lambda = f64::NAN;
    let mut change = f64::INFINITY;
    let mut converged = false;
    for _ in 0..POWER_ITERATION_CAP {
        let w = gram.mul_vec(&v);
        let next = inner(&v, &w).re;
        let w_norm = norm_sqr(&w).sqrt();
        if w_norm == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / w_norm).collect();
        change = (next - lambda).abs();
        let done = change <= POWER_ITERATION_TOL * next.abs();
        lambda = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: POWER_ITERATION_CAP, residual: change });
    }
    let pivot = v.iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())).expect("nonempty");
    let rot = pivot.conj() / pivot.norm();
    let u2: Vec<C64> = v.iter().map(|x| x * rot).collect();
    let gu = g.mul_vec(&u2);
    let op_norm = norm_sqr(&gu).sqrt();
    let u1 = gu.iter().map(|x| x / op_norm).collect();
    Ok((u1, u2, op_norm))
}

fn normalize(v: &mut [C64]) {
    let n = norm_sqr(v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Inter-AP channel `G` with its leading singular pair.
///
/// `G` maps AP 2's transmit antennas to AP 1's receive antennas; by
/// reciprocity AP 2 receives through `G^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterApChannel {
    pub g: CMatrix,
    pub u1: Vec<C64>,
    pub u2: Vec<C64>,
    pub op_norm: f64,
}

impl InterApChannel {
    pub fn new(g: CMatrix) -> Result<Self> {
        let (u1, u2, op_norm) = leading_singular_pair(&g)?;
        Ok(InterApChannel { g, u1, u2, op_norm })
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_antennas: usize, beta_g: f64) -> Result<Self> {
        InterApChannel::new(CMatrix::random(rng, n_antennas, n_antennas, beta_g))
    }

    /// Received synchronization directions for both links.
    ///
    /// AP 2 sends `u2` and AP 1 sees `G u2`. AP 1 sends `conj(u1)` so that AP 2
    /// sees `G^T conj(u1) = conj(G^H u1)`, which also has norm `||G||`.
    pub fn sync_link(&self) -> SyncLink {
        let beam_1 = self.u1.iter().map(|x| x.conj()).collect::<Vec<_>>();
        SyncLink {
            rx_at_ap1: self.g.mul_vec(&self.u2),
            rx_at_ap2: self.g.transpose_mul_vec(&beam_1),
            op_norm: self.op_norm,
        }
    }
}

/// Effective received vectors of the two synchronization directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncLink {
    /// `G u2`: what AP 1 receives when AP 2 transmits.
    pub rx_at_ap1: Vec<C64>,
    /// `G^T conj(u1)`: what AP 2 receives when AP 1 transmits.
    pub rx_at_ap2: Vec<C64>,
    pub op_norm: f64,
}

impl SyncLink {
    /// The same link with `G` scaled by `s`.
    pub fn scaled(&self, s: f64) -> SyncLink {
        SyncLink {
            rx_at_ap1: self.rx_at_ap1.iter().map(|x| x * s).collect(),
            rx_at_ap2: self.rx_at_ap2.iter().map(|x| x * s).collect(),
            op_norm: self.op_norm * s,
        }
    }
}
