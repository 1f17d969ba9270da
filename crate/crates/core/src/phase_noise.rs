//! Wiener oscillator phase noise.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Unwrapped phase-noise sample path of one AP. `values[j]` is the phase at
/// global sample index `start_index + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrajectory {
    pub ap_id: u8,
    pub start_index: i64,
    pub values: Vec<f64>,
}

impl PhaseTrajectory {
    /// Phase at global index `i`. Panics outside the stored window.
    pub fn at(&self, i: i64) -> f64 {
        let j = i - self.start_index;
        assert!(
            j >= 0 && (j as usize) < self.values.len(),
            "sample {i} outside trajectory window starting at {} (len {})",
            self.start_index,
            self.values.len()
        );
        self.values[j as usize]
    }

    pub fn end_index(&self) -> i64 {
        self.start_index + self.values.len() as i64 - 1
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-PI..PI)
}

/// Path of `length` samples starting at `initial_phase`; each subsequent
/// sample adds an independent `N(0, sigma_nu_sq)` step.
pub fn generate_trajectory_with<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    sigma_nu_sq: f64,
    initial_phase: f64,
) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::Param("trajectory length must be at least 1".into()));
    }
    if !(sigma_nu_sq.is_finite() && sigma_nu_sq >= 0.0) {
        return Err(Error::Param(format!("phase-noise variance must be nonnegative, got {sigma_nu_sq}")));
    }
    let sd = sigma_nu_sq.sqrt();
    let mut values = Vec::with_capacity(length);
    let mut v = initial_phase;
    values.push(v);
    for _ in 1..length {
        let step: f64 = rng.sample(StandardNormal);
        v += sd * step;
        values.push(v);
    }
    Ok(values)
}

pub fn generate_trajectory(seed: u64, length: usize, sigma_nu_sq: f64, initial_phase: f64) -> Result<PhaseTrajectory> {
    let mut r = rng::seeded(seed);
    Ok(PhaseTrajectory {
        ap_id: 1,
        start_index: 0,
        values: generate_trajectory_with(&mut r, length, sigma_nu_sq, initial_phase)?,
    })
}

/// Wiener process that jumps directly between sparse sample instants.
///
/// Advancing by `m` samples adds one `N(0, m sigma_nu_sq)` draw, which has the
/// same distribution as `m` unit steps.
#[derive(Debug, Clone, Copy)]
pub struct WienerWalker {
    pub index: i64,
    pub value: f64,
    sigma_nu_sq: f64,
}

impl WienerWalker {
    pub fn new(index: i64, value: f64, sigma_nu_sq: f64) -> Self {
        WienerWalker { index, value, sigma_nu_sq }
    }

    /// Moves to global index `to` (must not be in the past) and returns the phase there.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, rng: &mut R, to: i64) -> f64 {
        assert!(to >= self.index, "walker cannot move backwards ({} -> {to})", self.index);
        let m = (to - self.index) as f64;
        if m > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            self.value += (m * self.sigma_nu_sq).sqrt() * z;
            self.index = to;
        }
        self.value
    }
}

/// Debug dump with columns `index,nu_1,nu_2` over the common window.
pub fn trajectories_csv(nu1: &PhaseTrajectory, nu2: &PhaseTrajectory) -> String {
    let mut out = String::from("index,nu_1,nu_2\n");
    let start = nu1.start_index.max(nu2.start_index);
    let end = nu1.end_index().min(nu2.end_index());
    for i in start..=end {
        let _ = writeln!(out, "{i},{:.9e},{:.9e}", nu1.at(i), nu2.at(i));
    }
    out
}
