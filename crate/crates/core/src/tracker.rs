//! Direct and Kalman tracking of the inter-AP phase difference.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::config::{derive_sigma_nu, SlotLayout, SystemParams};
use crate::error::{Error, Result};

/// Maps an angle to `[-pi, pi)` via `((x + pi) mod 2 pi) - pi`.
pub fn wrap(angle: f64) -> Result<f64> {
    if !angle.is_finite() {
        return Err(Error::Param(format!("cannot wrap non-finite angle {angle}")));
    }
    Ok(wrap_finite(angle))
}

pub(crate) fn wrap_finite(angle: f64) -> f64 {
    let w = (angle + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2 pi for tiny negative inputs
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_zeta_sq: f64,
    pub sigma_xi_sq: f64,
    pub meas_var: f64,
}

/// Process, drift and measurement variances for a frame of `params.frame_len` slots.
pub fn derive_noise_model(params: &SystemParams, layout: &SlotLayout, op_norm: f64) -> Result<NoiseModel> {
    let s2 = derive_sigma_nu(params)?;
    let kh = params.representative_ue() as f64;
    let fc = (params.frame_len * layout.tau_c) as f64;
    Ok(NoiseModel {
        sigma_zeta_sq: (8.0 * fc - 4.0 * (layout.i2 as f64 - kh)) * s2,
        sigma_xi_sq: 2.0 * (layout.i1 as f64 - kh) * s2,
        meas_var: crate::sync::measurement_variance(params.rho_ap, op_norm)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    /// Unwrapped estimate.
    pub alpha_hat: f64,
    pub p_var: f64,
    pub n: u64,
}

pub fn kalman_init(first_obs: f64, model: &NoiseModel) -> KalmanState {
    KalmanState { alpha_hat: first_obs, p_var: model.sigma_xi_sq + model.meas_var, n: 0 }
}

pub fn kalman_gain(p_prev: f64, model: &NoiseModel) -> f64 {
    (p_prev + model.sigma_xi_sq) / (p_prev + 3.0 * model.sigma_xi_sq + model.meas_var)
}

/// One step of the correlated-noise filter; returns the new state and the gain used.
pub fn kalman_update(state: &KalmanState, obs: f64, model: &NoiseModel) -> (KalmanState, f64) {
    let kappa = kalman_gain(state.p_var, model);
    let alpha_hat = state.alpha_hat + kappa * wrap_finite(obs - state.alpha_hat);
    let p_var = state.p_var - kappa * (state.p_var + model.sigma_xi_sq) + model.sigma_zeta_sq;
    (KalmanState { alpha_hat, p_var, n: state.n + 1 }, kappa)
}

/// Either the raw per-frame measurement or the Kalman filter.
#[derive(Debug, Clone)]
pub enum Tracker {
    Direct { last: Option<f64> },
    Kalman { model: NoiseModel, state: Option<KalmanState> },
}

impl Tracker {
    pub fn direct() -> Self {
        Tracker::Direct { last: None }
    }

    pub fn kalman(model: NoiseModel) -> Self {
        Tracker::Kalman { model, state: None }
    }

    /// Feeds one measurement and returns the new estimate.
    pub fn observe(&mut self, obs: f64) -> f64 {
        match self {
            Tracker::Direct { last } => {
                *last = Some(obs);
                obs
            }
            Tracker::Kalman { model, state } => {
                let next = match state {
                    None => kalman_init(obs, model),
                    Some(s) => kalman_update(s, obs, model).0,
                };
                *state = Some(next);
                next.alpha_hat
            }
        }
    }

    pub fn estimate(&self) -> Option<f64> {
        match self {
            Tracker::Direct { last } => *last,
            Tracker::Kalman { state, .. } => state.map(|s| s.alpha_hat),
        }
    }
}

/// One row of the filter trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub n: u64,
    pub obs: f64,
    pub alpha_hat: f64,
    pub p_var: f64,
    pub kappa: f64,
    pub true_alpha: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("n,obs,alpha_hat,p,kappa,true_alpha\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            r.n, r.obs, r.alpha_hat, r.p_var, r.kappa, r.true_alpha
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::derive_slot_layout;
    use proptest::prelude::*;

    fn model(zeta: f64, xi: f64, meas: f64) -> NoiseModel {
        NoiseModel { sigma_zeta_sq: zeta, sigma_xi_sq: xi, meas_var: meas }
    }

    #[test]
    fn wrap_table() {
        assert_eq!(wrap(0.0).unwrap(), 0.0);
        assert_eq!(wrap(PI).unwrap(), -PI);
        assert!((wrap(2.5 * PI).unwrap() - 0.5 * PI).abs() < 1e-12);
        assert_eq!(wrap(-PI).unwrap(), -PI);
        assert!(wrap(f64::NAN).is_err());
        assert!(wrap(f64::INFINITY).is_err());
    }

    #[test]
    fn reference_noise_model() {
        let p = SystemParams::default();
        let l = derive_slot_layout(&p).unwrap();
        let s2 = derive_sigma_nu(&p).unwrap();
        let m = derive_noise_model(&p, &l, 1.0).unwrap();
        assert_eq!(m.sigma_zeta_sq / s2, 432.0);
        assert_eq!(m.sigma_xi_sq / s2, 94.0);
        assert!((m.sigma_zeta_sq - 1.7055e-2).abs() < 1e-6);
        assert!((m.sigma_xi_sq - 3.711e-3).abs() < 1e-6);
        let quiet = SystemParams { c_nu: 0.0, ..p };
        let m = derive_noise_model(&quiet, &l, 1.0).unwrap();
        assert_eq!((m.sigma_zeta_sq, m.sigma_xi_sq), (0.0, 0.0));
    }

    #[test]
    fn init_examples() {
        let s = kalman_init(0.4, &model(0.5, 0.003711, 0.1));
        assert_eq!(s.alpha_hat, 0.4);
        assert!((s.p_var - 0.103711).abs() < 1e-15);
        assert_eq!(kalman_init(0.0, &model(0.0, 0.0, 0.0)).p_var, 0.0);
        assert_eq!(kalman_init(1.0, &model(9.0, 0.1, 0.2)), kalman_init(1.0, &model(0.0, 0.1, 0.2)));
    }

    #[test]
    fn update_worked_example() {
        let m = model(0.017055, 0.003711, 0.005);
        let s = KalmanState { alpha_hat: 0.0, p_var: 0.01, n: 3 };
        let (next, kappa) = kalman_update(&s, 0.2, &m);
        let kappa_oracle = 0.013711 / 0.026133;
        assert!((kappa - kappa_oracle).abs() < 1e-9);
        assert!((kappa - 0.52466).abs() < 1e-5);
        let p_oracle = 0.01 - kappa_oracle * 0.013711 + 0.017055;
        assert!((next.p_var - p_oracle).abs() < 1e-9);
        assert!((next.p_var - 0.019862).abs() < 1e-6);
        assert!((next.alpha_hat - kappa_oracle * 0.2).abs() < 1e-9);
        assert_eq!(next.n, 4);
    }

    #[test]
    fn update_limits() {
        let s = KalmanState { alpha_hat: 0.3, p_var: 0.2, n: 0 };
        let (next, kappa) = kalman_update(&s, 2.0, &model(0.0, 0.0, 1e300));
        assert!(kappa < 1e-299);
        assert_eq!(next.alpha_hat, 0.3);
        let (_, kappa) = kalman_update(&KalmanState { alpha_hat: 0.0, p_var: 0.7, n: 0 }, 0.0, &model(0.0, 0.0, 0.7));
        assert_eq!(kappa, 0.5);
    }

    #[test]
    fn innovation_is_wrapped() {
        let s = KalmanState { alpha_hat: 3.0, p_var: 1.0, n: 0 };
        let (next, kappa) = kalman_update(&s, -3.0, &model(0.0, 0.0, 1.0));
        let innov = -6.0 + 2.0 * PI;
        assert!((next.alpha_hat - (3.0 + kappa * innov)).abs() < 1e-12);
    }

    #[test]
    fn riccati_fixed_point() {
        let m = model(0.017055, 0.003711, 0.08);
        let mut s = kalman_init(0.0, &m);
        let mut prev = s.p_var;
        for _ in 0..1000 {
            s = kalman_update(&s, 0.0, &m).0;
            if (s.p_var - prev).abs() < 1e-12 {
                break;
            }
            prev = s.p_var;
        }
        let k = kalman_gain(s.p_var, &m);
        let fixed = s.p_var - k * (s.p_var + m.sigma_xi_sq) + m.sigma_zeta_sq;
        assert!((fixed - s.p_var).abs() < 1e-10);
    }

    #[test]
    fn high_snr_gain_limits() {
        let p = 0.02;
        let xi = 0.004;
        let k = kalman_gain(p, &model(0.017, xi, 1e-14));
        assert!((k - (p + xi) / (p + 3.0 * xi)).abs() < 1e-9);
        assert!(k < 1.0);
        let k = kalman_gain(p, &model(0.017, 1e-14, 1e-14));
        assert!((k - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tracker_modes() {
        let mut d = Tracker::direct();
        assert_eq!(d.estimate(), None);
        assert_eq!(d.observe(0.5), 0.5);
        assert_eq!(d.observe(-0.1), -0.1);
        let mut k = Tracker::kalman(model(0.01, 0.001, 0.1));
        assert_eq!(k.observe(0.5), 0.5);
        let second = k.observe(0.7);
        assert!(second > 0.5 && second < 0.7);
    }

    #[test]
    fn trace_header() {
        let csv = trace_csv(&[TraceRow { n: 1, obs: 0.0, alpha_hat: 0.0, p_var: 0.1, kappa: 0.5, true_alpha: 0.0 }]);
        assert!(csv.starts_with("n,obs,alpha_hat,p,kappa,true_alpha\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn wrap_range_and_congruence(x in -1e6f64..1e6) {
            let w = wrap(x).unwrap();
            prop_assert!((-PI..PI).contains(&w));
            let k = ((x - w) / (2.0 * PI)).round();
            prop_assert!((x - w - 2.0 * PI * k).abs() < 1e-7);
        }

        #[test]
        fn gain_in_unit_interval_and_variance_nonnegative(
            p in 0.0f64..10.0,
            xi in 0.0f64..1.0,
            extra in 0.0f64..1.0,
            meas in 1e-6f64..10.0,
        ) {
            let m = model(xi + extra, xi, meas);
            let k = kalman_gain(p, &m);
            prop_assert!(k > 0.0 && k < 1.0 || (p + xi == 0.0 && k == 0.0));
            let (next, _) = kalman_update(&KalmanState { alpha_hat: 0.0, p_var: p, n: 0 }, 0.3, &m);
            prop_assert!(next.p_var >= -1e-12);
        }

        #[test]
        fn gain_monotone(p in 0.0f64..5.0, xi in 0.0f64..0.5, meas in 1e-4f64..5.0, dp in 1e-3f64..1.0) {
            let m = model(xi, xi, meas);
            prop_assert!(kalman_gain(p + dp, &m) >= kalman_gain(p, &m));
            let m2 = model(xi, xi, meas + dp);
            prop_assert!(kalman_gain(p, &m2) <= kalman_gain(p, &m));
        }
    }
}
