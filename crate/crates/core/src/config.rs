//! System parameters, slot geometry and the flat `key = value` config format.
//!
//! Every key is optional; omitted keys take the reference values below.
//!
//! | key              | default            | meaning                                   |
//! |------------------|--------------------|-------------------------------------------|
//! | `n_antennas`     | 64                 | antennas per AP                           |
//! | `n_ues`          | 10                 | single-antenna UEs                        |
//! | `tau_c`          | 100                | samples per slot                          |
//! | `tau_p`          | 10                 | uplink pilot samples (must equal `n_ues`) |
//! | `tau_u`          | 42                 | uplink data samples                       |
//! | `tau_g`          | 3                  | samples per guard period                  |
//! | `tau_d`          | 42                 | downlink samples                          |
//! | `frame_len`      | 1                  | slots per frame                           |
//! | `rho_ue`         | 20dB               | UE transmit power                         |
//! | `rho_ap`         | 2 * rho_ue         | AP transmit power                         |
//! | `beta_ue`        | -20dB              | UE-AP large-scale fading, all pairs       |
//! | `beta_ue.K.L`    |                    | one pair (1-based UE `K`, AP `L`)         |
//! | `snr_ap`         | -15dB              | inter-AP SNR, sets `beta_g = snr_ap / rho_ap` |
//! | `beta_g`         |                    | inter-AP large-scale fading (overrides `snr_ap`) |
//! | `eta`            | 1 / n_ues          | power control, all pairs                  |
//! | `eta.K.L`        |                    | one pair                                  |
//! | `f_c`            | 2e9                | carrier frequency, Hz                     |
//! | `f_s`            | 2e7                | sample rate, Hz                           |
//! | `c_nu`           | 5e-18              | oscillator quality constant               |
//! | `ue_pilot_error` | coherent           | `none`, `coherent`, or a variance in rad² |
//!
//! Real values accept a `dB` suffix and are converted to linear scale.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Phase error of the UE's downlink demodulation-pilot estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotErrorModel {
    /// The UE learns the reference phase exactly.
    None,
    /// Gaussian error with a fixed variance (rad²).
    Fixed(f64),
    /// Gaussian error with variance `1 / (2 N rho_ap |sum_l a_l sqrt(eta gamma)|^2)`,
    /// the angle MSE of a single pilot sample received with the coherent
    /// beamforming gain.
    Coherent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub n_antennas: usize,
    pub n_ues: usize,
    pub tau_c: usize,
    pub tau_p: usize,
    pub tau_g: usize,
    pub tau_d: usize,
    pub tau_u: usize,
    pub frame_len: usize,
    pub rho_ue: f64,
    pub rho_ap: f64,
    /// `beta_ue[k][l]`, UE `k` (0-based) to AP `l` (0-based).
    pub beta_ue: Vec<[f64; 2]>,
    pub beta_g: f64,
    /// `eta[k][l]`, power control of UE `k` at AP `l`.
    pub eta: Vec<[f64; 2]>,
    pub f_c: f64,
    pub f_s: f64,
    pub c_nu: f64,
    pub pilot_error: PilotErrorModel,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

impl Default for SystemParams {
    fn default() -> Self {
        let k = 10;
        let rho_ue = db_to_linear(20.0);
        let rho_ap = 2.0 * rho_ue;
        SystemParams {
            n_antennas: 64,
            n_ues: k,
            tau_c: 100,
            tau_p: 10,
            tau_g: 3,
            tau_d: 42,
            tau_u: 42,
            frame_len: 1,
            rho_ue,
            rho_ap,
            beta_ue: vec![[db_to_linear(-20.0); 2]; k],
            beta_g: db_to_linear(-15.0) / rho_ap,
            eta: vec![[1.0 / k as f64; 2]; k],
            f_c: 2e9,
            f_s: 2e7,
            c_nu: 5e-18,
            pilot_error: PilotErrorModel::Coherent,
        }
    }
}

impl SystemParams {
    /// Inter-AP SNR `rho_ap * beta_g`, linear.
    pub fn snr_ap(&self) -> f64 {
        self.rho_ap * self.beta_g
    }

    pub fn set_snr_ap_db(&mut self, snr_db: f64) {
        self.beta_g = db_to_linear(snr_db) / self.rho_ap;
    }

    /// Index of the UE whose pilot instant represents all UEs when forming
    /// the common phase reference (`floor(K/2)`, 1-based sample index).
    pub fn representative_ue(&self) -> usize {
        self.n_ues / 2
    }

    /// LMMSE scalar `c_{k,l}`.
    pub fn lmmse_scale(&self, k: usize, l: usize) -> f64 {
        let p = (self.rho_ue * self.n_ues as f64).sqrt();
        let b = self.beta_ue[k][l];
        p * b / (p * p * b + 1.0)
    }

    /// Channel-estimate variance `gamma_{k,l}`.
    pub fn gamma(&self, k: usize, l: usize) -> f64 {
        (self.rho_ue * self.n_ues as f64).sqrt() * self.beta_ue[k][l] * self.lmmse_scale(k, l)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_antennas", self.n_antennas),
            ("n_ues", self.n_ues),
            ("tau_c", self.tau_c),
            ("tau_p", self.tau_p),
            ("tau_d", self.tau_d),
            ("tau_u", self.tau_u),
            ("frame_len", self.frame_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Param(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("rho_ue", self.rho_ue),
            ("rho_ap", self.rho_ap),
            ("beta_g", self.beta_g),
            ("f_c", self.f_c),
            ("f_s", self.f_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Param(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        if !(self.c_nu.is_finite() && self.c_nu >= 0.0) {
            return Err(Error::Param(format!("c_nu must be nonnegative, got {}", self.c_nu)));
        }
        if self.tau_p != self.n_ues {
            return Err(Error::Param(format!("tau_p = {} must equal n_ues = {}", self.tau_p, self.n_ues)));
        }
        if self.beta_ue.len() != self.n_ues || self.eta.len() != self.n_ues {
            return Err(Error::Param(format!("beta_ue and eta need one entry per UE ({} UEs)", self.n_ues)));
        }
        for (k, row) in self.beta_ue.iter().enumerate() {
            for (l, &b) in row.iter().enumerate() {
                if !(b.is_finite() && b >= 0.0) {
                    return Err(Error::Param(format!("beta_ue.{}.{} must be nonnegative", k + 1, l + 1)));
                }
            }
        }
        for l in 0..2 {
            let mut total = 0.0;
            for (k, row) in self.eta.iter().enumerate() {
                if !(row[l].is_finite() && row[l] >= 0.0) {
                    return Err(Error::Param(format!("eta.{}.{} must be nonnegative", k + 1, l + 1)));
                }
                total += row[l];
            }
            if total > 1.0 + 1e-12 {
                return Err(Error::Param(format!("power constraint violated at AP {}: sum of eta = {total}", l + 1)));
            }
        }
        if let PilotErrorModel::Fixed(v) = self.pilot_error {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Param(format!("ue_pilot_error must be nonnegative, got {v}")));
            }
        }
        derive_slot_layout(self)?;
        derive_sigma_nu(self)?;
        Ok(())
    }

    /// Serializes every field; `load_config` of the result reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_antennas = {}", self.n_antennas);
        let _ = writeln!(out, "n_ues = {}", self.n_ues);
        let _ = writeln!(out, "tau_c = {}", self.tau_c);
        let _ = writeln!(out, "tau_p = {}", self.tau_p);
        let _ = writeln!(out, "tau_u = {}", self.tau_u);
        let _ = writeln!(out, "tau_g = {}", self.tau_g);
        let _ = writeln!(out, "tau_d = {}", self.tau_d);
        let _ = writeln!(out, "frame_len = {}", self.frame_len);
        let _ = writeln!(out, "rho_ue = {:?}", self.rho_ue);
        let _ = writeln!(out, "rho_ap = {:?}", self.rho_ap);
        write_pairs(&mut out, "beta_ue", &self.beta_ue);
        let _ = writeln!(out, "beta_g = {:?}", self.beta_g);
        write_pairs(&mut out, "eta", &self.eta);
        let _ = writeln!(out, "f_c = {:?}", self.f_c);
        let _ = writeln!(out, "f_s = {:?}", self.f_s);
        let _ = writeln!(out, "c_nu = {:?}", self.c_nu);
        let pilot = match self.pilot_error {
            PilotErrorModel::None => "none".to_string(),
            PilotErrorModel::Coherent => "coherent".to_string(),
            PilotErrorModel::Fixed(v) => format!("{v:?}"),
        };
        let _ = writeln!(out, "ue_pilot_error = {pilot}");
        out
    }
}

fn write_pairs(out: &mut String, key: &str, values: &[[f64; 2]]) {
    let uniform =
        values.first().map(|first| values.iter().all(|v| v[0] == first[0] && v[1] == first[0])).unwrap_or(true);
    match values.first() {
        Some(first) if uniform => {
            let _ = writeln!(out, "{key} = {:?}", first[0]);
        }
        _ => {
            for (k, v) in values.iter().enumerate() {
                for (l, x) in v.iter().enumerate() {
                    let _ = writeln!(out, "{key}.{}.{} = {x:?}", k + 1, l + 1);
                }
            }
        }
    }
}

/// Per-sample phase-noise increment variance `4 pi^2 f_c^2 c_nu / f_s` (rad²).
pub fn derive_sigma_nu(params: &SystemParams) -> Result<f64> {
    if params.f_s.is_nan() || params.f_s <= 0.0 {
        return Err(Error::Param(format!("f_s must be positive, got {}", params.f_s)));
    }
    let v = 4.0 * PI * PI * params.f_c * params.f_c * params.c_nu / params.f_s;
    if !v.is_finite() {
        return Err(Error::Param(format!("phase-noise variance is not finite ({v})")));
    }
    Ok(v)
}

/// Inclusive range of 1-based sample indices within a slot. `len == 0` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn new(start: usize, len: usize) -> Self {
        Span { start, len }
    }

    /// Last index; meaningless for an empty span.
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn contains(&self, n: usize) -> bool {
        self.len > 0 && n >= self.start && n < self.start + self.len
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Sample geometry of a conventional slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotLayout {
    pub tau_c: usize,
    pub tau_g: usize,
    pub ul_pilot: Span,
    pub ul_data: Span,
    pub guard1: Span,
    pub downlink: Span,
    pub guard2: Span,
    /// AP 2 -> AP 1 synchronization sample (last uplink sample of AP 1).
    pub i1: usize,
    /// AP 1 -> AP 2 synchronization sample (last downlink sample of AP 1).
    pub i2: usize,
    /// Downlink demodulation pilot (first downlink sample).
    pub demod_pilot: usize,
}

impl SlotLayout {
    pub fn uplink(&self) -> Span {
        Span::new(1, self.ul_pilot.len + self.ul_data.len)
    }
}

pub fn derive_slot_layout(params: &SystemParams) -> Result<SlotLayout> {
    let SystemParams { tau_c, tau_p, tau_g, tau_d, tau_u, .. } = *params;
    if tau_p == 0 || tau_u == 0 || tau_d == 0 {
        return Err(Error::Geometry("tau_p, tau_u and tau_d must be positive".into()));
    }
    if tau_p + tau_u + tau_d + 2 * tau_g != tau_c {
        return Err(Error::Geometry(format!(
            "tau_p + tau_u + tau_d + 2 tau_g = {} but tau_c = {tau_c}",
            tau_p + tau_u + tau_d + 2 * tau_g
        )));
    }
    let ul_pilot = Span::new(1, tau_p);
    let ul_data = Span::new(tau_p + 1, tau_u);
    let guard1 = Span::new(tau_p + tau_u + 1, tau_g);
    let downlink = Span::new(tau_p + tau_u + tau_g + 1, tau_d);
    let guard2 = Span::new(tau_p + tau_u + tau_g + tau_d + 1, tau_g);
    Ok(SlotLayout {
        tau_c,
        tau_g,
        ul_pilot,
        ul_data,
        guard1,
        downlink,
        guard2,
        i1: tau_p + tau_u,
        i2: tau_p + tau_u + tau_g + tau_d,
        demod_pilot: downlink.start,
    })
}

fn parse_real(value: &str) -> Option<f64> {
    let v = value.trim();
    let (num, db) = match v.strip_suffix("dB").or_else(|| v.strip_suffix("db")) {
        Some(n) => (n.trim(), true),
        None => (v, false),
    };
    let x: f64 = num.parse().ok()?;
    if !x.is_finite() {
        return None;
    }
    Some(if db { db_to_linear(x) } else { x })
}

fn parse_pair_key(rest: &str) -> Option<(usize, usize)> {
    let (k, l) = rest.split_once('.')?;
    let k: usize = k.parse().ok()?;
    let l: usize = l.parse().ok()?;
    (k >= 1 && (1..=2).contains(&l)).then_some((k - 1, l - 1))
}

/// Parses a flat `key = value` document. `#` starts a comment.
pub fn load_config(text: &str) -> Result<SystemParams> {
    let mut p = SystemParams::default();
    let mut rho_ap: Option<f64> = None;
    let mut beta_g: Option<f64> = None;
    let mut snr_ap: Option<f64> = None;
    let mut beta_all: Option<f64> = None;
    let mut eta_all: Option<f64> = None;
    let mut beta_pairs: Vec<((usize, usize), f64)> = Vec::new();
    let mut eta_pairs: Vec<((usize, usize), f64)> = Vec::new();
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Config { line, msg };
        let (key, value) =
            content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|s| s == key) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        seen.push(key.to_string());

        let int = || -> Result<usize> {
            value.parse::<usize>().map_err(|_| err(format!("`{key}` expects a nonnegative integer, got `{value}`")))
        };
        let real = || -> Result<f64> {
            parse_real(value).ok_or_else(|| err(format!("`{key}` expects a real number, got `{value}`")))
        };

        match key {
            "n_antennas" => p.n_antennas = int()?,
            "n_ues" => p.n_ues = int()?,
            "tau_c" => p.tau_c = int()?,
            "tau_p" => p.tau_p = int()?,
            "tau_g" => p.tau_g = int()?,
            "tau_d" => p.tau_d = int()?,
            "tau_u" => p.tau_u = int()?,
            "frame_len" => p.frame_len = int()?,
            "rho_ue" => p.rho_ue = real()?,
            "rho_ap" => rho_ap = Some(real()?),
            "beta_g" => beta_g = Some(real()?),
            "snr_ap" => snr_ap = Some(real()?),
            "beta_ue" => beta_all = Some(real()?),
            "eta" => eta_all = Some(real()?),
            "f_c" => p.f_c = real()?,
            "f_s" => p.f_s = real()?,
            "c_nu" => p.c_nu = real()?,
            "ue_pilot_error" => {
                p.pilot_error = match value {
                    "none" => PilotErrorModel::None,
                    "coherent" => PilotErrorModel::Coherent,
                    _ => PilotErrorModel::Fixed(real()?),
                }
            }
            _ => {
                if let Some(rest) = key.strip_prefix("beta_ue.") {
                    let pair = parse_pair_key(rest).ok_or_else(|| err(format!("bad pair key `{key}`")))?;
                    beta_pairs.push((pair, real()?));
                } else if let Some(rest) = key.strip_prefix("eta.") {
                    let pair = parse_pair_key(rest).ok_or_else(|| err(format!("bad pair key `{key}`")))?;
                    eta_pairs.push((pair, real()?));
                } else {
                    return Err(err(format!("unknown key `{key}`")));
                }
            }
        }
    }

    let k = p.n_ues;
    p.rho_ap = rho_ap.unwrap_or(2.0 * p.rho_ue);
    p.beta_g = match (beta_g, snr_ap) {
        (Some(b), _) => b,
        (None, Some(s)) => s / p.rho_ap,
        (None, None) => db_to_linear(-15.0) / p.rho_ap,
    };
    p.beta_ue = vec![[beta_all.unwrap_or(db_to_linear(-20.0)); 2]; k];
    let eta_default = if k > 0 { 1.0 / k as f64 } else { 0.0 };
    p.eta = vec![[eta_all.unwrap_or(eta_default); 2]; k];
    for ((ki, l), v) in beta_pairs {
        let row = p
            .beta_ue
            .get_mut(ki)
            .ok_or_else(|| Error::Param(format!("beta_ue.{}.{}: UE index out of range", ki + 1, l + 1)))?;
        row[l] = v;
    }
    for ((ki, l), v) in eta_pairs {
        let row = p
            .eta
            .get_mut(ki)
            .ok_or_else(|| Error::Param(format!("eta.{}.{}: UE index out of range", ki + 1, l + 1)))?;
        row[l] = v;
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_nu_reference_values() {
        let mut p = SystemParams { c_nu: 0.0, ..SystemParams::default() };
        assert_eq!(derive_sigma_nu(&p).unwrap(), 0.0);
        p.c_nu = 5e-18;
        assert!((derive_sigma_nu(&p).unwrap() - 3.9478e-5).abs() < 1e-9);
        p.c_nu = 1.58e-17;
        assert!((derive_sigma_nu(&p).unwrap() - 1.2475e-4).abs() < 1e-8);
    }

    #[test]
    fn sigma_nu_scaling() {
        let mut p = SystemParams::default();
        let base = derive_sigma_nu(&p).unwrap();
        p.c_nu *= 3.0;
        assert!((derive_sigma_nu(&p).unwrap() / base - 3.0).abs() < 1e-12);
        p.c_nu /= 3.0;
        p.f_c *= 2.0;
        assert!((derive_sigma_nu(&p).unwrap() / base - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_nu_rejects_bad_inputs() {
        let mut p = SystemParams { f_s: 0.0, ..SystemParams::default() };
        assert!(derive_sigma_nu(&p).is_err());
        p.f_s = 1e-320;
        p.f_c = 1e200;
        assert!(derive_sigma_nu(&p).is_err());
    }

    #[test]
    fn reference_layout() {
        let l = derive_slot_layout(&SystemParams::default()).unwrap();
        assert_eq!(l.uplink(), Span::new(1, 52));
        assert_eq!((l.guard1.start, l.guard1.end()), (53, 55));
        assert_eq!((l.downlink.start, l.downlink.end()), (56, 97));
        assert_eq!((l.guard2.start, l.guard2.end()), (98, 100));
        assert_eq!((l.i1, l.i2, l.demod_pilot), (52, 97, 56));
    }

    #[test]
    fn minimal_layout() {
        let p = SystemParams {
            n_ues: 1,
            tau_c: 4,
            tau_p: 1,
            tau_u: 1,
            tau_g: 0,
            tau_d: 2,
            beta_ue: vec![[0.01; 2]],
            eta: vec![[1.0; 2]],
            ..SystemParams::default()
        };
        let l = derive_slot_layout(&p).unwrap();
        assert_eq!((l.i1, l.i2), (2, 4));
        assert!(l.guard1.iter().next().is_none());
    }

    #[test]
    fn layout_rejects_mismatch() {
        let p = SystemParams { tau_c: 101, ..SystemParams::default() };
        match derive_slot_layout(&p) {
            Err(Error::Geometry(msg)) => assert!(msg.contains("tau_c")),
            other => panic!("expected geometry error, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_gives_defaults() {
        let p = load_config("").unwrap();
        assert_eq!(p, SystemParams::default());
        assert_eq!((p.n_antennas, p.n_ues, p.tau_c), (64, 10, 100));
        assert!((p.rho_ap - 200.0).abs() < 1e-9);
        assert!((linear_to_db(p.snr_ap()) + 15.0).abs() < 1e-9);
    }

    #[test]
    fn db_suffix() {
        let p = load_config("rho_ue = 20dB\n").unwrap();
        assert!((p.rho_ue - 100.0).abs() < 1e-9);
        let p = load_config("rho_ue = 10 dB\nrho_ap = 23dB").unwrap();
        assert!((p.rho_ue - 10.0).abs() < 1e-9);
        assert!((p.rho_ap - 199.526).abs() < 1e-3);
    }

    #[test]
    fn pilot_count_must_match_ues() {
        assert!(matches!(load_config("tau_p = 7"), Err(Error::Geometry(_)) | Err(Error::Param(_))));
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        match load_config("n_ues = 10\nbogus = 3\n") {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_config("tau_c = abc"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(load_config("tau_c 100"), Err(Error::Config { .. })));
        assert!(matches!(load_config("n_ues = 10\nn_ues = 10"), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn power_constraint() {
        assert!(load_config("eta = 0.2").is_err());
        assert!(load_config("eta.1.2 = 0.5").is_err());
        assert!(load_config("eta = 0.05").is_ok());
    }

    #[test]
    fn pair_overrides_and_snr() {
        let p = load_config("beta_ue.3.2 = -10dB\nsnr_ap = -20dB\n# comment\n").unwrap();
        assert!((p.beta_ue[2][1] - 0.1).abs() < 1e-12);
        assert!((p.beta_ue[2][0] - 0.01).abs() < 1e-12);
        assert!((linear_to_db(p.snr_ap()) + 20.0).abs() < 1e-9);
    }

    #[test]
    fn pilot_error_keys() {
        assert_eq!(load_config("ue_pilot_error = none").unwrap().pilot_error, PilotErrorModel::None);
        assert_eq!(load_config("ue_pilot_error = 0.01").unwrap().pilot_error, PilotErrorModel::Fixed(0.01));
        assert!(load_config("ue_pilot_error = -1").is_err());
    }

    #[test]
    fn gamma_matches_closed_form() {
        let p = SystemParams::default();
        // rho_ue K beta = 10
        assert!((p.lmmse_scale(0, 0) - 1000f64.sqrt() * 0.01 / 11.0).abs() < 1e-12);
        assert!((p.gamma(0, 0) - 0.01 * 10.0 / 11.0).abs() < 1e-12);
    }
}
