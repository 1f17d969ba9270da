//! Sweeps over frame length, scheme, inter-AP SNR and oscillator quality.

use std::time::Instant;

use crate::compensation::{simulate_delta, ChannelBank, SimOptions};
use crate::config::{derive_slot_layout, linear_to_db, SystemParams};
use crate::error::{Error, Result};
use crate::rate::spectral_efficiency_with_error;

pub use crate::compensation::Scheme;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub f_values: Vec<usize>,
    pub schemes: Vec<Scheme>,
    /// Inter-AP SNR values in dB; empty means the value from the system parameters.
    pub snr_ap_db: Vec<f64>,
    /// Oscillator constants; empty means the value from the system parameters.
    pub c_nu_values: Vec<f64>,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub n_workers: usize,
    pub warmup_frames: usize,
    pub noiseless_sync: bool,
    /// Record per-cell wall time; when off the column is 0 and the CSV is reproducible byte for byte.
    pub timing: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            f_values: (1..=10).collect(),
            schemes: Scheme::ALL.to_vec(),
            snr_ap_db: Vec::new(),
            c_nu_values: Vec::new(),
            n_realizations: 1000,
            master_seed: 1,
            n_workers: 0,
            warmup_frames: SimOptions::default().warmup_frames,
            noiseless_sync: false,
            timing: true,
        }
    }
}

pub const FIG_SNR_DB: [f64; 2] = [-15.0, -20.0];
pub const FIG2_C_NU: f64 = 5e-18;
pub const FIG3_C_NU: f64 = 1.58e-17;

impl SweepSpec {
    /// Frame lengths 1..=10, all schemes, both figure SNRs, `c_nu = 5e-18`.
    pub fn fig2(n_realizations: usize) -> Self {
        SweepSpec {
            snr_ap_db: FIG_SNR_DB.to_vec(),
            c_nu_values: vec![FIG2_C_NU],
            n_realizations,
            ..SweepSpec::default()
        }
    }

    /// As [`SweepSpec::fig2`] with `c_nu = 1.58e-17`.
    pub fn fig3(n_realizations: usize) -> Self {
        SweepSpec { c_nu_values: vec![FIG3_C_NU], ..SweepSpec::fig2(n_realizations) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_values.is_empty() || self.f_values.contains(&0) {
            return Err(Error::Param("f_values must be a nonempty list of positive integers".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Param("schemes must not be empty".into()));
        }
        if self.n_realizations == 0 {
            return Err(Error::Param("n_realizations must be at least 1".into()));
        }
        if self.warmup_frames == 0 {
            return Err(Error::Param("warmup_frames must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of rows [`run_sweep`] produces.
    pub fn row_count(&self) -> usize {
        let snrs = self.snr_ap_db.len().max(1);
        let per_f: usize = self.schemes.iter().map(|s| if s.uses_sync() { snrs } else { 1 }).sum();
        per_f * self.f_values.len() * self.c_nu_values.len().max(1)
    }
}

/// Parses a flat `key = value` sweep file.
///
/// Keys: `f_values` (`1..10` or a comma list), `schemes`, `snr_ap_db`, `c_nu`,
/// `n_realizations`, `seed`, `workers`, `warmup_frames`, `noiseless_sync`, `timing`.
pub fn load_sweep(text: &str) -> Result<SweepSpec> {
    let mut spec = SweepSpec::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Config { line, msg };
        let (key, value) =
            content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| err(format!("`{key}` expects {what}, got `{value}`"));
        let reals = || -> Result<Vec<f64>> {
            value.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad("a list of numbers"))).collect()
        };
        match key {
            "f_values" => spec.f_values = parse_int_list(value).ok_or_else(|| bad("`a..b` or a list of integers"))?,
            "schemes" => {
                spec.schemes = value
                    .split(',')
                    .map(|s| s.parse::<Scheme>().map_err(|e| err(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "snr_ap_db" => spec.snr_ap_db = reals()?,
            "c_nu" => spec.c_nu_values = reals()?,
            "n_realizations" => spec.n_realizations = value.parse().map_err(|_| bad("an integer"))?,
            "seed" => spec.master_seed = value.parse().map_err(|_| bad("an integer"))?,
            "workers" => spec.n_workers = value.parse().map_err(|_| bad("an integer"))?,
            "warmup_frames" => spec.warmup_frames = value.parse().map_err(|_| bad("an integer"))?,
            "noiseless_sync" => spec.noiseless_sync = value.parse().map_err(|_| bad("true or false"))?,
            "timing" => spec.timing = value.parse().map_err(|_| bad("true or false"))?,
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// `a..b` (inclusive) or `x, y, z`.
pub fn parse_int_list(value: &str) -> Option<Vec<usize>> {
    if let Some((a, b)) = value.split_once("..") {
        let a: usize = a.trim().parse().ok()?;
        let b: usize = b.trim().trim_start_matches('=').parse().ok()?;
        return (a <= b).then(|| (a..=b).collect());
    }
    value.split(',').map(|v| v.trim().parse().ok()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub frame_len: usize,
    /// NaN for `ap1_only`, which does not depend on the inter-AP SNR.
    pub snr_ap_db: f64,
    pub c_nu: f64,
    pub se_mean: f64,
    pub se_stderr: f64,
    pub n_realizations: usize,
    pub wall_time_s: f64,
}

/// Runs every `(c_nu, scheme, F, snr)` cell. All cells share the run seeds, so
/// differences between cells are not blurred by independent noise.
pub fn run_sweep(spec: &SweepSpec, params: &SystemParams) -> Result<Vec<ResultRow>> {
    run_sweep_with(spec, params, |_| {})
}

/// [`run_sweep`] with a callback after each finished row.
pub fn run_sweep_with(
    spec: &SweepSpec,
    params: &SystemParams,
    mut progress: impl FnMut(&ResultRow),
) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    params.validate()?;
    let bank = if spec.schemes.iter().any(|s| s.uses_sync()) {
        Some(ChannelBank::build(spec.master_seed, spec.n_realizations, params.n_antennas, spec.n_workers)?)
    } else {
        None
    };
    let opts = SimOptions {
        warmup_frames: spec.warmup_frames,
        noiseless_sync: spec.noiseless_sync,
        n_workers: spec.n_workers,
    };
    let c_nus = if spec.c_nu_values.is_empty() { vec![params.c_nu] } else { spec.c_nu_values.clone() };
    let snrs = if spec.snr_ap_db.is_empty() { vec![linear_to_db(params.snr_ap())] } else { spec.snr_ap_db.clone() };
    let mut rows = Vec::with_capacity(spec.row_count());
    for &c_nu in &c_nus {
        for &scheme in &spec.schemes {
            for &f in &spec.f_values {
                let cell_snrs = if scheme.uses_sync() { snrs.clone() } else { vec![f64::NAN] };
                for snr in cell_snrs {
                    let started = spec.timing.then(Instant::now);
                    let context = format!("cell scheme={scheme} F={f} snr_ap_db={snr} c_nu={c_nu:e}");
                    let wrap = |e: Error| Error::Cell { context: context.clone(), source: Box::new(e) };
                    let mut p = params.clone();
                    p.c_nu = c_nu;
                    p.frame_len = f;
                    if !snr.is_nan() {
                        p.set_snr_ap_db(snr);
                    }
                    let layout = derive_slot_layout(&p).map_err(wrap)?;
                    let plan = scheme.plan(&p, &layout).map_err(wrap)?;
                    let delta = simulate_delta(&p, scheme, spec.n_realizations, spec.master_seed, &opts, bank.as_ref())
                        .map_err(wrap)?;
                    let (se_mean, se_stderr) = spectral_efficiency_with_error(&p, &plan, &delta);
                    let row = ResultRow {
                        scheme,
                        frame_len: f,
                        snr_ap_db: snr,
                        c_nu,
                        se_mean,
                        se_stderr,
                        n_realizations: spec.n_realizations,
                        wall_time_s: started.map_or(0.0, |t| t.elapsed().as_secs_f64()),
                    };
                    progress(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 8] =
    ["scheme", "F", "snr_ap_db", "c_nu", "se_mean", "se_stderr", "n_realizations", "wall_time_s"];

/// Six significant digits, shortest form.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-4..1e7).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// CSV document with one header line and one line per row.
pub fn emit_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(|e| Error::Csv(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.frame_len.to_string(),
            format_sig6(r.snr_ap_db),
            format_sig6(r.c_nu),
            format_sig6(r.se_mean),
            format_sig6(r.se_stderr),
            r.n_realizations.to_string(),
            format_sig6(r.wall_time_s),
        ])
        .map_err(|e| Error::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let bad = |j: usize| Error::Csv(format!("row {}: bad `{}` value `{}`", i + 1, CSV_HEADER[j], field(j)));
        let real = |j: usize| field(j).parse::<f64>().map_err(|_| bad(j));
        rows.push(ResultRow {
            scheme: field(0).parse().map_err(|_| bad(0))?,
            frame_len: field(1).parse().map_err(|_| bad(1))?,
            snr_ap_db: real(2)?,
            c_nu: real(3)?,
            se_mean: real(4)?,
            se_stderr: real(5)?,
            n_realizations: field(6).parse().map_err(|_| bad(6))?,
            wall_time_s: real(7)?,
        });
    }
    Ok(rows)
}
