//! Browser bindings: the frame plan, a tracking trace and a small SE sweep.

use wasm_bindgen::prelude::*;

use otasync::compensation::tracking_trace;
use otasync::config::derive_slot_layout;
use otasync::experiment::{run_sweep, SweepSpec};
use otasync::tracker::wrap;
use otasync::{Scheme, SystemParams};

const MAX_FRAME_LEN: usize = 20;
const MAX_RUNS: usize = 2000;
const MAX_TRACE: usize = 2000;

fn js(e: otasync::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn params(frame_len: usize, snr_ap_db: f64, c_nu: f64) -> Result<SystemParams, JsError> {
    if frame_len == 0 || frame_len > MAX_FRAME_LEN {
        return Err(JsError::new(&format!("frame length must be in 1..={MAX_FRAME_LEN}")));
    }
    let mut p = SystemParams { frame_len, c_nu, ..SystemParams::default() };
    p.set_snr_ap_db(snr_ap_db);
    p.validate().map_err(js)?;
    Ok(p)
}

/// Activity plan of one frame as CSV `n,ap1_label,ap2_label,a1,a2`.
#[wasm_bindgen]
pub fn frame_plan(frame_len: usize, ap1_only: bool) -> Result<String, JsError> {
    let p = params(frame_len, -15.0, 5e-18)?;
    let layout = derive_slot_layout(&p).map_err(js)?;
    let scheme = if ap1_only { Scheme::Ap1Only } else { Scheme::Kalman };
    Ok(scheme.plan(&p, &layout).map_err(js)?.to_csv())
}

/// Wrapped tracking errors per frame: first `n_frames` raw-measurement errors,
/// then `n_frames` Kalman errors.
#[wasm_bindgen]
pub fn tracking_errors(
    frame_len: usize,
    snr_ap_db: f64,
    c_nu: f64,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    if n_frames == 0 || n_frames > MAX_TRACE {
        return Err(JsError::new(&format!("frames must be in 1..={MAX_TRACE}")));
    }
    let p = params(frame_len, snr_ap_db, c_nu)?;
    let rows = tracking_trace(&p, Scheme::Kalman, n_frames, seed, false).map_err(js)?;
    let err = |x: f64, t: f64| wrap(x - t).unwrap_or(f64::NAN);
    let raw = rows.iter().map(|r| err(r.obs, r.true_alpha));
    let filtered = rows.iter().map(|r| err(r.alpha_hat, r.true_alpha));
    Ok(raw.chain(filtered).collect())
}

/// Average SE for frame lengths `1..=max_frame_len`, laid out as
/// `[kalman..., direct..., ap1_only...]`.
#[wasm_bindgen]
pub fn se_curve(
    max_frame_len: usize,
    snr_ap_db: f64,
    c_nu: f64,
    n_realizations: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    if n_realizations == 0 || n_realizations > MAX_RUNS {
        return Err(JsError::new(&format!("runs must be in 1..={MAX_RUNS}")));
    }
    let p = params(max_frame_len, snr_ap_db, c_nu)?;
    let spec = SweepSpec {
        f_values: (1..=max_frame_len).collect(),
        snr_ap_db: vec![snr_ap_db],
        c_nu_values: vec![c_nu],
        n_realizations,
        master_seed: seed,
        n_workers: 1,
        warmup_frames: 10,
        timing: false,
        ..SweepSpec::default()
    };
    let rows = run_sweep(&spec, &p).map_err(js)?;
    Ok(Scheme::ALL.iter().flat_map(|&s| rows.iter().filter(move |r| r.scheme == s).map(|r| r.se_mean)).collect())
}
