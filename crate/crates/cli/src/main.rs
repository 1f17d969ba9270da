use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use otasync::compensation::{simulate_delta, tracking_trace, SimOptions};
use otasync::config::{derive_slot_layout, load_config};
use otasync::experiment::{emit_csv, load_sweep, run_sweep_with, SweepSpec};
use otasync::rate::{rate_table_csv, RateInputs};
use otasync::tracker::trace_csv;
use otasync::{Scheme, SystemParams};

/// Sweep the average per-UE downlink SE of two phase-synchronized APs over the frame length.
#[derive(Debug, Parser)]
#[command(name = "otasync", version)]
struct Cli {
    /// System parameter file (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep definition file (`key = value` lines)
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Output CSV path; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated schemes: kalman, direct, ap1_only
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
    /// Preset: frame lengths 1..10, SNR_AP -15/-20 dB, c_nu = 5e-18
    #[arg(long, conflicts_with_all = ["fig3", "sweep"])]
    fig2: bool,
    /// Preset: as --fig2 with c_nu = 1.58e-17
    #[arg(long, conflicts_with = "sweep")]
    fig3: bool,
    /// Monte Carlo runs per cell
    #[arg(long)]
    realizations: Option<usize>,
    /// Write the per-sample activity plan of one frame
    #[arg(long, value_name = "PATH")]
    dump_plan: Option<PathBuf>,
    /// Write a per-frame tracker trace (first scheme, 200 frames)
    #[arg(long, value_name = "PATH")]
    dump_trace: Option<PathBuf>,
    /// Write the Monte Carlo means of the residual phase factor
    #[arg(long, value_name = "PATH")]
    dump_delta: Option<PathBuf>,
    /// Write the per-position rate table
    #[arg(long, value_name = "PATH")]
    dump_rates: Option<PathBuf>,
    /// Write 0 in the wall_time_s column so repeated runs produce identical files
    #[arg(long)]
    no_timing: bool,
    /// No progress lines on standard error
    #[arg(long, short)]
    quiet: bool,
}

const TRACE_FRAMES: usize = 200;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<otasync::Error> for Failure {
    fn from(e: otasync::Error) -> Self {
        match e {
            otasync::Error::Io(_) | otasync::Error::NoConvergence { .. } | otasync::Error::Cell { .. } => {
                Failure::Runtime(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let params = match &cli.config {
        Some(p) => load_config(&read(p)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => SystemParams::default(),
    };
    let mut spec = if cli.fig2 {
        SweepSpec::fig2(SweepSpec::default().n_realizations)
    } else if cli.fig3 {
        SweepSpec::fig3(SweepSpec::default().n_realizations)
    } else if let Some(p) = &cli.sweep {
        load_sweep(&read(p)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
    } else {
        SweepSpec::default()
    };
    if let Some(s) = cli.seed {
        spec.master_seed = s;
    }
    if let Some(w) = cli.workers {
        spec.n_workers = w;
    }
    if let Some(n) = cli.realizations {
        spec.n_realizations = n;
    }
    if let Some(s) = &cli.scheme {
        spec.schemes = s.clone();
    }
    if cli.no_timing {
        spec.timing = false;
    }
    spec.validate()?;

    let dumps_only =
        (cli.dump_plan.is_some() || cli.dump_trace.is_some() || cli.dump_delta.is_some() || cli.dump_rates.is_some())
            && !(cli.fig2 || cli.fig3 || cli.sweep.is_some());
    write_dumps(cli, &params, &spec)?;
    if dumps_only {
        return Ok(());
    }

    let quiet = cli.quiet;
    let rows = run_sweep_with(&spec, &params, |r| {
        if !quiet {
            eprintln!(
                "{:>8} F={:<2} snr={:>5} c_nu={:.3e}  SE={:.4} +- {:.4}  ({:.1}s)",
                r.scheme.name(),
                r.frame_len,
                r.snr_ap_db,
                r.c_nu,
                r.se_mean,
                r.se_stderr,
                r.wall_time_s
            );
        }
    })?;
    let csv = emit_csv(&rows)?;
    match &cli.out {
        Some(p) => write(p, &csv),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Failure::Runtime(format!("cannot write results: {e}"))),
    }
}

fn write_dumps(cli: &Cli, params: &SystemParams, spec: &SweepSpec) -> Result<(), Failure> {
    let scheme = spec.schemes[0];
    let layout = derive_slot_layout(params)?;
    let plan = scheme.plan(params, &layout)?;
    if let Some(p) = &cli.dump_plan {
        write(p, &plan.to_csv())?;
    }
    if let Some(p) = &cli.dump_trace {
        let tracked = if scheme.uses_sync() { scheme } else { Scheme::Kalman };
        let rows = tracking_trace(params, tracked, TRACE_FRAMES, spec.master_seed, spec.noiseless_sync)?;
        write(p, &trace_csv(&rows))?;
    }
    if cli.dump_delta.is_some() || cli.dump_rates.is_some() {
        let opts = SimOptions {
            warmup_frames: spec.warmup_frames,
            noiseless_sync: spec.noiseless_sync,
            n_workers: spec.n_workers,
        };
        let delta = simulate_delta(params, scheme, spec.n_realizations, spec.master_seed, &opts, None)?;
        if let Some(p) = &cli.dump_delta {
            write(p, &delta.to_csv())?;
        }
        if let Some(p) = &cli.dump_rates {
            write(p, &rate_table_csv(&RateInputs { params, plan: &plan, delta: &delta }))?;
        }
    }
    Ok(())
}
