//! `superrotor` command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or configuration
//! error, 3 numerical non-convergence.

mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use superrotor::io::{
    log_log_svg, rates_csv, state_dump, trajectory_csv, write_atomic, StateFile,
};
use superrotor::lindblad::{
    build_dissipator, centrifuge_state, extract_decay_rate, gaussian_coefficients, isotropic_state, propagate_with,
    BasisLayout, CoherentGenerator, PropagationOptions, RotorState,
};
use superrotor::params::{load_config, SystemSpec};
use superrotor::rates::{gamma_closed_form, gamma_numeric, sweep_rates, AmplitudeBackend, RateMethod, RateRow};
use superrotor::scattering::C64;
use superrotor::validation::{run_validation, ValidationOptions};
use superrotor::Error;

use manifest::RunManifest;

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;
/// Trajectory rows kept by default.
const DEFAULT_ROWS: usize = 1000;

#[derive(Parser)]
#[command(name = "superrotor", version, about = "Collisional decoherence and alignment decay of molecular superrotors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON configuration; the built-in reference system when omitted.
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Decoherence rate gamma_{j j'} for one pair of levels.
    Rates {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        j: u32,
        #[arg(long)]
        jprime: u32,
        /// closed_form or quadrature
        #[arg(long, default_value = "closed_form")]
        method: String,
        #[arg(long, default_value = "rates.csv")]
        out: PathBuf,
    },
    /// Alignment-decay rates Gamma_j for j = 2..=jmax.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        jmax: u32,
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG plot of Gamma_j against j.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, default_value = "closed_form")]
        method: String,
    },
    /// Integrate the master equation from an initial state.
    Propagate {
        #[command(flatten)]
        config: ConfigArg,
        /// builtin:two-level:J, builtin:isotropic[:JMIN:JMAX],
        /// builtin:gaussian[:CENTER:WIDTH] or a JSON state file.
        #[arg(long)]
        state: String,
        #[arg(long)]
        tfinal: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
        /// Signal columns; defaults to every j whose j-2 is in the basis.
        #[arg(long, value_delimiter = ',')]
        signal: Vec<u32>,
        /// Keep every n-th step; by default about 1000 rows are written.
        #[arg(long)]
        record_every: Option<usize>,
        /// Binary dump of the final density matrix.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
        /// Write the machine-readable report here.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_constant: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::TraceDrift { .. } | Error::HermiticityDrift(_) | Error::Fit(_) | Error::FractionalBranch(_) => {
                EXIT_NONCONVERGED
            }
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("SUPERROTOR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("SUPERROTOR_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("thread pool: {e}")))
}

fn load(config: &ConfigArg) -> Result<SystemSpec, Failure> {
    match &config.config {
        None => Ok(SystemSpec::reference()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            load_config(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn run(cmd: Command) -> Result<u8, Failure> {
    let start = Instant::now();
    match cmd {
        Command::Rates {
            config,
            j,
            jprime,
            method,
            out,
        } => {
            let spec = load(&config)?;
            let method: RateMethod = method.parse()?;
            let r = match method {
                RateMethod::ClosedForm => gamma_closed_form(j, jprime, &spec),
                RateMethod::Quadrature => gamma_numeric(j, jprime, &spec, AmplitudeBackend::Linearized)?,
            };
            let signal = (j >= 2 && jprime == j - 2).then_some(2.0 * r.gamma);
            println!("j = {j}, j' = {jprime}");
            println!("gamma = {:.12e}", r.gamma);
            if let Some(g) = signal {
                println!("Gamma_j = {g:.12e}");
            }
            println!("A = {:.12}", r.a_coefficient);
            println!("method = {}", method.tag());
            if let Some(c) = r.relative_change {
                println!("relative change under order doubling = {c:.3e}");
            }
            let row = RateRow {
                j,
                j_prime: jprime,
                gamma: r.gamma,
                gamma_signal: signal.unwrap_or(f64::NAN),
                a_coeff: r.a_coefficient,
                method,
                converged: r.converged,
            };
            write_atomic(&out, rates_csv(&[row]).as_bytes())?;
            let mut m = RunManifest::new("rates", &spec);
            m.output(&out);
            if !r.converged {
                m.flag(format!("gamma_{j}_{jprime} not converged"));
            }
            finish(m, &out, start)
        }
        Command::Sweep {
            config,
            jmax,
            out,
            plot,
            method,
        } => {
            let spec = load(&config)?;
            let method: RateMethod = method.parse()?;
            if jmax > spec.numerics.j_max {
                return Err(usage(format!(
                    "jmax = {jmax} exceeds the basis limit numerics.j_max = {}",
                    spec.numerics.j_max
                )));
            }
            if jmax < 2 {
                return Err(usage(format!("jmax = {jmax} must be at least 2")));
            }
            let table = sweep_rates(2..=jmax, &spec, method)?;
            write_atomic(&out, rates_csv(&table.rows).as_bytes())?;
            let mut m = RunManifest::new("sweep", &spec);
            m.output(&out);
            if let Some(p) = &plot {
                let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.j as f64, r.gamma_signal)).collect();
                write_atomic(p, log_log_svg(&pts, "j", "Gamma_j")?.as_bytes())?;
                m.output(p);
            }
            for r in table.rows.iter().filter(|r| !r.converged) {
                m.flag(format!("Gamma_{} not converged", r.j));
            }
            println!(
                "{} rows, peak at j = {}, monotone beyond peak: {}",
                table.rows.len(),
                table.peak_j().unwrap_or(0),
                table.monotone_beyond_max
            );
            finish(m, &out, start)
        }
        Command::Propagate {
            config,
            state,
            tfinal,
            dt,
            out,
            signal,
            record_every,
            dump,
        } => {
            let spec = load(&config)?;
            let rho0 = initial_state(&state)?;
            let layout = rho0.layout.clone();
            let signal_js: Vec<u32> = if signal.is_empty() {
                (layout.j_min.max(2)..=layout.j_max)
                    .filter(|&j| layout.contains(j - 2))
                    .collect()
            } else {
                signal
            };
            for &j in &signal_js {
                if j < 2 || !layout.contains(j) || !layout.contains(j - 2) {
                    return Err(usage(format!("signal_{j} needs j and j-2 inside {}..={}", layout.j_min, layout.j_max)));
                }
            }
            if !(dt > 0.0 && tfinal >= 0.0) {
                return Err(usage(format!("need dt > 0 and tfinal >= 0, got dt = {dt}, tfinal = {tfinal}")));
            }
            let dis = build_dissipator(&spec, &layout, AmplitudeBackend::Linearized)?;
            let h = CoherentGenerator::with_gas_shift(&spec, &layout, AmplitudeBackend::Linearized)?;
            let steps = (tfinal / dt).ceil().max(1.0) as usize;
            let opts = PropagationOptions {
                record_every: record_every.unwrap_or(steps.div_ceil(DEFAULT_ROWS)).max(1),
                tol_trace: spec.numerics.tol_trace,
                ..PropagationOptions::default()
            };
            let traj = propagate_with(&rho0, &dis, &h, tfinal, dt, &opts)?;
            write_atomic(&out, trajectory_csv(&traj, &signal_js)?.as_bytes())?;
            let mut m = RunManifest::new("propagate", &spec);
            m.output(&out);
            if let Some(p) = &dump {
                write_atomic(p, &state_dump(&traj.last().matrix))?;
                m.output(p);
            }
            if !dis.converged {
                m.flag(format!(
                    "dissipator not converged (relative change {:.2e})",
                    dis.relative_change.unwrap_or(f64::NAN)
                ));
            }
            println!(
                "{} steps of {:.4e}, D = {}, max trace drift {:.2e}, min eigenvalue {:.2e}",
                traj.steps,
                traj.dt,
                layout.dim(),
                traj.max_trace_drift,
                traj.min_eigenvalue()
            );
            let diff = (&traj.last().matrix - &rho0.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
            println!("max |rho(t_final) - rho(0)| = {diff:.3e}");
            summarize_signal(&traj.states, &signal_js, &spec);
            finish(m, &out, start)
        }
        Command::Validate {
            config,
            json,
            corrupt_constant,
        } => {
            let spec = load(&config)?;
            let report = run_validation(&spec, &ValidationOptions { corrupt_constant });
            print!("{}", report.to_text());
            if let Some(p) = &json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| usage(e.to_string()))?;
                write_atomic(p, format!("{text}\n").as_bytes())?;
                let mut m = RunManifest::new("validate", &spec);
                m.output(p);
                for c in report.failures() {
                    m.flag(format!("criterion {} failed", c.id));
                }
                m.finish(start);
                m.write(&manifest_path(p))?;
            }
            Ok(if report.passed { 0 } else { EXIT_VALIDATION })
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn finish(mut m: RunManifest, out: &Path, start: Instant) -> Result<u8, Failure> {
    m.finish(start);
    m.write(&manifest_path(out))?;
    if m.flags.is_empty() {
        Ok(0)
    } else {
        for f in &m.flags {
            eprintln!("warning: {f}");
        }
        Ok(EXIT_NONCONVERGED)
    }
}

/// Fit of the strongest signal column against the closed-form Gamma_j.
fn summarize_signal(states: &[RotorState], signal_js: &[u32], spec: &SystemSpec) {
    let initial = |j: u32| superrotor::lindblad::alignment_signal(&states[0], j).unwrap_or(0.0);
    let Some(&j) = signal_js.iter().rev().max_by(|a, b| initial(**a).total_cmp(&initial(**b))) else {
        return;
    };
    let samples: Vec<(f64, f64)> = states
        .iter()
        .filter_map(|s| superrotor::lindblad::alignment_signal(s, j).ok().map(|v| (s.time, v)))
        .collect();
    if samples.iter().all(|s| s.1 == 0.0) {
        println!("signal_{j} is identically zero");
        return;
    }
    let closed = 2.0 * gamma_closed_form(j, j - 2, spec).gamma;
    match extract_decay_rate(&samples) {
        Ok(fit) => println!(
            "fitted Gamma_{j} = {:.6e}, closed form {closed:.6e}, relative deviation {:.3e}",
            fit.rate,
            (fit.rate - closed).abs() / closed
        ),
        Err(e) => println!("signal_{j} fit unavailable: {e}"),
    }
}

fn parse_u32(s: &str, what: &str) -> Result<u32, Failure> {
    s.parse().map_err(|_| usage(format!("{what}: expected a non-negative integer, got `{s}`")))
}

fn initial_state(arg: &str) -> Result<RotorState, Failure> {
    let Some(rest) = arg.strip_prefix("builtin:") else {
        let text = std::fs::read_to_string(arg).map_err(|e| usage(format!("cannot read state file {arg}: {e}")))?;
        return Ok(StateFile::parse(&text)?.build()?);
    };
    let parts: Vec<&str> = rest.split(':').collect();
    match parts.as_slice() {
        ["two-level", j] => {
            let j = parse_u32(j, "two-level J")?;
            if j < 2 {
                return Err(usage("two-level state needs J >= 2"));
            }
            let layout = BasisLayout::new(j - 2, j)?;
            let c = C64::from(0.5f64.sqrt());
            Ok(centrifuge_state(&layout, &BTreeMap::from([(j - 2, c), (j, c)]))?)
        }
        ["isotropic"] | ["isotropic", _, _] => {
            let (lo, hi) = match parts.as_slice() {
                [_, a, b] => (parse_u32(a, "isotropic JMIN")?, parse_u32(b, "isotropic JMAX")?),
                _ => (8, 12),
            };
            let layout = BasisLayout::new(lo, hi)?;
            let n = (hi - lo + 1) as f64;
            Ok(isotropic_state(&layout, &(lo..=hi).map(|j| (j, 1.0 / n)).collect())?)
        }
        ["gaussian"] | ["gaussian", _, _] => {
            let (center, width) = match parts.as_slice() {
                [_, c, w] => (
                    parse_u32(c, "gaussian CENTER")?,
                    w.parse::<f64>().map_err(|_| usage(format!("gaussian WIDTH: expected a number, got `{w}`")))?,
                ),
                _ => (10, 2.0),
            };
            if !(width > 0.0 && width <= 50.0) {
                return Err(usage(format!("gaussian WIDTH must lie in (0, 50], got {width}")));
            }
            let reach = (3.0 * width).ceil() as u32;
            let layout = BasisLayout::new(center.saturating_sub(reach), center + reach)?;
            Ok(centrifuge_state(&layout, &gaussian_coefficients(&layout, center, width)?)?)
        }
        _ => Err(usage(format!("unknown builtin state `{arg}`"))),
    }
}
