//! Command-line front end. `main` in the binary only forwards to [`main_with_args`].

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::diagnostics::{
    check_energy_equality, check_mass_exchange, fit_decay, fit_two_term, record, write_csv, DiagRecord,
};
use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;
use crate::io::config::RunConfig;
use crate::io::init::{generate_initial, smallness};
use crate::lagrangian::{positivity_criteria, ParticleSet};
use crate::model::{Params, State};
use crate::spectral::Grid;
use crate::timestepper::{run, SCHEME_ID};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_CHECK_FAILED: i32 = 5;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "PITAEVSKII_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pitaevskii", version, about = "Superfluid two-fluid solver and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a default configuration file.
    Init {
        #[arg(default_value = "pitaevskii.toml")]
        path: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Run a configuration: diagnostics CSV, final checkpoint, particle report.
    Run { config: PathBuf },
    /// Continue from a checkpoint to the configured end time.
    Resume {
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Override the configured end time.
        #[arg(long)]
        t_end: Option<f64>,
        /// Accept a checkpoint whose grid, parameters or scheme differ from the config.
        #[arg(long)]
        force: bool,
    },
    /// Recompute diagnostics and decay fits from stored checkpoints.
    Diagnose {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the self-check suite; exits 5 if any check fails.
    Verify,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        return EXIT_NUMERICAL;
    }
    match e.root() {
        Error::Config(_) | Error::InvalidParams(_) | Error::UnsupportedGrid(_) => EXIT_CONFIG,
        _ => EXIT_IO,
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV}={raw:?} is not a positive integer"))?;
    // A pool may already exist when called twice in one process (tests); keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    let result = match cli.command {
        Command::Init { path, force } => cmd_init(&path, force),
        Command::Run { config } => cmd_run(&config),
        Command::Resume {
            checkpoint,
            config,
            t_end,
            force,
        } => cmd_resume(&checkpoint, &config, t_end, force),
        Command::Diagnose { checkpoints, output } => cmd_diagnose(&checkpoints, output.as_deref()),
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_init(path: &Path, force: bool) -> Result<i32> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} exists (use --force to overwrite)",
            path.display()
        )));
    }
    write_atomic(path, RunConfig::default().to_toml_string().as_bytes())?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes(records: &[DiagRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory");
    buf
}

/// Fill energy residuals where the sampling allows it; otherwise leave them unset.
fn attach_residuals(records: &mut [DiagRecord], params: &Params) {
    if records.len() >= 2 {
        if let Err(e) = check_energy_equality(records, params) {
            eprintln!("note: energy residual not computed ({e})");
        }
    }
}

fn cmd_run(config: &Path) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let grid = Grid::new(cfg.grid.dim, cfg.grid.n)?;
    let init = generate_initial(&cfg.initial, &grid, &cfg.params)?;
    execute(&cfg, init.state, init.smallness, cfg.integrator.t_end)
}

fn cmd_resume(checkpoint: &Path, config: &Path, t_end: Option<f64>, force: bool) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let c = Checkpoint::load(checkpoint)?;
    c.check_compatible(cfg.grid.dim, cfg.grid.n, &cfg.params, force, checkpoint)?;
    let mut cfg = cfg;
    if force {
        cfg.params = c.header.params;
    }
    let state = c.to_state()?;
    let t_end = t_end.unwrap_or(cfg.integrator.t_end);
    if !(t_end >= state.t) {
        return Err(Error::Config(format!(
            "end time {t_end} precedes the checkpoint time {}",
            state.t
        )));
    }
    let small = smallness(&state, &cfg.params)?;
    execute(&cfg, state, small, t_end)
}

/// Integrate, recording diagnostics and particles; outputs are written even when the
/// solve stops early.
fn execute(cfg: &RunConfig, initial: State, small: f64, t_end: f64) -> Result<i32> {
    let params = cfg.params;
    let icfg = cfg.integrator_config();
    let g = initial.grid();
    println!("pitaevskii {} / scheme {SCHEME_ID}", env!("CARGO_PKG_VERSION"));
    println!("grid {}^{}, dt {}, t = {} -> {t_end}", g.n(), g.dim(), icfg.dt, initial.t);
    println!(
        "params lambda={} mu={} nu={} alpha={} p={} m_i={} M_i={} m_f={}",
        params.lambda, params.mu, params.nu, params.alpha, params.p, params.m_i, params.big_m_i, params.m_f
    );
    println!("initial data: seed {}, smallness functional {small:.6e}", cfg.initial.seed);

    let out = &cfg.output;
    std::fs::create_dir_all(&out.directory)?;
    let stride = cfg.output_stride();
    let pstride = out.particle_stride;
    let mut particles = match out.particles {
        Some(_) => Some(ParticleSet::seeded(&initial, out.particle_lattice)?),
        None => None,
    };
    let mut records = Vec::new();
    let mut step = 0usize;
    let mut last = initial.clone();
    let outcome = run(&initial, &params, &icfg, t_end, 1, |s| {
        let done = s.t >= t_end;
        if step % stride == 0 || done {
            records.push(record(s, &params)?);
        }
        if let Some(p) = particles.as_mut() {
            if step % pstride == 0 || done {
                p.observe(s, &params, icfg.eval_options())?;
            }
        }
        step += 1;
        last = s.clone();
        Ok(())
    });

    attach_residuals(&mut records, &params);
    let csv_path = out.resolve(&out.diagnostics);
    write_atomic(&csv_path, &csv_bytes(&records))?;
    println!("diagnostics: {} records -> {}", records.len(), csv_path.display());
    let ckpt_path = out.resolve(&out.checkpoint);
    Checkpoint::from_state(&last, &params, cfg.initial.seed).save(&ckpt_path)?;
    println!("checkpoint at t = {} -> {}", last.t, ckpt_path.display());

    if let (Some(p), Some(rel)) = (particles.as_ref(), out.particles.as_ref()) {
        let path = out.resolve(rel);
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &last)?;
        write_atomic(&path, &buf)?;
        let r = positivity_criteria(p, &params, 1e-8);
        println!(
            "positivity: criterion {:.3e} vs m_i - m_f = {:.3e}; worst particle {:.3e}; observed drop {:.3e}; min rho {:.6} (m_f = {})",
            r.global_criterion, r.margin, r.per_particle_worst, r.observed_drop, r.min_rho, r.m_f
        );
        if r.outside_theorem_regime {
            println!("positivity: criterion not met; run is outside the small-data regime");
        }
        if r.implication_violated || !r.ordering_ok {
            eprintln!("error: positivity chain inconsistent: {r:?}");
            return Ok(EXIT_CHECK_FAILED);
        }
    }
    let m = check_mass_exchange(&records, 1e-9);
    println!(
        "mass: relative drift {:.3e}, superfluid/normal exchange monotone: {}",
        m.total_drift, m.monotonicity_ok
    );
    outcome?;
    Ok(EXIT_OK)
}

fn cmd_diagnose(paths: &[PathBuf], output: Option<&Path>) -> Result<i32> {
    let mut loaded = Vec::with_capacity(paths.len());
    for p in paths {
        let c = Checkpoint::load(p)?;
        let params = c.header.params;
        loaded.push((c.to_state()?, params));
    }
    loaded.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    let params = loaded[0].1;
    if loaded.iter().any(|(_, p)| *p != params) {
        return Err(Error::Config("checkpoints carry different parameters".into()));
    }
    let mut records = loaded
        .iter()
        .map(|(s, p)| record(s, p))
        .collect::<Result<Vec<_>>>()?;
    attach_residuals(&mut records, &params);
    match output {
        Some(path) => write_atomic(path, &csv_bytes(&records))?,
        None => std::io::stdout().write_all(&csv_bytes(&records))?,
    }
    if records.len() >= 2 {
        let s0 = records[0].s;
        let t0 = records[0].t;
        let s_series: Vec<(f64, f64)> = records.iter().map(|r| (r.t - t0, r.s)).collect();
        match fit_decay(&s_series, s0.powf(0.5 * params.p), 2.0 / params.p) {
            Ok(f) => eprintln!(
                "superfluid mass: C = {:.4e} (log-mean {:.4e}), exponent fitted {:.3} vs {:.3}, hold-out violation {:.3}",
                f.fitted_constant, f.lsq_constant, f.fitted_exponent, f.target_exponent, f.holdout_violation
            ),
            Err(e) => eprintln!("superfluid mass: no fit ({e})"),
        }
        let z_series: Vec<(f64, f64)> = records.iter().map(|r| (r.t - t0, r.z)).collect();
        match fit_two_term(&z_series, records[0].z, s0, params.p) {
            Ok(f) => eprintln!(
                "Z envelope: C = {:.4e}, hold-out violation {:.3}",
                f.constant, f.holdout_violation
            ),
            Err(e) => eprintln!("Z envelope: no fit ({e})"),
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify() -> Result<i32> {
    let results = verify::run_suite();
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}
