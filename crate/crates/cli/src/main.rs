use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vesicle_core::config::{ConfigLoader, RunConfig};
use vesicle_core::integrators::{DiagnosticsRow, Scheme};
use vesicle_core::io::write_json;
use vesicle_core::runner::{execute, resume, RunManifest, MANIFEST_FILE};
use vesicle_core::scenarios::catalog;
use vesicle_core::verification::{run_suite, VerifyOptions, QUICK};

/// Phase-field vesicle simulator: Helfrich bending with area-difference
/// elasticity and penalised volume/area constraints on a periodic box.
#[derive(Parser)]
#[command(name = "vesicle", version, propagate_version = true)]
struct Cli {
    /// Worker threads for the FFTs and pointwise kernels (default: all cores).
    #[arg(long, global = true, env = "VESICLE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or configuration to steady state.
    Run(RunArgs),
    /// Print the preset catalog.
    Presets {
        /// One aligned line per preset instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Execute the verification suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Continue a run from its last checkpoint.
    Resume {
        /// Run directory written by `vesicle run`.
        dir: PathBuf,
        /// New absolute step budget.
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Named preset (see `vesicle presets`).
    #[arg(long)]
    preset: Option<String>,
    /// TOML file; its values override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (default: output.dir from the config, else runs/<preset>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cubic resolution override.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// semi_implicit, forward_euler, fully_implicit or backward_euler.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    diag_every: Option<usize>,
    /// Dotted-path override, e.g. `--set params.M1=1e4`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    force: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated criterion numbers (default: all eleven).
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u32>,
    /// Only the criteria that finish within a couple of minutes.
    #[arg(long, conflicts_with = "criteria")]
    quick: bool,
    /// Machine-readable report (JSON).
    #[arg(long, default_value = "verification_report.json")]
    report: PathBuf,
    /// Scratch directory for the determinism runs (default: a fresh temporary directory).
    #[arg(long)]
    work: Option<PathBuf>,
    /// Resolution of the relaxation runs.
    #[arg(long)]
    grid: Option<usize>,
    /// Step budget of the relaxation runs.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Time step of the relaxation runs.
    #[arg(long)]
    dt: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<vesicle_core::Error>().map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Run(args) => run(args),
        Command::Presets { table } => presets(table),
        Command::Verify(args) => verify(args),
        Command::Resume { dir, max_steps, quiet } => {
            let m = resume(&dir, max_steps, &mut progress(quiet))?;
            report_run(&dir, &m);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn progress(quiet: bool) -> impl FnMut(&DiagnosticsRow) {
    move |row| {
        if !quiet {
            let e = &row.energy;
            eprintln!(
                "step {:>8}  t={:.4e}  E={:.6e}  V={:.5}  A={:.5}  dA={:.5}  rate={:.3e}",
                row.step, row.time, e.e_m, e.v, e.a, e.d_a, row.rate
            );
        }
    }
}

fn load(args: &RunArgs) -> Result<(RunConfig, vesicle_core::config::Provenance)> {
    if args.preset.is_none() && args.config.is_none() {
        bail!("either --preset or --config is required");
    }
    let mut loader = ConfigLoader::new();
    if let Some(p) = &args.preset {
        loader = loader.preset(p);
    }
    if let Some(path) = &args.config {
        loader = loader.file(path)?;
    }
    if let Some(n) = args.grid {
        loader = loader.grid(n);
    }
    if let Some(dt) = args.dt {
        loader = loader.set_value("integrator.dt", dt.into());
    }
    if let Some(n) = args.max_steps {
        loader = loader.set_value("stopping.max_steps", (n as i64).into());
    }
    if let Some(s) = args.scheme {
        loader = loader.set_value("integrator.scheme", s.name().into());
    }
    if let Some(n) = args.snapshot_every {
        loader = loader.set_value("output.snapshot_every", (n as i64).into());
    }
    if let Some(n) = args.diag_every {
        loader = loader.set_value("output.diag_every", (n as i64).into());
    }
    for s in &args.sets {
        loader = loader.set(s)?;
    }
    Ok(loader.load()?)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let (cfg, prov) = load(&args)?;
    if args.dry_run {
        print!("{}", cfg.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.preset.as_deref().unwrap_or("run")));
    if out.join(MANIFEST_FILE).exists() && !args.force {
        bail!("{} already holds a run; pass --force to overwrite or use `vesicle resume`", out.display());
    }
    let m = execute(&cfg, &prov, &out, &mut progress(args.quiet))?;
    report_run(&out, &m);
    Ok(ExitCode::SUCCESS)
}

fn report_run(dir: &Path, m: &RunManifest) {
    let energy = m.final_energy.map_or(String::from("-"), |e| format!("{:.6e}", e.e_m));
    println!(
        "{}: {} after {} steps (t={:.4e}), E={energy}, converged={}, {:.1}s",
        dir.display(),
        serde_json::to_value(m.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        m.steps,
        m.final_time,
        m.converged,
        m.wall_clock_seconds
    );
}

fn presets(table: bool) -> Result<ExitCode> {
    let all = catalog();
    if table {
        println!(
            "{:<16} {:>4} {:>5} {:>6} {:>8} {:>8} {:>8} {:>8}  shape",
            "name", "exp", "n", "eps", "dt", "alpha", "beta", "dA0"
        );
        for p in &all {
            println!(
                "{:<16} {:>4} {:>5} {:>6} {:>8.1e} {:>8.4} {:>8.4} {:>8.4}  {}",
                p.name,
                p.experiment,
                p.domain.nx,
                p.params.epsilon,
                p.integrator.dt,
                p.params.alpha,
                p.params.beta,
                p.params.da0,
                p.expected_shape
            );
        }
    } else {
        println!("{}", serde_json::to_string_pretty(&all)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let scratch;
    let work = match &args.work {
        Some(w) => w.clone(),
        None => {
            scratch = std::env::temp_dir().join(format!("vesicle-verify-{}", std::process::id()));
            scratch.clone()
        }
    };
    let mut opts = VerifyOptions::new(&work);
    if args.quick {
        opts.criteria = QUICK.to_vec();
    } else if !args.criteria.is_empty() {
        opts.criteria = args.criteria.clone();
    }
    if let Some(n) = args.grid {
        opts.ci.grid = n;
    }
    if let Some(n) = args.max_steps {
        opts.ci.max_steps = n;
    }
    if let Some(dt) = args.dt {
        opts.ci.dt = dt;
    }
    let report = run_suite(&opts, &mut |c| println!("{}", c.line()))?;
    if args.work.is_none() {
        let _ = std::fs::remove_dir_all(&work);
    }
    write_json(&args.report, &report)?;
    println!("{} passed, {} failed; report written to {}", report.passed, report.failed, args.report.display());
    Ok(if report.failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
