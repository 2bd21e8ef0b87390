//! Command-line front end.
//!
//! Exit codes are the machine contract: 0 success, 1 runtime or safety
//! failure, 2 configuration error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use iccbf::config::ScenarioConfig;
use iccbf::scenario::Scenario;
use iccbf::sim::{simulate, RunSummary, Trajectory};
use iccbf::verify::{boundary_partition, certify, GridAxis, Slice2d};

const EXIT_OK: u8 = 0;
const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Environment variable overriding the output directory (weaker than
/// --out, stronger than the config file).
const OUT_ENV: &str = "ICCBF_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "iccbf",
    about = "Input-constrained safety-critical control: synthesis, verification, simulation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run closed-loop simulations and write trajectory/event/summary files.
    Simulate(RunArgs),
    /// Check the barrier-chain certificate and write the report.
    Verify(RunArgs),
    /// Rasterize barrier levels over a 2-D state grid.
    BoundaryGrid(RunArgs),
    /// List the built-in models and their parameters.
    ListModels,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario configuration file(s); each runs in its own output
    /// directory when several are given.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Output directory (overrides config and ICCBF_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Verifier sampling seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Run scenario batches on this many threads (1 = sequential).
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate(args) => run_batch(&args, run_simulate),
        Command::Verify(args) => run_batch(&args, run_verify),
        Command::BoundaryGrid(args) => run_batch(&args, run_boundary_grid),
        Command::ListModels => {
            list_models();
            EXIT_OK
        }
    };
    ExitCode::from(code)
}

fn list_models() {
    for name in iccbf::models::MODEL_NAMES {
        let (sys, input) = iccbf::models::builtin(name).expect("built-in model");
        let params: Vec<String> =
            sys.params().iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{name}: n={} m={} input={:?} params[{}]",
            sys.state_dim(),
            sys.input_dim(),
            input.kind(),
            params.join(", ")
        );
    }
}

struct RunContext {
    config: ScenarioConfig,
    out_dir: PathBuf,
    seed: Option<u64>,
}

fn run_batch(args: &RunArgs, run: fn(&RunContext) -> anyhow::Result<u8>) -> u8 {
    // parse every config up front: any config error fails the whole batch
    let mut contexts = Vec::new();
    for path in &args.configs {
        let config = match ScenarioConfig::from_path(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                return EXIT_CONFIG;
            }
        };
        let base = args
            .out
            .clone()
            .or_else(|| std::env::var(OUT_ENV).ok().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(&config.output.dir));
        let out_dir = if args.configs.len() > 1 {
            // isolated per-run directories inside the batch output
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "run".to_string());
            base.join(stem)
        } else {
            base
        };
        contexts.push(RunContext { config, out_dir, seed: args.seed });
    }

    let worker = |ctx: &RunContext| -> u8 {
        match run(ctx) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_RUNTIME
            }
        }
    };
    if args.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.parallel)
            .build()
            .expect("thread pool");
        pool.install(|| contexts.par_iter().map(worker).max().unwrap_or(EXIT_OK))
    } else {
        contexts.iter().map(worker).max().unwrap_or(EXIT_OK)
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))
}

fn run_simulate(ctx: &RunContext) -> anyhow::Result<u8> {
    let Some(sim) = ctx.config.sim.as_ref() else {
        eprintln!("config error: simulate needs a [sim] section");
        return Ok(EXIT_CONFIG);
    };
    if ctx.config.controller.is_none() {
        eprintln!("config error: simulate needs a [controller] section");
        return Ok(EXIT_CONFIG);
    }
    let scenario = Scenario::build(ctx.config.clone())?;
    let mut controller = scenario.controller()?;
    let opts = scenario.sim_options()?;
    let traj = simulate(&scenario.chain, controller.as_mut(), &sim.x0, &opts)?;

    ensure_dir(&ctx.out_dir)?;
    write_file(&ctx.out_dir.join("trajectory.csv"), |w| traj.write_csv(w))?;
    write_file(&ctx.out_dir.join("events.csv"), |w| traj.write_events_csv(w))?;
    let summary = traj.summary();
    write_file(&ctx.out_dir.join("summary.txt"), |w| {
        write_summary(w, &summary, &traj)
    })?;

    let ok = !summary.safety_violation && !summary.qp_infeasible && !summary.failed;
    println!(
        "simulate {}: min_h = {:.6}, events = {}, {}",
        scenario.chain.system().name(),
        summary.min_h,
        traj.events.len(),
        if ok { "ok" } else { "FAILED" }
    );
    Ok(if ok { EXIT_OK } else { EXIT_RUNTIME })
}

fn write_summary<W: Write>(
    mut w: W,
    s: &RunSummary,
    traj: &Trajectory,
) -> std::io::Result<()> {
    writeln!(w, "min_h = {}", s.min_h)?;
    for (i, v) in s.min_levels.iter().enumerate() {
        writeln!(w, "min_b_{i} = {v}")?;
    }
    writeln!(w, "max_control_one_norm = {}", s.max_control_one_norm)?;
    match s.braking_onset {
        Some(t) => writeln!(w, "braking_onset = {t}")?,
        None => writeln!(w, "braking_onset = none")?,
    }
    match s.goal_time {
        Some(t) => writeln!(w, "goal_time = {t}")?,
        None => writeln!(w, "goal_time = none")?,
    }
    writeln!(w, "safety_violation = {}", s.safety_violation)?;
    writeln!(w, "qp_infeasible = {}", s.qp_infeasible)?;
    writeln!(w, "failed = {}", s.failed)?;
    writeln!(w, "samples = {}", traj.times.len())?;
    Ok(())
}

fn run_verify(ctx: &RunContext) -> anyhow::Result<u8> {
    if ctx.config.verify.is_none() {
        eprintln!("config error: verify needs a [verify] section");
        return Ok(EXIT_CONFIG);
    }
    let scenario = Scenario::build(ctx.config.clone())?;
    let domain = scenario.verify_domain()?;
    let opts = scenario.certify_options(ctx.seed)?;
    let report = certify(&scenario.chain, &domain, &opts)?;

    ensure_dir(&ctx.out_dir)?;
    write_file(&ctx.out_dir.join("certificate.txt"), |w| report.write_text(w))?;
    if ctx.config.verify.as_ref().is_some_and(|v| v.write_trace) {
        write_file(&ctx.out_dir.join("refinement_trace.csv"), |w| {
            report.write_trace_csv(w)
        })?;
    }
    println!(
        "verify {}: gamma = {:.6}, is_iccbf = {}, is_simple = {}",
        scenario.chain.system().name(),
        report.gamma,
        report.is_iccbf,
        report.is_simple
    );
    Ok(if report.is_iccbf { EXIT_OK } else { EXIT_RUNTIME })
}

fn run_boundary_grid(ctx: &RunContext) -> anyhow::Result<u8> {
    let Some(boundary) = ctx.config.boundary.as_ref() else {
        eprintln!("config error: boundary-grid needs a [boundary] section");
        return Ok(EXIT_CONFIG);
    };
    let scenario = Scenario::build(ctx.config.clone())?;
    let n = scenario.chain.system().state_dim();
    let axes = boundary.axes.unwrap_or([0, 1]);
    let base = boundary.fixed.clone().unwrap_or_else(|| vec![0.0; n]);
    let slice = Slice2d { axes: (axes[0], axes[1]), base };
    let axis = |g: &iccbf::config::GridAxisConfig| GridAxis {
        lo: g.min,
        hi: g.max,
        points: g.points,
    };
    let axis1 = axis(&boundary.grid[0]);
    let axis2 = axis(&boundary.grid[1]);

    ensure_dir(&ctx.out_dir)?;
    let mut level_values: Vec<Vec<f64>> = Vec::new();
    for level in 0..=scenario.chain.levels() {
        let grid = boundary_partition(&scenario.chain, level, axis1, axis2, Some(&slice))?;
        write_file(&ctx.out_dir.join(format!("level_{level}.csv")), |w| {
            grid.write_csv(w)
        })?;
        level_values.push(grid.values.clone());
    }

    // combined C* grid: cellwise conjunction of the level grids
    write_file(&ctx.out_dir.join("c_star.csv"), |w| {
        writeln!(w, "x_1,x_2,in_c_star")?;
        for i in 0..axis1.points {
            for j in 0..axis2.points {
                let idx = i * axis2.points + j;
                let inside = level_values.iter().all(|vals| vals[idx] >= 0.0);
                writeln!(w, "{},{},{}", axis1.value(i), axis2.value(j), inside)?;
            }
        }
        Ok(())
    })?;
    println!(
        "boundary-grid {}: {} levels on {}x{} nodes",
        scenario.chain.system().name(),
        scenario.chain.levels() + 1,
        axis1.points,
        axis2.points
    );
    Ok(EXIT_OK)
}

fn write_file<F>(path: &Path, write: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}
