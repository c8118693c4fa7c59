use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use uav_wpcn_cli::{commands, output, CliError, Context, Flags, EXIT_NOT_CONVERGED};

#[derive(Parser)]
#[command(version, about = "Trajectory and transmission planning for UAV-powered sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relaxed problem: optimal hovering locations and the throughput upper bound.
    SolveRelaxed(Common),
    /// Hover-and-fly trajectory through the relaxed solution's locations.
    Plan(Common),
    /// Hover-and-fly followed by alternating trajectory/allocation refinement.
    Optimize(Common),
    /// Best single hover location.
    Baseline(Common),
    /// All methods over a range of flight periods.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated periods in seconds.
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML, or JSON with a .json extension).
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the randomized tour heuristic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Divide the period into at least this many slots.
    #[arg(long)]
    slots: Option<usize>,
    /// Relative tolerance of the dual solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Location search grid step in meters.
    #[arg(long)]
    grid: Option<f64>,
}

impl Common {
    fn context(&self) -> Result<Context, CliError> {
        let flags = Flags {
            seed: self.seed,
            slots: self.slots,
            tol: self.tol,
            grid: self.grid,
        };
        Context::load(&self.scenario, &flags)
    }
}

fn single(
    common: &Common,
    run: fn(&Context) -> Result<uav_wpcn_cli::Artifacts, CliError>,
) -> Result<bool, CliError> {
    let ctx = common.context()?;
    let start = Instant::now();
    let art = run(&ctx)?;
    let dir = output::write_artifacts(&common.out, &ctx, &art, start.elapsed())?;
    println!(
        "{}: common rate {:.6} bps/Hz{} -> {}",
        art.method.tag(),
        art.common_rate(),
        if art.converged { "" } else { " (not converged)" },
        dir.display()
    );
    Ok(art.converged)
}

fn sweep(common: &Common, periods: Option<&[f64]>) -> Result<bool, CliError> {
    let ctx = common.context()?;
    let periods = periods.map_or_else(|| ctx.sweep_periods(), <[f64]>::to_vec);
    let start = Instant::now();
    let rows = commands::run_sweep(&ctx, &periods)?;
    let dir = output::write_sweep(&common.out, &ctx, &rows, start.elapsed())?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "T [s]", "static", "hover-fly", "scp", "relaxed");
    for r in &rows {
        println!(
            "{:>8.3} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            r.period, r.static_hover, r.hover_fly, r.scp, r.relaxed
        );
    }
    println!("-> {}", Path::new(&dir).display());
    Ok(rows.iter().all(|r| r.converged))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SolveRelaxed(c) => single(c, commands::run_relaxed),
        Command::Plan(c) => single(c, commands::run_plan),
        Command::Optimize(c) => single(c, commands::run_optimize),
        Command::Baseline(c) => single(c, commands::run_baseline),
        Command::Sweep { common, periods } => sweep(common, periods.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
