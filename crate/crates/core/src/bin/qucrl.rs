use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qucrl::agent::AgentKind;
use qucrl::harness::verify::verify_suite;
use qucrl::harness::{fit_slope, read_regret_csv, run_seeds, write_outputs, RunConfig};
use qucrl::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "qucrl", version, about = "Optimistic average-reward RL with a simulated quantum oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    agent: Option<AgentKind>,
    /// Output directory; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Play one seed and write its CSV.
    Run(RunArgs),
    /// Play every seed and write per-seed, aggregate and epoch CSVs.
    Sweep(RunArgs),
    /// Randomised checks of the gain-gap identity and the Bellman-error and
    /// bias-span bounds.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Log-log regret slope of an existing CSV.
    Slope {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        lo: u64,
        #[arg(long)]
        hi: u64,
    },
}

fn load(args: &RunArgs, single: bool) -> qucrl::Result<RunConfig> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    } else if single {
        cfg.seeds.truncate(1);
    }
    if let Some(agent) = args.agent {
        cfg.agent = agent;
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> qucrl::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args, true)?;
            let res = run_seeds(&cfg)?;
            let files = write_outputs(&cfg, &res, &cfg.output)?;
            let run = &res.runs[0];
            println!(
                "seed {}: T={} epochs={} regret={:.6} gamma*={:.6}",
                run.seed,
                cfg.horizon,
                run.epochs.len(),
                run.final_regret(),
                res.gamma_star
            );
            println!("wrote {}", files.per_seed[0].display());
        }
        Command::Sweep(args) => {
            let cfg = load(&args, false)?;
            let res = run_seeds(&cfg)?;
            let files = write_outputs(&cfg, &res, &cfg.output)?;
            for run in &res.runs {
                println!(
                    "seed {}: epochs={} regret={:.6}",
                    run.seed,
                    run.epochs.len(),
                    run.final_regret()
                );
            }
            println!(
                "aggregate regret at T={}: {:.6} +- {:.6} (gamma*={:.6})",
                cfg.horizon,
                res.aggregate.final_mean(),
                res.aggregate.final_stderr(),
                res.gamma_star
            );
            println!("wrote {}", files.aggregate.display());
        }
        Command::Verify { seed, trials } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = verify_suite(&mut rng, trials)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passes(1e-8, 1e-12, 1e-9) {
                return Err(Error::NumericalFailure("property check failed".into()));
            }
        }
        Command::Slope { csv, lo, hi } => {
            let (t, r) = read_regret_csv(&csv)?;
            let fit = fit_slope(&t, &r, lo, hi)?;
            println!(
                "slope={:.6} intercept={:.6} r2={:.6} points={}",
                fit.slope, fit.intercept, fit.r2, fit.points
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_RUNTIME),
            }
        }
    }
}
