//! Seeded experiments: regret against the exact optimal gain, slope fits and
//! CSV output.
//!
//! Per-seed files are named `<agent>_<envkind>_S<S>A<A>_seed<k>.csv` with
//! header `t,cum_reward,regret,epoch,gamma_opt`, one row every `stride` steps
//! from `t = 0` and a final row at `t = T`. `gamma_opt` is the optimistic gain
//! of the plan in force at `t`. Floats carry 17 significant digits.

pub mod config;
pub mod regret;
pub mod verify;

use std::cell::{Cell, RefCell};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

pub use config::{EnvSpec, EstimatorSpec, RunConfig, DEFAULT_STRIDE};
pub use regret::{compute_regret, fit_slope, RegretSeries, RegretTracker, SlopeFit};

use crate::agent::{run_with, EpochSummary};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::planner::solve_known_model;

pub const CSV_HEADER: &str = "t,cum_reward,regret,epoch,gamma_opt";
pub const AGGREGATE_HEADER: &str = "t,mean_regret,stderr_regret,mean_cum_reward,runs";
pub const EPOCH_HEADER: &str =
    "seed,epoch,start,length,gamma,delta,truth_in_set,max_flow_gap,lp_iterations";

/// Upper bound on worker threads for a sweep.
pub const THREADS_ENV: &str = "QUCRL_THREADS";

/// One logged row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedPoint {
    pub t: u64,
    pub cum_reward: f64,
    pub regret: f64,
    pub epoch: usize,
    pub gamma_opt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub points: Vec<LoggedPoint>,
    pub epochs: Vec<EpochSummary>,
}

impl SeedRun {
    pub fn final_regret(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.regret)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.points.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{},{:.16e}",
                p.t, p.cum_reward, p.regret, p.epoch, p.gamma_opt
            );
        }
        out
    }
}

/// Mean and standard error of regret across seeds at each logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub t: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub stderr_regret: Vec<f64>,
    pub mean_cum_reward: Vec<f64>,
    pub runs: usize,
}

impl Aggregate {
    pub fn from_runs(runs: &[SeedRun]) -> Self {
        let n = runs.len();
        let len = runs.first().map_or(0, |r| r.points.len());
        let mut agg = Aggregate {
            t: Vec::with_capacity(len),
            mean_regret: Vec::with_capacity(len),
            stderr_regret: Vec::with_capacity(len),
            mean_cum_reward: Vec::with_capacity(len),
            runs: n,
        };
        for i in 0..len {
            let regrets: Vec<f64> = runs.iter().map(|r| r.points[i].regret).collect();
            let (mean, se) = mean_stderr(&regrets);
            agg.t.push(runs[0].points[i].t);
            agg.mean_regret.push(mean);
            agg.stderr_regret.push(se);
            agg.mean_cum_reward
                .push(runs.iter().map(|r| r.points[i].cum_reward).sum::<f64>() / n as f64);
        }
        agg
    }

    pub fn final_mean(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_stderr(&self) -> f64 {
        self.stderr_regret.last().copied().unwrap_or(0.0)
    }

    pub fn fit(&self, lo: u64, hi: u64) -> Result<SlopeFit> {
        fit_slope(&self.t, &self.mean_regret, lo, hi)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(AGGREGATE_HEADER);
        out.push('\n');
        for i in 0..self.t.len() {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{}",
                self.t[i], self.mean_regret[i], self.stderr_regret[i], self.mean_cum_reward[i], self.runs
            );
        }
        out
    }
}

/// Sample mean and standard error (`sd / sqrt(n)`, zero for a single value).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub gamma_star: f64,
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
}

impl SweepResult {
    pub fn epochs_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(EPOCH_HEADER);
        out.push('\n');
        for run in &self.runs {
            for e in &run.epochs {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.16e},{:.16e},{},{:.16e},{}",
                    run.seed,
                    e.epoch,
                    e.start,
                    e.length,
                    e.gamma,
                    e.delta,
                    e.truth_in_set,
                    e.max_flow_gap,
                    e.lp_iterations
                );
            }
        }
        out
    }
}

/// Plays one seed and logs every `stride` steps plus the final step.
pub fn run_seed(env: &Arc<Mdp>, config: &RunConfig, gamma_star: f64, seed: u64) -> Result<SeedRun> {
    let horizon = config.horizon;
    let stride = config.stride;
    let tracker = RefCell::new(RegretTracker::new(gamma_star));
    let points = RefCell::new(Vec::with_capacity((horizon / stride + 2) as usize));
    // Optimistic gain of the plan in force for the next step.
    let gamma_opt = Cell::new(0.0f64);
    let epochs = run_with(
        env,
        config.agent_config(),
        horizon,
        seed,
        |rec| {
            let mut tr = tracker.borrow_mut();
            tr.push(rec.reward);
            let t = tr.t();
            if t % stride == 0 || t == horizon {
                points.borrow_mut().push(LoggedPoint {
                    t,
                    cum_reward: tr.cum_reward(),
                    regret: tr.regret(),
                    epoch: rec.epoch,
                    gamma_opt: gamma_opt.get(),
                });
            }
        },
        |agent, _| {
            gamma_opt.set(agent.plan().value);
            let mut pts = points.borrow_mut();
            if pts.is_empty() {
                pts.push(LoggedPoint {
                    t: 0,
                    cum_reward: 0.0,
                    regret: 0.0,
                    epoch: agent.epoch(),
                    gamma_opt: agent.plan().value,
                });
            }
        },
    )?;
    let points = points.into_inner();
    Ok(SeedRun { seed, points, epochs })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a thread count")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))
}

/// Runs every seed of `config` (in parallel) without touching the disk.
pub fn run_seeds(config: &RunConfig) -> Result<SweepResult> {
    config.validate()?;
    let env = Arc::new(config.env.build()?);
    let gamma_star = solve_known_model(&env)?.gain;
    let pool = thread_pool()?;
    let runs = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(&env, config, gamma_star, seed))
            .collect::<Result<Vec<_>>>()
    })?;
    let aggregate = Aggregate::from_runs(&runs);
    Ok(SweepResult {
        gamma_star,
        runs,
        aggregate,
    })
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub per_seed: Vec<PathBuf>,
    pub aggregate: PathBuf,
    pub epochs: PathBuf,
}

pub fn write_outputs(config: &RunConfig, result: &SweepResult, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let mut per_seed = Vec::with_capacity(result.runs.len());
    for run in &result.runs {
        let path = dir.join(config.seed_csv_name(run.seed));
        fs::write(&path, run.to_csv())?;
        per_seed.push(path);
    }
    let aggregate = dir.join(format!("{}_aggregate.csv", config.stem()));
    fs::write(&aggregate, result.aggregate.to_csv())?;
    let epochs = dir.join(format!("{}_epochs.csv", config.stem()));
    fs::write(&epochs, result.epochs_csv())?;
    Ok(OutputFiles {
        per_seed,
        aggregate,
        epochs,
    })
}

/// Runs all seeds and writes the CSVs under `config.output`.
pub fn run_sweep(config: &RunConfig) -> Result<(SweepResult, OutputFiles)> {
    let result = run_seeds(config)?;
    let files = write_outputs(config, &result, &config.output)?;
    Ok((result, files))
}

/// Reads `t` and a regret column (`regret` or `mean_regret`) from a CSV
/// written by this module.
pub fn read_regret_csv(path: &Path) -> Result<(Vec<u64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty file", path.display())))?
        .split(',')
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let t_col = col("t").ok_or_else(|| Error::Config("missing column t".into()))?;
    let r_col = col("regret")
        .or_else(|| col("mean_regret"))
        .ok_or_else(|| Error::Config("missing regret column".into()))?;
    let mut t = Vec::new();
    let mut r = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = || Error::Config(format!("{}: bad row {}", path.display(), i + 2));
        t.push(fields.get(t_col).ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?);
        r.push(fields.get(r_col).ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?);
    }
    Ok((t, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentKind;
    use crate::mdp::EnvKind;

    fn config(horizon: u64, seeds: Vec<u64>) -> RunConfig {
        RunConfig {
            env: EnvSpec {
                kind: EnvKind::Riverswim,
                num_states: 4,
                num_actions: 2,
                seed: 0,
                epsilon: 0.0,
            },
            agent: AgentKind::Quantum,
            horizon,
            estimator: EstimatorSpec::default(),
            seeds,
            output: PathBuf::from("unused"),
            stride: DEFAULT_STRIDE,
            start_state: 0,
        }
    }

    #[test]
    fn short_run_rows() {
        let res = run_seeds(&config(10, vec![0])).unwrap();
        let csv = res.runs[0].to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0.0000000000000000e0,0.0000000000000000e0,1,"));
        assert!(lines[2].starts_with("10,"));
    }

    #[test]
    fn row_count_with_stride() {
        let mut cfg = config(250, vec![3]);
        cfg.stride = 50;
        let res = run_seeds(&cfg).unwrap();
        let ts: Vec<u64> = res.runs[0].points.iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![0, 50, 100, 150, 200, 250]);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_through_reader() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(300, vec![0, 1]);
        let res = run_seeds(&cfg).unwrap();
        let files = write_outputs(&cfg, &res, dir.path()).unwrap();
        let (t, r) = read_regret_csv(&files.per_seed[1]).unwrap();
        assert_eq!(t, res.runs[1].points.iter().map(|p| p.t).collect::<Vec<_>>());
        assert_eq!(r, res.runs[1].points.iter().map(|p| p.regret).collect::<Vec<_>>());
        let (t, r) = read_regret_csv(&files.aggregate).unwrap();
        assert_eq!(t, res.aggregate.t);
        assert_eq!(r, res.aggregate.mean_regret);
    }
}
