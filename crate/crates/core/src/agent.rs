//! Epoch-based optimistic controller.
//!
//! Both agents share one loop: play the epoch policy, count visits, end the
//! epoch when some pair's in-epoch count reaches `max(1, N)`, then refresh
//! the transition estimate and re-solve the optimistic LP. They differ only in
//! the estimate (quantum mean estimation versus empirical frequencies) and in
//! the confidence radius.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::model::{
    classical_empirical_update, confidence_radius, RADIUS_CAP, end_of_epoch_quantum_update, PairUpdate,
    TransitionEstimate, VisitCounters,
};
use crate::planner::{l1_nearest_simplex, solve_optimistic, PlanResult};
use crate::quantum::{oracle_step, EstimatorConfig, SampleBuffer};

pub use crate::model::AgentKind;

/// Largest confidence level handed to the estimator.
pub const MAX_DELTA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Horizon `T`, used by the experiment budget.
    pub horizon: u64,
    pub estimator: EstimatorConfig,
    pub skip_vacuous_updates: bool,
    pub start_state: usize,
}

impl AgentConfig {
    pub fn new(kind: AgentKind, horizon: u64) -> Self {
        Self {
            kind,
            horizon,
            estimator: EstimatorConfig::default(),
            skip_vacuous_updates: true,
            start_state: 0,
        }
    }
}

/// Epoch-doubling trigger: `nu == max(1, N)`.
pub fn epoch_trigger(in_epoch: u64, prior: u64) -> bool {
    in_epoch == prior.max(1)
}

/// `1 / (S^2 A t_e^7)`, capped at [`MAX_DELTA`].
pub fn epoch_delta(num_states: usize, num_actions: usize, epoch_len: u64) -> f64 {
    let s = num_states as f64;
    let raw = 1.0 / (s * s * num_actions as f64 * (epoch_len.max(1) as f64).powi(7));
    raw.min(MAX_DELTA)
}

/// One environment interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: u64,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub epoch: usize,
}

/// Per-epoch bookkeeping exposed to the harness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSummary {
    pub epoch: usize,
    /// First step played in the epoch.
    pub start: u64,
    pub length: u64,
    /// Optimistic gain of the epoch plan.
    pub gamma: f64,
    /// Confidence level in force when the plan was made.
    pub delta: f64,
    /// The true model lay inside the planning confidence set.
    pub truth_in_set: bool,
    /// Largest `|inflow - outflow|` of the epoch LP.
    pub max_flow_gap: f64,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub record: StepRecord,
    pub triggered: bool,
}

/// Full controller state.
#[derive(Debug)]
pub struct EpochState {
    config: AgentConfig,
    num_states: usize,
    num_actions: usize,
    rewards: Vec<f64>,
    epoch: usize,
    epoch_steps: u64,
    epoch_start: u64,
    delta: f64,
    t: u64,
    state: usize,
    counters: VisitCounters,
    estimate: TransitionEstimate,
    radii: Vec<f64>,
    plan: PlanResult,
    buffer: SampleBuffer,
}

impl EpochState {
    /// Plans once with the zero estimate and capped radii. Only the sizes and
    /// the (known) rewards of `env` are read.
    pub fn new(env: &Mdp, config: AgentConfig) -> Result<Self> {
        config.estimator.validate()?;
        let (ns, na) = (env.num_states(), env.num_actions());
        if config.start_state >= ns {
            return Err(Error::InvalidParams(format!(
                "start state {} outside S={ns}",
                config.start_state
            )));
        }
        let estimate = TransitionEstimate::zeros(ns, na);
        let counters = VisitCounters::new(ns, na);
        let radii = radii_for(&config, &counters, &estimate, 1, 0.0);
        let plan = solve_optimistic(env.rewards(), estimate.p_hat(), &radii)?;
        Ok(Self {
            config,
            num_states: ns,
            num_actions: na,
            rewards: env.rewards().to_vec(),
            epoch: 1,
            epoch_steps: 0,
            epoch_start: 1,
            delta: 0.0,
            t: 0,
            state: config.start_state,
            counters,
            estimate,
            radii,
            plan,
            buffer: SampleBuffer::new(ns, na),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Steps played in the current epoch, `t_e`.
    pub fn epoch_steps(&self) -> u64 {
        self.epoch_steps
    }

    pub fn epoch_start(&self) -> u64 {
        self.epoch_start
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Steps played so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn current_state(&self) -> usize {
        self.state
    }

    pub fn counters(&self) -> &VisitCounters {
        &self.counters
    }

    pub fn estimate(&self) -> &TransitionEstimate {
        &self.estimate
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn plan(&self) -> &PlanResult {
        &self.plan
    }

    pub fn buffer(&self) -> &SampleBuffer {
        &self.buffer
    }

    /// Whether `truth` lies in the current confidence set.
    pub fn confidence_set_contains(&self, truth: &Mdp) -> bool {
        let (ns, na) = (self.num_states, self.num_actions);
        (0..ns * na).all(|p| {
            let (s, a) = (p / na, p % na);
            let dist: f64 = truth
                .transitions()
                .row(s, a)
                .iter()
                .zip(self.estimate.row(s, a))
                .map(|(x, y)| (x - y).abs())
                .sum();
            dist <= self.radii[p]
        })
    }

    /// Plays one step of the epoch policy and reports whether the doubling
    /// trigger fired. The caller ends the epoch.
    pub fn step<R: Rng + ?Sized>(&mut self, env: &Arc<Mdp>, rng: &mut R) -> Result<StepOutcome> {
        let s = self.state;
        let a = self.plan.policy.sample_with(s, rng.gen::<f64>());
        self.t += 1;
        let obs = oracle_step(env, s, a, self.t, rng, &mut self.buffer)?;
        self.counters.record_visit(s, a, obs.next_state);
        self.epoch_steps += 1;
        self.state = obs.next_state;
        let record = StepRecord {
            t: self.t,
            state: s,
            action: a,
            reward: obs.reward,
            next_state: obs.next_state,
            epoch: self.epoch,
        };
        let triggered = epoch_trigger(self.counters.in_epoch(s, a), self.counters.prior(s, a));
        Ok(StepOutcome { record, triggered })
    }

    /// Closes the current epoch: new confidence level from the finished
    /// epoch's length, estimate refresh (consuming the sample buffer), count
    /// roll-over, radii at the current global step, and a fresh plan.
    pub fn end_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<PairUpdate>> {
        let delta = epoch_delta(self.num_states, self.num_actions, self.epoch_steps);
        let updates = match self.config.kind {
            AgentKind::Quantum => end_of_epoch_quantum_update(
                &mut self.estimate,
                &self.counters,
                &mut self.buffer,
                self.epoch,
                self.config.horizon.max(2),
                delta,
                &self.config.estimator,
                self.config.skip_vacuous_updates,
                rng,
            )?,
            AgentKind::Classical => Vec::new(),
        };
        self.counters.roll_epoch();
        self.buffer.advance_epoch();
        if self.config.kind == AgentKind::Classical {
            classical_empirical_update(&mut self.estimate, &self.counters);
        }
        self.epoch += 1;
        self.delta = delta;
        self.epoch_steps = 0;
        self.epoch_start = self.t + 1;
        self.radii = radii_for(&self.config, &self.counters, &self.estimate, self.t, delta);
        self.plan = solve_optimistic(&self.rewards, self.estimate.p_hat(), &self.radii)?;
        Ok(updates)
    }
}

/// Confidence radii around rows that may lie off the simplex. A capped radius
/// becomes `2 + d`, where `d` is the row's L1 distance to the simplex, so the
/// ball still covers every distribution; any other radius is raised to at
/// least `d` so the ball contains one.
fn radii_for(
    config: &AgentConfig,
    counters: &VisitCounters,
    estimate: &TransitionEstimate,
    t: u64,
    delta: f64,
) -> Vec<f64> {
    let (ns, na) = (counters.num_states(), counters.num_actions());
    (0..ns * na)
        .map(|p| {
            let (s, a) = (p / na, p % na);
            let r = confidence_radius(config.kind, ns, na, t, counters.prior(s, a), delta);
            let d = simplex_distance(estimate.row(s, a));
            if r >= RADIUS_CAP {
                RADIUS_CAP + d
            } else {
                r.max(d * (1.0 + 1e-9) + 1e-12)
            }
        })
        .collect()
}

/// L1 distance from `row` to the probability simplex.
pub fn simplex_distance(row: &[f64]) -> f64 {
    let near = l1_nearest_simplex(row);
    row.iter().zip(&near).map(|(x, y)| (x - y).abs()).sum()
}

/// Result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

/// Runs `horizon` steps and streams every record to `on_step`. Returns the
/// epoch summaries; `on_epoch` sees the controller right after each re-plan
/// (and once after the initial plan).
pub fn run_with<F, G>(
    env: &Arc<Mdp>,
    config: AgentConfig,
    horizon: u64,
    seed: u64,
    mut on_step: F,
    mut on_epoch: G,
) -> Result<Vec<EpochSummary>>
where
    F: FnMut(&StepRecord),
    G: FnMut(&EpochState, &[PairUpdate]),
{
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = EpochState::new(env, config)?;
    on_epoch(&agent, &[]);
    let mut epochs = Vec::new();
    let mut open = open_summary(&agent, env);
    for _ in 0..horizon {
        let outcome = agent.step(env, &mut rng)?;
        on_step(&outcome.record);
        if outcome.triggered {
            open.length = agent.epoch_steps();
            epochs.push(open);
            let updates = agent.end_epoch(&mut rng)?;
            on_epoch(&agent, &updates);
            open = open_summary(&agent, env);
        }
    }
    if agent.epoch_steps() > 0 {
        open.length = agent.epoch_steps();
        epochs.push(open);
    }
    Ok(epochs)
}

fn open_summary(agent: &EpochState, env: &Mdp) -> EpochSummary {
    EpochSummary {
        epoch: agent.epoch(),
        start: agent.epoch_start(),
        length: 0,
        gamma: agent.plan().value,
        delta: agent.delta(),
        truth_in_set: agent.confidence_set_contains(env),
        max_flow_gap: agent.plan().flow_gap.iter().fold(0.0, |m, g| m.max(g.abs())),
        lp_iterations: agent.plan().lp_iterations,
    }
}

/// Runs `horizon` steps and keeps every record.
pub fn run(env: &Arc<Mdp>, config: AgentConfig, horizon: u64, seed: u64) -> Result<RunOutput> {
    let mut records = Vec::with_capacity(horizon as usize);
    let epochs = run_with(env, config, horizon, seed, |r| records.push(*r), |_, _| {})?;
    Ok(RunOutput { records, epochs })
}
