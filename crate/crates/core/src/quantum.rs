//! Simulated quantum transition oracle.
//!
//! Every environment step yields one unmeasured sample tied to the visited
//! `(s, a)` pair. Samples are measured (consumed) exactly once, in bulk, by
//! [`qbounded_estimate`] at the end of an epoch. The estimator is not a gate
//! level simulation: it returns the true row perturbed by noise whose law
//! satisfies the published guarantee
//! `P[ ||mu_hat - mu||_inf <= sqrt(L2) ln(d / delta) / n ] >= 1 - delta`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, Mdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Uniform on `[-b, b]` per coordinate with probability `1 - delta`,
    /// uniform on `[-1, 1]` otherwise.
    #[default]
    ConformingRandom,
    /// Returns the exact mean.
    ZeroNoise,
    /// Every coordinate is off by exactly `b` with a random sign.
    AdversarialAtBound,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conforming_random" => Ok(NoiseMode::ConformingRandom),
            "zero_noise" => Ok(NoiseMode::ZeroNoise),
            "adversarial_at_bound" => Ok(NoiseMode::AdversarialAtBound),
            other => Err(Error::InvalidParams(format!("unknown noise mode {other:?}"))),
        }
    }
}

pub const DEFAULT_BUDGET_CONSTANT: f64 = 0.25;

/// Estimator settings. Logarithms are natural.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Budget constant: `n = floor(nu / (c sqrt(ln(T sqrt(S)))))`. The
    /// default 0.25 gives one experiment per sample whenever
    /// `T sqrt(S) <= e^16`.
    pub c: f64,
    /// Bound on `E||X||_2`, in `(0, 1]`.
    pub l2: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            c: DEFAULT_BUDGET_CONSTANT,
            l2: 1.0,
            noise_mode: NoiseMode::ConformingRandom,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParams(format!("c must be positive, got {}", self.c)));
        }
        if !(self.l2 > 0.0 && self.l2 <= 1.0) {
            return Err(Error::InvalidParams(format!("L2 must lie in (0, 1], got {}", self.l2)));
        }
        Ok(())
    }
}

/// Handle on the true transition row. Only this module reads through it.
#[derive(Clone)]
struct RowRef {
    env: Arc<Mdp>,
    state: usize,
    action: usize,
}

impl RowRef {
    fn mean(&self) -> &[f64] {
        self.env.transitions().row(self.state, self.action)
    }
}

/// One unmeasured superposition produced at a `(s, a)` visit.
pub struct QuantumSample {
    id: u64,
    state: usize,
    action: usize,
    step: u64,
    row: RowRef,
    consumed: bool,
}

impl QuantumSample {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn action(&self) -> usize {
        self.action
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

impl fmt::Debug for QuantumSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumSample")
            .field("id", &self.id)
            .field("state", &self.state)
            .field("action", &self.action)
            .field("step", &self.step)
            .field("consumed", &self.consumed)
            .finish_non_exhaustive()
    }
}

/// Per-pair samples collected during the current epoch.
#[derive(Debug)]
pub struct SampleBuffer {
    num_states: usize,
    num_actions: usize,
    epoch: usize,
    pairs: Vec<Vec<QuantumSample>>,
    next_id: u64,
    registered: u64,
    consumed: u64,
    discarded_unmeasured: u64,
}

impl SampleBuffer {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            epoch: 1,
            pairs: (0..num_states * num_actions).map(|_| Vec::new()).collect(),
            next_id: 0,
            registered: 0,
            consumed: 0,
            discarded_unmeasured: 0,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn len(&self, s: usize, a: usize) -> usize {
        self.pairs[s * self.num_actions + a].len()
    }

    pub fn total(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.iter().all(Vec::is_empty)
    }

    pub fn samples_mut(&mut self, s: usize, a: usize) -> &mut [QuantumSample] {
        &mut self.pairs[s * self.num_actions + a]
    }

    /// Samples ever registered.
    pub fn registered(&self) -> u64 {
        self.registered
    }

    /// Measured samples released by [`SampleBuffer::advance_epoch`].
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    /// Unmeasured samples dropped at an epoch boundary.
    pub fn discarded_unmeasured(&self) -> u64 {
        self.discarded_unmeasured
    }

    fn register(&mut self, sample: QuantumSample) {
        self.registered += 1;
        let idx = sample.state * self.num_actions + sample.action;
        self.pairs[idx].push(sample);
    }

    /// Empties the buffer and moves it to the next epoch.
    pub fn advance_epoch(&mut self) {
        for pair in &mut self.pairs {
            for sample in pair.drain(..) {
                if sample.consumed {
                    self.consumed += 1;
                } else {
                    self.discarded_unmeasured += 1;
                }
            }
        }
        self.epoch += 1;
    }
}

/// Classical observation returned alongside the registered sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStep {
    pub next_state: usize,
    pub reward: f64,
    pub sample_id: u64,
}

/// Plays `(s, a)` on the environment: draws `s'` from `P(.|s,a)`, returns the
/// known reward and registers a fresh sample in `buffer`.
pub fn oracle_step<R: Rng + ?Sized>(
    env: &Arc<Mdp>,
    s: usize,
    a: usize,
    t: u64,
    rng: &mut R,
    buffer: &mut SampleBuffer,
) -> Result<OracleStep> {
    if s >= env.num_states() || a >= env.num_actions() {
        return Err(Error::InvalidParams(format!(
            "(s={s}, a={a}) outside S={}, A={}",
            env.num_states(),
            env.num_actions()
        )));
    }
    let next_state = sample_index(env.transitions().row(s, a), rng.gen::<f64>());
    let sample_id = buffer.next_id;
    buffer.next_id += 1;
    buffer.register(QuantumSample {
        id: sample_id,
        state: s,
        action: a,
        step: t,
        row: RowRef {
            env: Arc::clone(env),
            state: s,
            action: a,
        },
        consumed: false,
    });
    Ok(OracleStep {
        next_state,
        reward: env.reward(s, a),
        sample_id,
    })
}

/// Number of estimator queries affordable from `nu` samples:
/// `min(nu, floor(nu / (c sqrt(ln(T sqrt(S))))))`.
pub fn experiment_budget(nu: u64, horizon: u64, num_states: usize, cfg: &EstimatorConfig) -> Result<u64> {
    if horizon < 2 {
        return Err(Error::InvalidHorizon(horizon));
    }
    let scale = cfg.c * (horizon as f64 * (num_states as f64).sqrt()).ln().sqrt();
    let n = (nu as f64 / scale).floor();
    Ok((n as u64).min(nu))
}

/// `sqrt(L2) ln(d / delta) / n`.
pub fn error_bound(n: u64, delta: f64, dim: usize, l2: f64) -> f64 {
    l2.sqrt() * (dim as f64 / delta).ln() / n as f64
}

/// Whether `n` falls under the estimator's zero-output threshold
/// `n <= ln(d / delta) / sqrt(L2)`.
pub fn below_threshold(n: u64, delta: f64, dim: usize, l2: f64) -> bool {
    n as f64 <= (dim as f64 / delta).ln() / l2.sqrt()
}

/// Measures every sample in `samples` and returns a mean estimate of their
/// common transition row, coordinates clipped to `[-1, 1]`.
///
/// All samples are consumed even when `n` is below the threshold and the
/// output is the zero vector.
pub fn qbounded_estimate<R: Rng + ?Sized>(
    samples: &mut [QuantumSample],
    n: u64,
    delta: f64,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParams("no samples to estimate from".into()))?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!("delta must lie in (0, 1), got {delta}")));
    }
    let key = (first.state, first.action);
    if samples.iter().any(|x| (x.state, x.action) != key) {
        return Err(Error::MixedKeys);
    }
    if let Some(x) = samples.iter().find(|x| x.consumed) {
        return Err(Error::DoubleConsumption { id: x.id });
    }
    let row = samples[0].row.clone();
    for x in samples.iter_mut() {
        x.consumed = true;
    }

    let mean = row.mean();
    let dim = mean.len();
    if below_threshold(n, delta, dim, cfg.l2) {
        return Ok(vec![0.0; dim]);
    }
    let b = error_bound(n, delta, dim, cfg.l2);
    let estimate = match cfg.noise_mode {
        NoiseMode::ZeroNoise => mean.to_vec(),
        NoiseMode::AdversarialAtBound => mean
            .iter()
            .map(|m| if rng.gen::<bool>() { m + b } else { m - b })
            .collect(),
        NoiseMode::ConformingRandom => {
            let width = if rng.gen::<f64>() < delta { 1.0 } else { b };
            mean.iter().map(|m| m + rng.gen_range(-width..=width)).collect::<Vec<_>>()
        }
    };
    Ok(estimate.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect())
}
