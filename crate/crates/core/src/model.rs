//! Visit counting, running transition estimates and confidence radii.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TransitionTensor;
use crate::quantum::{below_threshold, experiment_budget, qbounded_estimate, EstimatorConfig, SampleBuffer};

/// L1 diameter of the probability simplex; no row radius exceeds it.
pub const RADIUS_CAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Quantum,
    Classical,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Quantum => "quantum",
            AgentKind::Classical => "classical",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(AgentKind::Quantum),
            "classical" => Ok(AgentKind::Classical),
            other => Err(Error::InvalidParams(format!("unknown agent kind {other:?}"))),
        }
    }
}

/// In-epoch counts `nu`, pre-epoch counts `N` and cumulative next-state
/// counts `mu`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitCounters {
    num_states: usize,
    num_actions: usize,
    in_epoch: Vec<u64>,
    prior: Vec<u64>,
    next_state: Vec<u64>,
}

impl VisitCounters {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let pairs = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            in_epoch: vec![0; pairs],
            prior: vec![0; pairs],
            next_state: vec![0; pairs * num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn record_visit(&mut self, s: usize, a: usize, next: usize) {
        let pair = s * self.num_actions + a;
        self.in_epoch[pair] += 1;
        self.next_state[pair * self.num_states + next] += 1;
    }

    /// `nu_e(s, a)`.
    pub fn in_epoch(&self, s: usize, a: usize) -> u64 {
        self.in_epoch[s * self.num_actions + a]
    }

    /// `N_e(s, a)`.
    pub fn prior(&self, s: usize, a: usize) -> u64 {
        self.prior[s * self.num_actions + a]
    }

    /// `mu(s, a, s')`.
    pub fn next_state(&self, s: usize, a: usize, next: usize) -> u64 {
        self.next_state[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn total_in_epoch(&self) -> u64 {
        self.in_epoch.iter().sum()
    }

    /// `sum (N + nu)` over all pairs.
    pub fn total(&self) -> u64 {
        self.in_epoch.iter().sum::<u64>() + self.prior.iter().sum::<u64>()
    }

    /// `N <- N + nu`, `nu <- 0`.
    pub fn roll_epoch(&mut self) {
        for (n, nu) in self.prior.iter_mut().zip(self.in_epoch.iter_mut()) {
            *n += *nu;
            *nu = 0;
        }
    }
}

/// Running transition estimate `P_hat` and the most recent per-epoch
/// quantum estimates `P_tilde`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    p_hat: TransitionTensor,
    last_tilde: Vec<Option<Vec<f64>>>,
    last_update_epoch: Vec<Option<usize>>,
}

impl TransitionEstimate {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            p_hat: TransitionTensor::zeros(num_states, num_actions),
            last_tilde: vec![None; num_states * num_actions],
            last_update_epoch: vec![None; num_states * num_actions],
        }
    }

    pub fn p_hat(&self) -> &TransitionTensor {
        &self.p_hat
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        self.p_hat.row(s, a)
    }

    pub fn last_tilde(&self, s: usize, a: usize) -> Option<&[f64]> {
        self.last_tilde[s * self.p_hat.num_actions() + a].as_deref()
    }

    /// Epoch whose samples last changed this pair's estimate.
    pub fn last_update_epoch(&self, s: usize, a: usize) -> Option<usize> {
        self.last_update_epoch[s * self.p_hat.num_actions() + a]
    }

    /// Snapshot as `{"S": .., "A": .., "P": [S][A][S]}`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Snapshot {
            #[serde(rename = "S")]
            s: usize,
            #[serde(rename = "A")]
            a: usize,
            #[serde(rename = "P")]
            p: Vec<Vec<Vec<f64>>>,
        }
        let (ns, na) = (self.p_hat.num_states(), self.p_hat.num_actions());
        let snap = Snapshot {
            s: ns,
            a: na,
            p: (0..ns)
                .map(|s| (0..na).map(|a| self.row(s, a).to_vec()).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&snap)?)
    }
}

/// What happened to one pair at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PairUpdate {
    pub state: usize,
    pub action: usize,
    /// Samples measured, `nu_e(s, a)`.
    pub visits: u64,
    /// Experiment budget `n`.
    pub experiments: u64,
    /// Per-pair confidence handed to the estimator.
    pub delta: f64,
    /// `n` fell under the estimator threshold (output was the zero vector).
    pub vacuous: bool,
    /// `P_hat` changed for this pair.
    pub applied: bool,
    pub tilde: Vec<f64>,
}

/// Folds the epoch's quantum samples into `estimate`.
///
/// For every pair with `nu > 0` the whole sample list is measured with
/// `n = experiment_budget(nu)` experiments and confidence `delta_e / m`, where
/// `m` is the number of such pairs. The first estimate for a pair replaces the
/// zero initialisation; later ones are averaged in with weights
/// `N / (N + nu)` and `nu / (N + nu)`. With `skip_vacuous` a below-threshold
/// (all-zero) estimate leaves the pair unchanged.
///
/// Must run before `counters` are rolled and before `buffer` advances.
#[allow(clippy::too_many_arguments)]
pub fn end_of_epoch_quantum_update<R: Rng + ?Sized>(
    estimate: &mut TransitionEstimate,
    counters: &VisitCounters,
    buffer: &mut SampleBuffer,
    epoch: usize,
    horizon: u64,
    delta_e: f64,
    cfg: &EstimatorConfig,
    skip_vacuous: bool,
    rng: &mut R,
) -> Result<Vec<PairUpdate>> {
    if buffer.epoch() != epoch {
        return Err(Error::StaleBuffer {
            buffer: buffer.epoch(),
            expected: epoch,
        });
    }
    let (ns, na) = (counters.num_states(), counters.num_actions());
    let visited = (0..ns * na)
        .filter(|&p| counters.in_epoch(p / na, p % na) > 0)
        .count();
    let mut updates = Vec::with_capacity(visited);
    if visited == 0 {
        return Ok(updates);
    }
    let delta = delta_e / visited as f64;

    for s in 0..ns {
        for a in 0..na {
            let nu = counters.in_epoch(s, a);
            if nu == 0 {
                continue;
            }
            if buffer.len(s, a) as u64 != nu {
                return Err(Error::InvalidParams(format!(
                    "buffer holds {} samples for ({s}, {a}) but nu = {nu}",
                    buffer.len(s, a)
                )));
            }
            let n = experiment_budget(nu, horizon, ns, cfg)?;
            let tilde = qbounded_estimate(buffer.samples_mut(s, a), n, delta, cfg, rng)?;
            let vacuous = below_threshold(n, delta, ns, cfg.l2);
            let idx = s * na + a;
            let applied = !(vacuous && skip_vacuous);
            if applied {
                let row = estimate.p_hat.row_mut(s, a);
                if estimate.last_update_epoch[idx].is_none() {
                    row.copy_from_slice(&tilde);
                } else {
                    let big_n = counters.prior(s, a) as f64;
                    let total = big_n + nu as f64;
                    let (w_hat, w_tilde) = (big_n / total, nu as f64 / total);
                    for (x, y) in row.iter_mut().zip(&tilde) {
                        *x = (w_hat * *x + w_tilde * y).clamp(-1.0, 1.0);
                    }
                }
                estimate.last_update_epoch[idx] = Some(epoch);
            }
            estimate.last_tilde[idx] = Some(tilde.clone());
            updates.push(PairUpdate {
                state: s,
                action: a,
                visits: nu,
                experiments: n,
                delta,
                vacuous,
                applied,
                tilde,
            });
        }
    }
    Ok(updates)
}

/// Empirical estimate `mu(s, a, .) / max(1, N + nu)`.
pub fn classical_empirical_update(estimate: &mut TransitionEstimate, counters: &VisitCounters) {
    let (ns, na) = (counters.num_states(), counters.num_actions());
    for s in 0..ns {
        for a in 0..na {
            let count = (counters.prior(s, a) + counters.in_epoch(s, a)).max(1) as f64;
            for (next, x) in estimate.p_hat.row_mut(s, a).iter_mut().enumerate() {
                *x = counters.next_state(s, a, next) as f64 / count;
            }
        }
    }
}

/// L1 confidence radius for one pair, capped at [`RADIUS_CAP`].
///
/// * quantum: `7 S ln(S^2 A t) / max(1, N)`
/// * classical: `sqrt(14 S ln(2 A t / delta) / max(1, N))`
///
/// Unvisited pairs (`N = 0`) and a non-positive `delta` get the cap.
pub fn confidence_radius(
    kind: AgentKind,
    num_states: usize,
    num_actions: usize,
    t: u64,
    count: u64,
    delta: f64,
) -> f64 {
    if count == 0 {
        return RADIUS_CAP;
    }
    let (s, a, t, n) = (num_states as f64, num_actions as f64, t.max(1) as f64, count as f64);
    let raw = match kind {
        AgentKind::Quantum => 7.0 * s * (s * s * a * t).ln() / n,
        AgentKind::Classical => {
            if !(delta > 0.0) {
                return RADIUS_CAP;
            }
            (14.0 * s * (2.0 * a * t / delta).ln() / n).sqrt()
        }
    };
    if raw.is_nan() {
        RADIUS_CAP
    } else {
        raw.clamp(f64::EPSILON, RADIUS_CAP)
    }
}
