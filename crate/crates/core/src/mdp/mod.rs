//! Finite tabular MDPs, policies, and the exact evaluation machinery used by
//! the simulator and the lemma-verification suites.

mod env;
mod eval;
mod mixing;

pub use env::{make_environment, EnvKind, RIVERSWIM_LEFT, RIVERSWIM_RIGHT};
pub use eval::{bellman_error, gain_bias, stationary_distribution, GainBias};
pub use mixing::{mixing_diagnostics, MixingDiagnostics, PolicyHittingTimes, ENUMERATION_LIMIT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for row-stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Transition tensor indexed `(s, a, s')`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor {
    num_states: usize,
    num_actions: usize,
    data: Vec<f64>,
}

impl TransitionTensor {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            data: vec![0.0; num_states * num_actions * num_states],
        }
    }

    /// Wraps a flat `(s, a, s')` buffer. Only checks the length.
    pub fn from_flat(num_states: usize, num_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_states * num_actions * num_states {
            return Err(Error::InvalidParams(format!(
                "transition buffer has {} entries, expected {}",
                data.len(),
                num_states * num_actions * num_states
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            data,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.data[start..start + self.num_states]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &mut self.data[start..start + self.num_states]
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, next: usize) -> f64 {
        self.data[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Checks that every row is a probability vector within `tol`.
    pub fn validate_stochastic(&self, tol: f64) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < -tol) {
                    return Err(Error::InvalidMdp(format!(
                        "P(.|{s},{a}) has invalid entry {p}"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::InvalidMdp(format!(
                        "P(.|{s},{a}) sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// State-to-state matrix `P_pi(s, s') = sum_a pi(a|s) P(s'|s,a)`, row-major.
    pub fn under_policy(&self, policy: &Policy) -> Vec<f64> {
        let n = self.num_states;
        let mut out = vec![0.0; n * n];
        for s in 0..n {
            for a in 0..self.num_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (o, p) in out[s * n..(s + 1) * n].iter_mut().zip(self.row(s, a)) {
                    *o += w * p;
                }
            }
        }
        out
    }
}

/// Finite MDP with known rewards in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    transitions: TransitionTensor,
    rewards: Vec<f64>,
}

impl Mdp {
    /// Validates and builds an MDP. `rewards` is indexed `(s, a)`.
    pub fn new(transitions: TransitionTensor, rewards: Vec<f64>) -> Result<Self> {
        let (s, a) = (transitions.num_states(), transitions.num_actions());
        if s == 0 || a == 0 {
            return Err(Error::InvalidMdp("S and A must be positive".into()));
        }
        if rewards.len() != s * a {
            return Err(Error::InvalidMdp(format!(
                "reward table has {} entries, expected {}",
                rewards.len(),
                s * a
            )));
        }
        transitions.validate_stochastic(STOCHASTIC_TOL)?;
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidMdp(format!("reward {r} outside [0, 1]")));
        }
        Ok(Self {
            transitions,
            rewards,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transitions.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.num_actions()
    }

    pub fn transitions(&self) -> &TransitionTensor {
        &self.transitions
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions() + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Same rewards, different dynamics. Used to evaluate optimistic models.
    pub fn with_transitions(&self, transitions: TransitionTensor) -> Result<Self> {
        Self::new(transitions, self.rewards.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MdpDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// On-disk layout: `{"S": .., "A": .., "P": [S][A][S], "r": [S][A]}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    #[serde(rename = "P")]
    transitions: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "r")]
    rewards: Vec<Vec<f64>>,
}

impl From<&Mdp> for MdpDocument {
    fn from(mdp: &Mdp) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        Self {
            num_states: ns,
            num_actions: na,
            transitions: (0..ns)
                .map(|s| (0..na).map(|a| mdp.transitions.row(s, a).to_vec()).collect())
                .collect(),
            rewards: (0..ns)
                .map(|s| (0..na).map(|a| mdp.reward(s, a)).collect())
                .collect(),
        }
    }
}

impl TryFrom<MdpDocument> for Mdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let (ns, na) = (doc.num_states, doc.num_actions);
        let shape_err = |what: &str| Error::InvalidMdp(format!("{what} does not match S={ns}, A={na}"));
        if doc.transitions.len() != ns || doc.rewards.len() != ns {
            return Err(shape_err("outer dimension"));
        }
        let mut flat = Vec::with_capacity(ns * na * ns);
        for per_state in &doc.transitions {
            if per_state.len() != na {
                return Err(shape_err("P action dimension"));
            }
            for row in per_state {
                if row.len() != ns {
                    return Err(shape_err("P next-state dimension"));
                }
                flat.extend_from_slice(row);
            }
        }
        let mut rewards = Vec::with_capacity(ns * na);
        for row in &doc.rewards {
            if row.len() != na {
                return Err(shape_err("r action dimension"));
            }
            rewards.extend_from_slice(row);
        }
        Mdp::new(TransitionTensor::from_flat(ns, na, flat)?, rewards)
    }
}

/// Stationary (possibly stochastic) policy `pi(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::InvalidParams(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        for s in 0..num_states {
            let row = &probs[s * num_actions..(s + 1) * num_actions];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidParams(format!(
                    "pi(.|{s}) = {row:?} is not a probability vector"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Deterministic policy from one action per state.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    /// Normalizes each state's row of an occupancy table; states with total
    /// mass at most `1e-12` fall back to the uniform distribution.
    pub fn from_occupancy(num_states: usize, num_actions: usize, occupancy: &[f64]) -> Self {
        let mut probs = vec![0.0; num_states * num_actions];
        for s in 0..num_states {
            let row = &occupancy[s * num_actions..(s + 1) * num_actions];
            let mass: f64 = row.iter().map(|x| x.max(0.0)).sum();
            let out = &mut probs[s * num_actions..(s + 1) * num_actions];
            if mass <= 1e-12 {
                out.fill(1.0 / num_actions as f64);
            } else {
                for (o, x) in out.iter_mut().zip(row) {
                    *o = x.max(0.0) / mass;
                }
            }
        }
        Self {
            num_states,
            num_actions,
            probs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// Draws an action from `pi(.|s)` given a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, s: usize, u: f64) -> usize {
        sample_index(self.row(s), u)
    }
}

/// Inverse-CDF draw from a probability vector; falls back to the last
/// positive entry when rounding leaves `u` past the cumulative sum.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Mdp {
        let p = TransitionTensor::from_flat(2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        Mdp::new(p, vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let p = TransitionTensor::from_flat(2, 1, vec![0.5, 0.4, 1.0, 0.0]).unwrap();
        assert!(matches!(Mdp::new(p, vec![0.0, 0.0]), Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn rejects_rewards_outside_unit_interval() {
        let p = TransitionTensor::from_flat(1, 1, vec![1.0]).unwrap();
        assert!(Mdp::new(p.clone(), vec![1.5]).is_err());
        assert!(Mdp::new(p, vec![-0.1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mdp = two_state();
        let text = mdp.to_json().unwrap();
        assert!(text.contains("\"S\": 2"));
        assert_eq!(Mdp::from_json(&text).unwrap(), mdp);
    }

    #[test]
    fn json_loader_validates() {
        let bad = r#"{"S": 1, "A": 1, "P": [[[0.7]]], "r": [[0.0]]}"#;
        assert!(matches!(Mdp::from_json(bad), Err(Error::InvalidMdp(_))));
        let shape = r#"{"S": 2, "A": 1, "P": [[[1.0]]], "r": [[0.0]]}"#;
        assert!(Mdp::from_json(shape).is_err());
        let unknown = r#"{"S": 1, "A": 1, "P": [[[1.0]]], "r": [[0.0]], "D": 3}"#;
        assert!(Mdp::from_json(unknown).is_err());
    }

    #[test]
    fn policy_validation_and_fallback() {
        assert!(Policy::new(1, 2, vec![0.5, 0.6]).is_err());
        let pi = Policy::from_occupancy(2, 2, &[0.25, 0.75, 0.0, 0.0]);
        assert_eq!(pi.row(0), &[0.25, 0.75]);
        assert_eq!(pi.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn sample_index_skips_zero_mass() {
        assert_eq!(sample_index(&[0.0, 1.0, 0.0], 0.0), 1);
        assert_eq!(sample_index(&[0.3, 0.7], 0.999_999_999_999), 1);
        assert_eq!(sample_index(&[0.3, 0.7, 0.0], 1.0), 1);
    }
}
