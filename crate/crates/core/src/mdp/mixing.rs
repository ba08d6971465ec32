use nalgebra::{DMatrix, DVector};

use super::{Mdp, Policy};
use crate::error::{Error, Result};

/// Upper bound on `A^S` for exhaustive deterministic-policy enumeration.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Expected first-passage times for one deterministic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHittingTimes {
    pub actions: Vec<usize>,
    /// `times[s * S + s']` is `E[T_{s -> s'}]`, zero on the diagonal and
    /// infinite where `s'` is unreachable from `s`.
    pub times: Vec<f64>,
    /// Some state cannot reach some other state under this policy.
    pub flagged: bool,
}

/// Hitting-time based mixing quantities over all deterministic policies.
///
/// `t_mix` only ranges over policies under which every state reaches every
/// other state. Enumerating deterministic policies gives a lower bound on the
/// same maximum taken over stochastic policies whenever that maximum is
/// infinite; when every policy is ergodic the two coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDiagnostics {
    pub hitting_times: Vec<PolicyHittingTimes>,
    pub t_mix: f64,
    pub diameter: f64,
}

impl MixingDiagnostics {
    pub fn flagged_policies(&self) -> usize {
        self.hitting_times.iter().filter(|p| p.flagged).count()
    }
}

pub fn mixing_diagnostics(mdp: &Mdp) -> Result<MixingDiagnostics> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let count = (na as f64).powi(ns as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLargeToEnumerate {
            policies: count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let count = count as usize;

    let mut hitting_times = Vec::with_capacity(count);
    let mut actions = vec![0usize; ns];
    for index in 0..count {
        let mut rest = index;
        for slot in actions.iter_mut() {
            *slot = rest % na;
            rest /= na;
        }
        let policy = Policy::deterministic(na, &actions);
        let p_pi = mdp.transitions().under_policy(&policy);
        let times = first_passage_times(&p_pi, ns)?;
        let flagged = times.iter().any(|t| t.is_infinite());
        hitting_times.push(PolicyHittingTimes {
            actions: actions.clone(),
            times,
            flagged,
        });
    }

    let t_mix = hitting_times
        .iter()
        .filter(|p| !p.flagged)
        .flat_map(|p| p.times.iter().copied())
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |m| m.max(t))))
        .ok_or_else(|| {
            Error::NonErgodicChain("no deterministic policy reaches every state".into())
        })?;

    let mut diameter = 0.0f64;
    for pair in 0..ns * ns {
        let best = hitting_times
            .iter()
            .map(|p| p.times[pair])
            .fold(f64::INFINITY, f64::min);
        diameter = diameter.max(best);
    }

    Ok(MixingDiagnostics {
        hitting_times,
        t_mix,
        diameter,
    })
}

/// Solves `m = 1 + Q m` for every target, where `Q` is `P_pi` with the
/// target's row and column removed.
fn first_passage_times(p_pi: &[f64], ns: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ns * ns];
    for target in 0..ns {
        let reach = reaches(p_pi, ns, target);
        let others: Vec<usize> = (0..ns).filter(|&s| s != target && reach[s]).collect();
        for s in (0..ns).filter(|&s| s != target && !reach[s]) {
            out[s * ns + target] = f64::INFINITY;
        }
        if others.is_empty() {
            continue;
        }
        // Every state in `others` reaches the target, so the system is regular.
        let k = others.len();
        let mut a = DMatrix::<f64>::identity(k, k);
        for (i, &s) in others.iter().enumerate() {
            for (j, &u) in others.iter().enumerate() {
                a[(i, j)] -= p_pi[s * ns + u];
            }
        }
        let m = a
            .lu()
            .solve(&DVector::from_element(k, 1.0))
            .ok_or_else(|| Error::SingularSystem("first-passage system".into()))?;
        for (i, &s) in others.iter().enumerate() {
            out[s * ns + target] = m[i];
        }
    }
    Ok(out)
}

/// States with a positive-probability path to `target`.
fn reaches(p_pi: &[f64], ns: usize, target: usize) -> Vec<bool> {
    let mut seen = vec![false; ns];
    seen[target] = true;
    let mut stack = vec![target];
    while let Some(j) = stack.pop() {
        for s in 0..ns {
            if !seen[s] && p_pi[s * ns + j] > 0.0 {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}
