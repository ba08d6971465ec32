use nalgebra::{DMatrix, DVector};

use super::{Mdp, Policy, TransitionTensor};
use crate::error::{Error, Result};

/// Relative singular-value threshold below which a chain is treated as
/// having more than one recurrent class.
const RANK_TOL: f64 = 1e-10;

/// Gain and bias of a policy, with the bias pinned at `h(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBias {
    pub gain: f64,
    pub bias: Vec<f64>,
}

impl GainBias {
    /// `max_s h(s) - min_s h(s)`.
    pub fn span(&self) -> f64 {
        let max = self.bias.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.bias.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

fn check_policy(mdp: &Mdp, policy: &Policy) -> Result<()> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::InvalidParams(format!(
            "policy shape ({}, {}) does not match MDP ({}, {})",
            policy.num_states(),
            policy.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

fn solve_full_rank(a: DMatrix<f64>, b: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max.is_finite()) || min <= RANK_TOL * max.max(1.0) {
        return Err(Error::NonErgodicChain(format!(
            "{what}: smallest singular value {min:e} (largest {max:e})"
        )));
    }
    svd.solve(&b, 0.0)
        .map_err(|e| Error::SingularSystem(format!("{what}: {e}")))
}

/// Stationary state-action occupancy `rho(s,a) = d(s) pi(a|s)` of the chain
/// induced by `policy` on `mdp`. Flat, indexed `(s, a)`.
pub fn stationary_distribution(mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    let n = mdp.num_states();
    let p_pi = mdp.transitions().under_policy(policy);
    // (P_pi^T - I) d = 0 stacked with 1^T d = 1.
    let mut a = DMatrix::<f64>::zeros(n + 1, n);
    for s in 0..n {
        for next in 0..n {
            a[(next, s)] += p_pi[s * n + next];
        }
        a[(s, s)] -= 1.0;
        a[(n, s)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n + 1);
    b[n] = 1.0;
    let d = solve_full_rank(a, b, "stationary distribution")?;

    if let Some(x) = d.iter().find(|x| **x < -1e-9) {
        return Err(Error::NumericalFailure(format!(
            "stationary distribution has negative mass {x:e}"
        )));
    }
    let total: f64 = d.iter().map(|x| x.max(0.0)).sum();
    let na = mdp.num_actions();
    let mut rho = vec![0.0; n * na];
    for s in 0..n {
        let ds = d[s].max(0.0) / total;
        for a in 0..na {
            rho[s * na + a] = ds * policy.prob(s, a);
        }
    }
    Ok(rho)
}

/// Solves `lambda + h(s) - (P_pi h)(s) = r_pi(s)` together with `h(0) = 0`
/// as a single linear system.
pub fn gain_bias(mdp: &Mdp, policy: &Policy) -> Result<GainBias> {
    check_policy(mdp, policy)?;
    let n = mdp.num_states();
    let p_pi = mdp.transitions().under_policy(policy);
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        a[(s, 0)] = 1.0;
        a[(s, 1 + s)] += 1.0;
        for next in 0..n {
            a[(s, 1 + next)] -= p_pi[s * n + next];
        }
        b[s] = (0..mdp.num_actions())
            .map(|act| policy.prob(s, act) * mdp.reward(s, act))
            .sum();
    }
    a[(n, 1)] = 1.0;
    let x = solve_full_rank(a, b, "gain/bias system")?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite gain/bias solution".into()));
    }
    Ok(GainBias {
        gain: x[0],
        bias: x.iter().skip(1).copied().collect(),
    })
}

/// Average-reward Bellman error of an optimistic model against the true one:
/// `B(s,a) = sum_s' (P_e(s'|s,a) - P(s'|s,a)) h_e(s')`, where `h_e` is the
/// bias of `policy` on the optimistic model. Flat, indexed `(s, a)`.
pub fn bellman_error(
    true_mdp: &Mdp,
    optimistic: &TransitionTensor,
    policy: &Policy,
) -> Result<Vec<f64>> {
    let model = true_mdp.with_transitions(optimistic.clone())?;
    let h = gain_bias(&model, policy)?.bias;
    let (ns, na) = (true_mdp.num_states(), true_mdp.num_actions());
    let mut out = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let pe = optimistic.row(s, a);
            let p = true_mdp.transitions().row(s, a);
            out.push(
                pe.iter()
                    .zip(p)
                    .zip(&h)
                    .map(|((x, y), hv)| (x - y) * hv)
                    .sum(),
            );
        }
    }
    Ok(out)
}
