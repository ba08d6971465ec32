//! Randomised property checks of the regret decomposition: the gain gap
//! identity, the Bellman-error bound and the bias-span bound.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::mdp::{
    bellman_error, gain_bias, make_environment, mixing_diagnostics, stationary_distribution,
    EnvKind, Mdp, Policy, TransitionTensor,
};

/// A true model, an alternative model and a policy on the same sizes.
#[derive(Debug, Clone)]
pub struct Triple {
    pub truth: Mdp,
    pub optimistic: TransitionTensor,
    pub policy: Policy,
}

fn random_rows<R: Rng + ?Sized>(rng: &mut R, ns: usize, na: usize) -> TransitionTensor {
    let mut data = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let row: Vec<f64> = (0..ns).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let total: f64 = row.iter().sum();
        data.extend(row.into_iter().map(|x| x / total));
    }
    TransitionTensor::from_flat(ns, na, data).expect("rows are normalised")
}

/// Dense random models (every chain is ergodic) and a random stochastic
/// policy.
pub fn random_triple<R: Rng + ?Sized>(rng: &mut R, ns: usize, na: usize) -> Result<Triple> {
    let rewards: Vec<f64> = (0..ns * na).map(|_| rng.gen()).collect();
    let truth = Mdp::new(random_rows(rng, ns, na), rewards)?;
    let optimistic = random_rows(rng, ns, na);
    let mut probs = Vec::with_capacity(ns * na);
    for _ in 0..ns {
        let row: Vec<f64> = (0..na).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.into_iter().map(|x| x / total));
    }
    let policy = Policy::new(ns, na, probs)?;
    Ok(Triple {
        truth,
        optimistic,
        policy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleCheck {
    /// `|(G_e - G) - sum rho B|`.
    pub gap_identity_error: f64,
    /// `max_{s,a} |B(s,a)| - ||P_e - P||_1 ||h_e||_inf`; nonpositive when the
    /// bound holds.
    pub bellman_bound_excess: f64,
}

pub fn check_triple(triple: &Triple) -> Result<TripleCheck> {
    let truth = &triple.truth;
    let model = truth.with_transitions(triple.optimistic.clone())?;
    let g_true = gain_bias(truth, &triple.policy)?.gain;
    let opt = gain_bias(&model, &triple.policy)?;
    let rho = stationary_distribution(truth, &triple.policy)?;
    let b = bellman_error(truth, &triple.optimistic, &triple.policy)?;
    let weighted: f64 = rho.iter().zip(&b).map(|(r, x)| r * x).sum();
    let h_inf = opt.bias.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let na = truth.num_actions();
    let mut excess = f64::NEG_INFINITY;
    for (j, bj) in b.iter().enumerate() {
        let (s, a) = (j / na, j % na);
        let l1: f64 = triple
            .optimistic
            .row(s, a)
            .iter()
            .zip(truth.transitions().row(s, a))
            .map(|(x, y)| (x - y).abs())
            .sum();
        excess = excess.max(bj.abs() - l1 * h_inf);
    }
    Ok(TripleCheck {
        gap_identity_error: ((opt.gain - g_true) - weighted).abs(),
        bellman_bound_excess: excess,
    })
}

/// `span(h_pi) - t_mix` for every deterministic policy of `mdp`; nonpositive
/// when the bound holds. Returns the largest value.
pub fn bias_span_excess(mdp: &Mdp) -> Result<f64> {
    let diag = mixing_diagnostics(mdp)?;
    let mut worst = f64::NEG_INFINITY;
    for p in diag.hitting_times.iter().filter(|p| !p.flagged) {
        let policy = Policy::deterministic(mdp.num_actions(), &p.actions);
        let span = gain_bias(mdp, &policy)?.span();
        worst = worst.max(span - diag.t_mix);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyReport {
    pub triples: usize,
    pub max_gap_identity_error: f64,
    pub max_bellman_bound_excess: f64,
    pub span_instances: usize,
    pub max_span_excess: f64,
}

impl VerifyReport {
    pub fn passes(&self, identity_tol: f64, bound_tol: f64, span_tol: f64) -> bool {
        self.max_gap_identity_error <= identity_tol
            && self.max_bellman_bound_excess <= bound_tol
            && self.max_span_excess <= span_tol
    }
}

/// Runs `trials` random triples over `S in {2, 3, 4}`, `A in {1, 2}`, plus
/// the span bound on smoothed random and RiverSwim instances.
pub fn verify_suite<R: Rng + ?Sized>(rng: &mut R, trials: usize) -> Result<VerifyReport> {
    let mut max_id = 0.0f64;
    let mut max_bound = f64::NEG_INFINITY;
    let mut max_span = f64::NEG_INFINITY;
    let mut span_instances = 0;
    for i in 0..trials {
        let ns = 2 + i % 3;
        let na = 1 + (i / 3) % 2;
        let triple = random_triple(rng, ns, na)?;
        let check = check_triple(&triple)?;
        max_id = max_id.max(check.gap_identity_error);
        max_bound = max_bound.max(check.bellman_bound_excess);
        max_span = max_span.max(bias_span_excess(&triple.truth)?);
        span_instances += 1;
    }
    for (kind, ns, na, eps) in [
        (EnvKind::RandomErgodic, 4, 2, 0.05),
        (EnvKind::RandomErgodic, 5, 3, 0.2),
        (EnvKind::Riverswim, 4, 2, 0.0),
        (EnvKind::Riverswim, 6, 2, 0.0),
    ] {
        let mdp = make_environment(kind, ns, na, rng.gen(), eps)?;
        max_span = max_span.max(bias_span_excess(&mdp)?);
        span_instances += 1;
    }
    Ok(VerifyReport {
        triples: trials,
        max_gap_identity_error: max_id,
        max_bellman_bound_excess: max_bound,
        span_instances,
        max_span_excess: max_span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn suite_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let report = verify_suite(&mut rng, 24).unwrap();
        assert!(report.passes(1e-8, 1e-12, 1e-9), "{report:?}");
    }

    #[test]
    fn identical_models_have_no_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = random_triple(&mut rng, 3, 2).unwrap();
        t.optimistic = t.truth.transitions().clone();
        let c = check_triple(&t).unwrap();
        assert!(c.gap_identity_error < 1e-12);
        assert!(c.bellman_bound_excess <= 1e-15);
    }
}
