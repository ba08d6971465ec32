//! Optimistic planning over occupancy measures.
//!
//! The optimistic program jointly chooses an occupancy `rho(s, a)` and a
//! model `P_e` inside per-pair L1 balls around `P_hat`. It is bilinear in
//! `(rho, P_e)`; writing `p(s, a, s') = rho(s, a) P_e(s'|s, a)` and bounding
//! the absolute deviations with slacks `alpha(s, a, s')` turns it into the
//! linear program built by [`build_extended_lp`]:
//!
//! ```text
//! max  sum r(s,a) p(s,a,s')
//! s.t. sum p = 1
//!      sum_{a,s''} p(s',a,s'') <= sum_{s,a} p(s,a,s')             for all s'
//!      +-(p(s,a,s') - P_hat(s'|s,a) sum_{s''} p(s,a,s'')) <= alpha(s,a,s')
//!      sum_{s'} alpha(s,a,s') <= radius(s,a) sum_{s''} p(s,a,s'')
//!      p, alpha >= 0
//! ```
//!
//! Both sides of the flow inequality sum to one over `s'`, so it binds for
//! every state at any feasible point.

pub mod evi;
pub mod lp;

pub use evi::{extended_value_iteration, optimistic_row, EviResult};
pub use lp::{solve_lp, Constraint, LinearProgram, LpSolution, Relation};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy, TransitionTensor};

/// Occupancy mass below which a pair's model row is not recovered from `p`.
pub const RECOVERY_FLOOR: f64 = 1e-10;

/// State occupancy at or below which the policy comes from extended value
/// iteration instead of the occupancy.
pub const UNSUPPORTED_MASS: f64 = 1e-12;

/// The extended LP for one epoch together with its variable layout.
#[derive(Debug, Clone)]
pub struct ExtendedLpInstance {
    num_states: usize,
    num_actions: usize,
    pub program: LinearProgram,
}

impl ExtendedLpInstance {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Column of `p(s, a, s')`.
    pub fn p_index(&self, s: usize, a: usize, next: usize) -> usize {
        (s * self.num_actions + a) * self.num_states + next
    }

    /// Column of `alpha(s, a, s')`.
    pub fn alpha_index(&self, s: usize, a: usize, next: usize) -> usize {
        self.num_states * self.num_actions * self.num_states + self.p_index(s, a, next)
    }

    pub fn num_vars(&self) -> usize {
        self.program.num_vars()
    }

    pub fn num_constraints(&self) -> usize {
        self.program.constraints.len()
    }
}

pub fn build_extended_lp(
    rewards: &[f64],
    p_hat: &TransitionTensor,
    radii: &[f64],
) -> Result<ExtendedLpInstance> {
    let (ns, na) = (p_hat.num_states(), p_hat.num_actions());
    if rewards.len() != ns * na || radii.len() != ns * na {
        return Err(Error::InvalidParams(format!(
            "rewards ({}) and radii ({}) must both have S*A = {} entries",
            rewards.len(),
            radii.len(),
            ns * na
        )));
    }
    for (idx, r) in radii.iter().enumerate() {
        if !(*r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidRadius {
                state: idx / na,
                action: idx % na,
                radius: *r,
            });
        }
    }
    if p_hat.as_flat().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams("P_hat has non-finite entries".into()));
    }

    let sas = ns * na * ns;
    let mut inst = ExtendedLpInstance {
        num_states: ns,
        num_actions: na,
        program: LinearProgram::new(2 * sas),
    };
    let mut names = Vec::with_capacity(2 * sas);
    for prefix in ["p", "alpha"] {
        for s in 0..ns {
            for a in 0..na {
                for next in 0..ns {
                    names.push(format!("{prefix}_{s}_{a}_{next}"));
                }
            }
        }
    }
    inst.program.var_names = names;
    for s in 0..ns {
        for a in 0..na {
            for next in 0..ns {
                let j = inst.p_index(s, a, next);
                inst.program.objective[j] = rewards[s * na + a];
            }
        }
    }

    let lp = &mut inst.program;
    let p_idx = |s: usize, a: usize, next: usize| (s * na + a) * ns + next;

    lp.add("mass", (0..sas).map(|j| (j, 1.0)).collect(), Relation::Eq, 1.0);

    for target in 0..ns {
        let mut dense = vec![0.0; sas];
        for a in 0..na {
            for next in 0..ns {
                dense[p_idx(target, a, next)] += 1.0;
            }
        }
        for s in 0..ns {
            for a in 0..na {
                dense[p_idx(s, a, target)] -= 1.0;
            }
        }
        let coeffs = dense
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        lp.add(format!("flow_{target}"), coeffs, Relation::Le, 0.0);
    }

    for s in 0..ns {
        for a in 0..na {
            let row = p_hat.row(s, a);
            for next in 0..ns {
                let alpha = sas + p_idx(s, a, next);
                for sign in [1.0, -1.0] {
                    let mut coeffs: Vec<(usize, f64)> = (0..ns)
                        .map(|k| {
                            let own = if k == next { 1.0 } else { 0.0 };
                            (p_idx(s, a, k), sign * (own - row[next]))
                        })
                        .filter(|(_, v)| *v != 0.0)
                        .collect();
                    coeffs.push((alpha, -1.0));
                    let tag = if sign > 0.0 { "dev_hi" } else { "dev_lo" };
                    lp.add(format!("{tag}_{s}_{a}_{next}"), coeffs, Relation::Le, 0.0);
                }
            }
        }
    }

    for s in 0..ns {
        for a in 0..na {
            let radius = radii[s * na + a];
            let mut coeffs: Vec<(usize, f64)> = (0..ns).map(|k| (p_idx(s, a, k), -radius)).collect();
            coeffs.extend((0..ns).map(|k| (sas + p_idx(s, a, k), 1.0)));
            lp.add(format!("ball_{s}_{a}"), coeffs, Relation::Le, 0.0);
        }
    }
    Ok(inst)
}

/// Outcome of one optimistic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// `rho_e(s, a)`, flat.
    pub occupancy: Vec<f64>,
    /// Recovered optimistic model `P_e`.
    pub model: TransitionTensor,
    /// Optimistic gain `sum r rho_e`.
    pub value: f64,
    pub policy: Policy,
    /// `inflow(s') - outflow(s')` at the optimum; zero when the relaxed flow
    /// constraint binds.
    pub flow_gap: Vec<f64>,
    /// `sum_{s'} alpha(s, a, s')`, flat.
    pub slack_mass: Vec<f64>,
    pub lp_iterations: usize,
    pub lp_residual: f64,
}

/// Closest point of the simplex to `row` in L1: clip negatives, then remove
/// or add mass proportionally.
pub fn l1_nearest_simplex(row: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = row.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        let n = out.len() as f64;
        out.iter_mut().for_each(|x| *x = 1.0 / n);
    } else if total > 1.0 {
        out.iter_mut().for_each(|x| *x /= total);
    } else {
        let deficit = 1.0 - total;
        out.iter_mut().for_each(|x| *x += deficit * *x / total);
    }
    out
}

pub fn solve_optimistic(rewards: &[f64], p_hat: &TransitionTensor, radii: &[f64]) -> Result<PlanResult> {
    let inst = build_extended_lp(rewards, p_hat, radii)?;
    let sol = solve_lp(&inst.program)?;
    let (ns, na) = (inst.num_states, inst.num_actions);

    let mut occupancy = vec![0.0; ns * na];
    let mut slack_mass = vec![0.0; ns * na];
    let mut model = TransitionTensor::zeros(ns, na);
    let mut inflow = vec![0.0; ns];
    for s in 0..ns {
        for a in 0..na {
            let p = &sol.x[inst.p_index(s, a, 0)..inst.p_index(s, a, 0) + ns];
            let rho: f64 = p.iter().sum();
            occupancy[s * na + a] = rho;
            slack_mass[s * na + a] = (0..ns).map(|k| sol.x[inst.alpha_index(s, a, k)]).sum();
            for (k, v) in p.iter().enumerate() {
                inflow[k] += v;
            }
            let row = model.row_mut(s, a);
            if rho >= RECOVERY_FLOOR {
                for (m, v) in row.iter_mut().zip(p) {
                    *m = v / rho;
                }
            } else {
                row.copy_from_slice(&l1_nearest_simplex(p_hat.row(s, a)));
            }
        }
    }
    let flow_gap = (0..ns)
        .map(|s| inflow[s] - occupancy[s * na..(s + 1) * na].iter().sum::<f64>())
        .collect();
    let value = occupancy.iter().zip(rewards).map(|(x, r)| x * r).sum();
    Ok(PlanResult {
        policy: complete_policy(rewards, p_hat, radii, &occupancy)?,
        occupancy,
        model,
        value,
        flow_gap,
        slack_mass,
        lp_iterations: sol.iterations,
        lp_residual: sol.residual,
    })
}

/// Occupancy policy on states with mass; elsewhere uniform over the actions
/// that are greedy for the optimistic values.
fn complete_policy(
    rewards: &[f64],
    p_hat: &TransitionTensor,
    radii: &[f64],
    occupancy: &[f64],
) -> Result<Policy> {
    let (ns, na) = (p_hat.num_states(), p_hat.num_actions());
    let mut probs = Policy::from_occupancy(ns, na, occupancy).as_flat().to_vec();
    let empty: Vec<usize> = (0..ns)
        .filter(|&s| occupancy[s * na..(s + 1) * na].iter().sum::<f64>() <= UNSUPPORTED_MASS)
        .collect();
    if !empty.is_empty() {
        let evi = extended_value_iteration(rewards, p_hat, radii);
        for s in empty {
            let row = &mut probs[s * na..(s + 1) * na];
            row.fill(0.0);
            let best = evi.greedy_actions(s);
            let w = 1.0 / best.len() as f64;
            for a in best {
                row[a] = w;
            }
        }
    }
    Policy::new(ns, na, probs)
}

/// Optimal gain, policy and occupancy of a known model.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownModelSolution {
    pub gain: f64,
    pub policy: Policy,
    pub occupancy: Vec<f64>,
}

/// Solves `max sum r rho` over stationary occupancies of `mdp` with equality
/// flow balance.
pub fn solve_known_model(mdp: &Mdp) -> Result<KnownModelSolution> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut lp = LinearProgram::new(ns * na);
    lp.objective.copy_from_slice(mdp.rewards());
    lp.var_names = (0..ns * na)
        .map(|j| format!("rho_{}_{}", j / na, j % na))
        .collect();
    lp.add("mass", (0..ns * na).map(|j| (j, 1.0)).collect(), Relation::Eq, 1.0);
    for target in 0..ns {
        let mut dense = vec![0.0; ns * na];
        for a in 0..na {
            dense[target * na + a] += 1.0;
        }
        for s in 0..ns {
            for a in 0..na {
                dense[s * na + a] -= mdp.transitions().get(s, a, target);
            }
        }
        let coeffs = dense
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        lp.add(format!("flow_{target}"), coeffs, Relation::Eq, 0.0);
    }
    let sol = solve_lp(&lp)?;
    Ok(KnownModelSolution {
        gain: sol.value,
        policy: Policy::from_occupancy(ns, na, &sol.x),
        occupancy: sol.x,
    })
}
