//! Extended value iteration over the same L1 confidence set as the
//! optimistic LP. The LP only fixes the policy on the support of its
//! occupancy; off the support the agent acts greedily on these values.

use super::l1_nearest_simplex;
use crate::mdp::TransitionTensor;

pub const EVI_TOL: f64 = 1e-10;
pub const EVI_MAX_ITERATIONS: usize = 10_000;
/// Actions whose optimistic value is this close to the best are tied.
pub const TIE_TOL: f64 = 1e-9;

/// Values and greedy actions after extended value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EviResult {
    /// Relative values, shifted so that the minimum is zero.
    pub values: Vec<f64>,
    /// Optimistic action values of the last sweep, flat `(s, a)`.
    pub q: Vec<f64>,
    /// Span of the last Bellman increment, an estimate of the optimistic gain.
    pub gain: f64,
    pub iterations: usize,
}

impl EviResult {
    /// Actions within [`TIE_TOL`] of the best optimistic value in `s`.
    pub fn greedy_actions(&self, s: usize) -> Vec<usize> {
        let na = self.q.len() / self.values.len();
        let row = &self.q[s * na..(s + 1) * na];
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..na).filter(|&a| row[a] >= best - TIE_TOL).collect()
    }
}

/// The distribution in the L1 ball of `radius` around simplex point `center`
/// maximising `p . values`: move up to `radius / 2` mass onto the best state,
/// taken from the worst states first.
pub fn optimistic_row(center: &[f64], radius: f64, values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..center.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let mut p = center.to_vec();
    let best = order[0];
    let add = (radius / 2.0).min(1.0 - p[best]).max(0.0);
    p[best] += add;
    let mut excess = add;
    for &k in order.iter().rev() {
        if excess <= 0.0 || k == best {
            break;
        }
        let take = p[k].min(excess);
        p[k] -= take;
        excess -= take;
    }
    p
}

pub fn extended_value_iteration(rewards: &[f64], p_hat: &TransitionTensor, radii: &[f64]) -> EviResult {
    let (ns, na) = (p_hat.num_states(), p_hat.num_actions());
    // Re-centre each ball on the nearest simplex point; the shrunken ball is
    // inside the original one.
    let centers: Vec<(Vec<f64>, f64)> = (0..ns * na)
        .map(|p| {
            let row = p_hat.row(p / na, p % na);
            let c = l1_nearest_simplex(row);
            let d: f64 = row.iter().zip(&c).map(|(x, y)| (x - y).abs()).sum();
            (c, (radii[p] - d).max(0.0))
        })
        .collect();
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut gain = 0.0;
    let mut iterations = 0;
    while iterations < EVI_MAX_ITERATIONS {
        iterations += 1;
        let mut next = vec![f64::NEG_INFINITY; ns];
        for s in 0..ns {
            for a in 0..na {
                let (c, r) = &centers[s * na + a];
                let p = optimistic_row(c, *r, &v);
                let j = s * na + a;
                q[j] = rewards[j] + p.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
                next[s] = next[s].max(q[j]);
            }
        }
        let diff: Vec<f64> = next.iter().zip(&v).map(|(x, y)| x - y).collect();
        let hi = diff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = diff.iter().cloned().fold(f64::INFINITY, f64::min);
        gain = hi;
        let floor = next.iter().cloned().fold(f64::INFINITY, f64::min);
        v = next.into_iter().map(|x| x - floor).collect();
        if hi - lo < EVI_TOL {
            break;
        }
    }
    EviResult {
        values: v,
        q,
        gain,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimistic_row_moves_half_radius() {
        let p = optimistic_row(&[0.5, 0.3, 0.2], 0.4, &[1.0, 0.0, 2.0]);
        let want = [0.5, 0.1, 0.4];
        for (x, y) in p.iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn optimistic_row_full_ball_is_point_mass() {
        let p = optimistic_row(&[0.25, 0.25, 0.5], 2.0, &[0.0, 3.0, 1.0]);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_radius_is_plain_value_iteration() {
        // Two states: action 1 in state 0 moves to state 1 which pays 1.
        let p = TransitionTensor::from_flat(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let r = vec![0.1, 0.0, 1.0, 1.0];
        let out = extended_value_iteration(&r, &p, &[0.0; 4]);
        assert_eq!(out.greedy_actions(0), vec![1]);
        assert_eq!(out.greedy_actions(1), vec![0, 1]);
        assert!((out.gain - 1.0).abs() < 1e-9);
    }
}
