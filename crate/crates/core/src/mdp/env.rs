use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mdp, TransitionTensor};
use crate::error::{Error, Result};

pub const RIVERSWIM_LEFT: usize = 0;
pub const RIVERSWIM_RIGHT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Riverswim,
    RandomErgodic,
    TwoStateCycle,
}

impl EnvKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvKind::Riverswim => "riverswim",
            EnvKind::RandomErgodic => "random_ergodic",
            EnvKind::TwoStateCycle => "two_state_cycle",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "riverswim" => Ok(EnvKind::Riverswim),
            "random_ergodic" => Ok(EnvKind::RandomErgodic),
            "two_state_cycle" => Ok(EnvKind::TwoStateCycle),
            other => Err(Error::InvalidParams(format!("unknown environment kind {other:?}"))),
        }
    }
}

/// Builds one of the benchmark environments.
///
/// * `Riverswim` always has two actions (`0` = left, `1` = right). Left moves
///   one state toward 0 deterministically. Right succeeds with probability
///   0.35, stays with 0.6 and slips back with 0.05 in the interior; at the left
///   bank it moves with 0.6 and stays with 0.4, at the right bank it stays with
///   0.6 and slips with 0.4. Rewards: `r(0, left) = 0.005`, `r(S-1, right) = 1`.
/// * `RandomErgodic` draws every row from a flat Dirichlet and every reward
///   uniformly from `[0, 1]`, seeded by `seed`.
/// * `TwoStateCycle` always has two states that swap deterministically under
///   every action, with reward 1 in state 0 and 0 in state 1.
///
/// `smoothing` mixes each row with the uniform distribution:
/// `P <- (1 - eps) P + eps / S`.
pub fn make_environment(
    kind: EnvKind,
    num_states: usize,
    num_actions: usize,
    seed: u64,
    smoothing: f64,
) -> Result<Mdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidParams(format!(
            "S and A must be positive, got S={num_states}, A={num_actions}"
        )));
    }
    if !(0.0..=1.0).contains(&smoothing) {
        return Err(Error::InvalidParams(format!(
            "smoothing must lie in [0, 1], got {smoothing}"
        )));
    }
    let (mut p, r) = match kind {
        EnvKind::Riverswim => riverswim(num_states),
        EnvKind::RandomErgodic => random_dense(num_states, num_actions, seed),
        EnvKind::TwoStateCycle => two_state_cycle(num_actions),
    };
    if smoothing > 0.0 {
        let ns = p.num_states();
        for s in 0..ns {
            for a in 0..p.num_actions() {
                for x in p.row_mut(s, a) {
                    *x = (1.0 - smoothing) * *x + smoothing / ns as f64;
                }
            }
        }
    }
    Mdp::new(p, r)
}

fn riverswim(num_states: usize) -> (TransitionTensor, Vec<f64>) {
    let last = num_states - 1;
    let mut p = TransitionTensor::zeros(num_states, 2);
    let mut r = vec![0.0; num_states * 2];
    for s in 0..num_states {
        p.row_mut(s, RIVERSWIM_LEFT)[s.saturating_sub(1)] = 1.0;
        let right = p.row_mut(s, RIVERSWIM_RIGHT);
        if num_states == 1 {
            right[0] = 1.0;
        } else if s == 0 {
            right[0] = 0.4;
            right[1] = 0.6;
        } else if s == last {
            right[s - 1] = 0.4;
            right[s] = 0.6;
        } else {
            right[s - 1] = 0.05;
            right[s] = 0.6;
            right[s + 1] = 0.35;
        }
    }
    r[RIVERSWIM_LEFT] = 0.005;
    r[last * 2 + RIVERSWIM_RIGHT] = 1.0;
    (p, r)
}

fn random_dense(num_states: usize, num_actions: usize, seed: u64) -> (TransitionTensor, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = TransitionTensor::zeros(num_states, num_actions);
    for s in 0..num_states {
        for a in 0..num_actions {
            let row = p.row_mut(s, a);
            // Normalized unit exponentials give a flat Dirichlet draw.
            for x in row.iter_mut() {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                *x = -u.ln();
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    let r = (0..num_states * num_actions).map(|_| rng.gen::<f64>()).collect();
    (p, r)
}

fn two_state_cycle(num_actions: usize) -> (TransitionTensor, Vec<f64>) {
    let mut p = TransitionTensor::zeros(2, num_actions);
    let mut r = vec![0.0; 2 * num_actions];
    for a in 0..num_actions {
        p.row_mut(0, a)[1] = 1.0;
        p.row_mut(1, a)[0] = 1.0;
        r[a] = 1.0;
    }
    (p, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        for (s, a, eps) in [(0, 2, 0.0), (3, 0, 0.0), (3, 2, -0.1), (3, 2, 1.5)] {
            assert!(matches!(
                make_environment(EnvKind::RandomErgodic, s, a, 0, eps),
                Err(Error::InvalidParams(_))
            ));
        }
    }

    #[test]
    fn random_ergodic_is_seeded() {
        let a = make_environment(EnvKind::RandomErgodic, 4, 2, 7, 0.1).unwrap();
        let b = make_environment(EnvKind::RandomErgodic, 4, 2, 7, 0.1).unwrap();
        let c = make_environment(EnvKind::RandomErgodic, 4, 2, 8, 0.1).unwrap();
        let bits = |m: &Mdp| -> Vec<u64> {
            m.transitions()
                .as_flat()
                .iter()
                .chain(m.rewards())
                .map(|x| x.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn smoothing_makes_every_entry_positive() {
        let m = make_environment(EnvKind::Riverswim, 5, 2, 0, 0.05).unwrap();
        assert!(m.transitions().as_flat().iter().all(|x| *x >= 0.01 - 1e-15));
    }

    #[test]
    fn riverswim_shape_and_rewards() {
        let m = make_environment(EnvKind::Riverswim, 6, 5, 0, 0.0).unwrap();
        assert_eq!(m.num_actions(), 2);
        for s in 0..6 {
            for a in 0..2 {
                let sum: f64 = m.transitions().row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                let expect = match (s, a) {
                    (0, RIVERSWIM_LEFT) => 0.005,
                    (5, RIVERSWIM_RIGHT) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(m.reward(s, a), expect);
            }
        }
        assert_eq!(m.transitions().row(2, RIVERSWIM_RIGHT), &[0.0, 0.05, 0.6, 0.35, 0.0, 0.0]);
        assert_eq!(m.transitions().row(3, RIVERSWIM_LEFT), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_state_cycle_is_fixed() {
        let m = make_environment(EnvKind::TwoStateCycle, 7, 3, 99, 0.0).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_actions(), 3);
        for a in 0..3 {
            assert_eq!(m.transitions().row(0, a), &[0.0, 1.0]);
            assert_eq!(m.transitions().row(1, a), &[1.0, 0.0]);
            assert_eq!(m.reward(0, a), 1.0);
            assert_eq!(m.reward(1, a), 0.0);
        }
    }
}
