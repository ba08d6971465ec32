//! Cross-checks against independent reference computations.

use std::sync::Arc;

use qucrl::mdp::{
    bellman_error, gain_bias, make_environment, mixing_diagnostics, stationary_distribution, EnvKind, Mdp,
    Policy, TransitionTensor, RIVERSWIM_RIGHT,
};
use qucrl::model::{end_of_epoch_quantum_update, TransitionEstimate, VisitCounters};
use qucrl::planner::{extended_value_iteration, solve_known_model, solve_optimistic};
use qucrl::quantum::{error_bound, experiment_budget, oracle_step, EstimatorConfig, SampleBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain(mdp: &Mdp, policy: &Policy) -> Vec<f64> {
    mdp.transitions().under_policy(policy)
}

fn policy_rewards(mdp: &Mdp, policy: &Policy) -> Vec<f64> {
    let na = mdp.num_actions();
    (0..mdp.num_states())
        .map(|s| (0..na).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum())
        .collect()
}

/// Gaussian elimination with partial pivoting on a dense `n x n` system.
fn solve_dense(mut m: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        for k in 0..n {
            m.swap(col * n + k, piv * n + k);
        }
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row * n + row];
    }
    x
}

/// Discounted values `(I - g P) V = r` of a fixed policy.
fn discounted_values(p: &[f64], r: &[f64], g: f64) -> Vec<f64> {
    let n = r.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = if i == j { 1.0 } else { 0.0 } - g * p[i * n + j];
        }
    }
    solve_dense(m, r.to_vec())
}

#[test]
fn stationary_matches_power_iteration() {
    let mdp = make_environment(EnvKind::Riverswim, 6, 2, 0, 0.0).unwrap();
    let policy = Policy::deterministic(2, &[RIVERSWIM_RIGHT; 6]);
    let p = chain(&mdp, &policy);
    let mut x = vec![1.0 / 6.0; 6];
    loop {
        let next: Vec<f64> = (0..6).map(|j| (0..6).map(|i| x[i] * p[i * 6 + j]).sum()).collect();
        let residual: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if residual < 1e-12 {
            break;
        }
    }
    let rho = stationary_distribution(&mdp, &policy).unwrap();
    for s in 0..6 {
        let marginal = rho[s * 2] + rho[s * 2 + 1];
        assert!((marginal - x[s]).abs() < 1e-9, "state {s}: {marginal} vs {}", x[s]);
    }
}

#[test]
fn gain_and_bias_match_discounted_limit() {
    let g = 0.999999;
    let mdp = make_environment(EnvKind::RandomErgodic, 4, 2, 7, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut policies = vec![Policy::uniform(4, 2)];
    for _ in 0..4 {
        let acts: Vec<usize> = (0..4).map(|_| rng.gen_range(0..2)).collect();
        policies.push(Policy::deterministic(2, &acts));
    }
    for policy in &policies {
        let v = discounted_values(&chain(&mdp, policy), &policy_rewards(&mdp, policy), g);
        let gb = gain_bias(&mdp, policy).unwrap();
        assert!(((1.0 - g) * v[0] - gb.gain).abs() < 1e-4);
        for s in 0..4 {
            assert!(((v[s] - v[0]) - (gb.bias[s] - gb.bias[0])).abs() < 1e-3);
        }
        let rho = stationary_distribution(&mdp, policy).unwrap();
        let lambda: f64 = rho.iter().zip(mdp.rewards()).map(|(x, r)| x * r).sum();
        assert!((lambda - gb.gain).abs() < 1e-9);
    }
}

#[test]
fn bellman_error_matches_discounted_evaluation() {
    let g = 0.999999;
    let p = TransitionTensor::from_flat(2, 1, vec![0.9, 0.1, 0.3, 0.7]).unwrap();
    let pe = TransitionTensor::from_flat(2, 1, vec![0.6, 0.4, 0.5, 0.5]).unwrap();
    let mdp = Mdp::new(p, vec![1.0, 0.2]).unwrap();
    let policy = Policy::uniform(2, 1);
    let v = discounted_values(pe.as_flat(), mdp.rewards(), g);
    let b = bellman_error(&mdp, &pe, &policy).unwrap();
    for s in 0..2 {
        let want: f64 = (0..2)
            .map(|k| (pe.get(s, 0, k) - mdp.transitions().get(s, 0, k)) * (v[k] - v[0]))
            .sum();
        assert!((b[s] - want).abs() < 1e-4, "{} vs {want}", b[s]);
    }
}

#[test]
fn mixing_time_matches_rollouts() {
    let mdp = make_environment(EnvKind::Riverswim, 6, 2, 0, 0.0).unwrap();
    let diag = mixing_diagnostics(&mdp).unwrap();
    let (pol, idx) = diag
        .hitting_times
        .iter()
        .filter(|p| !p.flagged)
        .flat_map(|p| p.times.iter().enumerate().map(move |(i, &t)| (p, i, t)))
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(p, i, _)| (p, i))
        .unwrap();
    let (from, to) = (idx / 6, idx % 6);
    let policy = Policy::deterministic(2, &pol.actions);
    let p = chain(&mdp, &policy);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..n {
        let (mut s, mut steps) = (from, 0u64);
        while s != to {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut next = 5;
            for k in 0..6 {
                acc += p[s * 6 + k];
                if u < acc {
                    next = k;
                    break;
                }
            }
            s = next;
            steps += 1;
        }
        sum += steps as f64;
        sq += (steps * steps) as f64;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - diag.t_mix).abs() <= 3.0 * se, "mc {mean} +- {se} vs {}", diag.t_mix);
}

/// Relative value iteration, stopped on a span residual of `1e-10`.
fn relative_value_iteration(mdp: &Mdp) -> f64 {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut h = vec![0.0; ns];
    loop {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let row = mdp.transitions().row(s, a);
                        mdp.reward(s, a) + row.iter().zip(&h).map(|(p, v)| p * v).sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let diff: Vec<f64> = next.iter().zip(&h).map(|(a, b)| a - b).collect();
        let hi = diff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = diff.iter().cloned().fold(f64::INFINITY, f64::min);
        h = next.iter().map(|v| v - next[0]).collect();
        if hi - lo < 1e-10 {
            return 0.5 * (hi + lo);
        }
    }
}

#[test]
fn known_model_gain_matches_relative_value_iteration() {
    for mdp in [
        make_environment(EnvKind::Riverswim, 6, 2, 0, 0.0).unwrap(),
        make_environment(EnvKind::RandomErgodic, 5, 3, 2, 0.1).unwrap(),
    ] {
        let want = relative_value_iteration(&mdp);
        let got = solve_known_model(&mdp).unwrap().gain;
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = row.iter().sum();
    row.into_iter().map(|x| x / total).collect()
}

#[test]
fn optimistic_lp_beats_occupancy_grid() {
    // S = 2: a pair's next-state-1 probability ranges over an interval, and
    // rho is feasible iff its inflow to state 1 can match its outflow.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let mut flat = Vec::new();
        for _ in 0..4 {
            flat.extend(random_row(&mut rng, 2));
        }
        let p_hat = TransitionTensor::from_flat(2, 2, flat).unwrap();
        let rewards: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
        let radii: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..0.6)).collect();
        let lo: Vec<f64> = (0..4)
            .map(|j| (p_hat.get(j / 2, j % 2, 1) - radii[j] / 2.0).max(0.0))
            .collect();
        let hi: Vec<f64> = (0..4)
            .map(|j| (p_hat.get(j / 2, j % 2, 1) + radii[j] / 2.0).min(1.0))
            .collect();
        let steps = 200;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps - i {
                for k in 0..=steps - i - j {
                    let rho = [i, j, k, steps - i - j - k].map(|x| x as f64 / steps as f64);
                    let out1 = rho[2] + rho[3];
                    let in_lo: f64 = (0..4).map(|m| rho[m] * lo[m]).sum();
                    let in_hi: f64 = (0..4).map(|m| rho[m] * hi[m]).sum();
                    if out1 >= in_lo - 1e-12 && out1 <= in_hi + 1e-12 {
                        best = best.max(rho.iter().zip(&rewards).map(|(x, r)| x * r).sum());
                    }
                }
            }
        }
        let plan = solve_optimistic(&rewards, &p_hat, &radii).unwrap();
        assert!(plan.value >= best - 0.01, "{} vs grid {best}", plan.value);
        assert!(plan.value <= best + 0.01, "{} vs grid {best}", plan.value);
    }
}

#[test]
fn optimistic_lp_matches_extended_value_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (ns, na) in [(3, 2), (4, 2), (4, 3)] {
        let mut flat = Vec::new();
        for _ in 0..ns * na {
            flat.extend(random_row(&mut rng, ns));
        }
        let p_hat = TransitionTensor::from_flat(ns, na, flat).unwrap();
        let rewards: Vec<f64> = (0..ns * na).map(|_| rng.gen()).collect();
        let radii: Vec<f64> = (0..ns * na).map(|_| rng.gen_range(0.05..0.5)).collect();
        let plan = solve_optimistic(&rewards, &p_hat, &radii).unwrap();
        let evi = extended_value_iteration(&rewards, &p_hat, &radii);
        assert!((plan.value - evi.gain).abs() < 1e-6, "{} vs {}", plan.value, evi.gain);
    }
}

#[test]
fn oracle_frequencies_converge() {
    let env = Arc::new(make_environment(EnvKind::Riverswim, 6, 2, 0, 0.0).unwrap());
    let mut buf = SampleBuffer::new(6, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 100_000;
    let mut counts = [0u64; 6];
    for t in 0..n {
        let out = oracle_step(&env, 2, RIVERSWIM_RIGHT, t, &mut rng, &mut buf).unwrap();
        counts[out.next_state] += 1;
        assert_eq!(out.reward, env.reward(2, RIVERSWIM_RIGHT));
    }
    assert_eq!(buf.total(), n as usize);
    for (k, &c) in counts.iter().enumerate() {
        let p = env.transitions().get(2, RIVERSWIM_RIGHT, k);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((c as f64 / n as f64 - p).abs() <= 4.5 * sd + 1e-15, "state {k}");
    }
}

#[test]
fn running_estimate_stays_within_accumulated_bound() {
    // Reference recursion: after an applied update the error is at most
    // `w_hat * previous + w_tilde * b` per coordinate, where a first update
    // carries `b` alone.
    let env = Arc::new(make_environment(EnvKind::RandomErgodic, 4, 1, 9, 0.1).unwrap());
    let cfg = EstimatorConfig::default();
    let horizon = 100_000;
    let delta = 0.01;
    let truth = env.transitions().row(0, 0).to_vec();
    let trials = 300;
    let epochs = 9;
    let mut violations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..trials {
        let mut counters = VisitCounters::new(4, 1);
        let mut estimate = TransitionEstimate::zeros(4, 1);
        let mut buf = SampleBuffer::new(4, 1);
        let mut bound: Option<f64> = None;
        let mut ok = true;
        for e in 1..=epochs {
            let nu = counters.prior(0, 0).max(1) * if e == 1 { 128 } else { 1 };
            for k in 0..nu {
                let out = oracle_step(&env, 0, 0, k, &mut rng, &mut buf).unwrap();
                counters.record_visit(0, 0, out.next_state);
            }
            let ups = end_of_epoch_quantum_update(
                &mut estimate, &counters, &mut buf, e, horizon, delta, &cfg, true, &mut rng,
            )
            .unwrap();
            let up = &ups[0];
            if up.applied {
                let n = experiment_budget(nu, horizon, 4, &cfg).unwrap();
                let b = error_bound(n, up.delta, 4, cfg.l2);
                let big_n = counters.prior(0, 0) as f64;
                bound = Some(match bound {
                    None => b,
                    Some(prev) => (big_n * prev + nu as f64 * b) / (big_n + nu as f64),
                });
            }
            counters.roll_epoch();
            buf.advance_epoch();
            if let Some(limit) = bound {
                let err = estimate
                    .row(0, 0)
                    .iter()
                    .zip(&truth)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                ok &= err <= limit + 1e-12;
            }
        }
        if !ok {
            violations += 1;
        }
    }
    let budget = epochs as f64 * delta;
    let rate = violations as f64 / trials as f64;
    assert!(rate <= budget + 3.0 * (budget / trials as f64).sqrt(), "rate {rate}");
}
