use serde::Serialize;

use crate::agent::StepRecord;
use crate::error::{Error, Result};

/// Fewest points accepted by [`fit_slope`].
pub const MIN_FIT_POINTS: usize = 10;

/// Cumulative reward and regret `R_t = t G* - sum_{u <= t} r_u`, indexed by
/// `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretSeries {
    pub t: Vec<u64>,
    pub cum_reward: Vec<f64>,
    pub regret: Vec<f64>,
}

impl RegretSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }
}

/// Running regret bookkeeping shared by the batch and streaming paths.
#[derive(Debug, Clone, Copy)]
pub struct RegretTracker {
    gamma_star: f64,
    t: u64,
    cum_reward: f64,
}

impl RegretTracker {
    pub fn new(gamma_star: f64) -> Self {
        Self {
            gamma_star,
            t: 0,
            cum_reward: 0.0,
        }
    }

    pub fn push(&mut self, reward: f64) {
        self.t += 1;
        self.cum_reward += reward;
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn cum_reward(&self) -> f64 {
        self.cum_reward
    }

    pub fn regret(&self) -> f64 {
        self.t as f64 * self.gamma_star - self.cum_reward
    }
}

/// Regret of the first `horizon` records against `gamma_star`.
pub fn compute_regret(records: &[StepRecord], gamma_star: f64, horizon: u64) -> Result<RegretSeries> {
    if (records.len() as u64) < horizon {
        return Err(Error::MismatchedHorizon {
            got: records.len(),
            want: horizon as usize,
        });
    }
    let n = horizon as usize + 1;
    let mut series = RegretSeries {
        t: Vec::with_capacity(n),
        cum_reward: Vec::with_capacity(n),
        regret: Vec::with_capacity(n),
    };
    let mut tracker = RegretTracker::new(gamma_star);
    series.t.push(0);
    series.cum_reward.push(0.0);
    series.regret.push(0.0);
    for r in &records[..horizon as usize] {
        tracker.push(r.reward);
        series.t.push(tracker.t());
        series.cum_reward.push(tracker.cum_reward());
        series.regret.push(tracker.regret());
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares line through `(ln t, ln(R_t + 1))` for `t` in `[lo, hi]`.
pub fn fit_slope(t: &[u64], regret: &[f64], lo: u64, hi: u64) -> Result<SlopeFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(regret)
        .filter(|(&t, _)| t >= lo && t <= hi && t > 0)
        .map(|(&t, &r)| ((t as f64).ln(), (r.max(0.0) + 1.0).ln()))
        .unzip();
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::DegenerateWindow(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateWindow(n));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: n,
    })
}
