//! Split-conformal calibration of the query radius.
//!
//! The frozen initial policy is rolled out without expert labels, every
//! visited state is scored against the initial expert dataset, and the radius
//! is the `m`-th order statistic of those scores with
//! `m = ceil((N_cal + 1)(1 - alpha))`. No interpolation: the radius is always
//! one of the observed scores.

use serde::{Deserialize, Serialize};

use crate::dataset::ExpertDataset;
use crate::error::{Error, Result};
use crate::mdp::{rollout, Environment, Policy, State};
use crate::novelty::{self, NoveltyConfig};
use crate::rng;

/// Unlabelled on-policy states `x_0 .. x_{L-1}` pooled over `M_cal` episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSet {
    pub states: Vec<State>,
    pub episode_lengths: Vec<usize>,
    pub source: String,
}

impl CalibrationSet {
    pub fn n_cal(&self) -> usize {
        self.states.len()
    }

    pub fn m_cal(&self) -> usize {
        self.episode_lengths.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedThreshold {
    /// Query radius `R`.
    pub radius: f64,
    pub alpha: f64,
    /// 1-based rank of the order statistic.
    pub m: usize,
    pub n_cal: usize,
}

/// `ceil((n + 1)(1 - alpha))`, robust to the rounding error in `1 - alpha`.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    // a product that should be an exact integer can land a few ulps above it
    let rank = (x - 1e-9 * x.max(1.0)).ceil();
    (rank.max(1.0)) as usize
}

/// Finite-sample conformal quantile of `scores` at miscoverage `alpha`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<CalibratedThreshold> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = scores.len();
    if n == 0 {
        return Err(Error::InfeasibleCalibration { m: 1, n_cal: 0, alpha });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NumericalFailure {
            step: 0,
            quantity: "calibration score",
        });
    }
    let m = quantile_rank(n, alpha);
    if m > n {
        return Err(Error::InfeasibleCalibration { m, n_cal: n, alpha });
    }
    let mut sorted = scores.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(m - 1, f64::total_cmp);
    Ok(CalibratedThreshold {
        radius: *kth,
        alpha,
        m,
        n_cal: n,
    })
}

/// Roll out the frozen policy for `m_cal` episodes and pool the visited
/// non-final states. Episode `e` uses the seed derived from
/// `(seed, CALIBRATION, e)`.
pub fn collect_calibration(
    env: &dyn Environment,
    policy: &dyn Policy,
    m_cal: usize,
    seed: u64,
) -> Result<CalibrationSet> {
    if m_cal == 0 {
        return Err(Error::Config("M_cal must be at least 1".into()));
    }
    let mut states = Vec::new();
    let mut episode_lengths = Vec::with_capacity(m_cal);
    for e in 0..m_cal {
        let traj = rollout(env, policy, rng::derive_seed(seed, rng::stream::CALIBRATION, e as u64))?;
        episode_lengths.push(traj.len());
        states.extend_from_slice(traj.visited());
    }
    Ok(CalibrationSet {
        states,
        episode_lengths,
        source: "initial-policy".into(),
    })
}

/// Calibrate once: collect on-policy states, score them against the
/// initial dataset, take the conformal quantile.
pub fn calibrate_radius(
    env: &dyn Environment,
    initial_policy: &dyn Policy,
    initial_dataset: &ExpertDataset,
    config: &NoveltyConfig,
    alpha: f64,
    m_cal: usize,
    seed: u64,
) -> Result<(CalibratedThreshold, CalibrationSet)> {
    config.validate()?;
    if initial_dataset.len() < config.k {
        return Err(Error::InsufficientData {
            have: initial_dataset.len(),
            need: config.k,
        });
    }
    let cal = collect_calibration(env, initial_policy, m_cal, seed)?;
    let scores = novelty::score_batch(&cal.states, initial_dataset, config)?;
    let threshold = conformal_quantile(&scores, alpha)?;
    Ok((threshold, cal))
}
