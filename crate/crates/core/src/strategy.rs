//! Post hoc query strategies: given a finished episode and the dataset
//! snapshot from the start of that episode, choose which visited states to
//! send to the expert.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::ExpertDataset;
use crate::error::{Error, Result};
use crate::mdp::{Action, Policy, State, Trajectory};
use crate::novelty::{self, NoveltyConfig, NoveltyIndex};
use crate::policy::MlpPolicy;
use crate::rng::Rng;

/// Strategy as written in an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategyConfig {
    /// Nearest-neighbour novelty gate with a conformally calibrated radius.
    Crsail {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_k")]
        k: usize,
        /// Skip calibration and use this radius directly.
        #[serde(default)]
        radius: Option<f64>,
    },
    Dagger,
    RandomRate {
        p: f64,
    },
    FixedThreshold {
        tau: f64,
        #[serde(default = "default_k")]
        k: usize,
    },
    EnsembleVariance {
        #[serde(default = "default_members")]
        members: usize,
        tau_doubt: f64,
    },
}

fn default_alpha() -> f64 {
    0.93
}

fn default_k() -> usize {
    5
}

fn default_members() -> usize {
    5
}

impl StrategyConfig {
    pub fn crsail(alpha: f64, k: usize) -> Self {
        StrategyConfig::Crsail { alpha, k, radius: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        match *self {
            StrategyConfig::Crsail { alpha, k, radius } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return bad("crsail alpha must lie in (0, 1)");
                }
                if k == 0 {
                    return bad("crsail K must be at least 1");
                }
                if radius.is_some_and(|r| r.is_nan()) {
                    return bad("crsail radius override must not be NaN");
                }
            }
            StrategyConfig::Dagger => {}
            StrategyConfig::RandomRate { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad("random-rate p must lie in [0, 1]");
                }
            }
            StrategyConfig::FixedThreshold { tau, k } => {
                if !(tau >= 0.0) {
                    return bad("fixed-threshold tau must be non-negative");
                }
                if k == 0 {
                    return bad("fixed-threshold K must be at least 1");
                }
            }
            StrategyConfig::EnsembleVariance { members, tau_doubt } => {
                if members < 2 {
                    return bad("ensemble needs at least 2 members");
                }
                if !(tau_doubt >= 0.0) {
                    return bad("tau_doubt must be non-negative");
                }
            }
        }
        Ok(())
    }

    /// Short label used to group runs in summaries.
    pub fn label(&self) -> String {
        match self {
            StrategyConfig::Crsail { alpha, k, radius: None } => format!("crsail(alpha={alpha},K={k})"),
            StrategyConfig::Crsail { k, radius: Some(r), .. } => format!("crsail(R={r},K={k})"),
            StrategyConfig::Dagger => "dagger".into(),
            StrategyConfig::RandomRate { p } => format!("random-rate(p={p})"),
            StrategyConfig::FixedThreshold { tau, k } => format!("fixed-threshold(tau={tau},K={k})"),
            StrategyConfig::EnsembleVariance { members, tau_doubt } => {
                format!("ensemble-variance(n={members},tau={tau_doubt})")
            }
        }
    }

    pub fn neighbour_order(&self) -> Option<usize> {
        match *self {
            StrategyConfig::Crsail { k, .. } | StrategyConfig::FixedThreshold { k, .. } => Some(k),
            _ => None,
        }
    }
}

/// Resolved query rule applied after each episode.
#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    /// Query `t` iff `s_K(x_t) > radius`.
    Crsail { radius: f64, k: usize },
    /// Query every visited state.
    Dagger,
    /// Query each step independently with probability `p`.
    RandomRate { p: f64 },
    /// Like `Crsail` but with a hand-set threshold.
    FixedThreshold { tau: f64, k: usize },
    /// Query where the ensemble's mean per-dimension action std exceeds `tau_doubt`.
    EnsembleVariance { tau_doubt: f64 },
}

/// Indices `S_i` selected for labelling, sorted ascending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuerySet {
    pub indices: Vec<usize>,
    /// Per-step gate statistic (novelty score or ensemble spread), when the
    /// strategy computes one.
    pub scores: Option<Vec<f64>>,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Inputs beyond the trajectory and dataset that some strategies need.
pub struct QueryAux<'a> {
    pub novelty: &'a NoveltyConfig,
    /// Snapshot of the dataset at episode start; rebuilt if absent or stale.
    pub index: Option<&'a NoveltyIndex>,
    pub ensemble: Option<&'a [MlpPolicy]>,
    pub rng: Option<&'a mut Rng>,
}

impl<'a> QueryAux<'a> {
    pub fn new(novelty: &'a NoveltyConfig) -> Self {
        Self {
            novelty,
            index: None,
            ensemble: None,
            rng: None,
        }
    }
}

/// Mean over action dimensions of the population std across members.
pub fn ensemble_spread(members: &[MlpPolicy], state: &State) -> f64 {
    let outs: Vec<Action> = members.iter().map(|m| m.act(state)).collect();
    let n = outs.len() as f64;
    let dims = outs[0].len();
    let total: f64 = (0..dims)
        .map(|j| {
            let mean = outs.iter().map(|o| o[j]).sum::<f64>() / n;
            (outs.iter().map(|o| (o[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .sum();
    total / dims as f64
}

fn novelty_scores(
    trajectory: &Trajectory,
    dataset: &ExpertDataset,
    k: usize,
    aux: &QueryAux<'_>,
) -> Result<Vec<f64>> {
    let visited = trajectory.visited();
    match aux.index {
        Some(idx) if idx.version() == dataset.len() => idx.score_batch(visited, k),
        _ => {
            let cfg = NoveltyConfig { k, ..aux.novelty.clone() };
            novelty::score_batch(visited, dataset, &cfg)
        }
    }
}

fn gate(scores: Vec<f64>, threshold: f64) -> QuerySet {
    let indices = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(t, _)| t)
        .collect();
    QuerySet {
        indices,
        scores: Some(scores),
    }
}

/// Choose `S_i` for a finished episode. Reads only the episode and the
/// dataset snapshot from its start.
pub fn select_queries(
    strategy: &Strategy,
    trajectory: &Trajectory,
    dataset: &ExpertDataset,
    aux: &mut QueryAux<'_>,
) -> Result<QuerySet> {
    let len = trajectory.len();
    match *strategy {
        Strategy::Dagger => Ok(QuerySet {
            indices: (0..len).collect(),
            scores: None,
        }),
        Strategy::Crsail { radius, k } => Ok(gate(novelty_scores(trajectory, dataset, k, aux)?, radius)),
        Strategy::FixedThreshold { tau, k } => Ok(gate(novelty_scores(trajectory, dataset, k, aux)?, tau)),
        Strategy::RandomRate { p } => {
            let rng = aux
                .rng
                .as_deref_mut()
                .ok_or_else(|| Error::Config("random-rate strategy needs an RNG stream".into()))?;
            let indices = (0..len).filter(|_| rng.random_bool(p)).collect();
            Ok(QuerySet { indices, scores: None })
        }
        Strategy::EnsembleVariance { tau_doubt } => {
            let members = aux
                .ensemble
                .filter(|m| m.len() >= 2)
                .ok_or_else(|| Error::Config("ensemble-variance strategy needs a trained ensemble".into()))?;
            let scores: Vec<f64> = trajectory
                .visited()
                .iter()
                .map(|x| ensemble_spread(members, x))
                .collect();
            Ok(gate(scores, tau_doubt))
        }
    }
}

/// One expert label per queried index, taken at the stored states.
pub fn label_queries(expert: &dyn Policy, trajectory: &Trajectory, queries: &QuerySet) -> Vec<(State, Action)> {
    queries
        .indices
        .iter()
        .map(|&t| {
            let x = trajectory.states[t].clone();
            let u = expert.act(&x);
            (x, u)
        })
        .collect()
}
