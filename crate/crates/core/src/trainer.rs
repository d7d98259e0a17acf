//! The active imitation training loop.
//!
//! Each iteration rolls out the current learner, picks query indices post
//! hoc, labels them with the expert, aggregates them into the dataset
//! (multiset union), warm-starts an update of the learner and evaluates it.
//! Budgets are checked only on loop entry, so the episode that crosses a
//! budget is completed and fully counted.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conformal::{self, CalibratedThreshold};
use crate::dataset::ExpertDataset;
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, rollout, Environment, Policy};
use crate::novelty::{self, NoveltyConfig};
use crate::policy::{self, MlpPolicy, PolicyParams, TrainConfig};
use crate::rng::{self, stream, Rng};
use crate::strategy::{label_queries, select_queries, QueryAux, Strategy, StrategyConfig};

/// Query budget `B` and step budget `T_train`; `None` is unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub queries: Option<u64>,
    pub steps: Option<u64>,
}

impl Budget {
    pub fn steps(t_train: u64) -> Self {
        Self {
            queries: None,
            steps: Some(t_train),
        }
    }

    pub fn queries(b: u64) -> Self {
        Self {
            queries: Some(b),
            steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries.is_none() && self.steps.is_none() {
            return Err(Error::Config("at least one of the query and step budgets must be finite".into()));
        }
        Ok(())
    }

    /// The loop's entry condition: `t < T_train and q < B`.
    pub fn allows(&self, steps: u64, queries: u64) -> bool {
        self.steps.is_none_or(|t| steps < t) && self.queries.is_none_or(|b| queries < b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    StepBudget,
    QueryBudget,
    /// Safety cap on iterations, for query-only budgets that may never be spent.
    EpisodeCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Episode length `L_i`.
    pub length: usize,
    /// `|S_i|`.
    pub queries: usize,
    pub steps_cum: u64,
    pub queries_cum: u64,
    pub dataset_size: usize,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub converged: bool,
    /// Radius in force during this episode (novelty gates only).
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Mean gate statistic over the episode, when the strategy computes one.
    #[serde(default)]
    pub mean_score: Option<f64>,
    pub wall_ms: f64,
}

/// Expert-level rule: `eval >= expert - 0.05 |expert|`. For positive expert
/// returns this is "at least 95% of the expert".
pub fn meets_expert_level(eval_mean: f64, expert_mean: f64) -> bool {
    eval_mean >= expert_mean - 0.05 * expert_mean.abs()
}

/// Cumulative queries at the first episode whose evaluation reaches expert
/// level, or `None` if it never does.
pub fn queries_to_expert(series: &[EpisodeMetrics], expert_mean: f64) -> Option<u64> {
    series
        .iter()
        .find(|m| meets_expert_level(m.eval_mean, expert_mean))
        .map(|m| m.queries_cum)
}

/// Concatenate whole expert episodes until at least `m` pairs are collected,
/// then freeze the dataset's standardiser. Episode `e` uses the seed derived
/// from `(seed, EXPERT_DATA, e)`.
pub fn build_initial_dataset(env: &dyn Environment, expert: &dyn Policy, m: usize, seed: u64) -> Result<ExpertDataset> {
    if m == 0 {
        return Err(Error::Config("initial dataset size M must be at least 1".into()));
    }
    let mut data = ExpertDataset::new(env.state_dim(), env.action_dim());
    let mut e = 0u64;
    while data.len() < m {
        let traj = rollout(env, expert, rng::derive_seed(seed, stream::EXPERT_DATA, e))?;
        for (x, u) in traj.visited().iter().zip(&traj.actions) {
            data.push(x, u)?;
        }
        e += 1;
    }
    data.freeze_standardizer();
    Ok(data)
}

/// Everything [`train`] needs besides the initial learner and dataset.
pub struct TrainSetup<'a> {
    pub env: &'a dyn Environment,
    pub expert: &'a dyn Policy,
    pub strategy: &'a StrategyConfig,
    /// Required for `crsail` unless the strategy carries a radius override.
    pub threshold: Option<&'a CalibratedThreshold>,
    pub novelty: &'a NoveltyConfig,
    pub train: &'a TrainConfig,
    pub budget: Budget,
    pub eval_episodes: usize,
    /// Seed of the fixed evaluation episode set.
    pub eval_seed: u64,
    /// Expert evaluation mean, for the per-episode converged flag.
    pub expert_mean: f64,
    /// Re-run calibration with the current learner every this many episodes.
    pub recalibrate_every: Option<usize>,
    pub m_cal: usize,
    pub max_episodes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: MlpPolicy,
    pub dataset: ExpertDataset,
    pub episodes: Vec<EpisodeMetrics>,
    pub total_steps: u64,
    pub total_queries: u64,
    pub stop: StopReason,
}

fn resolve_strategy(setup: &TrainSetup<'_>) -> Result<Strategy> {
    setup.strategy.validate()?;
    Ok(match *setup.strategy {
        StrategyConfig::Crsail { k, radius, .. } => {
            let radius = match (radius, setup.threshold) {
                (Some(r), _) => r,
                (None, Some(t)) => t.radius,
                (None, None) => {
                    return Err(Error::Config(
                        "crsail needs a calibrated threshold (or a radius override) before training".into(),
                    ))
                }
            };
            Strategy::Crsail { radius, k }
        }
        StrategyConfig::Dagger => Strategy::Dagger,
        StrategyConfig::RandomRate { p } => Strategy::RandomRate { p },
        StrategyConfig::FixedThreshold { tau, k } => Strategy::FixedThreshold { tau, k },
        StrategyConfig::EnsembleVariance { tau_doubt, .. } => Strategy::EnsembleVariance { tau_doubt },
    })
}

fn bootstrap(dataset: &ExpertDataset, rng: &mut Rng) -> Result<ExpertDataset> {
    let mut out = ExpertDataset::new(dataset.state_dim(), dataset.action_dim());
    for _ in 0..dataset.len() {
        let i = rng.random_range(0..dataset.len());
        out.push(dataset.state(i), dataset.action(i))?;
    }
    out.set_standardizer(dataset.standardizer().clone());
    Ok(out)
}

/// Bootstrap-trained policy ensemble for the variance gate.
struct Ensemble {
    members: Vec<MlpPolicy>,
    rng: Rng,
}

impl Ensemble {
    fn fit(size: usize, dataset: &ExpertDataset, config: &TrainConfig, seed: u64) -> Result<Self> {
        let mut rng = rng::derive_rng(seed, stream::ENSEMBLE, 0);
        let mut members = Vec::with_capacity(size);
        for _ in 0..size {
            let sample = bootstrap(dataset, &mut rng)?;
            let params = policy::behavioral_cloning_with(&sample, config, &mut rng)?;
            members.push(MlpPolicy::new(params, dataset.standardizer().clone()));
        }
        Ok(Self { members, rng })
    }

    fn update(&mut self, dataset: &ExpertDataset, config: &TrainConfig) -> Result<()> {
        for m in &mut self.members {
            let sample = bootstrap(dataset, &mut self.rng)?;
            m.params = policy::update(&m.params, &sample, config, &mut self.rng)?;
        }
        Ok(())
    }
}

/// Run the training loop from `initial` (the behavioural-cloning fit) on
/// `dataset` (the initial expert data, standardiser frozen).
pub fn train(setup: &TrainSetup<'_>, initial: PolicyParams, mut dataset: ExpertDataset) -> Result<TrainOutcome> {
    setup.budget.validate()?;
    setup.train.validate()?;
    setup.novelty.validate()?;
    let mut strategy = resolve_strategy(setup)?;
    let standardizer = dataset.standardizer().clone();
    let mut learner = MlpPolicy::new(initial, standardizer);
    let mut sgd_rng = rng::derive_rng(setup.train.seed, stream::SGD, 1);
    let mut gate_rng = rng::derive_rng(setup.seed, stream::RANDOM_RATE, 0);
    let mut ensemble = match *setup.strategy {
        StrategyConfig::EnsembleVariance { members, .. } => {
            Some(Ensemble::fit(members, &dataset, setup.train, setup.seed)?)
        }
        _ => None,
    };
    let alpha = match *setup.strategy {
        StrategyConfig::Crsail { alpha, radius: None, .. } => Some(alpha),
        _ => None,
    };

    let mut episodes = Vec::new();
    let (mut steps, mut queries) = (0u64, 0u64);
    let mut i = 0usize;
    let stop = loop {
        if !setup.budget.allows(steps, queries) {
            break if setup.budget.steps.is_some_and(|t| steps >= t) {
                StopReason::StepBudget
            } else {
                StopReason::QueryBudget
            };
        }
        if i >= setup.max_episodes {
            break StopReason::EpisodeCap;
        }
        let started = Instant::now();
        let mut iteration = || -> Result<EpisodeMetrics> {
            if let (Some(every), Strategy::Crsail { k, .. }, Some(alpha)) = (setup.recalibrate_every, &strategy, alpha) {
                if every > 0 && i > 0 && i.is_multiple_of(every) {
                    let cfg = NoveltyConfig { k: *k, ..setup.novelty.clone() };
                    let seed = rng::derive_seed(setup.seed, stream::CALIBRATION, i as u64);
                    let (t, _) = conformal::calibrate_radius(setup.env, &learner, &dataset, &cfg, alpha, setup.m_cal, seed)?;
                    strategy = Strategy::Crsail { radius: t.radius, k: *k };
                }
            }
            let traj = rollout(setup.env, &learner, rng::derive_seed(setup.seed, stream::TRAIN_ROLLOUT, i as u64))?;
            let index = match strategy {
                Strategy::Crsail { k, .. } | Strategy::FixedThreshold { k, .. } => {
                    Some(novelty::rebuild_index(&dataset, &NoveltyConfig { k, ..setup.novelty.clone() })?)
                }
                _ => None,
            };
            let mut aux = QueryAux::new(setup.novelty);
            aux.index = index.as_ref();
            aux.ensemble = ensemble.as_ref().map(|e| e.members.as_slice());
            aux.rng = Some(&mut gate_rng);
            let selected = select_queries(&strategy, &traj, &dataset, &mut aux)?;
            let labels = label_queries(setup.expert, &traj, &selected);
            dataset.extend_pairs(&labels)?;
            learner.params = policy::update(&learner.params, &dataset, setup.train, &mut sgd_rng)?;
            if let Some(e) = ensemble.as_mut() {
                e.update(&dataset, setup.train)?;
            }
            steps += traj.len() as u64;
            queries += labels.len() as u64;
            let eval = evaluate_policy(setup.env, &learner, setup.eval_episodes, setup.eval_seed)?;
            let radius = match strategy {
                Strategy::Crsail { radius, .. } => Some(radius),
                Strategy::FixedThreshold { tau, .. } => Some(tau),
                _ => None,
            };
            let mean_score = selected
                .scores
                .as_ref()
                .filter(|s| !s.is_empty())
                .map(|s| s.iter().sum::<f64>() / s.len() as f64);
            Ok(EpisodeMetrics {
                episode: i,
                length: traj.len(),
                queries: labels.len(),
                steps_cum: steps,
                queries_cum: queries,
                dataset_size: dataset.len(),
                eval_mean: eval.mean,
                eval_std: eval.std,
                converged: meets_expert_level(eval.mean, setup.expert_mean),
                radius,
                alpha,
                mean_score,
                wall_ms: 0.0,
            })
        };
        let mut metrics = iteration().map_err(|e| e.at_iteration(i))?;
        metrics.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        episodes.push(metrics);
        i += 1;
    };
    Ok(TrainOutcome {
        policy: learner,
        dataset,
        episodes,
        total_steps: steps,
        total_queries: queries,
        stop,
    })
}
