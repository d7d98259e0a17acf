//! Running experiment grids: one training run per `(M, seed)` cell.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::record::{RunRecord, RunSummary};
use crate::conformal;
use crate::error::{Error, Result};
use crate::mdp::evaluate_policy;
use crate::policy::{self, MlpPolicy};
use crate::rng::{self, stream};
use crate::strategy::StrategyConfig;
use crate::trainer::{self, build_initial_dataset, TrainSetup};

/// Seed of the fixed evaluation episode set for a run.
pub fn eval_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, stream::EXPERT_EVAL, 0)
}

/// Build the initial dataset, clone the expert, calibrate if needed and train.
pub fn run_single(config: &ExperimentConfig, m: usize, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    let env = config.env.build();
    let expert = config.env.expert();
    let dataset = build_initial_dataset(env.as_ref(), expert.as_ref(), m, seed)?;

    let mut train_cfg = config.train.clone();
    train_cfg.seed = rng::derive_seed(seed, stream::SGD, config.train.seed);
    let bc = policy::behavioral_cloning(&dataset, &train_cfg)?;
    let bc_policy = MlpPolicy::new(bc.clone(), dataset.standardizer().clone());

    let eval_seed = eval_seed(seed);
    let n_eval = config.experiment.eval_episodes;
    let expert_eval = evaluate_policy(env.as_ref(), expert.as_ref(), n_eval, eval_seed)?;
    let initial_eval = evaluate_policy(env.as_ref(), &bc_policy, n_eval, eval_seed)?;

    let novelty = config.novelty_config();
    let (threshold, calibration) = match config.strategy {
        StrategyConfig::Crsail { alpha, radius: None, .. } => {
            let (t, cal) = conformal::calibrate_radius(
                env.as_ref(),
                &bc_policy,
                &dataset,
                &novelty,
                alpha,
                config.experiment.m_cal,
                seed,
            )?;
            (Some(t), Some(cal))
        }
        _ => (None, None),
    };

    let mut notes = Vec::new();
    if let StrategyConfig::EnsembleVariance { .. } = config.strategy {
        notes.push("ensemble gate uses the doubt threshold only (no agreement threshold)".to_string());
    }
    if config.experiment.recalibrate_every.is_some() {
        notes.push("radius recalibrated periodically during training".to_string());
    }

    let setup = TrainSetup {
        env: env.as_ref(),
        expert: expert.as_ref(),
        strategy: &config.strategy,
        threshold: threshold.as_ref(),
        novelty: &novelty,
        train: &train_cfg,
        budget: config.budget(),
        eval_episodes: n_eval,
        eval_seed,
        expert_mean: expert_eval.mean,
        recalibrate_every: config.experiment.recalibrate_every,
        m_cal: config.experiment.m_cal,
        max_episodes: config.experiment.max_episodes,
        seed,
    };
    let initial_size = dataset.len();
    let outcome = trainer::train(&setup, bc, dataset)?;
    let summary = RunSummary::compute(&outcome.episodes, expert_eval.mean, initial_eval.mean);
    Ok(RunRecord {
        label: config.label(),
        env: config.env.kind,
        m,
        seed,
        config: config.clone(),
        threshold,
        calibration_episode_lengths: calibration.map(|c| c.episode_lengths),
        initial_dataset_size: initial_size,
        final_dataset_size: outcome.dataset.len(),
        standardized: novelty.standardize,
        expert_eval,
        initial_eval,
        stop: outcome.stop,
        notes,
        episodes: outcome.episodes,
        summary,
    })
}

#[derive(Debug)]
pub struct RunFailure {
    pub m: usize,
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Run every `(M, seed)` cell of the grid in parallel (up to
/// `experiment.workers` at a time). Results are returned in grid order;
/// failed cells are reported, not fatal.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let cells: Vec<(usize, u64)> = config
        .experiment
        .m
        .iter()
        .flat_map(|&m| config.experiment.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.experiment.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunRecord>> =
        pool.install(|| cells.par_iter().map(|&(m, s)| run_single(config, m, s)).collect());
    let mut report = RunReport::default();
    for ((m, seed), r) in cells.into_iter().zip(results) {
        match r {
            Ok(rec) => report.records.push(rec),
            Err(error) => report.failures.push(RunFailure { m, seed, error }),
        }
    }
    Ok(report)
}

/// Run the grid and write each record under `dir`.
pub fn run_and_write(config: &ExperimentConfig, dir: &Path) -> Result<RunReport> {
    let report = run(config)?;
    for rec in &report.records {
        rec.write(dir)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepValues {
    Alpha(Vec<f64>),
    K(Vec<usize>),
    M(Vec<usize>),
}

/// One config per swept value, with a subdirectory name for its outputs.
pub fn sweep_configs(base: &ExperimentConfig, values: &SweepValues) -> Result<Vec<(String, ExperimentConfig)>> {
    let with_strategy = |f: &dyn Fn(&mut StrategyConfig) -> bool| -> Result<ExperimentConfig> {
        let mut c = base.clone();
        if !f(&mut c.strategy) {
            return Err(Error::Config(format!(
                "strategy `{}` has no such sweep parameter",
                base.strategy.label()
            )));
        }
        c.validate()?;
        Ok(c)
    };
    match values {
        SweepValues::Alpha(alphas) => alphas
            .iter()
            .map(|&a| {
                let c = with_strategy(&|s| match s {
                    StrategyConfig::Crsail { alpha, radius: None, .. } => {
                        *alpha = a;
                        true
                    }
                    _ => false,
                })?;
                Ok((format!("alpha={a}"), c))
            })
            .collect(),
        SweepValues::K(ks) => ks
            .iter()
            .map(|&kv| {
                let c = with_strategy(&|s| match s {
                    StrategyConfig::Crsail { k, .. } | StrategyConfig::FixedThreshold { k, .. } => {
                        *k = kv;
                        true
                    }
                    _ => false,
                })?;
                Ok((format!("K={kv}"), c))
            })
            .collect(),
        SweepValues::M(ms) => ms
            .iter()
            .map(|&m| {
                let mut c = base.clone();
                c.experiment.m = vec![m];
                c.validate()?;
                Ok((format!("M={m}"), c))
            })
            .collect(),
    }
}

/// Run each sweep point into `dir/<point>/`.
pub fn sweep(base: &ExperimentConfig, values: &SweepValues, dir: &Path) -> Result<Vec<(PathBuf, RunReport)>> {
    sweep_configs(base, values)?
        .into_iter()
        .map(|(name, cfg)| {
            let sub = dir.join(name);
            run_and_write(&cfg, &sub).map(|r| (sub, r))
        })
        .collect()
}
