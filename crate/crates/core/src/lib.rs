//! Active imitation learning with nearest-neighbour novelty gating.
//!
//! A learner is rolled out for whole episodes; afterwards only the visited
//! states whose distance to the K-th nearest expert-labelled state exceeds a
//! radius `R` are sent to the expert. `R` is set once, before training, as a
//! finite-sample conformal quantile of the initial policy's on-policy scores,
//! so the miscoverage level `alpha` acts as a nominal query rate.
//!
//! Module map:
//!
//! - [`mdp`]: environment/policy traits, rollout, evaluation
//! - [`env`]: pendulum, pusher and double-integrator tasks with scripted experts
//! - [`policy`]: one-hidden-layer MLP, backprop, behavioural cloning, updates
//! - [`dataset`] / [`novelty`]: the expert multiset and the K-NN score
//! - [`conformal`]: radius calibration
//! - [`strategy`]: novelty gate, DAgger and baseline query rules
//! - [`trainer`]: the training loop and budgets
//! - [`harness`]: experiment configs, run records, summaries, plot data

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod dataset;
pub mod env;
pub mod error;
pub mod harness;
pub mod kdtree;
pub mod mdp;
pub mod novelty;
pub mod policy;
pub mod rng;
pub mod strategy;
pub mod trainer;

pub use conformal::{calibrate_radius, collect_calibration, conformal_quantile, CalibratedThreshold, CalibrationSet};
pub use dataset::{ExpertDataset, Standardizer};
pub use env::{expert_action, EnvConfig, EnvKind};
pub use error::{Error, Result};
pub use mdp::{evaluate_policy, rollout, Action, EnvStep, Environment, EvalStats, Policy, State, Trajectory};
pub use novelty::{rebuild_index, score_batch, score_sk, Backend, NoveltyConfig, NoveltyIndex};
pub use policy::{behavioral_cloning, loss_and_grad, policy_act, update, MlpPolicy, PolicyParams, TrainConfig};
pub use strategy::{label_queries, select_queries, QuerySet, Strategy, StrategyConfig};
pub use trainer::{build_initial_dataset, queries_to_expert, train, Budget, EpisodeMetrics, TrainOutcome, TrainSetup};
