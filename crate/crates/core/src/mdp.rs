//! Environment and policy abstractions, episode rollout and evaluation.
//!
//! An episode starts at a seeded draw from the environment's initial-state
//! distribution and runs until the first terminal state or the horizon
//! `T_max`, whichever comes first. Rewards are carried along for evaluation
//! only; nothing in the learning or querying path reads them.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

macro_rules! real_vector {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(dim: usize) -> Self {
                Self(vec![0.0; dim])
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl AsRef<[f64]> for $name {
            fn as_ref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                Self(values)
            }
        }

        impl<const N: usize> From<[f64; N]> for $name {
            fn from(values: [f64; N]) -> Self {
                Self(values.to_vec())
            }
        }
    };
}

real_vector!(State);
real_vector!(Action);

/// Result of a single environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub next_state: State,
    pub reward: f64,
    pub terminal: bool,
}

pub trait Environment: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Episode horizon `T_max`.
    fn max_steps(&self) -> usize;
    fn initial_state(&self, rng: &mut Rng) -> State;
    /// Project an action onto the admissible action set.
    fn clip_action(&self, action: Action) -> Action;
    /// Apply an (already clipped) action.
    fn step(&self, state: &State, action: &Action) -> EnvStep;
}

/// Deterministic state-feedback policy.
pub trait Policy: Send + Sync {
    fn act(&self, state: &State) -> Action;

    /// Expected state dimension, if the policy is tied to one.
    fn state_dim(&self) -> Option<usize> {
        None
    }

    fn action_dim(&self) -> Option<usize> {
        None
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, state: &State) -> Action {
        (**self).act(state)
    }

    fn state_dim(&self) -> Option<usize> {
        (**self).state_dim()
    }

    fn action_dim(&self) -> Option<usize> {
        (**self).action_dim()
    }
}

/// One episode: `states.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    /// Whether the final state is terminal (as opposed to hitting `T_max`).
    pub terminated: bool,
}

impl Trajectory {
    /// Episode length `L`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Visited non-final states `x_0 .. x_{L-1}`.
    pub fn visited(&self) -> &[State] {
        &self.states[..self.len()]
    }
}

fn check_dims(env: &dyn Environment, policy: &dyn Policy) -> Result<()> {
    if let Some(d) = policy.state_dim() {
        if d != env.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.state_dim(),
                got: d,
            });
        }
    }
    if let Some(d) = policy.action_dim() {
        if d != env.action_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.action_dim(),
                got: d,
            });
        }
    }
    Ok(())
}

/// Roll out `policy` from a seeded initial-state draw.
pub fn rollout(env: &dyn Environment, policy: &dyn Policy, seed: u64) -> Result<Trajectory> {
    let mut rng = rng::rng_from_seed(seed);
    let x0 = env.initial_state(&mut rng);
    rollout_from(env, policy, x0)
}

/// Roll out `policy` from a given initial state.
pub fn rollout_from(env: &dyn Environment, policy: &dyn Policy, x0: State) -> Result<Trajectory> {
    check_dims(env, policy)?;
    if x0.len() != env.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.state_dim(),
            got: x0.len(),
        });
    }
    if !x0.is_finite() {
        return Err(Error::NumericalFailure {
            step: 0,
            quantity: "state",
        });
    }
    let horizon = env.max_steps();
    if horizon == 0 {
        return Err(Error::Config("T_max must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    states.push(x0);
    let mut terminated = false;
    for t in 0..horizon {
        let x = &states[t];
        let raw = policy.act(x);
        if raw.len() != env.action_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.action_dim(),
                got: raw.len(),
            });
        }
        if !raw.is_finite() {
            return Err(Error::NumericalFailure {
                step: t,
                quantity: "action",
            });
        }
        let u = env.clip_action(raw);
        let step = env.step(x, &u);
        if !step.next_state.is_finite() {
            return Err(Error::NumericalFailure {
                step: t,
                quantity: "state",
            });
        }
        actions.push(u);
        rewards.push(step.reward);
        states.push(step.next_state);
        if step.terminal {
            terminated = true;
            break;
        }
    }
    Ok(Trajectory {
        states,
        actions,
        rewards,
        terminated,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean: f64,
    /// Population standard deviation of episode returns.
    pub std: f64,
}

impl EvalStats {
    pub fn from_returns(returns: &[f64]) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Mean and standard deviation of undiscounted returns over `n_episodes`
/// rollouts. Episode `j` uses the seed derived from `(seed, EVAL, j)`.
pub fn evaluate_policy(
    env: &dyn Environment,
    policy: &dyn Policy,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be at least 1".into()));
    }
    let returns = (0..n_episodes)
        .map(|j| {
            rollout(env, policy, rng::derive_seed(seed, rng::stream::EVAL, j as u64))
                .map(|traj| traj.total_reward())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalStats::from_returns(&returns))
}

/// Policy that always outputs zeros.
#[derive(Clone, Copy, Debug)]
pub struct ZeroPolicy {
    pub action_dim: usize,
}

impl Policy for ZeroPolicy {
    fn act(&self, _state: &State) -> Action {
        Action::zeros(self.action_dim)
    }

    fn action_dim(&self) -> Option<usize> {
        Some(self.action_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counter environment: state is the step count, terminal once it hits `stop_at`.
    struct Counter {
        horizon: usize,
        stop_at: Option<f64>,
        reward: f64,
    }

    impl Environment for Counter {
        fn state_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn max_steps(&self) -> usize {
            self.horizon
        }
        fn initial_state(&self, _rng: &mut Rng) -> State {
            State::from([0.0])
        }
        fn clip_action(&self, action: Action) -> Action {
            action
        }
        fn step(&self, state: &State, action: &Action) -> EnvStep {
            let next = state[0] + 1.0 + action[0];
            EnvStep {
                next_state: State::from([next]),
                reward: self.reward,
                terminal: self.stop_at.is_some_and(|s| next >= s),
            }
        }
    }

    struct Nan;
    impl Policy for Nan {
        fn act(&self, state: &State) -> Action {
            Action::from([if state[0] >= 2.0 { f64::NAN } else { 0.0 }])
        }
    }

    #[test]
    fn horizon_bounds_length() {
        let env = Counter {
            horizon: 7,
            stop_at: None,
            reward: 1.0,
        };
        let traj = rollout(&env, &ZeroPolicy { action_dim: 1 }, 0).unwrap();
        assert_eq!(traj.len(), 7);
        assert_eq!(traj.states.len(), 8);
        assert!(!traj.terminated);
    }

    #[test]
    fn terminal_ends_episode() {
        let env = Counter {
            horizon: 10,
            stop_at: Some(3.0),
            reward: 1.0,
        };
        let traj = rollout(&env, &ZeroPolicy { action_dim: 1 }, 0).unwrap();
        assert_eq!(traj.len(), 3);
        assert!(traj.terminated);
        assert_eq!(traj.visited().len(), 3);
    }

    #[test]
    fn nan_action_reports_step() {
        let env = Counter {
            horizon: 10,
            stop_at: None,
            reward: 0.0,
        };
        match rollout(&env, &Nan, 0) {
            Err(Error::NumericalFailure { step, quantity }) => {
                assert_eq!(step, 2);
                assert_eq!(quantity, "action");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let env = Counter {
            horizon: 3,
            stop_at: None,
            reward: 0.0,
        };
        assert!(matches!(
            rollout(&env, &ZeroPolicy { action_dim: 2 }, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_reward_env_evaluates_to_zero() {
        let env = Counter {
            horizon: 5,
            stop_at: None,
            reward: 0.0,
        };
        let stats = evaluate_policy(&env, &ZeroPolicy { action_dim: 1 }, 10, 3).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.std, 0.0);
        assert!(evaluate_policy(&env, &ZeroPolicy { action_dim: 1 }, 0, 3).is_err());
    }
}
