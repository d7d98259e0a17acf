#![allow(dead_code)]

use ailab_core::rng::Rng;
use ailab_core::{Action, EnvStep, Environment, ExpertDataset, Policy, State};
use rand::Rng as _;

/// 1D drift task that never terminates, so every episode has length `horizon`.
pub struct FixedHorizon {
    pub horizon: usize,
}

impl Environment for FixedHorizon {
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn max_steps(&self) -> usize {
        self.horizon
    }
    fn initial_state(&self, rng: &mut Rng) -> State {
        State::from([rng.random_range(-1.0..1.0)])
    }
    fn clip_action(&self, action: Action) -> Action {
        Action::from([action[0].clamp(-1.0, 1.0)])
    }
    fn step(&self, state: &State, action: &Action) -> EnvStep {
        let x = 0.9 * state[0] + 0.1 * action[0];
        EnvStep {
            next_state: State::from([x]),
            reward: -x.abs(),
            terminal: false,
        }
    }
}

pub struct Proportional;

impl Policy for Proportional {
    fn act(&self, state: &State) -> Action {
        Action::from([-state[0]])
    }
    fn state_dim(&self) -> Option<usize> {
        Some(1)
    }
    fn action_dim(&self) -> Option<usize> {
        Some(1)
    }
}

pub fn random_dataset(rng: &mut Rng, n: usize, dim: usize, dup_every: usize) -> ExpertDataset {
    let mut d = ExpertDataset::new(dim, 1);
    let mut last: Vec<f64> = vec![0.0; dim];
    for i in 0..n {
        if dup_every > 0 && i > 0 && i % dup_every == 0 {
            d.push(&last.clone(), &[0.0]).unwrap();
            continue;
        }
        last = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        d.push(&last, &[0.0]).unwrap();
    }
    d
}
