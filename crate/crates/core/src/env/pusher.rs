//! Planar kinematic pusher: a point agent pushes a point object toward a
//! randomised goal. The goal is part of the state.
//!
//! State layout: `[agent_x, agent_y, object_x, object_y, goal_x, goal_y]`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::mdp::{Action, EnvStep, Environment, Policy, State};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PusherParams {
    pub dt: f64,
    pub speed_cap: f64,
    pub contact_radius: f64,
    /// Fraction of the agent's displacement transferred to the object on contact.
    pub push_gain: f64,
    /// Goals are drawn from `[-goal_range, goal_range]^2`.
    pub goal_range: f64,
    pub object_range: f64,
    pub agent_range: f64,
    pub t_max: usize,
}

impl Default for PusherParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            speed_cap: 1.0,
            contact_radius: 0.15,
            push_gain: 0.8,
            goal_range: 1.0,
            object_range: 0.5,
            agent_range: 1.0,
            t_max: 100,
        }
    }
}

impl PusherParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("pusher dt must be positive".into());
        }
        if !(self.contact_radius > 0.0) {
            return Err("pusher contact_radius must be positive".into());
        }
        if !(self.push_gain > 0.0 && self.push_gain <= 1.0) {
            return Err("pusher push_gain must lie in (0, 1]".into());
        }
        if !(self.speed_cap > 0.0) {
            return Err("pusher speed_cap must be positive".into());
        }
        if self.t_max == 0 {
            return Err("pusher t_max must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Pusher {
    pub params: PusherParams,
}

impl Pusher {
    pub fn new(params: PusherParams) -> Self {
        Self { params }
    }
}

fn clip_norm(v: [f64; 2], cap: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n > cap {
        [v[0] * cap / n, v[1] * cap / n]
    } else {
        v
    }
}

impl Environment for Pusher {
    fn state_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.params.t_max
    }

    fn initial_state(&self, rng: &mut Rng) -> State {
        let p = &self.params;
        let mut draw = |r: f64| rng.random_range(-r..=r);
        let agent = [draw(p.agent_range), draw(p.agent_range)];
        let object = [draw(p.object_range), draw(p.object_range)];
        let goal = [draw(p.goal_range), draw(p.goal_range)];
        State::from([agent[0], agent[1], object[0], object[1], goal[0], goal[1]])
    }

    fn clip_action(&self, action: Action) -> Action {
        Action::from(clip_norm([action[0], action[1]], self.params.speed_cap))
    }

    fn step(&self, state: &State, action: &Action) -> EnvStep {
        let p = &self.params;
        let v = clip_norm([action[0], action[1]], p.speed_cap);
        let agent = [state[0] + p.dt * v[0], state[1] + p.dt * v[1]];
        let mut object = [state[2], state[3]];
        let goal = [state[4], state[5]];
        if (agent[0] - object[0]).hypot(agent[1] - object[1]) <= p.contact_radius {
            object[0] += p.push_gain * (agent[0] - state[0]);
            object[1] += p.push_gain * (agent[1] - state[1]);
        }
        let reward = -(object[0] - goal[0]).hypot(object[1] - goal[1]);
        EnvStep {
            next_state: State::from([agent[0], agent[1], object[0], object[1], goal[0], goal[1]]),
            reward,
            terminal: false,
        }
    }
}

/// Two-phase scripted pusher: get behind the object on the object-to-goal
/// line, then drive through it toward the goal.
#[derive(Clone, Debug)]
pub struct PusherExpert {
    pub standoff: f64,
    /// How close to the staging point counts as "behind the object".
    pub align_tol: f64,
    pub params: PusherParams,
    pub gain_scale: f64,
}

impl PusherExpert {
    pub fn new(params: &PusherParams) -> Self {
        Self {
            standoff: 0.2,
            align_tol: 0.08,
            params: params.clone(),
            gain_scale: 1.0,
        }
    }
}

impl Policy for PusherExpert {
    fn act(&self, state: &State) -> Action {
        let p = &self.params;
        let agent = [state[0], state[1]];
        let object = [state[2], state[3]];
        let goal = [state[4], state[5]];
        let to_goal = [goal[0] - object[0], goal[1] - object[1]];
        let dist = to_goal[0].hypot(to_goal[1]);
        if dist < 1e-3 {
            return Action::zeros(2);
        }
        let dir = [to_goal[0] / dist, to_goal[1] / dist];
        let staging = [object[0] - self.standoff * dir[0], object[1] - self.standoff * dir[1]];
        let off = [staging[0] - agent[0], staging[1] - agent[1]];
        // signed progress of the agent along the push direction, relative to the object
        let along = (agent[0] - object[0]) * dir[0] + (agent[1] - object[1]) * dir[1];
        let lateral = ((agent[0] - object[0]) * dir[1] - (agent[1] - object[1]) * dir[0]).abs();
        let pushing = off[0].hypot(off[1]) < self.align_tol
            || (along < 0.0 && lateral < 0.5 * p.contact_radius);
        let v = if pushing {
            // the object moves push_gain times as far as the agent while in contact
            let speed = (dist / (p.push_gain * p.dt)).min(p.speed_cap);
            [dir[0] * speed, dir[1] * speed]
        } else {
            let mut target = staging;
            // stay clear of the object while circling around to the staging point
            let away = [agent[0] - object[0], agent[1] - object[1]];
            let gap = away[0].hypot(away[1]);
            if along > -self.standoff * 0.5 && gap < 2.0 * p.contact_radius && gap > 1e-9 {
                target = [
                    agent[0] + away[0] / gap * p.contact_radius - dir[0] * p.contact_radius,
                    agent[1] + away[1] / gap * p.contact_radius - dir[1] * p.contact_radius,
                ];
            }
            let step = [(target[0] - agent[0]) / p.dt, (target[1] - agent[1]) / p.dt];
            clip_norm(step, p.speed_cap)
        };
        let s = self.gain_scale;
        Action::from([s * v[0], s * v[1]])
    }

    fn state_dim(&self) -> Option<usize> {
        Some(6)
    }

    fn action_dim(&self) -> Option<usize> {
        Some(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{evaluate_policy, ZeroPolicy};

    #[test]
    fn no_contact_leaves_object() {
        let env = Pusher::default();
        let s = env.step(
            &State::from([-1.0, -1.0, 0.5, 0.5, 0.0, 0.0]),
            &Action::from([1.0, 0.0]),
        );
        assert_eq!(s.next_state[2], 0.5);
        assert_eq!(s.next_state[3], 0.5);
        assert!(!s.terminal);
    }

    #[test]
    fn contact_pushes_by_gain() {
        let env = Pusher::default();
        let s = env.step(
            &State::from([0.2, 0.3, 0.2, 0.3, 1.0, 1.0]),
            &Action::from([1.0, 0.0]),
        );
        assert!((s.next_state[2] - (0.2 + 0.08)).abs() < 1e-12);
        assert_eq!(s.next_state[3], 0.3);
    }

    #[test]
    fn object_at_goal_scores_zero() {
        let env = Pusher::default();
        let s = env.step(
            &State::from([-1.0, -1.0, 0.4, 0.4, 0.4, 0.4]),
            &Action::from([0.0, 0.0]),
        );
        assert_eq!(s.reward, 0.0);
    }

    #[test]
    fn speed_is_capped() {
        let env = Pusher::default();
        let a = env.clip_action(Action::from([3.0, 4.0]));
        assert!((a[0] - 0.6).abs() < 1e-12 && (a[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn expert_beats_zero_policy_threefold() {
        let env = Pusher::default();
        let expert = PusherExpert::new(&env.params);
        let e = evaluate_policy(&env, &expert, 200, 11).unwrap();
        let z = evaluate_policy(&env, &ZeroPolicy { action_dim: 2 }, 200, 11).unwrap();
        assert!(z.mean < 0.0);
        assert!(e.mean.abs() * 3.0 <= z.mean.abs(), "expert {} zero {}", e.mean, z.mean);
    }
}
