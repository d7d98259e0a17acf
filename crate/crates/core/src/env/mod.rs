//! Analytic continuous-control environments and their scripted experts.

mod double_integrator;
mod pendulum;
mod pusher;

use serde::{Deserialize, Serialize};

pub use double_integrator::{lqr_gain, DoubleIntegrator, DoubleIntegratorExpert, DoubleIntegratorParams};
pub use pendulum::{Pendulum, PendulumExpert, PendulumParams};
pub use pusher::{Pusher, PusherExpert, PusherParams};

use crate::error::{Error, Result};
use crate::mdp::{Action, Environment, Policy, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Pendulum,
    Pusher,
    DoubleIntegrator,
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::Pusher => "pusher",
            EnvKind::DoubleIntegrator => "double-integrator",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Multiplies the expert's feedback gains. Values below 1 give an
    /// imperfect expert; 1 is the certified controller.
    #[serde(default = "one")]
    pub expert_gain_scale: f64,
    #[serde(default)]
    pub pendulum: PendulumParams,
    #[serde(default)]
    pub pusher: PusherParams,
    #[serde(default)]
    pub double_integrator: DoubleIntegratorParams,
}

fn one() -> f64 {
    1.0
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            expert_gain_scale: 1.0,
            pendulum: PendulumParams::default(),
            pusher: PusherParams::default(),
            double_integrator: DoubleIntegratorParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = match self.kind {
            EnvKind::Pendulum => self.pendulum.validate(),
            EnvKind::Pusher => self.pusher.validate(),
            EnvKind::DoubleIntegrator => self.double_integrator.validate(),
        };
        r.map_err(Error::Config)?;
        if !(self.expert_gain_scale > 0.0 && self.expert_gain_scale.is_finite()) {
            return Err(Error::Config("expert_gain_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Box<dyn Environment> {
        match self.kind {
            EnvKind::Pendulum => Box::new(Pendulum::new(self.pendulum.clone())),
            EnvKind::Pusher => Box::new(Pusher::new(self.pusher.clone())),
            EnvKind::DoubleIntegrator => Box::new(DoubleIntegrator::new(self.double_integrator.clone())),
        }
    }

    pub fn expert(&self) -> Box<dyn Policy> {
        let s = self.expert_gain_scale;
        match self.kind {
            EnvKind::Pendulum => {
                let mut e = PendulumExpert::new(&self.pendulum);
                e.kp *= s;
                e.kd *= s;
                Box::new(e)
            }
            EnvKind::Pusher => {
                let mut e = PusherExpert::new(&self.pusher);
                e.gain_scale = s;
                Box::new(e)
            }
            EnvKind::DoubleIntegrator => {
                let mut e = DoubleIntegratorExpert::new(&self.double_integrator);
                e.gain *= s;
                Box::new(e)
            }
        }
    }

    pub fn t_max(&self) -> usize {
        match self.kind {
            EnvKind::Pendulum => self.pendulum.t_max,
            EnvKind::Pusher => self.pusher.t_max,
            EnvKind::DoubleIntegrator => self.double_integrator.t_max,
        }
    }
}

/// Expert label for `state` under default parameters.
pub fn expert_action(kind: EnvKind, state: &State) -> Action {
    EnvConfig::new(kind).expert().act(state)
}
