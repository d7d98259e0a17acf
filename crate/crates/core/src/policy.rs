//! One-hidden-layer tanh MLP learner trained by minibatch SGD on squared
//! action error.
//!
//! `pi(x) = W2 tanh(W1 x + b1) + b2`. All parameters live in one flat
//! vector laid out as `[W1 (hidden x d, row-major), b1, W2 (a x hidden), b2]`,
//! which keeps SGD and finite-difference checks trivial.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ExpertDataset, Standardizer};
use crate::error::{Error, Result};
use crate::mdp::{Action, Policy, State};
use crate::rng::{self, Rng};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    state_dim: usize,
    hidden: usize,
    action_dim: usize,
    values: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(state_dim: usize, hidden: usize, action_dim: usize) -> Self {
        let n = hidden * state_dim + hidden + action_dim * hidden + action_dim;
        Self {
            state_dim,
            hidden,
            action_dim,
            values: vec![0.0; n],
        }
    }

    /// Every entry drawn as `scale * N(0, 1)`.
    pub fn random(state_dim: usize, hidden: usize, action_dim: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(state_dim, hidden, action_dim);
        for v in &mut p.values {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
        p
    }

    pub fn from_parts(w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64], state_dim: usize) -> Result<Self> {
        let hidden = b1.len();
        let action_dim = b2.len();
        if w1.len() != hidden * state_dim || w2.len() != action_dim * hidden {
            return Err(Error::Config("inconsistent parameter block sizes".into()));
        }
        let values = [w1, b1, w2, b2].concat();
        Ok(Self {
            state_dim,
            hidden,
            action_dim,
            values,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = self.hidden * self.state_dim;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.action_dim * self.hidden;
        [0, w1, b1, w2]
    }

    pub fn w1(&self) -> &[f64] {
        let o = self.offsets();
        &self.values[o[0]..o[1]]
    }

    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.values[o[1]..o[2]]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.offsets();
        &self.values[o[2]..o[3]]
    }

    pub fn b2(&self) -> &[f64] {
        let o = self.offsets();
        &self.values[o[3]..]
    }

    /// Forward pass on an (already standardised) input; fills `hidden_out`
    /// with the tanh activations and returns the output.
    fn forward_into(&self, x: &[f64], hidden_out: &mut [f64], out: &mut [f64]) {
        let (d, h) = (self.state_dim, self.hidden);
        let w1 = self.w1();
        let b1 = self.b1();
        for j in 0..h {
            let row = &w1[j * d..(j + 1) * d];
            let z = row.iter().zip(x).fold(b1[j], |acc, (w, x)| acc + w * x);
            hidden_out[j] = z.tanh();
        }
        let w2 = self.w2();
        let b2 = self.b2();
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w2[k * h..(k + 1) * h];
            *o = row.iter().zip(hidden_out.iter()).fold(b2[k], |acc, (w, a)| acc + w * a);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: x.len(),
            });
        }
        let mut hid = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.action_dim];
        self.forward_into(x, &mut hid, &mut out);
        Ok(out)
    }

    /// Write as whitespace-separated text: a `d hidden action_dim` header,
    /// then one line per block (W1, b1, W2, b2) at 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.state_dim, self.hidden, self.action_dim)?;
        for block in [self.w1(), self.b1(), self.w2(), self.b2()] {
            let line: Vec<String> = block.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.extend(line?.split_whitespace().map(str::to_owned));
        }
        let parse_usize = |t: Option<&String>| -> Result<usize> {
            t.ok_or_else(|| Error::Parse("truncated header".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("header: {e}")))
        };
        let d = parse_usize(tokens.first())?;
        let h = parse_usize(tokens.get(1))?;
        let a = parse_usize(tokens.get(2))?;
        let mut p = Self::zeros(d, h, a);
        if tokens.len() != 3 + p.len() {
            return Err(Error::Parse(format!(
                "expected {} parameter values, found {}",
                p.len(),
                tokens.len().saturating_sub(3)
            )));
        }
        for (v, t) in p.values.iter_mut().zip(&tokens[3..]) {
            *v = t.parse().map_err(|e| Error::Parse(format!("value `{t}`: {e}")))?;
        }
        Ok(p)
    }
}

/// `W2 tanh(W1 x + b1) + b2`, unclipped.
pub fn policy_act(params: &PolicyParams, state: &[f64]) -> Result<Action> {
    params.forward(state).map(Action::new)
}

/// Mean squared action error over a batch and its exact gradient.
///
/// `inputs` is row-major with `state_dim` columns, `targets` with
/// `action_dim` columns; both must hold the same number of rows (at least one).
pub fn loss_and_grad(params: &PolicyParams, inputs: &[f64], targets: &[f64]) -> Result<(f64, PolicyParams)> {
    let (d, a) = (params.state_dim, params.action_dim);
    if !inputs.len().is_multiple_of(d) || !targets.len().is_multiple_of(a) || inputs.len() / d != targets.len() / a {
        return Err(Error::DimensionMismatch {
            expected: inputs.len() / d.max(1) * a,
            got: targets.len(),
        });
    }
    let n = inputs.len() / d;
    if n == 0 {
        return Err(Error::Config("loss over an empty batch".into()));
    }
    let rows = (0..n).map(|i| (&inputs[i * d..(i + 1) * d], &targets[i * a..(i + 1) * a]));
    let mut grad = PolicyParams::zeros(d, params.hidden, a);
    let loss = accumulate(params, rows, n, &mut grad);
    Ok((loss, grad))
}

/// Backprop over `rows`, adding the mean-loss gradient into `grad`.
fn accumulate<'a, I>(params: &PolicyParams, rows: I, n: usize, grad: &mut PolicyParams) -> f64
where
    I: Iterator<Item = (&'a [f64], &'a [f64])>,
{
    let (d, h, a) = (params.state_dim, params.hidden, params.action_dim);
    let [_, o_b1, o_w2, o_b2] = params.offsets();
    let w2 = params.w2();
    let scale = 1.0 / n as f64;
    let mut hid = vec![0.0; h];
    let mut out = vec![0.0; a];
    let mut delta = vec![0.0; a];
    let mut dz = vec![0.0; h];
    let mut loss = 0.0;
    let g = &mut grad.values;
    for (x, target) in rows {
        params.forward_into(x, &mut hid, &mut out);
        for k in 0..a {
            let e = out[k] - target[k];
            loss += e * e;
            delta[k] = 2.0 * e * scale;
        }
        for k in 0..a {
            g[o_b2 + k] += delta[k];
            let gw2 = &mut g[o_w2 + k * h..o_w2 + (k + 1) * h];
            for (gw, act) in gw2.iter_mut().zip(&hid) {
                *gw += delta[k] * act;
            }
        }
        for j in 0..h {
            let back: f64 = (0..a).map(|k| w2[k * h + j] * delta[k]).sum();
            dz[j] = back * (1.0 - hid[j] * hid[j]);
        }
        for j in 0..h {
            g[o_b1 + j] += dz[j];
            let gw1 = &mut g[j * d..(j + 1) * d];
            for (gw, xi) in gw1.iter_mut().zip(x) {
                *gw += dz[j] * xi;
            }
        }
    }
    loss * scale
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs for the initial behavioural-cloning fit.
    pub bc_epochs: usize,
    /// Epochs per update after each training episode.
    pub update_epochs: usize,
    pub hidden: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Re-initialise and fit from scratch on every update instead of warm-starting.
    pub retrain_from_scratch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 64,
            bc_epochs: 50,
            update_epochs: 10,
            hidden: DEFAULT_HIDDEN,
            init_scale: 0.3,
            seed: 0,
            retrain_from_scratch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.bc_epochs == 0 || self.update_epochs == 0 {
            return Err(Error::Config("epoch counts must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mean squared action error of `params` over the whole dataset
/// (standardised inputs).
pub fn dataset_loss(params: &PolicyParams, dataset: &ExpertDataset) -> f64 {
    let mut hid = vec![0.0; params.hidden];
    let mut out = vec![0.0; params.action_dim];
    let mut loss = 0.0;
    for i in 0..dataset.len() {
        params.forward_into(dataset.standardized_state(i), &mut hid, &mut out);
        loss += out
            .iter()
            .zip(dataset.action(i))
            .map(|(y, u)| (y - u) * (y - u))
            .sum::<f64>();
    }
    loss / dataset.len() as f64
}

fn check_dataset(params: &PolicyParams, dataset: &ExpertDataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if dataset.state_dim() != params.state_dim {
        return Err(Error::DimensionMismatch {
            expected: params.state_dim,
            got: dataset.state_dim(),
        });
    }
    if dataset.action_dim() != params.action_dim {
        return Err(Error::DimensionMismatch {
            expected: params.action_dim,
            got: dataset.action_dim(),
        });
    }
    Ok(())
}

/// Run `epochs` passes of shuffled minibatch SGD over the dataset in place.
pub fn sgd_epochs(
    params: &mut PolicyParams,
    dataset: &ExpertDataset,
    config: &TrainConfig,
    epochs: usize,
    rng: &mut Rng,
) -> Result<()> {
    check_dataset(params, dataset)?;
    let mut order: Vec<usize> = Vec::with_capacity(dataset.len());
    let mut grad = PolicyParams::zeros(params.state_dim, params.hidden, params.action_dim);
    for _ in 0..epochs {
        // Fresh permutation of the identity every epoch.
        order.clear();
        order.extend(0..dataset.len());
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size) {
            grad.values.iter_mut().for_each(|g| *g = 0.0);
            let rows = batch
                .iter()
                .map(|&i| (dataset.standardized_state(i), dataset.action(i)));
            accumulate(params, rows, batch.len(), &mut grad);
            for (p, g) in params.values.iter_mut().zip(&grad.values) {
                *p -= config.learning_rate * g;
            }
        }
    }
    if !params.is_finite() {
        return Err(Error::NumericalFailure {
            step: 0,
            quantity: "policy parameters",
        });
    }
    Ok(())
}

/// Fit a fresh network to the dataset. Initialisation and minibatch order
/// both come from `config.seed`.
pub fn behavioral_cloning(dataset: &ExpertDataset, config: &TrainConfig) -> Result<PolicyParams> {
    let mut rng = rng::derive_rng(config.seed, rng::stream::SGD, 0);
    behavioral_cloning_with(dataset, config, &mut rng)
}

pub fn behavioral_cloning_with(dataset: &ExpertDataset, config: &TrainConfig, rng: &mut Rng) -> Result<PolicyParams> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let mut params = PolicyParams::random(
        dataset.state_dim(),
        config.hidden,
        dataset.action_dim(),
        config.init_scale,
        rng,
    );
    sgd_epochs(&mut params, dataset, config, config.bc_epochs, rng)?;
    Ok(params)
}

/// Warm-started update: `config.update_epochs` SGD epochs over the full
/// aggregated dataset starting from `params`. With `retrain_from_scratch`
/// set this instead re-runs behavioural cloning from a new initialisation.
pub fn update(params: &PolicyParams, dataset: &ExpertDataset, config: &TrainConfig, rng: &mut Rng) -> Result<PolicyParams> {
    config.validate()?;
    if config.retrain_from_scratch {
        return behavioral_cloning_with(dataset, config, rng);
    }
    let mut next = params.clone();
    sgd_epochs(&mut next, dataset, config, config.update_epochs, rng)?;
    Ok(next)
}

/// Network parameters bundled with the frozen input standardiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    pub params: PolicyParams,
    pub standardizer: Standardizer,
}

impl MlpPolicy {
    pub fn new(params: PolicyParams, standardizer: Standardizer) -> Self {
        Self { params, standardizer }
    }
}

impl Policy for MlpPolicy {
    fn act(&self, state: &State) -> Action {
        let z = self.standardizer.apply(state);
        let mut hid = vec![0.0; self.params.hidden];
        let mut out = vec![0.0; self.params.action_dim];
        self.params.forward_into(&z, &mut hid, &mut out);
        Action::new(out)
    }

    fn state_dim(&self) -> Option<usize> {
        Some(self.params.state_dim)
    }

    fn action_dim(&self) -> Option<usize> {
        Some(self.params.action_dim)
    }
}
