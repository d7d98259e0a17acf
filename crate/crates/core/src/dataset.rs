//! The aggregated expert dataset: a multiset of (state, expert action)
//! pairs plus the frozen input standardiser shared by the learner and the
//! novelty scorer.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, State};

/// Per-dimension affine map `z = (x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Standard deviations below this are treated as 1 (constant dimension).
    const MIN_STD: f64 = 1e-12;

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fit to the rows of a flat row-major matrix with `dim` columns.
    pub fn fit(rows: &[f64], dim: usize) -> Self {
        let n = rows.len() / dim;
        if n == 0 {
            return Self::identity(dim);
        }
        let mut mean = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s < Self::MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.std.iter().all(|&s| s == 1.0)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((x, m), s)| (x - m) / s),
        );
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.apply_into(x, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertDataset {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    /// Standardised copy of `states`, kept in sync on every append.
    standardized: Vec<f64>,
    standardizer: Standardizer,
}

impl ExpertDataset {
    /// Empty dataset with an identity standardiser.
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            standardized: Vec::new(),
            standardizer: Standardizer::identity(state_dim),
        }
    }

    pub fn from_pairs<I>(state_dim: usize, action_dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (State, Action)>,
    {
        let mut d = Self::new(state_dim, action_dim);
        for (x, u) in pairs {
            d.push(&x, &u)?;
        }
        Ok(d)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: &[f64], action: &[f64]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        if action.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim,
                got: action.len(),
            });
        }
        self.states.extend_from_slice(state);
        self.actions.extend_from_slice(action);
        self.standardizer.apply_into(state, &mut self.standardized);
        Ok(())
    }

    /// Multiset union with a batch of labelled pairs.
    pub fn extend_pairs(&mut self, pairs: &[(State, Action)]) -> Result<()> {
        for (x, u) in pairs {
            self.push(x, u)?;
        }
        Ok(())
    }

    /// Fit the standardiser to the current contents and freeze it.
    pub fn freeze_standardizer(&mut self) {
        self.set_standardizer(Standardizer::fit(&self.states, self.state_dim));
    }

    pub fn set_standardizer(&mut self, standardizer: Standardizer) {
        assert_eq!(standardizer.dim(), self.state_dim);
        self.standardized.clear();
        for row in self.states.chunks_exact(self.state_dim) {
            standardizer.apply_into(row, &mut self.standardized);
        }
        self.standardizer = standardizer;
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn standardized_state(&self, i: usize) -> &[f64] {
        &self.standardized[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// Row-major standardised state matrix (the projection `D_X`).
    pub fn standardized_states(&self) -> &[f64] {
        &self.standardized
    }

    pub fn raw_states(&self) -> &[f64] {
        &self.states
    }

    pub fn raw_actions(&self) -> &[f64] {
        &self.actions
    }

    /// Write as plain text: a header `d action_dim count`, then one row per
    /// pair with state values followed by action values, 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.state_dim, self.action_dim, self.len())?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            for (j, v) in self.state(i).iter().chain(self.action(i)).enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                write!(line, "{v:.16e}").expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Inverse of [`write_text`](Self::write_text). The result carries an
    /// identity standardiser.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))??;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::Parse(format!("header `{header}`: {e}"))))
            .collect::<Result<_>>()?;
        let [d, a, n] = head[..] else {
            return Err(Error::Parse(format!("header needs 3 fields, got `{header}`")));
        };
        let mut out = Self::new(d, a);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != d + a {
                return Err(Error::Parse(format!(
                    "row {} has {} values, expected {}",
                    lineno + 1,
                    vals.len(),
                    d + a
                )));
            }
            out.push(&vals[..d], &vals[d..])?;
        }
        if out.len() != n {
            return Err(Error::Parse(format!("header says {n} rows, found {}", out.len())));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standardizer_fits_mean_and_std() {
        let s = Standardizer::fit(&[1.0, 5.0, 3.0, 5.0], 2);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 6.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn duplicates_are_kept() {
        let mut d = ExpertDataset::new(1, 1);
        d.push(&[1.0], &[0.0]).unwrap();
        d.push(&[1.0], &[0.0]).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.push(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn frozen_standardizer_applies_to_appends() {
        let mut d = ExpertDataset::new(1, 1);
        d.push(&[0.0], &[0.0]).unwrap();
        d.push(&[2.0], &[0.0]).unwrap();
        d.freeze_standardizer();
        d.push(&[4.0], &[0.0]).unwrap();
        assert_eq!(d.standardized_states(), &[-1.0, 1.0, 3.0]);
        assert_eq!(d.standardizer().mean, vec![1.0]);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(ExpertDataset::read_text("2 1 1\n1 2\n".as_bytes()).is_err());
        assert!(ExpertDataset::read_text("2 1 2\n1 2 3\n".as_bytes()).is_err());
        assert!(ExpertDataset::read_text("".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 0..20)
        ) {
            let mut d = ExpertDataset::new(2, 1);
            for r in &rows {
                d.push(&r[..2], &r[2..]).unwrap();
            }
            let mut buf = Vec::new();
            d.write_text(&mut buf).unwrap();
            let back = ExpertDataset::read_text(buf.as_slice()).unwrap();
            prop_assert_eq!(back.raw_states().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            d.raw_states().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.raw_actions().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            d.raw_actions().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
