//! Nearest-neighbour nonconformity score: the distance from a state to its
//! K-th nearest state in the expert dataset, counting duplicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExpertDataset, Standardizer};
use crate::error::{Error, Result};
use crate::kdtree::{sq_dist, KdTree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    BruteForce,
    KdTree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoveltyConfig {
    pub k: usize,
    /// Measure distances in the dataset's frozen standardised coordinates.
    /// When false, raw state coordinates are used.
    pub standardize: bool,
    pub backend: Backend,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self {
            k: 5,
            standardize: true,
            backend: Backend::BruteForce,
        }
    }
}

impl NoveltyConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        Ok(())
    }
}

fn coordinates<'a>(dataset: &'a ExpertDataset, config: &NoveltyConfig) -> &'a [f64] {
    if config.standardize {
        dataset.standardized_states()
    } else {
        dataset.raw_states()
    }
}

fn project(x: &[f64], dataset: &ExpertDataset, config: &NoveltyConfig) -> Result<Vec<f64>> {
    if x.len() != dataset.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.state_dim(),
            got: x.len(),
        });
    }
    Ok(if config.standardize {
        dataset.standardizer().apply(x)
    } else {
        x.to_vec()
    })
}

fn brute_kth(points: &[f64], dim: usize, q: &[f64], k: usize, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(points.chunks_exact(dim).map(|p| sq_dist(q, p)));
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

fn check_k(dataset_len: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if dataset_len < k {
        return Err(Error::InsufficientData {
            have: dataset_len,
            need: k,
        });
    }
    Ok(())
}

/// `s_K(x)`: the radius of the smallest closed ball around `x` containing
/// at least K dataset states. Always brute force.
pub fn score_sk(x: &[f64], dataset: &ExpertDataset, config: &NoveltyConfig) -> Result<f64> {
    check_k(dataset.len(), config.k)?;
    let q = project(x, dataset, config)?;
    let mut scratch = Vec::with_capacity(dataset.len());
    Ok(brute_kth(coordinates(dataset, config), dataset.state_dim(), &q, config.k, &mut scratch).sqrt())
}

/// Score many states against one snapshot, using the configured backend.
pub fn score_batch<S: AsRef<[f64]> + Sync>(
    states: &[S],
    dataset: &ExpertDataset,
    config: &NoveltyConfig,
) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    rebuild_index(dataset, config)?.score_batch(states, config.k)
}

/// Immutable snapshot of the dataset's state projection answering K-th
/// neighbour distance queries.
#[derive(Clone, Debug)]
pub struct NoveltyIndex {
    dim: usize,
    /// Dataset size when the snapshot was taken.
    version: usize,
    standardizer: Option<Standardizer>,
    points: Vec<f64>,
    tree: Option<KdTree>,
}

pub fn rebuild_index(dataset: &ExpertDataset, config: &NoveltyConfig) -> Result<NoveltyIndex> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData { have: 0, need: 1 });
    }
    let points = coordinates(dataset, config).to_vec();
    let tree = match config.backend {
        Backend::BruteForce => None,
        Backend::KdTree => Some(KdTree::build(&points, dataset.state_dim())),
    };
    Ok(NoveltyIndex {
        dim: dataset.state_dim(),
        version: dataset.len(),
        standardizer: config.standardize.then(|| dataset.standardizer().clone()),
        points,
        tree,
    })
}

impl NoveltyIndex {
    pub fn version(&self) -> usize {
        self.version
    }

    pub fn len(&self) -> usize {
        self.version
    }

    pub fn is_empty(&self) -> bool {
        self.version == 0
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        })
    }

    fn kth(&self, q: &[f64], k: usize, scratch: &mut Vec<f64>) -> f64 {
        match &self.tree {
            Some(t) => t.kth_sq_dist(q, k).expect("k checked against snapshot size"),
            None => brute_kth(&self.points, self.dim, q, k, scratch),
        }
        .sqrt()
    }

    pub fn score(&self, x: &[f64], k: usize) -> Result<f64> {
        check_k(self.version, k)?;
        let q = self.project(x)?;
        Ok(self.kth(&q, k, &mut Vec::new()))
    }

    pub fn score_batch<S: AsRef<[f64]> + Sync>(&self, states: &[S], k: usize) -> Result<Vec<f64>> {
        check_k(self.version, k)?;
        states
            .par_iter()
            .map_init(Vec::new, |scratch, x| {
                let q = self.project(x.as_ref())?;
                Ok(self.kth(&q, k, scratch))
            })
            .collect()
    }
}
