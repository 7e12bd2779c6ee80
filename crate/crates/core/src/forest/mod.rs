//! Unsupervised sparse-projection forest and the geodesic dissimilarity it
//! induces.
//!
//! Trees are grown on subsamples of the joint matrix. Each internal node
//! splits on the fast-BIC-optimal cut of one sparse random projection. Once
//! trained, a [`Forest`] is immutable; routing points with out-of-block
//! coordinates zeroed gives the leaf memberships behind marginal distances.

mod geodesic;
mod persist;
mod projection;
mod tree;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use geodesic::{co_leaf_counts, geodesic_distances, GeodesicDistanceMatrix, LOCAL_EPSILON};
pub use persist::{load_forest, save_forest, FOREST_FORMAT, FOREST_FORMAT_VERSION};
pub use projection::{sample_projection_matrix, ProjectionMatrix, SparseProjection};
pub use tree::{grow_tree, Tree, TreeNode};
use tree::{grow_tree_shared, FullOrders};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Default number of trees.
pub const DEFAULT_TREES: usize = 300;
/// Fraction of rows drawn (without replacement) for each tree.
pub const SUBSAMPLE_FRACTION: f64 = 0.632;
/// Lower bound on the number of candidate projections per node.
pub const MIN_PROJECTIONS: usize = 5;
/// Default for [`ForestParams::min_cluster`]. A single point has no variance
/// of its own, so one-point clusters are not offered to the split score.
pub const DEFAULT_MIN_CLUSTER: usize = 2;

/// User-facing forest settings; `None` fields take data-dependent defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    /// Candidate projections per node; default `max(ceil(sqrt(d)), 5)`.
    pub projections: Option<usize>,
    /// Probability of a non-zero projection entry; default `1 / d`.
    pub sparsity: Option<f64>,
    /// Smallest node that may be split; default `ceil(sqrt(2 n))`.
    pub min_split: Option<usize>,
    /// Rows per tree; default `ceil(0.632 n)`.
    pub subsample: Option<usize>,
    /// Fewest points either side of a node split may keep; default 2.
    pub min_cluster: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: DEFAULT_TREES,
            projections: None,
            sparsity: None,
            min_split: None,
            subsample: None,
            min_cluster: None,
        }
    }
}

/// Forest settings with every default filled in for a concrete `n x d` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedForestParams {
    pub trees: usize,
    pub projections: usize,
    pub sparsity: f64,
    pub min_split: usize,
    pub subsample: usize,
    pub min_cluster: usize,
}

impl ForestParams {
    pub fn with_trees(trees: usize) -> Self {
        ForestParams {
            trees,
            ..ForestParams::default()
        }
    }

    pub fn resolve(&self, n: usize, d: usize) -> Result<ResolvedForestParams> {
        if d == 0 {
            return Err(Error::invalid("forest needs at least one column"));
        }
        if self.trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        let projections = self
            .projections
            .unwrap_or_else(|| ((d as f64).sqrt().ceil() as usize).max(MIN_PROJECTIONS));
        if projections == 0 {
            return Err(Error::invalid("projections per node must be >= 1"));
        }
        let sparsity = self.sparsity.unwrap_or(1.0 / d as f64);
        if !(sparsity > 0.0 && sparsity <= 1.0) {
            return Err(Error::invalid(format!(
                "sparsity must lie in (0, 1], got {sparsity}"
            )));
        }
        let min_split = self
            .min_split
            .unwrap_or_else(|| ((2.0 * n as f64).sqrt().ceil() as usize).max(2));
        if min_split < 2 {
            return Err(Error::invalid("min_split must be >= 2"));
        }
        let subsample = self
            .subsample
            .unwrap_or_else(|| (SUBSAMPLE_FRACTION * n as f64).ceil() as usize);
        if subsample < 2 || subsample > n {
            return Err(Error::invalid(format!(
                "subsample size {subsample} must lie in 2..={n}"
            )));
        }
        let min_cluster = self.min_cluster.unwrap_or(DEFAULT_MIN_CLUSTER);
        if min_cluster == 0 {
            return Err(Error::invalid("min_cluster must be >= 1"));
        }
        Ok(ResolvedForestParams {
            trees: self.trees,
            projections,
            sparsity,
            min_split,
            subsample,
            min_cluster,
        })
    }
}

/// A trained forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    params: ResolvedForestParams,
    seed: u64,
    n_train: usize,
    n_features: usize,
}

impl Forest {
    /// Wraps hand-built or deserialised trees.
    pub fn from_trees(
        trees: Vec<Tree>,
        params: ResolvedForestParams,
        seed: u64,
        n_train: usize,
    ) -> Result<Self> {
        let Some(first) = trees.first() else {
            return Err(Error::invalid("forest has no trees"));
        };
        let n_features = first.n_features();
        if trees.iter().any(|t| t.n_features() != n_features) {
            return Err(Error::invalid("trees disagree on the feature count"));
        }
        if params.trees != trees.len() {
            return Err(Error::invalid(format!(
                "params declare {} trees but {} were given",
                params.trees,
                trees.len()
            )));
        }
        Ok(Forest {
            trees,
            params,
            seed,
            n_train,
            n_features,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn params(&self) -> &ResolvedForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// RNG stream of tree `index` under `seed`. Streams are independent of how
/// trees are scheduled across threads.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Trains `params.trees` trees on subsamples of `data`, in parallel.
pub fn build_forest(data: &DataMatrix, params: &ForestParams, seed: u64) -> Result<Forest> {
    let n = data.n_rows();
    if n < 4 {
        return Err(Error::invalid(format!("forest needs n >= 4 rows, got {n}")));
    }
    let resolved = params.resolve(n, data.n_cols())?;
    let orders = FullOrders::default();
    let trees = (0..resolved.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut ids = index::sample(&mut rng, n, resolved.subsample).into_vec();
            ids.sort_unstable();
            grow_tree_shared(data, &ids, &resolved, &mut rng, &orders)
        })
        .collect::<Result<Vec<_>>>()?;
    Forest::from_trees(trees, resolved, seed, n)
}
