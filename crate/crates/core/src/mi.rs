//! KSG and G-KSG mutual information estimators.
//!
//! Both estimators share the radius-and-count scheme: for every point the
//! distance to its k-th neighbour in the joint space fixes a radius, and the
//! marginal neighbours strictly inside that radius are counted in X and in Y.
//! They differ only in the marginal distance: L-infinity norm for KSG, the
//! forest-based geodesic dissimilarity for G-KSG. The joint distance is always
//! the elementwise maximum of the two marginal distances.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BlockPartition, DataMatrix, DistanceMatrix};
use crate::error::{Error, Result};
use crate::forest::{build_forest, geodesic_distances, Forest, ForestParams};
use crate::math_kernels::digamma_count;

/// Default neighbour count.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ksg,
    Gksg,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ksg => "ksg",
            Method::Gksg => "gksg",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "ksg" => Ok(Method::Ksg),
            "gksg" => Ok(Method::Gksg),
            _ => Err(Error::invalid(format!("unknown method {s:?} (expected ksg or gksg)"))),
        }
    }
}

/// Radius and marginal counts of one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborCount {
    /// Joint distance to the k-th nearest neighbour.
    pub rho_half: f64,
    pub n_x: usize,
    pub n_y: usize,
}

/// A mutual information estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    pub method: Method,
    pub k: usize,
    pub n: usize,
    pub mean_n_x: f64,
    pub mean_n_y: f64,
}

/// Pairwise L-infinity distances between rows restricted to `cols`.
pub fn chebyshev_distances(data: &DataMatrix, cols: &[usize]) -> Result<DistanceMatrix> {
    if cols.is_empty() {
        return Err(Error::invalid("distance block is empty"));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= data.n_cols()) {
        return Err(Error::invalid(format!("column {c} out of range")));
    }
    let n = data.n_rows();
    let mut values = vec![0.0; n * n];
    values
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, out)| {
            let a = data.row(i);
            for (j, slot) in out.iter_mut().enumerate() {
                let b = data.row(j);
                *slot = cols.iter().fold(0.0, |m: f64, &c| m.max((a[c] - b[c]).abs()));
            }
        });
    Ok(DistanceMatrix::from_raw(n, values))
}

/// Elementwise maximum of two marginal distance matrices.
pub fn joint_max_distance(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<DistanceMatrix> {
    if dx.size() != dy.size() {
        return Err(Error::invalid(format!(
            "marginal distance matrices differ in size: {} vs {}",
            dx.size(),
            dy.size()
        )));
    }
    let values = dx
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&a, &b)| a.max(b))
        .collect();
    Ok(DistanceMatrix::from_raw(dx.size(), values))
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k must satisfy 1 <= k <= n - 1 = {}, got k = {k}",
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Radius and marginal counts for every point.
///
/// The radius of point `i` is the k-th smallest joint distance to the other
/// points; `n_x` and `n_y` count the other points whose marginal distance is
/// strictly below it.
pub fn neighbor_counts(
    dz: &DistanceMatrix,
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    k: usize,
) -> Result<Vec<NeighborCount>> {
    let n = dz.size();
    if dx.size() != n || dy.size() != n {
        return Err(Error::invalid("joint and marginal matrices differ in size"));
    }
    check_k(k, n)?;
    Ok((0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |scratch: &mut Vec<f64>, i| {
                scratch.clear();
                scratch.extend(
                    dz.row(i)
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &v)| v),
                );
                let (_, &mut rho_half, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
                let inside = |row: &[f64]| {
                    row.iter()
                        .enumerate()
                        .filter(|&(j, &v)| j != i && v < rho_half)
                        .count()
                };
                NeighborCount {
                    rho_half,
                    n_x: inside(dx.row(i)),
                    n_y: inside(dy.row(i)),
                }
            },
        )
        .collect())
}

/// `psi(k) + psi(n) - mean_i [psi(n_x,i + 1) + psi(n_y,i + 1)]`.
pub fn estimate_from_counts(counts: &[NeighborCount], k: usize) -> Result<f64> {
    let n = counts.len();
    check_k(k, n)?;
    let correction: f64 = counts
        .iter()
        .map(|c| digamma_count(c.n_x + 1) + digamma_count(c.n_y + 1))
        .sum();
    Ok(digamma_count(k) + digamma_count(n) - correction / n as f64)
}

fn estimate_from_matrices(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    k: usize,
    method: Method,
) -> Result<MIEstimate> {
    let dz = joint_max_distance(dx, dy)?;
    if dz.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData(
            "all joint distances are zero (constant data)".into(),
        ));
    }
    let counts = neighbor_counts(&dz, dx, dy, k)?;
    let n = counts.len();
    let value = estimate_from_counts(&counts, k)?;
    let mean = |f: fn(&NeighborCount) -> usize| counts.iter().map(f).sum::<usize>() as f64 / n as f64;
    Ok(MIEstimate {
        value,
        method,
        k,
        n,
        mean_n_x: mean(|c| c.n_x),
        mean_n_y: mean(|c| c.n_y),
    })
}

fn check_inputs(data: &DataMatrix, part: &BlockPartition, k: usize) -> Result<()> {
    if part.n_cols() != data.n_cols() {
        return Err(Error::invalid(format!(
            "partition covers {} columns, data has {}",
            part.n_cols(),
            data.n_cols()
        )));
    }
    check_k(k, data.n_rows())
}

/// Classical KSG estimate with L-infinity marginal distances.
pub fn ksg_estimate(data: &DataMatrix, part: &BlockPartition, k: usize) -> Result<MIEstimate> {
    check_inputs(data, part, k)?;
    let dx = chebyshev_distances(data, part.x_cols())?;
    let dy = chebyshev_distances(data, part.y_cols())?;
    estimate_from_matrices(&dx, &dy, k, Method::Ksg)
}

/// G-KSG estimate: trains a forest on the joint matrix and uses the geodesic
/// dissimilarity on each block as marginal distance.
pub fn gksg_estimate(
    data: &DataMatrix,
    part: &BlockPartition,
    k: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<MIEstimate> {
    check_inputs(data, part, k)?;
    let forest = build_forest(data, params, seed)?;
    gksg_estimate_with_forest(&forest, data, part, k)
}

/// G-KSG estimate from an already trained forest.
pub fn gksg_estimate_with_forest(
    forest: &Forest,
    data: &DataMatrix,
    part: &BlockPartition,
    k: usize,
) -> Result<MIEstimate> {
    check_inputs(data, part, k)?;
    let gx = geodesic_distances(forest, data, part.x_cols())?;
    let gy = geodesic_distances(forest, data, part.y_cols())?;
    estimate_from_matrices(&gx.distances, &gy.distances, k, Method::Gksg)
}
