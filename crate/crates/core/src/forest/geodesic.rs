use rayon::prelude::*;

use super::tree::Router;
use super::Forest;
use crate::data::{ColumnBlock, DataMatrix, DistanceMatrix};
use crate::error::{Error, Result};

/// Slack added to the tree count in the local-distance normaliser.
pub const LOCAL_EPSILON: f64 = 1e-6;

/// Adjusted forest dissimilarity on one column block.
///
/// Off-diagonal entries equal `1 - L_ij / T` when the pair is separated in at
/// least one tree, and `||z_i - z_j||_2 / (c (T + eps))` otherwise, where `c`
/// is the largest pairwise L2 distance on the block. The second case is
/// always below `1 / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicDistanceMatrix {
    pub distances: DistanceMatrix,
    pub block: Vec<usize>,
    /// Largest pairwise L2 distance on the block.
    pub c: f64,
    pub epsilon: f64,
    pub trees: usize,
}

/// Leaf index of every row in every tree, stored row-major as `codes[i * T + t]`.
fn leaf_codes<C>(forest: &Forest, data: &DataMatrix, block: &ColumnBlock) -> Vec<C>
where
    C: Copy + Default + Send + Sync + TryFrom<usize>,
{
    let (n, t_total) = (data.n_rows(), forest.n_trees());
    // Tree-major so that each tree stays in cache while every row is routed.
    let per_tree: Vec<Vec<C>> = forest
        .trees()
        .par_iter()
        .map(|tree| {
            let router = Router::new(tree, block);
            data.rows()
                .map(|row| C::try_from(router.route(row)).unwrap_or_default())
                .collect()
        })
        .collect();
    let mut codes = vec![C::default(); n * t_total];
    for (t, column) in per_tree.iter().enumerate() {
        for (i, &c) in column.iter().enumerate() {
            codes[i * t_total + t] = c;
        }
    }
    codes
}

#[inline]
fn matches<C: Copy + Eq>(a: &[C], b: &[C]) -> u32 {
    a.iter().zip(b).map(|(x, y)| u32::from(x == y)).sum()
}

/// Symmetric `n x n` co-leaf count matrix from a code table.
fn counts_from_codes<C: Copy + Eq + Send + Sync>(codes: &[C], n: usize, t_total: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n * n];
    counts
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let a = &codes[i * t_total..(i + 1) * t_total];
            row[i] = t_total as u32;
            for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
                *slot = matches(a, &codes[j * t_total..(j + 1) * t_total]);
            }
        });
    for i in 0..n {
        for j in 0..i {
            counts[i * n + j] = counts[j * n + i];
        }
    }
    counts
}

/// Co-leaf counts when, after sorting the rows by `order`, every leaf of
/// every tree holds a contiguous run. Pairs are then separated in a tree
/// exactly when a run boundary lies between them, which the nearest boundary
/// on each side of a row decides. Returns `None` if some leaf is split.
fn counts_from_runs<C>(codes: &[C], order: &[usize], n: usize, t_total: usize) -> Option<Vec<u32>>
where
    C: Copy + Eq + Send + Sync + Into<u32>,
{
    let code = |p: usize, t: usize| codes[order[p] * t_total + t];
    let max_code = codes.iter().map(|&c| c.into()).max().unwrap_or(0) as usize;
    // next[p * T + t]: first boundary q > p; prev[p * T + t]: last boundary q <= p.
    // A boundary at q separates positions q - 1 and q.
    let mut next = vec![n as u32; n * t_total];
    let mut prev = vec![0u32; n * t_total];
    let mut stamp = vec![usize::MAX; max_code + 1];
    for t in 0..t_total {
        let mut runs = 0;
        let mut last = 0u32;
        for p in 0..n {
            if p == 0 || code(p, t) != code(p - 1, t) {
                let c: u32 = code(p, t).into();
                if stamp[c as usize] == t {
                    return None;
                }
                stamp[c as usize] = t;
                runs += 1;
                last = p as u32;
            }
            prev[p * t_total + t] = last;
        }
        debug_assert!(runs >= 1);
        let mut last = n as u32;
        for p in (0..n).rev() {
            next[p * t_total + t] = last;
            if p > 0 && code(p, t) != code(p - 1, t) {
                last = p as u32;
            }
        }
    }
    let mut rank = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        rank[i] = p;
    }
    let mut counts = vec![0u32; n * n];
    counts
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each_init(
            || vec![0u32; n + 1],
            |hist, (i, row)| {
                let p = rank[i];
                row[i] = t_total as u32;
                hist.fill(0);
                for &q in &next[p * t_total..(p + 1) * t_total] {
                    hist[q as usize] += 1;
                }
                let mut separated = 0;
                for j in p + 1..n {
                    separated += hist[j];
                    row[order[j]] = t_total as u32 - separated;
                }
                hist.fill(0);
                for &q in &prev[p * t_total..(p + 1) * t_total] {
                    hist[q as usize] += 1;
                }
                let mut separated = 0;
                for j in (0..p).rev() {
                    separated += hist[j + 1];
                    row[order[j]] = t_total as u32 - separated;
                }
            },
        );
    Some(counts)
}

fn block_for(forest: &Forest, data: &DataMatrix, block: &[usize]) -> Result<ColumnBlock> {
    if block.is_empty() {
        return Err(Error::invalid("geodesic distances need a non-empty block"));
    }
    if data.n_cols() != forest.n_features() {
        return Err(Error::invalid(format!(
            "data has {} columns but the forest was trained on {}",
            data.n_cols(),
            forest.n_features()
        )));
    }
    ColumnBlock::new(block, data.n_cols())
}

fn leaf_counts(forest: &Forest, data: &DataMatrix, block: &ColumnBlock) -> Vec<u32> {
    let max_leaves = forest.trees().iter().map(|t| t.n_leaves()).max().unwrap_or(0);
    if max_leaves <= usize::from(u16::MAX) + 1 {
        counts_for::<u16>(forest, data, block)
    } else {
        counts_for::<u32>(forest, data, block)
    }
}

fn counts_for<C>(forest: &Forest, data: &DataMatrix, block: &ColumnBlock) -> Vec<u32>
where
    C: Copy + Default + Eq + Send + Sync + TryFrom<usize> + Into<u32>,
{
    let (n, t_total) = (data.n_rows(), forest.n_trees());
    let codes = leaf_codes::<C>(forest, data, block);
    // On a single column every split is a threshold on that column, so leaves
    // are intervals of it.
    if let [col] = block.cols() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data.row(a)[*col].total_cmp(&data.row(b)[*col]));
        if let Some(counts) = counts_from_runs(&codes, &order, n, t_total) {
            return counts;
        }
    }
    counts_from_codes(&codes, n, t_total)
}

/// Row-major `n x n` matrix of `L_ij`, the number of trees in which rows `i`
/// and `j` reach the same leaf when routed on `block`. The diagonal holds `T`.
pub fn co_leaf_counts(forest: &Forest, data: &DataMatrix, block: &[usize]) -> Result<Vec<u32>> {
    let block = block_for(forest, data, block)?;
    Ok(leaf_counts(forest, data, &block))
}

#[inline]
fn l2_on_block(a: &[f64], b: &[f64], cols: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &c in cols {
        let diff = a[c] - b[c];
        acc += diff * diff;
    }
    acc.sqrt()
}

/// Largest pairwise L2 distance between rows of `data` restricted to `cols`.
fn max_pairwise_l2(data: &DataMatrix, cols: &[usize]) -> f64 {
    (0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let a = data.row(i);
            (i + 1..data.n_rows())
                .map(|j| l2_on_block(a, data.row(j), cols))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Computes the adjusted dissimilarity between all rows of `data` on `block`.
///
/// Every row, in-bag or not, is routed through every tree with the
/// coordinates outside `block` set to zero.
pub fn geodesic_distances(
    forest: &Forest,
    data: &DataMatrix,
    block: &[usize],
) -> Result<GeodesicDistanceMatrix> {
    let block = block_for(forest, data, block)?;
    let n = data.n_rows();
    let trees = forest.n_trees();
    let t_total = trees as u32;
    let t_f = trees as f64;
    let counts = leaf_counts(forest, data, &block);
    let c = max_pairwise_l2(data, block.cols());
    let local_scale = if c > 0.0 { 1.0 / (c * (t_f + LOCAL_EPSILON)) } else { 0.0 };

    let mut values = vec![0.0f64; n * n];
    values
        .par_chunks_mut(n.max(1))
        .zip(counts.par_chunks(n.max(1)))
        .enumerate()
        .for_each(|(i, (out, shared_row))| {
            let zi = data.row(i);
            for (j, (slot, &shared)) in out.iter_mut().zip(shared_row).enumerate() {
                *slot = if j == i {
                    0.0
                } else if shared < t_total {
                    f64::from(t_total - shared) / t_f
                } else if local_scale > 0.0 {
                    l2_on_block(zi, data.row(j), block.cols()) * local_scale
                } else {
                    0.0
                };
            }
        });
    Ok(GeodesicDistanceMatrix {
        distances: DistanceMatrix::from_raw(n, values),
        block: block.cols().to_vec(),
        c,
        epsilon: LOCAL_EPSILON,
        trees,
    })
}
