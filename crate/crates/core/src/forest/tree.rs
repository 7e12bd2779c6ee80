use std::ops::Range;
use std::sync::{Arc, Mutex, PoisonError};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::projection::{sample_projection_matrix, SparseProjection};
use super::ResolvedForestParams;
use crate::data::{ColumnBlock, DataMatrix};
use crate::error::{Error, Result};
use crate::fast_bic::{best_split_sorted, from_order_key, order_key, sort_values, ScanBuffers};

/// A node of a tree stored in a flat arena; children are arena indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        projection: SparseProjection,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_id: usize,
        members: Vec<usize>,
    },
}

/// A binary tree whose root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    n_features: usize,
    n_leaves: usize,
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Assembles a tree from an arena, checking that it is a proper binary
    /// tree rooted at index 0 with unique leaf ids `0..n_leaves`.
    pub fn from_nodes(n_features: usize, nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("tree has no nodes"));
        }
        let mut parents = vec![0usize; nodes.len()];
        let mut leaf_seen = Vec::new();
        for (idx, node) in nodes.iter().enumerate() {
            match node {
                TreeNode::Internal {
                    projection,
                    threshold,
                    left,
                    right,
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::invalid(format!("node {idx} has a non-finite threshold")));
                    }
                    if projection.max_feature() >= n_features {
                        return Err(Error::invalid(format!("node {idx} projects an unknown feature")));
                    }
                    for &child in [left, right] {
                        if child == 0 || child >= nodes.len() || child == idx {
                            return Err(Error::invalid(format!("node {idx} has an invalid child {child}")));
                        }
                        parents[child] += 1;
                    }
                }
                TreeNode::Leaf { leaf_id, .. } => {
                    if *leaf_id >= leaf_seen.len() {
                        leaf_seen.resize(leaf_id + 1, false);
                    }
                    if std::mem::replace(&mut leaf_seen[*leaf_id], true) {
                        return Err(Error::invalid(format!("duplicate leaf id {leaf_id}")));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::invalid("arena is not a single binary tree rooted at 0"));
        }
        if leaf_seen.iter().any(|s| !s) {
            return Err(Error::invalid("leaf ids are not contiguous from 0"));
        }
        Ok(Tree {
            n_features,
            n_leaves: leaf_seen.len(),
            nodes,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, depth)) = stack.pop() {
            match &self.nodes[idx] {
                TreeNode::Internal { left, right, .. } => {
                    stack.push((*left, depth + 1));
                    stack.push((*right, depth + 1));
                }
                TreeNode::Leaf { .. } => best = best.max(depth),
            }
        }
        best
    }

    /// Iterates over `(leaf_id, members)` of every leaf.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &[usize])> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { leaf_id, members } => Some((*leaf_id, members.as_slice())),
            TreeNode::Internal { .. } => None,
        })
    }

    /// Routes `point` to a leaf, zeroing every coordinate outside `block`.
    /// Goes left iff the projection is `<= threshold`.
    pub fn assign_leaf(&self, point: &[f64], block: &ColumnBlock) -> Result<usize> {
        if point.len() != self.n_features || block.n_total_cols() != self.n_features {
            return Err(Error::invalid(format!(
                "point has {} coordinates and block covers {}, tree expects {}",
                point.len(),
                block.n_total_cols(),
                self.n_features
            )));
        }
        Ok(self.route(point, block))
    }

    #[inline]
    pub(crate) fn route(&self, point: &[f64], block: &ColumnBlock) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Internal {
                    projection,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if projection.project_masked(point, block) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                TreeNode::Leaf { leaf_id, .. } => return *leaf_id,
            }
        }
    }
}

/// A tree flattened for routing many points on one column block.
///
/// Terms outside the block are dropped, which leaves the projection sums
/// bit-identical to [`Tree::assign_leaf`].
pub(crate) struct Router {
    nodes: Vec<RouteNode>,
    terms: Vec<(usize, f64)>,
}

#[derive(Clone, Copy)]
struct RouteNode {
    threshold: f64,
    start: u32,
    end: u32,
    /// Left child, or the leaf id when `leaf` is set.
    left: u32,
    right: u32,
    leaf: bool,
}

impl Router {
    pub(crate) fn new(tree: &Tree, block: &ColumnBlock) -> Self {
        let mut terms = Vec::new();
        let nodes = tree
            .nodes
            .iter()
            .map(|node| match node {
                TreeNode::Internal {
                    projection,
                    threshold,
                    left,
                    right,
                } => {
                    let start = terms.len() as u32;
                    terms.extend(
                        projection
                            .terms()
                            .iter()
                            .filter(|&&(f, _)| block.contains(f))
                            .map(|&(f, s)| (f, f64::from(s))),
                    );
                    RouteNode {
                        threshold: *threshold,
                        start,
                        end: terms.len() as u32,
                        left: *left as u32,
                        right: *right as u32,
                        leaf: false,
                    }
                }
                TreeNode::Leaf { leaf_id, .. } => RouteNode {
                    threshold: 0.0,
                    start: 0,
                    end: 0,
                    left: *leaf_id as u32,
                    right: 0,
                    leaf: true,
                },
            })
            .collect();
        Router { nodes, terms }
    }

    #[inline]
    pub(crate) fn route(&self, point: &[f64]) -> usize {
        let mut node = self.nodes[0];
        while !node.leaf {
            let mut acc = 0.0;
            for &(f, s) in &self.terms[node.start as usize..node.end as usize] {
                acc += s * point[f];
            }
            node = self.nodes[if acc <= node.threshold { node.left } else { node.right } as usize];
        }
        node.left as usize
    }
}

/// Grows one tree on the rows `sample_ids` of `data`.
///
/// Every node holding at least `min_split` points draws a fresh projection
/// matrix, searches the best fast-BIC cut on each projected column and keeps
/// the overall lowest-BIC cut. Nodes below `min_split` or without any
/// admissible cut become leaves.
pub fn grow_tree<R: Rng + ?Sized>(
    data: &DataMatrix,
    sample_ids: &[usize],
    params: &ResolvedForestParams,
    rng: &mut R,
) -> Result<Tree> {
    grow_tree_caching(data, sample_ids, params, rng, CACHED_PROJECTIONS, &FullOrders::default())
}

/// [`grow_tree`] drawing on whole-data orders shared with other trees.
pub(crate) fn grow_tree_shared<R: Rng + ?Sized>(
    data: &DataMatrix,
    sample_ids: &[usize],
    params: &ResolvedForestParams,
    rng: &mut R,
    orders: &FullOrders,
) -> Result<Tree> {
    grow_tree_caching(data, sample_ids, params, rng, CACHED_PROJECTIONS, orders)
}

fn grow_tree_caching<R: Rng + ?Sized>(
    data: &DataMatrix,
    sample_ids: &[usize],
    params: &ResolvedForestParams,
    rng: &mut R,
    capacity: usize,
    orders: &FullOrders,
) -> Result<Tree> {
    if sample_ids.len() < 2 {
        return Err(Error::invalid("a tree needs at least 2 training points"));
    }
    if let Some(&i) = sample_ids.iter().find(|&&i| i >= data.n_rows()) {
        return Err(Error::invalid(format!("training index {i} out of range")));
    }
    let d = data.n_cols();
    let mut nodes = vec![placeholder()];
    let mut n_leaves = 0;
    // (rows, node slot, start of the node's range in the sort cache, usable classes)
    let mut stack = vec![(sample_ids.to_vec(), 0usize, 0usize, 0u32)];
    let mut scratch = SplitScratch::default();
    let mut cache = SortCache::new(sample_ids.len(), data.n_rows(), capacity, orders);
    let mut goes_left = vec![false; data.n_rows()];
    while let Some((ids, slot, start, mut mask)) = stack.pop() {
        let split = if ids.len() >= params.min_split {
            let node = NodeRows { ids: &ids, start };
            best_node_split(data, node, params, rng, &mut scratch, &mut cache, &mut mask)?
        } else {
            None
        };
        match split {
            None => {
                nodes[slot] = TreeNode::Leaf {
                    leaf_id: n_leaves,
                    members: ids,
                };
                n_leaves += 1;
            }
            Some((projection, threshold)) => {
                let (left_ids, right_ids): (Vec<usize>, Vec<usize>) = ids
                    .iter()
                    .partition(|&&i| projection.project(data.row(i)) <= threshold);
                debug_assert!(!left_ids.is_empty() && !right_ids.is_empty());
                let grows = |len: usize| len >= params.min_split;
                if mask != 0 && (grows(left_ids.len()) || grows(right_ids.len())) {
                    for &i in &left_ids {
                        goes_left[i] = true;
                    }
                    cache.partition(mask, start..start + ids.len(), &goes_left);
                    for &i in &left_ids {
                        goes_left[i] = false;
                    }
                }
                let left = nodes.len();
                let right = left + 1;
                nodes.push(placeholder());
                nodes.push(placeholder());
                nodes[slot] = TreeNode::Internal {
                    projection,
                    threshold,
                    left,
                    right,
                };
                let right_start = start + left_ids.len();
                stack.push((right_ids, right, right_start, mask));
                stack.push((left_ids, left, start, mask));
            }
        }
    }
    Ok(Tree {
        n_features: d,
        n_leaves,
        nodes,
    })
}

fn placeholder() -> TreeNode {
    TreeNode::Leaf {
        leaf_id: usize::MAX,
        members: Vec::new(),
    }
}

/// Most distinct projections per tree whose sorted rows are kept.
const CACHED_PROJECTIONS: usize = 8;

/// Nodes with at least `1 / FILTER_RATIO` of the data rows take their order
/// from the whole-data order.
const FILTER_RATIO: usize = 4;

/// Leaves `(order key, row)` of `ids` sorted in `pairs`; ties in value fall
/// back to the row index.
fn sort_by_projection(projection: &SparseProjection, data: &DataMatrix, ids: &[usize], pairs: &mut Vec<(u64, usize)>) {
    pairs.clear();
    pairs.extend(ids.iter().map(|&i| (order_key(projection.project(data.row(i))), i)));
    pairs.sort_unstable();
}

struct RowOrder {
    values: Vec<f64>,
    ids: Vec<usize>,
}

/// All data rows sorted by recurring projections, shared by the trees of a
/// forest. Keeping only a node's rows gives the order a sort of those rows
/// would.
#[derive(Default)]
pub(crate) struct FullOrders {
    orders: Mutex<Vec<(SparseProjection, Arc<RowOrder>)>>,
}

impl FullOrders {
    fn get(&self, projection: &SparseProjection, data: &DataMatrix) -> Option<Arc<RowOrder>> {
        let mut orders = self.orders.lock().unwrap_or_else(PoisonError::into_inner);
        if let Some((_, order)) = orders.iter().find(|(p, _)| p == projection) {
            return Some(Arc::clone(order));
        }
        if orders.len() == CACHED_PROJECTIONS {
            return None;
        }
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        let mut pairs = Vec::new();
        sort_by_projection(projection, data, &rows, &mut pairs);
        let order = Arc::new(RowOrder {
            values: pairs.iter().map(|&(k, _)| from_order_key(k)).collect(),
            ids: pairs.iter().map(|&(_, i)| i).collect(),
        });
        orders.push((projection.clone(), Arc::clone(&order)));
        Some(order)
    }
}

/// Rows sorted by one projection, in canonical sign.
struct SortedClass {
    projection: SparseProjection,
    values: Vec<f64>,
    ids: Vec<usize>,
}

/// Sorted orders of recurring projections for one tree. Each node owns the
/// same range of every buffer, and a class is usable at a node once it has
/// been sorted there or at an ancestor.
struct SortCache<'a> {
    size: usize,
    capacity: usize,
    classes: Vec<SortedClass>,
    orders: &'a FullOrders,
    /// Membership of the rows being filtered out of a whole-data order.
    member: Vec<bool>,
    spare_values: Vec<f64>,
    spare_ids: Vec<usize>,
}

impl<'a> SortCache<'a> {
    fn new(size: usize, n_rows: usize, capacity: usize, orders: &'a FullOrders) -> Self {
        debug_assert!(capacity <= 32);
        SortCache {
            size,
            capacity,
            classes: Vec::new(),
            orders,
            member: vec![false; n_rows],
            spare_values: Vec::new(),
            spare_ids: Vec::new(),
        }
    }

    /// Index of the class of `column`, adding one while there is room.
    fn class_of(&mut self, column: &SparseProjection) -> Option<usize> {
        if let Some(k) = self.classes.iter().position(|c| c.projection.same_up_to_sign(column)) {
            return Some(k);
        }
        if self.classes.len() == self.capacity {
            return None;
        }
        self.classes.push(SortedClass {
            projection: column.canonical(),
            values: vec![0.0; self.size],
            ids: vec![0; self.size],
        });
        Some(self.classes.len() - 1)
    }

    fn sort_rows(&mut self, k: usize, data: &DataMatrix, node: NodeRows, pairs: &mut Vec<(u64, usize)>) {
        let class = &mut self.classes[k];
        let range = node.range();
        let (values, ids) = (&mut class.values[range.clone()], &mut class.ids[range]);
        // Filtering a whole-data order beats sorting for large nodes.
        let full = if node.ids.len() * FILTER_RATIO >= data.n_rows() {
            self.orders.get(&class.projection, data)
        } else {
            None
        };
        if let Some(full) = full {
            for &i in node.ids {
                self.member[i] = true;
            }
            let kept = full.ids.iter().zip(&full.values).filter(|&(&i, _)| self.member[i]);
            for ((v, id), (&i, &value)) in values.iter_mut().zip(ids.iter_mut()).zip(kept) {
                *v = value;
                *id = i;
            }
            for &i in node.ids {
                self.member[i] = false;
            }
            return;
        }
        sort_by_projection(&class.projection, data, node.ids, pairs);
        for ((v, id), &(key, i)) in values.iter_mut().zip(ids.iter_mut()).zip(pairs.iter()) {
            *v = from_order_key(key);
            *id = i;
        }
    }

    /// Stable partition of `range` in every class of `mask`, rows marked in
    /// `goes_left` first.
    fn partition(&mut self, mask: u32, range: Range<usize>, goes_left: &[bool]) {
        for (k, class) in self.classes.iter_mut().enumerate() {
            if mask & (1 << k) == 0 {
                continue;
            }
            let values = &mut class.values[range.clone()];
            let ids = &mut class.ids[range.clone()];
            self.spare_values.clear();
            self.spare_ids.clear();
            let mut w = 0;
            for r in 0..ids.len() {
                let (v, i) = (values[r], ids[r]);
                if goes_left[i] {
                    values[w] = v;
                    ids[w] = i;
                    w += 1;
                } else {
                    self.spare_values.push(v);
                    self.spare_ids.push(i);
                }
            }
            values[w..].copy_from_slice(&self.spare_values);
            ids[w..].copy_from_slice(&self.spare_ids);
        }
    }
}

/// The rows of a node and where they sit in the sort cache.
#[derive(Clone, Copy)]
struct NodeRows<'a> {
    ids: &'a [usize],
    start: usize,
}

impl NodeRows<'_> {
    fn range(&self) -> Range<usize> {
        self.start..self.start + self.ids.len()
    }
}

#[derive(Default)]
struct SplitScratch {
    projected: Vec<f64>,
    keys: Vec<u64>,
    pairs: Vec<(u64, usize)>,
    scan: ScanBuffers,
}

/// Best cut over a fresh projection matrix. Classes sorted here are added
/// to `mask`.
fn best_node_split<R: Rng + ?Sized>(
    data: &DataMatrix,
    node: NodeRows,
    params: &ResolvedForestParams,
    rng: &mut R,
    scratch: &mut SplitScratch,
    cache: &mut SortCache,
    mask: &mut u32,
) -> Result<Option<(SparseProjection, f64)>> {
    let a = sample_projection_matrix(data.n_cols(), params.projections, params.sparsity, rng)?;
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, column) in a.columns().iter().enumerate() {
        // A repeated or negated column yields the same candidate partitions.
        if a.columns()[..j].iter().any(|c| c.same_up_to_sign(column)) {
            continue;
        }
        let values: &[f64] = match cache.class_of(column) {
            Some(k) => {
                if *mask & (1 << k) == 0 {
                    cache.sort_rows(k, data, node, &mut scratch.pairs);
                    *mask |= 1 << k;
                }
                let class = &cache.classes[k];
                let sorted = &class.values[node.range()];
                if class.projection == *column {
                    sorted
                } else {
                    // Projections never sum to -0.0, so zeros keep their sign.
                    scratch.projected.clear();
                    scratch
                        .projected
                        .extend(sorted.iter().rev().map(|&v| if v == 0.0 { 0.0 } else { -v }));
                    &scratch.projected
                }
            }
            None => {
                scratch.projected.clear();
                scratch
                    .projected
                    .extend(node.ids.iter().map(|&i| column.project(data.row(i))));
                sort_values(&mut scratch.projected, &mut scratch.keys);
                &scratch.projected
            }
        };
        let eval = best_split_sorted(values, params.min_cluster, &mut scratch.scan);
        if let Some(eval) = eval {
            if best.is_none_or(|(_, bic, _)| eval.bic < bic) {
                best = Some((j, eval.bic, eval.threshold));
            }
        }
    }
    Ok(best.map(|(j, _, threshold)| (a.columns()[j].clone(), threshold)))
}
