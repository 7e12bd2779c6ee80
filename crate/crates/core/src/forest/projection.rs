use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ColumnBlock;
use crate::error::{Error, Result};

/// One sparse column of a projection matrix: the non-zero rows and their signs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseProjection {
    terms: Vec<(usize, i8)>,
}

impl SparseProjection {
    /// `terms` lists `(feature, sign)` pairs with sign in `{-1, +1}`.
    pub fn new(terms: Vec<(usize, i8)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("projection has no non-zero entry"));
        }
        if terms.iter().any(|&(_, s)| s != 1 && s != -1) {
            return Err(Error::invalid("projection signs must be -1 or +1"));
        }
        let mut terms = terms;
        terms.sort_unstable_by_key(|&(f, _)| f);
        if terms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("projection repeats a feature"));
        }
        Ok(SparseProjection { terms })
    }

    pub fn terms(&self) -> &[(usize, i8)] {
        &self.terms
    }

    /// True when `other` equals `self` or `-self`.
    pub fn same_up_to_sign(&self, other: &SparseProjection) -> bool {
        if self.terms.len() != other.terms.len() {
            return false;
        }
        let mut pairs = self.terms.iter().zip(&other.terms);
        let Some((&(fa, sa), &(fb, sb))) = pairs.next() else {
            return true;
        };
        let flip = sa != sb;
        fa == fb && pairs.all(|(&(fa, sa), &(fb, sb))| fa == fb && (sa != sb) == flip)
    }

    /// `self` or `-self`, whichever has a positive first term.
    pub(crate) fn canonical(&self) -> SparseProjection {
        let flip = self.terms.first().is_some_and(|&(_, s)| s < 0);
        SparseProjection {
            terms: self.terms.iter().map(|&(f, s)| (f, if flip { -s } else { s })).collect(),
        }
    }

    pub(crate) fn max_feature(&self) -> usize {
        self.terms.last().map_or(0, |&(f, _)| f)
    }

    /// Dot product with `point`.
    #[inline]
    pub fn project(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(f, s) in &self.terms {
            acc += f64::from(s) * point[f];
        }
        acc
    }

    /// Dot product with `point` after zeroing every coordinate outside `block`.
    #[inline]
    pub fn project_masked(&self, point: &[f64], block: &ColumnBlock) -> f64 {
        let mut acc = 0.0;
        for &(f, s) in &self.terms {
            if block.contains(f) {
                acc += f64::from(s) * point[f];
            }
        }
        acc
    }
}

/// A `d x p` matrix with entries in `{-1, 0, +1}`, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    n_features: usize,
    sparsity: f64,
    columns: Vec<SparseProjection>,
}

impl ProjectionMatrix {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn columns(&self) -> &[SparseProjection] {
        &self.columns
    }

    /// Entry `a_ij` as an integer in `{-1, 0, 1}`.
    pub fn entry(&self, i: usize, j: usize) -> i8 {
        self.columns[j]
            .terms
            .iter()
            .find(|&&(f, _)| f == i)
            .map_or(0, |&(_, s)| s)
    }
}

/// Draws a projection matrix with `P(a_ij = 1) = P(a_ij = -1) = sparsity / 2`.
///
/// A column that comes out entirely zero is redrawn until it has a non-zero
/// entry.
pub fn sample_projection_matrix<R: Rng + ?Sized>(
    n_features: usize,
    n_projections: usize,
    sparsity: f64,
    rng: &mut R,
) -> Result<ProjectionMatrix> {
    if n_features == 0 || n_projections == 0 {
        return Err(Error::invalid("projection matrix needs d >= 1 and p >= 1"));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::invalid(format!(
            "sparsity must lie in (0, 1], got {sparsity}"
        )));
    }
    let half = sparsity / 2.0;
    let mut columns = Vec::with_capacity(n_projections);
    let mut terms = Vec::new();
    for _ in 0..n_projections {
        loop {
            terms.clear();
            for f in 0..n_features {
                let u: f64 = rng.random();
                if u < half {
                    terms.push((f, 1));
                } else if u < sparsity {
                    terms.push((f, -1));
                }
            }
            if !terms.is_empty() {
                break;
            }
        }
        columns.push(SparseProjection {
            terms: terms.clone(),
        });
    }
    Ok(ProjectionMatrix {
        n_features,
        sparsity,
        columns,
    })
}
