//! One-dimensional two-cluster split search under a BIC-penalised hard
//! Gaussian mixture.
//!
//! A candidate cut divides the sorted sample into a left and a right
//! cluster. Each cluster is summarised by its count, mean and population
//! variance; the cut with the lowest BIC wins. [`best_split_linear`] scores all
//! cuts from one set of prefix moments, [`best_split_quadratic`] recomputes
//! every segment from scratch and exists as the reference it is checked
//! against.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math_kernels::{FastLn, PrefixMoments, FAST_LN_MAX_ERR};

/// Number of free parameters of the two-cluster model.
pub const MODEL_PARAMETERS: f64 = 5.0;

/// Per-cluster Gaussian statistics of one side of a cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub count: usize,
    pub mean: f64,
    /// Population variance, before flooring.
    pub variance: f64,
    /// Fraction of the sample in this cluster.
    pub weight: f64,
}

/// The winning cut of a one-dimensional sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEvaluation {
    /// Points assigned to the left cluster (values `<= threshold`).
    pub cut_count: usize,
    pub threshold: f64,
    pub bic: f64,
    pub left: ClusterStats,
    pub right: ClusterStats,
}

/// Smallest variance admitted inside the log-likelihood for a sample whose
/// values span `range`.
pub fn variance_floor(range: f64) -> f64 {
    1e-12 * range * range + 1e-300
}

/// BIC of the hard two-cluster Gaussian model described by `left` and `right`.
///
/// `-2 log L + log(n) * 5` with
/// `log L = sum_i n_i log w_i - n_i/2 log(2 pi s_i^2) - n_i/2`,
/// where each `s_i^2` is the cluster variance raised to `variance_floor`.
pub fn bic_of_partition(left: &ClusterStats, right: &ClusterStats, variance_floor: f64) -> f64 {
    let n = (left.count + right.count) as f64;
    let log_lik = cluster_log_likelihood(left, variance_floor)
        + cluster_log_likelihood(right, variance_floor);
    -2.0 * log_lik + n.ln() * MODEL_PARAMETERS
}

fn cluster_log_likelihood(c: &ClusterStats, floor: f64) -> f64 {
    let ni = c.count as f64;
    let var = c.variance.max(floor);
    ni * c.weight.ln() - 0.5 * ni * (2.0 * PI * var).ln() - 0.5 * ni
}

/// Best cut of `seq` in O(n) after an O(n log n) sort.
///
/// Returns `Ok(None)` when no cut separates distinct values (all values
/// identical). Exact BIC ties go to the smallest left cluster.
pub fn best_split_linear(seq: &[f64]) -> Result<Option<SplitEvaluation>> {
    best_split_linear_min(seq, 1)
}

/// [`best_split_linear`] restricted to cuts leaving at least `min_cluster`
/// points on each side.
pub fn best_split_linear_min(seq: &[f64], min_cluster: usize) -> Result<Option<SplitEvaluation>> {
    let sorted = sorted_copy(seq)?;
    check_min_cluster(min_cluster)?;
    Ok(best_split_sorted(&sorted, min_cluster, &mut ScanBuffers::default()))
}

fn check_min_cluster(min_cluster: usize) -> Result<()> {
    if min_cluster == 0 {
        return Err(Error::invalid("min_cluster must be >= 1"));
    }
    Ok(())
}

/// Admissible cut positions: each side keeps `min_cluster` points and the
/// straddling values differ.
fn cuts(sorted: &[f64], min_cluster: usize) -> impl Iterator<Item = usize> + '_ {
    let n = sorted.len();
    (min_cluster..=n.saturating_sub(min_cluster))
        .filter(move |&cut| cut >= 1 && cut < n && sorted[cut - 1] < sorted[cut])
}

/// Same contract as [`best_split_linear`] but every candidate's segment
/// statistics are recomputed with two-pass formulas, O(n^2) overall.
pub fn best_split_quadratic(seq: &[f64]) -> Result<Option<SplitEvaluation>> {
    best_split_quadratic_min(seq, 1)
}

/// [`best_split_quadratic`] with the cut restriction of [`best_split_linear_min`].
pub fn best_split_quadratic_min(seq: &[f64], min_cluster: usize) -> Result<Option<SplitEvaluation>> {
    let sorted = sorted_copy(seq)?;
    check_min_cluster(min_cluster)?;
    let n = sorted.len();
    let floor = variance_floor(sorted[n - 1] - sorted[0]);
    let mut best: Option<SplitEvaluation> = None;
    for cut in cuts(&sorted, min_cluster) {
        let left = two_pass_stats(&sorted[..cut], n);
        let right = two_pass_stats(&sorted[cut..], n);
        let bic = bic_of_partition(&left, &right, floor);
        if best.is_none_or(|b| bic < b.bic) {
            best = Some(SplitEvaluation {
                cut_count: cut,
                threshold: midpoint(sorted[cut - 1], sorted[cut]),
                bic,
                left,
                right,
            });
        }
    }
    Ok(best)
}

fn sorted_copy(seq: &[f64]) -> Result<Vec<f64>> {
    if seq.len() < 2 {
        return Err(Error::invalid(format!(
            "split search needs at least 2 values, got {}",
            seq.len()
        )));
    }
    if seq.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("split search over non-finite values"));
    }
    let mut sorted = seq.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted)
}

/// Integer key whose unsigned order is the IEEE total order of `v`.
#[inline]
pub(crate) fn order_key(v: f64) -> u64 {
    const SIGN: u64 = 1 << 63;
    let b = v.to_bits();
    if b & SIGN != 0 {
        !b
    } else {
        b | SIGN
    }
}

/// Inverse of [`order_key`].
#[inline]
pub(crate) fn from_order_key(k: u64) -> f64 {
    const SIGN: u64 = 1 << 63;
    f64::from_bits(if k & SIGN != 0 { k & !SIGN } else { !k })
}

/// Sorts `values` ascending in IEEE total order through order-preserving
/// integer keys; `keys` is scratch space.
pub(crate) fn sort_values(values: &mut [f64], keys: &mut Vec<u64>) {
    keys.clear();
    keys.extend(values.iter().map(|&v| order_key(v)));
    keys.sort_unstable();
    for (v, &k) in values.iter_mut().zip(keys.iter()) {
        *v = from_order_key(k);
    }
}

/// Allocations reused across linear scans.
pub(crate) struct ScanBuffers {
    /// Values minus the scan shift.
    shifted: Vec<f64>,
    /// Prefix sums of `shifted` and of its squares.
    s: Vec<f64>,
    ss: Vec<f64>,
    /// Compensated prefix moments, built only when a segment needs them.
    exact: PrefixMoments,
    /// `m ln m`, `ln m` and [`rounding_scale`] for `m = 0..len`.
    xlogx: Vec<f64>,
    ln_m: Vec<f64>,
    scale: Vec<f64>,
    /// Rough score of every admissible cut, `INFINITY` elsewhere.
    rough: Vec<f64>,
}

/// Sums of `shifted[from..]` and of its squares, accumulated from the end.
#[inline]
fn suffix_sums(shifted: &[f64], from: usize) -> (f64, f64) {
    shifted[from..]
        .iter()
        .rev()
        .fold((0.0, 0.0), |(t, tt), &d| (t + d, tt + d * d))
}

/// Bound on `|ln v|` for floored variances of finite data.
const LN_RANGE: f64 = 710.0;

impl Default for ScanBuffers {
    fn default() -> Self {
        ScanBuffers {
            shifted: Vec::new(),
            s: Vec::new(),
            ss: Vec::new(),
            exact: PrefixMoments::empty(),
            xlogx: vec![0.0],
            ln_m: vec![f64::NEG_INFINITY],
            scale: vec![0.0],
            rough: Vec::new(),
        }
    }
}

impl ScanBuffers {
    fn grow_xlogx(&mut self, n: usize) {
        for m in self.xlogx.len()..=n {
            let m = m as f64;
            self.xlogx.push(m * m.ln());
            self.ln_m.push(m.ln());
            self.scale.push(rounding_scale(m));
        }
    }

    fn fill(&mut self, sorted: &[f64], shift: f64) {
        self.shifted.clear();
        self.shifted.extend(sorted.iter().map(|v| v - shift));
        self.s.clear();
        self.ss.clear();
        self.s.push(0.0);
        self.ss.push(0.0);
        self.s.extend(self.shifted.iter().scan(0.0, |acc, &d| {
            *acc += d;
            Some(*acc)
        }));
        self.ss.extend(self.shifted.iter().scan(0.0, |acc, &d| {
            *acc += d * d;
            Some(*acc)
        }));
    }
}

/// Segments at most this long fall back to a direct two-pass variance.
const DIRECT_MAX: usize = 16;

/// `len^2` times the variance of a segment, from the plain sums `s`, `ss` of
/// its shifted values, when rounding cannot move the result by more than
/// 1e-10 relative.
#[inline(always)]
fn plain_centered(len: usize, s: f64, ss: f64) -> Option<f64> {
    let m = len as f64;
    plain_centered_scaled(m, rounding_scale(m), s, ss)
}

/// Recursive summation of `m` terms plus the shift, squaring and the final
/// cancellation stay below `rounding_scale(m) * ss`.
#[inline(always)]
fn rounding_scale(m: f64) -> f64 {
    (3.2 * m + 8.0) * (f64::EPSILON / 2.0) * m
}

/// [`plain_centered`] with `m` and its rounding scale given.
#[inline(always)]
fn plain_centered_scaled(m: f64, scale: f64, s: f64, ss: f64) -> Option<f64> {
    let centered = m * ss - s * s;
    (centered > 1e10 * (scale * ss)).then_some(centered)
}

/// `a.max(b)` for non-NaN arguments, without the NaN handling.
#[inline(always)]
fn larger(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

#[inline]
fn plain_variance(len: usize, s: f64, ss: f64) -> Option<f64> {
    let m = len as f64;
    plain_centered(len, s, ss).map(|c| c / (m * m))
}

/// Linear scan over an already sorted, finite sequence of length >= 2.
///
/// Cuts are ranked by `sum_i n_i ln s_i^2 - 2 n_i ln n_i`, which differs from
/// the BIC by a term that depends on `n` only. Left segments come from prefix
/// sums and right segments from a running suffix sum, both taken about the
/// median so that neither needs a subtraction of large prefixes.
pub(crate) fn best_split_sorted(
    sorted: &[f64],
    min_cluster: usize,
    buf: &mut ScanBuffers,
) -> Option<SplitEvaluation> {
    let n = sorted.len();
    debug_assert!(n >= 2);
    let range = sorted[n - 1] - sorted[0];
    if !(range > 0.0) {
        return None;
    }
    let floor = variance_floor(range);
    let shift = sorted[n / 2];
    buf.fill(sorted, shift);
    buf.grow_xlogx(n);
    let ScanBuffers { shifted, s, ss, exact, xlogx, ln_m, scale, rough } = buf;
    let mut exact_ready = false;
    let mut variance = |i: usize, j: usize, plain: Option<f64>| -> f64 {
        if let Some(v) = plain {
            return v;
        }
        if j - i < DIRECT_MAX {
            return two_pass_stats(&sorted[i - 1..j], n).variance;
        }
        if !exact_ready {
            exact.rebuild_about(sorted, shift);
            exact_ready = true;
        }
        exact.segment_variance_unchecked(i, j)
    };

    // Cuts are visited right to left so the suffix sums grow by one value at
    // a time. Each cut gets a rough score from `FastLn`; only cuts whose rough
    // score lies within twice the rough/exact gap of the rough minimum can
    // win, and those are rescored with `ln`.
    let lo = min_cluster.max(1);
    let hi = n.saturating_sub(min_cluster).min(n - 1);
    if lo > hi {
        return None;
    }
    let fast = FastLn::new();
    let ln_floor = floor.ln();
    // Views of length exactly `n` or `n + 1` let the scan drop bounds checks.
    let (s, ss) = (&s[..=n], &ss[..=n]);
    let (xlogx, ln_m, scale, shifted) = (&xlogx[..=n], &ln_m[..=n], &scale[..=n], &shifted[..n]);
    rough.clear();
    rough.resize(n, f64::INFINITY);
    let mut rough_best = f64::INFINITY;
    let (mut ts, mut tss) = suffix_sums(shifted, hi);
    for cut in (lo..=hi).rev() {
        if sorted[cut - 1] < sorted[cut] {
            let (ml, mr) = (cut as f64, (n - cut) as f64);
            let ln_vl = match plain_centered_scaled(ml, scale[cut], s[cut], ss[cut]) {
                Some(c) => fast.ln(c) - 2.0 * ln_m[cut],
                None => fast.ln(variance(1, cut, None).max(floor)),
            };
            let ln_vr = match plain_centered_scaled(mr, scale[n - cut], ts, tss) {
                Some(c) => fast.ln(c) - 2.0 * ln_m[n - cut],
                None => fast.ln(variance(cut + 1, n, None).max(floor)),
            };
            let score = ml * larger(ln_vl, ln_floor) + mr * larger(ln_vr, ln_floor)
                - 2.0 * (xlogx[cut] + xlogx[n - cut]);
            rough[cut] = score;
            if score < rough_best {
                rough_best = score;
            }
        }
        // Extends the suffix to the next cut; the last update goes unused.
        let d = shifted[cut - 1];
        ts += d;
        tss += d * d;
    }
    if rough_best == f64::INFINITY {
        // Every increase between neighbours falls outside the admissible cuts.
        return None;
    }
    let nf = n as f64;
    let gap = nf * (FAST_LN_MAX_ERR + 16.0 * f64::EPSILON * (LN_RANGE + 2.0 * nf.ln()));
    let limit = rough_best + 2.0 * gap;
    // Ascending cuts with a strict `<` keep the smallest cut among exact ties.
    let mut best: Option<(usize, f64)> = None;
    for cut in lo..=hi {
        if !(rough[cut] <= limit) {
            continue;
        }
        let (ts, tss) = suffix_sums(shifted, cut);
        let vl = variance(1, cut, plain_variance(cut, s[cut], ss[cut])).max(floor);
        let vr = variance(cut + 1, n, plain_variance(n - cut, ts, tss)).max(floor);
        let score = cut as f64 * vl.ln() + (n - cut) as f64 * vr.ln()
            - 2.0 * (xlogx[cut] + xlogx[n - cut]);
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((cut, score));
        }
    }

    let (cut, _) = best?;
    let (left, right) = (two_pass_stats(&sorted[..cut], n), two_pass_stats(&sorted[cut..], n));
    Some(SplitEvaluation {
        cut_count: cut,
        threshold: midpoint(sorted[cut - 1], sorted[cut]),
        bic: bic_of_partition(&left, &right, floor),
        left,
        right,
    })
}

fn two_pass_stats(seg: &[f64], n: usize) -> ClusterStats {
    let count = seg.len();
    let c = count as f64;
    let rough = seg.iter().sum::<f64>() / c;
    // Corrected two-pass: the residual sum removes the rounding error of the
    // first-pass mean.
    let resid = seg.iter().map(|v| v - rough).sum::<f64>();
    let mean = rough + resid / c;
    let variance = (seg.iter().map(|v| (v - rough) * (v - rough)).sum::<f64>() - resid * resid / c) / c;
    ClusterStats {
        count,
        mean,
        variance,
        weight: count as f64 / n as f64,
    }
}

/// Midpoint of `a < b` that is guaranteed to satisfy `a <= m < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn ties_at_the_margins_leave_no_cut() {
        // The only increases sit within `min_cluster` of either end.
        let seq = [0.0, 1.0, 1.0, 1.0, 1.0, 2.0];
        assert!(best_split_linear_min(&seq, 2).unwrap().is_none());
        assert!(best_split_quadratic_min(&seq, 2).unwrap().is_none());
        assert!(best_split_linear_min(&seq, 1).unwrap().is_some());
    }

    #[test]
    fn two_blocks_split_in_the_middle() {
        let seq = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let lin = best_split_linear(&seq).unwrap().unwrap();
        assert_eq!(lin.cut_count, 3);
        assert_eq!(lin.threshold, 5.0);
        let quad = best_split_quadratic(&seq).unwrap().unwrap();
        assert_eq!(quad.cut_count, 3);
        assert!(lin.bic.is_finite());
    }

    #[test]
    fn balanced_split_beats_all_unbalanced_ones() {
        // Enumerate every cut of the unordered sample directly, tie rule aside.
        let seq = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let floor = variance_floor(10.0);
        let score = |cut: usize| {
            bic_of_partition(
                &two_pass_stats(&seq[..cut], 6),
                &two_pass_stats(&seq[cut..], 6),
                floor,
            )
        };
        let balanced = score(3);
        for cut in [1, 2, 4, 5] {
            assert!(balanced < score(cut), "cut {cut}");
        }
    }

    #[test]
    fn degenerate_clusters_stay_finite() {
        let c = ClusterStats {
            count: 3,
            mean: 0.0,
            variance: 0.0,
            weight: 0.5,
        };
        let bic = bic_of_partition(&c, &c, variance_floor(10.0));
        assert!(bic.is_finite());
        let bic = bic_of_partition(&c, &c, variance_floor(0.0));
        assert!(bic.is_finite());
    }

    #[test]
    fn constant_sequence_has_no_split() {
        assert!(best_split_linear(&[4.0; 4]).unwrap().is_none());
        assert!(best_split_quadratic(&[4.0; 4]).unwrap().is_none());
    }

    #[test]
    fn two_values() {
        let s = best_split_quadratic(&[2.0, 1.0]).unwrap().unwrap();
        assert_eq!(s.cut_count, 1);
        assert_eq!(s.threshold, 1.5);
        let s = best_split_linear(&[1.0, 2.0]).unwrap().unwrap();
        assert_eq!(s.cut_count, 1);
    }

    #[test]
    fn too_short_is_error() {
        assert!(matches!(best_split_linear(&[1.0]), Err(Error::InvalidArgument(_))));
        assert!(best_split_quadratic(&[]).is_err());
        assert!(best_split_linear(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn ties_are_never_separated() {
        let seq = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 5.0, 5.0, 5.0];
        let s = best_split_linear(&seq).unwrap().unwrap();
        assert!([4, 6].contains(&s.cut_count), "{}", s.cut_count);
        let mut sorted = seq.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[s.cut_count - 1] <= s.threshold && s.threshold < sorted[s.cut_count]);
    }

    #[test]
    fn adjacent_floats_threshold_stays_left() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let s = best_split_linear(&[a, b]).unwrap().unwrap();
        assert!(a <= s.threshold && s.threshold < b);
    }

    #[test]
    fn linear_matches_quadratic_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..200 {
            let n = rng.random_range(2..=512usize);
            let seq: Vec<f64> = match case % 3 {
                0 => (0..n).map(|_| rng.random_range(-10.0..10.0)).collect(),
                1 => (0..n)
                    .map(|_| {
                        let centre = if rng.random_bool(0.3) { 50.0 } else { 0.0 };
                        centre + rng.random::<f64>()
                    })
                    .collect(),
                _ => (0..n).map(|_| rng.random_range(0..20) as f64).collect(),
            };
            let lin = best_split_linear(&seq).unwrap();
            let quad = best_split_quadratic(&seq).unwrap();
            match (lin, quad) {
                (Some(l), Some(q)) => {
                    assert_eq!(l.cut_count, q.cut_count, "case {case}");
                    assert!(rel_close(l.bic, q.bic, 1e-9), "case {case}: {} vs {}", l.bic, q.bic);
                }
                (None, None) => {}
                other => panic!("case {case}: mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn minimum_cluster_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..60 {
            let n = rng.random_range(2..=200usize);
            let min_cluster = [2, 3, 5][case % 3];
            let seq: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lin = best_split_linear_min(&seq, min_cluster).unwrap();
            let quad = best_split_quadratic_min(&seq, min_cluster).unwrap();
            match (lin, quad) {
                (Some(l), Some(q)) => {
                    assert_eq!(l.cut_count, q.cut_count, "case {case}");
                    assert!(rel_close(l.bic, q.bic, 1e-9));
                    assert!(l.left.count >= min_cluster && l.right.count >= min_cluster);
                }
                (None, None) => assert!(n < 2 * min_cluster, "case {case}"),
                other => panic!("case {case}: mismatch {other:?}"),
            }
        }
        assert!(best_split_linear_min(&[1.0, 2.0, 3.0], 2).unwrap().is_none());
        assert!(best_split_linear_min(&[1.0, 2.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn split_invariants(seq in prop::collection::vec(-1e3f64..1e3, 2..300)) {
            if let Some(s) = best_split_linear(&seq).unwrap() {
                let n = seq.len();
                prop_assert_eq!(s.left.count + s.right.count, n);
                prop_assert!(s.left.count >= 1 && s.right.count >= 1);
                prop_assert!((s.left.weight + s.right.weight - 1.0).abs() < 1e-12);
                prop_assert!(s.left.variance >= 0.0 && s.right.variance >= 0.0);
                let left = seq.iter().filter(|&&v| v <= s.threshold).count();
                prop_assert_eq!(left, s.cut_count);
            }
        }

        #[test]
        fn argmin_is_affine_invariant(
            seq in prop::collection::vec(-100f64..100.0, 2..200),
            scale in 0.01f64..100.0,
            shift in -1e3f64..1e3,
        ) {
            let moved: Vec<f64> = seq.iter().map(|v| scale * v + shift).collect();
            let a = best_split_linear(&seq).unwrap().map(|s| s.cut_count);
            let b = best_split_linear(&moved).unwrap().map(|s| s.cut_count);
            prop_assert_eq!(a, b);
        }
    }
}

