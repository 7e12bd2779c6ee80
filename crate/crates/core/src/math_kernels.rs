//! Scalar special functions and prefix-moment machinery.
//!
//! [`PrefixMoments`] turns an ordered sequence into running sums of values and
//! squared values so that the population variance of any contiguous segment
//! is available in constant time.

use std::sync::LazyLock;

use crate::error::{Error, Result};

/// Euler-Mascheroni constant, `-digamma(1)`.
pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Digamma function for positive real arguments.
///
/// Shifts the argument upwards with `psi(x) = psi(x + 1) - 1/x` until it is at
/// least 6 and then evaluates the asymptotic expansion. Absolute error is
/// below 1e-10 on `[1, 1e6]`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "digamma requires a finite positive argument, got {x}"
        )));
    }
    Ok(digamma_positive(x))
}

/// Digamma at a positive integer. Used on the estimator hot path where the
/// argument is a neighbor count plus one.
pub(crate) fn digamma_count(m: usize) -> f64 {
    debug_assert!(m >= 1);
    digamma_positive(m as f64)
}

fn digamma_positive(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: 1/12, -1/120, 1/252, -1/240, 1/132, -691/32760
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    shift + x.ln() - 0.5 * inv - series
}

/// Largest absolute error of [`FastLn::ln`] over positive normal arguments.
pub(crate) const FAST_LN_MAX_ERR: f64 = 1e-10;

const LN_TABLE_BITS: u32 = 8;
const LN_TABLE_SIZE: usize = 1 << LN_TABLE_BITS;

/// Reciprocals of the mantissa bucket centres and minus their logs.
static LN_TABLE: LazyLock<[(f64, f64); LN_TABLE_SIZE]> = LazyLock::new(|| {
    std::array::from_fn(|i| {
        let inv = 1.0 / (1.0 + (i as f64 + 0.5) / LN_TABLE_SIZE as f64);
        (inv, -inv.ln())
    })
});

/// Table-driven natural log, accurate to [`FAST_LN_MAX_ERR`].
#[derive(Clone, Copy)]
pub(crate) struct FastLn {
    table: &'static [(f64, f64); LN_TABLE_SIZE],
}

impl FastLn {
    pub(crate) fn new() -> Self {
        FastLn { table: &LN_TABLE }
    }

    /// Log of a positive, finite, normal `x`. Splits off the binary exponent,
    /// scales the mantissa by the reciprocal of its bucket centre and sums
    /// three terms of `ln(1 + r)` for `|r| < 2^-9`.
    #[inline(always)]
    pub(crate) fn ln(self, x: f64) -> f64 {
        const MANTISSA: u64 = (1 << 52) - 1;
        const ONE: u64 = 1023 << 52;
        let bits = x.to_bits();
        let e = ((bits >> 52) as i64 - 1023) as f64;
        let m = f64::from_bits((bits & MANTISSA) | ONE);
        let (inv, ln_c) = self.table[((bits & MANTISSA) >> (52 - LN_TABLE_BITS)) as usize & (LN_TABLE_SIZE - 1)];
        let r = m * inv - 1.0;
        let poly = r * (1.0 - r * (0.5 - r * (1.0 / 3.0)));
        e * std::f64::consts::LN_2 + (ln_c + poly)
    }
}

/// Running sums of an ordered real sequence and of its squares.
///
/// `cs[i]` is the sum of the first `i` values and `css[i]` the sum of their
/// squares, with `cs[0] = css[0] = 0`. The low-order rounding residue of every
/// running sum is kept alongside, so segment statistics keep close to full
/// precision even when the prefix sums dwarf the segment they bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixMoments {
    cs: Vec<f64>,
    css: Vec<f64>,
    cs_lo: Vec<f64>,
    css_lo: Vec<f64>,
    /// Constant subtracted from every value before accumulation.
    shift: f64,
}

impl PrefixMoments {
    /// Builds both prefix arrays in a single linear pass.
    pub fn new(seq: &[f64]) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::invalid("prefix moments of an empty sequence"));
        }
        let mut pm = PrefixMoments::empty();
        pm.rebuild(seq);
        Ok(pm)
    }

    pub(crate) fn empty() -> Self {
        PrefixMoments {
            cs: Vec::new(),
            css: Vec::new(),
            cs_lo: Vec::new(),
            css_lo: Vec::new(),
            shift: 0.0,
        }
    }

    /// Recomputes the prefix arrays for `seq`, reusing the allocations.
    pub(crate) fn rebuild(&mut self, seq: &[f64]) {
        self.rebuild_about(seq, 0.0);
    }

    /// Like [`rebuild`](Self::rebuild) but accumulates the exact differences
    /// `v - shift`. A shift inside the data range keeps the prefix sums small
    /// when the values sit far from zero.
    pub(crate) fn rebuild_about(&mut self, seq: &[f64], shift: f64) {
        self.shift = shift;
        for v in [&mut self.cs, &mut self.css, &mut self.cs_lo, &mut self.css_lo] {
            v.clear();
            v.reserve(seq.len() + 1);
        }
        let (mut s, mut ss) = (Dd::ZERO, Dd::ZERO);
        self.push(s, ss);
        for &v in seq {
            let d = Dd::two_sum(v, -shift);
            s = s.add(d);
            ss = ss.add(d.mul(d));
            self.push(s, ss);
        }
    }

    fn push(&mut self, s: Dd, ss: Dd) {
        self.cs.push(s.hi);
        self.cs_lo.push(s.lo);
        self.css.push(ss.hi);
        self.css_lo.push(ss.lo);
    }

    /// Length of the underlying sequence.
    pub fn len(&self) -> usize {
        self.cs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cs(&self) -> &[f64] {
        &self.cs
    }

    pub fn css(&self) -> &[f64] {
        &self.css
    }

    #[inline]
    fn sum_dd(&self, i: usize, j: usize) -> Dd {
        let hi = Dd::new(self.cs[j], self.cs_lo[j]);
        if i == 1 {
            return hi;
        }
        hi.sub(Dd::new(self.cs[i - 1], self.cs_lo[i - 1]))
    }

    #[inline]
    fn sum_sq_dd(&self, i: usize, j: usize) -> Dd {
        let hi = Dd::new(self.css[j], self.css_lo[j]);
        if i == 1 {
            return hi;
        }
        hi.sub(Dd::new(self.css[i - 1], self.css_lo[i - 1]))
    }

    /// Population variance of the segment `i..=j` (1-based, inclusive),
    /// without bounds checks.
    pub(crate) fn segment_variance_unchecked(&self, i: usize, j: usize) -> f64 {
        let len = (j - i + 1) as f64;
        let s = self.sum_dd(i, j);
        let ss = self.sum_sq_dd(i, j);
        // (len * ss - s^2) / len^2
        let centered = ss.mul_f64(len).sub(s.mul(s)).to_f64();
        (centered / (len * len)).max(0.0)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn new(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd::new(s, (a - (s - bb)) + (b - bb))
    }

    fn quick(a: f64, b: f64) -> Self {
        let s = a + b;
        Dd::new(s, b - (s - a))
    }

    fn add(self, o: Dd) -> Self {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let r = Dd::quick(s.hi, s.lo + t.hi);
        Dd::quick(r.hi, r.lo + t.lo)
    }

    fn sub(self, o: Dd) -> Self {
        self.add(Dd::new(-o.hi, -o.lo))
    }

    fn mul(self, o: Dd) -> Self {
        let p = self.hi * o.hi;
        let err = self.hi.mul_add(o.hi, -p);
        Dd::quick(p, err + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f64(self, b: f64) -> Self {
        let p = self.hi * b;
        let err = self.hi.mul_add(b, -p);
        Dd::quick(p, err + self.lo * b)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Builds [`PrefixMoments`] for `seq`.
pub fn prefix_moments(seq: &[f64]) -> Result<PrefixMoments> {
    PrefixMoments::new(seq)
}

/// Population variance of the 1-based inclusive segment `i..=j` in O(1).
///
/// Tiny negative results from cancellation are clamped to zero.
pub fn segment_variance(pm: &PrefixMoments, i: usize, j: usize) -> Result<f64> {
    if i == 0 || i > j || j > pm.len() {
        return Err(Error::invalid(format!(
            "segment ({i}, {j}) outside 1..={}",
            pm.len()
        )));
    }
    Ok(pm.segment_variance_unchecked(i, j))
}
