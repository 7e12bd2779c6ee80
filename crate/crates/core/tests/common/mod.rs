//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

use gksg::{BlockPartition, DataMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// psi(m) for a positive integer, straight from the harmonic sum.
pub fn digamma_int(m: usize) -> f64 {
    -EULER_GAMMA + (1..m).map(|j| 1.0 / j as f64).sum::<f64>()
}

fn linf(a: &[f64], b: &[f64], cols: &[usize]) -> f64 {
    cols.iter().map(|&c| (a[c] - b[c]).abs()).fold(0.0, f64::max)
}

/// Per-point `(radius, n_x, n_y)` by double loop over raw coordinates.
pub fn brute_counts(data: &DataMatrix, part: &BlockPartition, k: usize) -> Vec<(f64, usize, usize)> {
    let n = data.n_rows();
    (0..n)
        .map(|i| {
            let (a, xs, ys) = (data.row(i), part.x_cols(), part.y_cols());
            let mut joint: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| linf(a, data.row(j), xs).max(linf(a, data.row(j), ys)))
                .collect();
            joint.sort_by(f64::total_cmp);
            let r = joint[k - 1];
            let nx = (0..n).filter(|&j| j != i && linf(a, data.row(j), xs) < r).count();
            let ny = (0..n).filter(|&j| j != i && linf(a, data.row(j), ys) < r).count();
            (r, nx, ny)
        })
        .collect()
}

pub fn brute_ksg(data: &DataMatrix, part: &BlockPartition, k: usize) -> f64 {
    let counts = brute_counts(data, part, k);
    let n = counts.len();
    let avg = counts
        .iter()
        .map(|&(_, nx, ny)| digamma_int(nx + 1) + digamma_int(ny + 1))
        .sum::<f64>()
        / n as f64;
    digamma_int(k) + digamma_int(n) - avg
}

/// Random dataset; some draws are rounded to a coarse grid to force ties.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> (DataMatrix, BlockPartition, usize) {
    let n = rng.random_range(8..=60);
    let dx = rng.random_range(1..=3);
    let dy = rng.random_range(1..=3);
    let coarse = rng.random_bool(0.3);
    let values = (0..n * (dx + dy))
        .map(|_| {
            let v: f64 = rng.random_range(-2.0..2.0);
            if coarse {
                (v * 4.0).round() / 4.0
            } else {
                v
            }
        })
        .collect();
    let k = rng.random_range(1..=5.min(n - 1));
    (
        DataMatrix::new(n, dx + dy, values).unwrap(),
        BlockPartition::contiguous(dx, dy).unwrap(),
        k,
    )
}

/// Sequence for the split oracles; the shape cycles through plain uniform,
/// heavy ties, two far-apart groups and a large common offset.
pub fn random_sequence(rng: &mut ChaCha8Rng, case: usize) -> Vec<f64> {
    let n = rng.random_range(2..=512);
    match case % 4 {
        0 => (0..n).map(|_| rng.random::<f64>()).collect(),
        1 => (0..n).map(|_| rng.random_range(0..6) as f64).collect(),
        2 => (0..n)
            .map(|i| if i < n / 3 { rng.random::<f64>() } else { 1e6 + rng.random::<f64>() })
            .collect(),
        _ => (0..n).map(|_| 1e8 + rng.random::<f64>() * 1e-3).collect(),
    }
}

