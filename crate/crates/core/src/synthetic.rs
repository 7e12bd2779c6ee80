//! Seeded generators for the four benchmark families with their ground-truth
//! mutual information (exact value or lower bound).

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{BlockPartition, DataMatrix};
use crate::error::{Error, Result};

/// Benchmark family and its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    /// `X ~ U(0,1)`, `Y = X + N`, `N ~ U(-alpha/2, alpha/2)`.
    UniformLinear {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Standard bivariate normal with correlation `rho`.
    Gaussian {
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// Position along a helix against its noisy 3D coordinates.
    Helix {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Two angles against noisy 3D coordinates on a sphere of radius `radius`.
    Sphere {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_RADIUS: f64 = 1.0;

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::UniformLinear { .. } => "uniform-linear",
            Family::Gaussian { .. } => "gaussian",
            Family::Helix { .. } => "helix",
            Family::Sphere { .. } => "sphere",
        }
    }

    /// Column counts of the X- and Y-blocks before noise is added.
    pub fn block_dims(&self) -> (usize, usize) {
        match self {
            Family::UniformLinear { .. } | Family::Gaussian { .. } => (1, 1),
            Family::Helix { .. } => (1, 3),
            Family::Sphere { .. } => (2, 3),
        }
    }

    fn validate(&self) -> Result<()> {
        let check_alpha = |alpha: f64| {
            if alpha > 0.0 && alpha <= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")))
            }
        };
        match *self {
            Family::UniformLinear { alpha } | Family::Helix { alpha } => check_alpha(alpha),
            Family::Gaussian { rho } => {
                if rho.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("|rho| must be < 1, got {rho}")))
                }
            }
            Family::Sphere { radius, alpha } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::invalid(format!("radius must be positive, got {radius}")));
                }
                check_alpha(alpha)
            }
        }
    }

    /// Exact mutual information or the best known lower bound, in nats.
    pub fn ground_truth(&self) -> GroundTruth {
        let noise_bound = |alpha: f64| alpha / 2.0 - alpha.ln();
        match *self {
            Family::UniformLinear { alpha } => GroundTruth {
                value: noise_bound(alpha),
                kind: TruthKind::Exact,
            },
            Family::Gaussian { rho } => GroundTruth {
                value: -0.5 * (1.0 - rho * rho).ln(),
                kind: TruthKind::Exact,
            },
            Family::Helix { alpha } | Family::Sphere { alpha, .. } => GroundTruth {
                value: noise_bound(alpha),
                kind: TruthKind::LowerBound,
            },
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::UniformLinear { alpha } => write!(f, "uniform-linear(alpha={alpha})"),
            Family::Gaussian { rho } => write!(f, "gaussian(rho={rho})"),
            Family::Helix { alpha } => write!(f, "helix(alpha={alpha})"),
            Family::Sphere { radius, alpha } => write!(f, "sphere(radius={radius},alpha={alpha})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Exact,
    LowerBound,
}

impl fmt::Display for TruthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthKind::Exact => "exact",
            TruthKind::LowerBound => "lower_bound",
        })
    }
}

impl std::str::FromStr for TruthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TruthKind::Exact),
            "lower_bound" => Ok(TruthKind::LowerBound),
            _ => Err(Error::Parse(format!("unknown truth kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub value: f64,
    pub kind: TruthKind,
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
    pub noise_dims: usize,
    pub seed: u64,
}

/// A generated sample with its block partition and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: DataMatrix,
    pub partition: BlockPartition,
    pub truth: GroundTruth,
}

impl Dataset {
    /// Column names `x0..` for the X-block and `y0..` for the Y-block, in
    /// matrix column order.
    pub fn column_names(&self) -> Vec<String> {
        column_names(&self.partition)
    }
}

pub(crate) fn column_names(part: &BlockPartition) -> Vec<String> {
    let mut names = vec![String::new(); part.n_cols()];
    for (i, &c) in part.x_cols().iter().enumerate() {
        names[c] = format!("x{i}");
    }
    for (i, &c) in part.y_cols().iter().enumerate() {
        names[c] = format!("y{i}");
    }
    names
}

fn check_n(n: usize) -> Result<()> {
    if n < 4 {
        return Err(Error::invalid(format!("sample size must be >= 4, got {n}")));
    }
    Ok(())
}

fn noise_uniform(alpha: f64) -> Uniform<f64> {
    Uniform::new_inclusive(-alpha / 2.0, alpha / 2.0).expect("alpha validated")
}

fn base_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn assemble(family: Family, columns: Vec<Vec<f64>>) -> Result<Dataset> {
    let (dx, dy) = family.block_dims();
    Ok(Dataset {
        data: DataMatrix::from_columns(&columns)?,
        partition: BlockPartition::contiguous(dx, dy)?,
        truth: family.ground_truth(),
    })
}

pub fn gen_uniform_linear(alpha: f64, n: usize, seed: u64) -> Result<Dataset> {
    let family = Family::UniformLinear { alpha };
    family.validate()?;
    check_n(n)?;
    let mut rng = base_rng(seed);
    let noise = noise_uniform(alpha);
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xi: f64 = rng.random();
        x.push(xi);
        y.push(xi + noise.sample(&mut rng));
    }
    assemble(family, vec![x, y])
}

pub fn gen_gaussian(rho: f64, n: usize, seed: u64) -> Result<Dataset> {
    let family = Family::Gaussian { rho };
    family.validate()?;
    check_n(n)?;
    let mut rng = base_rng(seed);
    let scale = (1.0 - rho * rho).sqrt();
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        x.push(z1);
        y.push(rho * z1 + scale * z2);
    }
    assemble(family, vec![x, y])
}

pub fn gen_helix(alpha: f64, n: usize, seed: u64) -> Result<Dataset> {
    let family = Family::Helix { alpha };
    family.validate()?;
    check_n(n)?;
    let mut rng = base_rng(seed);
    let noise = noise_uniform(alpha);
    let mut cols = vec![Vec::with_capacity(n); 4];
    for _ in 0..n {
        let r: f64 = rng.random();
        let p = 5.0 * PI + 3.0 * PI * r;
        let scale = 8.0 * PI;
        cols[0].push(p);
        cols[1].push(p * p.cos() / scale + noise.sample(&mut rng));
        cols[2].push(p * p.sin() / scale + noise.sample(&mut rng));
        cols[3].push(p / scale + noise.sample(&mut rng));
    }
    assemble(family, cols)
}

pub fn gen_sphere(radius: f64, alpha: f64, n: usize, seed: u64) -> Result<Dataset> {
    let family = Family::Sphere { radius, alpha };
    family.validate()?;
    check_n(n)?;
    let mut rng = base_rng(seed);
    let noise = noise_uniform(alpha);
    let mut cols = vec![Vec::with_capacity(n); 5];
    for _ in 0..n {
        let x1: f64 = rng.random();
        let x2: f64 = rng.random();
        cols[0].push(x1);
        cols[1].push(x2);
        cols[2].push(x1.cos() * x2.cos() * radius + noise.sample(&mut rng));
        cols[3].push(x1.cos() * x2.sin() * radius + noise.sample(&mut rng));
        cols[4].push(x2.sin() * radius + noise.sample(&mut rng));
    }
    assemble(family, cols)
}

/// Appends `d_noise / 2` standard-normal columns to each block.
///
/// The result is laid out as `[X-block, X-noise, Y-block, Y-noise]` with a
/// contiguous partition.
pub fn add_noise_dims(
    data: &DataMatrix,
    part: &BlockPartition,
    d_noise: usize,
    seed: u64,
) -> Result<(DataMatrix, BlockPartition)> {
    if d_noise % 2 != 0 {
        return Err(Error::invalid(format!("noise dimensions must be even, got {d_noise}")));
    }
    if part.n_cols() != data.n_cols() {
        return Err(Error::invalid("partition does not match the data"));
    }
    let n = data.n_rows();
    let half = d_noise / 2;
    let mut rng = noise_rng(seed);
    let mut draw = |count: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    };
    let x_noise = draw(half);
    let y_noise = draw(half);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(data.n_cols() + d_noise);
    columns.extend(part.x_cols().iter().map(|&c| data.column(c)));
    columns.extend(x_noise);
    columns.extend(part.y_cols().iter().map(|&c| data.column(c)));
    columns.extend(y_noise);
    let dx = part.x_cols().len() + half;
    let dy = part.y_cols().len() + half;
    Ok((
        DataMatrix::from_columns(&columns)?,
        BlockPartition::contiguous(dx, dy)?,
    ))
}

/// Generates the dataset described by `spec`, including noise columns.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    let base = match spec.family {
        Family::UniformLinear { alpha } => gen_uniform_linear(alpha, spec.n, spec.seed),
        Family::Gaussian { rho } => gen_gaussian(rho, spec.n, spec.seed),
        Family::Helix { alpha } => gen_helix(alpha, spec.n, spec.seed),
        Family::Sphere { radius, alpha } => gen_sphere(radius, alpha, spec.n, spec.seed),
    }?;
    if spec.noise_dims == 0 {
        return Ok(base);
    }
    let (data, partition) = add_noise_dims(&base.data, &base.partition, spec.noise_dims, spec.seed)?;
    Ok(Dataset {
        data,
        partition,
        truth: base.truth,
    })
}
