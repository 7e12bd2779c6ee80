//! Benchmark sweeps over generator families, sample sizes, noise dimensions,
//! estimators and neighbour counts.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::mi::{gksg_estimate, ksg_estimate, Method, DEFAULT_K};
use crate::synthetic::{generate, Family, GeneratorSpec, TruthKind};

/// A sweep definition, usually read from a TOML file (see `docs/bench-config.md`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub families: Vec<Family>,
    pub n: Vec<usize>,
    #[serde(default = "default_noise_dims")]
    pub noise_dims: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    pub methods: Vec<Method>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub forest: ForestParams,
}

fn default_noise_dims() -> Vec<usize> {
    vec![0]
}

fn default_k() -> Vec<usize> {
    vec![DEFAULT_K]
}

fn default_repetitions() -> usize {
    20
}

impl ExperimentSpec {
    /// Parses a TOML sweep definition and validates it.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |key: &str| Error::invalid(format!("config key `{key}` must be a non-empty list"));
        if self.families.is_empty() {
            return Err(empty("families"));
        }
        if self.n.is_empty() {
            return Err(empty("n"));
        }
        if self.noise_dims.is_empty() {
            return Err(empty("noise_dims"));
        }
        if self.k.is_empty() {
            return Err(empty("k"));
        }
        if self.methods.is_empty() {
            return Err(empty("methods"));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("config key `repetitions` must be >= 1"));
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 4) {
            return Err(Error::invalid(format!("config key `n`: sample size {n} is below 4")));
        }
        if let Some(d) = self.noise_dims.iter().find(|&&d| d % 2 != 0) {
            return Err(Error::invalid(format!("config key `noise_dims`: {d} is odd")));
        }
        if let Some(k) = self.k.iter().find(|&&k| k == 0) {
            return Err(Error::invalid(format!("config key `k`: {k} is not a positive count")));
        }
        if self.forest.trees == 0 {
            return Err(Error::invalid("config key `forest.trees` must be >= 1"));
        }
        Ok(())
    }

    /// All cells in canonical order: family, n, noise dims, method, k.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        let mut data_index = 0;
        for &family in &self.families {
            for &n in &self.n {
                for &d_noise in &self.noise_dims {
                    for &method in &self.methods {
                        for &k in &self.k {
                            cells.push(Cell {
                                index: cells.len(),
                                data_index,
                                family,
                                n,
                                d_noise,
                                method,
                                k,
                            });
                        }
                    }
                    data_index += 1;
                }
            }
        }
        cells
    }
}

/// One configuration of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    /// Index of the (family, n, noise dims) combination; cells sharing it see
    /// the same datasets.
    pub data_index: usize,
    pub family: Family,
    pub n: usize,
    pub d_noise: usize,
    pub method: Method,
    pub k: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of indices into a trial seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

const DATA_SALT: u64 = 0xD47A;
const FOREST_SALT: u64 = 0xF0E5;

/// Seeds of repetition `rep` of `cell`: `(data seed, forest seed)`.
pub fn trial_seeds(master: u64, cell: &Cell, rep: usize) -> (u64, u64) {
    (
        derive_seed(master, &[DATA_SALT, cell.data_index as u64, rep as u64]),
        derive_seed(master, &[FOREST_SALT, cell.index as u64, rep as u64]),
    )
}

/// Aggregated outcome of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub family: String,
    pub n: usize,
    pub d_noise: usize,
    pub method: Method,
    pub k: usize,
    pub mean: f64,
    pub stddev: f64,
    pub mse: f64,
    pub truth: f64,
    pub truth_kind: TruthKind,
    pub failures: usize,
    pub seconds: f64,
    pub repetitions: usize,
}

/// Result table, one row per cell in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
}

/// Aggregates successful estimates of one cell. `mean`, `stddev` and `mse`
/// are NaN when every repetition failed.
pub fn aggregate(estimates: &[f64], truth: f64) -> (f64, f64, f64) {
    if estimates.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let stddev = if estimates.len() > 1 {
        (estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let mse = estimates.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m;
    (mean, stddev, mse)
}

fn run_trial(spec: &ExperimentSpec, cell: &Cell, rep: usize) -> (Result<f64>, f64) {
    let (data_seed, forest_seed) = trial_seeds(spec.master_seed, cell, rep);
    let start = Instant::now();
    let outcome = generate(&GeneratorSpec {
        family: cell.family,
        n: cell.n,
        noise_dims: cell.d_noise,
        seed: data_seed,
    })
    .and_then(|ds| match cell.method {
        Method::Ksg => ksg_estimate(&ds.data, &ds.partition, cell.k),
        Method::Gksg => gksg_estimate(&ds.data, &ds.partition, cell.k, &spec.forest, forest_seed),
    })
    .map(|e| e.value);
    (outcome, start.elapsed().as_secs_f64())
}

/// Runs every repetition of every cell. Trial failures are counted per cell.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let cells = spec.cells();
    let trials: Vec<(usize, usize)> = cells
        .iter()
        .flat_map(|c| (0..spec.repetitions).map(move |r| (c.index, r)))
        .collect();
    let outcomes: Vec<(Result<f64>, f64)> = trials
        .par_iter()
        .map(|&(c, r)| run_trial(spec, &cells[c], r))
        .collect();
    let rows = cells
        .iter()
        .zip(outcomes.chunks(spec.repetitions))
        .map(|(cell, chunk)| {
            let truth = cell.family.ground_truth();
            let estimates: Vec<f64> = chunk.iter().filter_map(|(r, _)| r.as_ref().ok().copied()).collect();
            let (mean, stddev, mse) = aggregate(&estimates, truth.value);
            ExperimentRow {
                family: cell.family.to_string(),
                n: cell.n,
                d_noise: cell.d_noise,
                method: cell.method,
                k: cell.k,
                mean,
                stddev,
                mse,
                truth: truth.value,
                truth_kind: truth.kind,
                failures: chunk.len() - estimates.len(),
                seconds: chunk.iter().map(|(_, s)| s).sum(),
                repetitions: spec.repetitions,
            }
        })
        .collect();
    Ok(ExperimentResult { rows })
}

/// Rounds to the 6 decimals used in every emitted table.
pub fn round6(v: f64) -> f64 {
    if v.is_finite() {
        format!("{v:.6}").parse().expect("formatted float parses")
    } else {
        v
    }
}

pub const TABLE_COLUMNS: [&str; 13] = [
    "family",
    "n",
    "d_noise",
    "method",
    "k",
    "mean",
    "stddev",
    "mse",
    "truth",
    "truth_kind",
    "failures",
    "seconds",
    "repetitions",
];

impl ExperimentResult {
    /// The table as emitted: every real value rounded to 6 decimals.
    pub fn rounded(&self) -> ExperimentResult {
        ExperimentResult {
            rows: self
                .rows
                .iter()
                .map(|r| ExperimentRow {
                    mean: round6(r.mean),
                    stddev: round6(r.stddev),
                    mse: round6(r.mse),
                    truth: round6(r.truth),
                    seconds: round6(r.seconds),
                    family: r.family.clone(),
                    ..*r
                })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(TABLE_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.family.clone(),
                r.n.to_string(),
                r.d_noise.to_string(),
                r.method.to_string(),
                r.k.to_string(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.stddev),
                format!("{:.6}", r.mse),
                format!("{:.6}", r.truth),
                r.truth_kind.to_string(),
                r.failures.to_string(),
                format!("{:.6}", r.seconds),
                r.repetitions.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<ExperimentResult> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if header.iter().ne(TABLE_COLUMNS) {
            return Err(Error::Parse(format!("unexpected table header {header:?}")));
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ExperimentRow>, _>>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok(ExperimentResult { rows })
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.rounded()).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            families: vec![Family::Gaussian { rho: 0.5 }],
            n: vec![60],
            noise_dims: vec![0, 2],
            k: vec![3],
            methods: vec![Method::Ksg, Method::Gksg],
            repetitions: 2,
            master_seed: 4,
            forest: ForestParams::with_trees(10),
        }
    }

    #[test]
    fn single_cell_single_repetition() {
        let spec = ExperimentSpec {
            noise_dims: vec![0],
            methods: vec![Method::Ksg],
            repetitions: 1,
            ..small_spec()
        };
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].stddev, 0.0);
        assert_eq!(res.rows[0].failures, 0);
    }

    #[test]
    fn mse_of_constant_predictor_is_squared_bias() {
        let (mean, stddev, mse) = aggregate(&[1.5, 1.5, 1.5], 1.0);
        assert_eq!((mean, stddev, mse), (1.5, 0.0, 0.25));
        assert!(aggregate(&[], 1.0).0.is_nan());
    }

    #[test]
    fn results_are_deterministic_and_ordered() {
        let spec = small_spec();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.rows.len(), 4);
        let strip = |r: &ExperimentResult| -> Vec<_> {
            r.rows
                .iter()
                .map(|x| (x.d_noise, x.method, x.mean.to_bits(), x.mse.to_bits()))
                .collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.rows[0].method, Method::Ksg);
        assert_eq!(a.rows[1].method, Method::Gksg);
        assert_eq!(a.rows[2].d_noise, 2);
    }

    #[test]
    fn csv_round_trip_reproduces_the_emitted_table() {
        let res = run_experiment(&small_spec()).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let parsed = ExperimentResult::read_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, res.rounded());
        let mut again = Vec::new();
        parsed.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn config_parsing_and_validation() {
        let text = r#"
            n = [100, 200]
            methods = ["ksg", "gksg"]
            repetitions = 3
            [[families]]
            family = "uniform-linear"
            alpha = 0.01
            [[families]]
            family = "sphere"
            [forest]
            trees = 50
        "#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.families[1], Family::Sphere { radius: 1.0, alpha: 0.01 });
        assert_eq!(spec.k, vec![5]);
        assert_eq!(spec.forest.trees, 50);
        assert_eq!(spec.cells().len(), 8);

        let empty = "n = []\nmethods = [\"ksg\"]\n[[families]]\nfamily = \"gaussian\"\n";
        let err = ExperimentSpec::from_toml(empty).unwrap_err().to_string();
        assert!(err.contains("`n`"), "{err}");
        let unknown = "n = [10]\nmethods = [\"ksg\"]\nbogus = 1\n[[families]]\nfamily = \"gaussian\"\n";
        let err = ExperimentSpec::from_toml(unknown).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn seeds_depend_on_every_index() {
        let cells = small_spec().cells();
        let (d0, f0) = trial_seeds(1, &cells[0], 0);
        let (d1, f1) = trial_seeds(1, &cells[1], 0);
        assert_eq!(d0, d1, "methods share data");
        assert_ne!(f0, f1);
        assert_ne!(trial_seeds(1, &cells[0], 1).0, d0);
        assert_ne!(trial_seeds(2, &cells[0], 0).0, d0);
    }
}
