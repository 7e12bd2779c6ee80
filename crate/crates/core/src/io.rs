//! Dataset files, their metadata sidecar, and the estimate record printed by
//! the CLI.
//!
//! A dataset is a comma-separated file with a one-line header (`x0,..,y0,..`)
//! and one row per sample. Values are written in shortest round-trip form, so
//! reading a file back reproduces the matrix bit for bit. Generated datasets
//! also get a `<file>.meta.json` sidecar describing how they were made.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BlockPartition, DataMatrix};
use crate::error::{Error, Result};
use crate::experiment::round6;
use crate::mi::{MIEstimate, Method};
use crate::synthetic::{Dataset, GeneratorSpec, GroundTruth};

/// Writes `data` with a header row of `names`.
pub fn write_matrix_csv<W: Write>(out: W, names: &[String], data: &DataMatrix) -> Result<()> {
    if names.len() != data.n_cols() {
        return Err(Error::invalid("header length does not match the column count"));
    }
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(names).map_err(err)?;
    let mut record = Vec::with_capacity(data.n_cols());
    for row in data.rows() {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Reads a delimited dataset with a header row. Returns column names and the
/// matrix.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<(Vec<String>, DataMatrix)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Parse("dataset has no header".into()));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != names.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, header has {}",
                line + 1,
                rec.len(),
                names.len()
            )));
        }
        for (field, name) in rec.iter().zip(&names) {
            let v: f64 = field.parse().map_err(|_| {
                Error::Parse(format!("row {}: column {name}: {field:?} is not a number", line + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("row {}: column {name} is not finite", line + 1)));
            }
            values.push(v);
        }
        n += 1;
    }
    let data = DataMatrix::new(n, names.len(), values).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((names, data))
}

pub fn read_matrix_file(path: &Path) -> Result<(Vec<String>, DataMatrix)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix_csv(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Sidecar describing a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: GeneratorSpec,
    pub ground_truth: GroundTruth,
    pub x_cols: Vec<String>,
    pub y_cols: Vec<String>,
    pub n: usize,
}

impl DatasetMeta {
    pub fn new(spec: &GeneratorSpec, ds: &Dataset) -> Self {
        let names = ds.column_names();
        DatasetMeta {
            generator: *spec,
            ground_truth: ds.truth,
            x_cols: ds.partition.x_cols().iter().map(|&c| names[c].clone()).collect(),
            y_cols: ds.partition.y_cols().iter().map(|&c| names[c].clone()).collect(),
            n: ds.data.n_rows(),
        }
    }
}

/// Path of the metadata sidecar for a dataset at `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes the dataset file and its sidecar.
pub fn write_dataset(path: &Path, spec: &GeneratorSpec, ds: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_matrix_csv(&mut w, &ds.column_names(), &ds.data)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta_path = sidecar_path(path);
    let meta = serde_json::to_string_pretty(&DatasetMeta::new(spec, ds))
        .map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))
}

/// Resolves a column list such as `x0,x1`, `0,2` or `0-3` against `names`.
pub fn parse_column_spec(spec: &str, names: &[String]) -> Result<Vec<usize>> {
    let mut cols = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some(pos) = names.iter().position(|n| n == item) {
            cols.push(pos);
        } else if let Some((a, b)) = item.split_once('-') {
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad column range {item:?}")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err(Error::invalid(format!("empty column range {item:?}")));
            }
            cols.extend(a..=b);
        } else {
            let idx: usize = item
                .parse()
                .map_err(|_| Error::invalid(format!("unknown column {item:?}")))?;
            cols.push(idx);
        }
    }
    if cols.is_empty() {
        return Err(Error::invalid(format!("column list {spec:?} is empty")));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= names.len()) {
        return Err(Error::invalid(format!("column {c} out of range 0..{}", names.len())));
    }
    let mut sorted = cols.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!("column list {spec:?} repeats a column")));
    }
    Ok(cols)
}

/// Columns named `x*` form the X-block and `y*` the Y-block.
pub fn infer_partition(names: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
    let pick = |p: char| -> Vec<usize> {
        names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(p))
            .map(|(i, _)| i)
            .collect()
    };
    let (x, y) = (pick('x'), pick('y'));
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid(
            "cannot infer blocks from the header; pass --x-cols and --y-cols",
        ));
    }
    Ok((x, y))
}

/// Builds the estimation view of `data`: selected X and Y columns, in that
/// order, with a contiguous partition. Columns outside both blocks are dropped.
pub fn select_blocks(
    data: &DataMatrix,
    x_cols: &[usize],
    y_cols: &[usize],
) -> Result<(DataMatrix, BlockPartition)> {
    if x_cols.iter().any(|c| y_cols.contains(c)) {
        return Err(Error::invalid("X and Y column lists overlap"));
    }
    let all: Vec<usize> = x_cols.iter().chain(y_cols).copied().collect();
    Ok((
        data.select_columns(&all)?,
        BlockPartition::contiguous(x_cols.len(), y_cols.len())?,
    ))
}

/// One estimate as printed by `gksg estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub k: usize,
    pub n: usize,
    pub d_x: usize,
    pub d_y: usize,
    /// Estimate in nats, rounded to 6 decimals.
    pub estimate_nats: f64,
    pub mean_n_x: f64,
    pub mean_n_y: f64,
    pub seed: Option<u64>,
    pub elapsed_seconds: f64,
}

impl EstimateRecord {
    pub fn new(est: &MIEstimate, d_x: usize, d_y: usize, seed: Option<u64>, elapsed: f64) -> Self {
        EstimateRecord {
            method: est.method,
            k: est.k,
            n: est.n,
            d_x,
            d_y,
            estimate_nats: round6(est.value),
            mean_n_x: round6(est.mean_n_x),
            mean_n_y: round6(est.mean_n_y),
            seed,
            elapsed_seconds: round6(elapsed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, Family};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = GeneratorSpec {
            family: Family::Sphere { radius: 1.0, alpha: 0.01 },
            n: 30,
            noise_dims: 4,
            seed: 2,
        };
        let ds = generate(&spec).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &ds.column_names(), &ds.data).unwrap();
        let (header, back) = read_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(header, ds.column_names());
        assert_eq!(back, ds.data);
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(read_matrix_csv("a,b\n1,x\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_matrix_csv("a,b\n1,2,3\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_matrix_csv("a,b\n1,inf\n".as_bytes()), Err(Error::Parse(_))));
        assert!(read_matrix_csv("".as_bytes()).is_err());
    }

    #[test]
    fn column_specs() {
        let header = names(&["x0", "x1", "y0", "y1", "y2"]);
        assert_eq!(parse_column_spec("x0,x1", &header).unwrap(), vec![0, 1]);
        assert_eq!(parse_column_spec("2-4", &header).unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_column_spec("y2, 0", &header).unwrap(), vec![4, 0]);
        assert!(parse_column_spec("x9", &header).is_err());
        assert!(parse_column_spec("5", &header).is_err());
        assert!(parse_column_spec("0,0", &header).is_err());
        assert!(parse_column_spec("", &header).is_err());
        assert_eq!(infer_partition(&header).unwrap(), (vec![0, 1], vec![2, 3, 4]));
        assert!(infer_partition(&names(&["a", "b"])).is_err());
    }

    #[test]
    fn overlapping_blocks_rejected() {
        let data = DataMatrix::from_rows(&vec![vec![1.0, 2.0, 3.0]; 4]).unwrap();
        assert!(select_blocks(&data, &[0, 1], &[1, 2]).is_err());
        let (sub, part) = select_blocks(&data, &[2], &[0]).unwrap();
        assert_eq!(sub.row(0), &[3.0, 1.0]);
        assert_eq!(part.y_cols(), &[1]);
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(sidecar_path(Path::new("out/d.csv")), PathBuf::from("out/d.csv.meta.json"));
    }
}
