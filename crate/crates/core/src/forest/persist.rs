use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Forest, ResolvedForestParams, Tree};
use crate::error::{Error, Result};

pub const FOREST_FORMAT: &str = "gksg-forest";
pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    seed: u64,
    n_train: usize,
    n_features: usize,
    params: ResolvedForestParams,
    trees: Vec<Tree>,
}

/// Writes `forest` as a JSON document (see `docs/forest-format.md`).
pub fn save_forest(forest: &Forest, path: &Path) -> Result<()> {
    let doc = ForestFile {
        format: FOREST_FORMAT.to_string(),
        version: FOREST_FORMAT_VERSION,
        seed: forest.seed,
        n_train: forest.n_train,
        n_features: forest.n_features,
        params: forest.params,
        trees: forest.trees.clone(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &doc).map_err(|e| Error::Parse(e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a forest written by [`save_forest`], re-validating every tree.
pub fn load_forest(path: &Path) -> Result<Forest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: ForestFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if doc.format != FOREST_FORMAT || doc.version != FOREST_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported forest format {} v{}",
            path.display(),
            doc.format,
            doc.version
        )));
    }
    let trees = doc
        .trees
        .into_iter()
        .map(|t| {
            let n_features = t.n_features();
            Tree::from_nodes(n_features, t.nodes().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let forest = Forest::from_trees(trees, doc.params, doc.seed, doc.n_train)?;
    if forest.n_features != doc.n_features {
        return Err(Error::Parse("feature count does not match the trees".into()));
    }
    Ok(forest)
}
