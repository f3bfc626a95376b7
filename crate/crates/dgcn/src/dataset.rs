//! Text dataset format.
//!
//! A dataset is a JSON manifest next to three text files:
//!
//! - features: `n` lines of `d` comma-separated decimals, no header;
//! - edges: one `u<TAB>v[<TAB>w]` per line, 0-based node ids, weight 1 when
//!   omitted, read as undirected;
//! - labels (optional): `n` lines holding one integer in `0..c`.
//!
//! Relative paths in the manifest are resolved against the manifest's
//! directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};
use dgcn_core::graph::{Graph, LabelVector};
use dgcn_core::{Matrix, NodeDataset};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub features: PathBuf,
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: NodeDataset,
    pub manifest: DatasetManifest,
    /// Non-fatal findings, such as dropped self-loops.
    pub warnings: Vec<String>,
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })?;
    if m.n == 0 || m.d == 0 || m.c == 0 {
        return Err(Error::invalid(path, "n, d and c must be positive"));
    }
    Ok(m)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut warnings = Vec::new();
    let features = read_features(&resolve(base, &manifest.features), manifest.n, manifest.d)?;
    let graph = read_edges(&resolve(base, &manifest.edges), manifest.n, &mut warnings)?;
    let labels = match &manifest.labels {
        Some(p) => Some(read_labels(&resolve(base, p), manifest.n, manifest.c)?),
        None => None,
    };
    let dataset = NodeDataset::new(manifest.name.clone(), features, graph, labels, manifest.c)?;
    Ok(LoadedDataset {
        dataset,
        manifest,
        warnings,
    })
}

fn reader(path: &Path, delimiter: u8) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .delimiter(delimiter)
        .from_reader(file))
}

/// Yields `(line, record)` pairs, mapping reader failures to located errors.
fn records(
    path: &Path,
    mut rdr: csv::Reader<fs::File>,
) -> impl Iterator<Item = Result<(u64, StringRecord)>> + '_ {
    let mut rec = StringRecord::new();
    std::iter::from_fn(move || match rdr.read_record(&mut rec) {
        Ok(true) => {
            let line = rec.position().map_or(0, |p| p.line());
            Some(Ok((line, rec.clone())))
        }
        Ok(false) => None,
        Err(e) => Some(Err(csv_error(path, e))),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 1,
            message: format!("{other:?}"),
        },
    }
}

fn cell_error(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: u64, column: usize, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(cell_error(
            path,
            line,
            column,
            format!("non-finite value {cell:?}"),
        )),
        Err(_) => Err(cell_error(
            path,
            line,
            column,
            format!("not a number: {cell:?}"),
        )),
    }
}

fn parse_index(
    path: &Path,
    line: u64,
    column: usize,
    cell: &str,
    bound: usize,
    what: &str,
) -> Result<usize> {
    let v: usize = cell
        .parse()
        .map_err(|_| cell_error(path, line, column, format!("not a {what}: {cell:?}")))?;
    if v >= bound {
        return Err(cell_error(
            path,
            line,
            column,
            format!("{what} {v} out of range 0..{bound}"),
        ));
    }
    Ok(v)
}

pub fn read_features(path: &Path, n: usize, d: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for item in records(path, reader(path, b',')?) {
        let (line, rec) = item?;
        if rows == n {
            return Err(cell_error(path, line, 1, format!("more than {n} rows")));
        }
        if rec.len() != d {
            let column = rec.len().min(d) + 1;
            return Err(cell_error(
                path,
                line,
                column,
                format!("expected {d} values, found {}", rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            data.push(parse_f64(path, line, j + 1, cell)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::invalid(
            path,
            format!("expected {n} rows, found {rows}"),
        ));
    }
    Ok(Matrix::from_vec(n, d, data)?)
}

pub fn read_edges(path: &Path, n: usize, warnings: &mut Vec<String>) -> Result<Graph> {
    let mut weights: HashMap<(usize, usize), (f64, u64)> = HashMap::new();
    for item in records(path, reader(path, b'\t')?) {
        let (line, rec) = item?;
        if rec.len() != 2 && rec.len() != 3 {
            return Err(cell_error(
                path,
                line,
                rec.len().min(3) + 1,
                format!("expected 2 or 3 fields, found {}", rec.len()),
            ));
        }
        let u = parse_index(path, line, 1, &rec[0], n, "node id")?;
        let v = parse_index(path, line, 2, &rec[1], n, "node id")?;
        let w = match rec.get(2) {
            Some(cell) => parse_f64(path, line, 3, cell)?,
            None => 1.0,
        };
        if w <= 0.0 {
            return Err(cell_error(
                path,
                line,
                3,
                format!("weight {w} is not positive"),
            ));
        }
        if u == v {
            warnings.push(format!(
                "{}:{line}: self-loop on node {u} dropped",
                path.display()
            ));
            continue;
        }
        let key = (u.min(v), u.max(v));
        if let Some(&(prev, prev_line)) = weights.get(&key) {
            if prev != w {
                return Err(cell_error(
                    path,
                    line,
                    3,
                    format!("weight {w} conflicts with {prev} on line {prev_line}"),
                ));
            }
            continue;
        }
        weights.insert(key, (w, line));
    }
    let mut edges: Vec<(usize, usize, f64)> = weights
        .into_iter()
        .map(|((u, v), (w, _))| (u, v, w))
        .collect();
    edges.sort_by_key(|e| (e.0, e.1));
    Ok(Graph::from_edges(n, &edges)?)
}

pub fn read_labels(path: &Path, n: usize, c: usize) -> Result<LabelVector> {
    let mut labels = Vec::with_capacity(n);
    for item in records(path, reader(path, b',')?) {
        let (line, rec) = item?;
        if labels.len() == n {
            return Err(cell_error(path, line, 1, format!("more than {n} labels")));
        }
        if rec.len() != 1 {
            return Err(cell_error(
                path,
                line,
                2,
                format!("expected one label, found {} fields", rec.len()),
            ));
        }
        labels.push(parse_index(path, line, 1, &rec[0], c, "label")?);
    }
    if labels.len() != n {
        return Err(Error::invalid(
            path,
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }
    Ok(LabelVector::new(labels, c)?)
}

/// Writes `features.csv`, `edges.tsv`, `labels.csv` (when present) and
/// `manifest.json` into `dir`. Returns the manifest path.
pub fn write_dataset(dir: &Path, ds: &NodeDataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };

    let mut body = String::new();
    for row in ds.features.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        body.push_str(&cells.join(","));
        body.push('\n');
    }
    write("features.csv", body)?;

    let mut body = String::new();
    let adj = ds.graph.adj();
    for i in 0..ds.n() {
        for j in (i + 1)..ds.n() {
            let w = adj[(i, j)];
            if w == 1.0 {
                body.push_str(&format!("{i}\t{j}\n"));
            } else if w != 0.0 {
                body.push_str(&format!("{i}\t{j}\t{w:?}\n"));
            }
        }
    }
    write("edges.tsv", body)?;

    let labels = match &ds.labels {
        Some(y) => {
            let body: String = y.labels().iter().map(|l| format!("{l}\n")).collect();
            write("labels.csv", body)?;
            Some(PathBuf::from("labels.csv"))
        }
        None => None,
    };
    let manifest = DatasetManifest {
        name: ds.name.clone(),
        n: ds.n(),
        d: ds.dims(),
        c: ds.clusters,
        features: "features.csv".into(),
        edges: "edges.tsv".into(),
        labels,
        notes: None,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
