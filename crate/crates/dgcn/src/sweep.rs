//! Resumable grid sweeps over filter order, mixing weight, SCE exponent and
//! seed.
//!
//! Results are appended to a CSV with columns
//! `k,mu,beta,seed,acc,nmi,status`. Cells already present in the file are
//! skipped, so an interrupted sweep can be rerun with the same arguments.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use dgcn_core::dgcn::{reconstruct, train, PipelineConfig, Reconstruction};
use dgcn_core::filter::FilterConfig;
use dgcn_core::NodeDataset;

use crate::error::{Error, Result};

pub const HEADER: [&str; 7] = ["k", "mu", "beta", "seed", "acc", "nmi", "status"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub ks: Vec<usize>,
    pub mus: Vec<f64>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            ks: vec![1, 2, 3, 4, 5, 10],
            mus: (0..=10).map(|i| i as f64 / 10.0).collect(),
            betas: vec![1.0],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub k: usize,
    pub mu: f64,
    pub beta: f64,
    pub seed: u64,
}

impl SweepCell {
    fn key(&self) -> (usize, String, String, u64) {
        (
            self.k,
            self.mu.to_string(),
            self.beta.to_string(),
            self.seed,
        )
    }
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &mu in &self.mus {
                for &beta in &self.betas {
                    for &seed in &self.seeds {
                        out.push(SweepCell { k, mu, beta, seed });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn fields(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.cell.k.to_string(),
            self.cell.mu.to_string(),
            self.cell.beta.to_string(),
            self.cell.seed.to_string(),
            opt(self.acc),
            opt(self.nmi),
            self.status.clone(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepOutcome {
    pub ran: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Reads every row of an existing results file.
pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::invalid(path, e.to_string()))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::invalid(path, e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(Error::invalid(
            path,
            "not a sweep results file (header mismatch)",
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::invalid(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |column: usize| Error::Parse {
            path: path.into(),
            line,
            column,
            message: format!("bad {} value {:?}", HEADER[column - 1], &rec[column - 1]),
        };
        let num = |column: usize| -> Result<Option<f64>> {
            match &rec[column - 1] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(column)),
            }
        };
        let cell = SweepCell {
            k: rec[0].parse().map_err(|_| bad(1))?,
            mu: rec[1].parse().map_err(|_| bad(2))?,
            beta: rec[2].parse().map_err(|_| bad(3))?,
            seed: rec[3].parse().map_err(|_| bad(4))?,
        };
        out.push(SweepRow {
            cell,
            acc: num(5)?,
            nmi: num(6)?,
            status: rec[6].to_string(),
        });
    }
    Ok(out)
}

/// Drops an unterminated last line left by an interrupted write.
fn repair_tail(path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        fs::write(path, &bytes[..keep]).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn run_cell(
    ds: &NodeDataset,
    rec: &Reconstruction,
    base: &PipelineConfig,
    cell: SweepCell,
) -> SweepRow {
    let result = (|| -> dgcn_core::Result<(f64, f64)> {
        let f = rec.filter(&ds.features, FilterConfig::new(cell.k, cell.mu)?)?;
        let mut cfg = base.train.clone();
        cfg.beta = cell.beta;
        cfg.seed = cell.seed;
        let report = train(
            &f,
            &rec.normalized.a_norm,
            ds.clusters,
            ds.labels.as_ref(),
            &cfg,
        )?
        .report;
        let m = report.metrics.expect("labels are checked before the sweep");
        Ok((m.acc, m.nmi))
    })();
    match result {
        Ok((acc, nmi)) => SweepRow {
            cell,
            acc: Some(acc),
            nmi: Some(nmi),
            status: "ok".into(),
        },
        Err(e) => SweepRow {
            cell,
            acc: None,
            nmi: None,
            status: format!("error: {e}"),
        },
    }
}

/// Runs every cell of `grid` missing from `out`, appending one row per cell
/// as it finishes. Rows arrive in grid order when `workers` is 1.
pub fn run_sweep(
    ds: &NodeDataset,
    base: &PipelineConfig,
    grid: &SweepGrid,
    out: &Path,
    workers: usize,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<SweepOutcome> {
    if ds.labels.is_none() {
        return Err(Error::Usage("a sweep needs ground-truth labels".into()));
    }
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Usage("the sweep grid is empty".into()));
    }
    for c in &cells {
        FilterConfig::new(c.k, c.mu)?;
    }
    let done: HashSet<_> = if out.exists() {
        repair_tail(out)?;
        if fs::metadata(out).map_err(|e| Error::io(out, e))?.len() == 0 {
            HashSet::new()
        } else {
            read_rows(out)?.iter().map(|r| r.cell.key()).collect()
        }
    } else {
        HashSet::new()
    };
    let pending: Vec<SweepCell> = cells
        .iter()
        .copied()
        .filter(|c| !done.contains(&c.key()))
        .collect();
    let mut outcome = SweepOutcome {
        skipped: cells.len() - pending.len(),
        ..SweepOutcome::default()
    };
    if pending.is_empty() {
        return Ok(outcome);
    }

    let rec = reconstruct(ds, base)?;
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| Error::io(out, e))?;
    let fresh = file.metadata().map_err(|e| Error::io(out, e))?.len() == 0;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    let mut write_row = |fields: &[String]| -> Result<()> {
        writer
            .write_record(fields)
            .map_err(|e| Error::invalid(out, e.to_string()))?;
        writer.flush().map_err(|e| Error::io(out, e))
    };
    if fresh {
        write_row(&HEADER.map(String::from))?;
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| -> Result<()> {
        for _ in 0..workers.max(1).min(pending.len()) {
            let tx = tx.clone();
            let (next, pending, rec) = (&next, &pending, &rec);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&cell) = pending.get(i) else { break };
                if tx.send(run_cell(ds, rec, base, cell)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for row in rx {
            write_row(&row.fields())?;
            if row.status == "ok" {
                outcome.ran += 1;
            } else {
                outcome.failed += 1;
            }
            on_row(&row);
        }
        Ok(())
    })?;
    Ok(outcome)
}

/// The `(k, mu, beta)` cell with the highest mean accuracy over its seeds,
/// with that mean. Earlier cells win ties.
pub fn best_cell(rows: &[SweepRow]) -> Option<(usize, f64, f64, f64)> {
    let mut groups: Vec<((usize, f64, f64), Vec<f64>)> = Vec::new();
    for r in rows {
        let Some(acc) = r.acc else { continue };
        let key = (r.cell.k, r.cell.mu, r.cell.beta);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(acc),
            None => groups.push((key, vec![acc])),
        }
    }
    groups
        .into_iter()
        .map(|((k, mu, beta), v)| (k, mu, beta, v.iter().sum::<f64>() / v.len() as f64))
        .fold(None, |best, cand| match best {
            Some(b) if b.3 >= cand.3 => Some(b),
            _ => Some(cand),
        })
}
