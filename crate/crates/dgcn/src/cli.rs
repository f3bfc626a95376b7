//! The `dgcn` command-line tool.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 for numerical
//! failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dgcn_core::dgcn::{reconstruct, train, PipelineConfig, TrainConfig};
use dgcn_core::filter::{high_pass, low_pass, FilterConfig};
use dgcn_core::graph::{avg_neighbor_similarity, homophily_ratio, normalize_adjacency};
use dgcn_core::nn::AdamConfig;
use dgcn_core::reconstruct::HomophilicConfig;
use dgcn_core::synth::{synth_dataset, SynthConfig};
use dgcn_core::NodeDataset;
use serde::Serialize;
use serde_json::{json, Value};

use crate::binary::{save_checkpoint, save_matrix};
use crate::dataset::{load_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::experiment::{parse_synth_spec, summarize};
use crate::sweep::{best_cell, read_rows, run_sweep, SweepGrid};

#[derive(Debug, Parser)]
#[command(
    name = "dgcn",
    version,
    about = "Node clustering on graphs of any homophily level"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dataset statistics and homophily per hop.
    Stats(StatsArgs),
    /// Build the homophilic and heterophilic graphs.
    Reconstruct(ReconstructArgs),
    /// Filter features and emit neighbour-similarity curves.
    Filter(FilterArgs),
    /// Train and cluster, one run per seed.
    Train(TrainArgs),
    /// Grid sweep over k, mu, beta and seeds.
    Sweep(SweepArgs),
    /// Write a synthetic dataset to disk.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Dataset manifest (JSON).
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    manifest: Option<PathBuf>,
    /// Synthetic dataset, e.g. "n=300,c=5,h=0.1,d=16,deg=10,noise=0.3,seed=0".
    #[arg(long)]
    synth: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct ReconstructParams {
    /// Edges kept per row of the heterophilic graph.
    #[arg(long, default_value_t = 5)]
    budget: usize,
    /// Outer iterations of the homophilic-graph solver.
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    /// Stopping tolerance on the largest row change.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Largest hop reported.
    #[arg(long, default_value_t = 5)]
    hops: usize,
    /// Also write stats.json and run-manifest.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ReconstructArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ReconstructParams,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FilterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ReconstructParams,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    /// Largest order in the similarity curves.
    #[arg(long, default_value_t = 10)]
    max_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ReconstructParams,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Save a model checkpoint per seed.
    #[arg(long)]
    checkpoint: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ReconstructParams,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10")]
    k: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
    )]
    mu: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Concurrent cells. Rows are written in grid order only with 1.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Generator spec; omitted keys keep their defaults.
    #[arg(long, default_value = "")]
    synth: String,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(data: &DataArgs) -> Result<(NodeDataset, Value)> {
    if let Some(path) = &data.manifest {
        let loaded = load_dataset(path)?;
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
        let source = json!({ "manifest": path, "name": loaded.manifest.name });
        return Ok((loaded.dataset, source));
    }
    let cfg = parse_synth_spec(data.synth.as_deref().unwrap_or(""))?;
    let s = synth_dataset(&cfg)?;
    eprintln!(
        "synthetic dataset: realized homophily {:.4}, {} edges",
        s.realized_homophily, s.edges
    );
    let source = json!({ "synth": cfg, "realized_homophily": s.realized_homophily });
    Ok((s.dataset, source))
}

fn pipeline_config(
    p: &ReconstructParams,
    filter: FilterConfig,
    train: TrainConfig,
) -> PipelineConfig {
    PipelineConfig {
        filter,
        heterophilic_budget: p.budget,
        homophilic: HomophilicConfig {
            max_iters: p.max_iters,
            tol: p.tol,
        },
        train,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_run_manifest(
    dir: &Path,
    command: &str,
    args: &impl Serialize,
    source: &Value,
) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "dataset": source,
        "args": args,
    });
    write_json(&dir.join("run-manifest.json"), &manifest)
}

fn hop_homophily(m: &dgcn_core::Matrix, ds: &NodeDataset, hops: usize) -> Option<f64> {
    homophily_ratio(m, ds.labels.as_ref()?, hops).ok()
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let (ds, source) = load(&a.data)?;
    let Some(_) = &ds.labels else {
        return Err(Error::Usage("stats needs ground-truth labels".into()));
    };
    let per_hop: Vec<Option<f64>> = (1..=a.hops)
        .map(|l| hop_homophily(ds.graph.adj(), &ds, l))
        .collect();
    println!(
        "{:<24} {:>8} {:>8} {:>8} {:>8}",
        "name", "nodes", "dims", "edges", "clusters"
    );
    println!(
        "{:<24} {:>8} {:>8} {:>8} {:>8}",
        ds.name,
        ds.n(),
        ds.dims(),
        ds.graph.edge_count(),
        ds.clusters
    );
    println!("{:>4} {:>10}", "hop", "homophily");
    for (l, h) in per_hop.iter().enumerate() {
        match h {
            Some(h) => println!("{:>4} {:>10.4}", l + 1, h),
            None => println!("{:>4} {:>10}", l + 1, "-"),
        }
    }
    let stats = json!({
        "name": ds.name,
        "nodes": ds.n(),
        "dims": ds.dims(),
        "edges": ds.graph.edge_count(),
        "clusters": ds.clusters,
        "homophily": per_hop,
    });
    println!(
        "{}",
        serde_json::to_string(&stats).expect("stats serialize")
    );
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("stats.json"), &stats)?;
        write_run_manifest(out, "stats", a, &source)?;
    }
    Ok(())
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let (ds, source) = load(&a.data)?;
    let cfg = pipeline_config(
        &a.params,
        PipelineConfig::default().filter,
        TrainConfig::default(),
    );
    let rec = reconstruct(&ds, &cfg)?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    create_dir(&a.out)?;
    save_matrix(&a.out.join("S.bin"), &rec.s)?;
    save_matrix(&a.out.join("H.bin"), &rec.h)?;
    let audit = json!({
        "h_A": hop_homophily(ds.graph.adj(), &ds, 1),
        "h_S": hop_homophily(&rec.s, &ds, 1),
        "h_H": hop_homophily(&rec.h, &ds, 1),
        "homophilic_iterations": rec.homophilic_iterations,
        "warnings": rec.warnings,
    });
    let show = |v: &Value| v.as_f64().map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "h(A) = {}  h(S) = {}  h(H) = {}",
        show(&audit["h_A"]),
        show(&audit["h_S"]),
        show(&audit["h_H"])
    );
    write_json(&a.out.join("audit.json"), &audit)?;
    write_run_manifest(&a.out, "reconstruct", a, &source)
}

fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let (ds, source) = load(&a.data)?;
    let filter = FilterConfig::new(a.k, a.mu)?;
    if a.max_k > dgcn_core::filter::MAX_ORDER {
        return Err(Error::Usage(format!(
            "--max-k is at most {}",
            dgcn_core::filter::MAX_ORDER
        )));
    }
    let cfg = pipeline_config(&a.params, filter, TrainConfig::default());
    let rec = reconstruct(&ds, &cfg)?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    create_dir(&a.out)?;
    let x = &ds.features;
    save_matrix(&a.out.join("F.bin"), &rec.filter(x, filter)?)?;

    // Neighbourhoods are those of the input graph throughout.
    let adj = ds.graph.adj();
    let l_a = normalize_adjacency(&ds.graph).laplacian;
    let mut csv =
        String::from("k,sl_hop1,sl_hop2,al_hop1,al_hop2,hh_hop1,hh_hop2,mixed_hop1,mixed_hop2\n");
    for k in 0..=a.max_k {
        let curves = [
            low_pass(x, &rec.l_s, k)?,
            low_pass(x, &l_a, k)?,
            high_pass(x, &rec.l_h, k)?,
            rec.filter(x, FilterConfig::new(k, a.mu)?)?,
        ];
        let mut row = vec![k.to_string()];
        for f in &curves {
            for hops in [1, 2] {
                row.push(match avg_neighbor_similarity(f, adj, hops) {
                    Ok(v) => v.to_string(),
                    Err(_) => String::new(),
                });
            }
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let path = a.out.join("similarity.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    write_run_manifest(&a.out, "filter", a, &source)
}

fn train_config(epochs: usize, lr: f64, beta: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
        seed,
        beta,
        ..TrainConfig::default()
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (ds, source) = load(&a.data)?;
    if a.seeds.is_empty() {
        return Err(Error::Usage("--seeds is empty".into()));
    }
    let filter = FilterConfig::new(a.k, a.mu)?;
    let cfg = pipeline_config(&a.params, filter, train_config(a.epochs, a.lr, a.beta, 0));
    let rec = reconstruct(&ds, &cfg)?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    let features = rec.filter(&ds.features, filter)?;
    create_dir(&a.out)?;
    write_run_manifest(&a.out, "train", a, &source)?;

    let mut accs = Vec::new();
    let mut nmis = Vec::new();
    for &seed in &a.seeds {
        let tc = train_config(a.epochs, a.lr, a.beta, seed);
        let trained = train(
            &features,
            &rec.normalized.a_norm,
            ds.clusters,
            ds.labels.as_ref(),
            &tc,
        )?;
        let report = &trained.report;
        write_json(&a.out.join(format!("report_seed{seed}.json")), report)?;
        if a.checkpoint {
            save_checkpoint(
                &a.out.join(format!("model_seed{seed}.ckpt")),
                &trained.model,
                seed,
            )?;
        }
        match &report.metrics {
            Some(m) => {
                println!("seed {seed}: ACC {:.4} NMI {:.4}", m.acc, m.nmi);
                accs.push(m.acc);
                nmis.push(m.nmi);
            }
            None => println!("seed {seed}: done (no labels)"),
        }
    }
    let aggregate = json!({
        "seeds": a.seeds,
        "acc": summarize(&accs),
        "nmi": summarize(&nmis),
    });
    if let Some(s) = summarize(&accs) {
        println!("ACC median {:.4} (IQR {:.4})", s.median, s.iqr);
    }
    write_json(&a.out.join("aggregate.json"), &aggregate)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let (ds, source) = load(&a.data)?;
    let grid = SweepGrid {
        ks: a.k.clone(),
        mus: a.mu.clone(),
        betas: a.beta.clone(),
        seeds: a.seeds.clone(),
    };
    let cfg = pipeline_config(
        &a.params,
        PipelineConfig::default().filter,
        train_config(a.epochs, a.lr, 1.0, 0),
    );
    create_dir(&a.out)?;
    write_run_manifest(&a.out, "sweep", a, &source)?;
    let csv = a.out.join("sweep.csv");
    let outcome = run_sweep(&ds, &cfg, &grid, &csv, a.workers, |row| {
        let c = row.cell;
        match row.acc {
            Some(acc) => eprintln!(
                "k={} mu={} beta={} seed={}: ACC {acc:.4}",
                c.k, c.mu, c.beta, c.seed
            ),
            None => eprintln!(
                "k={} mu={} beta={} seed={}: {}",
                c.k, c.mu, c.beta, c.seed, row.status
            ),
        }
    })?;
    println!(
        "{} cells run, {} failed, {} already present",
        outcome.ran, outcome.failed, outcome.skipped
    );
    if let Some((k, mu, beta, acc)) = best_cell(&read_rows(&csv)?) {
        println!("best: k={k} mu={mu} beta={beta} mean ACC {acc:.4}");
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg: SynthConfig = parse_synth_spec(&a.synth)?;
    let s = synth_dataset(&cfg)?;
    let manifest = write_dataset(&a.out, &s.dataset)?;
    println!(
        "wrote {} (realized homophily {:.4}, {} edges)",
        manifest.display(),
        s.realized_homophily,
        s.edges
    );
    write_run_manifest(&a.out, "synth", a, &json!({ "synth": cfg }))
}
