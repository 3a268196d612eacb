//! Executes the (cell x seed) run matrix and persists one JSON record per run.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use anyhow::Context;
use qcnn::cnn::{evaluate_cnn, train_cnn};
use qcnn::training::{evaluate, train};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Cell, Network, RunConfig};
use crate::error::{CliError, CliResult};
use crate::features::{check_data, FeatureSet, FeatureStore};
use crate::report::{aggregate, summary_csv, SummaryRow};

pub const RECORDS_DIR: &str = "records";
pub const SUMMARY_FILE: &str = "summary.csv";

/// One training run, self-describing so reports need nothing else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub slug: String,
    pub dataset: String,
    pub model: String,
    pub ansatz: String,
    pub encoding: String,
    pub reduction: String,
    pub features: usize,
    pub loss: String,
    pub optimizer: String,
    pub boundary: String,
    pub sharing: String,
    pub filters: usize,
    pub params: usize,
    pub seed: u64,
    pub n_seeds_planned: usize,
    pub config_hash: String,
    pub model_hash: String,
    pub config: String,
    /// Percent.
    pub test_accuracy: f64,
    pub wall_time_s: f64,
    pub loss_trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub jobs: usize,
    pub data_root: PathBuf,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    /// Reuse records already present in the output directory.
    pub resume: bool,
    /// Print one line per finished run to stderr.
    pub progress: bool,
}

pub struct RunOutcome {
    pub cells: Vec<Cell>,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Human-readable run matrix for `--dry-run`.
pub fn describe_plan(cfg: &RunConfig) -> CliResult<String> {
    let cells = cfg.expand()?;
    let seeds = cfg.seeds();
    let mut out = String::new();
    writeln!(out, "{:>4}  {:>6}  cell", "#", "params").unwrap();
    for (i, c) in cells.iter().enumerate() {
        writeln!(
            out,
            "{:>4}  {:>6}  {}",
            i + 1,
            c.network()?.param_count(),
            c.label()
        )
        .unwrap();
    }
    writeln!(
        out,
        "{} cells x {} seeds = {} runs ({} iterations each)",
        cells.len(),
        seeds.len(),
        cells.len() * seeds.len(),
        cfg.train.iterations
    )
    .unwrap();
    Ok(out)
}

pub fn record_path(out_dir: &Path, slug: &str, seed: u64) -> PathBuf {
    out_dir
        .join(RECORDS_DIR)
        .join(format!("{slug}-s{seed}.json"))
}

fn run_one(cell: &Cell, features: &FeatureSet, seed: u64, n_seeds: usize) -> CliResult<RunRecord> {
    let network = cell.network()?;
    let (run, acc) = match &network {
        Network::Quantum(model) => {
            let run = train(
                model,
                &cell.train,
                &features.train_x,
                &features.train_y,
                seed,
            )?;
            let acc = evaluate(model, &run.params, &features.test_x, &features.test_y)?;
            (run, acc)
        }
        Network::Classical(spec) => {
            let run = train_cnn(
                spec,
                &cell.train,
                &features.train_x,
                &features.train_y,
                seed,
            )?;
            let acc = evaluate_cnn(spec, &run.params, &features.test_x, &features.test_y)?;
            (run, acc)
        }
    };
    Ok(RunRecord {
        slug: cell.slug(),
        dataset: cell.dataset.to_string(),
        model: cell.model.to_string(),
        ansatz: cell.ansatz_str(),
        encoding: cell.encoding_str(),
        reduction: cell.reduction_str(),
        features: cell.features,
        loss: cell.train.loss.to_string(),
        optimizer: cell.train.optimizer.to_string(),
        boundary: cell.boundary.to_string(),
        sharing: cell.sharing().to_string(),
        filters: cell.filters,
        params: network.param_count(),
        seed,
        n_seeds_planned: n_seeds,
        config_hash: cell.config_hash(),
        model_hash: network.model_hash(),
        config: cell.canonical(),
        test_accuracy: 100.0 * acc,
        wall_time_s: run.wall_time_s,
        loss_trace: run.loss_trace,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    serde_json::to_writer(&mut f, value).context("serializing run record")?;
    f.write_all(b"\n")?;
    drop(f);
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs every (cell, seed) pair, writes records and `summary.csv` under `opts.out_dir`.
pub fn execute(cfg: &RunConfig, opts: &RunOptions) -> CliResult<RunOutcome> {
    let cells = cfg.expand()?;
    let seeds = cfg.seeds();
    let mut datasets: Vec<_> = cells.iter().map(|c| c.dataset).collect();
    datasets.dedup();
    for &d in &datasets {
        check_data(&opts.data_root, d)?;
    }
    std::fs::create_dir_all(opts.out_dir.join(RECORDS_DIR))?;

    let mut store = FeatureStore::new(opts.data_root.clone(), opts.cache_dir.clone());
    let mut features: Vec<Arc<FeatureSet>> = Vec::with_capacity(cells.len());
    for c in &cells {
        features.push(store.get(&c.feature_key(), &c.autoencoder)?);
    }

    let mut done: Vec<RunRecord> = Vec::new();
    let mut todo: Vec<(usize, u64)> = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        for &s in &seeds {
            let path = record_path(&opts.out_dir, &c.slug(), s);
            let existing = opts
                .resume
                .then(|| std::fs::read_to_string(&path).ok())
                .flatten()
                .and_then(|t| serde_json::from_str::<RunRecord>(&t).ok())
                .filter(|r| r.config_hash == c.config_hash() && r.seed == s);
            match existing {
                Some(r) => done.push(r),
                None => todo.push((i, s)),
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .context("building worker pool")?;
    let total = todo.len();
    let finished = AtomicUsize::new(0);
    let fresh: Vec<RunRecord> = pool.install(|| {
        todo.par_iter()
            .map(|&(i, seed)| {
                let cell = &cells[i];
                let rec = run_one(cell, &features[i], seed, seeds.len()).map_err(|e| {
                    CliError::Other(anyhow::anyhow!("{} seed {seed}: {e}", cell.label()))
                })?;
                write_json(&record_path(&opts.out_dir, &rec.slug, seed), &rec)?;
                let k = finished.fetch_add(1, Ordering::Relaxed) + 1;
                if opts.progress {
                    eprintln!(
                        "[{k}/{total}] {} seed {seed}: {:.2}% ({:.1}s)",
                        cell.label(),
                        rec.test_accuracy,
                        rec.wall_time_s
                    );
                }
                Ok(rec)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let order = |r: &RunRecord| {
        (
            cells.iter().position(|c| c.config_hash() == r.config_hash),
            r.seed,
        )
    };
    let mut records: Vec<RunRecord> = done.into_iter().chain(fresh).collect();
    records.sort_by_key(order);
    let summary = aggregate(&records);
    std::fs::write(opts.out_dir.join(SUMMARY_FILE), summary_csv(&summary))?;
    Ok(RunOutcome {
        cells,
        records,
        summary,
    })
}
