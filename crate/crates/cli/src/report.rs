//! Aggregation of run records into CSV and Markdown tables.
//!
//! Output is a pure function of the record set: rows are sorted and floats use
//! fixed precision, so re-running a report is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qcnn::{AnsatzId, EncodingKind};

use crate::error::{CliError, CliResult};
use crate::runner::{RunRecord, RECORDS_DIR, SUMMARY_FILE};

/// Mean and sample (n - 1) standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One aggregated cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    pub ansatz: String,
    pub encoding: String,
    pub reduction: String,
    pub loss: String,
    pub optimizer: String,
    pub boundary: String,
    pub sharing: String,
    pub filters: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n_seeds: usize,
    pub n_seeds_planned: usize,
    pub params: usize,
    /// Mean per run.
    pub wall_time_s: f64,
    pub slug: String,
    pub config_hash: String,
    pub model_hash: String,
    pub accuracies: Vec<f64>,
}

impl SummaryRow {
    pub fn complete(&self) -> bool {
        self.n_seeds >= self.n_seeds_planned
    }

    fn cell(&self) -> String {
        format!(
            "{:.1} ± {:.1}{}",
            self.mean_acc,
            self.std_acc,
            if self.complete() { "" } else { "*" }
        )
    }
}

/// Groups records by config hash; duplicate seeds keep their first record.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let g = groups
            .entry((r.slug.clone(), r.config_hash.clone()))
            .or_default();
        if !g.iter().any(|x| x.seed == r.seed) {
            g.push(r);
        }
    }
    groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|r| r.seed);
            let accs: Vec<f64> = g.iter().map(|r| r.test_accuracy).collect();
            let (mean_acc, std_acc) = mean_std(&accs);
            let f = g[0];
            SummaryRow {
                dataset: f.dataset.clone(),
                model: f.model.clone(),
                ansatz: f.ansatz.clone(),
                encoding: f.encoding.clone(),
                reduction: f.reduction.clone(),
                loss: f.loss.clone(),
                optimizer: f.optimizer.clone(),
                boundary: f.boundary.clone(),
                sharing: f.sharing.clone(),
                filters: f.filters,
                mean_acc,
                std_acc,
                n_seeds: g.len(),
                n_seeds_planned: g.iter().map(|r| r.n_seeds_planned).max().unwrap_or(0),
                params: f.params,
                wall_time_s: g.iter().map(|r| r.wall_time_s).sum::<f64>() / g.len() as f64,
                slug: f.slug.clone(),
                config_hash: f.config_hash.clone(),
                model_hash: f.model_hash.clone(),
                accuracies: accs,
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &str =
    "dataset,ansatz,encoding,reduction,loss,optimizer,boundary,sharing,L,mean_acc,std_acc,\
n_seeds,params,wall_time_s,model,complete,config_hash,model_hash";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.4},{:.4},{},{},{:.3},{},{},{},{}",
            r.dataset,
            r.ansatz,
            r.encoding,
            r.reduction,
            r.loss,
            r.optimizer,
            r.boundary,
            r.sharing,
            r.filters,
            r.mean_acc,
            r.std_acc,
            r.n_seeds,
            r.params,
            r.wall_time_s,
            r.model,
            r.complete(),
            r.config_hash,
            r.model_hash
        )
        .unwrap();
    }
    out
}

/// Reads `*.json` records from `dir` or from `dir/records`.
pub fn load_records(dir: &Path) -> CliResult<Vec<RunRecord>> {
    let nested = dir.join(RECORDS_DIR);
    let dir = if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    };
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(_) => {
            return Err(CliError::MissingData(format!(
                "no records directory at {}",
                dir.display()
            )))
        }
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        let rec: RunRecord = serde_json::from_str(&text)
            .map_err(|e| CliError::Other(anyhow::anyhow!("{}: {e}", p.display())))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(CliError::MissingData(format!(
            "no run records in {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn ansatz_rank(a: &str) -> usize {
    a.parse::<AnsatzId>()
        .ok()
        .and_then(|id| AnsatzId::ALL.iter().position(|x| *x == id))
        .unwrap_or(usize::MAX)
}

fn encoding_rank(e: &str) -> usize {
    e.parse::<EncodingKind>()
        .ok()
        .and_then(|k| EncodingKind::ALL.iter().position(|x| *x == k))
        .unwrap_or(usize::MAX)
}

/// Mean and standard deviation of per-iteration losses across seeds.
pub fn loss_curve_csv(records: &[&RunRecord]) -> String {
    let len = records
        .iter()
        .map(|r| r.loss_trace.len())
        .max()
        .unwrap_or(0);
    let mut out = String::from("iteration,mean_loss,std_loss,n\n");
    for i in 0..len {
        let vals: Vec<f64> = records
            .iter()
            .filter_map(|r| r.loss_trace.get(i).copied())
            .collect();
        let (m, s) = mean_std(&vals);
        writeln!(out, "{i},{m:.8},{s:.8},{}", vals.len()).unwrap();
    }
    out
}

type GroupKey = (String, String, String, String, String, usize);

fn group_key(r: &SummaryRow) -> GroupKey {
    (
        r.dataset.clone(),
        r.model.clone(),
        r.loss.clone(),
        r.optimizer.clone(),
        r.boundary.clone(),
        r.filters,
    )
}

/// Ansatz x (encoding, reduction) pivots, one per setting.
fn accuracy_tables(rows: &[SummaryRow], md: &mut String) {
    let mut groups: BTreeMap<GroupKey, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.model != "cnn") {
        groups.entry(group_key(r)).or_default().push(r);
    }
    for ((dataset, model, loss, opt, boundary, l), g) in groups {
        writeln!(
            md,
            "## {dataset}: {model}, loss {loss}, {opt}, {boundary} boundary, L = {l}\n"
        )
        .unwrap();
        let mut cols: Vec<(String, String)> = g
            .iter()
            .map(|r| (r.encoding.clone(), r.reduction.clone()))
            .collect();
        cols.sort_by(|a, b| (encoding_rank(&a.0), &a.1).cmp(&(encoding_rank(&b.0), &b.1)));
        cols.dedup();
        let mut ansatze: Vec<String> = g.iter().map(|r| r.ansatz.clone()).collect();
        ansatze.sort_by_key(|a| (ansatz_rank(a), a.clone()));
        ansatze.dedup();
        write!(md, "| ansatz | params |").unwrap();
        for (e, red) in &cols {
            write!(md, " {e} {red} |").unwrap();
        }
        md.push('\n');
        md.push_str(&"|---".repeat(cols.len() + 2));
        md.push_str("|\n");
        for a in &ansatze {
            let params = g.iter().find(|r| &r.ansatz == a).map_or(0, |r| r.params);
            write!(md, "| {a} | {params} |").unwrap();
            for (e, red) in &cols {
                match g
                    .iter()
                    .find(|r| &r.ansatz == a && &r.encoding == e && &r.reduction == red)
                {
                    Some(r) => write!(md, " {} |", r.cell()).unwrap(),
                    None => md.push_str("  |"),
                }
            }
            md.push('\n');
        }
        md.push('\n');
    }
}

/// Averages over all ansatz and seeds per (setting, encoding, reduction).
pub fn encoding_averages(
    records: &[RunRecord],
) -> Vec<(GroupKey, String, String, f64, f64, usize)> {
    let mut groups: BTreeMap<(GroupKey, usize, String, String), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.model != "cnn") {
        let key = (
            r.dataset.clone(),
            r.model.clone(),
            r.loss.clone(),
            r.optimizer.clone(),
            r.boundary.clone(),
            r.filters,
        );
        groups
            .entry((
                key,
                encoding_rank(&r.encoding),
                r.encoding.clone(),
                r.reduction.clone(),
            ))
            .or_default()
            .push(r.test_accuracy);
    }
    groups
        .into_iter()
        .map(|((k, _, e, red), v)| {
            let (m, s) = mean_std(&v);
            (k, e, red, m, s, v.len())
        })
        .collect()
}

fn cnn_table(rows: &[SummaryRow], md: &mut String) {
    let cnn: Vec<&SummaryRow> = rows.iter().filter(|r| r.model == "cnn").collect();
    if cnn.is_empty() {
        return;
    }
    let mut datasets: Vec<&str> = cnn.iter().map(|r| r.dataset.as_str()).collect();
    datasets.sort();
    datasets.dedup();
    for d in datasets {
        let g: Vec<&&SummaryRow> = cnn.iter().filter(|r| r.dataset == d).collect();
        let mut reds: Vec<String> = g
            .iter()
            .map(|r| r.reduction.trim_end_matches(char::is_numeric).to_string())
            .collect();
        reds.sort();
        reds.dedup();
        let mut budgets: Vec<usize> = g.iter().map(|r| r.params).collect();
        budgets.sort();
        budgets.dedup();
        writeln!(md, "## {d}: classical CNN baselines\n").unwrap();
        write!(md, "| params | input size |").unwrap();
        for red in &reds {
            write!(md, " {red} |").unwrap();
        }
        md.push('\n');
        md.push_str(&"|---".repeat(reds.len() + 2));
        md.push_str("|\n");
        for b in budgets {
            let input = g.iter().find(|r| r.params == b).map_or(0, |r| {
                r.reduction
                    .trim_start_matches(|c: char| !c.is_numeric())
                    .parse()
                    .unwrap_or(0)
            });
            write!(md, "| {b} | {input} |").unwrap();
            for red in &reds {
                match g
                    .iter()
                    .find(|r| r.params == b && r.reduction.starts_with(red.as_str()))
                {
                    Some(r) => write!(md, " {} |", r.cell()).unwrap(),
                    None => md.push_str("  |"),
                }
            }
            md.push('\n');
        }
        md.push('\n');
    }
}

/// Writes `summary.csv`, `encoding_averages.csv`, `filters.csv`, `report.md` and
/// `loss_curves/*.csv` into `out_dir`; returns the files written.
pub fn write_report(records: &[RunRecord], out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rows = aggregate(records);
    let curves_dir = out_dir.join("loss_curves");
    std::fs::create_dir_all(&curves_dir)?;
    let mut written = Vec::new();
    let mut put = |name: PathBuf, body: String| -> CliResult<()> {
        std::fs::write(&name, body)?;
        written.push(name);
        Ok(())
    };

    put(out_dir.join(SUMMARY_FILE), summary_csv(&rows))?;

    let averages = encoding_averages(records);
    let mut avg_csv = String::from(
        "dataset,model,loss,optimizer,boundary,L,encoding,reduction,mean_acc,std_acc,n_runs\n",
    );
    for ((d, m, l, o, b, f), e, red, mean, std, n) in &averages {
        writeln!(
            avg_csv,
            "{d},{m},{l},{o},{b},{f},{e},{red},{mean:.4},{std:.4},{n}"
        )
        .unwrap();
    }
    put(out_dir.join("encoding_averages.csv"), avg_csv)?;

    let mut series: Vec<&SummaryRow> = rows.iter().filter(|r| r.model != "cnn").collect();
    series.sort_by(|a, b| {
        let ka = (
            &a.dataset,
            &a.model,
            ansatz_rank(&a.ansatz),
            encoding_rank(&a.encoding),
            &a.reduction,
            &a.loss,
            &a.optimizer,
            &a.boundary,
            a.filters,
        );
        let kb = (
            &b.dataset,
            &b.model,
            ansatz_rank(&b.ansatz),
            encoding_rank(&b.encoding),
            &b.reduction,
            &b.loss,
            &b.optimizer,
            &b.boundary,
            b.filters,
        );
        ka.cmp(&kb)
    });
    let mut filters_csv = String::from("dataset,model,ansatz,encoding,reduction,loss,optimizer,boundary,L,params,mean_acc,std_acc,n_seeds\n");
    for r in series {
        writeln!(
            filters_csv,
            "{},{},{},{},{},{},{},{},{},{},{:.4},{:.4},{}",
            r.dataset,
            r.model,
            r.ansatz,
            r.encoding,
            r.reduction,
            r.loss,
            r.optimizer,
            r.boundary,
            r.filters,
            r.params,
            r.mean_acc,
            r.std_acc,
            r.n_seeds
        )
        .unwrap();
    }
    put(out_dir.join("filters.csv"), filters_csv)?;

    let mut by_cell: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_cell.entry(r.slug.as_str()).or_default().push(r);
    }
    for (slug, mut recs) in by_cell {
        recs.sort_by_key(|r| r.seed);
        recs.dedup_by_key(|r| r.seed);
        put(
            curves_dir.join(format!("{slug}.csv")),
            loss_curve_csv(&recs),
        )?;
    }

    let mut md = String::from("# Benchmark report\n\nMean test accuracy (%) ± sample standard deviation over seeds. `*` marks cells with missing seeds.\n\n");
    accuracy_tables(&rows, &mut md);
    if !averages.is_empty() {
        md.push_str("## Averages over all ansatz and seeds\n\n| dataset | model | loss | boundary | L | encoding | reduction | accuracy | runs |\n|---|---|---|---|---|---|---|---|---|\n");
        for ((d, m, l, _, b, f), e, red, mean, std, n) in &averages {
            writeln!(
                md,
                "| {d} | {m} | {l} | {b} | {f} | {e} | {red} | {mean:.1} ± {std:.1} | {n} |"
            )
            .unwrap();
        }
        md.push('\n');
    }
    cnn_table(&rows, &mut md);
    put(out_dir.join("report.md"), md)?;
    Ok(written)
}
