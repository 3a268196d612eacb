use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qcnn::preprocess::FittedReducer;
use qcnn::{AnsatzId, DatasetName, Loss, ReductionMethod, ReductionSpec};
use qcnn_cli::audit::{census_table, cnn_census, gradcheck, gradcheck_table, quantum_census};
use qcnn_cli::config::AutoencoderSection;
use qcnn_cli::features::{check_data, fitted_reducer, resolve_data_root, DATA_ROOT_ENV};
use qcnn_cli::report::{load_records, write_report};
use qcnn_cli::runner::describe_plan;
use qcnn_cli::{execute, CliError, CliResult, RunConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "qcnn",
    version,
    about = "Quantum convolutional classifier benchmarks"
)]
struct Cli {
    /// Dataset root containing `mnist/` and `fashion/` IDX files.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a reducer on a training split and store it in the cache.
    Preprocess {
        #[arg(long, default_value = "mnist")]
        dataset: String,
        /// bilinear, pca or autoenc.
        #[arg(long)]
        method: String,
        /// Output features (256 for bilinear; 8, 16, 30 or 32 otherwise).
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value = "results/cache")]
        cache: PathBuf,
        /// Autoencoder hidden activation (relu or sigmoid).
        #[arg(long, default_value = "relu")]
        ae_activation: String,
        #[arg(long)]
        ae_epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        ae_seed: u64,
    },
    /// Execute every (cell, seed) run described by a config file.
    Run {
        config: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the run matrix and parameter counts, then exit.
        #[arg(long)]
        dry_run: bool,
        /// Overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep existing records with matching config hashes.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate run records into tables and loss-curve series.
    Report {
        /// Results directory (or its `records/` subdirectory).
        dir: PathBuf,
        /// Defaults to `<dir>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare parameter-shift, adjoint and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 4)]
        qubits: usize,
        /// Ansatz id or `all`.
        #[arg(long, default_value = "all")]
        ansatz: String,
        #[arg(long, default_value_t = 3)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Audit parameter counts of every model family.
    Census {
        #[arg(long, default_value_t = 8)]
        qubits: usize,
        /// Random draws per parameter for the nonzero-gradient test.
        #[arg(long, default_value_t = 2)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse<T: std::str::FromStr>(s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| CliError::Config(e.to_string()))
}

fn main_inner(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Preprocess {
            dataset,
            method,
            dim,
            cache,
            ae_activation,
            ae_epochs,
            ae_seed,
        } => {
            let dataset: DatasetName = parse(&dataset)?;
            let method: ReductionMethod = parse(&method)?;
            let spec = ReductionSpec::new(method, dim, None)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut ae = AutoencoderSection {
                activation: ae_activation,
                seed: ae_seed,
                ..Default::default()
            };
            if let Some(e) = ae_epochs {
                ae.epochs = e;
            }
            let ae = ae.to_config()?;
            let root = resolve_data_root(cli.data_root.as_deref(), None);
            check_data(&root, dataset)?;
            let train = qcnn::data::load_binary(&root, dataset, qcnn::Split::Train)?;
            let images = train.scaled_images();
            let reducer = fitted_reducer(Some(&cache), dataset, &spec, &images, &ae)?;
            match &reducer {
                FittedReducer::Pca(p) => {
                    let total: f64 = p.eigenvalues.iter().sum();
                    println!("pca {dim}: retained variance {total:.6}");
                }
                FittedReducer::AutoEnc(a) => {
                    println!(
                        "autoenc {dim}: reconstruction mse {:.6}",
                        a.reconstruction_mse_rows(&images)?
                    );
                }
                FittedReducer::Bilinear => println!("bilinear: nothing to fit"),
            }
            println!("cached under {}", cache.display());
        }
        Command::Run {
            config,
            jobs,
            dry_run,
            out,
            resume,
        } => {
            let cfg = RunConfig::load(&config)?;
            if dry_run {
                print!("{}", describe_plan(&cfg)?);
                return Ok(());
            }
            let out_dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let opts = RunOptions {
                jobs,
                data_root: resolve_data_root(cli.data_root.as_deref(), cfg.data.root.as_deref()),
                cache_dir: Some(
                    cfg.data
                        .cache
                        .clone()
                        .unwrap_or_else(|| out_dir.join("cache")),
                ),
                out_dir: out_dir.clone(),
                resume,
                progress: true,
            };
            let outcome = execute(&cfg, &opts)?;
            for row in &outcome.summary {
                println!(
                    "{:<70} {:>6.2} ± {:<5.2} (n={}, params={})",
                    row.slug, row.mean_acc, row.std_acc, row.n_seeds, row.params
                );
            }
            println!(
                "wrote {} records and {}",
                outcome.records.len(),
                out_dir.join("summary.csv").display()
            );
        }
        Command::Report { dir, out } => {
            let records = load_records(&dir)?;
            let out = out.unwrap_or_else(|| dir.join("report"));
            std::fs::create_dir_all(&out)?;
            let files = write_report(&records, &out)?;
            println!(
                "{} records -> {} files in {}",
                records.len(),
                files.len(),
                out.display()
            );
        }
        Command::Gradcheck {
            qubits,
            ansatz,
            batch,
            seed,
        } => {
            let ids: Vec<AnsatzId> = if ansatz.eq_ignore_ascii_case("all") {
                AnsatzId::ALL.to_vec()
            } else {
                ansatz.split(',').map(parse).collect::<CliResult<_>>()?
            };
            let rows = gradcheck(&ids, &[Loss::CrossEntropy, Loss::Mse], qubits, batch, seed)?;
            print!("{}", gradcheck_table(&rows));
            if !rows.iter().all(|r| r.passes()) {
                return Err(CliError::Other(anyhow::anyhow!(
                    "gradient mismatch above tolerance"
                )));
            }
        }
        Command::Census {
            qubits,
            draws,
            seed,
        } => {
            let rows = quantum_census(qubits, seed, draws)?;
            print!("{}", census_table(&rows, &cnn_census()?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
