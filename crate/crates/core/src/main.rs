//! Command-line front end for the peer-voting pipeline.
//!
//! Subcommands mirror the pipeline stages (`generate`, `partition`,
//! `train`, `predict`, `vote`, `evaluate`) plus `experiment`, which runs
//! everything end to end from one config file. Exit code 0 on success;
//! failures print a stage-tagged message on stderr and exit nonzero.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use peervote::config::{DatasetSource, ExperimentConfig, Overrides, PartitionChoice};
use peervote::data::{
    generate_dataset, load_dataset, load_model, save_dataset, save_model, save_predictions,
};
use peervote::error::{Error, Result};
use peervote::experiment::{
    build_peer_config, frequencies_text, partition_text, replay_votes, results_from_peer,
    results_from_votes, run_experiment, summary_csv, training_text, votes_text, ModelEval,
};
use peervote::metrics::build_report;
use peervote::peers::{predict_records, train_ensemble};
use peervote::taxonomy::{
    compute_frequencies, partition_classes, tertile_thresholds, FrequencyTable, GroupPartition,
};
use peervote::{Dataset64, Ensemble64};

#[derive(Parser)]
#[command(
    name = "peervote",
    version,
    about = "Long-tailed classification via head/body/tail peer classifiers and consensus voting"
)]
struct Cli {
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Peer layout such as HBT_B_T, overriding the config file.
    #[arg(long, global = true)]
    peers: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic long-tailed dataset plus its frequency summary.
    Generate,
    /// Compute class frequencies and the head/body/tail partition.
    Partition,
    /// Train the configured peers on the full dataset and save the model.
    Train,
    /// Run a saved model over a dataset and save its predictions.
    Predict {
        /// Model file written by `train` or `experiment`.
        #[arg(long)]
        model: PathBuf,
        /// Dataset file; defaults to the config's dataset source.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Consensus-vote a predictions file and report the voted metrics.
    Vote {
        #[arg(long)]
        predictions: PathBuf,
        /// Peer indices allowed to vote (ablation), e.g. 0,2.
        #[arg(long, value_delimiter = ',')]
        peers_subset: Option<Vec<usize>>,
        /// Ks to evaluate at, e.g. 20,50,100; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Report each peer and the voted ensemble from a predictions file.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Dataset to derive group statistics from.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Ks to evaluate at, e.g. 20,50,100; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Run the whole pipeline from the config: dataset through reports.
    Experiment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out,
        peer_spec: cli.peers,
    };
    let config = ExperimentConfig::resolve(cli.config.as_deref(), &overrides)
        .map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| peervote::error::io_at(&config.out_dir, e).in_stage("output"))?;

    match cli.command {
        Command::Generate => cmd_generate(&config),
        Command::Partition => cmd_partition(&config),
        Command::Train => cmd_train(&config),
        Command::Predict { model, dataset } => cmd_predict(&config, &model, dataset.as_deref()),
        Command::Vote {
            predictions,
            peers_subset,
            ks,
        } => cmd_vote(&config, &predictions, peers_subset.as_deref(), ks),
        Command::Evaluate {
            predictions,
            dataset,
            ks,
        } => cmd_evaluate(&config, &predictions, dataset.as_deref(), ks),
        Command::Experiment => cmd_experiment(&config),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| peervote::error::io_at(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Loads or generates the configured dataset; generated data is saved
/// next to the other artifacts so the run is reproducible from disk.
fn obtain_dataset(config: &ExperimentConfig, save_generated: bool) -> Result<Dataset64> {
    match &config.dataset {
        DatasetSource::Path(path) => load_dataset(path),
        DatasetSource::Generate(spec) => {
            let dataset = generate_dataset(spec)?;
            if save_generated {
                let path = config.out_dir.join("dataset.txt");
                save_dataset(&dataset, &path)?;
                println!("wrote {}", path.display());
            }
            Ok(dataset)
        }
    }
}

fn resolve_partition(
    config: &ExperimentConfig,
    freq: &FrequencyTable,
) -> Result<GroupPartition> {
    let (t_head, t_body) = match config.partition {
        PartitionChoice::Tertile => tertile_thresholds(freq)?,
        PartitionChoice::Thresholds { t_head, t_body } => (t_head, t_body),
    };
    partition_classes(freq, t_head, t_body)
}

fn validate_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::Config("need at least one K".into()));
    }
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::Config("every K must be at least 1".into()));
    }
    Ok(())
}

fn cmd_generate(config: &ExperimentConfig) -> Result<()> {
    let DatasetSource::Generate(spec) = &config.dataset else {
        return Err(Error::Config(
            "generate needs a [dataset.generate] section, but the config points at a file".into(),
        )
        .in_stage("dataset"));
    };
    let dataset = (|| -> Result<Dataset64> {
        let dataset = generate_dataset(spec)?;
        save_dataset(&dataset, &config.out_dir.join("dataset.txt"))?;
        println!("wrote {}", config.out_dir.join("dataset.txt").display());
        Ok(dataset)
    })()
    .map_err(|e| e.in_stage("dataset"))?;

    let freq = compute_frequencies(&dataset).map_err(|e| e.in_stage("frequencies"))?;
    write_text(&config.out_dir.join("frequencies.txt"), &frequencies_text(&freq))?;
    println!(
        "{} instances over {} classes, most frequent share {:.3}",
        dataset.len(),
        dataset.num_classes(),
        freq.counts().iter().max().copied().unwrap_or(0) as f64 / freq.total() as f64
    );
    Ok(())
}

fn cmd_partition(config: &ExperimentConfig) -> Result<()> {
    let dataset = obtain_dataset(config, true).map_err(|e| e.in_stage("dataset"))?;
    let freq = compute_frequencies(&dataset).map_err(|e| e.in_stage("frequencies"))?;
    write_text(&config.out_dir.join("frequencies.txt"), &frequencies_text(&freq))?;

    let partition = resolve_partition(config, &freq).map_err(|e| e.in_stage("partition"))?;
    write_text(
        &config.out_dir.join("partition.txt"),
        &partition_text(&partition, &freq),
    )?;
    let (t_head, t_body) = partition.thresholds();
    let [h, b, t] = partition.group_sizes();
    println!("cutoffs: head >= {t_head}, body >= {t_body}; sizes: head {h}, body {b}, tail {t}");
    Ok(())
}

fn cmd_train(config: &ExperimentConfig) -> Result<()> {
    let dataset = obtain_dataset(config, true).map_err(|e| e.in_stage("dataset"))?;
    let freq = compute_frequencies(&dataset).map_err(|e| e.in_stage("frequencies"))?;
    let partition = resolve_partition(config, &freq).map_err(|e| e.in_stage("partition"))?;

    let (ensemble, report) = (|| {
        let peer_config = build_peer_config(&dataset, &partition, &config.peers)?;
        train_ensemble(&dataset, &peer_config, &partition, &config.train, config.seed)
    })()
    .map_err(|e| e.in_stage("train"))?;

    save_model(&ensemble, &config.out_dir.join("model.txt"))?;
    println!("wrote {}", config.out_dir.join("model.txt").display());
    write_text(&config.out_dir.join("training.txt"), &training_text(&report))?;
    println!(
        "trained {} peers: summed loss {} -> {}",
        ensemble.peers().len(),
        report.initial_total(),
        report.final_total()
    );
    Ok(())
}

fn cmd_predict(
    config: &ExperimentConfig,
    model_path: &Path,
    dataset_path: Option<&Path>,
) -> Result<()> {
    let ensemble: Ensemble64 = load_model(model_path).map_err(|e| e.in_stage("load"))?;
    let dataset = match dataset_path {
        Some(path) => load_dataset(path),
        None => obtain_dataset(config, false),
    }
    .map_err(|e| e.in_stage("dataset"))?;
    if dataset.num_classes() != ensemble.num_classes() {
        return Err(Error::Config(format!(
            "model covers {} classes but the dataset declares {}",
            ensemble.num_classes(),
            dataset.num_classes()
        ))
        .in_stage("predict"));
    }

    let records = predict_records(&ensemble, &dataset).map_err(|e| e.in_stage("predict"))?;
    let path = config.out_dir.join("predictions.txt");
    save_predictions(&records, ensemble.peers().len(), ensemble.num_classes(), &path)
        .map_err(|e| e.in_stage("predict"))?;
    println!("wrote {} ({} records)", path.display(), records.len());
    Ok(())
}

fn cmd_vote(
    config: &ExperimentConfig,
    predictions: &Path,
    peers_subset: Option<&[usize]>,
    ks: Option<Vec<usize>>,
) -> Result<()> {
    let replay = replay_votes(predictions, peers_subset, config.eval.minority_penalty)?;
    let ks = ks.unwrap_or_else(|| config.eval.ks.clone());
    validate_ks(&ks)?;

    let report = (|| {
        let results = results_from_votes(&replay.records, &replay.votes)?;
        build_report(&results, &ks, replay.num_classes, None)
    })()
    .map_err(|e| e.in_stage("evaluate"))?;

    write_text(
        &config.out_dir.join("votes.txt"),
        &votes_text(&replay.records, &replay.votes),
    )?;
    write_text(&config.out_dir.join("vote_metrics.csv"), &report.to_csv())?;
    write_text(&config.out_dir.join("vote_metrics.txt"), &report.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_evaluate(
    config: &ExperimentConfig,
    predictions: &Path,
    dataset_path: Option<&Path>,
    ks: Option<Vec<usize>>,
) -> Result<()> {
    let replay = replay_votes(predictions, None, config.eval.minority_penalty)?;
    let ks = ks.unwrap_or_else(|| config.eval.ks.clone());
    validate_ks(&ks)?;

    let partition = match dataset_path {
        None => None,
        Some(path) => {
            let dataset: Dataset64 = load_dataset(path).map_err(|e| e.in_stage("dataset"))?;
            if dataset.num_classes() != replay.num_classes {
                return Err(Error::Config(format!(
                    "predictions cover {} classes but the dataset declares {}",
                    replay.num_classes,
                    dataset.num_classes()
                ))
                .in_stage("partition"));
            }
            let freq = compute_frequencies(&dataset).map_err(|e| e.in_stage("frequencies"))?;
            Some(resolve_partition(config, &freq).map_err(|e| e.in_stage("partition"))?)
        }
    };

    let rows = (|| -> Result<Vec<ModelEval>> {
        let mut rows = Vec::with_capacity(replay.num_peers + 1);
        for i in 0..replay.num_peers {
            let results = results_from_peer(&replay.records, i)?;
            rows.push(ModelEval {
                name: format!("peer{i}"),
                // The predictions file does not say which groups a peer
                // was trained on.
                layout: "-".into(),
                report: build_report(&results, &ks, replay.num_classes, partition.as_ref())?,
            });
        }
        let results = results_from_votes(&replay.records, &replay.votes)?;
        rows.push(ModelEval {
            name: "ensemble".into(),
            layout: "-".into(),
            report: build_report(&results, &ks, replay.num_classes, partition.as_ref())?,
        });
        Ok(rows)
    })()
    .map_err(|e| e.in_stage("evaluate"))?;

    for row in &rows {
        let base = config.out_dir.join(format!("{}_metrics", row.name));
        write_text(&base.with_extension("csv"), &row.report.to_csv())?;
        write_text(&base.with_extension("txt"), &row.report.to_text())?;
    }
    let summary = summary_csv(&rows, &ks);
    write_text(&config.out_dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_experiment(config: &ExperimentConfig) -> Result<()> {
    let outcome = run_experiment(config)?;
    println!(
        "experiment {} complete: {} train / {} test instances, reports in {}",
        outcome.spec_string,
        outcome.train_size,
        outcome.test_size,
        outcome.out_dir.display()
    );
    let summary = outcome.out_dir.join("summary.csv");
    print!(
        "{}",
        fs::read_to_string(&summary).map_err(|e| peervote::error::io_at(&summary, e))?
    );
    Ok(())
}
