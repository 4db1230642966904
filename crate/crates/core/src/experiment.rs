//! The end-to-end pipeline: dataset, frequencies, partition, train/test
//! split, peer training, prediction, voting, and reports, each stage
//! tagged so failures name the step that broke.
//!
//! Every run also trains a single all-classes cross-entropy baseline
//! with the same budget and seed, so each experiment documents its own
//! delta against the plain model.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetSource, ExperimentConfig, PartitionChoice, PeersSection};
use crate::data::{
    generate_dataset, load_dataset, load_external_predictions, save_dataset, save_model,
    save_predictions, LabeledDataset, PredictionRecord,
};
use crate::error::{Error, Result};
use crate::metrics::{build_report, MetricsReport, Outcome, SceneResults};
use crate::peers::{
    peer_targets, predict_records, train_ensemble, TrainingReport,
};
use crate::taxonomy::{
    compute_frequencies, frequency_shares, partition_classes, render_peer_spec,
    tertile_thresholds, FrequencyTable, GroupPartition, GroupSet, PeerConfig, PeerSetup,
};
use crate::voting::{batch_vote_with_penalty, VoteResult};

/// Offset added to the master seed for the train/test shuffle, so the
/// split RNG never collides with a peer's training RNG (seed + i).
pub const SPLIT_SEED_OFFSET: u64 = 17;

/// Held-out fraction of each class.
pub const TEST_FRACTION: f64 = 0.2;

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(name))
}

/// Seeded per-class 80/20 split. Every class keeps at least one training
/// instance; classes with at least two instances also appear in test, so
/// tail classes stay measurable. Returned index lists are ascending.
pub fn stratified_split<F: crate::Scalar>(
    dataset: &LabeledDataset<F>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (idx, instance) in dataset.instances().iter().enumerate() {
        by_class[instance.label].push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut indices in by_class {
        let c = indices.len();
        if c == 0 {
            continue;
        }
        if c == 1 {
            train.push(indices[0]);
            continue;
        }
        let n_test = ((test_fraction * c as f64).round() as usize).clamp(1, c - 1);
        indices.shuffle(&mut rng);
        test.extend_from_slice(&indices[..n_test]);
        train.extend_from_slice(&indices[n_test..]);
    }
    if test.is_empty() {
        return Err(Error::Config(
            "every class has a single instance; nothing can be held out for testing".into(),
        ));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Lowers the configured peers against the training split: each peer's
/// count-dependent loss pieces are resolved on its own view's counts.
pub fn build_peer_config(
    train: &LabeledDataset<f64>,
    partition: &GroupPartition,
    peers: &PeersSection,
) -> Result<PeerConfig<f64>> {
    let mut setups = Vec::with_capacity(peers.sets.len());
    for (set, choice) in peers.sets.iter().zip(&peers.choices) {
        let view = peer_targets(train, partition, *set)?;
        setups.push(PeerSetup {
            groups: *set,
            loss: choice.loss.to_spec(&view.label_counts())?,
            alpha: choice.alpha,
        });
    }
    let mut config = PeerConfig::new(setups)?;
    config.allow_uncovered = peers.allow_uncovered;
    Ok(config)
}

/// Scene-grouped outcomes of the voted ensemble: one entry per record,
/// scored by the winning vote.
pub fn results_from_votes(
    records: &[PredictionRecord<f64>],
    votes: &[VoteResult<f64>],
) -> Result<SceneResults<f64>> {
    if records.len() != votes.len() {
        return Err(Error::InvalidInput(format!(
            "{} records but {} vote results",
            records.len(),
            votes.len()
        )));
    }
    let mut results = SceneResults::new();
    for (record, vote) in records.iter().zip(votes) {
        results.push(
            record.scene,
            Outcome {
                truth: record.truth,
                predicted: vote.label,
                score: vote.score,
            },
        )?;
    }
    Ok(results)
}

/// Scene-grouped outcomes of one peer evaluated alone over all records,
/// including instances of classes outside its subset (which it can never
/// predict; that is the specialization being measured).
pub fn results_from_peer(
    records: &[PredictionRecord<f64>],
    peer: usize,
) -> Result<SceneResults<f64>> {
    let mut results = SceneResults::new();
    for record in records {
        let vote = record.votes.get(peer).ok_or_else(|| {
            Error::InvalidInput(format!(
                "record {} has {} votes, peer index {peer} is out of range",
                record.instance,
                record.votes.len()
            ))
        })?;
        results.push(
            record.scene,
            Outcome {
                truth: record.truth,
                predicted: vote.label,
                score: vote.confidence,
            },
        )?;
    }
    Ok(results)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| crate::error::io_at(path, e))
}

/// Per-class counts and shares, one line per class.
pub fn frequencies_text(freq: &FrequencyTable) -> String {
    let shares = frequency_shares(freq);
    let mut out = String::from("class count share\n");
    for (class, (&count, share)) in freq.counts().iter().zip(&shares).enumerate() {
        let _ = writeln!(out, "{class} {count} {share}");
    }
    let _ = writeln!(out, "total {}", freq.total());
    out
}

/// The cutoffs, each class's group, and the group sizes.
pub fn partition_text(partition: &GroupPartition, freq: &FrequencyTable) -> String {
    let (t_head, t_body) = partition.thresholds();
    let mut out = format!("t_head {t_head} t_body {t_body}\n");
    for class in 0..partition.num_classes() {
        let _ = writeln!(
            out,
            "{class} {} {}",
            freq.count(class),
            partition.group_of(class).name()
        );
    }
    let [h, b, t] = partition.group_sizes();
    let _ = writeln!(out, "sizes head {h} body {b} tail {t}");
    out
}

/// Per-peer loss trajectory: initial, per-epoch, and final rows.
pub fn training_text(report: &TrainingReport<f64>) -> String {
    let row = |values: &[f64]| -> String {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = format!(
        "initial {} total {}\n",
        row(&report.initial_losses),
        report.initial_total()
    );
    for (e, losses) in report.epoch_peer_losses.iter().enumerate() {
        let _ = writeln!(
            out,
            "epoch {} {} total {}",
            e + 1,
            row(losses),
            report.epoch_totals[e]
        );
    }
    let _ = writeln!(
        out,
        "final {} total {}",
        row(&report.final_losses),
        report.final_total()
    );
    out
}

/// Voted labels, one record per line.
pub fn votes_text(records: &[PredictionRecord<f64>], votes: &[VoteResult<f64>]) -> String {
    let mut out = String::from("instance scene truth label score\n");
    for (record, vote) in records.iter().zip(votes) {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            record.instance, record.scene, record.truth, vote.label, vote.score
        );
    }
    out
}

/// One evaluated model: its row name, the group layout it represents,
/// and its metrics.
#[derive(Clone, Debug)]
pub struct ModelEval {
    pub name: String,
    pub layout: String,
    pub report: MetricsReport<f64>,
}

/// Table-ready summary mirroring the reports: one row per model with
/// mR@K and R@K columns (ascending K) and the four-way mean.
pub fn summary_csv(rows: &[ModelEval], ks: &[usize]) -> String {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut out = String::from("model,config");
    for k in &ks {
        let _ = write!(out, ",mR@{k}");
    }
    for k in &ks {
        let _ = write!(out, ",R@{k}");
    }
    out.push_str(",mean\n");
    for row in rows {
        let _ = write!(out, "{},{}", row.name, row.layout);
        for k in &ks {
            let _ = write!(out, ",{:.4}", row.report.mean_recall_at[k]);
        }
        for k in &ks {
            let _ = write!(out, ",{:.4}", row.report.recall_at[k]);
        }
        match row.report.mean {
            Some(m) => {
                let _ = writeln!(out, ",{m:.4}");
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

/// Everything a finished experiment produced, for callers that inspect
/// results programmatically; all artifacts are also on disk in `out_dir`.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub spec_string: String,
    pub partition: GroupPartition,
    pub train_size: usize,
    pub test_size: usize,
    pub training: TrainingReport<f64>,
    pub baseline_training: TrainingReport<f64>,
    pub peer_evals: Vec<ModelEval>,
    pub ensemble: ModelEval,
    pub baseline: ModelEval,
}

/// Runs the whole pipeline described by `config`. Deterministic: the
/// outcome is a pure function of the config (including its seed).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| crate::error::io_at(out, e))?;

    let dataset: LabeledDataset<f64> = stage("dataset", || match &config.dataset {
        DatasetSource::Path(path) => load_dataset(path),
        DatasetSource::Generate(spec) => {
            let dataset = generate_dataset(spec)?;
            save_dataset(&dataset, &out.join("dataset.txt"))?;
            Ok(dataset)
        }
    })?;

    let freq = stage("frequencies", || {
        let freq = compute_frequencies(&dataset)?;
        write_text(&out.join("frequencies.txt"), &frequencies_text(&freq))?;
        Ok(freq)
    })?;

    let partition = stage("partition", || {
        let (t_head, t_body) = match config.partition {
            PartitionChoice::Tertile => tertile_thresholds(&freq)?,
            PartitionChoice::Thresholds { t_head, t_body } => (t_head, t_body),
        };
        let partition = partition_classes(&freq, t_head, t_body)?;
        write_text(&out.join("partition.txt"), &partition_text(&partition, &freq))?;
        Ok(partition)
    })?;

    let (train_idx, test_idx) = stage("split", || {
        stratified_split(
            &dataset,
            TEST_FRACTION,
            config.seed.wrapping_add(SPLIT_SEED_OFFSET),
        )
    })?;
    let train_ds = dataset.select(&train_idx);
    let test_ds = dataset.select(&test_idx);

    let (ensemble, training, baseline_model, baseline_training) = stage("train", || {
        let peer_config = build_peer_config(&train_ds, &partition, &config.peers)?;
        let (ensemble, training) =
            train_ensemble(&train_ds, &peer_config, &partition, &config.train, config.seed)?;
        save_model(&ensemble, &out.join("model.txt"))?;
        write_text(&out.join("training.txt"), &training_text(&training))?;

        let baseline_config = PeerConfig::uniform_cross_entropy(&[GroupSet::FULL])?;
        let (baseline_model, baseline_training) = train_ensemble(
            &train_ds,
            &baseline_config,
            &partition,
            &config.train,
            config.seed,
        )?;
        save_model(&baseline_model, &out.join("baseline_model.txt"))?;
        write_text(
            &out.join("baseline_training.txt"),
            &training_text(&baseline_training),
        )?;
        Ok((ensemble, training, baseline_model, baseline_training))
    })?;

    let (records, baseline_records) = stage("predict", || {
        let records = predict_records(&ensemble, &test_ds)?;
        save_predictions(
            &records,
            ensemble.peers().len(),
            dataset.num_classes(),
            &out.join("predictions.txt"),
        )?;
        let baseline_records = predict_records(&baseline_model, &test_ds)?;
        save_predictions(
            &baseline_records,
            1,
            dataset.num_classes(),
            &out.join("baseline_predictions.txt"),
        )?;
        Ok((records, baseline_records))
    })?;

    let (votes, baseline_votes) = stage("vote", || {
        let penalty = config.eval.minority_penalty;
        let to_votes = |rs: &[PredictionRecord<f64>]| -> Vec<Vec<_>> {
            rs.iter().map(|r| r.votes.clone()).collect()
        };
        let votes = batch_vote_with_penalty(&to_votes(&records), penalty)?;
        write_text(&out.join("votes.txt"), &votes_text(&records, &votes))?;
        let baseline_votes = batch_vote_with_penalty(&to_votes(&baseline_records), penalty)?;
        Ok((votes, baseline_votes))
    })?;

    let outcome = stage("evaluate", || {
        let ks = &config.eval.ks;
        let n = dataset.num_classes();
        let spec_string = render_peer_spec(&config.peers.sets);

        let mut peer_evals = Vec::with_capacity(ensemble.peers().len());
        for (i, peer) in ensemble.peers().iter().enumerate() {
            let results = results_from_peer(&records, i)?;
            peer_evals.push(ModelEval {
                name: format!("peer{i}"),
                layout: peer.groups().to_string(),
                report: build_report(&results, ks, n, Some(&partition))?,
            });
        }
        let ensemble_eval = ModelEval {
            name: "ensemble".into(),
            layout: spec_string.clone(),
            report: build_report(&results_from_votes(&records, &votes)?, ks, n, Some(&partition))?,
        };
        let baseline_eval = ModelEval {
            name: "baseline".into(),
            layout: GroupSet::FULL.to_string(),
            report: build_report(
                &results_from_votes(&baseline_records, &baseline_votes)?,
                ks,
                n,
                Some(&partition),
            )?,
        };

        let mut rows = vec![baseline_eval.clone()];
        rows.extend(peer_evals.iter().cloned());
        rows.push(ensemble_eval.clone());
        for row in &rows {
            let base = out.join(format!("{}_metrics", row.name));
            write_text(&base.with_extension("csv"), &row.report.to_csv())?;
            write_text(&base.with_extension("txt"), &row.report.to_text())?;
        }
        write_text(&out.join("summary.csv"), &summary_csv(&rows, ks))?;

        Ok(ExperimentOutcome {
            out_dir: out.clone(),
            spec_string,
            partition: partition.clone(),
            train_size: train_idx.len(),
            test_size: test_idx.len(),
            training,
            baseline_training,
            peer_evals,
            ensemble: ensemble_eval,
            baseline: baseline_eval,
        })
    })?;
    Ok(outcome)
}

/// A replayed predictions file: the records, who voted, and the result.
#[derive(Clone, Debug)]
pub struct VoteReplay {
    pub num_classes: usize,
    /// Votes per record after any subsetting.
    pub num_peers: usize,
    pub records: Vec<PredictionRecord<f64>>,
    pub votes: Vec<VoteResult<f64>>,
}

/// Loads a predictions file and consensus-votes it, optionally with only
/// a subset of the peers (an ablation of who gets a vote).
pub fn replay_votes(
    path: &Path,
    peers_subset: Option<&[usize]>,
    minority_penalty: f64,
) -> Result<VoteReplay> {
    let file = stage("load", || {
        let file = load_external_predictions::<f64>(path)?;
        if file.records.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} holds no prediction records",
                path.display()
            )));
        }
        Ok(file)
    })?;

    let records = stage("vote", || match peers_subset {
        None => Ok(file.records.clone()),
        Some(subset) => {
            if subset.is_empty() {
                return Err(Error::Config("peer subset must name at least one peer".into()));
            }
            let mut seen = vec![false; file.num_peers];
            for &j in subset {
                if j >= file.num_peers {
                    return Err(Error::Config(format!(
                        "peer index {j} out of range; the file holds {} peers",
                        file.num_peers
                    )));
                }
                if seen[j] {
                    return Err(Error::Config(format!("peer index {j} repeats in the subset")));
                }
                seen[j] = true;
            }
            Ok(file
                .records
                .iter()
                .map(|r| PredictionRecord {
                    votes: subset.iter().map(|&j| r.votes[j]).collect(),
                    ..r.clone()
                })
                .collect())
        }
    })?;

    let votes = stage("vote", || {
        let all: Vec<Vec<_>> = records
            .iter()
            .map(|r: &PredictionRecord<f64>| r.votes.clone())
            .collect();
        batch_vote_with_penalty(&all, minority_penalty)
    })?;
    Ok(VoteReplay {
        num_classes: file.num_classes,
        num_peers: peers_subset.map_or(file.num_peers, <[usize]>::len),
        records,
        votes,
    })
}
