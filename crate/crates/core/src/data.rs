//! Synthetic long-tailed dataset generation and the three on-disk text
//! formats: datasets, prediction records, and trained models.
//!
//! All files are line-delimited text with a one-line versioned header, so
//! fixtures can be authored by hand and parsed from any language. Floats
//! are written with Rust's shortest round-trip formatting, which makes
//! save/load an exact identity and repeated saves byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::peers::{Ensemble, PeerModel, PeerPrediction};
use crate::taxonomy::{Group, GroupPartition, GroupSet};
use crate::{ClassId, Scalar};

const DATASET_TAG: &str = "peervote.dataset.v1";
const PREDICTIONS_TAG: &str = "peervote.predictions.v1";
const MODEL_TAG: &str = "peervote.model.v1";

/// One labeled relation instance: a feature vector with its scene
/// membership and ground-truth class.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<F> {
    pub id: u64,
    pub scene: u64,
    pub features: Vec<F>,
    pub label: ClassId,
}

/// A set of instances sharing one feature dimensionality and label space.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<F> {
    instances: Vec<Instance<F>>,
    feature_dim: usize,
    num_classes: usize,
}

impl<F: Scalar> LabeledDataset<F> {
    pub fn new(
        instances: Vec<Instance<F>>,
        feature_dim: usize,
        num_classes: usize,
    ) -> Result<LabeledDataset<F>> {
        if num_classes == 0 {
            return Err(Error::InvalidInput("num_classes must be positive".into()));
        }
        if feature_dim == 0 {
            return Err(Error::InvalidInput("feature_dim must be positive".into()));
        }
        for instance in &instances {
            if instance.features.len() != feature_dim {
                return Err(Error::InvalidInput(format!(
                    "instance {} has {} features, expected {feature_dim}",
                    instance.id,
                    instance.features.len()
                )));
            }
            if instance.label >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "instance {} has label {} outside [0, {num_classes})",
                    instance.id, instance.label
                )));
            }
        }
        Ok(LabeledDataset {
            instances,
            feature_dim,
            num_classes,
        })
    }

    pub fn instances(&self) -> &[Instance<F>] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// A new dataset holding clones of the instances at `indices`, in the
    /// given order. Used for train/test splitting.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset<F> {
        LabeledDataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        }
    }
}

/// Recipe for a seeded synthetic long-tailed dataset: Zipf-distributed
/// labels over Gaussian class clusters, grouped into scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct ZipfSpec {
    pub num_classes: usize,
    /// Zipf exponent; larger values concentrate more mass on class 0.
    pub zipf_exponent: f64,
    pub instances_total: usize,
    /// Inclusive bounds on drawn scene sizes; the final scene may be
    /// truncated to fit `instances_total`.
    pub scene_size_range: (usize, usize),
    pub feature_dim: usize,
    /// Distance of each class-mean vector from the origin.
    pub class_separation: f64,
    /// Standard deviation of the isotropic feature noise.
    pub noise_scale: f64,
    pub seed: u64,
}

impl ZipfSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 3 {
            return Err(Error::Config(format!(
                "need at least 3 classes for head/body/tail, got {}",
                self.num_classes
            )));
        }
        if self.instances_total < self.num_classes {
            return Err(Error::Config(format!(
                "instances_total ({}) must be at least num_classes ({})",
                self.instances_total, self.num_classes
            )));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return Err(Error::Config(format!(
                "zipf exponent must be finite and > 0, got {}",
                self.zipf_exponent
            )));
        }
        let (lo, hi) = self.scene_size_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "infeasible scene sizing: range ({lo}, {hi}) needs 1 <= min <= max"
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(Error::Config(format!(
                "class separation must be finite and > 0, got {}",
                self.class_separation
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale > 0.0) {
            return Err(Error::Config(format!(
                "noise scale must be finite and > 0, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

/// The Zipf probability mass function used by the generator:
/// `p_k` proportional to `(k+1)^-s`, so class 0 is the most frequent.
pub fn zipf_pmf(num_classes: usize, exponent: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..num_classes)
        .map(|k| ((k + 1) as f64).powf(-exponent))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Generates a dataset as a pure function of the spec (seed included).
///
/// Draw order is fixed: class-mean directions first, then per instance
/// one label draw followed by `feature_dim` noise draws, then scene
/// sizes. All randomness flows from one ChaCha8 stream.
pub fn generate_dataset<F: Scalar>(spec: &ZipfSpec) -> Result<LabeledDataset<F>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut means = Vec::with_capacity(spec.num_classes);
    for class in 0..spec.num_classes {
        let raw: Vec<f64> = (0..spec.feature_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Numeric(format!(
                "degenerate zero direction drawn for class {class}"
            )));
        }
        let scale = spec.class_separation / norm;
        means.push(raw.into_iter().map(|x| x * scale).collect::<Vec<f64>>());
    }

    let pmf = zipf_pmf(spec.num_classes, spec.zipf_exponent);
    let mut cumulative = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for p in &pmf {
        acc += p;
        cumulative.push(acc);
    }

    let mut labels = Vec::with_capacity(spec.instances_total);
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(spec.instances_total);
    for _ in 0..spec.instances_total {
        let u: f64 = rng.random();
        let label = cumulative
            .partition_point(|&c| c <= u)
            .min(spec.num_classes - 1);
        labels.push(label);
        let mean = &means[label];
        features.push(
            (0..spec.feature_dim)
                .map(|j| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    mean[j] + spec.noise_scale * noise
                })
                .collect(),
        );
    }

    let (lo, hi) = spec.scene_size_range;
    let mut scene_of = Vec::with_capacity(spec.instances_total);
    let mut scene: u64 = 0;
    let mut remaining = spec.instances_total;
    while remaining > 0 {
        let size = rng.random_range(lo..=hi).min(remaining);
        for _ in 0..size {
            scene_of.push(scene);
        }
        remaining -= size;
        scene += 1;
    }

    let instances = labels
        .into_iter()
        .zip(features)
        .enumerate()
        .map(|(i, (label, feats))| Instance {
            id: i as u64,
            scene: scene_of[i],
            features: feats.into_iter().map(F::from_f64_lossy).collect(),
            label,
        })
        .collect();
    LabeledDataset::new(instances, spec.feature_dim, spec.num_classes)
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::FileFormat {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let file = File::open(path).map_err(|e| crate::error::io_at(path, e))?;
    Ok(BufReader::new(file).lines())
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| crate::error::io_at(path, e))?;
    Ok(BufWriter::new(file))
}

/// Splits a header line, checking the version tag and field count.
fn header_parts<'a>(
    line: &'a str,
    tag: &str,
    extra_fields: usize,
    path: &Path,
) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split_ascii_whitespace().collect();
    if parts.first() != Some(&tag) {
        return Err(format_error(
            path,
            1,
            format!("expected header tag {tag}, got {:?}", parts.first().unwrap_or(&"")),
        ));
    }
    if parts.len() != 1 + extra_fields {
        return Err(format_error(
            path,
            1,
            format!(
                "header needs {extra_fields} fields after the tag, got {}",
                parts.len() - 1
            ),
        ));
    }
    Ok(parts[1..].to_vec())
}

fn parse_field<T: FromStr>(
    token: &str,
    what: &str,
    path: &Path,
    line: usize,
) -> Result<T> {
    token
        .parse::<T>()
        .map_err(|_| format_error(path, line, format!("cannot parse {what} from {token:?}")))
}

/// Writes `<id> <scene> <label> <features...>` records under a
/// `peervote.dataset.v1` header.
pub fn save_dataset<F: Scalar>(dataset: &LabeledDataset<F>, path: &Path) -> Result<()> {
    let mut out = create_file(path)?;
    writeln!(
        out,
        "{DATASET_TAG} {} {}",
        dataset.num_classes(),
        dataset.feature_dim()
    )?;
    for instance in dataset.instances() {
        write!(out, "{} {} {}", instance.id, instance.scene, instance.label)?;
        for x in &instance.features {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a dataset file, reporting the 1-based line of any malformed
/// record. `load(save(d))` is exactly `d`.
pub fn load_dataset<F: Scalar>(path: &Path) -> Result<LabeledDataset<F>> {
    let mut lines = open_lines(path)?;
    let header = lines
        .next()
        .ok_or_else(|| format_error(path, 1, "missing header line"))??;
    let fields = header_parts(&header, DATASET_TAG, 2, path)?;
    let num_classes: usize = parse_field(fields[0], "num_classes", path, 1)?;
    let feature_dim: usize = parse_field(fields[1], "feature_dim", path, 1)?;

    let mut instances = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let parts: Vec<&str> = line.split_ascii_whitespace().collect();
        if parts.len() != 3 + feature_dim {
            return Err(format_error(
                path,
                line_no,
                format!("expected {} fields, got {}", 3 + feature_dim, parts.len()),
            ));
        }
        let id: u64 = parse_field(parts[0], "instance id", path, line_no)?;
        let scene: u64 = parse_field(parts[1], "scene id", path, line_no)?;
        let label: usize = parse_field(parts[2], "label", path, line_no)?;
        if label >= num_classes {
            return Err(format_error(
                path,
                line_no,
                format!("label {label} outside [0, {num_classes})"),
            ));
        }
        let features = parts[3..]
            .iter()
            .map(|t| parse_field::<F>(t, "feature value", path, line_no))
            .collect::<Result<Vec<F>>>()?;
        instances.push(Instance {
            id,
            scene,
            features,
            label,
        });
    }
    LabeledDataset::new(instances, feature_dim, num_classes)
}

/// One instance's peer votes alongside its ground truth, as stored in a
/// predictions file.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord<F> {
    pub instance: u64,
    pub scene: u64,
    pub truth: ClassId,
    pub votes: Vec<PeerPrediction<F>>,
}

/// A parsed predictions file: per-record peer votes plus the label-space
/// size the votes refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionFile<F> {
    pub num_peers: usize,
    pub num_classes: usize,
    pub records: Vec<PredictionRecord<F>>,
}

/// Writes `<id> <scene> <truth> <label conf>*` records under a
/// `peervote.predictions.v1` header.
pub fn save_predictions<F: Scalar>(
    records: &[PredictionRecord<F>],
    num_peers: usize,
    num_classes: usize,
    path: &Path,
) -> Result<()> {
    let mut out = create_file(path)?;
    writeln!(out, "{PREDICTIONS_TAG} {num_peers} {num_classes}")?;
    for record in records {
        if record.votes.len() != num_peers {
            return Err(Error::InvalidInput(format!(
                "record {} has {} votes, expected {num_peers}",
                record.instance,
                record.votes.len()
            )));
        }
        write!(out, "{} {} {}", record.instance, record.scene, record.truth)?;
        for vote in &record.votes {
            write!(out, " {} {}", vote.label, vote.confidence)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads prediction records (externally produced or saved by this
/// library), validating labels against the header's class count and
/// confidences against (0, 1]. A header-only file is a valid empty set.
pub fn load_external_predictions<F: Scalar>(path: &Path) -> Result<PredictionFile<F>> {
    let mut lines = open_lines(path)?;
    let header = lines
        .next()
        .ok_or_else(|| format_error(path, 1, "missing header line"))??;
    let fields = header_parts(&header, PREDICTIONS_TAG, 2, path)?;
    let num_peers: usize = parse_field(fields[0], "num_peers", path, 1)?;
    let num_classes: usize = parse_field(fields[1], "num_classes", path, 1)?;
    if num_peers == 0 {
        return Err(format_error(path, 1, "num_peers must be positive"));
    }

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let parts: Vec<&str> = line.split_ascii_whitespace().collect();
        if parts.len() != 3 + 2 * num_peers {
            return Err(format_error(
                path,
                line_no,
                format!(
                    "expected {} fields for {num_peers} peers, got {}",
                    3 + 2 * num_peers,
                    parts.len()
                ),
            ));
        }
        let instance: u64 = parse_field(parts[0], "instance id", path, line_no)?;
        let scene: u64 = parse_field(parts[1], "scene id", path, line_no)?;
        let truth: usize = parse_field(parts[2], "ground-truth label", path, line_no)?;
        if truth >= num_classes {
            return Err(format_error(
                path,
                line_no,
                format!("ground-truth label {truth} outside [0, {num_classes})"),
            ));
        }
        let mut votes = Vec::with_capacity(num_peers);
        for p in 0..num_peers {
            let label: usize = parse_field(parts[3 + 2 * p], "vote label", path, line_no)?;
            let confidence: F =
                parse_field(parts[4 + 2 * p], "vote confidence", path, line_no)?;
            if label >= num_classes {
                return Err(format_error(
                    path,
                    line_no,
                    format!("record {instance}: vote label {label} outside [0, {num_classes})"),
                ));
            }
            if !(confidence.is_finite() && confidence > F::zero() && confidence <= F::one()) {
                return Err(format_error(
                    path,
                    line_no,
                    format!(
                        "record {instance}: confidence {confidence} outside (0, 1]"
                    ),
                ));
            }
            votes.push(PeerPrediction { label, confidence });
        }
        records.push(PredictionRecord {
            instance,
            scene,
            truth,
            votes,
        });
    }
    Ok(PredictionFile {
        num_peers,
        num_classes,
        records,
    })
}

fn write_loss_tokens<F: Scalar>(out: &mut impl Write, loss: &LossSpec<F>) -> Result<()> {
    match loss {
        LossSpec::CrossEntropy => writeln!(out, "loss cross_entropy")?,
        LossSpec::Focal { gamma } => writeln!(out, "loss focal {gamma}")?,
        LossSpec::Ldam {
            margin_scale,
            logit_scale,
        } => writeln!(out, "loss ldam {margin_scale} {logit_scale}")?,
        LossSpec::ClassBalanced { beta } => writeln!(out, "loss class_balanced {beta}")?,
    }
    Ok(())
}

fn parse_loss_tokens<F: Scalar>(
    parts: &[&str],
    path: &Path,
    line_no: usize,
) -> Result<LossSpec<F>> {
    let need = |n: usize| -> Result<()> {
        if parts.len() != n {
            Err(format_error(
                path,
                line_no,
                format!("loss line needs {n} fields, got {}", parts.len()),
            ))
        } else {
            Ok(())
        }
    };
    match parts.get(1).copied() {
        Some("cross_entropy") => {
            need(2)?;
            Ok(LossSpec::CrossEntropy)
        }
        Some("focal") => {
            need(3)?;
            Ok(LossSpec::Focal {
                gamma: parse_field(parts[2], "focal gamma", path, line_no)?,
            })
        }
        Some("ldam") => {
            need(4)?;
            Ok(LossSpec::Ldam {
                margin_scale: parse_field(parts[2], "ldam margin scale", path, line_no)?,
                logit_scale: parse_field(parts[3], "ldam logit scale", path, line_no)?,
            })
        }
        Some("class_balanced") => {
            need(3)?;
            Ok(LossSpec::ClassBalanced {
                beta: parse_field(parts[2], "class-balanced beta", path, line_no)?,
            })
        }
        other => Err(format_error(
            path,
            line_no,
            format!("unknown loss kind {other:?}"),
        )),
    }
}

/// Writes a trained ensemble: header, the partition, then one block per
/// peer (groups, alpha, loss, class subset, weight rows, bias).
pub fn save_model<F: Scalar>(ensemble: &Ensemble<F>, path: &Path) -> Result<()> {
    let mut out = create_file(path)?;
    let partition = ensemble.partition();
    writeln!(
        out,
        "{MODEL_TAG} {} {} {}",
        ensemble.peers().len(),
        ensemble.feature_dim(),
        ensemble.num_classes()
    )?;
    let (t_head, t_body) = partition.thresholds();
    let letters: String = (0..partition.num_classes())
        .map(|c| partition.group_of(c).letter())
        .collect();
    writeln!(out, "partition {t_head} {t_body} {letters}")?;
    for (i, peer) in ensemble.peers().iter().enumerate() {
        writeln!(out, "peer {i} {} {}", peer.groups(), peer.alpha())?;
        write_loss_tokens(&mut out, peer.loss())?;
        write!(out, "subset")?;
        for c in peer.class_subset() {
            write!(out, " {c}")?;
        }
        writeln!(out)?;
        for row in 0..peer.class_subset().len() {
            write!(out, "w")?;
            for x in peer.weight_row(row) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        write!(out, "b")?;
        for x in peer.bias() {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a model file back into an ensemble. `load(save(e))` equals `e`.
pub fn load_model<F: Scalar>(path: &Path) -> Result<Ensemble<F>> {
    let mut lines = open_lines(path)?;
    let mut line_no = 0usize;
    let next_line = |lines: &mut dyn Iterator<Item = std::io::Result<String>>,
                     line_no: &mut usize,
                     what: &str|
     -> Result<String> {
        *line_no += 1;
        match lines.next() {
            Some(line) => Ok(line?),
            None => Err(format_error(path, *line_no, format!("missing {what}"))),
        }
    };

    let header = next_line(&mut lines, &mut line_no, "header line")?;
    let fields = header_parts(&header, MODEL_TAG, 3, path)?;
    let num_peers: usize = parse_field(fields[0], "num_peers", path, 1)?;
    let feature_dim: usize = parse_field(fields[1], "feature_dim", path, 1)?;
    let num_classes: usize = parse_field(fields[2], "num_classes", path, 1)?;

    let partition_line = next_line(&mut lines, &mut line_no, "partition line")?;
    let parts: Vec<&str> = partition_line.split_ascii_whitespace().collect();
    if parts.len() != 4 || parts[0] != "partition" {
        return Err(format_error(path, line_no, "expected partition line"));
    }
    let t_head: u64 = parse_field(parts[1], "head cutoff", path, line_no)?;
    let t_body: u64 = parse_field(parts[2], "body cutoff", path, line_no)?;
    let letters = parts[3];
    if letters.chars().count() != num_classes {
        return Err(format_error(
            path,
            line_no,
            format!(
                "partition letters cover {} classes, header says {num_classes}",
                letters.chars().count()
            ),
        ));
    }
    let group_of = letters
        .chars()
        .map(|c| {
            Group::from_letter(c).ok_or_else(|| {
                format_error(path, line_no, format!("invalid group letter '{c}'"))
            })
        })
        .collect::<Result<Vec<Group>>>()?;
    let partition = GroupPartition::from_parts(group_of, t_head, t_body);

    let mut peers = Vec::with_capacity(num_peers);
    for i in 0..num_peers {
        let peer_line = next_line(&mut lines, &mut line_no, "peer line")?;
        let parts: Vec<&str> = peer_line.split_ascii_whitespace().collect();
        if parts.len() != 4 || parts[0] != "peer" {
            return Err(format_error(path, line_no, format!("expected peer {i} line")));
        }
        let index: usize = parse_field(parts[1], "peer index", path, line_no)?;
        if index != i {
            return Err(format_error(
                path,
                line_no,
                format!("expected peer {i}, found peer {index}"),
            ));
        }
        let groups = parse_group_token(parts[2], path, line_no)?;
        let alpha: F = parse_field(parts[3], "alpha", path, line_no)?;

        let loss_line = next_line(&mut lines, &mut line_no, "loss line")?;
        let loss_parts: Vec<&str> = loss_line.split_ascii_whitespace().collect();
        if loss_parts.first() != Some(&"loss") {
            return Err(format_error(path, line_no, "expected loss line"));
        }
        let loss = parse_loss_tokens::<F>(&loss_parts, path, line_no)?;

        let subset_line = next_line(&mut lines, &mut line_no, "subset line")?;
        let subset_parts: Vec<&str> = subset_line.split_ascii_whitespace().collect();
        if subset_parts.first() != Some(&"subset") || subset_parts.len() < 2 {
            return Err(format_error(path, line_no, "expected nonempty subset line"));
        }
        let class_subset = subset_parts[1..]
            .iter()
            .map(|t| parse_field::<usize>(t, "subset class id", path, line_no))
            .collect::<Result<Vec<usize>>>()?;

        let mut weights = Vec::with_capacity(class_subset.len() * feature_dim);
        for _ in 0..class_subset.len() {
            let row_line = next_line(&mut lines, &mut line_no, "weight row")?;
            let row_parts: Vec<&str> = row_line.split_ascii_whitespace().collect();
            if row_parts.first() != Some(&"w") || row_parts.len() != 1 + feature_dim {
                return Err(format_error(
                    path,
                    line_no,
                    format!("expected weight row with {feature_dim} values"),
                ));
            }
            for t in &row_parts[1..] {
                weights.push(parse_field::<F>(t, "weight", path, line_no)?);
            }
        }
        let bias_line = next_line(&mut lines, &mut line_no, "bias line")?;
        let bias_parts: Vec<&str> = bias_line.split_ascii_whitespace().collect();
        if bias_parts.first() != Some(&"b") || bias_parts.len() != 1 + class_subset.len() {
            return Err(format_error(
                path,
                line_no,
                format!("expected bias line with {} values", class_subset.len()),
            ));
        }
        let bias = bias_parts[1..]
            .iter()
            .map(|t| parse_field::<F>(t, "bias", path, line_no))
            .collect::<Result<Vec<F>>>()?;

        peers.push(
            PeerModel::from_parts(class_subset, weights, bias, feature_dim, loss, alpha, groups)
                .map_err(|e| format_error(path, line_no, e.to_string()))?,
        );
    }
    Ensemble::from_parts(peers, partition, feature_dim, num_classes, true)
}

fn parse_group_token(token: &str, path: &Path, line_no: usize) -> Result<GroupSet> {
    let mut set = GroupSet::EMPTY;
    for c in token.chars() {
        match Group::from_letter(c) {
            Some(g) => set.insert(g),
            None => {
                return Err(format_error(
                    path,
                    line_no,
                    format!("invalid group letter '{c}'"),
                ))
            }
        }
    }
    if set.is_empty() {
        return Err(format_error(path, line_no, "empty group token"));
    }
    Ok(set)
}
