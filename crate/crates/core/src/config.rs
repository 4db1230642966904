//! Experiment configuration: a TOML file plus command-line overrides,
//! lowered into the concrete types the pipeline consumes.
//!
//! Every knob has a default, so an empty config (or none at all) runs
//! the stock experiment: a generated 20-class Zipf dataset, tertile
//! partitioning, the `HBT_B_T` peer layout with cross-entropy losses,
//! and evaluation at K = 20/50/100.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::ZipfSpec;
use crate::error::{Error, Result};
use crate::losses::{
    margin_scale_for_max_margin, LossSpec, DEFAULT_CB_BETA, DEFAULT_FOCAL_GAMMA,
    DEFAULT_LDAM_MAX_MARGIN, DEFAULT_LDAM_SCALE,
};
use crate::peers::TrainParams;
use crate::taxonomy::{parse_peer_spec, FrequencyTable, GroupSet};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PEER_SPEC: &str = "HBT_B_T";

/// Where the dataset comes from: an existing file or a generator spec.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Path(PathBuf),
    Generate(ZipfSpec),
}

/// How classes are split into head/body/tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionChoice {
    /// Rank-tertile cutoffs derived from the observed counts.
    Tertile,
    /// Explicit count cutoffs.
    Thresholds { t_head: u64, t_body: u64 },
}

/// LDAM's margin scale: given directly, or derived so the rarest class
/// in the peer's subset gets the stated maximum margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarginChoice {
    Scale(f64),
    MaxMargin(f64),
}

/// A peer's loss as configured; count-dependent pieces (the LDAM margin
/// scale under `MaxMargin`) are resolved once the peer's view is known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossChoice {
    CrossEntropy,
    Focal { gamma: f64 },
    Ldam { margin: MarginChoice, logit_scale: f64 },
    ClassBalanced { beta: f64 },
}

impl LossChoice {
    /// Fixes the loss against the class counts of the peer's training
    /// view.
    pub fn to_spec(&self, counts: &FrequencyTable) -> Result<LossSpec<f64>> {
        let spec = match *self {
            LossChoice::CrossEntropy => LossSpec::CrossEntropy,
            LossChoice::Focal { gamma } => LossSpec::Focal { gamma },
            LossChoice::Ldam {
                margin,
                logit_scale,
            } => {
                let margin_scale = match margin {
                    MarginChoice::Scale(c) => c,
                    MarginChoice::MaxMargin(m) => margin_scale_for_max_margin(counts, m)?,
                };
                LossSpec::Ldam {
                    margin_scale,
                    logit_scale,
                }
            }
            LossChoice::ClassBalanced { beta } => LossSpec::ClassBalanced { beta },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One peer's configured loss and objective weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeerChoice {
    pub loss: LossChoice,
    pub alpha: f64,
}

/// The peer layout: group sets parsed from the spec string plus each
/// peer's loss choice, index-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct PeersSection {
    pub sets: Vec<GroupSet>,
    pub choices: Vec<PeerChoice>,
    pub allow_uncovered: bool,
}

/// Evaluation knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    /// Multiplier on single-vote candidate scores; 1.0 disables it.
    pub minority_penalty: f64,
}

/// A fully resolved experiment description. Everything the pipeline
/// does is a pure function of this value.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSource,
    pub partition: PartitionChoice,
    pub peers: PeersSection,
    pub train: TrainParams<f64>,
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out_dir: Option<String>,
    dataset: Option<RawDataset>,
    partition: Option<RawPartition>,
    peers: Option<RawPeers>,
    train: Option<RawTrain>,
    eval: Option<RawEval>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    path: Option<String>,
    generate: Option<RawGenerate>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerate {
    num_classes: Option<usize>,
    zipf_exponent: Option<f64>,
    instances_total: Option<usize>,
    scene_size_min: Option<usize>,
    scene_size_max: Option<usize>,
    feature_dim: Option<usize>,
    class_separation: Option<f64>,
    noise_scale: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    mode: Option<String>,
    t_head: Option<u64>,
    t_body: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPeers {
    spec: Option<String>,
    allow_uncovered: Option<bool>,
    peer: Option<Vec<RawPeer>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPeer {
    loss: Option<String>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    beta: Option<f64>,
    margin_scale: Option<f64>,
    max_margin: Option<f64>,
    logit_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    momentum: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    ks: Option<Vec<usize>>,
    minority_penalty: Option<f64>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub peer_spec: Option<String>,
}

impl ExperimentConfig {
    /// The stock experiment under the given master seed.
    pub fn default_with_seed(seed: u64) -> ExperimentConfig {
        lower(RawConfig::default(), &Overrides { seed: Some(seed), ..Overrides::default() })
            .expect("empty config lowers cleanly")
    }

    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        lower(raw, overrides)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_at(path, e))?;
        ExperimentConfig::from_toml_str(&text, overrides)
    }

    /// Load `path` when given, else the stock config; overrides apply
    /// either way.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
        match path {
            Some(p) => ExperimentConfig::load(p, overrides),
            None => lower(RawConfig::default(), overrides),
        }
    }
}

fn lower(raw: RawConfig, overrides: &Overrides) -> Result<ExperimentConfig> {
    let seed = overrides.seed.or(raw.seed).unwrap_or(DEFAULT_SEED);
    let out_dir = overrides
        .out_dir
        .clone()
        .or_else(|| raw.out_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let dataset = lower_dataset(raw.dataset.unwrap_or_default(), seed)?;
    let partition = lower_partition(raw.partition.unwrap_or_default())?;
    let peers = lower_peers(raw.peers.unwrap_or_default(), overrides.peer_spec.as_deref())?;
    let train = lower_train(raw.train.unwrap_or_default())?;
    let eval = lower_eval(raw.eval.unwrap_or_default())?;

    Ok(ExperimentConfig {
        seed,
        out_dir,
        dataset,
        partition,
        peers,
        train,
        eval,
    })
}

fn lower_dataset(raw: RawDataset, master_seed: u64) -> Result<DatasetSource> {
    match (raw.path, raw.generate) {
        (Some(_), Some(_)) => Err(Error::Config(
            "dataset.path and dataset.generate are mutually exclusive".into(),
        )),
        (Some(path), None) => Ok(DatasetSource::Path(PathBuf::from(path))),
        (None, generate) => {
            let g = generate.unwrap_or_default();
            Ok(DatasetSource::Generate(ZipfSpec {
                num_classes: g.num_classes.unwrap_or(20),
                zipf_exponent: g.zipf_exponent.unwrap_or(1.6),
                instances_total: g.instances_total.unwrap_or(10_000),
                scene_size_range: (g.scene_size_min.unwrap_or(8), g.scene_size_max.unwrap_or(32)),
                feature_dim: g.feature_dim.unwrap_or(16),
                class_separation: g.class_separation.unwrap_or(3.0),
                noise_scale: g.noise_scale.unwrap_or(1.0),
                seed: g.seed.unwrap_or(master_seed),
            }))
        }
    }
}

fn lower_partition(raw: RawPartition) -> Result<PartitionChoice> {
    match raw.mode.as_deref().unwrap_or("tertile") {
        "tertile" => {
            if raw.t_head.is_some() || raw.t_body.is_some() {
                return Err(Error::Config(
                    "t_head/t_body only apply to partition.mode = \"thresholds\"".into(),
                ));
            }
            Ok(PartitionChoice::Tertile)
        }
        "thresholds" => {
            let (t_head, t_body) = match (raw.t_head, raw.t_body) {
                (Some(h), Some(b)) => (h, b),
                _ => {
                    return Err(Error::Config(
                        "partition.mode = \"thresholds\" requires t_head and t_body".into(),
                    ))
                }
            };
            if t_head <= t_body {
                return Err(Error::Config(format!(
                    "head cutoff ({t_head}) must exceed body cutoff ({t_body})"
                )));
            }
            Ok(PartitionChoice::Thresholds { t_head, t_body })
        }
        other => Err(Error::Config(format!(
            "unknown partition mode {other:?} (expected tertile or thresholds)"
        ))),
    }
}

fn lower_peers(raw: RawPeers, spec_override: Option<&str>) -> Result<PeersSection> {
    let spec = spec_override
        .or(raw.spec.as_deref())
        .unwrap_or(DEFAULT_PEER_SPEC);
    let sets = parse_peer_spec(spec)?;

    let mut raw_peers = raw.peer.unwrap_or_default();
    if !raw_peers.is_empty() && raw_peers.len() != sets.len() {
        // Per-peer entries are index-aligned with the file's own spec;
        // under a command-line spec of a different shape they no longer
        // mean anything, so fall back to defaults.
        if spec_override.is_some() {
            raw_peers.clear();
        } else {
            return Err(Error::Config(format!(
                "spec {spec:?} declares {} peers but {} [[peers.peer]] entries were given \
                 (give none, or exactly one per peer)",
                sets.len(),
                raw_peers.len()
            )));
        }
    }

    let mut choices = Vec::with_capacity(sets.len());
    for i in 0..sets.len() {
        let raw_peer = raw_peers.get(i);
        choices.push(lower_peer(raw_peer, i)?);
    }
    Ok(PeersSection {
        sets,
        choices,
        allow_uncovered: raw.allow_uncovered.unwrap_or(false),
    })
}

fn lower_peer(raw: Option<&RawPeer>, index: usize) -> Result<PeerChoice> {
    let Some(raw) = raw else {
        return Ok(PeerChoice {
            loss: LossChoice::CrossEntropy,
            alpha: 1.0,
        });
    };
    let reject = |field: &str, kind: &str| -> Error {
        Error::Config(format!(
            "peer {index}: {field} does not apply to the {kind} loss"
        ))
    };
    let kind = raw.loss.as_deref().unwrap_or("cross_entropy");
    let loss = match kind {
        "cross_entropy" => {
            for (name, set) in [
                ("gamma", raw.gamma.is_some()),
                ("beta", raw.beta.is_some()),
                ("margin_scale", raw.margin_scale.is_some()),
                ("max_margin", raw.max_margin.is_some()),
                ("logit_scale", raw.logit_scale.is_some()),
            ] {
                if set {
                    return Err(reject(name, kind));
                }
            }
            LossChoice::CrossEntropy
        }
        "focal" => {
            for (name, set) in [
                ("beta", raw.beta.is_some()),
                ("margin_scale", raw.margin_scale.is_some()),
                ("max_margin", raw.max_margin.is_some()),
                ("logit_scale", raw.logit_scale.is_some()),
            ] {
                if set {
                    return Err(reject(name, kind));
                }
            }
            LossChoice::Focal {
                gamma: raw.gamma.unwrap_or(DEFAULT_FOCAL_GAMMA),
            }
        }
        "ldam" => {
            for (name, set) in [("gamma", raw.gamma.is_some()), ("beta", raw.beta.is_some())] {
                if set {
                    return Err(reject(name, kind));
                }
            }
            let margin = match (raw.margin_scale, raw.max_margin) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config(format!(
                        "peer {index}: margin_scale and max_margin are mutually exclusive"
                    )))
                }
                (Some(c), None) => MarginChoice::Scale(c),
                (None, Some(m)) => MarginChoice::MaxMargin(m),
                (None, None) => MarginChoice::MaxMargin(DEFAULT_LDAM_MAX_MARGIN),
            };
            LossChoice::Ldam {
                margin,
                logit_scale: raw.logit_scale.unwrap_or(DEFAULT_LDAM_SCALE),
            }
        }
        "class_balanced" => {
            for (name, set) in [
                ("gamma", raw.gamma.is_some()),
                ("margin_scale", raw.margin_scale.is_some()),
                ("max_margin", raw.max_margin.is_some()),
                ("logit_scale", raw.logit_scale.is_some()),
            ] {
                if set {
                    return Err(reject(name, kind));
                }
            }
            LossChoice::ClassBalanced {
                beta: raw.beta.unwrap_or(DEFAULT_CB_BETA),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "peer {index}: unknown loss {other:?} (expected cross_entropy, focal, \
                 ldam, or class_balanced)"
            )))
        }
    };
    let alpha = raw.alpha.unwrap_or(1.0);
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!(
            "peer {index}: alpha must be finite and > 0, got {alpha}"
        )));
    }
    Ok(PeerChoice { loss, alpha })
}

fn lower_train(raw: RawTrain) -> Result<TrainParams<f64>> {
    // The stock weight decay is deliberately strong: it keeps softmax
    // confidences calibrated, so a specialist peer stays unsure on
    // instances outside its groups instead of outshouting the peer
    // that actually covers them.
    let params = TrainParams {
        epochs: raw.epochs.unwrap_or(30),
        batch_size: raw.batch_size.unwrap_or(64),
        learning_rate: raw.learning_rate.unwrap_or(0.3),
        weight_decay: raw.weight_decay.unwrap_or(1e-2),
        momentum: raw.momentum.unwrap_or(0.9),
    };
    params.validate()?;
    Ok(params)
}

fn lower_eval(raw: RawEval) -> Result<EvalSection> {
    let ks = raw.ks.unwrap_or_else(|| vec![20, 50, 100]);
    if ks.is_empty() {
        return Err(Error::Config("eval.ks must be nonempty".into()));
    }
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::Config("every eval K must be at least 1".into()));
    }
    let minority_penalty = raw.minority_penalty.unwrap_or(1.0);
    if !(minority_penalty.is_finite() && minority_penalty > 0.0 && minority_penalty <= 1.0) {
        return Err(Error::Config(format!(
            "minority_penalty must be in (0, 1], got {minority_penalty}"
        )));
    }
    Ok(EvalSection {
        ks,
        minority_penalty,
    })
}
