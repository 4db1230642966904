//! Peer classifiers: independent linear softmax heads, each trained on
//! the sub-distribution of classes its group assignment selects.
//!
//! Each peer's output space is restricted to its own class subset, and
//! it trains only on instances labeled within that subset (the
//! alternative, a full-class head with losses masked to the subset,
//! would let peers share logit geometry but blurs what each peer's
//! confidence means). Confidences are softmax probabilities within the
//! peer's own subset; no cross-peer calibration is applied after
//! training, so the voting layer compares them raw.
//!
//! Training is plain seeded mini-batch gradient descent with optional
//! momentum and weight decay. Peer `i` shuffles with its own RNG seeded
//! as `seed + i`, so peers could train concurrently without changing the
//! result; this implementation trains them sequentially.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledDataset, PredictionRecord};
use crate::error::{Error, Result};
use crate::losses::{softmax, LossSpec, ResolvedLoss};
use crate::taxonomy::{FrequencyTable, GroupPartition, GroupSet, PeerConfig};
use crate::{ClassId, Scalar};

/// One vote: a global class id with the softmax probability the emitting
/// peer assigned to it (within that peer's own class subset).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeerPrediction<F> {
    pub label: ClassId,
    pub confidence: F,
}

/// A linear softmax head over a subset of the global classes.
#[derive(Clone, Debug, PartialEq)]
pub struct PeerModel<F> {
    /// Strictly ascending global class ids; row `r` of the weights
    /// scores `class_subset[r]`.
    class_subset: Vec<ClassId>,
    /// Row-major `|class_subset| x feature_dim`.
    weights: Vec<F>,
    bias: Vec<F>,
    feature_dim: usize,
    loss: LossSpec<F>,
    alpha: F,
    groups: GroupSet,
}

impl<F: Scalar> PeerModel<F> {
    pub fn from_parts(
        class_subset: Vec<ClassId>,
        weights: Vec<F>,
        bias: Vec<F>,
        feature_dim: usize,
        loss: LossSpec<F>,
        alpha: F,
        groups: GroupSet,
    ) -> Result<PeerModel<F>> {
        if class_subset.is_empty() {
            return Err(Error::Config("peer class subset is empty".into()));
        }
        if !class_subset.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "peer class subset must be strictly ascending".into(),
            ));
        }
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if weights.len() != class_subset.len() * feature_dim {
            return Err(Error::Config(format!(
                "weight matrix has {} entries, expected {} x {feature_dim}",
                weights.len(),
                class_subset.len()
            )));
        }
        if bias.len() != class_subset.len() {
            return Err(Error::Config(format!(
                "bias has {} entries, expected {}",
                bias.len(),
                class_subset.len()
            )));
        }
        if !(alpha.is_finite() && alpha > F::zero()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        loss.validate()?;
        Ok(PeerModel {
            class_subset,
            weights,
            bias,
            feature_dim,
            loss,
            alpha,
            groups,
        })
    }

    /// An untrained peer: all weights and biases zero, so every class in
    /// the subset gets equal probability.
    pub fn zeroed(
        class_subset: Vec<ClassId>,
        feature_dim: usize,
        loss: LossSpec<F>,
        alpha: F,
        groups: GroupSet,
    ) -> Result<PeerModel<F>> {
        let k = class_subset.len();
        PeerModel::from_parts(
            class_subset,
            vec![F::zero(); k * feature_dim],
            vec![F::zero(); k],
            feature_dim,
            loss,
            alpha,
            groups,
        )
    }

    pub fn class_subset(&self) -> &[ClassId] {
        &self.class_subset
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn loss(&self) -> &LossSpec<F> {
        &self.loss
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn groups(&self) -> GroupSet {
        self.groups
    }

    pub fn weight_row(&self, row: usize) -> &[F] {
        &self.weights[row * self.feature_dim..(row + 1) * self.feature_dim]
    }

    pub fn bias(&self) -> &[F] {
        &self.bias
    }

    fn check_features(&self, x: &[F]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} entries, expected {}",
                x.len(),
                self.feature_dim
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature {} at index {pos}",
                x[pos]
            )));
        }
        Ok(())
    }

    /// Raw scores `W x + b`, one per subset class.
    pub fn logits(&self, x: &[F]) -> Result<Vec<F>> {
        self.check_features(x)?;
        Ok(logits_of(&self.weights, &self.bias, self.feature_dim, x))
    }

    /// Softmax probabilities over the peer's class subset; they sum to 1.
    pub fn probabilities(&self, x: &[F]) -> Result<Vec<F>> {
        softmax(&self.logits(x)?)
    }

    /// Argmax prediction; ties go to the lowest class id. The returned
    /// label is a global class id and the confidence is this peer's
    /// softmax probability for it.
    pub fn predict(&self, x: &[F]) -> Result<PeerPrediction<F>> {
        let probs = self.probabilities(x)?;
        let mut best = 0usize;
        for (r, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = r;
            }
        }
        Ok(PeerPrediction {
            label: self.class_subset[best],
            confidence: probs[best],
        })
    }
}

fn logits_of<F: Scalar>(weights: &[F], bias: &[F], dim: usize, x: &[F]) -> Vec<F> {
    bias.iter()
        .enumerate()
        .map(|(r, &b)| {
            let row = &weights[r * dim..(r + 1) * dim];
            let mut z = b;
            for (w, v) in row.iter().zip(x) {
                z = z + *w * *v;
            }
            z
        })
        .collect()
}

/// The ordered peers plus the partition they were derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<F> {
    peers: Vec<PeerModel<F>>,
    partition: GroupPartition,
    feature_dim: usize,
    num_classes: usize,
}

impl<F: Scalar> Ensemble<F> {
    /// Validates shapes and class coverage. With `allow_uncovered` false,
    /// every class must appear in some peer's subset, otherwise such a
    /// class could never be predicted.
    pub fn from_parts(
        peers: Vec<PeerModel<F>>,
        partition: GroupPartition,
        feature_dim: usize,
        num_classes: usize,
        allow_uncovered: bool,
    ) -> Result<Ensemble<F>> {
        if peers.is_empty() || peers.len() > crate::taxonomy::MAX_PEERS {
            return Err(Error::Config(format!(
                "peer count must be in [1, {}], got {}",
                crate::taxonomy::MAX_PEERS,
                peers.len()
            )));
        }
        if partition.num_classes() != num_classes {
            return Err(Error::Config(format!(
                "partition covers {} classes, ensemble has {num_classes}",
                partition.num_classes()
            )));
        }
        let mut covered = vec![false; num_classes];
        for (i, peer) in peers.iter().enumerate() {
            if peer.feature_dim() != feature_dim {
                return Err(Error::Config(format!(
                    "peer {i} has feature_dim {}, ensemble has {feature_dim}",
                    peer.feature_dim()
                )));
            }
            for &c in peer.class_subset() {
                if c >= num_classes {
                    return Err(Error::Config(format!(
                        "peer {i} references class {c} outside [0, {num_classes})"
                    )));
                }
                covered[c] = true;
            }
        }
        if !allow_uncovered {
            if let Some(c) = covered.iter().position(|&v| !v) {
                return Err(Error::Config(format!(
                    "no peer covers class {c}; it could never be predicted \
                     (set allow_uncovered to accept this)"
                )));
            }
        }
        Ok(Ensemble {
            peers,
            partition,
            feature_dim,
            num_classes,
        })
    }

    pub fn peers(&self) -> &[PeerModel<F>] {
        &self.peers
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// One prediction per peer, in peer order. Downstream voting depends
    /// on this order for its tie-breaking.
    pub fn predict(&self, x: &[F]) -> Result<Vec<PeerPrediction<F>>> {
        self.peers.iter().map(|p| p.predict(x)).collect()
    }
}

/// A peer's filtered slice of a dataset: which instances it trains on
/// and their labels re-indexed into the peer's class subset.
#[derive(Clone, Debug, PartialEq)]
pub struct PeerView {
    pub class_subset: Vec<ClassId>,
    /// Indices into the source dataset's instance list.
    pub indices: Vec<usize>,
    /// `local_labels[k]` is the subset-local label of `indices[k]`.
    pub local_labels: Vec<usize>,
}

impl PeerView {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Per-local-class instance counts within this view.
    pub fn label_counts(&self) -> FrequencyTable {
        let mut counts = vec![0u64; self.class_subset.len()];
        for &l in &self.local_labels {
            counts[l] += 1;
        }
        FrequencyTable::from_counts(counts)
    }
}

/// Selects the instances whose label falls in `group_set`, re-indexing
/// labels into the subset ordering. An empty result is a configuration
/// error: that peer would have nothing to learn from.
pub fn peer_targets<F: Scalar>(
    dataset: &LabeledDataset<F>,
    partition: &GroupPartition,
    group_set: GroupSet,
) -> Result<PeerView> {
    if partition.num_classes() != dataset.num_classes() {
        return Err(Error::InvalidInput(format!(
            "partition covers {} classes, dataset has {}",
            partition.num_classes(),
            dataset.num_classes()
        )));
    }
    let class_subset = partition.classes_in(group_set);
    if class_subset.is_empty() {
        return Err(Error::Config(format!(
            "training-config error: no classes fall in groups {group_set}"
        )));
    }
    let mut local_of = vec![usize::MAX; dataset.num_classes()];
    for (local, &c) in class_subset.iter().enumerate() {
        local_of[c] = local;
    }
    let mut indices = Vec::new();
    let mut local_labels = Vec::new();
    for (idx, instance) in dataset.instances().iter().enumerate() {
        if group_set.contains(partition.group_of(instance.label)) {
            indices.push(idx);
            local_labels.push(local_of[instance.label]);
        }
    }
    if indices.is_empty() {
        return Err(Error::Config(format!(
            "training-config error: groups {group_set} match no instances"
        )));
    }
    Ok(PeerView {
        class_subset,
        indices,
        local_labels,
    })
}

/// Gradient-descent hyperparameters shared by all peers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams<F> {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: F,
    /// L2 penalty on weights only; biases are never decayed.
    pub weight_decay: F,
    /// Classic momentum coefficient in [0, 1).
    pub momentum: F,
}

impl<F: Scalar> TrainParams<F> {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > F::zero()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= F::zero()) {
            return Err(Error::Config(format!(
                "weight decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if !(self.momentum.is_finite()
            && self.momentum >= F::zero()
            && self.momentum < F::one())
        {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Per-peer and summed training losses. All values are alpha-weighted
/// mean per-instance losses over each peer's own view, so the totals
/// realize the summed objective the peers jointly minimize.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport<F> {
    /// Loss of the zero-initialized model, before any update.
    pub initial_losses: Vec<F>,
    /// Loss of the final model over the full view.
    pub final_losses: Vec<F>,
    /// `epoch_peer_losses[e][i]`: peer i's mean loss during epoch e.
    pub epoch_peer_losses: Vec<Vec<F>>,
    /// Sum over peers per epoch.
    pub epoch_totals: Vec<F>,
}

impl<F: Scalar> TrainingReport<F> {
    pub fn initial_total(&self) -> F {
        self.initial_losses.iter().copied().sum()
    }

    pub fn final_total(&self) -> F {
        self.final_losses.iter().copied().sum()
    }
}

struct Params<F> {
    weights: Vec<F>,
    bias: Vec<F>,
    dim: usize,
}

fn mean_view_loss<F: Scalar>(
    params: &Params<F>,
    resolved: &ResolvedLoss<F>,
    dataset: &LabeledDataset<F>,
    view: &PeerView,
) -> Result<F> {
    let mut total = F::zero();
    for (pos, &idx) in view.indices.iter().enumerate() {
        let x = &dataset.instances()[idx].features;
        let z = logits_of(&params.weights, &params.bias, params.dim, x);
        total = total + resolved.evaluate(&z, view.local_labels[pos])?.loss;
    }
    Ok(total / F::from_f64_lossy(view.len() as f64))
}

/// The alpha-weighted mean loss of a trained peer over its view of a
/// dataset, with margins/weights resolved against that view's counts.
pub fn peer_view_loss<F: Scalar>(
    peer: &PeerModel<F>,
    dataset: &LabeledDataset<F>,
    partition: &GroupPartition,
) -> Result<F> {
    let view = peer_targets(dataset, partition, peer.groups())?;
    if view.class_subset != peer.class_subset {
        return Err(Error::Config(
            "partition assigns this peer a different class subset than it was trained on".into(),
        ));
    }
    let resolved = peer.loss.resolve(&view.label_counts())?;
    let params = Params {
        weights: peer.weights.clone(),
        bias: peer.bias.clone(),
        dim: peer.feature_dim,
    };
    Ok(peer.alpha * mean_view_loss(&params, &resolved, dataset, &view)?)
}

/// Trains every peer on its filtered view by seeded mini-batch gradient
/// descent. Deterministic: the same (dataset, config, partition, params,
/// seed) produces bit-identical parameters. Peer `i` uses an RNG seeded
/// with `seed + i`.
pub fn train_ensemble<F: Scalar>(
    dataset: &LabeledDataset<F>,
    config: &PeerConfig<F>,
    partition: &GroupPartition,
    params: &TrainParams<F>,
    seed: u64,
) -> Result<(Ensemble<F>, TrainingReport<F>)> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }

    let mut models = Vec::with_capacity(config.len());
    let mut initial_losses = Vec::with_capacity(config.len());
    let mut final_losses = Vec::with_capacity(config.len());
    let mut per_peer_epochs: Vec<Vec<F>> = Vec::with_capacity(config.len());

    for (i, setup) in config.peers().iter().enumerate() {
        let view = peer_targets(dataset, partition, setup.groups)?;
        let resolved = setup.loss.resolve(&view.label_counts())?;
        let k = view.class_subset.len();
        let dim = dataset.feature_dim();

        let mut p = Params {
            weights: vec![F::zero(); k * dim],
            bias: vec![F::zero(); k],
            dim,
        };
        let mut vel_w = vec![F::zero(); k * dim];
        let mut vel_b = vec![F::zero(); k];

        initial_losses.push(setup.alpha * mean_view_loss(&p, &resolved, dataset, &view)?);

        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let mut order: Vec<usize> = (0..view.len()).collect();
        let mut epoch_losses = Vec::with_capacity(params.epochs);
        let view_size = F::from_f64_lossy(view.len() as f64);

        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss_sum = F::zero();
            for batch in order.chunks(params.batch_size) {
                let mut grad_w = vec![F::zero(); k * dim];
                let mut grad_b = vec![F::zero(); k];
                for &pos in batch {
                    let idx = view.indices[pos];
                    let x = &dataset.instances()[idx].features;
                    let z = logits_of(&p.weights, &p.bias, dim, x);
                    let value = resolved
                        .evaluate(&z, view.local_labels[pos])
                        .map_err(|e| Error::Training {
                            peer: i,
                            epoch,
                            message: e.to_string(),
                        })?;
                    if !value.loss.is_finite() {
                        return Err(Error::Training {
                            peer: i,
                            epoch,
                            message: format!("non-finite loss {}", value.loss),
                        });
                    }
                    epoch_loss_sum = epoch_loss_sum + value.loss;
                    for r in 0..k {
                        let g = value.grad[r];
                        grad_b[r] = grad_b[r] + g;
                        let row = &mut grad_w[r * dim..(r + 1) * dim];
                        for (slot, v) in row.iter_mut().zip(x) {
                            *slot = *slot + g * *v;
                        }
                    }
                }
                // Mean over the batch, then the peer's alpha weight; the
                // L2 term is independent of alpha and skips biases.
                let inv = F::one() / F::from_f64_lossy(batch.len() as f64);
                for (slot, &w) in grad_w.iter_mut().zip(&p.weights) {
                    *slot = setup.alpha * (*slot * inv) + params.weight_decay * w;
                }
                for slot in grad_b.iter_mut() {
                    *slot = setup.alpha * (*slot * inv);
                }
                for ((w, v), g) in p.weights.iter_mut().zip(&mut vel_w).zip(&grad_w) {
                    *v = params.momentum * *v - params.learning_rate * *g;
                    *w = *w + *v;
                }
                for ((b, v), g) in p.bias.iter_mut().zip(&mut vel_b).zip(&grad_b) {
                    *v = params.momentum * *v - params.learning_rate * *g;
                    *b = *b + *v;
                }
            }
            epoch_losses.push(setup.alpha * (epoch_loss_sum / view_size));
        }

        let final_loss = setup.alpha
            * mean_view_loss(&p, &resolved, dataset, &view).map_err(|e| Error::Training {
                peer: i,
                epoch: params.epochs - 1,
                message: e.to_string(),
            })?;
        if !final_loss.is_finite() {
            return Err(Error::Training {
                peer: i,
                epoch: params.epochs - 1,
                message: format!("non-finite final loss {final_loss}"),
            });
        }
        final_losses.push(final_loss);
        per_peer_epochs.push(epoch_losses);

        models.push(PeerModel {
            class_subset: view.class_subset,
            weights: p.weights,
            bias: p.bias,
            feature_dim: dim,
            loss: setup.loss,
            alpha: setup.alpha,
            groups: setup.groups,
        });
    }

    let epoch_peer_losses: Vec<Vec<F>> = (0..params.epochs)
        .map(|e| per_peer_epochs.iter().map(|p| p[e]).collect())
        .collect();
    let epoch_totals = epoch_peer_losses
        .iter()
        .map(|row| row.iter().copied().sum())
        .collect();

    let ensemble = Ensemble::from_parts(
        models,
        partition.clone(),
        dataset.feature_dim(),
        dataset.num_classes(),
        config.allow_uncovered,
    )?;
    Ok((
        ensemble,
        TrainingReport {
            initial_losses,
            final_losses,
            epoch_peer_losses,
            epoch_totals,
        },
    ))
}

/// Runs every instance through the ensemble, pairing each instance's
/// ground truth with the peers' votes. Input order is preserved.
pub fn predict_records<F: Scalar>(
    ensemble: &Ensemble<F>,
    dataset: &LabeledDataset<F>,
) -> Result<Vec<PredictionRecord<F>>> {
    dataset
        .instances()
        .iter()
        .map(|instance| {
            Ok(PredictionRecord {
                instance: instance.id,
                scene: instance.scene,
                truth: instance.label,
                votes: ensemble.predict(&instance.features)?,
            })
        })
        .collect()
}
