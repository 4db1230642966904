//! Training losses for long-tailed classification: cross-entropy, focal,
//! margin-adjusted (LDAM), and class-balanced weighting.
//!
//! Every loss returns the scalar value together with its analytic gradient
//! with respect to the logits, so the trainer never needs numeric
//! differentiation. Margins and class weights are derived from per-class
//! instance counts, computed over the class subset a peer actually sees.

use crate::error::{Error, Result};
use crate::taxonomy::FrequencyTable;
use crate::Scalar;

/// Default focusing exponent for the focal loss.
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
/// Default effective-number decay for class-balanced weights.
pub const DEFAULT_CB_BETA: f64 = 0.9999;
/// Default largest margin assigned to the rarest class by LDAM.
pub const DEFAULT_LDAM_MAX_MARGIN: f64 = 0.5;
/// Default logit scale for LDAM.
pub const DEFAULT_LDAM_SCALE: f64 = 30.0;

/// Which loss a peer trains with, plus its hyperparameters.
///
/// Parameters are carried inside the variant that needs them, so a value
/// of this type cannot pair a kind with foreign parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossSpec<F> {
    CrossEntropy,
    Focal { gamma: F },
    Ldam { margin_scale: F, logit_scale: F },
    ClassBalanced { beta: F },
}

impl<F: Scalar> LossSpec<F> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LossSpec::CrossEntropy => "cross_entropy",
            LossSpec::Focal { .. } => "focal",
            LossSpec::Ldam { .. } => "ldam",
            LossSpec::ClassBalanced { .. } => "class_balanced",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::CrossEntropy => Ok(()),
            LossSpec::Focal { gamma } => {
                if gamma.is_finite() && gamma >= F::zero() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "focal gamma must be finite and >= 0, got {gamma}"
                    )))
                }
            }
            LossSpec::Ldam {
                margin_scale,
                logit_scale,
            } => {
                if !(margin_scale.is_finite() && margin_scale > F::zero()) {
                    return Err(Error::Config(format!(
                        "ldam margin scale must be finite and > 0, got {margin_scale}"
                    )));
                }
                if !(logit_scale.is_finite() && logit_scale > F::zero()) {
                    return Err(Error::Config(format!(
                        "ldam logit scale must be finite and > 0, got {logit_scale}"
                    )));
                }
                Ok(())
            }
            LossSpec::ClassBalanced { beta } => {
                if beta.is_finite() && beta >= F::zero() && beta < F::one() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "class-balanced beta must be in [0, 1), got {beta}"
                    )))
                }
            }
        }
    }

    /// Materializes count-dependent parameters (margins, weights) against
    /// the class counts a peer trains on.
    pub fn resolve(&self, freq: &FrequencyTable) -> Result<ResolvedLoss<F>> {
        self.validate()?;
        Ok(match *self {
            LossSpec::CrossEntropy => ResolvedLoss::CrossEntropy,
            LossSpec::Focal { gamma } => ResolvedLoss::Focal { gamma },
            LossSpec::Ldam {
                margin_scale,
                logit_scale,
            } => ResolvedLoss::Ldam {
                margins: ldam_margins(freq, margin_scale)?,
                logit_scale,
            },
            LossSpec::ClassBalanced { beta } => ResolvedLoss::Weighted {
                weights: class_balanced_weights(freq, beta)?,
            },
        })
    }
}

/// A loss with all count-dependent parameters materialized; ready to
/// evaluate on logits.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolvedLoss<F> {
    CrossEntropy,
    Focal { gamma: F },
    Ldam { margins: Vec<F>, logit_scale: F },
    Weighted { weights: Vec<F> },
}

impl<F: Scalar> ResolvedLoss<F> {
    pub fn evaluate(&self, logits: &[F], label: usize) -> Result<LossValue<F>> {
        match self {
            ResolvedLoss::CrossEntropy => cross_entropy(logits, label, None),
            ResolvedLoss::Focal { gamma } => focal_loss(logits, label, *gamma),
            ResolvedLoss::Ldam {
                margins,
                logit_scale,
            } => ldam_loss(logits, label, margins, *logit_scale),
            ResolvedLoss::Weighted { weights } => cross_entropy(logits, label, Some(weights)),
        }
    }
}

/// Scalar loss plus its gradient with respect to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<F> {
    pub loss: F,
    pub grad: Vec<F>,
}

fn check_finite<F: Scalar>(logits: &[F]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("logits must be nonempty".into()));
    }
    if let Some(pos) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite logit {} at index {pos}",
            logits[pos]
        )));
    }
    Ok(())
}

fn check_label<F: Scalar>(logits: &[F], label: usize) -> Result<()> {
    if label >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "label {label} outside [0, {})",
            logits.len()
        )));
    }
    Ok(())
}

/// Max-shifted softmax. Outputs are positive and sum to 1 within 1e-12
/// in double precision.
pub fn softmax<F: Scalar>(logits: &[F]) -> Result<Vec<F>> {
    check_finite(logits)?;
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Probabilities and log-probabilities from one shifted pass. The log
/// form keeps `-ln p_y` accurate when `p_y` underflows.
fn softmax_with_log<F: Scalar>(logits: &[F]) -> Result<(Vec<F>, Vec<F>)> {
    check_finite(logits)?;
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let shifted: Vec<F> = logits.iter().map(|&z| z - max).collect();
    let sum: F = shifted.iter().map(|&s| s.exp()).sum();
    let lse = sum.ln();
    let probs: Vec<F> = shifted.iter().map(|&s| s.exp() / sum).collect();
    let logs: Vec<F> = shifted.iter().map(|&s| s - lse).collect();
    Ok((probs, logs))
}

/// `-w_y ln p_y` with `p = softmax(logits)`; unweighted when
/// `class_weights` is absent.
pub fn cross_entropy<F: Scalar>(
    logits: &[F],
    label: usize,
    class_weights: Option<&[F]>,
) -> Result<LossValue<F>> {
    check_label(logits, label)?;
    if let Some(w) = class_weights {
        if w.len() != logits.len() {
            return Err(Error::InvalidInput(format!(
                "got {} class weights for {} logits",
                w.len(),
                logits.len()
            )));
        }
        if let Some(pos) = w.iter().position(|&x| !(x.is_finite() && x > F::zero())) {
            return Err(Error::InvalidInput(format!(
                "class weight {} at index {pos} must be finite and positive",
                w[pos]
            )));
        }
    }
    let (probs, logs) = softmax_with_log(logits)?;
    let wy = class_weights.map_or(F::one(), |w| w[label]);
    let loss = -wy * logs[label];
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let target = if j == label { F::one() } else { F::zero() };
            wy * (p - target)
        })
        .collect();
    Ok(LossValue { loss, grad })
}

/// `-(1 - p_y)^gamma ln p_y`. At `gamma = 0` this is exactly
/// cross-entropy, including on the gradient.
pub fn focal_loss<F: Scalar>(logits: &[F], label: usize, gamma: F) -> Result<LossValue<F>> {
    if !(gamma.is_finite() && gamma >= F::zero()) {
        return Err(Error::Config(format!(
            "focal gamma must be finite and >= 0, got {gamma}"
        )));
    }
    if gamma == F::zero() {
        return cross_entropy(logits, label, None);
    }
    check_label(logits, label)?;
    let (probs, logs) = softmax_with_log(logits)?;
    let py = probs[label];
    let logp = logs[label];
    let miss = F::one() - py;
    if miss == F::zero() {
        // Fully confident and correct: loss and gradient vanish.
        return Ok(LossValue {
            loss: F::zero(),
            grad: vec![F::zero(); logits.len()],
        });
    }
    let miss_pow = miss.powf(gamma);
    let loss = -miss_pow * logp;
    // d/dz_y = gamma p_y (1-p_y)^gamma ln p_y - (1-p_y)^(gamma+1)
    // d/dz_j = p_j (1-p_y)^gamma (1 - gamma p_y ln(p_y) / (1-p_y))
    // The j != y form divides p_j by (1-p_y) only through a factor <= 1,
    // so it stays finite as p_y -> 1.
    let off_scale = miss_pow * (F::one() - gamma * py * logp / miss);
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if j == label {
                gamma * py * miss_pow * logp - miss * miss_pow
            } else {
                p * off_scale
            }
        })
        .collect();
    Ok(LossValue { loss, grad })
}

/// Per-class margins `C / n_j^(1/4)`; rare classes get larger margins.
pub fn ldam_margins<F: Scalar>(freq: &FrequencyTable, margin_scale: F) -> Result<Vec<F>> {
    if !(margin_scale.is_finite() && margin_scale > F::zero()) {
        return Err(Error::Config(format!(
            "ldam margin scale must be finite and > 0, got {margin_scale}"
        )));
    }
    freq.counts()
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            if n == 0 {
                return Err(Error::Config(format!(
                    "class {j} has zero count; margins need positive counts, \
                     so exclude the class from the subset or smooth the counts"
                )));
            }
            // sqrt(sqrt(n)) is exact on perfect fourth powers, unlike powf.
            let fourth_root = F::from_f64_lossy(n as f64).sqrt().sqrt();
            Ok(margin_scale / fourth_root)
        })
        .collect()
}

/// The margin scale that makes the rarest class's margin equal
/// `max_margin`: `C = max_margin * (min count)^(1/4)`.
pub fn margin_scale_for_max_margin<F: Scalar>(
    freq: &FrequencyTable,
    max_margin: F,
) -> Result<F> {
    if !(max_margin.is_finite() && max_margin > F::zero()) {
        return Err(Error::Config(format!(
            "ldam max margin must be finite and > 0, got {max_margin}"
        )));
    }
    let min = freq.counts().iter().copied().min().unwrap_or(0);
    if min == 0 {
        return Err(Error::Config(
            "margin scaling needs positive counts; exclude zero-count classes \
             from the subset or smooth the counts"
                .into(),
        ));
    }
    Ok(max_margin * F::from_f64_lossy(min as f64).sqrt().sqrt())
}

/// Cross-entropy on margin-adjusted logits: the true-class logit becomes
/// `s * (z_y - margin_y)`, every other logit `s * z_j`.
pub fn ldam_loss<F: Scalar>(
    logits: &[F],
    label: usize,
    margins: &[F],
    logit_scale: F,
) -> Result<LossValue<F>> {
    if margins.len() != logits.len() {
        return Err(Error::InvalidInput(format!(
            "got {} margins for {} logits",
            margins.len(),
            logits.len()
        )));
    }
    if !(logit_scale.is_finite() && logit_scale > F::zero()) {
        return Err(Error::Config(format!(
            "ldam logit scale must be finite and > 0, got {logit_scale}"
        )));
    }
    check_label(logits, label)?;
    let adjusted: Vec<F> = logits
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            if j == label {
                logit_scale * (z - margins[label])
            } else {
                logit_scale * z
            }
        })
        .collect();
    let inner = cross_entropy(&adjusted, label, None)?;
    Ok(LossValue {
        loss: inner.loss,
        grad: inner.grad.into_iter().map(|g| logit_scale * g).collect(),
    })
}

/// Effective-number weights `(1 - beta) / (1 - beta^n_j)`, normalized to
/// mean 1 so the weighted loss keeps the scale of the unweighted one.
pub fn class_balanced_weights<F: Scalar>(freq: &FrequencyTable, beta: F) -> Result<Vec<F>> {
    if !(beta.is_finite() && beta >= F::zero() && beta < F::one()) {
        return Err(Error::Config(format!(
            "class-balanced beta must be in [0, 1), got {beta}"
        )));
    }
    let raw: Vec<F> = freq
        .counts()
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            if n == 0 {
                return Err(Error::Config(format!(
                    "class {j} has zero count; effective numbers need positive \
                     counts, so exclude the class from the subset or smooth the counts"
                )));
            }
            let beta_n = beta.powf(F::from_f64_lossy(n as f64));
            Ok((F::one() - beta) / (F::one() - beta_n))
        })
        .collect::<Result<_>>()?;
    let mean = raw.iter().copied().sum::<F>() / F::from_f64_lossy(raw.len() as f64);
    Ok(raw.into_iter().map(|w| w / mean).collect())
}
