//! Consensus voting over peer predictions.
//!
//! Each instance arrives as n (label, confidence) votes in peer order.
//! The vote walks the labels in first-occurrence order: a label every
//! peer chose wins immediately with the overall best confidence; a label
//! several peers chose competes with the best confidence among its own
//! voters; a label one peer chose competes with that peer's confidence.
//! The running maximum uses strict `>`, so among equal candidate scores
//! the earlier-occurring label wins. Scores are constrained to (0, 1] at
//! the boundary, which keeps the 0.0/label-0 initial state unreachable.
//!
//! Agreement pools candidates but never decides: a single confident
//! peer outvotes a less confident majority. A stricter rule where any
//! majority dominates every singleton is a defensible alternative with
//! different results; this implementation deliberately lets confidence
//! decide, and `minority_penalty` (a scale on singleton scores) is the
//! knob for interpolating toward the stricter rule.
//!
//! A structurally different reference implementation (`vote_oracle`)
//! exists purely so tests can cross-check the voting logic.

use crate::error::{Error, Result};
use crate::peers::PeerPrediction;
use crate::{ClassId, Scalar};

/// Validated per-instance voting input: parallel label and score lists.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteInput<F> {
    labels: Vec<ClassId>,
    scores: Vec<F>,
}

impl<F: Scalar> VoteInput<F> {
    pub fn new(labels: Vec<ClassId>, scores: Vec<F>) -> Result<VoteInput<F>> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("vote input must be nonempty".into()));
        }
        if labels.len() != scores.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels vs {} scores",
                labels.len(),
                scores.len()
            )));
        }
        if let Some(pos) = scores
            .iter()
            .position(|&s| !(s.is_finite() && s > F::zero() && s <= F::one()))
        {
            return Err(Error::InvalidInput(format!(
                "score {} at index {pos} outside (0, 1]",
                scores[pos]
            )));
        }
        Ok(VoteInput { labels, scores })
    }

    pub fn from_predictions(votes: &[PeerPrediction<F>]) -> Result<VoteInput<F>> {
        VoteInput::new(
            votes.iter().map(|v| v.label).collect(),
            votes.iter().map(|v| v.confidence).collect(),
        )
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn scores(&self) -> &[F] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-label vote counts in first-occurrence order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteTally {
    pairs: Vec<(ClassId, usize)>,
}

impl VoteTally {
    /// `(label, count)` pairs ordered by the label's first appearance.
    pub fn pairs(&self) -> &[(ClassId, usize)] {
        &self.pairs
    }

    pub fn count(&self, label: ClassId) -> usize {
        self.pairs
            .iter()
            .find(|(l, _)| *l == label)
            .map_or(0, |(_, c)| *c)
    }
}

/// Counts votes per label, preserving first-occurrence order.
pub fn tally<F: Scalar>(input: &VoteInput<F>) -> VoteTally {
    let mut pairs: Vec<(ClassId, usize)> = Vec::new();
    for &label in &input.labels {
        match pairs.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += 1,
            None => pairs.push((label, 1)),
        }
    }
    VoteTally { pairs }
}

/// The elected label and its winning confidence score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoteResult<F> {
    pub label: ClassId,
    pub score: F,
}

/// Consensus voting over one instance's peer votes.
pub fn consensus_vote<F: Scalar>(input: &VoteInput<F>) -> VoteResult<F> {
    consensus_vote_with_penalty(input, F::one())
}

/// Consensus voting with an optional multiplier applied to the candidate
/// score of labels holding a single vote. At 1.0 (the default) this is
/// exactly `consensus_vote`; below 1.0 it damps minority opinions.
pub fn consensus_vote_with_penalty<F: Scalar>(
    input: &VoteInput<F>,
    minority_penalty: F,
) -> VoteResult<F> {
    let n = input.len();
    let mut max_score = F::zero();
    let mut max_label: ClassId = 0;

    for &(label, count) in tally(input).pairs() {
        if count == n {
            // Unanimous: return the best confidence any peer reported.
            let best = input
                .scores
                .iter()
                .copied()
                .fold(F::neg_infinity(), F::max);
            return VoteResult { label, score: best };
        }
        let candidate = if count > 1 {
            // Majority label: best confidence among its own voters.
            let mut best = F::neg_infinity();
            for (&l, &s) in input.labels.iter().zip(&input.scores) {
                if l == label && s > best {
                    best = s;
                }
            }
            best
        } else {
            // Singleton: the (only) voter's confidence, optionally damped.
            let pos = input.labels.iter().position(|&l| l == label).unwrap();
            input.scores[pos] * minority_penalty
        };
        if candidate > max_score {
            max_score = candidate;
            max_label = label;
        }
    }
    VoteResult {
        label: max_label,
        score: max_score,
    }
}

/// Reference implementation of the same contract by different means:
/// materialize every label's candidate entry, then sort by (score
/// descending, first occurrence ascending) and take the head. Exists for
/// cross-checking `consensus_vote`; not used by the pipeline.
pub fn vote_oracle<F: Scalar>(input: &VoteInput<F>) -> VoteResult<F> {
    let n = input.len();
    let t = tally(input);

    let mut candidates: Vec<(ClassId, F, usize)> = t
        .pairs()
        .iter()
        .map(|&(label, count)| {
            let first = input.labels.iter().position(|&l| l == label).unwrap();
            let voters = || {
                input
                    .labels
                    .iter()
                    .zip(&input.scores)
                    .filter(move |(&l, _)| l == label)
                    .map(|(_, &s)| s)
            };
            let score = if count == n {
                input
                    .scores
                    .iter()
                    .copied()
                    .fold(F::neg_infinity(), F::max)
            } else if count > 1 {
                voters().fold(F::neg_infinity(), F::max)
            } else {
                voters().next().unwrap()
            };
            (label, score, first)
        })
        .collect();

    candidates.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then(a.2.cmp(&b.2))
    });
    let (label, score, _) = candidates[0];
    VoteResult { label, score }
}

/// Element-wise consensus voting; output order matches input order.
pub fn batch_vote<F: Scalar>(predictions: &[Vec<PeerPrediction<F>>]) -> Result<Vec<VoteResult<F>>> {
    batch_vote_with_penalty(predictions, F::one())
}

/// Element-wise `consensus_vote_with_penalty`.
pub fn batch_vote_with_penalty<F: Scalar>(
    predictions: &[Vec<PeerPrediction<F>>],
    minority_penalty: F,
) -> Result<Vec<VoteResult<F>>> {
    predictions
        .iter()
        .map(|votes| {
            Ok(consensus_vote_with_penalty(
                &VoteInput::from_predictions(votes)?,
                minority_penalty,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(labels: &[usize], scores: &[f64]) -> VoteInput<f64> {
        VoteInput::new(labels.to_vec(), scores.to_vec()).unwrap()
    }

    #[test]
    fn tally_orders_by_first_occurrence() {
        assert_eq!(
            tally(&input(&[2, 2, 5], &[0.3, 0.8, 0.6])).pairs(),
            &[(2, 2), (5, 1)]
        );
        assert_eq!(
            tally(&input(&[5, 2, 2], &[0.3, 0.8, 0.6])).pairs(),
            &[(5, 1), (2, 2)]
        );
        assert_eq!(tally(&input(&[7], &[0.5])).pairs(), &[(7, 1)]);
    }

    #[test]
    fn tally_counts_sum_to_n() {
        let t = tally(&input(&[1, 2, 1, 3, 1], &[0.1, 0.2, 0.3, 0.4, 0.5]));
        let total: usize = t.pairs().iter().map(|(_, c)| c).sum();
        assert_eq!(total, 5);
        assert_eq!(t.count(1), 3);
        assert_eq!(t.count(9), 0);
    }

    #[test]
    fn unanimous_returns_best_confidence() {
        let r = consensus_vote(&input(&[3, 3, 3], &[0.2, 0.5, 0.4]));
        assert_eq!(r, VoteResult { label: 3, score: 0.5 });
    }

    #[test]
    fn majority_beats_weaker_singleton() {
        let r = consensus_vote(&input(&[2, 2, 5], &[0.3, 0.8, 0.6]));
        assert_eq!(r, VoteResult { label: 2, score: 0.8 });
    }

    #[test]
    fn confident_singleton_beats_majority() {
        let r = consensus_vote(&input(&[2, 2, 5], &[0.3, 0.4, 0.9]));
        assert_eq!(r, VoteResult { label: 5, score: 0.9 });
    }

    #[test]
    fn tie_goes_to_first_processed() {
        let r = consensus_vote(&input(&[1, 2], &[0.6, 0.6]));
        assert_eq!(r, VoteResult { label: 1, score: 0.6 });
    }

    #[test]
    fn single_vote_is_unanimous() {
        let r = consensus_vote(&input(&[4], &[0.3]));
        assert_eq!(r, VoteResult { label: 4, score: 0.3 });
    }

    #[test]
    fn oracle_agrees_on_worked_examples() {
        for (labels, scores) in [
            (vec![3usize, 3, 3], vec![0.2, 0.5, 0.4]),
            (vec![2, 2, 5], vec![0.3, 0.8, 0.6]),
            (vec![2, 2, 5], vec![0.3, 0.4, 0.9]),
            (vec![1, 2], vec![0.6, 0.6]),
        ] {
            let i = VoteInput::new(labels, scores).unwrap();
            assert_eq!(consensus_vote(&i), vote_oracle(&i));
        }
    }

    #[test]
    fn penalty_one_is_a_no_op() {
        let i = input(&[2, 2, 5, 1], &[0.3, 0.4, 0.9, 0.25]);
        assert_eq!(consensus_vote(&i), consensus_vote_with_penalty(&i, 1.0));
    }

    #[test]
    fn penalty_damps_singletons_only() {
        // Penalized to 0.36, the singleton 5 loses to the majority's 0.4.
        let i = input(&[2, 2, 5], &[0.3, 0.4, 0.9]);
        let r = consensus_vote_with_penalty(&i, 0.4);
        assert_eq!(r, VoteResult { label: 2, score: 0.4 });
        // The majority's own score is untouched.
        let i = input(&[2, 2, 5], &[0.3, 0.8, 0.6]);
        let r = consensus_vote_with_penalty(&i, 0.4);
        assert_eq!(r, VoteResult { label: 2, score: 0.8 });
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(VoteInput::<f64>::new(vec![], vec![]).is_err());
        assert!(VoteInput::new(vec![1, 2], vec![0.5]).is_err());
        assert!(VoteInput::new(vec![1], vec![0.0]).is_err());
        assert!(VoteInput::new(vec![1], vec![1.5]).is_err());
        assert!(VoteInput::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn batch_vote_maps_elementwise() {
        let batch = vec![
            vec![
                PeerPrediction { label: 3, confidence: 0.2 },
                PeerPrediction { label: 3, confidence: 0.5 },
            ],
            vec![
                PeerPrediction { label: 2, confidence: 0.3 },
                PeerPrediction { label: 5, confidence: 0.6 },
            ],
        ];
        let results = batch_vote(&batch).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0], VoteResult { label: 3, score: 0.5 });
        assert_eq!(results[1], VoteResult { label: 5, score: 0.6 });
        assert!(batch_vote::<f64>(&[]).unwrap().is_empty());
        assert!(batch_vote::<f64>(&[vec![]]).is_err());
    }

    /// Exhaustive sweep: n <= 3 peers over <= 4 labels with a 3-value
    /// score grid, comparing both implementations everywhere.
    #[test]
    fn oracle_equivalence_exhaustive_small() {
        let grid = [0.25f64, 0.5, 0.75];
        let mut cases = 0usize;
        for n in 1..=3usize {
            let mut label_combo = vec![0usize; n];
            loop {
                let mut score_combo = vec![0usize; n];
                loop {
                    let labels = label_combo.clone();
                    let scores: Vec<f64> = score_combo.iter().map(|&i| grid[i]).collect();
                    let input = VoteInput::new(labels, scores).unwrap();
                    assert_eq!(consensus_vote(&input), vote_oracle(&input));
                    cases += 1;

                    let mut k = 0;
                    loop {
                        if k == n {
                            break;
                        }
                        score_combo[k] += 1;
                        if score_combo[k] < grid.len() {
                            break;
                        }
                        score_combo[k] = 0;
                        k += 1;
                    }
                    if k == n {
                        break;
                    }
                }
                let mut k = 0;
                loop {
                    if k == n {
                        break;
                    }
                    label_combo[k] += 1;
                    if label_combo[k] < 4 {
                        break;
                    }
                    label_combo[k] = 0;
                    k += 1;
                }
                if k == n {
                    break;
                }
            }
        }
        // 4^n * 3^n summed over n = 1..3: 12 + 144 + 1728.
        assert_eq!(cases, 1884);
    }

    fn arb_vote() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
        (1usize..=5).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..10, n),
                proptest::collection::vec(0.05f64..1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn oracle_equivalence_random((labels, scores) in arb_vote()) {
            let input = VoteInput::new(labels, scores).unwrap();
            prop_assert_eq!(consensus_vote(&input), vote_oracle(&input));
        }

        #[test]
        fn unanimity_always_wins(
            label in 0usize..10,
            scores in proptest::collection::vec(0.05f64..1.0, 1..6),
        ) {
            let input = VoteInput::new(vec![label; scores.len()], scores.clone()).unwrap();
            let r = consensus_vote(&input);
            prop_assert_eq!(r.label, label);
            let best = scores.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(r.score, best);
        }

        #[test]
        fn winner_is_a_cast_vote((labels, scores) in arb_vote()) {
            let input = VoteInput::new(labels.clone(), scores.clone()).unwrap();
            let r = consensus_vote(&input);
            prop_assert!(labels.contains(&r.label));
            prop_assert!(scores.contains(&r.score));
        }

        // With all scores distinct, candidate scores are distinct, so
        // the winner cannot depend on peer order.
        #[test]
        fn permutation_invariant_when_scores_distinct(
            labels in proptest::collection::vec(0usize..6, 2..6),
            seed in 0u64..1000,
        ) {
            let n = labels.len();
            // Distinct scores by construction.
            let scores: Vec<f64> = (0..n).map(|i| 0.1 + 0.8 * (i as f64) / n as f64).collect();
            let input = VoteInput::new(labels.clone(), scores.clone()).unwrap();
            let baseline = consensus_vote(&input);

            // A simple seeded permutation.
            let mut perm: Vec<usize> = (0..n).collect();
            let mut state = seed;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let p_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            let p_scores: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
            let permuted = consensus_vote(&VoteInput::new(p_labels, p_scores).unwrap());
            prop_assert_eq!(baseline.label, permuted.label);
            prop_assert_eq!(baseline.score, permuted.score);
        }
    }
}
