//! Scene-grouped recall metrics: R@K, mean recall per class (mR@K), the
//! four-number mean, and per-group recall statistics.
//!
//! Entries are grouped by scene. Within a scene, entries are ranked by
//! vote score descending (ties keep insertion order) and an entry counts
//! as a hit when it sits in the scene's top K and its predicted label
//! equals the ground truth. R@K pools hits over all entries; mR@K
//! computes the same recall per ground-truth class, then averages
//! uniformly over the classes that appear.
//!
//! These metrics score label prediction over ground-truth instances:
//! the instances in each scene are given, never detected or localized,
//! so the numbers are comparable only to other evaluations run with
//! ground-truth entities supplied.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::taxonomy::{Group, GroupPartition};
use crate::{ClassId, Scalar};

pub type SceneId = u64;

/// One evaluated instance: what was true, what was voted, how confident
/// the vote was.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome<F> {
    pub truth: ClassId,
    pub predicted: ClassId,
    pub score: F,
}

/// Voted outcomes grouped by scene, in insertion order per scene.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneResults<F> {
    scenes: BTreeMap<SceneId, Vec<Outcome<F>>>,
}

impl<F: Scalar> SceneResults<F> {
    pub fn new() -> SceneResults<F> {
        SceneResults {
            scenes: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, scene: SceneId, outcome: Outcome<F>) -> Result<()> {
        if !outcome.score.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite vote score {} in scene {scene}",
                outcome.score
            )));
        }
        self.scenes.entry(scene).or_default().push(outcome);
        Ok(())
    }

    pub fn scenes(&self) -> &BTreeMap<SceneId, Vec<Outcome<F>>> {
        &self.scenes
    }

    pub fn num_entries(&self) -> usize {
        self.scenes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}

/// Scene-local ranking: indices by score descending, ties in insertion
/// order (stable sort).
fn ranked_indices<F: Scalar>(entries: &[Outcome<F>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.sort_by(|&a, &b| {
        entries[b]
            .score
            .partial_cmp(&entries[a].score)
            .expect("scores validated finite")
    });
    idx
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    Ok(())
}

fn check_nonempty<F: Scalar>(results: &SceneResults<F>) -> Result<()> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "cannot compute recall of empty results".into(),
        ));
    }
    Ok(())
}

fn percentage<F: Scalar>(hits: usize, total: usize) -> F {
    // (100 * hits) / total keeps integer ratios exact (e.g. 99/100).
    F::from_f64_lossy(100.0 * hits as f64) / F::from_f64_lossy(total as f64)
}

/// Pooled top-K recall over all entries, as a percentage.
pub fn recall_at_k<F: Scalar>(results: &SceneResults<F>, k: usize) -> Result<F> {
    check_k(k)?;
    check_nonempty(results)?;
    let mut hits = 0usize;
    let mut total = 0usize;
    for entries in results.scenes().values() {
        total += entries.len();
        for &i in ranked_indices(entries).iter().take(k) {
            if entries[i].predicted == entries[i].truth {
                hits += 1;
            }
        }
    }
    Ok(percentage(hits, total))
}

/// Top-K recall per ground-truth class; `None` for classes with no
/// ground-truth entries.
pub fn per_class_recall_at_k<F: Scalar>(
    results: &SceneResults<F>,
    k: usize,
    num_classes: usize,
) -> Result<Vec<Option<F>>> {
    check_k(k)?;
    check_nonempty(results)?;
    let mut hits = vec![0usize; num_classes];
    let mut totals = vec![0usize; num_classes];
    for entries in results.scenes().values() {
        for entry in entries {
            if entry.truth >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "ground-truth label {} outside [0, {num_classes})",
                    entry.truth
                )));
            }
            totals[entry.truth] += 1;
        }
        for &i in ranked_indices(entries).iter().take(k) {
            if entries[i].predicted == entries[i].truth {
                hits[entries[i].truth] += 1;
            }
        }
    }
    Ok((0..num_classes)
        .map(|c| {
            if totals[c] == 0 {
                None
            } else {
                Some(percentage(hits[c], totals[c]))
            }
        })
        .collect())
}

/// Unweighted average of per-class top-K recalls over the classes that
/// appear in the ground truth.
pub fn mean_recall_at_k<F: Scalar>(
    results: &SceneResults<F>,
    k: usize,
    num_classes: usize,
) -> Result<F> {
    let per_class = per_class_recall_at_k(results, k, num_classes)?;
    let present: Vec<F> = per_class.into_iter().flatten().collect();
    if present.is_empty() {
        return Err(Error::InvalidInput(
            "no class has ground-truth entries".into(),
        ));
    }
    Ok(present.iter().copied().sum::<F>() / F::from_f64_lossy(present.len() as f64))
}

/// The balanced headline number: the arithmetic mean of mR@50, mR@100,
/// R@50 and R@100 (all percentages).
pub fn mean_metric<F: Scalar>(mr50: F, mr100: F, r50: F, r100: F) -> Result<F> {
    for (name, v) in [
        ("mR@50", mr50),
        ("mR@100", mr100),
        ("R@50", r50),
        ("R@100", r100),
    ] {
        if !(v.is_finite() && v >= F::zero() && v <= F::from_f64_lossy(100.0)) {
            return Err(Error::InvalidInput(format!(
                "{name} = {v} outside [0, 100]"
            )));
        }
    }
    Ok((mr50 + mr100 + r50 + r100) / F::from_f64_lossy(4.0))
}

/// Mean and population variance of the per-class recalls inside one
/// frequency group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupStats<F> {
    pub mean: F,
    pub variance: F,
    pub class_count: usize,
}

/// Per-group recall statistics. Groups in which no class has a defined
/// recall are absent from the map rather than reported as zero.
pub fn group_report<F: Scalar>(
    per_class_recall: &[Option<F>],
    partition: &GroupPartition,
) -> Result<BTreeMap<Group, GroupStats<F>>> {
    if per_class_recall.len() != partition.num_classes() {
        return Err(Error::InvalidInput(format!(
            "{} recalls for a partition of {} classes",
            per_class_recall.len(),
            partition.num_classes()
        )));
    }
    let mut out = BTreeMap::new();
    for group in Group::ALL {
        let values: Vec<F> = (0..partition.num_classes())
            .filter(|&c| partition.group_of(c) == group)
            .filter_map(|c| per_class_recall[c])
            .collect();
        if values.is_empty() {
            continue;
        }
        let n = F::from_f64_lossy(values.len() as f64);
        let mean = values.iter().copied().sum::<F>() / n;
        let variance = values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<F>()
            / n;
        out.insert(
            group,
            GroupStats {
                mean,
                variance,
                class_count: values.len(),
            },
        );
    }
    Ok(out)
}

/// Everything the evaluation stage reports for one model's predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport<F> {
    pub recall_at: BTreeMap<usize, F>,
    pub mean_recall_at: BTreeMap<usize, F>,
    /// Present when both K=50 and K=100 were evaluated.
    pub mean: Option<F>,
    /// Per-class recall at the largest evaluated K.
    pub per_class_recall: Vec<Option<F>>,
    pub groups: BTreeMap<Group, GroupStats<F>>,
    /// Classes with no ground-truth entries, excluded from mR and group
    /// statistics.
    pub absent_classes: Vec<ClassId>,
}

/// Computes the full report at the given Ks (sorted and deduplicated).
/// Group statistics are included when a partition is supplied.
pub fn build_report<F: Scalar>(
    results: &SceneResults<F>,
    ks: &[usize],
    num_classes: usize,
    partition: Option<&GroupPartition>,
) -> Result<MetricsReport<F>> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("need at least one K".into()));
    }
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();

    let mut recall_at = BTreeMap::new();
    let mut mean_recall_at = BTreeMap::new();
    for &k in &ks {
        recall_at.insert(k, recall_at_k(results, k)?);
        mean_recall_at.insert(k, mean_recall_at_k(results, k, num_classes)?);
    }
    let mean = match (
        recall_at.get(&50),
        recall_at.get(&100),
        mean_recall_at.get(&50),
        mean_recall_at.get(&100),
    ) {
        (Some(&r50), Some(&r100), Some(&mr50), Some(&mr100)) => {
            Some(mean_metric(mr50, mr100, r50, r100)?)
        }
        _ => None,
    };

    let max_k = *ks.last().expect("ks nonempty");
    let per_class_recall = per_class_recall_at_k(results, max_k, num_classes)?;
    let absent_classes: Vec<ClassId> = per_class_recall
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(c, _)| c)
        .collect();
    let groups = match partition {
        Some(p) => group_report(&per_class_recall, p)?,
        None => BTreeMap::new(),
    };
    Ok(MetricsReport {
        recall_at,
        mean_recall_at,
        mean,
        per_class_recall,
        groups,
        absent_classes,
    })
}

impl<F: Scalar> MetricsReport<F> {
    /// Flat CSV with columns `metric,group,k,value`. Percentages use
    /// four decimals; counts and class ids are integers. Row order is
    /// fixed, so equal reports serialize byte-identically.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,group,k,value\n");
        for (k, v) in &self.recall_at {
            let _ = writeln!(out, "recall_at,,{k},{:.4}", fmt_f(*v));
        }
        for (k, v) in &self.mean_recall_at {
            let _ = writeln!(out, "mean_recall_at,,{k},{:.4}", fmt_f(*v));
        }
        if let Some(m) = self.mean {
            let _ = writeln!(out, "mean,,,{:.4}", fmt_f(m));
        }
        for (group, stats) in &self.groups {
            let _ = writeln!(out, "group_mean,{},,{:.4}", group.name(), fmt_f(stats.mean));
            let _ = writeln!(
                out,
                "group_variance,{},,{:.4}",
                group.name(),
                fmt_f(stats.variance)
            );
            let _ = writeln!(
                out,
                "group_classes,{},,{}",
                group.name(),
                stats.class_count
            );
        }
        for c in &self.absent_classes {
            let _ = writeln!(out, "absent_class,,,{c}");
        }
        out
    }

    /// Human-readable summary; values to two decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.recall_at {
            let _ = writeln!(out, "R@{k}: {:.2}", fmt_f(*v));
        }
        for (k, v) in &self.mean_recall_at {
            let _ = writeln!(out, "mR@{k}: {:.2}", fmt_f(*v));
        }
        if let Some(m) = self.mean {
            let _ = writeln!(out, "mean(mR@50, mR@100, R@50, R@100): {:.2}", fmt_f(m));
        }
        for (group, stats) in &self.groups {
            let _ = writeln!(
                out,
                "{}: mean recall {:.2}, variance {:.2}, {} classes",
                group.name(),
                fmt_f(stats.mean),
                fmt_f(stats.variance),
                stats.class_count
            );
        }
        if !self.absent_classes.is_empty() {
            let ids: Vec<String> = self.absent_classes.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "classes without ground truth: {}", ids.join(", "));
        }
        out
    }
}

/// Formatting goes through f64 so f32 and f64 reports print alike.
fn fmt_f<F: Scalar>(v: F) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{partition_classes, FrequencyTable};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn outcome(truth: usize, predicted: usize, score: f64) -> Outcome<f64> {
        Outcome {
            truth,
            predicted,
            score,
        }
    }

    /// One scene, three correct entries at distinct scores.
    fn three_correct() -> SceneResults<f64> {
        let mut r = SceneResults::new();
        r.push(0, outcome(0, 0, 0.9)).unwrap();
        r.push(0, outcome(1, 1, 0.8)).unwrap();
        r.push(0, outcome(2, 2, 0.7)).unwrap();
        r
    }

    #[test]
    fn top_k_truncates_within_scene() {
        let r = three_correct();
        assert_relative_eq!(
            recall_at_k(&r, 2).unwrap(),
            100.0 * 2.0 / 3.0,
            max_relative = 1e-12
        );
        assert_eq!(recall_at_k(&r, 3).unwrap(), 100.0);
        assert_eq!(recall_at_k(&r, 50).unwrap(), 100.0);
    }

    #[test]
    fn ranking_prefers_high_scores() {
        let mut r = SceneResults::new();
        // The correct entry has the lower score, so K=1 misses it.
        r.push(0, outcome(0, 1, 0.9)).unwrap();
        r.push(0, outcome(1, 1, 0.4)).unwrap();
        assert_eq!(recall_at_k(&r, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&r, 2).unwrap(), 50.0);
    }

    #[test]
    fn rank_ties_keep_insertion_order() {
        let mut r = SceneResults::new();
        r.push(0, outcome(0, 0, 0.5)).unwrap();
        r.push(0, outcome(1, 0, 0.5)).unwrap();
        // First entry is correct and, on the tie, stays ranked first.
        assert_eq!(recall_at_k(&r, 1).unwrap(), 50.0);
    }

    #[test]
    fn divergence_fixture_r_vs_mr() {
        // 99 correct head entries, 1 wrong tail entry: R = 99, mR = 50.
        let mut r = SceneResults::new();
        for i in 0..99 {
            r.push(i % 5, outcome(0, 0, 0.9)).unwrap();
        }
        r.push(0, outcome(1, 0, 0.9)).unwrap();
        assert_eq!(recall_at_k(&r, 1000).unwrap(), 99.0);
        assert_eq!(mean_recall_at_k(&r, 1000, 2).unwrap(), 50.0);
    }

    #[test]
    fn balanced_two_class_fixture() {
        let mut r = SceneResults::new();
        for i in 0..10 {
            r.push(i, outcome(0, 0, 0.9)).unwrap();
            r.push(i, outcome(1, 0, 0.8)).unwrap();
        }
        assert_eq!(recall_at_k(&r, 10).unwrap(), 50.0);
        assert_eq!(mean_recall_at_k(&r, 10, 2).unwrap(), 50.0);
    }

    #[test]
    fn per_class_handles_absent_classes() {
        let mut r = SceneResults::new();
        r.push(0, outcome(0, 0, 0.9)).unwrap();
        let per_class = per_class_recall_at_k(&r, 5, 3).unwrap();
        assert_eq!(per_class[0], Some(100.0));
        assert_eq!(per_class[1], None);
        assert_eq!(per_class[2], None);
    }

    #[test]
    fn mean_metric_reference_rows() {
        let cases: [((f64, f64, f64, f64), f64); 4] = [
            ((25.8, 27.2, 36.1, 37.3), 31.60),
            ((20.8, 21.9, 32.5, 33.6), 27.20),
            ((15.2, 16.0, 35.0, 35.8), 25.50),
            ((0.0, 0.0, 0.0, 0.0), 0.0),
        ];
        for ((mr50, mr100, r50, r100), want) in cases {
            let got = mean_metric(mr50, mr100, r50, r100).unwrap();
            assert!((got - want).abs() < 0.005, "{got} vs {want}");
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn mean_metric_rejects_out_of_range() {
        assert!(mean_metric(-0.1, 0.0, 0.0, 0.0).is_err());
        assert!(mean_metric(0.0, 100.1, 0.0, 0.0).is_err());
        assert!(mean_metric(0.0, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn group_report_hand_cases() {
        // Counts chosen so classes 0:H, 1..=2:B, 3..=5:T.
        let freq = FrequencyTable::from_counts(vec![100, 10, 10, 1, 1, 1]);
        let partition = partition_classes(&freq, 50, 5).unwrap();
        let per_class = [
            Some(80.0),
            Some(0.0),
            Some(20.0),
            Some(10.0),
            Some(10.0),
            Some(10.0),
        ];
        let report = group_report(&per_class, &partition).unwrap();
        let body = report[&Group::Body];
        assert_eq!(body.mean, 10.0);
        assert_eq!(body.variance, 100.0);
        assert_eq!(body.class_count, 2);
        let tail = report[&Group::Tail];
        assert_eq!(tail.mean, 10.0);
        assert_eq!(tail.variance, 0.0);
    }

    #[test]
    fn empty_groups_are_absent_not_zero() {
        let freq = FrequencyTable::from_counts(vec![100, 10, 1]);
        let partition = partition_classes(&freq, 50, 5).unwrap();
        let per_class = [Some(50.0), Some(25.0), None];
        let report = group_report(&per_class, &partition).unwrap();
        assert!(report.contains_key(&Group::Head));
        assert!(report.contains_key(&Group::Body));
        assert!(!report.contains_key(&Group::Tail));
    }

    #[test]
    fn report_includes_mean_only_with_50_and_100() {
        let r = three_correct();
        let with = build_report(&r, &[20, 50, 100], 3, None).unwrap();
        assert!(with.mean.is_some());
        let without = build_report(&r, &[20, 50], 3, None).unwrap();
        assert!(without.mean.is_none());
    }

    #[test]
    fn report_csv_is_stable_and_complete() {
        let freq = FrequencyTable::from_counts(vec![100, 10, 1]);
        let partition = partition_classes(&freq, 50, 5).unwrap();
        let mut results = SceneResults::new();
        results.push(0, outcome(0, 0, 0.9)).unwrap();
        results.push(0, outcome(1, 1, 0.8)).unwrap();
        let report = build_report(&results, &[50, 100], 3, Some(&partition)).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("metric,group,k,value\n"));
        assert!(csv.contains("recall_at,,50,100.0000"));
        assert!(csv.contains("mean,,,100.0000"));
        assert!(csv.contains("group_mean,head,,100.0000"));
        assert!(csv.contains("absent_class,,,2"));
        assert_eq!(csv, report.to_csv());
        let text = report.to_text();
        assert!(text.contains("mean(mR@50, mR@100, R@50, R@100): 100.00"));
    }

    #[test]
    fn empty_results_are_an_error() {
        let empty: SceneResults<f64> = SceneResults::new();
        assert!(recall_at_k(&empty, 10).is_err());
        assert!(matches!(
            recall_at_k(&three_correct(), 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn small_fixture_matches_rank_and_count_oracle() {
        // Independent oracle: explicit (score, index) sort per scene,
        // then set-based hit counting.
        let mut results = SceneResults::new();
        let mut raw: Vec<(u64, Vec<Outcome<f64>>)> = Vec::new();
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        for scene in 0..20u64 {
            let size = 3 + next() % 6;
            let mut entries = Vec::new();
            for _ in 0..size {
                let truth = next() % 4;
                let predicted = next() % 4;
                let score = 0.05 + (next() % 90) as f64 / 100.0;
                entries.push(outcome(truth, predicted, score));
                results.push(scene, outcome(truth, predicted, score)).unwrap();
            }
            raw.push((scene, entries));
        }
        for k in [1, 2, 3, 5, 100] {
            let mut hits = 0usize;
            let mut total = 0usize;
            for (_, entries) in &raw {
                total += entries.len();
                let mut order: Vec<(f64, usize)> =
                    entries.iter().enumerate().map(|(i, e)| (e.score, i)).collect();
                order.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1))
                });
                for &(_, i) in order.iter().take(k) {
                    if entries[i].predicted == entries[i].truth {
                        hits += 1;
                    }
                }
            }
            let expected = 100.0 * hits as f64 / total as f64;
            assert_eq!(recall_at_k(&results, k).unwrap(), expected, "K={k}");
        }
    }

    fn arb_results() -> impl Strategy<Value = SceneResults<f64>> {
        proptest::collection::vec(
            proptest::collection::vec(
                (0usize..5, 0usize..5, 0.05f64..1.0),
                1..8,
            ),
            1..6,
        )
        .prop_map(|scenes| {
            let mut r = SceneResults::new();
            for (scene, entries) in scenes.into_iter().enumerate() {
                for (truth, predicted, score) in entries {
                    r.push(scene as u64, outcome(truth, predicted, score)).unwrap();
                }
            }
            r
        })
    }

    proptest! {
        #[test]
        fn recall_monotone_in_k(results in arb_results(), k in 1usize..10) {
            let a: f64 = recall_at_k(&results, k).unwrap();
            let b: f64 = recall_at_k(&results, k + 1).unwrap();
            prop_assert!(b >= a);
            let ma: f64 = mean_recall_at_k(&results, k, 5).unwrap();
            let mb: f64 = mean_recall_at_k(&results, k + 1, 5).unwrap();
            prop_assert!(mb >= ma - 1e-12);
        }

        #[test]
        fn recall_bounded(results in arb_results(), k in 1usize..10) {
            let r: f64 = recall_at_k(&results, k).unwrap();
            prop_assert!((0.0..=100.0).contains(&r));
            let mr: f64 = mean_recall_at_k(&results, k, 5).unwrap();
            prop_assert!((0.0..=100.0).contains(&mr));
        }

        // Beyond the largest scene, ranking is irrelevant: R@K is plain
        // accuracy.
        #[test]
        fn saturation_equals_accuracy(results in arb_results()) {
            let hits: usize = results
                .scenes()
                .values()
                .flatten()
                .filter(|e| e.predicted == e.truth)
                .count();
            let total = results.num_entries();
            let expected = 100.0 * hits as f64 / total as f64;
            let r: f64 = recall_at_k(&results, 1000).unwrap();
            prop_assert_eq!(r, expected);
        }
    }
}
