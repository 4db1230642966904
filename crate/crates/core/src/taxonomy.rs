//! Class frequency statistics, head/body/tail partitioning, and the peer
//! group-assignment grammar.
//!
//! A long-tailed label distribution is split into three frequency strata:
//! head (most frequent), body, and tail (rarest). Each peer classifier is
//! assigned a nonempty subset of those strata, written as a `_`-separated
//! spec string such as `"HBT_B_T"`: the first peer sees all classes, the
//! second only body classes, the third only tail classes.

use std::fmt;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::{ClassId, Scalar};

/// Maximum number of peers a spec string may declare.
pub const MAX_PEERS: usize = 4;

/// One frequency stratum of the class distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Head,
    Body,
    Tail,
}

impl Group {
    /// All groups in canonical order (head first).
    pub const ALL: [Group; 3] = [Group::Head, Group::Body, Group::Tail];

    /// The single-letter name used by the spec grammar.
    pub fn letter(self) -> char {
        match self {
            Group::Head => 'H',
            Group::Body => 'B',
            Group::Tail => 'T',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Head => "head",
            Group::Body => "body",
            Group::Tail => "tail",
        }
    }

    pub fn from_letter(c: char) -> Option<Group> {
        match c {
            'H' => Some(Group::Head),
            'B' => Some(Group::Body),
            'T' => Some(Group::Tail),
            _ => None,
        }
    }

    fn bit(self) -> u8 {
        match self {
            Group::Head => 0b001,
            Group::Body => 0b010,
            Group::Tail => 0b100,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A subset of `{Head, Body, Tail}`; one token of a peer spec.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GroupSet(u8);

impl GroupSet {
    pub const EMPTY: GroupSet = GroupSet(0);
    /// The full set `{Head, Body, Tail}` (token `HBT`).
    pub const FULL: GroupSet = GroupSet(0b111);

    pub fn singleton(group: Group) -> GroupSet {
        GroupSet(group.bit())
    }

    pub fn from_groups(groups: &[Group]) -> GroupSet {
        let mut set = GroupSet::EMPTY;
        for &g in groups {
            set.insert(g);
        }
        set
    }

    pub fn insert(&mut self, group: Group) {
        self.0 |= group.bit();
    }

    pub fn contains(self, group: Group) -> bool {
        self.0 & group.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: GroupSet) -> GroupSet {
        GroupSet(self.0 | other.0)
    }

    /// Member groups in canonical order H, B, T.
    pub fn groups(self) -> impl Iterator<Item = Group> {
        Group::ALL.into_iter().filter(move |g| self.contains(*g))
    }
}

/// Canonical rendering: member letters in the fixed order H, B, T.
impl fmt::Display for GroupSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in self.groups() {
            write!(f, "{}", g.letter())?;
        }
        Ok(())
    }
}

impl fmt::Debug for GroupSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupSet({self})")
    }
}

/// Per-class instance counts over a labeled dataset.
///
/// Every class id in `[0, num_classes)` has an entry (possibly zero), and
/// the counts sum to the dataset size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: Vec<u64>,
}

impl FrequencyTable {
    pub fn from_counts(counts: Vec<u64>) -> FrequencyTable {
        FrequencyTable { counts }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, class: ClassId) -> u64 {
        self.counts[class]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total instance count (the dataset size).
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts for the given classes, in the order given. Used to derive
    /// per-peer margins and weights over a peer's class subset.
    pub fn restricted(&self, classes: &[ClassId]) -> Vec<u64> {
        classes.iter().map(|&c| self.counts[c]).collect()
    }
}

/// Counts how many instances carry each label.
///
/// Fails on an empty dataset and on any label outside
/// `[0, num_classes)`, naming the offending instance.
pub fn compute_frequencies<F: Scalar>(dataset: &LabeledDataset<F>) -> Result<FrequencyTable> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput(
            "cannot compute frequencies of an empty dataset".into(),
        ));
    }
    let mut counts = vec![0u64; dataset.num_classes()];
    for instance in dataset.instances() {
        let label = instance.label;
        if label >= counts.len() {
            return Err(Error::InvalidInput(format!(
                "instance {} has label {} outside [0, {})",
                instance.id,
                label,
                counts.len()
            )));
        }
        counts[label] += 1;
    }
    Ok(FrequencyTable::from_counts(counts))
}

/// Assignment of every class to exactly one of head, body, tail, along
/// with the count cutoffs that produced it.
///
/// A class counts as head when its frequency is at least `t_head`, body
/// when it is in `[t_body, t_head)`, and tail otherwise. Counts exactly
/// equal to a cutoff therefore land in the higher-frequency group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPartition {
    group_of: Vec<Group>,
    t_head: u64,
    t_body: u64,
}

impl GroupPartition {
    /// Reassembles a partition from stored fields (model file loading).
    pub(crate) fn from_parts(group_of: Vec<Group>, t_head: u64, t_body: u64) -> GroupPartition {
        GroupPartition {
            group_of,
            t_head,
            t_body,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self, class: ClassId) -> Group {
        self.group_of[class]
    }

    /// The `(t_head, t_body)` count cutoffs used.
    pub fn thresholds(&self) -> (u64, u64) {
        (self.t_head, self.t_body)
    }

    /// Ascending class ids whose group belongs to `set`. A peer whose
    /// set is `{Head, Body, Tail}` covers every class.
    pub fn classes_in(&self, set: GroupSet) -> Vec<ClassId> {
        (0..self.group_of.len())
            .filter(|&c| set.contains(self.group_of[c]))
            .collect()
    }

    /// Number of classes per group, indexed like [`Group::ALL`].
    pub fn group_sizes(&self) -> [usize; 3] {
        let mut sizes = [0usize; 3];
        for &g in &self.group_of {
            sizes[g as usize] += 1;
        }
        sizes
    }

    /// Groups that contain at least one class.
    pub fn populated_groups(&self) -> GroupSet {
        let mut set = GroupSet::EMPTY;
        for &g in &self.group_of {
            set.insert(g);
        }
        set
    }
}

/// Splits classes by count cutoffs: `count >= t_head` is head,
/// `t_body <= count < t_head` is body, the rest is tail.
pub fn partition_classes(
    freq: &FrequencyTable,
    t_head: u64,
    t_body: u64,
) -> Result<GroupPartition> {
    if t_head <= t_body {
        return Err(Error::Config(format!(
            "head cutoff ({t_head}) must exceed body cutoff ({t_body})"
        )));
    }
    let group_of = freq
        .counts()
        .iter()
        .map(|&n| {
            if n >= t_head {
                Group::Head
            } else if n >= t_body {
                Group::Body
            } else {
                Group::Tail
            }
        })
        .collect();
    Ok(GroupPartition {
        group_of,
        t_head,
        t_body,
    })
}

/// Derives count cutoffs that give the three groups as-equal-as-possible
/// numbers of classes (rank tertiles).
///
/// Classes are ranked by count, descending. When several classes share
/// the count at a tertile boundary they all move to the more frequent
/// group, since equal counts cannot be separated by a cutoff. Leftover
/// classes from `num_classes mod 3` also go to the more frequent groups.
pub fn tertile_thresholds(freq: &FrequencyTable) -> Result<(u64, u64)> {
    let n = freq.num_classes();
    if n < 3 {
        return Err(Error::Config(format!(
            "tertile partitioning needs at least 3 classes, got {n}"
        )));
    }
    let mut sorted: Vec<u64> = freq.counts().to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));

    let head_target = n / 3 + usize::from(n % 3 >= 1);
    let body_target = n / 3 + usize::from(n % 3 >= 2);

    let t_head = sorted[head_target - 1];
    if t_head == 0 {
        return Err(Error::Config(
            "too many zero-count classes for tertile cutoffs; \
             pass explicit thresholds instead"
                .into(),
        ));
    }
    // Ties at the head boundary extend the head group; the body target
    // is then filled from what remains.
    let rest: Vec<u64> = sorted.iter().copied().filter(|&c| c < t_head).collect();
    let t_body = if rest.is_empty() {
        0
    } else {
        rest[body_target.min(rest.len()) - 1]
    };
    Ok((t_head, t_body))
}

/// Parses a peer spec string such as `"HBT_B_T"` into one group set per
/// peer. Tokens are 1–3 distinct letters from `{H, B, T}`; 1–4 tokens.
pub fn parse_peer_spec(spec: &str) -> Result<Vec<GroupSet>> {
    let err = |position: usize, message: String| Error::PeerSpec { position, message };

    let mut sets = Vec::new();
    let mut current = GroupSet::EMPTY;
    let mut token_start = 0usize;

    let finish =
        |sets: &mut Vec<GroupSet>, current: &mut GroupSet, token_start: usize| -> Result<()> {
            if current.is_empty() {
                return Err(err(token_start, "empty peer token".into()));
            }
            if sets.len() == MAX_PEERS {
                return Err(err(
                    token_start,
                    format!("more than {MAX_PEERS} peer tokens"),
                ));
            }
            sets.push(*current);
            *current = GroupSet::EMPTY;
            Ok(())
        };

    for (pos, ch) in spec.char_indices() {
        match ch {
            '_' => {
                finish(&mut sets, &mut current, token_start)?;
                token_start = pos + 1;
            }
            _ => match Group::from_letter(ch) {
                Some(group) => {
                    if current.contains(group) {
                        return Err(err(pos, format!("repeated letter '{ch}' in peer token")));
                    }
                    current.insert(group);
                }
                None => {
                    return Err(err(
                        pos,
                        format!("invalid letter '{ch}' (expected H, B, or T)"),
                    ));
                }
            },
        }
    }
    finish(&mut sets, &mut current, token_start)?;
    Ok(sets)
}

/// Renders group sets back to the spec grammar, letters in canonical
/// order H, B, T. `parse_peer_spec . render_peer_spec` is the identity
/// on parsed values.
pub fn render_peer_spec(sets: &[GroupSet]) -> String {
    sets.iter()
        .map(GroupSet::to_string)
        .collect::<Vec<_>>()
        .join("_")
}

/// Full configuration of one peer: its group assignment, loss, and
/// weight in the summed training objective.
#[derive(Clone, Debug, PartialEq)]
pub struct PeerSetup<F> {
    pub groups: GroupSet,
    pub loss: LossSpec<F>,
    pub alpha: F,
}

/// Ordered peer configurations for an ensemble (1 to 4 peers).
#[derive(Clone, Debug, PartialEq)]
pub struct PeerConfig<F> {
    peers: Vec<PeerSetup<F>>,
    /// Permit configurations whose peers do not jointly cover every
    /// populated group (such classes would be unpredictable).
    pub allow_uncovered: bool,
}

impl<F: Scalar> PeerConfig<F> {
    pub fn new(peers: Vec<PeerSetup<F>>) -> Result<PeerConfig<F>> {
        if peers.is_empty() || peers.len() > MAX_PEERS {
            return Err(Error::Config(format!(
                "peer count must be in [1, {MAX_PEERS}], got {}",
                peers.len()
            )));
        }
        for (i, peer) in peers.iter().enumerate() {
            if peer.groups.is_empty() {
                return Err(Error::Config(format!("peer {i} has an empty group set")));
            }
            if !(peer.alpha > F::zero()) {
                return Err(Error::Config(format!(
                    "peer {i} has non-positive alpha {:?}",
                    peer.alpha
                )));
            }
            peer.loss.validate()?;
        }
        Ok(PeerConfig {
            peers,
            allow_uncovered: false,
        })
    }

    /// One cross-entropy peer per spec token, all alphas 1.
    pub fn uniform_cross_entropy(sets: &[GroupSet]) -> Result<PeerConfig<F>> {
        PeerConfig::new(
            sets.iter()
                .map(|&groups| PeerSetup {
                    groups,
                    loss: LossSpec::CrossEntropy,
                    alpha: F::one(),
                })
                .collect(),
        )
    }

    pub fn peers(&self) -> &[PeerSetup<F>] {
        &self.peers
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    /// The spec string these peers correspond to.
    pub fn spec_string(&self) -> String {
        render_peer_spec(&self.peers.iter().map(|p| p.groups).collect::<Vec<_>>())
    }
}

/// Tallies labels without requiring a dataset; used by tests and the
/// frequency summary writer.
pub fn count_labels(labels: &[ClassId], num_classes: usize) -> Result<FrequencyTable> {
    let mut counts = vec![0u64; num_classes];
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {label} at position {i} outside [0, {num_classes})"
            )));
        }
        counts[label] += 1;
    }
    Ok(FrequencyTable::from_counts(counts))
}

/// Per-class shares as fractions of the total, for summaries.
pub fn frequency_shares(freq: &FrequencyTable) -> Vec<f64> {
    let total = freq.total() as f64;
    freq.counts()
        .iter()
        .map(|&c| {
            if total > 0.0 {
                c as f64 / total
            } else {
                0.0
            }
        })
        .collect()
}
