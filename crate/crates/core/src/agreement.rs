//! Consensus over several annotators, per-annotator agreement with the
//! consensus, and counting of label disagreements.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::evaluation::{Counts, Prf};
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub annotator: String,
    pub document: String,
    pub mention: String,
    /// Closed on save.
    pub labels: LabelSet,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Every annotator's (closed) labels for one mention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MentionVotes {
    pub document: String,
    pub mention: String,
    pub votes: BTreeMap<String, LabelSet>,
}

/// Groups records by (document, mention). A later record from the same annotator
/// replaces an earlier one; records are taken in slice order.
pub fn group_records(records: &[AnnotationRecord], taxonomy: &Taxonomy) -> Result<Vec<MentionVotes>> {
    let mut grouped: BTreeMap<(&str, &str), BTreeMap<String, LabelSet>> = BTreeMap::new();
    for r in records {
        grouped
            .entry((r.document.as_str(), r.mention.as_str()))
            .or_default()
            .insert(r.annotator.clone(), taxonomy.closure(&r.labels)?);
    }
    Ok(grouped
        .into_iter()
        .map(|((document, mention), votes)| MentionVotes {
            document: document.into(),
            mention: mention.into(),
            votes,
        })
        .collect())
}

/// Labels in at least `min_support` of the annotators' closed sets.
pub fn consensus<'a, I>(sets: I, min_support: usize, taxonomy: &Taxonomy) -> Result<LabelSet>
where
    I: IntoIterator<Item = &'a LabelSet>,
{
    if min_support == 0 {
        return Err(Error::InvalidParameter("min_support must be at least 1".into()));
    }
    let mut support: BTreeMap<LabelId, usize> = BTreeMap::new();
    for set in sets {
        for l in taxonomy.closure(set)? {
            *support.entry(l).or_default() += 1;
        }
    }
    Ok(support
        .into_iter()
        .filter(|&(_, n)| n >= min_support)
        .map(|(l, _)| l)
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConsensusStats {
    pub mentions: usize,
    /// Distinct labels any annotator applied, summed over mentions.
    pub labels_before: usize,
    pub labels_after: usize,
}

impl ConsensusStats {
    pub fn pruned_fraction(&self) -> f64 {
        if self.labels_before == 0 {
            0.0
        } else {
            (self.labels_before - self.labels_after) as f64 / self.labels_before as f64
        }
    }
}

/// Consensus sets for every mention, in the order of `votes`.
pub fn consensus_all(
    votes: &[MentionVotes],
    min_support: usize,
    taxonomy: &Taxonomy,
) -> Result<(Vec<LabelSet>, ConsensusStats)> {
    let mut stats = ConsensusStats::default();
    let mut out = Vec::with_capacity(votes.len());
    for v in votes {
        let union: LabelSet = v.votes.values().flatten().copied().collect();
        let c = consensus(v.votes.values(), min_support, taxonomy)?;
        stats.mentions += 1;
        stats.labels_before += union.len();
        stats.labels_after += c.len();
        out.push(c);
    }
    Ok((out, stats))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgreementReport {
    pub depth: usize,
    pub per_annotator: Vec<(String, Prf)>,
    /// Uniform mean over annotators of precision, recall and F1.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Each annotator's labels of exactly `depth` scored against the consensus.
pub fn annotator_agreement(
    votes: &[MentionVotes],
    consensus_sets: &[LabelSet],
    depth: usize,
    taxonomy: &Taxonomy,
) -> Result<AgreementReport> {
    if votes.len() != consensus_sets.len() {
        return Err(Error::InvalidParameter("one consensus set per mention is required".into()));
    }
    let at_depth = |s: &LabelSet| -> LabelSet {
        s.iter()
            .copied()
            .filter(|&l| taxonomy.depth(l) == Ok(depth))
            .collect()
    };
    let mut counts: BTreeMap<&str, Counts> = BTreeMap::new();
    for (v, c) in votes.iter().zip(consensus_sets) {
        let gold = at_depth(c);
        for (annotator, labels) in &v.votes {
            *counts.entry(annotator.as_str()).or_default() += Counts::of(&at_depth(labels), &gold);
        }
    }
    let per_annotator: Vec<(String, Prf)> = counts.into_iter().map(|(a, c)| (a.into(), c.prf())).collect();
    let n = per_annotator.len().max(1) as f64;
    let precision = per_annotator.iter().map(|(_, p)| p.precision).sum::<f64>() / n;
    let recall = per_annotator.iter().map(|(_, p)| p.recall).sum::<f64>() / n;
    let f1_mean = per_annotator.iter().map(|(_, p)| p.f1).sum::<f64>() / n;
    Ok(AgreementReport {
        depth,
        per_annotator,
        precision,
        recall,
        f1: f1_mean,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DisagreementKind {
    /// One label is a proper ancestor of the other.
    Specificity,
    Type,
}

impl DisagreementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DisagreementKind::Specificity => "specificity",
            DisagreementKind::Type => "type",
        }
    }
}

pub fn classify_disagreement(a: LabelId, b: LabelId, taxonomy: &Taxonomy) -> Result<DisagreementKind> {
    if a == b {
        return Err(Error::NotADisagreement);
    }
    if taxonomy.is_ancestor(a, b)? || taxonomy.is_ancestor(b, a)? {
        Ok(DisagreementKind::Specificity)
    } else {
        Ok(DisagreementKind::Type)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisagreementRow {
    /// The smaller label id of the unordered pair (the ancestor, for specificity rows).
    pub first: LabelId,
    pub second: LabelId,
    pub kind: DisagreementKind,
    pub count: usize,
}

/// Label disagreements after consensus filtering.
///
/// Each annotator's set is intersected with the mention's consensus and reduced
/// to its most specific labels. For every pair of annotators, each label one
/// has and the other lacks is paired with each label the other has and the
/// first lacks. An unordered label pair counts at most once per mention.
/// Rows are sorted by count, descending, then by label ids.
pub fn disagreement_table(
    votes: &[MentionVotes],
    consensus_sets: &[LabelSet],
    taxonomy: &Taxonomy,
) -> Result<Vec<DisagreementRow>> {
    if votes.len() != consensus_sets.len() {
        return Err(Error::InvalidParameter("one consensus set per mention is required".into()));
    }
    let mut counts: BTreeMap<(LabelId, LabelId), usize> = BTreeMap::new();
    for (v, c) in votes.iter().zip(consensus_sets) {
        let specific: Vec<LabelSet> = v
            .votes
            .values()
            .map(|s| taxonomy.most_specific(&s.intersection(c).copied().collect()))
            .collect();
        let mut pairs: BTreeSet<(LabelId, LabelId)> = BTreeSet::new();
        for (i, a) in specific.iter().enumerate() {
            for b in &specific[i + 1..] {
                for &l1 in a.difference(b) {
                    for &l2 in b.difference(a) {
                        if l1 != l2 {
                            pairs.insert((l1.min(l2), l1.max(l2)));
                        }
                    }
                }
            }
        }
        for p in pairs {
            *counts.entry(p).or_default() += 1;
        }
    }
    let mut rows = counts
        .into_iter()
        .map(|((first, second), count)| {
            Ok(DisagreementRow {
                first,
                second,
                kind: classify_disagreement(first, second, taxonomy)?,
                count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.first.cmp(&b.first)).then(a.second.cmp(&b.second)));
    Ok(rows)
}
