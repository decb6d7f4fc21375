//! Distant-supervision label pruning.
//!
//! Three heuristics, always applied in this order within a document:
//!
//! 1. **Sibling**: when a label has two or more of its children present, the
//!    children and everything below them are dropped, leaving the parent.
//! 2. **Coarse**: only labels under the coarse classifier's top class survive.
//! 3. **Min-count**: labels carried by fewer than `k` mentions of the document
//!    are dropped.
//!
//! Every step maps an ancestor-closed set to an ancestor-closed subset.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::AddAssign;

use crate::coarse::CoarseClass;
use crate::corpus::{Document, Mention};
use crate::error::{Error, Result};
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

/// Probabilities over person, location, organization, other.
pub type CoarseDistribution = [f64; 4];

pub trait CoarsePredictor {
    fn coarse_distribution(&self, document: &Document, mention: &Mention) -> Result<CoarseDistribution>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PruningConfig {
    pub sibling: bool,
    pub coarse: bool,
    pub min_count: bool,
    pub min_count_threshold: usize,
}

impl PruningConfig {
    pub const NONE: PruningConfig = PruningConfig {
        sibling: false,
        coarse: false,
        min_count: false,
        min_count_threshold: 2,
    };

    pub const ALL: PruningConfig = PruningConfig {
        sibling: true,
        coarse: true,
        min_count: true,
        min_count_threshold: 2,
    };

    pub fn validate(&self) -> Result<()> {
        if self.min_count_threshold == 0 {
            return Err(Error::InvalidParameter("min_count must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for PruningConfig {
    fn default() -> Self {
        Self::NONE
    }
}

/// Drops every child (with its subtree) of a label that has two or more
/// children in the set. Depth-1 labels are not pruned against each other.
pub fn prune_sibling(labels: &LabelSet, taxonomy: &Taxonomy) -> Result<LabelSet> {
    let mut doomed: Vec<LabelId> = Vec::new();
    for &label in labels {
        let present: Vec<LabelId> = taxonomy
            .children(label)?
            .iter()
            .copied()
            .filter(|c| labels.contains(c))
            .collect();
        if present.len() >= 2 {
            doomed.extend(present);
        }
    }
    if doomed.is_empty() {
        return Ok(labels.clone());
    }
    let mut out = labels.clone();
    for child in doomed {
        out.remove(&child);
        for d in taxonomy.descendants(child)? {
            out.remove(&d);
        }
    }
    Ok(out)
}

/// Keeps only labels whose top-level ancestor is the coarse argmax.
pub fn prune_coarse(labels: &LabelSet, coarse: &CoarseDistribution, taxonomy: &Taxonomy) -> Result<LabelSet> {
    let winner = CoarseClass::argmax(coarse);
    let mut out = LabelSet::new();
    for &label in labels {
        if CoarseClass::of_label(taxonomy, label)? == Some(winner) {
            out.insert(label);
        }
    }
    Ok(out)
}

/// Removes labels present in fewer than `k` of the document's sets, then drops
/// any label left without its parent.
pub fn prune_min_count(sets: &[LabelSet], k: usize, taxonomy: &Taxonomy) -> Result<Vec<LabelSet>> {
    if k == 0 {
        return Err(Error::InvalidParameter("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<LabelId, usize> = BTreeMap::new();
    for set in sets {
        for &label in set {
            *counts.entry(label).or_default() += 1;
        }
    }
    sets.iter()
        .map(|set| {
            let kept: LabelSet = set.iter().copied().filter(|l| counts[l] >= k).collect();
            repair_closure(&kept, taxonomy)
        })
        .collect()
}

/// Largest ancestor-closed subset.
fn repair_closure(labels: &LabelSet, taxonomy: &Taxonomy) -> Result<LabelSet> {
    let mut out = LabelSet::new();
    // Ids order parents before children.
    for &label in labels {
        match taxonomy.parent(label)? {
            Some(p) if !out.contains(&p) => {}
            _ => {
                out.insert(label);
            }
        }
    }
    Ok(out)
}

/// Label and instance counts through the pipeline; sums across documents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PruningStats {
    pub mentions: usize,
    /// Mentions with a non-empty mapped label set.
    pub instances_in: usize,
    /// Mentions with a non-empty set after pruning.
    pub instances_out: usize,
    pub labels_in: usize,
    pub removed_sibling: usize,
    pub removed_coarse: usize,
    pub removed_min_count: usize,
    pub labels_out: usize,
}

impl AddAssign for PruningStats {
    fn add_assign(&mut self, rhs: Self) {
        self.mentions += rhs.mentions;
        self.instances_in += rhs.instances_in;
        self.instances_out += rhs.instances_out;
        self.labels_in += rhs.labels_in;
        self.removed_sibling += rhs.removed_sibling;
        self.removed_coarse += rhs.removed_coarse;
        self.removed_min_count += rhs.removed_min_count;
        self.labels_out += rhs.labels_out;
    }
}

fn total(sets: &[LabelSet]) -> usize {
    sets.iter().map(LabelSet::len).sum()
}

/// Runs the enabled heuristics over one document's mapped label sets (one per
/// mention, in mention order). Mentions that end with an empty set produce no
/// training instance.
pub fn apply_pipeline(
    document: &Document,
    mapped: &[LabelSet],
    config: &PruningConfig,
    coarse: Option<&dyn CoarsePredictor>,
    taxonomy: &Taxonomy,
) -> Result<(Vec<LabelSet>, PruningStats)> {
    config.validate()?;
    if mapped.len() != document.mentions.len() {
        return Err(Error::InvalidParameter(alloc::format!(
            "document `{}` has {} mentions but {} label sets",
            document.id,
            document.mentions.len(),
            mapped.len()
        )));
    }
    let mut sets: Vec<LabelSet> = mapped.to_vec();
    let mut stats = PruningStats {
        mentions: sets.len(),
        instances_in: sets.iter().filter(|s| !s.is_empty()).count(),
        labels_in: total(&sets),
        ..PruningStats::default()
    };

    if config.sibling {
        let before = total(&sets);
        for set in sets.iter_mut() {
            *set = prune_sibling(set, taxonomy)?;
        }
        stats.removed_sibling = before - total(&sets);
    }
    if config.coarse {
        let predictor = coarse.ok_or_else(|| Error::InvalidParameter("coarse pruning needs a coarse model".into()))?;
        let before = total(&sets);
        for (set, mention) in sets.iter_mut().zip(&document.mentions) {
            if set.is_empty() {
                continue;
            }
            let distribution = predictor.coarse_distribution(document, mention)?;
            *set = prune_coarse(set, &distribution, taxonomy)?;
        }
        stats.removed_coarse = before - total(&sets);
    }
    if config.min_count {
        let before = total(&sets);
        sets = prune_min_count(&sets, config.min_count_threshold, taxonomy)?;
        stats.removed_min_count = before - total(&sets);
    }
    stats.labels_out = total(&sets);
    stats.instances_out = sets.iter().filter(|s| !s.is_empty()).count();
    Ok((sets, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{MentionKind, Split, Token};
    use alloc::string::String;
    use alloc::vec;
    use proptest::prelude::*;

    const TAX: &str = "person/political-figure\nperson/athlete\nperson/artist/actor\nperson/artist/author\n\
                       person/business\nlocation/city\norganization/company\norganization/sports-team\nother\n";

    fn tax() -> Taxonomy {
        Taxonomy::parse(TAX).unwrap()
    }

    fn set(tax: &Taxonomy, paths: &[&str]) -> LabelSet {
        paths.iter().map(|p| tax.id(p).unwrap()).collect()
    }

    #[test]
    fn sibling_examples() {
        let t = tax();
        assert_eq!(
            prune_sibling(&set(&t, &["person", "person/political-figure", "person/athlete"]), &t).unwrap(),
            set(&t, &["person"])
        );
        let single = set(&t, &["person", "person/artist"]);
        assert_eq!(prune_sibling(&single, &t).unwrap(), single);
        assert_eq!(
            prune_sibling(
                &set(&t, &["person", "person/artist", "person/artist/actor", "person/athlete"]),
                &t
            )
            .unwrap(),
            set(&t, &["person"])
        );
        // Obama: political figure and artist conflict under person.
        assert_eq!(
            prune_sibling(&set(&t, &["person", "person/political-figure", "person/artist"]), &t).unwrap(),
            set(&t, &["person"])
        );
        // Depth-3 conflict keeps the depth-2 parent.
        assert_eq!(
            prune_sibling(
                &set(&t, &["person", "person/artist", "person/artist/actor", "person/artist/author"]),
                &t
            )
            .unwrap(),
            set(&t, &["person", "person/artist"])
        );
        // Top-level conflicts are left for the coarse heuristic.
        let canada = set(&t, &["location", "organization"]);
        assert_eq!(prune_sibling(&canada, &t).unwrap(), canada);
    }

    #[test]
    fn sibling_unknown_label_is_error() {
        let t = tax();
        assert!(prune_sibling(&[LabelId(500)].into_iter().collect(), &t).is_err());
    }

    #[test]
    fn coarse_examples() {
        let t = tax();
        let org = [0.1, 0.2, 0.6, 0.1];
        assert_eq!(
            prune_coarse(
                &set(&t, &["location", "location/city", "organization", "organization/company"]),
                &org,
                &t
            )
            .unwrap(),
            set(&t, &["organization", "organization/company"])
        );
        assert!(prune_coarse(&LabelSet::new(), &org, &t).unwrap().is_empty());
        let person = set(&t, &["person", "person/business"]);
        assert_eq!(prune_coarse(&person, &[0.7, 0.1, 0.1, 0.1], &t).unwrap(), person);
    }

    #[test]
    fn min_count_examples() {
        let t = tax();
        let sets = vec![
            set(&t, &["organization", "organization/sports-team"]),
            set(&t, &["organization", "organization/sports-team"]),
            set(&t, &["organization", "organization/company"]),
        ];
        let out = prune_min_count(&sets, 2, &t).unwrap();
        assert_eq!(out[0], sets[0]);
        assert_eq!(out[1], sets[1]);
        assert_eq!(out[2], set(&t, &["organization"]));
        assert_eq!(prune_min_count(&sets, 1, &t).unwrap(), sets);
        assert_eq!(prune_min_count(&[set(&t, &["person"])], 2, &t).unwrap(), vec![LabelSet::new()]);
        assert!(prune_min_count(&sets, 0, &t).is_err());
    }

    #[test]
    fn min_count_repairs_orphans_of_unclosed_input() {
        let t = tax();
        // person/artist/actor survives counting but its parent does not.
        let sets = vec![
            set(&t, &["person", "person/artist/actor"]),
            set(&t, &["person", "person/artist", "person/artist/actor"]),
        ];
        let out = prune_min_count(&sets, 2, &t).unwrap();
        assert_eq!(out[1], set(&t, &["person"]));
    }

    struct Fixed(BTreeMap<String, CoarseDistribution>);

    impl CoarsePredictor for Fixed {
        fn coarse_distribution(&self, _: &Document, mention: &Mention) -> Result<CoarseDistribution> {
            Ok(self.0[&mention.id])
        }
    }

    fn doc(n: usize) -> Document {
        Document {
            id: "fixture".into(),
            split: Split::Train,
            sentences: vec![vec![Token::new("x", None, "root")]],
            mentions: (0..n)
                .map(|i| Mention {
                    id: alloc::format!("m{i}"),
                    sentence: 0,
                    start: 0,
                    end: 1,
                    head: 0,
                    kind: MentionKind::Named,
                    entity_id: None,
                    raw_types: vec![],
                    gold_labels: None,
                })
                .collect(),
            topic: None,
        }
    }

    #[test]
    fn pipeline_fixture_each_heuristic_removes_known_labels() {
        // Hand-applied in order:
        //   sibling   m0 {person, political-figure, athlete} -> {person}             (-2)
        //   coarse    m1 {location, city, organization, company}, argmax org
        //             -> {organization, company}                                     (-2)
        //   min-count k=2: company appears once (m1) -> removed; person in m0, m2;
        //             organization in m1, m3.                                        (-1)
        let t = tax();
        let d = doc(4);
        let mapped = vec![
            set(&t, &["person", "person/political-figure", "person/athlete"]),
            set(&t, &["location", "location/city", "organization", "organization/company"]),
            set(&t, &["person"]),
            set(&t, &["organization"]),
        ];
        let mut table = BTreeMap::new();
        for (id, p) in [
            ("m0", [0.9, 0.05, 0.03, 0.02]),
            ("m1", [0.1, 0.3, 0.5, 0.1]),
            ("m2", [0.9, 0.05, 0.03, 0.02]),
            ("m3", [0.1, 0.1, 0.7, 0.1]),
        ] {
            table.insert(String::from(id), p);
        }
        let coarse = Fixed(table);
        let (out, stats) = apply_pipeline(&d, &mapped, &PruningConfig::ALL, Some(&coarse), &t).unwrap();
        assert_eq!(
            out,
            vec![
                set(&t, &["person"]),
                set(&t, &["organization"]),
                set(&t, &["person"]),
                set(&t, &["organization"]),
            ]
        );
        assert_eq!(stats.removed_sibling, 2);
        assert_eq!(stats.removed_coarse, 2);
        assert_eq!(stats.removed_min_count, 1);
        assert_eq!(stats.labels_in, 9);
        assert_eq!(stats.labels_out, 4);
        assert_eq!(stats.instances_out, 4);

        let (same, none_stats) = apply_pipeline(&d, &mapped, &PruningConfig::NONE, None, &t).unwrap();
        assert_eq!(same, mapped);
        assert_eq!(none_stats.labels_out, none_stats.labels_in);
    }

    #[test]
    fn pipeline_requires_coarse_model_when_enabled() {
        let t = tax();
        let d = doc(1);
        let mapped = vec![set(&t, &["person"])];
        assert!(apply_pipeline(&d, &mapped, &PruningConfig::ALL, None, &t).is_err());
        assert!(apply_pipeline(&d, &[], &PruningConfig::NONE, None, &t).is_err());
    }

    fn closed_sets() -> impl Strategy<Value = Vec<LabelSet>> {
        let t = tax();
        let n = t.len();
        prop::collection::vec(prop::collection::btree_set(0..n as u32, 0..5), 1..8).prop_map(move |sets| {
            sets.into_iter()
                .map(|s| t.closure(&s.into_iter().map(LabelId).collect()).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn heuristics_are_contractive_and_closed(sets in closed_sets(), k in 1usize..4, winner in 0usize..4) {
            let t = tax();
            let mut dist = [0.1; 4];
            dist[winner] = 0.7;
            for s in &sets {
                let sib = prune_sibling(s, &t).unwrap();
                prop_assert!(sib.is_subset(s));
                prop_assert!(t.is_closed(&sib));
                prop_assert_eq!(prune_sibling(&sib, &t).unwrap(), sib);
                let coarse = prune_coarse(s, &dist, &t).unwrap();
                prop_assert!(coarse.is_subset(s));
                prop_assert!(t.is_closed(&coarse));
                let tops: LabelSet = coarse.iter().map(|&l| t.top_level(l).unwrap()).collect();
                prop_assert!(tops.len() <= 1);
            }
            let mc = prune_min_count(&sets, k, &t).unwrap();
            for (a, b) in mc.iter().zip(&sets) {
                prop_assert!(a.is_subset(b));
                prop_assert!(t.is_closed(a));
            }
            prop_assert_eq!(prune_min_count(&sets, 1, &t).unwrap(), sets);
        }
    }
}
