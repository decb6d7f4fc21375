//! Micro-averaged precision, recall and F1 over (mention, label) pairs, the
//! precision/recall curve and its area, and dev-set threshold selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::AddAssign;

use crate::corpus::MentionKind;
use crate::error::{Error, Result};
use crate::inference::LabelProbabilities;
use crate::taxonomy::{LabelSet, Taxonomy};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldMention {
    pub mention: String,
    pub kind: MentionKind,
    /// Closed before scoring.
    pub labels: LabelSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictedMention {
    pub mention: String,
    pub labels: LabelSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredMention {
    pub mention: String,
    pub refined: LabelProbabilities,
}

/// Which mention kinds take part in scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KindFilter {
    pub named: bool,
    pub nominal: bool,
    pub pronominal: bool,
}

impl KindFilter {
    pub const NAMED_AND_NOMINAL: KindFilter = KindFilter {
        named: true,
        nominal: true,
        pronominal: false,
    };
    pub const ALL: KindFilter = KindFilter {
        named: true,
        nominal: true,
        pronominal: true,
    };

    pub fn admits(&self, kind: MentionKind) -> bool {
        match kind {
            MentionKind::Named => self.named,
            MentionKind::Nominal => self.nominal,
            MentionKind::Pronominal => self.pronominal,
        }
    }
}

impl Default for KindFilter {
    fn default() -> Self {
        Self::NAMED_AND_NOMINAL
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn of(pred: &LabelSet, gold: &LabelSet) -> Self {
        Counts {
            correct: pred.intersection(gold).count(),
            predicted: pred.len(),
            gold: gold.len(),
        }
    }

    pub fn prf(&self) -> Prf {
        let precision = ratio(self.correct, self.predicted);
        let recall = ratio(self.correct, self.gold);
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
            precision_undefined: self.predicted == 0,
            recall_undefined: self.gold == 0,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Self) {
        self.correct += rhs.correct;
        self.predicted += rhs.predicted;
        self.gold += rhs.gold;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1 in [0, 1]. An empty denominator yields 0 and sets
/// the matching `*_undefined` flag so callers can warn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    pub depth: usize,
    pub counts: Counts,
    pub prf: Prf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mentions: usize,
    pub counts: Counts,
    pub prf: Prf,
    /// One entry per depth from 1 to the taxonomy's maximum depth.
    pub per_level: Vec<LevelReport>,
}

/// Pairs every admitted gold mention with its prediction by mention id. Both
/// streams must cover the same mentions.
fn align<'a, P>(
    preds: &'a [P],
    id_of: impl Fn(&P) -> &str,
    gold: &'a [GoldMention],
    filter: &KindFilter,
) -> Result<Vec<(&'a P, &'a GoldMention)>> {
    let mut by_id: BTreeMap<&str, &P> = BTreeMap::new();
    for p in preds {
        if by_id.insert(id_of(p), p).is_some() {
            return Err(Error::MentionMismatch(id_of(p).into()));
        }
    }
    let mut out = Vec::with_capacity(gold.len());
    let mut seen = 0;
    for g in gold {
        let Some(&p) = by_id.get(g.mention.as_str()) else {
            return Err(Error::MentionMismatch(g.mention.clone()));
        };
        seen += 1;
        if filter.admits(g.kind) {
            out.push((p, g));
        }
    }
    if seen != by_id.len() {
        let gold_ids: alloc::collections::BTreeSet<&str> = gold.iter().map(|g| g.mention.as_str()).collect();
        let extra = by_id.keys().find(|id| !gold_ids.contains(*id)).copied().unwrap_or_default();
        return Err(Error::MentionMismatch(extra.into()));
    }
    Ok(out)
}

fn restrict(labels: &LabelSet, depth: usize, taxonomy: &Taxonomy) -> LabelSet {
    labels
        .iter()
        .copied()
        .filter(|&l| taxonomy.depth(l) == Ok(depth))
        .collect()
}

/// Micro-averaged metrics overall and per depth.
pub fn micro_prf(
    preds: &[PredictedMention],
    gold: &[GoldMention],
    filter: &KindFilter,
    taxonomy: &Taxonomy,
) -> Result<EvalReport> {
    let pairs = align(preds, |p| p.mention.as_str(), gold, filter)?;
    let max_depth = taxonomy.max_depth();
    let mut counts = Counts::default();
    let mut levels = alloc::vec![Counts::default(); max_depth];
    for (p, g) in &pairs {
        let gold_closed = taxonomy.closure(&g.labels)?;
        counts += Counts::of(&p.labels, &gold_closed);
        for (d, level) in levels.iter_mut().enumerate() {
            let depth = d + 1;
            *level += Counts::of(&restrict(&p.labels, depth, taxonomy), &restrict(&gold_closed, depth, taxonomy));
        }
    }
    Ok(EvalReport {
        mentions: pairs.len(),
        counts,
        prf: counts.prf(),
        per_level: levels
            .into_iter()
            .enumerate()
            .map(|(d, counts)| LevelReport {
                depth: d + 1,
                counts,
                prf: counts.prf(),
            })
            .collect(),
    })
}

/// Micro metrics restricted to labels of exactly `depth` on both sides.
pub fn per_level_prf(
    preds: &[PredictedMention],
    gold: &[GoldMention],
    filter: &KindFilter,
    taxonomy: &Taxonomy,
    depth: usize,
) -> Result<Prf> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let pairs = align(preds, |p| p.mention.as_str(), gold, filter)?;
    let mut counts = Counts::default();
    for (p, g) in &pairs {
        let gold_closed = taxonomy.closure(&g.labels)?;
        counts += Counts::of(&restrict(&p.labels, depth, taxonomy), &restrict(&gold_closed, depth, taxonomy));
    }
    Ok(counts.prf())
}

/// Every (score, is-gold) pair over admitted mentions and all taxonomy labels,
/// plus the number of gold pairs.
fn scored_pairs(
    scored: &[ScoredMention],
    gold: &[GoldMention],
    filter: &KindFilter,
    taxonomy: &Taxonomy,
) -> Result<(Vec<(f64, bool)>, usize)> {
    let pairs = align(scored, |s| s.mention.as_str(), gold, filter)?;
    let mut out = Vec::with_capacity(pairs.len() * taxonomy.len());
    let mut positives = 0;
    for (s, g) in pairs {
        if s.refined.len() != taxonomy.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "mention `{}` has {} probabilities for {} labels",
                s.mention,
                s.refined.len(),
                taxonomy.len()
            )));
        }
        let gold_closed = taxonomy.closure(&g.labels)?;
        positives += gold_closed.len();
        for id in taxonomy.ids() {
            out.push((s.refined.get(id), gold_closed.contains(&id)));
        }
    }
    Ok((out, positives))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// Starts at recall 0, precision 1; then one point per distinct score, descending.
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

/// Micro precision/recall curve over all (mention, label) pairs and its area by
/// the trapezoid rule over recall. Tied scores enter the curve together.
pub fn pr_curve_auc(
    scored: &[ScoredMention],
    gold: &[GoldMention],
    filter: &KindFilter,
    taxonomy: &Taxonomy,
) -> Result<PrCurve> {
    let (mut pairs, positives) = scored_pairs(scored, gold, filter, taxonomy)?;
    if positives == 0 {
        return Err(Error::NoPositiveGold);
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = alloc::vec![CurvePoint {
        threshold: 1.0,
        recall: 0.0,
        precision: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let score = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == score {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(CurvePoint {
            threshold: score,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) / 2.0)
        .sum();
    Ok(PrCurve { points, auc })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
    /// No grid threshold produced any prediction.
    pub all_empty: bool,
}

/// Grid search over `{0, 1/steps, ..., 1}` for the threshold with the highest
/// micro F1 under the strict `p > θ` rule; ties go to the smallest threshold.
pub fn tune_threshold(
    scored: &[ScoredMention],
    gold: &[GoldMention],
    filter: &KindFilter,
    taxonomy: &Taxonomy,
    steps: u32,
) -> Result<ThresholdChoice> {
    if steps == 0 {
        return Err(Error::InvalidParameter("threshold grid needs at least one step".into()));
    }
    let (pairs, positives) = scored_pairs(scored, gold, filter, taxonomy)?;
    let mut best = ThresholdChoice {
        threshold: 0.0,
        f1: -1.0,
        all_empty: true,
    };
    for i in 0..=steps {
        let threshold = i as f64 / steps as f64;
        let mut counts = Counts {
            gold: positives,
            ..Counts::default()
        };
        for &(p, is_gold) in &pairs {
            if p > threshold {
                counts.predicted += 1;
                counts.correct += is_gold as usize;
            }
        }
        if counts.predicted > 0 {
            best.all_empty = false;
        }
        let f = counts.prf().f1;
        if f > best.f1 {
            best.f1 = f;
            best.threshold = threshold;
        }
    }
    Ok(best)
}
