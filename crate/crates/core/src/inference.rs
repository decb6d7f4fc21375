//! Turning per-label probabilities into label assignments.
//!
//! * independent: threshold each label on its own;
//! * conditional: multiply each label's probability by those of all its ancestors;
//! * marginal: put a distribution on the root-to-node paths of the taxonomy
//!   and read off each label's marginal.
//!
//! All strategies assign `{t : refined(t) > θ}`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln, log_sum_exp};
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

/// One probability per taxonomy label, indexed by label id.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelProbabilities(Vec<f64>);

impl LabelProbabilities {
    pub fn new(values: Vec<f64>, taxonomy: &Taxonomy) -> Result<Self> {
        if values.len() != taxonomy.len() {
            return Err(Error::InvalidParameter(format!(
                "{} probabilities for a taxonomy of {} labels",
                values.len(),
                taxonomy.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("probability {v} outside [0, 1]")));
        }
        Ok(LabelProbabilities(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        LabelProbabilities(values)
    }

    pub fn get(&self, label: LabelId) -> f64 {
        self.0[label.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InferenceStrategy {
    Independent,
    Conditional,
    Marginal,
}

impl InferenceStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            InferenceStrategy::Independent => "independent",
            InferenceStrategy::Conditional => "conditional",
            InferenceStrategy::Marginal => "marginal",
        }
    }
}

impl core::str::FromStr for InferenceStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(InferenceStrategy::Independent),
            "conditional" => Ok(InferenceStrategy::Conditional),
            "marginal" => Ok(InferenceStrategy::Marginal),
            other => Err(Error::InvalidParameter(format!("unknown inference strategy `{other}`"))),
        }
    }
}

/// How a path configuration is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathScore {
    /// `∏_{t∈c} p(t) · ∏_{t∉c} (1 − p(t))`.
    Bernoulli,
    /// `∏_{t∈c} p(t)` only.
    ActiveOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MarginalOptions {
    pub score: PathScore,
    /// Also admit the root-only configuration (no label assigned).
    pub include_empty: bool,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        MarginalOptions {
            score: PathScore::Bernoulli,
            include_empty: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub assigned: LabelSet,
    pub refined: LabelProbabilities,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")))
    }
}

/// Labels whose refined probability is strictly above the threshold.
pub fn assign(refined: &LabelProbabilities, threshold: f64) -> LabelSet {
    refined
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| LabelId(i as u32))
        .collect()
}

pub fn infer_independent(p: &LabelProbabilities, threshold: f64) -> Result<Prediction> {
    check_threshold(threshold)?;
    Ok(Prediction {
        assigned: assign(p, threshold),
        refined: p.clone(),
    })
}

/// Product of a label's probability and those of all its ancestors.
pub fn refine_conditional(p: &LabelProbabilities, taxonomy: &Taxonomy) -> Result<LabelProbabilities> {
    check_len(p, taxonomy)?;
    let mut refined = vec![0.0; taxonomy.len()];
    // Parents precede children in id order.
    for id in taxonomy.ids() {
        refined[id.index()] = match taxonomy.parent(id)? {
            Some(parent) => refined[parent.index()] * p.get(id),
            None => p.get(id),
        };
    }
    Ok(LabelProbabilities(refined))
}

pub fn infer_conditional(p: &LabelProbabilities, taxonomy: &Taxonomy, threshold: f64) -> Result<Prediction> {
    check_threshold(threshold)?;
    let refined = refine_conditional(p, taxonomy)?;
    Ok(Prediction {
        assigned: assign(&refined, threshold),
        refined,
    })
}

fn check_len(p: &LabelProbabilities, taxonomy: &Taxonomy) -> Result<()> {
    if p.len() == taxonomy.len() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{} probabilities for a taxonomy of {} labels",
            p.len(),
            taxonomy.len()
        )))
    }
}

/// A log-domain factor that tracks exact zeros separately.
#[derive(Clone, Copy, Debug, Default)]
struct LogFactor {
    zeros: u32,
    log: f64,
}

impl LogFactor {
    fn of(v: f64) -> Self {
        if v == 0.0 {
            LogFactor { zeros: 1, log: 0.0 }
        } else {
            LogFactor { zeros: 0, log: ln(v) }
        }
    }

    fn times(self, other: Self) -> Self {
        LogFactor {
            zeros: self.zeros + other.zeros,
            log: self.log + other.log,
        }
    }

    fn over(self, other: Self) -> Self {
        LogFactor {
            zeros: self.zeros - other.zeros,
            log: self.log - other.log,
        }
    }

    fn ln(self) -> f64 {
        if self.zeros > 0 {
            f64::NEG_INFINITY
        } else {
            self.log
        }
    }
}

/// Marginal probability of every label under the path distribution, computed
/// in one pass over the tree in log space.
pub fn refine_marginal(
    p: &LabelProbabilities,
    taxonomy: &Taxonomy,
    options: &MarginalOptions,
) -> Result<LabelProbabilities> {
    check_len(p, taxonomy)?;
    let n = taxonomy.len();
    // Product of (1 - p) over every label; divided back out along each path.
    let all_off = match options.score {
        PathScore::Bernoulli => p
            .values()
            .iter()
            .fold(LogFactor::default(), |acc, &v| acc.times(LogFactor::of(1.0 - v))),
        PathScore::ActiveOnly => LogFactor::default(),
    };
    let mut on_path = vec![LogFactor::default(); n];
    let mut off_path = vec![LogFactor::default(); n];
    let mut log_scores = Vec::with_capacity(n + 1);
    for id in taxonomy.ids() {
        let (on, off) = match taxonomy.parent(id)? {
            Some(parent) => (on_path[parent.index()], off_path[parent.index()]),
            None => (LogFactor::default(), LogFactor::default()),
        };
        let v = p.get(id);
        on_path[id.index()] = on.times(LogFactor::of(v));
        off_path[id.index()] = off.times(LogFactor::of(1.0 - v));
        let score = match options.score {
            PathScore::Bernoulli => on_path[id.index()].times(all_off.over(off_path[id.index()])),
            PathScore::ActiveOnly => on_path[id.index()],
        };
        log_scores.push(score.ln());
    }
    if options.include_empty {
        log_scores.push(all_off.ln());
    }
    let log_z = log_sum_exp(&log_scores);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::AllConfigurationsImpossible);
    }
    let mut refined: Vec<f64> = log_scores[..n].iter().map(|&s| exp(s - log_z)).collect();
    // Each label's marginal is the mass of the paths ending in its subtree.
    for id in taxonomy.ids().rev() {
        if let Some(parent) = taxonomy.parent(id)? {
            refined[parent.index()] += refined[id.index()];
        }
    }
    for v in refined.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(LabelProbabilities(refined))
}

pub fn infer_marginal(p: &LabelProbabilities, taxonomy: &Taxonomy, threshold: f64) -> Result<Prediction> {
    infer_marginal_with(p, taxonomy, threshold, &MarginalOptions::default())
}

pub fn infer_marginal_with(
    p: &LabelProbabilities,
    taxonomy: &Taxonomy,
    threshold: f64,
    options: &MarginalOptions,
) -> Result<Prediction> {
    check_threshold(threshold)?;
    let refined = refine_marginal(p, taxonomy, options)?;
    Ok(Prediction {
        assigned: assign(&refined, threshold),
        refined,
    })
}

/// Refined probabilities under `strategy`.
pub fn refine(p: &LabelProbabilities, taxonomy: &Taxonomy, strategy: InferenceStrategy) -> Result<LabelProbabilities> {
    match strategy {
        InferenceStrategy::Independent => {
            check_len(p, taxonomy)?;
            Ok(p.clone())
        }
        InferenceStrategy::Conditional => refine_conditional(p, taxonomy),
        InferenceStrategy::Marginal => refine_marginal(p, taxonomy, &MarginalOptions::default()),
    }
}

pub fn infer(p: &LabelProbabilities, taxonomy: &Taxonomy, strategy: InferenceStrategy, threshold: f64) -> Result<Prediction> {
    check_threshold(threshold)?;
    let refined = refine(p, taxonomy, strategy)?;
    Ok(Prediction {
        assigned: assign(&refined, threshold),
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probs(tax: &Taxonomy, pairs: &[(&str, f64)]) -> LabelProbabilities {
        let mut v = vec![0.0; tax.len()];
        for (path, p) in pairs {
            v[tax.id(path).unwrap().index()] = *p;
        }
        LabelProbabilities::new(v, tax).unwrap()
    }

    #[test]
    fn independent_examples() {
        let t = Taxonomy::parse("person/artist\n").unwrap();
        let p = probs(&t, &[("person", 0.4), ("person/artist", 0.9)]);
        let pred = infer_independent(&p, 0.5).unwrap();
        assert_eq!(pred.assigned, [t.id("person/artist").unwrap()].into_iter().collect());
        assert_eq!(pred.refined, p);
        assert!(infer_independent(&p, 1.0).unwrap().assigned.is_empty());
        assert_eq!(infer_independent(&p, 0.0).unwrap().assigned.len(), 2);
        assert!(infer_independent(&p, 1.5).is_err());
    }

    #[test]
    fn conditional_examples() {
        let t = Taxonomy::parse("person/artist/actor\nlocation\norganization\nother\n").unwrap();
        let p = probs(
            &t,
            &[
                ("person", 0.9),
                ("person/artist", 0.6),
                ("person/artist/actor", 0.5),
                ("location", 0.3),
                ("organization", 0.2),
                ("other", 0.1),
            ],
        );
        let r = refine_conditional(&p, &t).unwrap();
        assert!((r.get(t.id("person/artist").unwrap()) - 0.54).abs() < 1e-15);
        for top in t.roots() {
            assert_eq!(r.get(*top), p.get(*top));
        }
        let p = probs(&t, &[("person", 0.9), ("person/artist", 0.8), ("person/artist/actor", 0.5)]);
        let r = refine_conditional(&p, &t).unwrap();
        assert!((r.get(t.id("person/artist/actor").unwrap()) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn marginal_three_configuration_example() {
        // Configurations {A}, {A, A/C}, {B}; hand enumeration:
        //   {A}:     0.8 * 0.4 * 0.7 = 0.224
        //   {A,A/C}: 0.8 * 0.6 * 0.7 = 0.336
        //   {B}:     0.2 * 0.4 * 0.3 = 0.024
        let t = Taxonomy::parse("A/C\nB\n").unwrap();
        let p = probs(&t, &[("A", 0.8), ("A/C", 0.6), ("B", 0.3)]);
        let r = refine_marginal(&p, &t, &MarginalOptions::default()).unwrap();
        let z = 0.224 + 0.336 + 0.024;
        assert!((r.get(t.id("A").unwrap()) - 0.56 / z).abs() < 1e-12);
        assert!((r.get(t.id("A/C").unwrap()) - 0.336 / z).abs() < 1e-12);
        assert!((r.get(t.id("B").unwrap()) - 0.024 / z).abs() < 1e-12);
        assert!((r.get(t.id("A").unwrap()) - 0.9589).abs() < 1e-4);
        assert!((r.get(t.id("A/C").unwrap()) - 0.5753).abs() < 1e-4);
        assert!((r.get(t.id("B").unwrap()) - 0.0411).abs() < 1e-4);
    }

    #[test]
    fn marginal_single_label_taxonomy_is_forced() {
        let t = Taxonomy::parse("A\n").unwrap();
        for v in [0.01, 0.5, 0.99] {
            let r = refine_marginal(&probs(&t, &[("A", v)]), &t, &MarginalOptions::default()).unwrap();
            assert!((r.get(LabelId(0)) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn marginal_symmetry() {
        let t = Taxonomy::parse("a/x\na/y\nb/x\nb/y\n").unwrap();
        let p = LabelProbabilities::new(vec![0.6; t.len()], &t).unwrap();
        let r = refine_marginal(&p, &t, &MarginalOptions::default()).unwrap();
        let a = r.get(t.id("a").unwrap());
        assert!((a - r.get(t.id("b").unwrap())).abs() < 1e-15);
        let ax = r.get(t.id("a/x").unwrap());
        for leaf in ["a/y", "b/x", "b/y"] {
            assert!((ax - r.get(t.id(leaf).unwrap())).abs() < 1e-15);
        }
    }

    #[test]
    fn impossible_configurations() {
        // Every path contains a certain-zero label or excludes a certain-one label.
        let t = Taxonomy::parse("a\nb\n").unwrap();
        let p = probs(&t, &[("a", 1.0), ("b", 1.0)]);
        assert_eq!(
            refine_marginal(&p, &t, &MarginalOptions::default()),
            Err(Error::AllConfigurationsImpossible)
        );
        // Active-only scoring with everything at zero.
        let p = probs(&t, &[("a", 0.0), ("b", 0.0)]);
        let opts = MarginalOptions {
            score: PathScore::ActiveOnly,
            include_empty: false,
        };
        assert_eq!(refine_marginal(&p, &t, &opts), Err(Error::AllConfigurationsImpossible));
        // With the empty configuration admitted, active-only always has mass 1 there.
        let opts = MarginalOptions {
            score: PathScore::ActiveOnly,
            include_empty: true,
        };
        let r = refine_marginal(&p, &t, &opts).unwrap();
        assert_eq!(r.values(), &[0.0, 0.0]);
    }

    #[test]
    fn certain_labels_are_handled_exactly() {
        let t = Taxonomy::parse("a/b\nc\n").unwrap();
        let p = probs(&t, &[("a", 1.0), ("a/b", 0.5), ("c", 0.0)]);
        let r = refine_marginal(&p, &t, &MarginalOptions::default()).unwrap();
        assert!((r.get(t.id("a").unwrap()) - 1.0).abs() < 1e-15);
        assert!((r.get(t.id("a/b").unwrap()) - 0.5).abs() < 1e-15);
        assert_eq!(r.get(t.id("c").unwrap()), 0.0);
    }

    fn arb_case() -> impl Strategy<Value = (Taxonomy, Vec<f64>)> {
        let segment = prop::sample::select(vec!["a", "b", "c"]);
        prop::collection::vec(prop::collection::vec(segment, 1..=3), 1..10)
            .prop_map(|paths| {
                let joined: Vec<alloc::string::String> = paths.iter().map(|p| p.join("/")).collect();
                Taxonomy::from_paths(joined.iter().map(|s| s.as_str())).unwrap()
            })
            .prop_flat_map(|t| {
                let n = t.len();
                (Just(t), prop::collection::vec(0.001f64..0.999, n))
            })
    }

    proptest! {
        #[test]
        fn hierarchical_strategies_are_monotone_and_closed((t, v) in arb_case(), th1 in 0.0f64..1.0, th2 in 0.0f64..1.0) {
            let p = LabelProbabilities::new(v, &t).unwrap();
            let (lo, hi) = if th1 <= th2 { (th1, th2) } else { (th2, th1) };
            for strategy in [InferenceStrategy::Conditional, InferenceStrategy::Marginal] {
                let r = refine(&p, &t, strategy).unwrap();
                for id in t.ids() {
                    if let Some(parent) = t.parent(id).unwrap() {
                        prop_assert!(r.get(id) <= r.get(parent) + 1e-12);
                    }
                }
                let a_lo = infer(&p, &t, strategy, lo).unwrap().assigned;
                let a_hi = infer(&p, &t, strategy, hi).unwrap().assigned;
                prop_assert!(t.is_closed(&a_hi));
                prop_assert!(a_hi.is_subset(&a_lo));
            }
            let a_lo = infer(&p, &t, InferenceStrategy::Independent, lo).unwrap().assigned;
            let a_hi = infer(&p, &t, InferenceStrategy::Independent, hi).unwrap().assigned;
            prop_assert!(a_hi.is_subset(&a_lo));
            let r = refine_marginal(&p, &t, &MarginalOptions::default()).unwrap();
            let top: f64 = t.roots().iter().map(|&id| r.get(id)).sum();
            prop_assert!((top - 1.0).abs() < 1e-9);
        }
    }
}
