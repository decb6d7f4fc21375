//! Local (one binary logistic model per label) and flat (one softmax over all
//! labels) classifiers.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::inference::LabelProbabilities;
use crate::linear::{train_binary_logistic, train_softmax, BinaryWeights, SoftmaxWeights};
use crate::optim::OptimizerConfig;
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

/// Bias of the constant model emitted for labels without positive examples.
pub const ABSENT_LABEL_BIAS: f64 = -30.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingInstance {
    pub x: SparseVector,
    /// Ancestor-closed labels.
    pub labels: LabelSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NegativeStrategy {
    /// Every instance that is not a positive.
    All,
    /// Non-positives carrying a sibling of the label or a sibling's descendant.
    Sibling,
    /// Non-positives carrying some other label at the same depth.
    Depth,
}

impl NegativeStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            NegativeStrategy::All => "all",
            NegativeStrategy::Sibling => "sibling",
            NegativeStrategy::Depth => "depth",
        }
    }
}

impl FromStr for NegativeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(NegativeStrategy::All),
            "sibling" => Ok(NegativeStrategy::Sibling),
            "depth" => Ok(NegativeStrategy::Depth),
            other => Err(Error::InvalidParameter(alloc::format!("unknown negative strategy `{other}`"))),
        }
    }
}

impl fmt::Display for NegativeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Indices of instances positive for `label`. Closure makes instances of any
/// descendant positive as well.
pub fn positives_for(label: LabelId, instances: &[TrainingInstance]) -> Vec<usize> {
    instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| inst.labels.contains(&label))
        .map(|(i, _)| i)
        .collect()
}

/// Indices of negatives for `label` under `strategy`.
pub fn negatives_for(
    label: LabelId,
    strategy: NegativeStrategy,
    instances: &[TrainingInstance],
    taxonomy: &Taxonomy,
) -> Result<Vec<usize>> {
    let depth = taxonomy.depth(label)?;
    let rivals: LabelSet = match strategy {
        NegativeStrategy::All => LabelSet::new(),
        NegativeStrategy::Sibling => {
            let mut rivals = LabelSet::new();
            for s in taxonomy.siblings(label)? {
                rivals.insert(s);
                rivals.extend(taxonomy.descendants(s)?);
            }
            rivals
        }
        NegativeStrategy::Depth => taxonomy
            .ids()
            .filter(|&l| l != label && (taxonomy.depth(l) == Ok(depth)))
            .collect(),
    };
    Ok(instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| !inst.labels.contains(&label))
        .filter(|(_, inst)| strategy == NegativeStrategy::All || inst.labels.iter().any(|l| rivals.contains(l)))
        .map(|(i, _)| i)
        .collect())
}

/// Outcome of training one label's binary model.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTraining {
    pub model: BinaryWeights,
    pub positives: usize,
    pub negatives: usize,
    pub status: LabelStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelStatus {
    Trained,
    /// No positive example; the model is a constant near-zero probability.
    NoPositives,
    /// The strategy produced no negatives, so every non-positive was used.
    FellBackToAll,
    /// Every instance is positive; constant model at the smoothed base rate.
    NoNegatives,
}

/// Trains the binary model of a single label.
pub fn train_label(
    label: LabelId,
    instances: &[TrainingInstance],
    taxonomy: &Taxonomy,
    strategy: NegativeStrategy,
    l2: f64,
    config: &OptimizerConfig,
) -> Result<LabelTraining> {
    let pos = positives_for(label, instances);
    if pos.is_empty() {
        return Ok(LabelTraining {
            model: BinaryWeights::constant(ABSENT_LABEL_BIAS),
            positives: 0,
            negatives: 0,
            status: LabelStatus::NoPositives,
        });
    }
    let mut status = LabelStatus::Trained;
    let mut neg = negatives_for(label, strategy, instances, taxonomy)?;
    if neg.is_empty() && strategy != NegativeStrategy::All {
        neg = negatives_for(label, NegativeStrategy::All, instances, taxonomy)?;
        status = LabelStatus::FellBackToAll;
    }
    if neg.is_empty() {
        let rate = (pos.len() as f64 + 1.0) / (pos.len() as f64 + 2.0);
        return Ok(LabelTraining {
            model: BinaryWeights::constant(crate::math::ln(rate / (1.0 - rate))),
            positives: pos.len(),
            negatives: 0,
            status: LabelStatus::NoNegatives,
        });
    }
    let pos_x: Vec<&SparseVector> = pos.iter().map(|&i| &instances[i].x).collect();
    let neg_x: Vec<&SparseVector> = neg.iter().map(|&i| &instances[i].x).collect();
    let trained = train_binary_logistic(&pos_x, &neg_x, l2, config)
        .map_err(|e| match e {
            Error::DegenerateLabel(why) => Error::DegenerateLabel(alloc::format!("{}: {why}", taxonomy.path(label))),
            other => other,
        })?;
    Ok(LabelTraining {
        model: trained.model,
        positives: pos.len(),
        negatives: neg.len(),
        status,
    })
}

/// Anything that maps a feature vector to per-label probabilities.
pub trait LabelScorer {
    fn predict_probs(&self, x: &SparseVector) -> LabelProbabilities;
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalModelSet {
    /// Indexed by label id.
    pub models: Vec<BinaryWeights>,
    pub strategy: NegativeStrategy,
    pub l2: f64,
    /// Labels whose model is not a regular fit, with the reason.
    pub degenerate: Vec<(LabelId, LabelStatus)>,
}

impl LocalModelSet {
    /// Assembles per-label results in label order.
    pub fn from_trainings(trainings: Vec<LabelTraining>, strategy: NegativeStrategy, l2: f64) -> Self {
        let degenerate = trainings
            .iter()
            .enumerate()
            .filter(|(_, t)| t.status != LabelStatus::Trained)
            .map(|(i, t)| (LabelId(i as u32), t.status))
            .collect();
        LocalModelSet {
            models: trainings.into_iter().map(|t| t.model).collect(),
            strategy,
            l2,
            degenerate,
        }
    }

    /// All-zero weights and biases; every label at probability 0.5.
    pub fn zeros(labels: usize, strategy: NegativeStrategy, l2: f64) -> Self {
        LocalModelSet {
            models: vec![BinaryWeights::default(); labels],
            strategy,
            l2,
            degenerate: Vec::new(),
        }
    }
}

impl LabelScorer for LocalModelSet {
    fn predict_probs(&self, x: &SparseVector) -> LabelProbabilities {
        LabelProbabilities::from_vec_unchecked(self.models.iter().map(|m| m.probability(x)).collect())
    }
}

/// Trains one binary model per taxonomy label, sequentially in label order.
pub fn train_local(
    instances: &[TrainingInstance],
    taxonomy: &Taxonomy,
    strategy: NegativeStrategy,
    l2: f64,
    config: &OptimizerConfig,
) -> Result<LocalModelSet> {
    let trainings = taxonomy
        .ids()
        .map(|label| train_label(label, instances, taxonomy, strategy, l2, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalModelSet::from_trainings(trainings, strategy, l2))
}

/// One single-label instance per (instance, label) pair.
pub fn expand_multilabel(instances: &[TrainingInstance]) -> Vec<(&SparseVector, LabelId)> {
    instances
        .iter()
        .flat_map(|inst| inst.labels.iter().map(move |&l| (&inst.x, l)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatModel {
    pub weights: SoftmaxWeights,
    pub l2: f64,
}

impl FlatModel {
    pub fn zeros(labels: usize, l2: f64) -> Self {
        FlatModel {
            weights: SoftmaxWeights::zeros(labels),
            l2,
        }
    }
}

impl LabelScorer for FlatModel {
    fn predict_probs(&self, x: &SparseVector) -> LabelProbabilities {
        LabelProbabilities::from_vec_unchecked(self.weights.probabilities(x))
    }
}

/// Softmax over every taxonomy label on the multi-label expansion.
pub fn train_flat(
    instances: &[TrainingInstance],
    taxonomy: &Taxonomy,
    l2: f64,
    config: &OptimizerConfig,
) -> Result<FlatModel> {
    let expanded: Vec<(&SparseVector, usize)> = expand_multilabel(instances)
        .into_iter()
        .map(|(x, l)| (x, l.index()))
        .collect();
    if expanded.is_empty() {
        return Err(Error::InvalidParameter("flat training needs at least one labeled instance".to_string()));
    }
    let trained = train_softmax(&expanded, taxonomy.len(), l2, config)?;
    Ok(FlatModel {
        weights: trained.model,
        l2,
    })
}
