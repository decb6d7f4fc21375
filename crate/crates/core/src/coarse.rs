//! Four-way softmax classifier over the coarse types, used to veto
//! distant-supervision labels from the wrong top-level subtree.

use alloc::vec::Vec;

use crate::corpus::{Document, Mention};
use crate::error::{Error, Result};
use crate::features::{extract_features, ClusterMap, FeatureConfig, FeatureDictionary, SparseVector, TopicModel};
use crate::linear::{train_softmax, SoftmaxWeights};
use crate::optim::OptimizerConfig;
use crate::pruning::{CoarseDistribution, CoarsePredictor};
use crate::taxonomy::{LabelId, Taxonomy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoarseClass {
    Person,
    Location,
    Organization,
    Other,
}

impl CoarseClass {
    /// Fixed class order; also the argmax tie-break order.
    pub const ALL: [CoarseClass; 4] = [
        CoarseClass::Person,
        CoarseClass::Location,
        CoarseClass::Organization,
        CoarseClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseClass::Person => "person",
            CoarseClass::Location => "location",
            CoarseClass::Organization => "organization",
            CoarseClass::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str() == name)
    }

    /// Coarse class of a taxonomy label, from its depth-1 ancestor's name.
    pub fn of_label(taxonomy: &Taxonomy, label: LabelId) -> Result<Option<Self>> {
        let top = taxonomy.top_level(label)?;
        Ok(Self::from_name(taxonomy.path(top)))
    }

    /// Highest-probability class; ties go to the earlier class.
    pub fn argmax(distribution: &CoarseDistribution) -> Self {
        let mut best = 0;
        for k in 1..4 {
            if distribution[k] > distribution[best] {
                best = k;
            }
        }
        Self::ALL[best]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseModel {
    pub dictionary: FeatureDictionary,
    pub weights: SoftmaxWeights,
    pub l2: f64,
}

impl CoarseModel {
    /// A model with zero weights over an empty dictionary.
    pub fn zeros() -> Self {
        CoarseModel {
            dictionary: FeatureDictionary::new(),
            weights: SoftmaxWeights::zeros(4),
            l2: 1.0,
        }
    }
}

/// Trains the coarse classifier. Every class needs at least one instance.
pub fn train_coarse(
    dictionary: FeatureDictionary,
    instances: &[(SparseVector, CoarseClass)],
    l2: f64,
    config: &OptimizerConfig,
) -> Result<CoarseModel> {
    for class in CoarseClass::ALL {
        if !instances.iter().any(|(_, c)| *c == class) {
            return Err(Error::MissingClass(class.as_str().into()));
        }
    }
    let data: Vec<(&SparseVector, usize)> = instances.iter().map(|(x, c)| (x, c.index())).collect();
    let trained = train_softmax(&data, 4, l2, config)?;
    let mut dictionary = dictionary;
    dictionary.freeze();
    Ok(CoarseModel {
        dictionary,
        weights: trained.model,
        l2,
    })
}

pub fn predict_coarse(model: &CoarseModel, x: &SparseVector) -> CoarseDistribution {
    let p = model.weights.probabilities(x);
    let mut out = [0.0; 4];
    out.copy_from_slice(&p[..4]);
    out
}

/// Coarse model bundled with the resources needed to featurize a mention.
pub struct CoarseTagger<'a> {
    pub model: &'a CoarseModel,
    pub clusters: &'a ClusterMap,
    pub topics: Option<&'a TopicModel>,
    pub features: FeatureConfig,
}

impl CoarsePredictor for CoarseTagger<'_> {
    fn coarse_distribution(&self, document: &Document, mention: &Mention) -> Result<CoarseDistribution> {
        let topic = document.topic.or_else(|| self.topics.map(|t| t.predict(document)));
        let feats = extract_features(mention, document, self.clusters, topic, &self.features)?;
        Ok(predict_coarse(self.model, &self.model.dictionary.encode(&feats)))
    }
}

/// Gold coarse class of a mention from its closed gold labels: the class of the
/// single top-level gold label. Mentions with zero or several top-level gold
/// labels have none.
pub fn gold_coarse_class(taxonomy: &Taxonomy, mention: &Mention) -> Result<Option<CoarseClass>> {
    let Some(gold) = &mention.gold_labels else {
        return Ok(None);
    };
    let mut tops = gold.iter().filter(|&&l| taxonomy.depth(l) == Ok(1));
    let (Some(&first), None) = (tops.next(), tops.next()) else {
        return Ok(None);
    };
    CoarseClass::of_label(taxonomy, first)
}
