//! Corpus-level glue: featurizing mentions, pruning training labels, training
//! the three model kinds and scoring documents.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use finetype_core::coarse::{gold_coarse_class, train_coarse, CoarseClass, CoarseModel, CoarseTagger};
use finetype_core::corpus::{map_raw_types, Document, Mention, Split, Topic, TypeMapping};
use finetype_core::evaluation::{GoldMention, PredictedMention, ScoredMention};
use finetype_core::features::{extract_features, ClusterMap, FeatureConfig, FeatureDictionary, SparseVector, TopicModel};
use finetype_core::inference::{assign, refine, InferenceStrategy, LabelProbabilities};
use finetype_core::models::{
    train_flat, train_label, FlatModel, LabelScorer, LocalModelSet, NegativeStrategy, TrainingInstance,
};
use finetype_core::optim::OptimizerConfig;
use finetype_core::pruning::{apply_pipeline, CoarsePredictor, PruningConfig, PruningStats};
use finetype_core::{LabelSet, Taxonomy};
use rayon::prelude::*;

use crate::formats::PredictionRecord;

/// Everything needed to turn a mention into feature strings.
#[derive(Clone, Copy)]
pub struct FeatureContext<'a> {
    pub clusters: &'a ClusterMap,
    pub topics: Option<&'a TopicModel>,
    pub config: FeatureConfig,
}

impl FeatureContext<'_> {
    /// The document's own topic, else the topic model's guess.
    pub fn topic(&self, doc: &Document) -> Option<Topic> {
        doc.topic.or_else(|| self.topics.map(|t| t.predict(doc)))
    }

    pub fn features(&self, doc: &Document, mention: &Mention) -> Result<Vec<String>> {
        Ok(extract_features(mention, doc, self.clusters, self.topic(doc), &self.config)?)
    }
}

/// Topic model trained on documents whose topic is known, from the document
/// itself or from `topic_file`. `None` when no document has a topic.
pub fn train_topic_model(docs: &[Document], topic_file: Option<&BTreeMap<String, Topic>>) -> Option<TopicModel> {
    let labeled: Vec<(&Document, Topic)> = docs
        .iter()
        .filter_map(|d| {
            d.topic
                .or_else(|| topic_file.and_then(|t| t.get(&d.id).copied()))
                .map(|t| (d, t))
        })
        .collect();
    (!labeled.is_empty()).then(|| TopicModel::train(labeled))
}

/// Sets each document's topic from `topic_file` where the document has none.
pub fn apply_topic_file(docs: &mut [Document], topic_file: &BTreeMap<String, Topic>) {
    for d in docs.iter_mut() {
        if d.topic.is_none() {
            d.topic = topic_file.get(&d.id).copied();
        }
    }
}

/// Training labels of a mention: its gold labels if present, otherwise its
/// mapped resolver types.
pub fn training_labels(
    mention: &Mention,
    mapping: Option<&TypeMapping>,
    taxonomy: &Taxonomy,
) -> Result<LabelSet> {
    if let Some(gold) = &mention.gold_labels {
        return Ok(taxonomy.closure(gold)?);
    }
    match mapping {
        Some(m) => Ok(map_raw_types(mention, m, taxonomy)?.labels),
        None => Ok(LabelSet::new()),
    }
}

pub struct PruneOutput {
    /// The input corpus with every training mention's gold labels replaced by
    /// its pruned distant-supervision labels.
    pub documents: Vec<Document>,
    pub stats: PruningStats,
    /// Resolver type ids without a mapping entry.
    pub unmapped: usize,
}

/// Maps and prunes the resolver types of every training-split mention.
pub fn prune_corpus(
    docs: &[Document],
    mapping: &TypeMapping,
    config: &PruningConfig,
    coarse: Option<&(dyn CoarsePredictor + Sync)>,
    taxonomy: &Taxonomy,
) -> Result<PruneOutput> {
    config.validate()?;
    if config.coarse && coarse.is_none() {
        bail!("coarse pruning needs a coarse model");
    }
    let results: Vec<Result<(Document, PruningStats, usize)>> = docs
        .par_iter()
        .map(|doc| {
            let mut doc = doc.clone();
            if doc.split != Split::Train {
                return Ok((doc, PruningStats::default(), 0));
            }
            let mut unmapped = 0;
            let mut mapped = Vec::with_capacity(doc.mentions.len());
            for m in &doc.mentions {
                let t = map_raw_types(m, mapping, taxonomy)?;
                unmapped += t.skipped;
                mapped.push(t.labels);
            }
            let (sets, stats) = apply_pipeline(&doc, &mapped, config, coarse.map(|c| c as &dyn CoarsePredictor), taxonomy)
                .with_context(|| format!("document `{}`", doc.id))?;
            for (m, s) in doc.mentions.iter_mut().zip(sets) {
                m.gold_labels = Some(s);
            }
            Ok((doc, stats, unmapped))
        })
        .collect();
    let mut out = PruneOutput {
        documents: Vec::with_capacity(docs.len()),
        stats: PruningStats::default(),
        unmapped: 0,
    };
    for r in results {
        let (doc, stats, unmapped) = r?;
        out.documents.push(doc);
        out.stats += stats;
        out.unmapped += unmapped;
    }
    Ok(out)
}

/// Featurizes mentions in parallel, then interns features in document order so
/// the dictionary does not depend on scheduling.
fn featurize<'d>(
    mentions: &[(&'d Document, &'d Mention)],
    ctx: &FeatureContext<'_>,
) -> Result<Vec<Vec<String>>> {
    mentions
        .par_iter()
        .map(|(d, m)| ctx.features(d, m).with_context(|| format!("document `{}` mention `{}`", d.id, m.id)))
        .collect()
}

/// Training instances from every `split` mention with a non-empty label set.
pub fn build_instances(
    docs: &[Document],
    split: Split,
    mapping: Option<&TypeMapping>,
    ctx: &FeatureContext<'_>,
    dictionary: &mut FeatureDictionary,
    taxonomy: &Taxonomy,
) -> Result<Vec<TrainingInstance>> {
    let mut selected = Vec::new();
    let mut labels = Vec::new();
    for d in docs.iter().filter(|d| d.split == split) {
        for m in &d.mentions {
            let l = training_labels(m, mapping, taxonomy)?;
            if !l.is_empty() {
                selected.push((d, m));
                labels.push(l);
            }
        }
    }
    let features = featurize(&selected, ctx)?;
    Ok(features
        .into_iter()
        .zip(labels)
        .map(|(f, labels)| TrainingInstance {
            x: dictionary.vectorize(&f),
            labels,
        })
        .collect())
}

/// Per-label local training, labels in parallel, results in label order.
pub fn train_local_parallel(
    instances: &[TrainingInstance],
    taxonomy: &Taxonomy,
    strategy: NegativeStrategy,
    l2: f64,
    config: &OptimizerConfig,
) -> Result<LocalModelSet> {
    let labels: Vec<_> = taxonomy.ids().collect();
    let trainings = labels
        .par_iter()
        .map(|&label| train_label(label, instances, taxonomy, strategy, l2, config))
        .collect::<finetype_core::Result<Vec<_>>>()?;
    Ok(LocalModelSet::from_trainings(trainings, strategy, l2))
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Local(LocalModelSet),
    Flat(FlatModel),
    Coarse(CoarseModel),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Local(_) => "local",
            TrainedModel::Flat(_) => "flat",
            TrainedModel::Coarse(_) => "coarse",
        }
    }

    pub fn scorer(&self) -> Option<&(dyn LabelScorer + Sync)> {
        match self {
            TrainedModel::Local(m) => Some(m),
            TrainedModel::Flat(m) => Some(m),
            TrainedModel::Coarse(_) => None,
        }
    }
}

/// A trained model with what is needed to featurize new mentions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub dictionary: FeatureDictionary,
    pub features: FeatureConfig,
    pub topics: Option<TopicModel>,
    pub model: TrainedModel,
    pub l2: f64,
    pub optimizer: OptimizerConfig,
    pub instances: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    Local(NegativeStrategy),
    Flat,
    Coarse,
}

pub struct TrainOptions<'a> {
    pub kind: ModelKind,
    pub l2: f64,
    pub optimizer: OptimizerConfig,
    pub features: FeatureConfig,
    pub mapping: Option<&'a TypeMapping>,
    pub topic_file: Option<&'a BTreeMap<String, Topic>>,
}

/// Trains a model on the training split of `docs`.
pub fn train(docs: &[Document], clusters: &ClusterMap, options: &TrainOptions<'_>, taxonomy: &Taxonomy) -> Result<ModelBundle> {
    if !(options.l2 > 0.0 && options.l2.is_finite()) {
        bail!("l2 must be a positive finite number");
    }
    let topics = train_topic_model(docs, options.topic_file);
    let ctx = FeatureContext {
        clusters,
        topics: topics.as_ref(),
        config: options.features,
    };
    let mut dictionary = FeatureDictionary::new();
    let (model, instances) = match options.kind {
        ModelKind::Coarse => {
            let mut selected = Vec::new();
            let mut classes = Vec::new();
            for d in docs.iter().filter(|d| d.split == Split::Train) {
                for m in &d.mentions {
                    if let Some(c) = gold_coarse_class(taxonomy, m)? {
                        selected.push((d, m));
                        classes.push(c);
                    }
                }
            }
            let features = featurize(&selected, &ctx)?;
            let data: Vec<(SparseVector, CoarseClass)> = features
                .into_iter()
                .zip(classes)
                .map(|(f, c)| (dictionary.vectorize(&f), c))
                .collect();
            let n = data.len();
            let model = train_coarse(dictionary.clone(), &data, options.l2, &options.optimizer)?;
            (TrainedModel::Coarse(model), n)
        }
        ModelKind::Local(strategy) => {
            let instances = build_instances(docs, Split::Train, options.mapping, &ctx, &mut dictionary, taxonomy)?;
            if instances.is_empty() {
                bail!("no labeled training mentions");
            }
            let model = train_local_parallel(&instances, taxonomy, strategy, options.l2, &options.optimizer)?;
            (TrainedModel::Local(model), instances.len())
        }
        ModelKind::Flat => {
            let instances = build_instances(docs, Split::Train, options.mapping, &ctx, &mut dictionary, taxonomy)?;
            if instances.is_empty() {
                bail!("no labeled training mentions");
            }
            let model = train_flat(&instances, taxonomy, options.l2, &options.optimizer)?;
            (TrainedModel::Flat(model), instances.len())
        }
    };
    dictionary.freeze();
    Ok(ModelBundle {
        dictionary,
        features: options.features,
        topics,
        model,
        l2: options.l2,
        optimizer: options.optimizer,
        instances,
    })
}

impl ModelBundle {
    pub fn feature_context<'a>(&'a self, clusters: &'a ClusterMap) -> FeatureContext<'a> {
        FeatureContext {
            clusters,
            topics: self.topics.as_ref(),
            config: self.features,
        }
    }

    /// A coarse predictor for pruning, when this is a coarse model.
    pub fn coarse_tagger<'a>(&'a self, clusters: &'a ClusterMap) -> Option<CoarseTagger<'a>> {
        match &self.model {
            TrainedModel::Coarse(model) => Some(CoarseTagger {
                model,
                clusters,
                topics: self.topics.as_ref(),
                features: self.features,
            }),
            _ => None,
        }
    }
}

/// Raw per-label probabilities for every mention of the selected documents,
/// in document and mention order.
pub fn score_documents(
    bundle: &ModelBundle,
    docs: &[&Document],
    clusters: &ClusterMap,
) -> Result<Vec<(String, String, LabelProbabilities)>> {
    let Some(scorer) = bundle.model.scorer() else {
        bail!("a {} model does not score taxonomy labels", bundle.model.kind());
    };
    let ctx = bundle.feature_context(clusters);
    let mentions: Vec<(&Document, &Mention)> = docs.iter().flat_map(|d| d.mentions.iter().map(move |m| (*d, m))).collect();
    let features = featurize(&mentions, &ctx)?;
    Ok(mentions
        .par_iter()
        .zip(features.par_iter())
        .map(|((d, m), f)| {
            let x = bundle.dictionary.encode(f);
            (d.id.clone(), m.id.clone(), scorer.predict_probs(&x))
        })
        .collect())
}

/// Predictions for every mention of `split` documents.
pub fn predict(
    bundle: &ModelBundle,
    docs: &[Document],
    split: Option<Split>,
    clusters: &ClusterMap,
    strategy: InferenceStrategy,
    threshold: f64,
    taxonomy: &Taxonomy,
) -> Result<Vec<PredictionRecord>> {
    if !(0.0..=1.0).contains(&threshold) {
        bail!("threshold {threshold} outside [0, 1]");
    }
    let selected: Vec<&Document> = docs.iter().filter(|d| split.is_none_or(|s| d.split == s)).collect();
    let scored = score_documents(bundle, &selected, clusters)?;
    scored
        .into_par_iter()
        .map(|(document, mention, p)| {
            let refined = refine(&p, taxonomy, strategy)
                .with_context(|| format!("document `{document}` mention `{mention}`"))?;
            Ok(PredictionRecord {
                document,
                mention,
                labels: taxonomy.paths_of(&assign(&refined, threshold)),
                refined: refined.into_vec(),
            })
        })
        .collect()
}

/// Key joining a document id and a mention id.
pub fn mention_key(document: &str, mention: &str) -> String {
    format!("{document}\t{mention}")
}

/// Gold mentions of the documents that appear in `predictions`, which must
/// all carry gold labels.
pub fn gold_for(predictions: &[PredictionRecord], docs: &[Document]) -> Result<Vec<GoldMention>> {
    let wanted: std::collections::BTreeSet<&str> = predictions.iter().map(|p| p.document.as_str()).collect();
    let mut gold = Vec::new();
    for d in docs.iter().filter(|d| wanted.contains(d.id.as_str())) {
        for m in &d.mentions {
            let Some(labels) = &m.gold_labels else {
                bail!("document `{}` mention `{}` has no gold labels", d.id, m.id);
            };
            gold.push(GoldMention {
                mention: mention_key(&d.id, &m.id),
                kind: m.kind,
                labels: labels.clone(),
            });
        }
    }
    Ok(gold)
}

pub fn predicted_mentions(predictions: &[PredictionRecord], taxonomy: &Taxonomy) -> Result<Vec<PredictedMention>> {
    predictions
        .iter()
        .map(|p| {
            let labels = p
                .labels
                .iter()
                .map(|l| taxonomy.id(l))
                .collect::<finetype_core::Result<LabelSet>>()?;
            Ok(PredictedMention {
                mention: mention_key(&p.document, &p.mention),
                labels,
            })
        })
        .collect()
}

pub fn scored_mentions(predictions: &[PredictionRecord], taxonomy: &Taxonomy) -> Result<Vec<ScoredMention>> {
    predictions
        .iter()
        .map(|p| {
            Ok(ScoredMention {
                mention: mention_key(&p.document, &p.mention),
                refined: LabelProbabilities::new(p.refined.clone(), taxonomy)
                    .with_context(|| format!("document `{}` mention `{}`", p.document, p.mention))?,
            })
        })
        .collect()
}
