//! The model file: one JSON object followed by a newline.
//!
//! ```text
//! {
//!   "format": "finetype-model",
//!   "version": 1,
//!   "kind": "local" | "flat" | "coarse",
//!   "taxonomy_sha256": "<64 hex digits>",
//!   "metadata": { "l2", "negatives", "instances", "gradient_tolerance",
//!                 "max_iterations", "history", "context_window", "degenerate" },
//!   "features": ["HEAD:Obama", ...],            // feature id = position
//!   "topic_model": null | { "log_prior": [8 reals], "words": [["word", [8 reals]], ...] },
//!   "local": [{ "bias": b, "weights": [[feature id, w], ...] }, ...],   // one per label, "local" only
//!   "softmax": { "classes": k, "bias": [k reals],
//!                "rows": [[feature id, [k reals]], ...] }              // "flat" and "coarse" only
//! }
//! ```
//!
//! Keys always appear in this order, sparse entries in increasing feature id,
//! and reals in shortest round-trip form, so equal models give equal bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use finetype_core::coarse::CoarseModel;
use finetype_core::features::{FeatureConfig, FeatureDictionary, TopicModel};
use finetype_core::linear::{BinaryWeights, SoftmaxWeights};
use finetype_core::models::{FlatModel, LabelStatus, LocalModelSet, NegativeStrategy};
use finetype_core::optim::OptimizerConfig;
use finetype_core::{LabelId, Taxonomy};
use serde::{Deserialize, Serialize};

use crate::formats::taxonomy_hash;
use crate::pipeline::{ModelBundle, TrainedModel};

pub const FORMAT: &str = "finetype-model";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    kind: String,
    taxonomy_sha256: String,
    metadata: Metadata,
    features: Vec<String>,
    topic_model: Option<TopicRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    local: Option<Vec<BinaryRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    softmax: Option<SoftmaxRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    l2: f64,
    negatives: Option<String>,
    instances: usize,
    gradient_tolerance: f64,
    max_iterations: usize,
    history: usize,
    context_window: usize,
    degenerate: Vec<Degenerate>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Degenerate {
    label: String,
    status: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicRecord {
    log_prior: [f64; 8],
    words: Vec<(String, [f64; 8])>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryRecord {
    bias: f64,
    weights: Vec<(u32, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoftmaxRecord {
    classes: usize,
    bias: Vec<f64>,
    rows: Vec<(u32, Vec<f64>)>,
}

pub fn status_name(status: LabelStatus) -> &'static str {
    match status {
        LabelStatus::Trained => "trained",
        LabelStatus::NoPositives => "no-positives",
        LabelStatus::FellBackToAll => "fell-back-to-all",
        LabelStatus::NoNegatives => "no-negatives",
    }
}

fn parse_status(s: &str) -> Result<LabelStatus> {
    Ok(match s {
        "trained" => LabelStatus::Trained,
        "no-positives" => LabelStatus::NoPositives,
        "fell-back-to-all" => LabelStatus::FellBackToAll,
        "no-negatives" => LabelStatus::NoNegatives,
        other => bail!("unknown label status `{other}`"),
    })
}

fn softmax_record(w: &SoftmaxWeights) -> SoftmaxRecord {
    SoftmaxRecord {
        classes: w.classes,
        bias: w.bias.clone(),
        rows: w.rows.iter().map(|(&f, r)| (f, r.clone())).collect(),
    }
}

fn softmax_weights(r: SoftmaxRecord, features: usize) -> Result<SoftmaxWeights> {
    ensure!(r.bias.len() == r.classes, "softmax bias has {} entries for {} classes", r.bias.len(), r.classes);
    for (f, row) in &r.rows {
        ensure!((*f as usize) < features, "feature id {f} outside the dictionary");
        ensure!(row.len() == r.classes, "softmax row for feature {f} has {} entries", row.len());
    }
    Ok(SoftmaxWeights {
        classes: r.classes,
        bias: r.bias,
        rows: r.rows.into_iter().collect(),
    })
}

/// Serializes a model bundle; the output ends with a newline.
pub fn to_bytes(bundle: &ModelBundle, taxonomy: &Taxonomy) -> Result<Vec<u8>> {
    let (negatives, degenerate, local, softmax) = match &bundle.model {
        TrainedModel::Local(m) => (
            Some(m.strategy.as_str().to_string()),
            m.degenerate
                .iter()
                .map(|(l, s)| Degenerate {
                    label: taxonomy.path(*l).to_string(),
                    status: status_name(*s).to_string(),
                })
                .collect(),
            Some(
                m.models
                    .iter()
                    .map(|b| BinaryRecord {
                        bias: b.bias,
                        weights: b.weights.iter().map(|(&f, &w)| (f, w)).collect(),
                    })
                    .collect(),
            ),
            None,
        ),
        TrainedModel::Flat(m) => (None, Vec::new(), None, Some(softmax_record(&m.weights))),
        TrainedModel::Coarse(m) => (None, Vec::new(), None, Some(softmax_record(&m.weights))),
    };
    let file = ModelFile {
        format: FORMAT.into(),
        version: VERSION,
        kind: bundle.model.kind().into(),
        taxonomy_sha256: taxonomy_hash(taxonomy),
        metadata: Metadata {
            l2: bundle.l2,
            negatives,
            instances: bundle.instances,
            gradient_tolerance: bundle.optimizer.gradient_tolerance,
            max_iterations: bundle.optimizer.max_iterations,
            history: bundle.optimizer.history,
            context_window: bundle.features.context_window,
            degenerate,
        },
        features: bundle.dictionary.names().to_vec(),
        topic_model: bundle.topics.as_ref().map(|t| TopicRecord {
            log_prior: t.log_prior,
            words: t.log_likelihood.iter().map(|(w, ll)| (w.clone(), *ll)).collect(),
        }),
        local,
        softmax,
    };
    let mut out = serde_json::to_vec(&file)?;
    out.push(b'\n');
    Ok(out)
}

pub fn from_bytes(bytes: &[u8], taxonomy: &Taxonomy) -> Result<ModelBundle> {
    let file: ModelFile = serde_json::from_slice(bytes).context("malformed model file")?;
    ensure!(file.format == FORMAT, "not a model file (format `{}`)", file.format);
    ensure!(file.version == VERSION, "unsupported model file version {}", file.version);
    let expected = taxonomy_hash(taxonomy);
    ensure!(
        file.taxonomy_sha256 == expected,
        "taxonomy mismatch: model was trained with taxonomy {} but {} was supplied",
        file.taxonomy_sha256,
        expected
    );
    let dictionary = FeatureDictionary::from_names(file.features)?;
    let n_features = dictionary.len();
    let meta = file.metadata;
    let model = match file.kind.as_str() {
        "local" => {
            let records = file.local.context("local model without `local` weights")?;
            ensure!(
                records.len() == taxonomy.len(),
                "local model has {} label models for a taxonomy of {} labels",
                records.len(),
                taxonomy.len()
            );
            let strategy: NegativeStrategy = meta.negatives.as_deref().context("local model without negatives")?.parse()?;
            let mut models = Vec::with_capacity(records.len());
            for r in records {
                for (f, _) in &r.weights {
                    ensure!((*f as usize) < n_features, "feature id {f} outside the dictionary");
                }
                models.push(BinaryWeights {
                    weights: r.weights.into_iter().collect(),
                    bias: r.bias,
                });
            }
            let degenerate = meta
                .degenerate
                .iter()
                .map(|d| Ok((taxonomy.id(&d.label)?, parse_status(&d.status)?)))
                .collect::<Result<Vec<(LabelId, LabelStatus)>>>()?;
            TrainedModel::Local(LocalModelSet {
                models,
                strategy,
                l2: meta.l2,
                degenerate,
            })
        }
        "flat" => {
            let w = softmax_weights(file.softmax.context("flat model without `softmax` weights")?, n_features)?;
            ensure!(w.classes == taxonomy.len(), "flat model has {} classes for {} labels", w.classes, taxonomy.len());
            TrainedModel::Flat(FlatModel { weights: w, l2: meta.l2 })
        }
        "coarse" => {
            let w = softmax_weights(file.softmax.context("coarse model without `softmax` weights")?, n_features)?;
            ensure!(w.classes == 4, "coarse model has {} classes", w.classes);
            TrainedModel::Coarse(CoarseModel {
                dictionary: dictionary.clone(),
                weights: w,
                l2: meta.l2,
            })
        }
        other => bail!("unknown model kind `{other}`"),
    };
    Ok(ModelBundle {
        dictionary,
        features: FeatureConfig {
            context_window: meta.context_window,
        },
        topics: file.topic_model.map(|t| TopicModel {
            log_prior: t.log_prior,
            log_likelihood: t.words.into_iter().collect(),
        }),
        model,
        l2: meta.l2,
        optimizer: OptimizerConfig {
            gradient_tolerance: meta.gradient_tolerance,
            max_iterations: meta.max_iterations,
            history: meta.history,
        },
        instances: meta.instances,
    })
}

pub fn save(path: &Path, bundle: &ModelBundle, taxonomy: &Taxonomy) -> Result<()> {
    let bytes = to_bytes(bundle, taxonomy)?;
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load(path: &Path, taxonomy: &Taxonomy) -> Result<ModelBundle> {
    let bytes = fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    from_bytes(&bytes, taxonomy).with_context(|| format!("model {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn bundle(model: TrainedModel) -> ModelBundle {
        ModelBundle {
            dictionary: FeatureDictionary::from_names(vec!["HEAD:a".into(), "SHAPE:Aa".into()]).unwrap(),
            features: FeatureConfig::default(),
            topics: Some(TopicModel::uniform()),
            model,
            l2: 1.0,
            optimizer: OptimizerConfig::default(),
            instances: 3,
        }
    }

    #[test]
    fn local_round_trip_is_exact() {
        let t = Taxonomy::parse("a/b\nc\n").unwrap();
        let mut models = vec![BinaryWeights::default(); 3];
        models[0].weights = BTreeMap::from([(0, 0.1 + 0.2), (1, -1e-300)]);
        models[0].bias = std::f64::consts::PI;
        models[2] = BinaryWeights::constant(-30.0);
        let b = bundle(TrainedModel::Local(LocalModelSet {
            models,
            strategy: NegativeStrategy::Depth,
            l2: 1.0,
            degenerate: vec![(LabelId(2), LabelStatus::NoPositives)],
        }));
        let bytes = to_bytes(&b, &t).unwrap();
        assert!(bytes.ends_with(b"\n"));
        let back = from_bytes(&bytes, &t).unwrap();
        assert_eq!(back, b);
        assert_eq!(to_bytes(&back, &t).unwrap(), bytes);
    }

    #[test]
    fn flat_and_coarse_round_trip() {
        let t = Taxonomy::parse("a/b\nc\n").unwrap();
        let mut w = SoftmaxWeights::zeros(3);
        w.rows.insert(1, vec![0.5, -0.25, 1.0 / 3.0]);
        let b = bundle(TrainedModel::Flat(FlatModel { weights: w, l2: 1.0 }));
        assert_eq!(from_bytes(&to_bytes(&b, &t).unwrap(), &t).unwrap(), b);

        let mut c = CoarseModel::zeros();
        c.dictionary = b.dictionary.clone();
        c.weights.rows.insert(0, vec![1.0, 2.0, 3.0, 4.0]);
        let b = bundle(TrainedModel::Coarse(c));
        assert_eq!(from_bytes(&to_bytes(&b, &t).unwrap(), &t).unwrap(), b);
    }

    #[test]
    fn taxonomy_mismatch_is_fatal() {
        let t = Taxonomy::parse("a/b\nc\n").unwrap();
        let other = Taxonomy::parse("a/b\nd\n").unwrap();
        let b = bundle(TrainedModel::Local(LocalModelSet::zeros(3, NegativeStrategy::All, 1.0)));
        let err = from_bytes(&to_bytes(&b, &t).unwrap(), &other).unwrap_err();
        assert!(err.to_string().contains("taxonomy mismatch"), "{err}");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let t = Taxonomy::parse("a\n").unwrap();
        assert!(from_bytes(b"{}", &t).is_err());
        assert!(from_bytes(b"not json", &t).is_err());
        let b = bundle(TrainedModel::Local(LocalModelSet::zeros(1, NegativeStrategy::All, 1.0)));
        let text = String::from_utf8(to_bytes(&b, &t).unwrap()).unwrap();
        assert!(from_bytes(text.replace("\"version\":1", "\"version\":9").as_bytes(), &t).is_err());
        let mut bad = b.clone();
        if let TrainedModel::Local(m) = &mut bad.model {
            m.models[0].weights.insert(7, 1.0);
        }
        assert!(from_bytes(&to_bytes(&bad, &t).unwrap(), &t).is_err());
    }
}
