//! Mention features: head, non-head words, word cluster, character trigrams,
//! phrase shape, dependency role, surrounding words, dependency parent and
//! document topic. Each is emitted as a namespaced string and then mapped to a
//! binary indicator through a [`FeatureDictionary`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Document, Mention, Topic};
use crate::error::{Error, Result};
use crate::math::{exp, ln};

pub const HEAD: &str = "HEAD";
pub const NONHEAD: &str = "NONHEAD";
pub const CLUSTER: &str = "CLUSTER";
pub const TRIGRAM: &str = "TRIGRAM";
pub const SHAPE: &str = "SHAPE";
pub const ROLE: &str = "ROLE";
pub const CONTEXT: &str = "CONTEXT";
pub const PARENT: &str = "PARENT";
pub const TOPIC: &str = "TOPIC";

pub const NAMESPACES: [&str; 9] = [HEAD, NONHEAD, CLUSTER, TRIGRAM, SHAPE, ROLE, CONTEXT, PARENT, TOPIC];

/// Binary indicator vector: strictly increasing feature ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SparseVector {
    indices: Vec<u32>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts and de-duplicates.
    pub fn from_indices(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        SparseVector { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.indices.binary_search(&id).is_ok()
    }
}

/// Feature string to id. Ids are dense and assigned in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureDictionary {
    ids: BTreeMap<String, u32>,
    names: Vec<String>,
    frozen: bool,
}

impl FeatureDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// A frozen dictionary over `names`, ids by position.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut ids = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if ids.insert(name.clone(), i as u32).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate feature `{name}`")));
            }
        }
        Ok(FeatureDictionary { ids, names, frozen: true })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.ids.get(feature).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Maps features to a vector, adding unseen strings unless frozen.
    pub fn vectorize<S: AsRef<str>>(&mut self, features: &[S]) -> SparseVector {
        if self.frozen {
            return self.encode(features);
        }
        let mut indices = Vec::with_capacity(features.len());
        for f in features {
            let f = f.as_ref();
            let id = match self.ids.get(f) {
                Some(&id) => id,
                None => {
                    let id = self.names.len() as u32;
                    self.ids.insert(f.to_string(), id);
                    self.names.push(f.to_string());
                    id
                }
            };
            indices.push(id);
        }
        SparseVector::from_indices(indices)
    }

    /// Read-only encoding: unseen strings are dropped.
    pub fn encode<S: AsRef<str>>(&self, features: &[S]) -> SparseVector {
        SparseVector::from_indices(features.iter().filter_map(|f| self.get(f.as_ref())).collect())
    }
}

/// Word to cluster id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterMap {
    clusters: BTreeMap<String, String>,
}

impl ClusterMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: impl Into<String>, cluster: impl Into<String>) {
        self.clusters.insert(word.into(), cluster.into());
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.clusters.get(word).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.clusters.iter().map(|(w, c)| (w.as_str(), c.as_str()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureConfig {
    /// Tokens taken on each side of the mention for context features.
    pub context_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { context_window: 1 }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ShapeClass {
    Upper,
    Lower,
    Digit,
    Other,
}

/// Upper-case letters become `A`, lower-case `a`, digits `0`; anything else is
/// kept. Runs of the same `A`/`a`/`0` class collapse to one character.
pub fn word_shape(word: &str) -> Result<String> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let mut out = String::with_capacity(word.len());
    let mut last = ShapeClass::Other;
    for c in word.chars() {
        let (class, mapped) = if c.is_uppercase() {
            (ShapeClass::Upper, 'A')
        } else if c.is_lowercase() {
            (ShapeClass::Lower, 'a')
        } else if c.is_numeric() {
            (ShapeClass::Digit, '0')
        } else {
            (ShapeClass::Other, c)
        };
        if class == ShapeClass::Other || class != last {
            out.push(mapped);
        }
        last = class;
    }
    Ok(out)
}

/// Per-word shapes joined with single spaces.
pub fn phrase_shape<S: AsRef<str>>(words: &[S]) -> Result<String> {
    let shapes = words.iter().map(|w| word_shape(w.as_ref())).collect::<Result<Vec<_>>>()?;
    Ok(shapes.join(" "))
}

/// Lower-cased, `:`-padded character trigrams of the head word.
pub fn char_trigrams(head: &str) -> Result<Vec<String>> {
    if head.is_empty() {
        return Err(Error::EmptyWord);
    }
    let mut chars: Vec<char> = Vec::with_capacity(head.len() + 2);
    chars.push(':');
    chars.extend(head.chars().flat_map(char::to_lowercase));
    chars.push(':');
    Ok(chars.windows(3).map(|w| w.iter().collect()).collect())
}

/// Feature strings for one mention, in namespace order.
pub fn extract_features(
    mention: &Mention,
    document: &Document,
    clusters: &ClusterMap,
    topic: Option<Topic>,
    config: &FeatureConfig,
) -> Result<Vec<String>> {
    let invalid = |message: String| Error::InvalidDocument {
        document: document.id.clone(),
        field: "mentions".to_string(),
        message,
    };
    let sentence = document
        .sentences
        .get(mention.sentence)
        .ok_or_else(|| invalid(format!("mention `{}`: no sentence {}", mention.id, mention.sentence)))?;
    if mention.start >= mention.end || mention.end > sentence.len() || mention.head < mention.start || mention.head >= mention.end {
        return Err(invalid(format!("mention `{}`: span or head out of range", mention.id)));
    }
    let head = &sentence[mention.head];
    let span = &sentence[mention.start..mention.end];
    let mut out = Vec::with_capacity(16 + span.len());

    out.push(format!("{HEAD}:{}", head.text));
    for (i, token) in span.iter().enumerate() {
        if mention.start + i != mention.head {
            out.push(format!("{NONHEAD}:{}", token.text));
        }
    }
    if let Some(cluster) = clusters.get(&head.text) {
        out.push(format!("{CLUSTER}:{cluster}"));
    }
    for gram in char_trigrams(&head.text)? {
        out.push(format!("{TRIGRAM}:{gram}"));
    }
    let words: Vec<&str> = span.iter().map(|t| t.text.as_str()).collect();
    out.push(format!("{SHAPE}:{}", phrase_shape(&words)?));
    if !head.dep_label.is_empty() {
        out.push(format!("{ROLE}:{}", head.dep_label));
    }
    let before = mention.start.saturating_sub(config.context_window);
    for token in &sentence[before..mention.start] {
        out.push(format!("{CONTEXT}:B:{}", token.text));
    }
    let after = (mention.end + config.context_window).min(sentence.len());
    for token in &sentence[mention.end..after] {
        out.push(format!("{CONTEXT}:A:{}", token.text));
    }
    if let Some(parent) = head.dep_head {
        let parent = sentence
            .get(parent)
            .ok_or_else(|| invalid(format!("mention `{}`: head's dependency parent {parent} out of range", mention.id)))?;
        out.push(format!("{PARENT}:{}", parent.text));
    }
    if let Some(topic) = topic {
        out.push(format!("{TOPIC}:{topic}"));
    }
    Ok(out)
}

/// Multinomial naive Bayes over bag-of-words with add-one smoothing, one class
/// per fixed topic.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    pub log_prior: [f64; 8],
    /// Per-word log-likelihood under each topic, indexed like [`Topic::ALL`].
    pub log_likelihood: BTreeMap<String, [f64; 8]>,
}

fn normalize_word(word: &str) -> String {
    word.to_lowercase()
}

impl TopicModel {
    /// A model with uniform priors and no vocabulary.
    pub fn uniform() -> Self {
        TopicModel {
            log_prior: [ln(1.0 / 8.0); 8],
            log_likelihood: BTreeMap::new(),
        }
    }

    pub fn train<'a, I>(labeled: I) -> Self
    where
        I: IntoIterator<Item = (&'a Document, Topic)>,
    {
        let mut doc_counts = [0usize; 8];
        let mut word_counts: BTreeMap<String, [usize; 8]> = BTreeMap::new();
        let mut totals = [0usize; 8];
        for (doc, topic) in labeled {
            let t = topic.index();
            doc_counts[t] += 1;
            for word in doc.words() {
                word_counts.entry(normalize_word(word)).or_insert([0; 8])[t] += 1;
                totals[t] += 1;
            }
        }
        let n_docs: usize = doc_counts.iter().sum();
        let vocab = word_counts.len() as f64;
        let mut log_prior = [0.0; 8];
        for t in 0..8 {
            log_prior[t] = ln((doc_counts[t] as f64 + 1.0) / (n_docs as f64 + 8.0));
        }
        let log_likelihood = word_counts
            .into_iter()
            .map(|(word, counts)| {
                let mut ll = [0.0; 8];
                for t in 0..8 {
                    ll[t] = ln((counts[t] as f64 + 1.0) / (totals[t] as f64 + vocab));
                }
                (word, ll)
            })
            .collect();
        TopicModel { log_prior, log_likelihood }
    }

    /// Unnormalized log-posterior per topic; out-of-vocabulary words are ignored.
    pub fn log_posterior(&self, document: &Document) -> [f64; 8] {
        let mut scores = self.log_prior;
        for word in document.words() {
            if let Some(ll) = self.log_likelihood.get(&normalize_word(word)) {
                for t in 0..8 {
                    scores[t] += ll[t];
                }
            }
        }
        scores
    }

    /// Maximum a-posteriori topic; ties go to the earlier topic in fixed order.
    pub fn predict(&self, document: &Document) -> Topic {
        let scores = self.log_posterior(document);
        let mut best = 0;
        for t in 1..8 {
            if scores[t] > scores[best] {
                best = t;
            }
        }
        Topic::ALL[best]
    }

    /// Per-topic sum of word probabilities; 1 for a trained model.
    pub fn likelihood_mass(&self) -> [f64; 8] {
        let mut mass = [0.0; 8];
        for ll in self.log_likelihood.values() {
            for t in 0..8 {
                mass[t] += exp(ll[t]);
            }
        }
        mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{MentionKind, Split, Token};
    use alloc::vec;
    use proptest::prelude::*;

    fn obama_doc() -> (Document, Mention) {
        // "... who Barack H. Obama first picked ..."
        let sentence = vec![
            Token::new("leader", Some(6), "nsubj"),
            Token::new("who", Some(6), "nsubj"),
            Token::new("Barack", Some(4), "nn"),
            Token::new("H.", Some(4), "nn"),
            Token::new("Obama", Some(6), "nsubj"),
            Token::new("first", Some(6), "advmod"),
            Token::new("picked", None, "root"),
        ];
        let mention = Mention {
            id: "m".into(),
            sentence: 0,
            start: 2,
            end: 5,
            head: 4,
            kind: MentionKind::Named,
            entity_id: None,
            raw_types: vec![],
            gold_labels: None,
        };
        let doc = Document {
            id: "d".into(),
            split: Split::Test,
            sentences: vec![sentence],
            mentions: vec![mention.clone()],
            topic: Some(Topic::Politics),
        };
        (doc, mention)
    }

    #[test]
    fn shapes() {
        assert_eq!(word_shape("Barack").unwrap(), "Aa");
        assert_eq!(word_shape("H.").unwrap(), "A.");
        assert_eq!(word_shape("a").unwrap(), "a");
        assert_eq!(word_shape("B2B").unwrap(), "A0A");
        assert_eq!(word_shape("1999").unwrap(), "0");
        assert_eq!(word_shape("...").unwrap(), "...");
        assert_eq!(phrase_shape(&["Barack", "H.", "Obama"]).unwrap(), "Aa A. Aa");
        assert_eq!(word_shape(""), Err(Error::EmptyWord));
    }

    #[test]
    fn trigrams() {
        assert_eq!(char_trigrams("Obama").unwrap(), [":ob", "oba", "bam", "ama", "ma:"]);
        assert_eq!(char_trigrams("a").unwrap(), [":a:"]);
        assert_eq!(char_trigrams("ok").unwrap(), [":ok", "ok:"]);
        assert_eq!(char_trigrams(""), Err(Error::EmptyWord));
    }

    #[test]
    fn table_example_features() {
        let (doc, m) = obama_doc();
        let mut clusters = ClusterMap::new();
        clusters.insert("Obama", "59");
        let feats = extract_features(&m, &doc, &clusters, doc.topic, &FeatureConfig::default()).unwrap();
        let expected = [
            "HEAD:Obama",
            "NONHEAD:Barack",
            "NONHEAD:H.",
            "CLUSTER:59",
            "TRIGRAM::ob",
            "TRIGRAM:oba",
            "TRIGRAM:bam",
            "TRIGRAM:ama",
            "TRIGRAM:ma:",
            "SHAPE:Aa A. Aa",
            "ROLE:nsubj",
            "CONTEXT:B:who",
            "CONTEXT:A:first",
            "PARENT:picked",
            "TOPIC:politics",
        ];
        assert_eq!(feats, expected);
    }

    #[test]
    fn omission_branches() {
        // Single-token mention at sentence start, head is the root, unmapped head.
        let doc = Document {
            id: "d".into(),
            split: Split::Train,
            sentences: vec![vec![Token::new("Paris", None, "root")]],
            mentions: vec![],
            topic: None,
        };
        let m = Mention {
            id: "m".into(),
            sentence: 0,
            start: 0,
            end: 1,
            head: 0,
            kind: MentionKind::Named,
            entity_id: None,
            raw_types: vec![],
            gold_labels: None,
        };
        let feats = extract_features(&m, &doc, &ClusterMap::new(), None, &FeatureConfig::default()).unwrap();
        for ns in ["NONHEAD:", "CLUSTER:", "CONTEXT:", "PARENT:", "TOPIC:"] {
            assert!(feats.iter().all(|f| !f.starts_with(ns)), "{ns} in {feats:?}");
        }
        assert!(feats.contains(&"ROLE:root".to_string()));
    }

    #[test]
    fn wider_context_window() {
        let (doc, m) = obama_doc();
        let feats = extract_features(&m, &doc, &ClusterMap::new(), None, &FeatureConfig { context_window: 3 }).unwrap();
        let context: Vec<&str> = feats.iter().filter(|f| f.starts_with("CONTEXT:")).map(String::as_str).collect();
        assert_eq!(context, ["CONTEXT:B:leader", "CONTEXT:B:who", "CONTEXT:A:first", "CONTEXT:A:picked"]);
    }

    #[test]
    fn invalid_mention_is_an_error() {
        let (doc, mut m) = obama_doc();
        m.head = 6;
        assert!(extract_features(&m, &doc, &ClusterMap::new(), None, &FeatureConfig::default()).is_err());
    }

    #[test]
    fn vectorize_modes() {
        let mut dict = FeatureDictionary::new();
        let v = dict.vectorize(&["HEAD:x", "HEAD:x"]);
        assert_eq!(v.indices(), &[0]);
        let v = dict.vectorize(&["a", "b", "c"]);
        assert_eq!(v.indices(), &[1, 2, 3]);
        dict.freeze();
        let before = dict.len();
        let v = dict.vectorize(&["unseen", "a"]);
        assert_eq!(v.indices(), &[1]);
        assert_eq!(dict.len(), before);
        assert_eq!(dict.name(2), Some("b"));
    }

    fn topic_doc(words: &[&str]) -> Document {
        Document {
            id: "t".into(),
            split: Split::Train,
            sentences: vec![words.iter().map(|w| Token::new(*w, None, "")).collect()],
            mentions: vec![],
            topic: None,
        }
    }

    #[test]
    fn topic_model_separable_case() {
        let docs: Vec<(Document, Topic)> = Topic::ALL
            .iter()
            .map(|&t| (topic_doc(&[t.as_str(), t.as_str(), "the"]), t))
            .collect();
        let model = TopicModel::train(docs.iter().map(|(d, t)| (d, *t)));
        for &t in &Topic::ALL {
            assert_eq!(model.predict(&topic_doc(&[t.as_str(), "the"])), t);
        }
        for mass in model.likelihood_mass() {
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_model_empty_document_takes_first_topic() {
        assert_eq!(TopicModel::uniform().predict(&topic_doc(&[])), Topic::Arts);
        // Larger prior wins on an empty document.
        let sport = topic_doc(&["goal"]);
        let model = TopicModel::train([(&sport, Topic::Sport), (&sport, Topic::Sport)]);
        assert_eq!(model.predict(&topic_doc(&[])), Topic::Sport);
    }

    proptest! {
        #[test]
        fn shape_is_idempotent_on_class_alphabet(word in "[Aa0]{1,12}") {
            let once = word_shape(&word).unwrap();
            prop_assert_eq!(word_shape(&once).unwrap(), once.clone());
        }

        #[test]
        fn extraction_is_pure_and_namespaced(words in prop::collection::vec("[A-Za-z0-9.]{1,8}", 1..6), start in 0usize..6, len in 1usize..4) {
            let n = words.len();
            let start = start % n;
            let end = (start + len).min(n);
            let sentence: Vec<Token> = words.iter().enumerate().map(|(i, w)| {
                Token::new(w.clone(), if i + 1 < n { Some(i + 1) } else { None }, "dep")
            }).collect();
            let doc = Document { id: "p".into(), split: Split::Train, sentences: vec![sentence], mentions: vec![], topic: Some(Topic::Health) };
            let m = Mention { id: "m".into(), sentence: 0, start, end, head: end - 1, kind: MentionKind::Nominal, entity_id: None, raw_types: vec![], gold_labels: None };
            let a = extract_features(&m, &doc, &ClusterMap::new(), doc.topic, &FeatureConfig::default()).unwrap();
            let b = extract_features(&m, &doc, &ClusterMap::new(), doc.topic, &FeatureConfig::default()).unwrap();
            prop_assert_eq!(&a, &b);
            for f in &a {
                let ns = f.split(':').next().unwrap();
                prop_assert!(NAMESPACES.contains(&ns), "{}", f);
            }
        }
    }
}
