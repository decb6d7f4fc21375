//! Documents, tokens, mentions and the external-type mapping.
//!
//! The upstream pipeline (tokenizer, dependency parser, mention detector and
//! entity resolver) is not part of this crate; its output is what these types
//! describe.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Index of the dependency head within the same sentence; `None` at the root.
    pub dep_head: Option<usize>,
    pub dep_label: String,
}

impl Token {
    pub fn new(text: impl Into<String>, dep_head: Option<usize>, dep_label: impl Into<String>) -> Self {
        Token {
            text: text.into(),
            dep_head,
            dep_label: dep_label.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MentionKind {
    Named,
    Nominal,
    Pronominal,
}

impl MentionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MentionKind::Named => "named",
            MentionKind::Nominal => "nominal",
            MentionKind::Pronominal => "pronominal",
        }
    }
}

impl FromStr for MentionKind {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "named" => Ok(MentionKind::Named),
            "nominal" => Ok(MentionKind::Nominal),
            "pronominal" => Ok(MentionKind::Pronominal),
            other => Err(format!("unknown mention kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// The eight fixed document topics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Topic {
    Arts,
    Business,
    Entertainment,
    Health,
    Mayhem,
    Politics,
    Scitech,
    Sport,
}

impl Topic {
    pub const ALL: [Topic; 8] = [
        Topic::Arts,
        Topic::Business,
        Topic::Entertainment,
        Topic::Health,
        Topic::Mayhem,
        Topic::Politics,
        Topic::Scitech,
        Topic::Sport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Arts => "arts",
            Topic::Business => "business",
            Topic::Entertainment => "entertainment",
            Topic::Health => "health",
            Topic::Mayhem => "mayhem",
            Topic::Politics => "politics",
            Topic::Scitech => "scitech",
            Topic::Sport => "sport",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Topic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topic::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidTopic(s.to_string()))
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mention {
    pub id: String,
    pub sentence: usize,
    /// Token span `[start, end)` within the sentence.
    pub start: usize,
    pub end: usize,
    pub head: usize,
    pub kind: MentionKind,
    pub entity_id: Option<String>,
    /// External (knowledge-base) type identifiers from the entity resolver.
    pub raw_types: Vec<String>,
    /// Ancestor-closed gold labels, when the document is annotated.
    pub gold_labels: Option<LabelSet>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub split: Split,
    pub sentences: Vec<Vec<Token>>,
    pub mentions: Vec<Mention>,
    pub topic: Option<Topic>,
}

impl Document {
    fn invalid(&self, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::InvalidDocument {
            document: self.id.clone(),
            field: field.into(),
            message: message.into(),
        }
    }

    /// Checks token and mention invariants.
    pub fn validate(&self) -> Result<()> {
        for (s, sentence) in self.sentences.iter().enumerate() {
            for (i, token) in sentence.iter().enumerate() {
                if let Some(h) = token.dep_head {
                    if h >= sentence.len() {
                        return Err(self.invalid(
                            "sentences",
                            format!("sentence {s} token {i}: dep_head {h} outside sentence of {} tokens", sentence.len()),
                        ));
                    }
                    if h == i {
                        return Err(self.invalid("sentences", format!("sentence {s} token {i}: dependency self-loop")));
                    }
                }
            }
        }
        for m in &self.mentions {
            let sentence = self.sentences.get(m.sentence).ok_or_else(|| {
                self.invalid("mentions", format!("mention `{}`: sentence {} does not exist", m.id, m.sentence))
            })?;
            if m.start >= m.end {
                return Err(self.invalid("mentions", format!("mention `{}`: empty span [{}, {})", m.id, m.start, m.end)));
            }
            if m.end > sentence.len() {
                return Err(self.invalid(
                    "mentions",
                    format!("mention `{}`: span end {} beyond sentence length {}", m.id, m.end, sentence.len()),
                ));
            }
            if m.head < m.start || m.head >= m.end {
                return Err(self.invalid(
                    "mentions",
                    format!("mention `{}`: head {} outside span [{}, {})", m.id, m.head, m.start, m.end),
                ));
            }
        }
        Ok(())
    }

    pub fn mention_tokens(&self, m: &Mention) -> &[Token] {
        &self.sentences[m.sentence][m.start..m.end]
    }

    pub fn head_token(&self, m: &Mention) -> &Token {
        &self.sentences[m.sentence][m.head]
    }

    /// All token texts in reading order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(|t| t.text.as_str())
    }
}

/// External type identifier to taxonomy label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeMapping {
    entries: BTreeMap<String, LabelId>,
}

impl TypeMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, external: impl Into<String>, label: LabelId) {
        self.entries.insert(external.into(), label);
    }

    pub fn get(&self, external: &str) -> Option<LabelId> {
        self.entries.get(external).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, LabelId)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Mapped labels of a mention plus how many raw identifiers had no mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MappedTypes {
    pub labels: LabelSet,
    pub skipped: usize,
}

/// Maps a mention's resolved external types to closed taxonomy labels.
/// Unmapped identifiers are skipped and counted.
pub fn map_raw_types(mention: &Mention, mapping: &TypeMapping, taxonomy: &Taxonomy) -> Result<MappedTypes> {
    let mut labels = LabelSet::new();
    let mut skipped = 0;
    for raw in &mention.raw_types {
        match mapping.get(raw) {
            Some(label) => {
                labels.insert(label);
            }
            None => skipped += 1,
        }
    }
    Ok(MappedTypes {
        labels: taxonomy.closure(&labels)?,
        skipped,
    })
}

/// Mention and label totals, with labels counted per depth.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub documents: usize,
    pub mentions: usize,
    pub labels: usize,
    /// `labels_per_level[d - 1]` counts gold labels at depth `d`.
    pub labels_per_level: Vec<usize>,
}

pub fn corpus_stats(documents: &[Document], taxonomy: &Taxonomy) -> CorpusStats {
    let mut stats = CorpusStats {
        documents: documents.len(),
        labels_per_level: alloc::vec![0; taxonomy.max_depth()],
        ..CorpusStats::default()
    };
    for doc in documents {
        stats.mentions += doc.mentions.len();
        for m in &doc.mentions {
            if let Some(gold) = &m.gold_labels {
                stats.labels += gold.len();
                for &label in gold {
                    if let Ok(d) = taxonomy.depth(label) {
                        stats.labels_per_level[d - 1] += 1;
                    }
                }
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn doc() -> Document {
        Document {
            id: "d1".into(),
            split: Split::Train,
            sentences: vec![vec![
                Token::new("Barack", Some(1), "nn"),
                Token::new("Obama", Some(2), "nsubj"),
                Token::new("spoke", None, "root"),
            ]],
            mentions: vec![Mention {
                id: "m1".into(),
                sentence: 0,
                start: 0,
                end: 2,
                head: 1,
                kind: MentionKind::Named,
                entity_id: Some("obama".into()),
                raw_types: vec!["/people/person/politician".into(), "/book/author".into(), "/unmapped".into()],
                gold_labels: None,
            }],
            topic: Some(Topic::Politics),
        }
    }

    #[test]
    fn valid_document_passes() {
        doc().validate().unwrap();
    }

    #[test]
    fn head_outside_span_is_rejected() {
        let mut d = doc();
        d.mentions[0].head = 2;
        let err = d.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidDocument { ref document, ref field, .. } if document == "d1" && field == "mentions"));
    }

    #[test]
    fn bad_spans_and_heads_are_rejected() {
        let mut d = doc();
        d.mentions[0].end = 4;
        assert!(d.validate().is_err());
        let mut d = doc();
        d.mentions[0].start = 1;
        d.mentions[0].end = 1;
        assert!(d.validate().is_err());
        let mut d = doc();
        d.sentences[0][0].dep_head = Some(0);
        assert!(d.validate().is_err());
        let mut d = doc();
        d.sentences[0][0].dep_head = Some(7);
        assert!(d.validate().is_err());
        let mut d = doc();
        d.mentions[0].sentence = 3;
        assert!(d.validate().is_err());
    }

    #[test]
    fn raw_types_map_to_closed_labels() {
        let tax = Taxonomy::parse("person/political-figure\nperson/artist/author\n").unwrap();
        let mut mapping = TypeMapping::new();
        mapping.insert("/people/person/politician", tax.id("person/political-figure").unwrap());
        mapping.insert("/book/author", tax.id("person/artist/author").unwrap());
        let mapped = map_raw_types(&doc().mentions[0], &mapping, &tax).unwrap();
        assert_eq!(
            tax.paths_of(&mapped.labels),
            ["person", "person/artist", "person/artist/author", "person/political-figure"]
        );
        assert_eq!(mapped.skipped, 1);

        let mut m = doc().mentions[0].clone();
        m.raw_types.clear();
        assert_eq!(map_raw_types(&m, &mapping, &tax).unwrap(), MappedTypes::default());
        m.raw_types = vec!["/unmapped/type".into()];
        let mapped = map_raw_types(&m, &mapping, &tax).unwrap();
        assert!(mapped.labels.is_empty());
        assert_eq!(mapped.skipped, 1);
    }

    #[test]
    fn topics_parse_only_from_fixed_set() {
        assert_eq!("scitech".parse::<Topic>().unwrap(), Topic::Scitech);
        assert_eq!("weather".parse::<Topic>(), Err(Error::InvalidTopic("weather".into())));
    }
}
