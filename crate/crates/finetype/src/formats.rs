//! On-disk formats: taxonomy text, line-delimited JSON corpora, tab-separated
//! mapping/cluster/topic files, prediction and annotation records.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use finetype_core::corpus::{Document, Mention, MentionKind, Split, Token, Topic, TypeMapping};
use finetype_core::features::ClusterMap;
use finetype_core::Taxonomy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The three-level taxonomy shipped with the repository.
pub const BUILTIN_TAXONOMY: &str = include_str!("../../../taxonomy/types.txt");

pub fn builtin_taxonomy() -> Taxonomy {
    Taxonomy::parse(BUILTIN_TAXONOMY).expect("bundled taxonomy parses")
}

pub fn read_taxonomy(path: &Path) -> Result<Taxonomy> {
    let text = fs::read_to_string(path).with_context(|| format!("reading taxonomy {}", path.display()))?;
    Taxonomy::parse(&text).with_context(|| format!("parsing taxonomy {}", path.display()))
}

/// Taxonomy from a file, or the bundled one.
pub fn load_taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    match path {
        Some(p) => read_taxonomy(p),
        None => Ok(builtin_taxonomy()),
    }
}

/// Lowercase hex SHA-256 of the taxonomy's canonical text.
pub fn taxonomy_hash(taxonomy: &Taxonomy) -> String {
    hex(&Sha256::digest(taxonomy.serialize().as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRecord {
    pub text: String,
    pub dep_head: Option<usize>,
    pub dep_label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MentionRecord {
    pub id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub head: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_types: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub id: String,
    pub split: String,
    pub sentences: Vec<Vec<TokenRecord>>,
    pub mentions: Vec<MentionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl DocumentRecord {
    pub fn into_document(self, taxonomy: &Taxonomy) -> Result<Document> {
        let split: Split = self
            .split
            .parse()
            .map_err(|e: String| anyhow!("document `{}`: {e}", self.id))?;
        let topic = self
            .topic
            .as_deref()
            .map(str::parse::<Topic>)
            .transpose()
            .with_context(|| format!("document `{}`", self.id))?;
        let sentences = self
            .sentences
            .into_iter()
            .map(|s| {
                s.into_iter()
                    .map(|t| Token::new(t.text, t.dep_head, t.dep_label))
                    .collect()
            })
            .collect();
        let mut mentions = Vec::with_capacity(self.mentions.len());
        for m in self.mentions {
            let kind: MentionKind = m
                .kind
                .parse()
                .map_err(|e: String| anyhow!("document `{}` mention `{}`: {e}", self.id, m.id))?;
            let gold_labels = match m.gold_labels {
                Some(paths) => Some(
                    taxonomy
                        .resolve_closed(paths.iter().map(String::as_str))
                        .with_context(|| format!("document `{}` mention `{}`", self.id, m.id))?,
                ),
                None => None,
            };
            mentions.push(Mention {
                id: m.id,
                sentence: m.sentence,
                start: m.start,
                end: m.end,
                head: m.head,
                kind,
                entity_id: m.entity_id,
                raw_types: m.raw_types.unwrap_or_default(),
                gold_labels,
            });
        }
        let doc = Document {
            id: self.id,
            split,
            sentences,
            mentions,
            topic,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn from_document(doc: &Document, taxonomy: &Taxonomy) -> Self {
        DocumentRecord {
            id: doc.id.clone(),
            split: doc.split.as_str().into(),
            sentences: doc
                .sentences
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|t| TokenRecord {
                            text: t.text.clone(),
                            dep_head: t.dep_head,
                            dep_label: t.dep_label.clone(),
                        })
                        .collect()
                })
                .collect(),
            mentions: doc
                .mentions
                .iter()
                .map(|m| MentionRecord {
                    id: m.id.clone(),
                    sentence: m.sentence,
                    start: m.start,
                    end: m.end,
                    head: m.head,
                    kind: m.kind.as_str().into(),
                    entity_id: m.entity_id.clone(),
                    raw_types: (!m.raw_types.is_empty()).then(|| m.raw_types.clone()),
                    gold_labels: m.gold_labels.as_ref().map(|g| taxonomy.paths_of(g)),
                })
                .collect(),
            topic: doc.topic.map(|t| t.as_str().into()),
        }
    }
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_corpus(text: &str, taxonomy: &Taxonomy) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, l) in content_lines(text) {
        let rec: DocumentRecord = serde_json::from_str(l).with_context(|| format!("line {line}"))?;
        let doc = rec.into_document(taxonomy).with_context(|| format!("line {line}"))?;
        if !seen.insert(doc.id.clone()) {
            bail!("line {line}: duplicate document id `{}`", doc.id);
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_corpus(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading corpus {}", path.display()))?;
    parse_corpus(&text, taxonomy).with_context(|| format!("corpus {}", path.display()))
}

pub fn write_corpus<W: Write>(mut out: W, docs: &[Document], taxonomy: &Taxonomy) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, &DocumentRecord::from_document(doc, taxonomy))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Splits a tab-separated line into exactly two non-empty fields.
fn two_columns(line: usize, l: &str) -> Result<(&str, &str)> {
    let mut parts = l.split('\t');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((a, b.trim_end_matches('\r'))),
        _ => bail!("line {line}: expected two tab-separated columns"),
    }
}

fn tsv_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    content_lines(text).filter(|(_, l)| !l.starts_with('#'))
}

/// External type id → label path.
pub fn parse_mapping(text: &str, taxonomy: &Taxonomy) -> Result<TypeMapping> {
    let mut mapping = TypeMapping::new();
    for (line, l) in tsv_lines(text) {
        let (external, path) = two_columns(line, l)?;
        let label = taxonomy.id(path).with_context(|| format!("line {line}"))?;
        mapping.insert(external, label);
    }
    Ok(mapping)
}

pub fn read_mapping(path: &Path, taxonomy: &Taxonomy) -> Result<TypeMapping> {
    let text = fs::read_to_string(path).with_context(|| format!("reading mapping {}", path.display()))?;
    parse_mapping(&text, taxonomy).with_context(|| format!("mapping {}", path.display()))
}

pub fn write_mapping<W: Write>(mut out: W, mapping: &TypeMapping, taxonomy: &Taxonomy) -> Result<()> {
    for (external, label) in mapping.iter() {
        writeln!(out, "{external}\t{}", taxonomy.path(label))?;
    }
    Ok(())
}

/// Word → cluster id.
pub fn parse_clusters(text: &str) -> Result<ClusterMap> {
    let mut clusters = ClusterMap::new();
    for (line, l) in tsv_lines(text) {
        let (word, cluster) = two_columns(line, l)?;
        clusters.insert(word, cluster);
    }
    Ok(clusters)
}

pub fn read_clusters(path: &Path) -> Result<ClusterMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading clusters {}", path.display()))?;
    parse_clusters(&text).with_context(|| format!("clusters {}", path.display()))
}

pub fn load_clusters(path: Option<&Path>) -> Result<ClusterMap> {
    path.map_or_else(|| Ok(ClusterMap::new()), read_clusters)
}

pub fn write_clusters<W: Write>(mut out: W, clusters: &ClusterMap) -> Result<()> {
    for (word, cluster) in clusters.iter() {
        writeln!(out, "{word}\t{cluster}")?;
    }
    Ok(())
}

/// Document id → topic.
pub fn parse_topics(text: &str) -> Result<BTreeMap<String, Topic>> {
    let mut topics = BTreeMap::new();
    for (line, l) in tsv_lines(text) {
        let (doc, topic) = two_columns(line, l)?;
        let topic: Topic = topic.parse().with_context(|| format!("line {line}"))?;
        topics.insert(doc.to_string(), topic);
    }
    Ok(topics)
}

pub fn read_topics(path: &Path) -> Result<BTreeMap<String, Topic>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading topics {}", path.display()))?;
    parse_topics(&text).with_context(|| format!("topics {}", path.display()))
}

/// One line of `predict` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub document: String,
    pub mention: String,
    pub labels: Vec<String>,
    /// Refined probability of every taxonomy label, in taxonomy order.
    pub refined: Vec<f64>,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path).with_context(|| format!("reading predictions {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).with_context(|| format!("predictions {} line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut out: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One annotation, as stored on disk and accepted by the service.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationLine {
    pub annotator: String,
    pub document: String,
    pub mention: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub timestamp: u64,
}

impl AnnotationLine {
    pub fn to_record(&self, taxonomy: &Taxonomy) -> Result<finetype_core::agreement::AnnotationRecord> {
        Ok(finetype_core::agreement::AnnotationRecord {
            annotator: self.annotator.clone(),
            document: self.document.clone(),
            mention: self.mention.clone(),
            labels: taxonomy.resolve_closed(self.labels.iter().map(String::as_str))?,
            timestamp: self.timestamp,
        })
    }
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationLine>> {
    content_lines(text)
        .map(|(line, l)| serde_json::from_str(l).with_context(|| format!("line {line}")))
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationLine>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading annotations {}", path.display()))?;
    parse_annotations(&text).with_context(|| format!("annotations {}", path.display()))
}
