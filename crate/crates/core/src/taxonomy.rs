//! Tree-structured type taxonomy.
//!
//! Labels are written as slash-separated paths (`person/artist/actor`). The
//! root of the tree is an implicit node that is not itself a label, so the
//! depth-1 labels form the top of a forest. Ids are assigned in segment-wise
//! lexicographic path order, which places every parent before its children.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

pub const SEPARATOR: char = '/';

/// Index of a label within its taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelId(pub u32);

impl LabelId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

pub type LabelSet = BTreeSet<LabelId>;

#[derive(Clone, Debug, PartialEq, Eq)]
struct Node {
    path: String,
    depth: usize,
    parent: Option<LabelId>,
    children: Vec<LabelId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: Vec<Node>,
    by_path: BTreeMap<String, LabelId>,
    roots: Vec<LabelId>,
}

fn split_path(path: &str) -> core::result::Result<Vec<&str>, String> {
    let trimmed = path.trim();
    if trimmed.is_empty() {
        return Err("empty label path".to_string());
    }
    let segments: Vec<&str> = trimmed.split(SEPARATOR).map(str::trim).collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(alloc::format!("empty segment in `{trimmed}`"));
    }
    Ok(segments)
}

impl Taxonomy {
    /// Parses a taxonomy file: one path per line, `#` starts a comment line,
    /// blank lines are skipped. Missing ancestors are inserted.
    pub fn parse(text: &str) -> Result<Self> {
        let mut paths: BTreeSet<Vec<String>> = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('#') {
                continue;
            }
            if line.is_empty() {
                // A file consisting of a single empty line is a degenerate label,
                // not an empty taxonomy.
                if text.lines().count() == 1 {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "empty label path".to_string(),
                    });
                }
                continue;
            }
            let segments = split_path(line).map_err(|message| Error::Parse { line: i + 1, message })?;
            for end in 1..=segments.len() {
                paths.insert(segments[..end].iter().map(|s| s.to_string()).collect());
            }
        }
        Self::from_segment_paths(paths)
    }

    /// Builds a taxonomy from label paths, closing them under prefixes.
    pub fn from_paths<'a, I>(paths: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut all: BTreeSet<Vec<String>> = BTreeSet::new();
        for (i, path) in paths.into_iter().enumerate() {
            let segments = split_path(path).map_err(|message| Error::Parse { line: i + 1, message })?;
            for end in 1..=segments.len() {
                all.insert(segments[..end].iter().map(|s| s.to_string()).collect());
            }
        }
        Self::from_segment_paths(all)
    }

    fn from_segment_paths(paths: BTreeSet<Vec<String>>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyTaxonomy);
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(paths.len());
        let mut by_path = BTreeMap::new();
        let mut roots = Vec::new();
        for (i, segments) in paths.iter().enumerate() {
            let id = LabelId(i as u32);
            let path = segments.join("/");
            let parent = if segments.len() > 1 {
                let parent_path = segments[..segments.len() - 1].join("/");
                // Prefix closure and the sort order guarantee the parent exists already.
                Some(by_path[&parent_path])
            } else {
                roots.push(id);
                None
            };
            if let Some(p) = parent {
                let p: LabelId = p;
                nodes[p.index()].children.push(id);
            }
            by_path.insert(path.clone(), id);
            nodes.push(Node {
                path,
                depth: segments.len(),
                parent,
                children: Vec::new(),
            });
        }
        Ok(Taxonomy { nodes, by_path, roots })
    }

    /// One path per line, in id order. `parse(serialize())` reproduces the taxonomy.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            out.push_str(&node.path);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = LabelId> + ExactSizeIterator + '_ {
        (0..self.nodes.len() as u32).map(LabelId)
    }

    pub fn contains(&self, id: LabelId) -> bool {
        id.index() < self.nodes.len()
    }

    fn node(&self, id: LabelId) -> Result<&Node> {
        self.nodes
            .get(id.index())
            .ok_or_else(|| Error::UnknownLabel(id.to_string()))
    }

    pub fn lookup(&self, path: &str) -> Option<LabelId> {
        self.by_path.get(path.trim()).copied()
    }

    /// Like [`Taxonomy::lookup`] but unknown paths are an error.
    pub fn id(&self, path: &str) -> Result<LabelId> {
        self.lookup(path).ok_or_else(|| Error::UnknownLabel(path.to_string()))
    }

    /// Full slash-separated path of a label.
    ///
    /// Panics if `id` does not belong to this taxonomy.
    pub fn path(&self, id: LabelId) -> &str {
        &self.nodes[id.index()].path
    }

    /// Last path segment.
    pub fn name(&self, id: LabelId) -> &str {
        let path = self.path(id);
        path.rsplit(SEPARATOR).next().unwrap_or(path)
    }

    /// Depth-1 labels, in id order.
    pub fn roots(&self) -> &[LabelId] {
        &self.roots
    }

    pub fn parent(&self, id: LabelId) -> Result<Option<LabelId>> {
        Ok(self.node(id)?.parent)
    }

    pub fn children(&self, id: LabelId) -> Result<&[LabelId]> {
        Ok(&self.node(id)?.children)
    }

    /// Number of path segments.
    pub fn depth(&self, id: LabelId) -> Result<usize> {
        Ok(self.node(id)?.depth)
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Proper ancestors, from depth 1 downward.
    pub fn ancestors(&self, id: LabelId) -> Result<Vec<LabelId>> {
        let mut out = Vec::with_capacity(self.node(id)?.depth.saturating_sub(1));
        let mut cur = self.node(id)?.parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p.index()].parent;
        }
        out.reverse();
        Ok(out)
    }

    /// The chain from the depth-1 ancestor down to and including `id`.
    pub fn path_to(&self, id: LabelId) -> Result<Vec<LabelId>> {
        let mut chain = self.ancestors(id)?;
        chain.push(id);
        Ok(chain)
    }

    /// The depth-1 ancestor of `id`, or `id` itself at depth 1.
    pub fn top_level(&self, id: LabelId) -> Result<LabelId> {
        let mut cur = id;
        while let Some(p) = self.node(cur)?.parent {
            cur = p;
        }
        Ok(cur)
    }

    /// Input labels together with all of their ancestors.
    pub fn closure(&self, labels: &LabelSet) -> Result<LabelSet> {
        let mut out = LabelSet::new();
        for &id in labels {
            let mut cur = Some(id);
            self.node(id)?;
            while let Some(c) = cur {
                if !out.insert(c) {
                    break;
                }
                cur = self.nodes[c.index()].parent;
            }
        }
        Ok(out)
    }

    /// True when every label's parent is also present.
    pub fn is_closed(&self, labels: &LabelSet) -> bool {
        labels.iter().all(|&id| match self.nodes.get(id.index()) {
            Some(node) => node.parent.is_none_or(|p| labels.contains(&p)),
            None => false,
        })
    }

    /// Other labels sharing `id`'s parent. Depth-1 labels are siblings of each
    /// other under the implicit root.
    pub fn siblings(&self, id: LabelId) -> Result<Vec<LabelId>> {
        let family: &[LabelId] = match self.node(id)?.parent {
            Some(p) => &self.nodes[p.index()].children,
            None => &self.roots,
        };
        Ok(family.iter().copied().filter(|&s| s != id).collect())
    }

    /// Proper-ancestor test; `is_ancestor(t, t)` is false.
    pub fn is_ancestor(&self, ancestor: LabelId, descendant: LabelId) -> Result<bool> {
        self.node(ancestor)?;
        let mut cur = self.node(descendant)?.parent;
        while let Some(p) = cur {
            if p == ancestor {
                return Ok(true);
            }
            cur = self.nodes[p.index()].parent;
        }
        Ok(false)
    }

    /// Proper descendants of `id`, in id order.
    pub fn descendants(&self, id: LabelId) -> Result<Vec<LabelId>> {
        let mut out = Vec::new();
        let mut stack: Vec<LabelId> = self.node(id)?.children.iter().rev().copied().collect();
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend(self.nodes[c.index()].children.iter().rev().copied());
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Every label set that is a single root-to-node chain, one per label and
    /// in label order. The root-only (empty) configuration is not included.
    pub fn valid_configurations(&self) -> Vec<LabelSet> {
        self.ids()
            .map(|id| {
                self.path_to(id)
                    .expect("id from this taxonomy")
                    .into_iter()
                    .collect()
            })
            .collect()
    }

    /// Labels of the set that have no descendant in the set.
    pub fn most_specific(&self, labels: &LabelSet) -> LabelSet {
        labels
            .iter()
            .copied()
            .filter(|&id| {
                self.nodes
                    .get(id.index())
                    .is_none_or(|n| !n.children.iter().any(|c| labels.contains(c)))
            })
            .collect()
    }

    /// Resolves a list of label paths into a closed label set.
    pub fn resolve_closed<'a, I>(&self, paths: I) -> Result<LabelSet>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let set = paths
            .into_iter()
            .map(|p| self.id(p))
            .collect::<Result<LabelSet>>()?;
        self.closure(&set)
    }

    /// Paths of a label set, in id order.
    pub fn paths_of(&self, labels: &LabelSet) -> Vec<String> {
        labels.iter().map(|&id| self.path(id).to_string()).collect()
    }
}
