//! Synthetic distant-supervision benchmark.
//!
//! Entities carry one or two context roles (taxonomy labels of depth ≥ 2) and
//! knowledge-base types that are a superset of those roles. Popular entities
//! are likely to also carry spurious types: other roles of the same top-level
//! class and sometimes the top level of another class. The resolver further
//! links some training mentions to the wrong entity. Each mention is typed
//! by its context: cue words around and above it are drawn from the cue lists
//! of its contextual type, which is sometimes backed off to the role's parent.
//! Documents have a topic that concentrates them on a few roles, so genuine
//! types recur within a document while spurious ones mostly do not.
//!
//! Training documents carry only resolver types; dev and test documents carry
//! the gold contextual labels. A separate, cleanly labeled corpus with only
//! top-level gold labels is produced for the coarse classifier.

use std::collections::BTreeSet;

use finetype_core::corpus::{Document, Mention, MentionKind, Split, Token, Topic, TypeMapping};
use finetype_core::features::ClusterMap;
use finetype_core::{LabelId, LabelSet, Taxonomy};
use rand::seq::SliceRandom;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::formats::builtin_taxonomy;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_documents: usize,
    pub dev_documents: usize,
    pub test_documents: usize,
    pub coarse_documents: usize,
    pub entities: usize,
    /// Expected share of mentions whose entity has spurious knowledge-base
    /// types. Popular entities are more likely to have them.
    pub spurious_rate: f64,
    pub min_mentions: usize,
    pub max_mentions: usize,
    /// Roles each topic concentrates on.
    pub focus_roles: usize,
    /// Probability that a mention's role comes from its topic's focus roles.
    pub focus_rate: f64,
    /// Probability that a mention's context only supports the role's parent.
    pub backoff_rate: f64,
    /// Probability that an entity has a second, sibling role.
    pub second_role_rate: f64,
    /// Probability that a mention re-mentions an entity already in the document.
    pub repeat_rate: f64,
    /// Probability that a context slot carries a cue of the contextual type.
    pub cue_rate: f64,
    /// A noisy entity has one co-type plus up to this many more, each kept
    /// with its noise probability.
    pub extra_co_types: usize,
    /// Probability that the resolver links a training mention to a wrong
    /// entity, drawn by popularity.
    pub link_error_rate: f64,
    /// Entities reserved for dev and test documents.
    pub held_out_entities: usize,
    /// Probability that a new dev or test mention refers to a held-out entity.
    pub unseen_rate: f64,
    /// Also give training mentions their gold contextual labels.
    pub train_gold: bool,
    /// Role frequencies fall off as `1 / rank^role_skew`.
    pub role_skew: f64,
    /// Probability that a noisy entity also gets a type from another
    /// top-level subtree.
    pub foreign_rate: f64,
    /// Entities of a role are picked with weight `1 / rank^popularity`.
    pub popularity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 20160101,
            train_documents: 700,
            dev_documents: 120,
            test_documents: 240,
            coarse_documents: 300,
            entities: 2000,
            spurious_rate: 0.4,
            min_mentions: 6,
            max_mentions: 10,
            focus_roles: 3,
            focus_rate: 0.85,
            backoff_rate: 0.4,
            second_role_rate: 0.1,
            repeat_rate: 0.2,
            cue_rate: 0.4,
            popularity: 1.0,
            foreign_rate: 0.25,
            role_skew: 1.0,
            train_gold: false,
            held_out_entities: 1000,
            link_error_rate: 0.2,
            extra_co_types: 5,
            unseen_rate: 0.3,
        }
    }
}

pub struct SynthCorpus {
    pub taxonomy: Taxonomy,
    /// Train, dev and test documents, in that order.
    pub documents: Vec<Document>,
    /// Training documents with clean top-level gold labels only.
    pub coarse_documents: Vec<Document>,
    pub mapping: TypeMapping,
    pub clusters: ClusterMap,
}

struct Cues {
    before: Vec<String>,
    after: Vec<String>,
    governor: Vec<String>,
    nominal: Vec<String>,
}

struct Entity {
    id: String,
    tokens: Vec<String>,
    head: usize,
    kb: Vec<String>,
}

const ONSETS: [&[&str]; 4] = [
    &["b", "d", "k", "l", "m", "n", "r", "s", "t", "v"],
    &["br", "gr", "h", "m", "p", "st", "w", "y"],
    &["cr", "dr", "f", "g", "pl", "tr", "x", "z"],
    &["ch", "j", "ph", "qu", "sk", "th", "wh", "zh"],
];
const VOWELS: [&[&str]; 4] = [
    &["a", "e", "i", "o"],
    &["ai", "ea", "o", "u"],
    &["ex", "o", "on", "y"],
    &["ae", "ia", "io", "oo"],
];
const LOWER_ONSETS: &[&str] = &["b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "w"];
const LOWER_VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ou", "ee"];

struct Lexicon {
    used: BTreeSet<String>,
}

impl Lexicon {
    fn fresh(&mut self, rng: &mut ChaCha8Rng, onsets: &[&str], vowels: &[&str], syllables: usize) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(onsets.choose(rng).unwrap());
                w.push_str(vowels.choose(rng).unwrap());
            }
            if rng.gen_bool(0.5) {
                w.push_str(onsets.choose(rng).unwrap());
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn common(&mut self, rng: &mut ChaCha8Rng) -> String {
        let n = rng.gen_range(2..=3);
        self.fresh(rng, LOWER_ONSETS, LOWER_VOWELS, n)
    }

    /// A capitalized word whose letters hint at the coarse class.
    fn proper(&mut self, rng: &mut ChaCha8Rng, class: usize) -> String {
        let n = rng.gen_range(2..=3);
        let w = self.fresh(rng, ONSETS[class], VOWELS[class], n);
        let mut c = w.chars();
        let first = c.next().unwrap().to_uppercase().collect::<String>();
        first + c.as_str()
    }
}

/// Index of the top-level ancestor among the taxonomy's roots.
fn class_of(t: &Taxonomy, label: LabelId) -> usize {
    let top = t.top_level(label).expect("label from taxonomy");
    t.roots().iter().position(|&r| r == top).unwrap()
}

fn external_ids(t: &Taxonomy, label: LabelId) -> [String; 2] {
    let base = t.path(label).replace('/', ".");
    [format!("/kb/{base}/a"), format!("/kb/{base}/b")]
}

struct World {
    taxonomy: Taxonomy,
    cues: Vec<Cues>,
    fillers: Vec<String>,
    entities: Vec<Entity>,
    by_role: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>>,
    /// Resolver prior over training entities, used for linking errors.
    linked: WeightedIndex<f64>,
    /// Entities that never occur in training documents.
    held_out_by_role: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>>,
    focus: Vec<Vec<LabelId>>,
    role_index: WeightedIndex<f64>,
    roles: Vec<LabelId>,
}

fn build_world(cfg: &SynthConfig, rng: &mut ChaCha8Rng, lex: &mut Lexicon, clusters: &mut ClusterMap, mapping: &mut TypeMapping) -> World {
    let taxonomy = builtin_taxonomy();
    let t = &taxonomy;
    let mut cues = Vec::with_capacity(t.len());
    for id in t.ids() {
        let mut list = |n: usize| -> Vec<String> { (0..n).map(|_| lex.common(rng)).collect() };
        let c = Cues {
            before: list(3),
            after: list(3),
            governor: list(2),
            nominal: list(2),
        };
        for w in c.before.iter().chain(&c.after).chain(&c.governor).chain(&c.nominal) {
            clusters.insert(w.clone(), format!("c{}", id.0));
        }
        cues.push(c);
        for ext in external_ids(t, id) {
            mapping.insert(ext, id);
        }
    }
    let fillers: Vec<String> = (0..150).map(|_| lex.common(rng)).collect();
    for (i, w) in fillers.iter().enumerate() {
        clusters.insert(w.clone(), format!("f{}", i % 10));
    }
    let first_names: Vec<String> = (0..60).map(|_| lex.proper(rng, 0)).collect();
    let org_suffixes: Vec<String> = (0..8).map(|_| lex.proper(rng, 2)).collect();
    for w in first_names.iter().chain(&org_suffixes) {
        clusters.insert(w.clone(), format!("n{}", rng.gen_range(0..40)));
    }

    let roles: Vec<LabelId> = t.ids().filter(|&id| t.depth(id).unwrap() >= 2).collect();
    // Some roles are far more common in the news than others.
    let mut order: Vec<usize> = (0..roles.len()).collect();
    order.shuffle(rng);
    let mut role_weight = vec![0.0; t.len()];
    for (rank, &i) in order.iter().enumerate() {
        role_weight[roles[i].index()] = 1.0 / ((rank + 1) as f64).powf(cfg.role_skew);
    }
    // Knowledge bases also attach the top level of another subtree to some
    // entities of each role, whatever the context.
    let foreign_type: Vec<LabelId> = t
        .ids()
        .map(|id| {
            let class = class_of(t, id);
            let others: Vec<LabelId> = t.roots().iter().copied().filter(|&x| class_of(t, x) != class).collect();
            *others.choose(rng).unwrap()
        })
        .collect();
    // Popular entities carry more knowledge-base types. An entity is noisy
    // with probability proportional to its popularity, scaled so that the
    // expected share of mentions of noisy entities is `spurious_rate`.
    let popularity = |rank: usize| 1.0 / ((rank + 1) as f64).powf(cfg.popularity);
    let ranks = cfg.entities.div_ceil(roles.len());
    let total: f64 = (0..ranks).map(popularity).sum();
    let noisy_share = |scale: f64| -> f64 {
        (0..ranks)
            .map(|k| popularity(k) / total * (scale * popularity(k)).min(1.0))
            .sum()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    // A mention carries injected types if its entity is noisy or the resolver
    // linked it to the wrong entity.
    let target = 1.0 - (1.0 - cfg.spurious_rate) / (1.0 - cfg.link_error_rate);
    while noisy_share(hi) < target && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = (lo + hi) / 2.0;
        if noisy_share(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let noise_scale = hi;
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t.len()];
    let mut entities = Vec::with_capacity(cfg.entities);
    let mut held_members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t.len()];
    for i in 0..cfg.entities + cfg.held_out_entities {
        let held_out = i >= cfg.entities;
        let slot = if held_out { i - cfg.entities } else { i };
        let r1 = roles[slot % roles.len()];
        let class = class_of(t, r1);
        let mut entity_roles = vec![r1];
        let siblings: Vec<LabelId> = t.siblings(r1).unwrap();
        if !siblings.is_empty() && rng.gen_bool(cfg.second_role_rate) {
            entity_roles.push(*siblings.choose(rng).unwrap());
        }
        let head_word = lex.proper(rng, class);
        clusters.insert(head_word.clone(), format!("n{}", 10 * class + rng.gen_range(0..10)));
        let (tokens, head) = match class {
            0 => (vec![first_names.choose(rng).unwrap().clone(), head_word], 1),
            2 if rng.gen_bool(0.5) => (vec![head_word, org_suffixes.choose(rng).unwrap().clone()], 0),
            3 if rng.gen_bool(0.5) => (vec![head_word.to_lowercase()], 0),
            _ => (vec![head_word], 0),
        };
        let mut kb_labels: Vec<LabelId> = entity_roles.clone();
        let weight = popularity(slot / roles.len());
        let noisy = (noise_scale * weight).min(1.0);
        if rng.gen_bool(noisy) {
            // Other roles of the same top-level subtree, off the role's own path.
            let related: Vec<LabelId> = roles
                .iter()
                .copied()
                .filter(|&x| {
                    class_of(t, x) == class && !t.is_ancestor(x, r1).unwrap() && !t.is_ancestor(r1, x).unwrap() && x != r1
                })
                .collect();
            let n = 1 + (0..cfg.extra_co_types).filter(|_| rng.gen_bool(noisy)).count();
            let mut extra: Vec<LabelId> = related.choose_multiple(rng, n).copied().collect();
            if extra.is_empty() || rng.gen_bool(cfg.foreign_rate) {
                extra.push(foreign_type[r1.index()]);
            }
            for pick in extra {
                if !kb_labels.contains(&pick) {
                    kb_labels.push(pick);
                }
            }
        }
        let mut kb: Vec<String> = kb_labels
            .iter()
            .map(|&l| external_ids(t, l)[rng.gen_range(0..2)].clone())
            .collect();
        kb.push("/common/topic".into());
        for &r in &entity_roles {
            if held_out {
                held_members[r.index()].push((i, weight));
            } else {
                members[r.index()].push((i, weight));
            }
        }
        entities.push(Entity {
            id: format!("e{i}"),
            tokens,
            head,
            kb,
        });
    }
    let index = |members: Vec<Vec<(usize, f64)>>| -> Vec<Option<(Vec<usize>, WeightedIndex<f64>)>> {
        members
            .into_iter()
            .map(|m| {
                (!m.is_empty()).then(|| {
                    let weights = WeightedIndex::new(m.iter().map(|&(_, w)| w)).expect("positive weights");
                    (m.into_iter().map(|(i, _)| i).collect(), weights)
                })
            })
            .collect()
    };
    let linked = WeightedIndex::new((0..cfg.entities).map(|i| popularity(i / roles.len()))).expect("positive weights");
    let by_role = index(members);
    let held_out_by_role = index(held_members);
    let focus = Topic::ALL
        .iter()
        .map(|_| {
            roles
                .choose_multiple_weighted(rng, cfg.focus_roles, |r| role_weight[r.index()])
                .expect("finite weights")
                .copied()
                .collect()
        })
        .collect();
    World {
        taxonomy,
        cues,
        fillers,
        entities,
        by_role,
        held_out_by_role,
        linked,
        focus,
        role_index: WeightedIndex::new(roles.iter().map(|r| role_weight[r.index()])).expect("positive weights"),
        roles,
    }
}

const SUBJECT_ROLES: [&str; 4] = ["nsubj", "nsubj", "dobj", "pobj"];
const OBJECT_ROLES: [&str; 4] = ["dobj", "pobj", "pobj", "nsubj"];

impl World {
    /// A cue from the contextual type, one of its ancestors, or filler.
    fn cue<'a>(&'a self, rng: &mut ChaCha8Rng, ctx: LabelId, cue_rate: f64, pick: impl Fn(&'a Cues) -> &'a [String]) -> &'a str {
        let r: f64 = rng.gen();
        if r < cue_rate {
            return pick(&self.cues[ctx.index()]).choose(rng).unwrap();
        }
        let ancestors = self.taxonomy.ancestors(ctx).unwrap();
        if r < cue_rate + (1.0 - cue_rate) / 2.0 && !ancestors.is_empty() {
            let a = *ancestors.choose(rng).unwrap();
            return pick(&self.cues[a.index()]).choose(rng).unwrap();
        }
        self.fillers.choose(rng).unwrap()
    }

    fn document(
        &self,
        cfg: &SynthConfig,
        rng: &mut ChaCha8Rng,
        id: String,
        split: Split,
        coarse_only: bool,
    ) -> Document {
        let t = &self.taxonomy;
        let topic = *Topic::ALL.choose(rng).unwrap();
        let focus = &self.focus[topic.index()];
        let n = rng.gen_range(cfg.min_mentions..=cfg.max_mentions);
        let mut sentences = Vec::with_capacity(n);
        let mut mentions = Vec::with_capacity(n);
        let mut used: Vec<(usize, LabelId)> = Vec::new();
        for s in 0..n {
            let (entity, role) = if !used.is_empty() && rng.gen_bool(cfg.repeat_rate) {
                *used.choose(rng).unwrap()
            } else {
                let role = if rng.gen_bool(cfg.focus_rate) {
                    *focus.choose(rng).unwrap()
                } else {
                    self.roles[self.role_index.sample(rng)]
                };
                let pool = if split != Split::Train && !coarse_only && rng.gen_bool(cfg.unseen_rate) {
                    &self.held_out_by_role
                } else {
                    &self.by_role
                };
                let (ids, weights) = pool[role.index()].as_ref().expect("every role has entities");
                (ids[weights.sample(rng)], role)
            };
            used.push((entity, role));
            let e = &self.entities[entity];
            let ctx = match t.parent(role).unwrap() {
                Some(p) if rng.gen_bool(cfg.backoff_rate) => p,
                _ => role,
            };

            let kind = match rng.gen::<f64>() {
                x if x < 0.8 => MentionKind::Named,
                x if x < 0.95 => MentionKind::Nominal,
                _ => MentionKind::Pronominal,
            };
            let (span, head_offset): (Vec<String>, usize) = match kind {
                MentionKind::Named => (e.tokens.clone(), e.head),
                MentionKind::Nominal => (vec!["the".into(), self.cue(rng, ctx, cfg.cue_rate, |c| &c.nominal).to_string()], 1),
                MentionKind::Pronominal => {
                    let p = match class_of(t, role) {
                        0 => ["he", "she"].choose(rng).unwrap(),
                        _ => ["it", "they"].choose(rng).unwrap(),
                    };
                    (vec![p.to_string()], 0)
                }
            };

            let mut words: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(0..=1) {
                words.push(self.fillers.choose(rng).unwrap().clone());
            }
            words.push(self.cue(rng, ctx, cfg.cue_rate, |c| &c.before).to_string());
            let start = words.len();
            words.extend(span);
            let end = words.len();
            words.push(self.cue(rng, ctx, cfg.cue_rate, |c| &c.after).to_string());
            let governor = words.len();
            words.push(self.cue(rng, ctx, cfg.cue_rate, |c| &c.governor).to_string());
            for _ in 0..rng.gen_range(0..=2) {
                words.push(self.fillers.choose(rng).unwrap().clone());
            }
            let head = start + head_offset;
            let role_labels = if class_of(t, role) == 0 { SUBJECT_ROLES } else { OBJECT_ROLES };
            let tokens: Vec<Token> = words
                .into_iter()
                .enumerate()
                .map(|(i, w)| {
                    if i == governor {
                        Token::new(w, None, "root")
                    } else if i == head {
                        Token::new(w, Some(governor), *role_labels.choose(rng).unwrap())
                    } else if (start..end).contains(&i) {
                        Token::new(w, Some(head), "compound")
                    } else {
                        Token::new(w, Some(governor), "dep")
                    }
                })
                .collect();
            sentences.push(tokens);

            let gold: LabelSet = if coarse_only {
                [t.top_level(ctx).unwrap()].into_iter().collect()
            } else {
                t.closure(&[ctx].into_iter().collect()).unwrap()
            };
            mentions.push(Mention {
                id: format!("m{s}"),
                sentence: s,
                start,
                end,
                head,
                kind,
                entity_id: Some(e.id.clone()),
                raw_types: if coarse_only {
                    Vec::new()
                } else if split == Split::Train && rng.gen_bool(cfg.link_error_rate) {
                    self.entities[self.linked.sample(rng)].kb.clone()
                } else {
                    e.kb.clone()
                },
                gold_labels: (coarse_only || split != Split::Train || cfg.train_gold).then_some(gold),
            });
        }
        Document {
            id,
            split,
            sentences,
            mentions,
            topic: Some(topic),
        }
    }
}

/// Generates the benchmark; identical configurations give identical corpora.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lex = Lexicon { used: BTreeSet::new() };
    for w in ["the", "he", "she", "it", "they"] {
        lex.used.insert(w.into());
    }
    let mut clusters = ClusterMap::new();
    let mut mapping = TypeMapping::new();
    let world = build_world(cfg, &mut rng, &mut lex, &mut clusters, &mut mapping);
    let mut documents = Vec::new();
    for (split, count, prefix) in [
        (Split::Train, cfg.train_documents, "train"),
        (Split::Dev, cfg.dev_documents, "dev"),
        (Split::Test, cfg.test_documents, "test"),
    ] {
        for i in 0..count {
            documents.push(world.document(cfg, &mut rng, format!("{prefix}-{i:05}"), split, false));
        }
    }
    let coarse_documents = (0..cfg.coarse_documents)
        .map(|i| world.document(cfg, &mut rng, format!("coarse-{i:05}"), Split::Train, true))
        .collect();
    SynthCorpus {
        taxonomy: world.taxonomy,
        documents,
        coarse_documents,
        mapping,
        clusters,
    }
}
