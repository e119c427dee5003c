//! Synthetic corpora with planted membership trees, coreference pairs and
//! segment structure.
//!
//! Every segment holds one tree whose root sits in the segment's first
//! sentence and whose anchor child sits in its last, so the tree spans the
//! segment exactly. A share of the remaining leaves is moved into a
//! neighbouring segment to create cross-segment membership pairs; the share
//! is set per document so that the expected within-segment fraction of
//! membership pairs equals `within_membership_prob`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{transitive_closure, Corpus, Document, EventMention, PosTag, RelationLabel, Sentence, Token};
use crate::error::{Error, Result};
use crate::eventseg::{pairwise_same_segment, Segmentation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_docs: usize,
    /// Inclusive range.
    pub sentences: (usize, usize),
    pub events: (usize, usize),
    pub segments: (usize, usize),
    pub within_membership_prob: f64,
    pub coref_within_prob: f64,
    /// Share of events outside every tree; these carry the coreference pairs.
    pub free_event_fraction: f64,
    /// Probability that a trigger word is drawn from its role's vocabulary
    /// rather than a shared one.
    pub role_signal: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_docs: 100,
            sentences: (8, 14),
            events: (12, 18),
            segments: (3, 5),
            within_membership_prob: 0.6513,
            coref_within_prob: 0.47,
            free_event_fraction: 0.2,
            role_signal: 0.8,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("within_membership_prob", self.within_membership_prob),
            ("coref_within_prob", self.coref_within_prob),
            ("free_event_fraction", self.free_event_fraction),
            ("role_signal", self.role_signal),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("`{name}` must lie in [0, 1], got {v}"));
            }
        }
        for (name, (lo, hi)) in [("sentences", self.sentences), ("events", self.events), ("segments", self.segments)] {
            if lo > hi || lo == 0 {
                return bad(format!("`{name}` range ({lo}, {hi}) is empty or starts at zero"));
            }
        }
        if self.segments.1 > self.sentences.0 {
            return bad(format!(
                "up to {} segments do not fit into documents of {} sentences",
                self.segments.1, self.sentences.0
            ));
        }
        if self.events.0 < 2 * self.segments.1 {
            return bad(format!(
                "{} events cannot fill {} segments with two events each",
                self.events.0, self.segments.1
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Root,
    Mid,
    Leaf,
    Free,
}

impl Role {
    fn prefix(self) -> &'static str {
        match self {
            Role::Root => "ra",
            Role::Mid => "mb",
            Role::Leaf => "lc",
            Role::Free => "fd",
        }
    }

    fn pos(self) -> PosTag {
        match self {
            Role::Root => PosTag::Noun,
            Role::Mid => PosTag::Noun,
            Role::Leaf | Role::Free => PosTag::Verb,
        }
    }
}

const ROLE_VOCAB: usize = 40;
const TOPIC_VOCAB: usize = 4;
const FILLER_VOCAB: usize = 60;

struct Planned {
    role: Role,
    /// Topic of the segment whose tree (or context) the event belongs to.
    topic: usize,
    sentence: usize,
    parent: Option<usize>,
    trigger: String,
}

fn split_sizes(total: usize, parts: usize, min: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sizes = vec![min; parts];
    for _ in 0..total - min * parts {
        sizes[rng.gen_range(0..parts)] += 1;
    }
    sizes
}

fn trigger(role: Role, signal: f64, rng: &mut ChaCha8Rng) -> String {
    if rng.gen::<f64>() < signal {
        format!("{}{}", role.prefix(), rng.gen_range(0..ROLE_VOCAB))
    } else {
        format!("ev{}", rng.gen_range(0..ROLE_VOCAB))
    }
}

fn generate_document(index: usize, cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Document {
    let m = rng.gen_range(cfg.sentences.0..=cfg.sentences.1);
    let s = rng.gen_range(cfg.segments.0..=cfg.segments.1);
    let n = rng.gen_range(cfg.events.0..=cfg.events.1);
    let n_free = ((n as f64) * cfg.free_event_fraction).round() as usize;
    let n_free = n_free.min(n - 2 * s);
    let lengths = split_sizes(m, s, 1, rng);
    let spans: Vec<(usize, usize)> = lengths
        .iter()
        .scan(0, |start, &len| {
            let span = (*start, *start + len - 1);
            *start += len;
            Some(span)
        })
        .collect();
    let topics: Vec<usize> = (0..s).map(|_| rng.gen_range(0..1_000)).collect();

    let mut events: Vec<Planned> = Vec::new();
    let mut eligible: Vec<(usize, usize)> = Vec::new();
    let mut membership_pairs = 0usize;
    let mut eligible_depth = 0usize;
    let min_tree = if n - n_free >= 3 * s { 3 } else { 2 };
    for (seg, &size) in split_sizes(n - n_free, s, min_tree, rng).iter().enumerate() {
        let (lo, hi) = spans[seg];
        let root = events.len();
        let mut place = |role: Role, parent: Option<usize>, sentence: usize, rng: &mut ChaCha8Rng| {
            events.push(Planned {
                role,
                topic: topics[seg],
                sentence,
                parent,
                trigger: trigger(role, cfg.role_signal, rng),
            });
            events.len() - 1
        };
        place(Role::Root, None, lo, rng);
        if size == 2 {
            place(Role::Leaf, Some(root), hi, rng);
            membership_pairs += 1;
            continue;
        }
        let n_mid = (size - 1).div_ceil(3);
        let mids: Vec<usize> = (0..n_mid)
            .map(|k| {
                let sentence = if k == 0 { hi } else { rng.gen_range(lo..=hi) };
                place(Role::Mid, Some(root), sentence, rng)
            })
            .collect();
        membership_pairs += n_mid;
        for _ in 0..size - 1 - n_mid {
            let parent = *mids.choose(rng).expect("at least one mid");
            let leaf = place(Role::Leaf, Some(parent), rng.gen_range(lo..=hi), rng);
            eligible.push((leaf, seg));
            membership_pairs += 2;
            eligible_depth += 2;
        }
    }

    // Relocate leaves so that the expected across-segment share is 1 - p.
    let q = if eligible_depth == 0 || s < 2 {
        0.0
    } else {
        ((1.0 - cfg.within_membership_prob) * membership_pairs as f64 / eligible_depth as f64).min(1.0)
    };
    for &(leaf, seg) in &eligible {
        if rng.gen::<f64>() >= q {
            continue;
        }
        let target = match seg {
            0 => 1,
            x if x + 1 == s => x - 1,
            x if rng.gen::<bool>() => x - 1,
            x => x + 1,
        };
        let (lo, hi) = spans[target];
        events[leaf].sentence = if hi > lo { rng.gen_range(lo + 1..=hi) } else { lo };
    }

    // Free events, paired for coreference where possible.
    let seg_sentence = |seg: usize, rng: &mut ChaCha8Rng| rng.gen_range(spans[seg].0..=spans[seg].1);
    let mut coref = Vec::new();
    let mut k = 0;
    while k < n_free {
        let seg = rng.gen_range(0..s);
        let word = trigger(Role::Free, cfg.role_signal, rng);
        let a = events.len();
        events.push(Planned {
            role: Role::Free,
            topic: topics[seg],
            sentence: seg_sentence(seg, rng),
            parent: None,
            trigger: word.clone(),
        });
        k += 1;
        if k < n_free {
            let other = if s == 1 || rng.gen::<f64>() < cfg.coref_within_prob {
                seg
            } else {
                let mut o = rng.gen_range(0..s - 1);
                if o >= seg {
                    o += 1;
                }
                o
            };
            events.push(Planned {
                role: Role::Free,
                topic: topics[other],
                sentence: seg_sentence(other, rng),
                parent: None,
                trigger: word,
            });
            coref.push((a, a + 1));
            k += 1;
        }
    }

    // Realize sentences: filler and topical context around each trigger.
    let mut by_sentence: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (e, p) in events.iter().enumerate() {
        by_sentence[p.sentence].push(e);
    }
    let mut mentions = vec![None; events.len()];
    let mut sentences = Vec::with_capacity(m);
    for (si, members) in by_sentence.iter_mut().enumerate() {
        members.shuffle(rng);
        let seg = spans.iter().position(|&(lo, hi)| (lo..=hi).contains(&si)).expect("covered");
        let topical = |topic: usize, rng: &mut ChaCha8Rng| format!("t{topic}w{}", rng.gen_range(0..TOPIC_VOCAB));
        let mut tokens = vec![Token::new(format!("f{}", rng.gen_range(0..FILLER_VOCAB)), PosTag::Det)];
        for &e in members.iter() {
            let p = &events[e];
            tokens.push(Token::new(topical(p.topic, rng), PosTag::Adj));
            let at = tokens.len();
            tokens.push(Token::new(p.trigger.clone(), p.role.pos()));
            tokens.push(Token::new(topical(p.topic, rng), PosTag::Noun));
            mentions[e] = Some(EventMention {
                id: e as u32 + 1,
                sentence: si,
                span: (at, at),
            });
        }
        tokens.push(Token::new(topical(topics[seg], rng), PosTag::Noun));
        tokens.push(Token::new(".", PosTag::Punct));
        sentences.push(Sentence { index: si, tokens });
    }
    let mentions: Vec<EventMention> = mentions.into_iter().map(|x| x.expect("placed")).collect();

    let mut doc = Document::new(format!("synth-{index:05}"), sentences, mentions);
    for (e, p) in events.iter().enumerate() {
        if let Some(parent) = p.parent {
            doc.set_relation_by_id(parent as u32 + 1, e as u32 + 1, RelationLabel::ParentChild)
                .expect("planted ids exist");
        }
    }
    for (a, b) in coref {
        doc.set_relation_by_id(a as u32 + 1, b as u32 + 1, RelationLabel::Coref)
            .expect("planted ids exist");
    }
    let doc = transitive_closure(&doc).expect("planted forests are acyclic");
    let mut boundaries = vec![false; m - 1];
    for &(_, hi) in &spans[..s - 1] {
        boundaries[hi] = true;
    }
    let seg = Segmentation::from_boundaries(boundaries.clone());
    let mut doc = pairwise_same_segment(&doc, &seg);
    doc.gold_boundaries = Some(boundaries);
    doc
}

/// Documents are generated from per-document seeds derived from `cfg.seed`,
/// so a corpus is a pure function of its configuration.
pub fn generate_corpus(cfg: &GenConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let documents = (0..cfg.n_docs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
            generate_document(i, cfg, &mut rng)
        })
        .collect();
    Ok(Corpus::new(documents))
}
