//! Documents, event mentions and pairwise relation labels.

mod closure;
mod io;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use closure::transitive_closure;
pub use io::{parse_corpus, parse_corpus_str, parse_document_line, write_corpus, write_document_line};
pub use stats::{compute_stats, RelationStats};

/// Fraction of documents held out for testing unless configured otherwise.
pub const DEFAULT_TEST_SPLIT: f64 = 0.20;

/// Coarse part-of-speech inventory: the 17 universal tags plus `SPACE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
    Space,
}

impl PosTag {
    pub const COUNT: usize = 18;

    pub const ALL: [PosTag; Self::COUNT] = [
        PosTag::Adj,
        PosTag::Adp,
        PosTag::Adv,
        PosTag::Aux,
        PosTag::Cconj,
        PosTag::Det,
        PosTag::Intj,
        PosTag::Noun,
        PosTag::Num,
        PosTag::Part,
        PosTag::Pron,
        PosTag::Propn,
        PosTag::Punct,
        PosTag::Sconj,
        PosTag::Sym,
        PosTag::Verb,
        PosTag::X,
        PosTag::Space,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Adj => "ADJ",
            PosTag::Adp => "ADP",
            PosTag::Adv => "ADV",
            PosTag::Aux => "AUX",
            PosTag::Cconj => "CCONJ",
            PosTag::Det => "DET",
            PosTag::Intj => "INTJ",
            PosTag::Noun => "NOUN",
            PosTag::Num => "NUM",
            PosTag::Part => "PART",
            PosTag::Pron => "PRON",
            PosTag::Propn => "PROPN",
            PosTag::Punct => "PUNCT",
            PosTag::Sconj => "SCONJ",
            PosTag::Sym => "SYM",
            PosTag::Verb => "VERB",
            PosTag::X => "X",
            PosTag::Space => "SPACE",
        }
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PosTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown POS tag `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub pos: PosTag,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: PosTag) -> Self {
        Self {
            surface: surface.into(),
            pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
}

/// An annotated event trigger. `span` is an inclusive token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventMention {
    pub id: u32,
    pub sentence: usize,
    pub span: (usize, usize),
}

/// Relation between an ordered event pair `(a, b)`.
///
/// `ParentChild` means `a` is the parent (super-event) of `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum RelationLabel {
    ParentChild,
    ChildParent,
    Coref,
    #[default]
    NoRel,
}

impl RelationLabel {
    pub const COUNT: usize = 4;

    /// Fixed label order; also the argmax tie-break order.
    pub const ALL: [RelationLabel; Self::COUNT] = [
        RelationLabel::ParentChild,
        RelationLabel::ChildParent,
        RelationLabel::Coref,
        RelationLabel::NoRel,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn converse(self) -> Self {
        match self {
            RelationLabel::ParentChild => RelationLabel::ChildParent,
            RelationLabel::ChildParent => RelationLabel::ParentChild,
            other => other,
        }
    }

    pub fn is_membership(self) -> bool {
        matches!(self, RelationLabel::ParentChild | RelationLabel::ChildParent)
    }

    pub fn code(self) -> &'static str {
        match self {
            RelationLabel::ParentChild => "PC",
            RelationLabel::ChildParent => "CP",
            RelationLabel::Coref => "COREF",
            RelationLabel::NoRel => "NOREL",
        }
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "PC" => Ok(RelationLabel::ParentChild),
            "CP" => Ok(RelationLabel::ChildParent),
            "COREF" => Ok(RelationLabel::Coref),
            "NOREL" => Ok(RelationLabel::NoRel),
            _ => Err(format!("unknown relation label `{s}`")),
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for RelationLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for RelationLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Gold indicators for one ordered pair: the relation and, once segmentation
/// labels exist, whether both events share a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairLabel {
    pub relation: RelationLabel,
    pub same_segment: Option<bool>,
}

/// Dense table of labels over all ordered event-index pairs of a document.
///
/// Converse entries are materialized: `get(j, i).relation` is always the
/// converse of `get(i, j).relation`. The diagonal is unused.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairTable {
    n: usize,
    cells: Vec<PairLabel>,
}

impl PairTable {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            cells: vec![PairLabel::default(); n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> PairLabel {
        self.cells[i * self.n + j]
    }

    pub fn relation(&self, i: usize, j: usize) -> RelationLabel {
        self.cells[i * self.n + j].relation
    }

    /// Sets `(i, j)` and its converse `(j, i)`.
    pub fn set_relation(&mut self, i: usize, j: usize, r: RelationLabel) {
        debug_assert_ne!(i, j);
        self.cells[i * self.n + j].relation = r;
        self.cells[j * self.n + i].relation = r.converse();
    }

    /// Sets one orientation only, breaking converse consistency.
    #[cfg(test)]
    pub(crate) fn set_one_way(&mut self, i: usize, j: usize, r: RelationLabel) {
        self.cells[i * self.n + j].relation = r;
    }

    /// Sets the same-segment flag symmetrically.
    pub fn set_same_segment(&mut self, i: usize, j: usize, z: Option<bool>) {
        self.cells[i * self.n + j].same_segment = z;
        self.cells[j * self.n + i].same_segment = z;
    }

    /// Text-ordered pairs `(i, j)` with `i < j`.
    pub fn ordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    /// Sorted by (sentence, token start).
    pub events: Vec<EventMention>,
    pub pair_labels: PairTable,
    /// Derived segmentation `q_0..q_{m-2}`; `true` means the sentence ends a segment.
    pub boundaries: Option<Vec<bool>>,
    /// Boundaries planted by the synthetic generator.
    pub gold_boundaries: Option<Vec<bool>>,
}

impl Document {
    /// Builds a document with all pairs `NoRel`, sorting events into text order.
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>, mut events: Vec<EventMention>) -> Self {
        events.sort_by_key(|e| (e.sentence, e.span.0, e.id));
        let n = events.len();
        Self {
            id: id.into(),
            sentences,
            events,
            pair_labels: PairTable::new(n),
            boundaries: None,
            gold_boundaries: None,
        }
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn event_index(&self, id: u32) -> Option<usize> {
        self.events.iter().position(|e| e.id == id)
    }

    pub fn relation(&self, i: usize, j: usize) -> RelationLabel {
        self.pair_labels.relation(i, j)
    }

    /// Sets a relation by event ids, materializing the converse.
    pub fn set_relation_by_id(&mut self, a: u32, b: u32, r: RelationLabel) -> Result<()> {
        let (i, j) = (self.require_event(a)?, self.require_event(b)?);
        self.pair_labels.set_relation(i, j, r);
        Ok(())
    }

    fn require_event(&self, id: u32) -> Result<usize> {
        self.event_index(id).ok_or_else(|| Error::Validation {
            doc: self.id.clone(),
            msg: format!("relation references unknown event {id}"),
        })
    }

    /// Trigger tokens of event `i`.
    pub fn trigger_tokens(&self, i: usize) -> &[Token] {
        let e = &self.events[i];
        &self.sentences[e.sentence].tokens[e.span.0..=e.span.1]
    }

    /// Checks the structural invariants of the document.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Error::Validation {
            doc: self.id.clone(),
            msg,
        };
        for (k, s) in self.sentences.iter().enumerate() {
            if s.index != k {
                return Err(fail(format!("sentence {k} carries index {}", s.index)));
            }
            if s.tokens.is_empty() {
                return Err(fail(format!("sentence {k} has no tokens")));
            }
        }
        let mut ids: Vec<u32> = self.events.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(fail(format!("duplicate event id {}", w[0])));
        }
        for e in &self.events {
            let Some(s) = self.sentences.get(e.sentence) else {
                return Err(fail(format!("event {} references missing sentence {}", e.id, e.sentence)));
            };
            if e.span.0 > e.span.1 || e.span.1 >= s.tokens.len() {
                return Err(fail(format!(
                    "event {} span [{}, {}] outside sentence {} of {} tokens",
                    e.id,
                    e.span.0,
                    e.span.1,
                    e.sentence,
                    s.tokens.len()
                )));
            }
        }
        for w in self.events.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if (a.sentence, a.span.0) > (b.sentence, b.span.0) {
                return Err(fail("events are not in text order".into()));
            }
            if a.sentence == b.sentence && b.span.0 <= a.span.1 {
                return Err(fail(format!("events {} and {} have overlapping spans", a.id, b.id)));
            }
        }
        if self.pair_labels.len() != self.events.len() {
            return Err(fail("pair table size does not match event count".into()));
        }
        for (i, j) in self.pair_labels.ordered_pairs() {
            let (f, r) = (self.pair_labels.get(i, j), self.pair_labels.get(j, i));
            if r.relation != f.relation.converse() || r.same_segment != f.same_segment {
                return Err(fail(format!(
                    "pair ({}, {}) is not converse-consistent",
                    self.events[i].id, self.events[j].id
                )));
            }
        }
        let expected = self.sentences.len().saturating_sub(1);
        for (name, b) in [("boundaries", &self.boundaries), ("gold_boundaries", &self.gold_boundaries)] {
            if let Some(b) = b {
                if b.len() != expected {
                    return Err(fail(format!("{name} has length {}, expected {expected}", b.len())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Fraction of documents held out for testing.
    pub split: f64,
}

impl Default for Corpus {
    fn default() -> Self {
        Self {
            documents: Vec::new(),
            split: DEFAULT_TEST_SPLIT,
        }
    }
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Self {
            documents,
            split: DEFAULT_TEST_SPLIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.split) {
            return Err(Error::Config(format!("split fraction {} outside [0, 1]", self.split)));
        }
        let mut ids: Vec<&str> = self.documents.iter().map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation {
                doc: w[0].to_string(),
                msg: "duplicate document id".into(),
            });
        }
        self.documents.iter().try_for_each(Document::validate)
    }

    /// Number of held-out documents: `round(split * n)`.
    pub fn num_test(&self) -> usize {
        (self.split * self.documents.len() as f64).round() as usize
    }

    /// Leading documents train, trailing documents test.
    pub fn train_test(&self) -> (&[Document], &[Document]) {
        let n_train = self.documents.len() - self.num_test();
        self.documents.split_at(n_train)
    }

    pub fn num_events(&self) -> usize {
        self.documents.iter().map(Document::num_events).sum()
    }

    /// Applies [`transitive_closure`] to every document.
    pub fn closed(&self) -> Result<Corpus> {
        let documents = self
            .documents
            .iter()
            .map(transitive_closure)
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            documents,
            split: self.split,
        })
    }
}
