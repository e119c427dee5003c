//! Constraint feature space over three-event subgraphs.
//!
//! A text-ordered triple `(i, j, k)` is encoded as 42 binary features:
//!
//! | positions | content                                              |
//! |-----------|------------------------------------------------------|
//! | 0..5      | pair `(i, j)`: `[PC, CP, Coref, NoRel, same_segment]` |
//! | 5..10     | pair `(j, k)`, same layout                           |
//! | 10..42    | one indicator per subset of the 5 features of `(i, k)` |
//!
//! Subset indices use the bit order `same_segment = bit 0, NoRel = bit 1,
//! Coref = bit 2, CP = bit 3, PC = bit 4`. Only the 8 subsets holding exactly
//! one relation bit describe a real assignment; the other 24 slots stay zero.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, RelationLabel};
use crate::error::{Error, Result};

pub const PAIR_DIM: usize = 5;
pub const POWERSET_DIM: usize = 32;
pub const FEATURE_DIM: usize = 2 * PAIR_DIM + POWERSET_DIM;
/// Offset of the power-set block within the feature vector.
pub const POWERSET_OFFSET: usize = 2 * PAIR_DIM;

/// One concrete value of a pair's features: a relation and a segment flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairAssignment {
    pub relation: RelationLabel,
    pub same_segment: bool,
}

impl PairAssignment {
    pub const COUNT: usize = 8;

    /// All well-formed assignments, in increasing subset-index order.
    pub const ALL: [PairAssignment; Self::COUNT] = [
        PairAssignment::new(RelationLabel::NoRel, false),
        PairAssignment::new(RelationLabel::NoRel, true),
        PairAssignment::new(RelationLabel::Coref, false),
        PairAssignment::new(RelationLabel::Coref, true),
        PairAssignment::new(RelationLabel::ChildParent, false),
        PairAssignment::new(RelationLabel::ChildParent, true),
        PairAssignment::new(RelationLabel::ParentChild, false),
        PairAssignment::new(RelationLabel::ParentChild, true),
    ];

    pub const fn new(relation: RelationLabel, same_segment: bool) -> Self {
        Self {
            relation,
            same_segment,
        }
    }

    fn relation_bit(r: RelationLabel) -> usize {
        match r {
            RelationLabel::ParentChild => 4,
            RelationLabel::ChildParent => 3,
            RelationLabel::Coref => 2,
            RelationLabel::NoRel => 1,
        }
    }

    /// Index of this assignment's subset within the 32-slot power-set block.
    pub fn subset_index(self) -> usize {
        (1 << Self::relation_bit(self.relation)) | self.same_segment as usize
    }

    /// Inverse of [`subset_index`](Self::subset_index) for well-formed subsets.
    pub fn from_subset_index(idx: usize) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.subset_index() == idx)
    }

    /// Position in [`ALL`](Self::ALL).
    pub fn ordinal(self) -> usize {
        2 * (3 - self.relation.index()) + self.same_segment as usize
    }
}

impl fmt::Display for PairAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.relation, if self.same_segment { "same" } else { "across" })
    }
}

/// Set of well-formed assignments, as a bitmask over [`PairAssignment::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ValueSet(pub u8);

impl ValueSet {
    pub const EMPTY: ValueSet = ValueSet(0);
    pub const FULL: ValueSet = ValueSet(u8::MAX);

    pub fn insert(&mut self, a: PairAssignment) {
        self.0 |= 1 << a.ordinal();
    }

    pub fn contains(self, a: PairAssignment) -> bool {
        self.0 & (1 << a.ordinal()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset_of(self, other: ValueSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: ValueSet) -> ValueSet {
        ValueSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = PairAssignment> {
        PairAssignment::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// All 256 value sets, in mask order.
    pub fn all() -> impl Iterator<Item = ValueSet> {
        (0..=u8::MAX).map(ValueSet)
    }
}

impl FromIterator<PairAssignment> for ValueSet {
    fn from_iter<I: IntoIterator<Item = PairAssignment>>(iter: I) -> Self {
        let mut s = ValueSet::EMPTY;
        for a in iter {
            s.insert(a);
        }
        s
    }
}

pub fn encode_pair(a: PairAssignment) -> [u8; PAIR_DIM] {
    let mut v = [0u8; PAIR_DIM];
    v[a.relation.index()] = 1;
    v[4] = a.same_segment as u8;
    v
}

pub fn encode_powerset(values: ValueSet) -> [u8; POWERSET_DIM] {
    let mut v = [0u8; POWERSET_DIM];
    for a in values.iter() {
        v[a.subset_index()] = 1;
    }
    v
}

/// Binary 42-dimensional subgraph encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubgraphFeature(pub [u8; FEATURE_DIM]);

impl SubgraphFeature {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn to_vec<T: crate::Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|&b| if b == 1 { T::one() } else { T::zero() }).collect()
    }

    /// Decodes the antecedent pairs and the value set of the third pair.
    pub fn decode(&self) -> Option<(PairAssignment, PairAssignment, ValueSet)> {
        let pair = |off: usize| {
            let rel: Vec<usize> = (0..4).filter(|&r| self.0[off + r] == 1).collect();
            (rel.len() == 1).then(|| PairAssignment::new(RelationLabel::from_index(rel[0]), self.0[off + 4] == 1))
        };
        let (aij, ajk) = (pair(0)?, pair(PAIR_DIM)?);
        let mut values = ValueSet::EMPTY;
        for s in 0..POWERSET_DIM {
            if self.0[POWERSET_OFFSET + s] == 1 {
                values.insert(PairAssignment::from_subset_index(s)?);
            }
        }
        Some((aij, ajk, values))
    }

    /// Entries binary, one relation bit per pair block, no ill-formed subsets.
    pub fn is_well_formed(&self) -> bool {
        self.0.iter().all(|&b| b <= 1) && self.decode().is_some()
    }
}

pub fn featurize_subgraph(aij: PairAssignment, ajk: PairAssignment, values_ik: ValueSet) -> SubgraphFeature {
    let mut x = [0u8; FEATURE_DIM];
    x[..PAIR_DIM].copy_from_slice(&encode_pair(aij));
    x[PAIR_DIM..POWERSET_OFFSET].copy_from_slice(&encode_pair(ajk));
    x[POWERSET_OFFSET..].copy_from_slice(&encode_powerset(values_ik));
    SubgraphFeature(x)
}

/// A subgraph feature vector with its legitimacy label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintExample {
    #[serde(with = "feature_serde")]
    pub x: SubgraphFeature,
    pub t: u8,
}

mod feature_serde {
    use super::{SubgraphFeature, FEATURE_DIM};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &SubgraphFeature, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(x.0.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SubgraphFeature, D::Error> {
        let v = Vec::<u8>::deserialize(d)?;
        let arr: [u8; FEATURE_DIM] = v
            .try_into()
            .map_err(|v: Vec<u8>| D::Error::custom(format!("expected {FEATURE_DIM} features, got {}", v.len())))?;
        Ok(SubgraphFeature(arr))
    }
}

pub type Antecedent = (PairAssignment, PairAssignment);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// Negatives sampled per positive: `ceil(neg_ratio)`.
    pub neg_ratio: f64,
    pub seed: u64,
    /// Upper bound on text-ordered triples visited per document.
    pub triple_cap: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            neg_ratio: 1.0,
            seed: 0,
            triple_cap: 5000,
        }
    }
}

/// All text-ordered triples `i < j < k` over `n` events, or a uniform sample
/// of `cap` of them (kept in lexicographic order).
pub fn sample_triples<R: Rng>(n: usize, cap: usize, rng: &mut R) -> Vec<(usize, usize, usize)> {
    let mut all = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                all.push((i, j, k));
            }
        }
    }
    if all.len() <= cap {
        return all;
    }
    let mut picked = sample(rng, all.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|p| all[p]).collect()
}

/// Gold assignment of pair `(i, j)`; needs same-segment labels.
pub fn pair_assignment(doc: &Document, i: usize, j: usize) -> Result<PairAssignment> {
    let p = doc.pair_labels.get(i, j);
    let z = p.same_segment.ok_or_else(|| {
        Error::Precondition(format!(
            "document `{}` pair ({}, {}) lacks a same_segment label",
            doc.id, doc.events[i].id, doc.events[j].id
        ))
    })?;
    Ok(PairAssignment::new(p.relation, z))
}

/// Union of observed `(i, k)` assignments per antecedent `((i, j), (j, k))`.
pub fn observed_unions(docs: &[Document], triple_cap: usize, seed: u64) -> Result<BTreeMap<Antecedent, ValueSet>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unions: BTreeMap<Antecedent, ValueSet> = BTreeMap::new();
    for doc in docs {
        for (i, j, k) in sample_triples(doc.num_events(), triple_cap, &mut rng) {
            let key = (pair_assignment(doc, i, j)?, pair_assignment(doc, j, k)?);
            unions.entry(key).or_default().insert(pair_assignment(doc, i, k)?);
        }
    }
    Ok(unions)
}

/// Positives are the observed unions of the training split; negatives share
/// the antecedents but carry a value set that is not a subset of the union.
pub fn mine_training_examples(corpus: &Corpus, cfg: &MiningConfig) -> Result<Vec<ConstraintExample>> {
    let (train, _) = corpus.train_test();
    if train.iter().all(|d| d.num_events() < 3) {
        log::warn!("no document in the training split has three events; no constraint examples mined");
        return Ok(Vec::new());
    }
    let unions = observed_unions(train, cfg.triple_cap, cfg.seed)?;
    let per_positive = cfg.neg_ratio.max(0.0).ceil() as usize;
    // Separate stream from triple sampling so negatives do not depend on the cap.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut out = Vec::new();
    for (&(aij, ajk), &union) in &unions {
        out.push(ConstraintExample {
            x: featurize_subgraph(aij, ajk, union),
            t: 1,
        });
        if union == ValueSet::FULL {
            continue;
        }
        for _ in 0..per_positive {
            let v = loop {
                let cand = ValueSet(rng.gen::<u8>());
                if !cand.is_subset_of(union) {
                    break cand;
                }
            };
            out.push(ConstraintExample {
                x: featurize_subgraph(aij, ajk, v),
                t: 0,
            });
        }
    }
    Ok(out)
}

/// Allowed sets for all 64 antecedents; unobserved antecedents allow nothing.
pub fn complete_antecedents(observed: &BTreeMap<Antecedent, ValueSet>) -> BTreeMap<Antecedent, ValueSet> {
    let mut out = BTreeMap::new();
    for aij in PairAssignment::ALL {
        for ajk in PairAssignment::ALL {
            out.insert((aij, ajk), observed.get(&(aij, ajk)).copied().unwrap_or(ValueSet::EMPTY));
        }
    }
    out
}

/// Every value set for every listed antecedent, labeled legitimate iff it is
/// non-empty and contained in the antecedent's allowed set.
pub fn exhaustive_examples(allowed: &BTreeMap<Antecedent, ValueSet>) -> Vec<ConstraintExample> {
    let mut out = Vec::with_capacity(allowed.len() * 256);
    for (&(aij, ajk), &ok) in allowed {
        for v in ValueSet::all() {
            out.push(ConstraintExample {
                x: featurize_subgraph(aij, ajk, v),
                t: (!v.is_empty() && v.is_subset_of(ok)) as u8,
            });
        }
    }
    out
}

pub fn write_examples(examples: &[ConstraintExample], mut w: impl std::io::Write) -> Result<()> {
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples(text: &str) -> Result<Vec<ConstraintExample>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let e: ConstraintExample = serde_json::from_str(l).map_err(|e| Error::Parse {
                path: "examples".into(),
                line: k + 1,
                msg: e.to_string(),
            })?;
            if e.t > 1 {
                return Err(Error::Parse {
                    path: "examples".into(),
                    line: k + 1,
                    msg: format!("label t must be 0 or 1, got {}", e.t),
                });
            }
            Ok(e)
        })
        .collect()
}
