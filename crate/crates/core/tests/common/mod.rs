//! Test-only oracles, independent of the library's algorithms.

#![allow(dead_code)]

pub mod gradcheck;

use std::collections::{BTreeMap, BTreeSet};

use subseg::corpus::RelationLabel::{self, *};
use subseg::features::{Antecedent, PairAssignment, ValueSet};

/// Brute-force saturation of the closure rules over literal facts.
///
/// Returns the label of every ordered pair `a != b`, or `Err((a, b))` naming a
/// pair that ends up with two labels (or a self-membership).
pub fn saturate(n: usize, facts: &[(usize, usize, RelationLabel)]) -> Result<Vec<Vec<RelationLabel>>, (usize, usize)> {
    let mut set: BTreeSet<(RelationLabel, usize, usize)> = facts
        .iter()
        .filter(|f| f.2 != NoRel)
        .map(|&(a, b, r)| (r, a, b))
        .collect();
    loop {
        let mut new = Vec::new();
        for &(r1, a, b) in &set {
            match r1 {
                ParentChild => new.push((ChildParent, b, a)),
                ChildParent => new.push((ParentChild, b, a)),
                Coref => new.push((Coref, b, a)),
                NoRel => {}
            }
            for &(r2, b2, c) in &set {
                if b2 != b {
                    continue;
                }
                match (r1, r2) {
                    (ParentChild, ParentChild) => new.push((ParentChild, a, c)),
                    (Coref, Coref) => new.push((Coref, a, c)),
                    (Coref, ParentChild) => new.push((ParentChild, a, c)),
                    (ParentChild, Coref) => new.push((ParentChild, a, c)),
                    _ => {}
                }
            }
        }
        let before = set.len();
        set.extend(new);
        if set.len() == before {
            break;
        }
    }
    let mut labels = vec![vec![NoRel; n]; n];
    let mut seen = vec![vec![false; n]; n];
    for &(r, a, b) in &set {
        if a == b {
            if r == Coref {
                continue;
            }
            return Err((a, a));
        }
        if seen[a][b] && labels[a][b] != r {
            return Err((a.min(b), a.max(b)));
        }
        seen[a][b] = true;
        labels[a][b] = r;
    }
    Ok(labels)
}

/// A labeled triangle over events 0 < 1 < 2 is legitimate iff it is its own
/// closure without conflicts.
pub fn triangle_is_legit(rij: RelationLabel, rjk: RelationLabel, rik: RelationLabel) -> bool {
    let facts = [(0, 1, rij), (1, 2, rjk), (0, 2, rik)];
    match saturate(3, &facts) {
        Ok(l) => l[0][1] == rij && l[1][2] == rjk && l[0][2] == rik,
        Err(_) => false,
    }
}

/// Relations allowed for `(i, k)` given `(i, j)` and `(j, k)`.
pub fn allowed_relations(rij: RelationLabel, rjk: RelationLabel) -> Vec<RelationLabel> {
    RelationLabel::ALL
        .into_iter()
        .filter(|&rik| triangle_is_legit(rij, rjk, rik))
        .collect()
}

/// Membership-only oracle over all 64 antecedents: any segment flag allowed.
pub fn membership_oracle() -> BTreeMap<Antecedent, ValueSet> {
    let mut out = BTreeMap::new();
    for aij in PairAssignment::ALL {
        for ajk in PairAssignment::ALL {
            let allowed: ValueSet = allowed_relations(aij.relation, ajk.relation)
                .into_iter()
                .flat_map(|r| [PairAssignment::new(r, false), PairAssignment::new(r, true)])
                .collect();
            out.insert((aij, ajk), allowed);
        }
    }
    out
}

/// Segment flags over text-ordered events: `(i, k)` share a segment iff both
/// `(i, j)` and `(j, k)` do.
pub fn segment_flag(zij: bool, zjk: bool) -> bool {
    zij && zjk
}

pub fn membership_and_segment_oracle() -> BTreeMap<Antecedent, ValueSet> {
    membership_oracle()
        .into_iter()
        .map(|((aij, ajk), v)| {
            let z = segment_flag(aij.same_segment, ajk.same_segment);
            ((aij, ajk), v.iter().filter(|a| a.same_segment == z).collect())
        })
        .collect()
}

/// The 8 feature vectors of a parent-child chain whose third pair carries a
/// single non-parent-child value (transitivity violations), over all segment
/// flag combinations of the antecedents.
pub fn pc_transitivity_violations() -> Vec<(PairAssignment, PairAssignment, ValueSet)> {
    let mut out = Vec::new();
    for zij in [false, true] {
        for zjk in [false, true] {
            for bad in [NoRel, ChildParent] {
                let aij = PairAssignment::new(ParentChild, zij);
                let ajk = PairAssignment::new(ParentChild, zjk);
                let v: ValueSet = [PairAssignment::new(bad, zij && zjk)].into_iter().collect();
                out.push((aij, ajk, v));
            }
        }
    }
    out
}

/// One sentence, one token per event, events in text order, with the given
/// relations set symmetrically on the pair table.
pub fn line_doc(n: usize, facts: &[(usize, usize, RelationLabel)]) -> subseg::corpus::Document {
    use subseg::corpus::{Document, EventMention, PosTag, Sentence, Token};
    let sentence = Sentence {
        index: 0,
        tokens: (0..n.max(1)).map(|k| Token::new(format!("e{k}"), PosTag::Verb)).collect(),
    };
    let events = (0..n)
        .map(|k| EventMention {
            id: k as u32 + 1,
            sentence: 0,
            span: (k, k),
        })
        .collect();
    let mut d = Document::new("line", vec![sentence], events);
    for &(a, b, r) in facts {
        d.pair_labels.set_relation(a, b, r);
    }
    d
}

/// Euclidean relative error `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied())).max(1e-8);
    diff / scale
}

pub fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// `-ln sigmoid(1 - sum_k relu(w_k . x + b_k))`, written out directly.
pub fn cons_loss_oracle(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    let hinge: f64 = w
        .iter()
        .zip(b)
        .map(|(row, &bk)| (row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bk).max(0.0))
        .sum();
    -sigmoid(1.0 - hinge).ln()
}

/// Legitimacy under an allowed-set oracle: the `(i, k)` value set must be a
/// non-empty subset of what the antecedents allow.
pub fn oracle_label(oracle: &BTreeMap<Antecedent, ValueSet>, aij: PairAssignment, ajk: PairAssignment, v: ValueSet) -> bool {
    !v.is_empty() && v.is_subset_of(oracle[&(aij, ajk)])
}

/// Every (antecedents, value set) combination of `oracle`, labeled by it.
pub fn oracle_examples(oracle: &BTreeMap<Antecedent, ValueSet>) -> Vec<subseg::features::ConstraintExample> {
    let mut out = Vec::new();
    for (&(aij, ajk), _) in oracle {
        for bits in 0..=255u8 {
            let v = ValueSet(bits);
            out.push(subseg::features::ConstraintExample {
                x: subseg::features::featurize_subgraph(aij, ajk, v),
                t: oracle_label(oracle, aij, ajk, v) as u8,
            });
        }
    }
    out
}

/// Document with `m` sentences and events given as `(id, sentence)`, closed
/// under the given relations.
pub fn sentence_doc(m: usize, events: &[(u32, usize)], rels: &[(u32, u32, RelationLabel)]) -> subseg::corpus::Document {
    use subseg::corpus::{transitive_closure, Document, EventMention, PosTag, Sentence, Token};
    let sentences = (0..m)
        .map(|index| Sentence {
            index,
            tokens: (0..events.len().max(1)).map(|k| Token::new(format!("w{k}"), PosTag::Noun)).collect(),
        })
        .collect();
    let mut used = vec![0usize; m];
    let mentions = events
        .iter()
        .map(|&(id, s)| {
            used[s] += 1;
            EventMention {
                id,
                sentence: s,
                span: (used[s] - 1, used[s] - 1),
            }
        })
        .collect();
    let mut d = Document::new("fixture", sentences, mentions);
    for &(a, b, r) in rels {
        d.set_relation_by_id(a, b, r).unwrap();
    }
    transitive_closure(&d).unwrap()
}

/// Hand-traced segmentation fixtures: name, document, expected boundaries.
pub fn eventseg_fixtures() -> Vec<(&'static str, subseg::corpus::Document, Vec<bool>)> {
    vec![
        (
            "disjoint",
            // Complexes over sentences {0, 1} and {2, 4}.
            sentence_doc(5, &[(1, 0), (2, 1), (3, 2), (4, 4)], &[(1, 2, ParentChild), (3, 4, ParentChild)]),
            vec![false, true, false, false],
        ),
        (
            "removable-overlap",
            // {1@0, 2@1, 9@2} spans [0, 2] and {3@2, 5@2, 4@3} spans [2, 3];
            // only dropping the relocated child 9 separates them.
            sentence_doc(
                4,
                &[(1, 0), (2, 1), (9, 2), (3, 2), (5, 2), (4, 3)],
                &[(1, 2, ParentChild), (1, 9, ParentChild), (3, 4, ParentChild), (3, 5, ParentChild)],
            ),
            vec![false, true, false],
        ),
        (
            "irreducible-overlap",
            sentence_doc(3, &[(1, 0), (3, 0), (2, 2), (4, 2)], &[(1, 2, ParentChild), (3, 4, ParentChild)]),
            vec![false, false],
        ),
    ]
}

/// Documents whose labeler-derived boundaries equal the planted ones, and
/// the total, for a synthetic corpus without cross-segment relocation.
pub fn planted_recovery(n_docs: usize, seed: u64) -> (usize, usize) {
    let cfg = subseg::synth::GenConfig {
        n_docs,
        seed,
        within_membership_prob: 1.0,
        ..Default::default()
    };
    let corpus = subseg::synth::generate_corpus(&cfg).unwrap();
    let hits = corpus
        .documents
        .iter()
        .filter(|d| subseg::eventseg::derive_segments(d).unwrap().boundaries() == d.gold_boundaries.as_deref().unwrap())
        .count();
    (hits, corpus.documents.len())
}

/// Mean labeler-derived segments per document under the default generator.
pub fn mean_derived_segments(n_docs: usize, seed: u64) -> f64 {
    let corpus = subseg::synth::generate_corpus(&subseg::synth::GenConfig {
        n_docs,
        seed,
        ..Default::default()
    })
    .unwrap();
    let total: usize = corpus
        .documents
        .iter()
        .map(|d| subseg::eventseg::derive_segments(d).unwrap().num_segments())
        .sum();
    total as f64 / n_docs as f64
}

pub fn random_graph(rng: &mut impl rand::Rng) -> (usize, Vec<(usize, usize, RelationLabel)>) {
    let n = rng.gen_range(1..=8);
    let density = rng.gen_range(0.1..0.5);
    let mut facts = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                let r = [ParentChild, ChildParent, Coref][rng.gen_range(0..3)];
                facts.push((a, b, r));
            }
        }
    }
    (n, facts)
}

#[derive(Debug, Default)]
pub struct ClosureComparison {
    pub consistent: usize,
    pub conflicting: usize,
    pub mismatches: Vec<String>,
}

/// Runs the library closure and [`saturate`] on random graphs of at most
/// eight events; a mismatch is any differing label or error disagreement.
pub fn closure_comparison(trials: usize, seed: u64) -> ClosureComparison {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = ClosureComparison::default();
    for trial in 0..trials {
        let (n, facts) = random_graph(&mut rng);
        match (subseg::corpus::transitive_closure(&line_doc(n, &facts)), saturate(n, &facts)) {
            (Ok(closed), Ok(labels)) => {
                out.consistent += 1;
                let differs = (0..n).any(|a| (0..n).any(|b| a != b && closed.relation(a, b) != labels[a][b]));
                if differs {
                    out.mismatches.push(format!("trial {trial}: {facts:?}"));
                }
            }
            (Err(_), Err(_)) => out.conflicting += 1,
            (got, _) => out.mismatches.push(format!("trial {trial}: closure ok = {} on {facts:?}", got.is_ok())),
        }
    }
    out
}
