//! Gold event-based segmentation derived from membership annotations.
//!
//! Each connected component of the parent-child graph is an event complex
//! whose sentence span is a descriptive context. Overlapping contexts are
//! separated by ignoring one event when that suffices, and merged otherwise.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::corpus::{Corpus, Document, RelationLabel};
use crate::error::{Error, Result};

/// Sentence-level segmentation: `boundaries[i]` is true when sentence `i`
/// ends a segment. A document of `m` sentences has `m - 1` boundary slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    num_sentences: usize,
    boundaries: Vec<bool>,
}

impl Segmentation {
    /// Single segment over `m` sentences.
    pub fn single(m: usize) -> Self {
        Self {
            num_sentences: m,
            boundaries: vec![false; m.saturating_sub(1)],
        }
    }

    pub fn from_boundaries(boundaries: Vec<bool>) -> Self {
        Self {
            num_sentences: boundaries.len() + 1,
            boundaries,
        }
    }

    /// Like [`from_boundaries`](Self::from_boundaries) but keeps an explicit
    /// sentence count, so zero-sentence documents are representable.
    pub fn from_sentence_boundaries(num_sentences: usize, boundaries: Vec<bool>) -> Self {
        debug_assert_eq!(boundaries.len(), num_sentences.saturating_sub(1));
        Self {
            num_sentences,
            boundaries,
        }
    }

    /// Segmentation stored on a document, if any.
    pub fn of_document(doc: &Document) -> Option<Self> {
        doc.boundaries.as_ref().map(|b| Self {
            num_sentences: doc.num_sentences(),
            boundaries: b.clone(),
        })
    }

    pub fn boundaries(&self) -> &[bool] {
        &self.boundaries
    }

    pub fn num_sentences(&self) -> usize {
        self.num_sentences
    }

    /// Inclusive sentence ranges; maximal runs delimited by boundaries.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        if self.num_sentences == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut start = 0;
        for (i, &b) in self.boundaries.iter().enumerate() {
            if b {
                out.push((start, i));
                start = i + 1;
            }
        }
        out.push((start, self.num_sentences - 1));
        out
    }

    pub fn num_segments(&self) -> usize {
        self.segments().len()
    }

    /// Index of the segment containing `sentence`.
    pub fn segment_of(&self, sentence: usize) -> usize {
        self.boundaries[..sentence].iter().filter(|&&b| b).count()
    }
}

/// A connected group of events linked by membership, with its sentence span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventComplex {
    pub root: u32,
    pub members: BTreeSet<u32>,
    /// Inclusive `[first, last]` sentence indices.
    pub span: (usize, usize),
}

/// Parent-to-child graph over events that take part in a membership relation.
/// Nodes are event indices into the document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MembershipDag {
    pub nodes: BTreeSet<usize>,
    pub children: BTreeMap<usize, BTreeSet<usize>>,
}

impl MembershipDag {
    pub fn num_edges(&self) -> usize {
        self.children.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn has_parent_within(&self, node: usize, within: &BTreeSet<usize>) -> bool {
        self.children
            .iter()
            .any(|(p, cs)| within.contains(p) && cs.contains(&node))
    }

    /// Weakly connected components of the subgraph induced by `within`.
    fn components(&self, within: &BTreeSet<usize>) -> Vec<BTreeSet<usize>> {
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&p, cs) in &self.children {
            for &c in cs {
                if within.contains(&p) && within.contains(&c) {
                    adj.entry(p).or_default().push(c);
                    adj.entry(c).or_default().push(p);
                }
            }
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in within {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = BTreeSet::from([start]);
            let mut queue = VecDeque::from([start]);
            while let Some(x) = queue.pop_front() {
                for &y in adj.get(&x).into_iter().flatten() {
                    if seen.insert(y) {
                        comp.insert(y);
                        queue.push_back(y);
                    }
                }
            }
            out.push(comp);
        }
        out
    }
}

/// Builds the membership graph; fails if the relations contain a cycle.
pub fn build_membership_dag(doc: &Document) -> Result<MembershipDag> {
    let n = doc.num_events();
    let mut dag = MembershipDag::default();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (parent, child) = match doc.relation(i, j) {
                RelationLabel::ParentChild => (i, j),
                RelationLabel::ChildParent => (j, i),
                _ => continue,
            };
            dag.nodes.insert(parent);
            dag.nodes.insert(child);
            dag.children.entry(parent).or_default().insert(child);
        }
    }
    if let Some((a, b)) = find_cycle_edge(&dag) {
        let (a, b) = (doc.events[a].id, doc.events[b].id);
        return Err(Error::Inconsistent {
            doc: doc.id.clone(),
            a: a.min(b),
            b: a.max(b),
            msg: "membership relations form a cycle".into(),
        });
    }
    Ok(dag)
}

/// Depth-first search; returns a back edge if one exists.
fn find_cycle_edge(dag: &MembershipDag) -> Option<(usize, usize)> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark: BTreeMap<usize, Mark> = dag.nodes.iter().map(|&v| (v, Mark::New)).collect();
    let empty = BTreeSet::new();
    for &root in &dag.nodes {
        if mark[&root] != Mark::New {
            continue;
        }
        let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
        mark.insert(root, Mark::Active);
        stack.push((root, dag.children.get(&root).unwrap_or(&empty).iter().copied().collect()));
        while let Some((v, pending)) = stack.last_mut() {
            let v = *v;
            match pending.pop() {
                Some(c) => match mark[&c] {
                    Mark::Active => return Some((v, c)),
                    Mark::New => {
                        mark.insert(c, Mark::Active);
                        let next = dag.children.get(&c).unwrap_or(&empty).iter().copied().collect();
                        stack.push((c, next));
                    }
                    Mark::Done => {}
                },
                None => {
                    mark.insert(v, Mark::Done);
                    stack.pop();
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone)]
struct Context {
    root: usize,
    members: BTreeSet<usize>,
    ignored: BTreeSet<usize>,
}

impl Context {
    fn span_without(&self, doc: &Document, extra: Option<usize>) -> Option<(usize, usize)> {
        let mut it = self
            .members
            .iter()
            .filter(|&&e| !self.ignored.contains(&e) && Some(e) != extra)
            .map(|&e| doc.events[e].sentence);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), s| (lo.min(s), hi.max(s))))
    }

    fn span(&self, doc: &Document) -> (usize, usize) {
        self.span_without(doc, None).expect("context keeps at least one event")
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

fn overlap_len(a: (usize, usize), b: (usize, usize)) -> usize {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo <= hi {
        hi - lo + 1
    } else {
        0
    }
}

fn total_overlap(spans: &[(usize, usize)]) -> usize {
    let mut t = 0;
    for i in 0..spans.len() {
        for j in i + 1..spans.len() {
            t += overlap_len(spans[i], spans[j]);
        }
    }
    t
}

/// Final, pairwise disjoint event complexes used to place boundaries,
/// sorted by span.
pub fn derive_complexes(doc: &Document) -> Result<Vec<EventComplex>> {
    let dag = build_membership_dag(doc)?;
    if dag.is_empty() {
        return Ok(Vec::new());
    }
    let mut within = dag.nodes.clone();
    let mut comps = dag.components(&within);
    if comps.len() == 1 {
        // A single complex: drop its root(s) and split into sub-complexes.
        let roots: Vec<usize> = within
            .iter()
            .copied()
            .filter(|&v| !dag.has_parent_within(v, &dag.nodes))
            .collect();
        for r in roots {
            within.remove(&r);
        }
        comps = dag.components(&within);
    }
    let mut ctxs: Vec<Context> = comps
        .into_iter()
        .map(|members| {
            let root = members
                .iter()
                .copied()
                .find(|&v| !dag.has_parent_within(v, &members))
                .expect("acyclic component has a root");
            Context {
                root,
                members,
                ignored: BTreeSet::new(),
            }
        })
        .collect();

    loop {
        ctxs.sort_by_key(|c| {
            let s = c.span(doc);
            (s.0, s.1, c.root)
        });
        let spans: Vec<(usize, usize)> = ctxs.iter().map(|c| c.span(doc)).collect();
        let clash = (0..ctxs.len())
            .flat_map(|a| (a + 1..ctxs.len()).map(move |b| (a, b)))
            .find(|&(a, b)| overlaps(spans[a], spans[b]));
        let Some((a, b)) = clash else { break };

        // (total overlap, event id, owning context, event index)
        let mut best: Option<(usize, u32, usize, usize)> = None;
        for owner in [a, b] {
            for &e in &ctxs[owner].members {
                if ctxs[owner].ignored.contains(&e) {
                    continue;
                }
                let Some(reduced) = ctxs[owner].span_without(doc, Some(e)) else {
                    continue;
                };
                let mut trial = spans.clone();
                trial[owner] = reduced;
                if overlaps(trial[a], trial[b]) {
                    continue;
                }
                let key = (total_overlap(&trial), doc.events[e].id, owner, e);
                if best.is_none_or(|cur| (key.0, key.1) < (cur.0, cur.1)) {
                    best = Some(key);
                }
            }
        }
        match best {
            Some((_, _, owner, e)) => {
                ctxs[owner].ignored.insert(e);
            }
            None => {
                let absorbed = ctxs.remove(b);
                let keep = &mut ctxs[a];
                keep.members.extend(absorbed.members);
                keep.ignored.extend(absorbed.ignored);
                if doc.events[absorbed.root].id < doc.events[keep.root].id
                    && !dag.has_parent_within(absorbed.root, &keep.members)
                {
                    keep.root = absorbed.root;
                }
            }
        }
    }

    Ok(ctxs
        .iter()
        .map(|c| EventComplex {
            root: doc.events[c.root].id,
            members: c.members.iter().map(|&e| doc.events[e].id).collect(),
            span: c.span(doc),
        })
        .collect())
}

/// Gold segmentation of one document. Sentences outside every complex join
/// the preceding segment (leading ones join the first).
pub fn derive_segments(doc: &Document) -> Result<Segmentation> {
    let m = doc.num_sentences();
    let complexes = derive_complexes(doc)?;
    let mut seg = Segmentation::single(m);
    for c in complexes.iter().skip(1) {
        seg.boundaries[c.span.0 - 1] = true;
    }
    Ok(seg)
}

/// Fills `same_segment` for every pair and stores the boundaries on the document.
pub fn pairwise_same_segment(doc: &Document, seg: &Segmentation) -> Document {
    let mut out = doc.clone();
    let n = doc.num_events();
    for i in 0..n {
        for j in i + 1..n {
            let z = seg.segment_of(doc.events[i].sentence) == seg.segment_of(doc.events[j].sentence);
            out.pair_labels.set_same_segment(i, j, Some(z));
        }
    }
    out.boundaries = Some(seg.boundaries().to_vec());
    out
}

/// Derives segments and same-segment labels for every document.
pub fn label_corpus(corpus: &Corpus) -> Result<Corpus> {
    let documents = corpus
        .documents
        .iter()
        .map(|d| Ok(pairwise_same_segment(d, &derive_segments(d)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        documents,
        split: corpus.split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{transitive_closure, EventMention, PosTag, Sentence, Token};
    use RelationLabel::*;

    /// `events` are `(id, sentence)`, one token per event, placed left to right.
    fn doc(m: usize, events: &[(u32, usize)], rels: &[(u32, u32, RelationLabel)]) -> Document {
        let per_sentence = events.len().max(1);
        let sentences = (0..m)
            .map(|index| Sentence {
                index,
                tokens: (0..per_sentence).map(|k| Token::new(format!("w{k}"), PosTag::Verb)).collect(),
            })
            .collect();
        let mut used = vec![0usize; m];
        let mentions = events
            .iter()
            .map(|&(id, s)| {
                let t = used[s];
                used[s] += 1;
                EventMention { id, sentence: s, span: (t, t) }
            })
            .collect();
        let mut d = Document::new("t", sentences, mentions);
        for &(a, b, r) in rels {
            d.set_relation_by_id(a, b, r).unwrap();
        }
        transitive_closure(&d).unwrap()
    }

    #[test]
    fn no_membership_gives_empty_graph_and_single_segment() {
        let d = doc(3, &[(1, 0), (2, 2)], &[(1, 2, Coref)]);
        assert!(build_membership_dag(&d).unwrap().is_empty());
        assert_eq!(derive_segments(&d).unwrap().boundaries(), &[false, false]);
    }

    #[test]
    fn figure_fragment_graph() {
        // scandal=7, charges=6, ousting=8
        let d = doc(2, &[(6, 0), (7, 0), (8, 1)], &[(7, 6, ParentChild), (7, 8, ParentChild)]);
        let dag = build_membership_dag(&d).unwrap();
        assert_eq!(dag.nodes.len(), 3);
        assert_eq!(dag.num_edges(), 2);
        let scandal = d.event_index(7).unwrap();
        assert_eq!(dag.children[&scandal].len(), 2);
    }

    #[test]
    fn symmetric_membership_is_cycle() {
        let mut d = doc(1, &[(1, 0), (2, 0)], &[]);
        d.pair_labels.set_one_way(0, 1, ParentChild);
        d.pair_labels.set_one_way(1, 0, ParentChild);
        assert!(matches!(build_membership_dag(&d), Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn three_cycle_is_rejected() {
        let mut d = doc(1, &[(1, 0), (2, 0), (3, 0)], &[]);
        d.pair_labels.set_relation(0, 1, ParentChild);
        d.pair_labels.set_relation(1, 2, ParentChild);
        d.pair_labels.set_relation(2, 0, ParentChild);
        assert!(matches!(build_membership_dag(&d), Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn disjoint_complexes() {
        let d = doc(
            5,
            &[(1, 0), (2, 1), (3, 2), (4, 4)],
            &[(1, 2, ParentChild), (3, 4, ParentChild)],
        );
        assert_eq!(derive_segments(&d).unwrap().boundaries(), &[false, true, false, false]);
    }

    #[test]
    fn removable_overlap() {
        // Complex A = {1@0, 2@2}; complex B = {3@1, 4@3, 5@3}. Ignoring event 2
        // gives spans {0} and {1,3}; ignoring 3 gives {0,2} and {3}. The latter
        // leaves no overlap either; both tie on total overlap, smallest id wins.
        let d = doc(
            4,
            &[(1, 0), (3, 1), (2, 2), (4, 3), (5, 3)],
            &[(1, 2, ParentChild), (3, 4, ParentChild), (3, 5, ParentChild)],
        );
        let seg = derive_segments(&d).unwrap();
        assert_eq!(seg.num_segments(), 2);
        assert_eq!(seg.boundaries(), &[true, false, false]);
    }

    #[test]
    fn relocated_child_is_ignored() {
        // A = {1@0, 2@1, 9@2} spans [0,2]; B = {3@2, 5@2, 4@3} spans [2,3].
        // Only ignoring 9 separates them: A -> [0,1].
        let d = doc(
            4,
            &[(1, 0), (2, 1), (9, 2), (3, 2), (5, 2), (4, 3)],
            &[(1, 2, ParentChild), (1, 9, ParentChild), (3, 4, ParentChild), (3, 5, ParentChild)],
        );
        assert_eq!(derive_segments(&d).unwrap().boundaries(), &[false, true, false]);
    }

    #[test]
    fn irreducible_overlap_merges() {
        let d = doc(
            3,
            &[(1, 0), (3, 0), (2, 2), (4, 2)],
            &[(1, 2, ParentChild), (3, 4, ParentChild)],
        );
        assert_eq!(derive_segments(&d).unwrap().boundaries(), &[false, false]);
    }

    #[test]
    fn single_component_root_is_removed() {
        // Root 1 over two sub-trees in separate sentence ranges.
        let d = doc(
            4,
            &[(1, 0), (2, 0), (3, 1), (4, 2), (5, 3)],
            &[
                (1, 2, ParentChild),
                (1, 4, ParentChild),
                (2, 3, ParentChild),
                (4, 5, ParentChild),
            ],
        );
        assert_eq!(derive_segments(&d).unwrap().boundaries(), &[false, true, false]);
    }

    #[test]
    fn same_segment_flags() {
        let d = doc(
            3,
            &[(1, 0), (2, 0), (3, 1), (4, 2)],
            &[(1, 3, ParentChild), (4, 2, ChildParent)],
        );
        let seg = Segmentation::from_boundaries(vec![false, true]);
        let out = pairwise_same_segment(&d, &seg);
        assert_eq!(out.pair_labels.get(0, 1).same_segment, Some(true));
        assert_eq!(out.pair_labels.get(2, 3).same_segment, Some(false));
        assert_eq!(out.pair_labels.get(3, 2).same_segment, Some(false));
        assert_eq!(out.boundaries.as_deref(), Some(&[false, true][..]));
    }

    #[test]
    fn segments_partition_sentences() {
        let seg = Segmentation::from_boundaries(vec![false, true, false, true]);
        assert_eq!(seg.segments(), vec![(0, 1), (2, 3), (4, 4)]);
        assert_eq!(seg.segment_of(4), 2);
        assert_eq!(Segmentation::single(0).segments(), vec![]);
    }
}
