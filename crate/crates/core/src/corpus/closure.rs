//! Completion of membership and coreference annotations.
//!
//! Coreference is an equivalence relation, so events are first grouped into
//! coreference classes. A parent-child edge between two events becomes an
//! edge between their classes; the closure is reachability in that class
//! graph. Any cycle (including a class with an edge to itself) means some pair
//! would carry two labels at once.

use super::{Document, PairTable, RelationLabel};
use crate::error::{Error, Result};

/// Least fixpoint of transitivity of `PC`, transitivity of `Coref`,
/// substitution of coreferent events into `PC`, and converse completion.
/// All other pairs become `NoRel`. Same-segment flags are carried over.
pub fn transitive_closure(doc: &Document) -> Result<Document> {
    let n = doc.num_events();
    let labels = &doc.pair_labels;

    let mut class = UnionFind::new(n);
    for (i, j) in labels.ordered_pairs() {
        if labels.relation(i, j) == RelationLabel::Coref {
            class.union(i, j);
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| class.find(i)).collect();
    let mut class_ids: Vec<usize> = roots.clone();
    class_ids.sort_unstable();
    class_ids.dedup();
    let cid = |i: usize| class_ids.binary_search(&roots[i]).expect("root is a class");
    let c = class_ids.len();

    // reach[a * c + b]: a path of one or more edges from class a to class b.
    let mut reach = vec![false; c * c];
    for i in 0..n {
        for j in 0..n {
            if i != j && labels.relation(i, j) == RelationLabel::ParentChild {
                reach[cid(i) * c + cid(j)] = true;
            }
        }
    }
    for k in 0..c {
        for a in 0..c {
            if reach[a * c + k] {
                for b in 0..c {
                    if reach[k * c + b] {
                        reach[a * c + b] = true;
                    }
                }
            }
        }
    }

    if let Some(a) = (0..c).find(|&a| reach[a * c + a]) {
        // Name a concrete offending pair: two members of the cycle, or an
        // event related to itself through coreference.
        let members: Vec<usize> = (0..n).filter(|&i| cid(i) == a).collect();
        let partner = (0..n)
            .filter(|&j| cid(j) != a)
            .find(|&j| reach[a * c + cid(j)] && reach[cid(j) * c + a]);
        let (x, y) = match partner {
            Some(j) => (members[0], j),
            None => (members[0], *members.get(1).unwrap_or(&members[0])),
        };
        let (x, y) = (x.min(y), x.max(y));
        return Err(Error::Inconsistent {
            doc: doc.id.clone(),
            a: doc.events[x].id,
            b: doc.events[y].id,
            msg: "closure derives conflicting labels (membership cycle or membership between coreferent events)"
                .into(),
        });
    }

    let mut table = PairTable::new(n);
    for (i, j) in labels.ordered_pairs() {
        let (a, b) = (cid(i), cid(j));
        let r = if a == b {
            RelationLabel::Coref
        } else if reach[a * c + b] {
            RelationLabel::ParentChild
        } else if reach[b * c + a] {
            RelationLabel::ChildParent
        } else {
            RelationLabel::NoRel
        };
        table.set_relation(i, j, r);
        table.set_same_segment(i, j, labels.get(i, j).same_segment);
    }
    Ok(Document {
        pair_labels: table,
        ..doc.clone()
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index wins so results never depend on input order.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}
