use std::fmt;

use serde::Serialize;

use super::{Corpus, RelationLabel};
use crate::error::{Error, Result};

/// Within/across-segment pair counts per relation, over text-ordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RelationStats {
    /// `(within, across)` indexed by [`RelationLabel::index`].
    pub rows: [(usize, usize); RelationLabel::COUNT],
}

impl RelationStats {
    pub fn row(&self, r: RelationLabel) -> (usize, usize) {
        self.rows[r.index()]
    }

    /// Fraction of PC/CP pairs that fall inside one segment.
    pub fn membership_within_fraction(&self) -> f64 {
        let (pw, pa) = self.row(RelationLabel::ParentChild);
        let (cw, ca) = self.row(RelationLabel::ChildParent);
        let total = pw + pa + cw + ca;
        if total == 0 {
            return 0.0;
        }
        (pw + cw) as f64 / total as f64
    }

    pub fn membership_pairs(&self) -> usize {
        let (pw, pa) = self.row(RelationLabel::ParentChild);
        let (cw, ca) = self.row(RelationLabel::ChildParent);
        pw + pa + cw + ca
    }
}

impl fmt::Display for RelationStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>10} {:>10}", "relation", "within", "across")?;
        for r in RelationLabel::ALL {
            let (w, a) = self.row(r);
            writeln!(f, "{:<8} {:>10} {:>10}", r.code(), w, a)?;
        }
        Ok(())
    }
}

/// Requires same-segment labels on every pair (run the segment labeler first).
pub fn compute_stats(corpus: &Corpus) -> Result<RelationStats> {
    let mut stats = RelationStats::default();
    for doc in &corpus.documents {
        for (i, j) in doc.pair_labels.ordered_pairs() {
            let p = doc.pair_labels.get(i, j);
            let z = p.same_segment.ok_or_else(|| {
                Error::Precondition(format!(
                    "document `{}` pair ({}, {}) has no same_segment label",
                    doc.id, doc.events[i].id, doc.events[j].id
                ))
            })?;
            let row = &mut stats.rows[p.relation.index()];
            if z {
                row.0 += 1;
            } else {
                row.1 += 1;
            }
        }
    }
    Ok(stats)
}
