//! Test-time prediction and evaluation.
//!
//! `z` is read as the probability that a pair shares a segment, so a segment
//! break is placed where it drops below the threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RelationLabel};
use crate::error::{Error, Result};
use crate::eventseg::Segmentation;
use crate::joint::{pair_matrix, JointModel, PairEncoder, PairPrediction};
use crate::scalar::Scalar;

/// All pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn text_ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Anything that scores text-ordered event pairs of a document.
pub trait PairScorer {
    fn score(&self, doc: &Document, pairs: &[(usize, usize)]) -> Result<Vec<PairPrediction<f64>>>;
}

/// Scores pairs with a trained model.
pub struct ModelScorer<'a, T> {
    pub model: &'a JointModel<T>,
    pub encoder: &'a dyn PairEncoder,
}

impl<T: Scalar> PairScorer for ModelScorer<'_, T> {
    fn score(&self, doc: &Document, pairs: &[(usize, usize)]) -> Result<Vec<PairPrediction<f64>>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let events = self.encoder.encode_events(doc)?;
        let x = pair_matrix::<T>(&events, pairs);
        Ok(self
            .model
            .predict(x.view())?
            .into_iter()
            .map(|p| PairPrediction {
                y: p.y.map(Scalar::as_f64),
                z: p.z.as_f64(),
            })
            .collect())
    }
}

/// Echoes the document's own annotations as one-hot predictions.
pub struct GoldScorer;

impl PairScorer for GoldScorer {
    fn score(&self, doc: &Document, pairs: &[(usize, usize)]) -> Result<Vec<PairPrediction<f64>>> {
        Ok(pairs
            .iter()
            .map(|&(i, j)| {
                let l = doc.pair_labels.get(i, j);
                let mut y = [0.0; 4];
                y[l.relation.index()] = 1.0;
                PairPrediction {
                    y,
                    z: if l.same_segment.unwrap_or(true) { 1.0 } else { 0.0 },
                }
            })
            .collect())
    }
}

/// Predicted relation of one text-ordered pair, by event id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub e1: u32,
    pub e2: u32,
    pub label: RelationLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocPrediction {
    pub doc_id: String,
    pub relations: Vec<PairRecord>,
    pub boundaries: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    pub documents: Vec<DocPrediction>,
}

/// Argmax label of every text-ordered pair.
pub fn predict_relations(scorer: &dyn PairScorer, doc: &Document) -> Result<Vec<((usize, usize), RelationLabel)>> {
    let pairs = text_ordered_pairs(doc.num_events());
    let preds = scorer.score(doc, &pairs)?;
    Ok(pairs.into_iter().zip(preds).map(|(p, y)| (p, y.relation())).collect())
}

fn segments_from_scores(doc: &Document, z_adjacent: &[f64], threshold: f64) -> Segmentation {
    let mut boundaries = vec![false; doc.num_sentences().saturating_sub(1)];
    for (i, &z) in z_adjacent.iter().enumerate() {
        let (a, b) = (doc.events[i].sentence, doc.events[i + 1].sentence);
        if a != b && z < threshold {
            boundaries[a] = true;
        }
    }
    Segmentation::from_sentence_boundaries(doc.num_sentences(), boundaries)
}

/// Breaks after the sentence of `e_i` whenever `e_i` and `e_{i+1}` lie in
/// different sentences and their same-segment probability is below
/// `threshold`.
pub fn predict_segments(scorer: &dyn PairScorer, doc: &Document, threshold: f64) -> Result<Segmentation> {
    let adjacent: Vec<(usize, usize)> = (1..doc.num_events()).map(|i| (i - 1, i)).collect();
    let z: Vec<f64> = scorer.score(doc, &adjacent)?.into_iter().map(|p| p.z).collect();
    Ok(segments_from_scores(doc, &z, threshold))
}

/// Relations and segmentation from a single scoring pass.
pub fn predict_document(scorer: &dyn PairScorer, doc: &Document, threshold: f64) -> Result<DocPrediction> {
    let n = doc.num_events();
    let pairs = text_ordered_pairs(n);
    let preds = scorer.score(doc, &pairs)?;
    let by_pair: BTreeMap<(usize, usize), &PairPrediction<f64>> = pairs.iter().copied().zip(&preds).collect();
    let z: Vec<f64> = (1..n).map(|i| by_pair[&(i - 1, i)].z).collect();
    Ok(DocPrediction {
        doc_id: doc.id.clone(),
        relations: pairs
            .iter()
            .zip(&preds)
            .map(|(&(i, j), p)| PairRecord {
                e1: doc.events[i].id,
                e2: doc.events[j].id,
                label: p.relation(),
            })
            .collect(),
        boundaries: segments_from_scores(doc, &z, threshold).boundaries().to_vec(),
    })
}

pub fn predict_corpus(scorer: &dyn PairScorer, docs: &[Document], threshold: f64) -> Result<PredictionSet> {
    Ok(PredictionSet {
        documents: docs.iter().map(|d| predict_document(scorer, d, threshold)).collect::<Result<_>>()?,
    })
}

/// Precision, recall and F1 with their counts. Empty denominators give 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Pooled true/false positive and false negative counts for PC and CP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RelationCounts {
    /// `[tp, fp, fn]` for PC then CP.
    pub counts: [[usize; 3]; 2],
    pub pairs: usize,
}

impl RelationCounts {
    pub fn observe(&mut self, gold: RelationLabel, pred: RelationLabel) {
        self.pairs += 1;
        for (c, label) in [RelationLabel::ParentChild, RelationLabel::ChildParent].into_iter().enumerate() {
            match (gold == label, pred == label) {
                (true, true) => self.counts[c][0] += 1,
                (false, true) => self.counts[c][1] += 1,
                (true, false) => self.counts[c][2] += 1,
                (false, false) => {}
            }
        }
    }

    /// Counts over identical pair sets keyed by `(e1, e2)`.
    pub fn from_pairs(
        pred: &BTreeMap<(u32, u32), RelationLabel>,
        gold: &BTreeMap<(u32, u32), RelationLabel>,
    ) -> Result<Self> {
        if pred.len() != gold.len() || pred.keys().zip(gold.keys()).any(|(a, b)| a != b) {
            return Err(Error::Eval("predicted and gold pair sets differ".into()));
        }
        let mut c = Self::default();
        for (g, p) in gold.values().zip(pred.values()) {
            c.observe(*g, *p);
        }
        Ok(c)
    }

    pub fn add(&mut self, other: &Self) {
        for c in 0..2 {
            for k in 0..3 {
                self.counts[c][k] += other.counts[c][k];
            }
        }
        self.pairs += other.pairs;
    }

    pub fn class(&self, label: RelationLabel) -> Prf {
        let c = match label {
            RelationLabel::ParentChild => self.counts[0],
            RelationLabel::ChildParent => self.counts[1],
            _ => panic!("only membership labels are scored"),
        };
        Prf::from_counts(c[0], c[1], c[2])
    }

    pub fn micro(&self) -> Prf {
        let s = |k: usize| self.counts[0][k] + self.counts[1][k];
        Prf::from_counts(s(0), s(1), s(2))
    }
}

/// Boundary matches for segmentation scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl BoundaryCounts {
    pub fn add(&mut self, o: &Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn prf(&self) -> Prf {
        Prf::from_counts(self.tp, self.fp, self.fn_)
    }
}

/// Boundary matching where a predicted boundary at `p` may claim one unclaimed
/// gold boundary at `g` with `|p - g| <= window`. `window = 0` is exact match.
pub fn eval_segmentation(pred: &Segmentation, gold: &Segmentation, window: usize) -> Result<BoundaryCounts> {
    if pred.num_sentences() != gold.num_sentences() {
        return Err(Error::Eval(format!(
            "segmentations cover {} and {} sentences",
            pred.num_sentences(),
            gold.num_sentences()
        )));
    }
    let on = |s: &Segmentation| -> Vec<usize> { s.boundaries().iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect() };
    let (p, g) = (on(pred), on(gold));
    let mut claimed = vec![false; g.len()];
    let mut tp = 0;
    for &pb in &p {
        if let Some(k) = (0..g.len()).find(|&k| !claimed[k] && pb.abs_diff(g[k]) <= window) {
            claimed[k] = true;
            tp += 1;
        }
    }
    Ok(BoundaryCounts {
        tp,
        fp: p.len() - tp,
        fn_: g.len() - tp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub parent_child: Prf,
    pub child_parent: Prf,
    /// Pooled over PC and CP.
    pub micro: Prf,
    pub segmentation: Option<Prf>,
    pub num_documents: usize,
    pub num_pairs: usize,
}

impl MetricsReport {
    pub fn new(rel: &RelationCounts, seg: Option<&BoundaryCounts>, num_documents: usize) -> Self {
        Self {
            parent_child: rel.class(RelationLabel::ParentChild),
            child_parent: rel.class(RelationLabel::ChildParent),
            micro: rel.micro(),
            segmentation: seg.map(BoundaryCounts::prf),
            num_documents,
            num_pairs: rel.pairs,
        }
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, name: &str, p: &Prf| {
            writeln!(f, "{name:<10} P={:.4} R={:.4} F1={:.4}", p.precision, p.recall, p.f1)
        };
        row(f, "PC", &self.parent_child)?;
        row(f, "CP", &self.child_parent)?;
        row(f, "micro", &self.micro)?;
        if let Some(s) = &self.segmentation {
            row(f, "segments", s)?;
        }
        Ok(())
    }
}

/// Scores predictions against the gold corpus, pooling over documents.
/// Segmentation is scored when every gold document carries boundaries.
pub fn eval_relations(pred: &PredictionSet, gold: &[Document], window: usize) -> Result<MetricsReport> {
    if pred.documents.len() != gold.len() {
        return Err(Error::Eval(format!(
            "{} predicted documents for {} gold documents",
            pred.documents.len(),
            gold.len()
        )));
    }
    let by_id: BTreeMap<&str, &DocPrediction> = pred.documents.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut rel = RelationCounts::default();
    let mut seg = BoundaryCounts::default();
    let mut seg_ok = true;
    for g in gold {
        let p = by_id
            .get(g.id.as_str())
            .ok_or_else(|| Error::Eval(format!("no prediction for document `{}`", g.id)))?;
        let gold_pairs: BTreeMap<(u32, u32), RelationLabel> = text_ordered_pairs(g.num_events())
            .into_iter()
            .map(|(i, j)| ((g.events[i].id, g.events[j].id), g.relation(i, j)))
            .collect();
        let pred_pairs: BTreeMap<(u32, u32), RelationLabel> =
            p.relations.iter().map(|r| ((r.e1, r.e2), r.label)).collect();
        if pred_pairs.len() != p.relations.len() {
            return Err(Error::Eval(format!("duplicate pair predictions in `{}`", g.id)));
        }
        rel.add(&RelationCounts::from_pairs(&pred_pairs, &gold_pairs).map_err(|e| match e {
            Error::Eval(m) => Error::Eval(format!("document `{}`: {m}", g.id)),
            e => e,
        })?);
        match Segmentation::of_document(g) {
            Some(gs) => {
                let ps = Segmentation::from_sentence_boundaries(g.num_sentences(), p.boundaries.clone());
                seg.add(&eval_segmentation(&ps, &gs, window)?);
            }
            None => seg_ok = false,
        }
    }
    Ok(MetricsReport::new(&rel, seg_ok.then_some(&seg), gold.len()))
}

/// Tab-separated `doc_id, e1, e2, gold, pred`, one line per pair.
pub fn write_pair_tsv(pred: &PredictionSet, gold: &[Document], mut w: impl Write) -> Result<()> {
    let by_id: BTreeMap<&str, &Document> = gold.iter().map(|d| (d.id.as_str(), d)).collect();
    writeln!(w, "doc_id\te1\te2\tgold\tpred")?;
    for d in &pred.documents {
        let g = by_id
            .get(d.doc_id.as_str())
            .ok_or_else(|| Error::Eval(format!("no gold document `{}`", d.doc_id)))?;
        for r in &d.relations {
            let (i, j) = match (g.event_index(r.e1), g.event_index(r.e2)) {
                (Some(i), Some(j)) => (i, j),
                _ => return Err(Error::Eval(format!("unknown event pair ({}, {}) in `{}`", r.e1, r.e2, d.doc_id))),
            };
            writeln!(w, "{}\t{}\t{}\t{}\t{}", d.doc_id, r.e1, r.e2, g.relation(i, j), r.label)?;
        }
    }
    Ok(())
}
