//! JSONL corpus format, one document per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Document, EventMention, PosTag, RelationLabel, Sentence, Token};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    id: String,
    sentences: Vec<SentenceRecord>,
    events: Vec<EventRecord>,
    #[serde(default)]
    relations: Vec<RelationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundaries: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_boundaries: Option<Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SentenceRecord {
    tokens: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    id: u32,
    sentence: usize,
    span: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationRecord {
    e1: u32,
    e2: u32,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    same_segment: Option<bool>,
}

pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_document_line(&line, path, k + 1)?);
    }
    let corpus = Corpus::new(docs);
    corpus.validate()?;
    Ok(corpus)
}

/// Parses an in-memory JSONL string; `origin` is only used in error messages.
pub fn parse_corpus_str(text: &str, origin: impl AsRef<Path>) -> Result<Corpus> {
    let mut docs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_document_line(line, origin.as_ref(), k + 1)?);
    }
    let corpus = Corpus::new(docs);
    corpus.validate()?;
    Ok(corpus)
}

pub fn parse_document_line(line: &str, path: &Path, lineno: usize) -> Result<Document> {
    let rec: DocRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: lineno,
        msg: e.to_string(),
    })?;
    from_record(rec)
}

fn from_record(rec: DocRecord) -> Result<Document> {
    let invalid = |msg: String| Error::Validation {
        doc: rec.id.clone(),
        msg,
    };
    let mut sentences = Vec::with_capacity(rec.sentences.len());
    for (index, s) in rec.sentences.iter().enumerate() {
        let tokens = s
            .tokens
            .iter()
            .map(|(surface, pos)| Ok(Token::new(surface.clone(), pos.parse::<PosTag>().map_err(&invalid)?)))
            .collect::<Result<Vec<_>>>()?;
        sentences.push(Sentence { index, tokens });
    }
    let events = rec
        .events
        .iter()
        .map(|e| EventMention {
            id: e.id,
            sentence: e.sentence,
            span: (e.span[0], e.span[1]),
        })
        .collect();
    let mut doc = Document::new(rec.id.clone(), sentences, events);
    doc.validate()?;

    for r in &rec.relations {
        let label: RelationLabel = r.label.parse().map_err(&invalid)?;
        let i = doc
            .event_index(r.e1)
            .ok_or_else(|| invalid(format!("relation references unknown event {}", r.e1)))?;
        let j = doc
            .event_index(r.e2)
            .ok_or_else(|| invalid(format!("relation references unknown event {}", r.e2)))?;
        if i == j {
            if label.is_membership() {
                return Err(Error::Inconsistent {
                    doc: doc.id.clone(),
                    a: r.e1,
                    b: r.e2,
                    msg: "an event cannot be its own parent".into(),
                });
            }
            continue;
        }
        if label != RelationLabel::NoRel {
            let existing = doc.pair_labels.relation(i, j);
            if existing != RelationLabel::NoRel && existing != label {
                return Err(Error::Inconsistent {
                    doc: doc.id.clone(),
                    a: r.e1,
                    b: r.e2,
                    msg: format!("annotated both {existing} and {label}"),
                });
            }
            doc.pair_labels.set_relation(i, j, label);
        }
        if let Some(z) = r.same_segment {
            if let Some(prev) = doc.pair_labels.get(i, j).same_segment {
                if prev != z {
                    return Err(invalid(format!(
                        "conflicting same_segment flags for pair ({}, {})",
                        r.e1, r.e2
                    )));
                }
            }
            doc.pair_labels.set_same_segment(i, j, Some(z));
        }
    }

    let bits = |v: &Option<Vec<u8>>, name: &str| -> Result<Option<Vec<bool>>> {
        v.as_ref()
            .map(|b| {
                b.iter()
                    .map(|&x| match x {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(invalid(format!("{name} entries must be 0 or 1"))),
                    })
                    .collect()
            })
            .transpose()
    };
    doc.boundaries = bits(&rec.boundaries, "boundaries")?;
    doc.gold_boundaries = bits(&rec.gold_boundaries, "gold_boundaries")?;
    doc.validate()?;
    Ok(doc)
}

fn to_record(doc: &Document) -> DocRecord {
    let sentences = doc
        .sentences
        .iter()
        .map(|s| SentenceRecord {
            tokens: s
                .tokens
                .iter()
                .map(|t| (t.surface.clone(), t.pos.as_str().to_string()))
                .collect(),
        })
        .collect();
    let events = doc
        .events
        .iter()
        .map(|e| EventRecord {
            id: e.id,
            sentence: e.sentence,
            span: [e.span.0, e.span.1],
        })
        .collect();
    let relations = doc
        .pair_labels
        .ordered_pairs()
        .filter_map(|(i, j)| {
            let p = doc.pair_labels.get(i, j);
            (p.relation != RelationLabel::NoRel || p.same_segment.is_some()).then(|| RelationRecord {
                e1: doc.events[i].id,
                e2: doc.events[j].id,
                label: p.relation.code().to_string(),
                same_segment: p.same_segment,
            })
        })
        .collect();
    let bits = |b: &Option<Vec<bool>>| b.as_ref().map(|b| b.iter().map(|&x| x as u8).collect());
    DocRecord {
        id: doc.id.clone(),
        sentences,
        events,
        relations,
        boundaries: bits(&doc.boundaries),
        gold_boundaries: bits(&doc.gold_boundaries),
    }
}

/// Serializes one document as a single JSON line (no trailing newline).
pub fn write_document_line(doc: &Document) -> String {
    serde_json::to_string(&to_record(doc)).expect("document records always serialize")
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in &corpus.documents {
        writeln!(w, "{}", write_document_line(d))?;
    }
    w.flush()?;
    Ok(())
}
