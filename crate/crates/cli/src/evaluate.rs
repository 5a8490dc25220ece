//! Corpus scoring of caption files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cavp_core::data::{tokenize, DatasetManifest};
use cavp_metrics::{build_idf, cider, corpus_bleu, corpus_cider_d, rouge_l, Metric};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::failure::{Failure, Outcome, Tag, DATA};

#[derive(Debug, Deserialize)]
struct Candidate {
    image_id: String,
    caption: String,
}

/// Reads a JSON array or JSON lines of `{image_id, caption, ..}` records.
pub fn read_candidates(path: &Path) -> Outcome<Vec<(String, String)>> {
    let text = fs::read_to_string(path).or_code(DATA, format!("cannot read {}", path.display()))?;
    let records: Vec<Candidate> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).or_code(DATA, format!("invalid candidates in {}", path.display()))?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .or_code(DATA, format!("invalid candidates in {}", path.display()))?
    };
    Ok(records.into_iter().map(|c| (c.image_id, c.caption)).collect())
}

/// Reads references from a dataset manifest or from a JSON object mapping
/// image ids to caption lists. A manifest paragraph is one reference.
pub fn read_references(path: &Path) -> Outcome<BTreeMap<String, Vec<String>>> {
    let text = fs::read_to_string(path).or_code(DATA, format!("cannot read {}", path.display()))?;
    if let Ok(m) = serde_json::from_str::<DatasetManifest>(&text) {
        return Ok(m
            .entries
            .into_iter()
            .map(|e| {
                let refs = match (e.captions, e.paragraph) {
                    (_, Some(p)) => vec![p.join(" ")],
                    (Some(c), None) => c,
                    (None, None) => Vec::new(),
                };
                (e.image_id, refs)
            })
            .collect());
    }
    serde_json::from_str(&text).or_code(DATA, format!("invalid references in {}", path.display()))
}

pub fn metric_key(m: &Metric) -> String {
    match m {
        Metric::Bleu(n) => format!("BLEU-{n}"),
        Metric::CiderD { .. } => "CIDEr-D".into(),
        Metric::Cider => "CIDEr".into(),
        Metric::RougeL { .. } => "ROUGE-L".into(),
    }
}

/// Corpus scores keyed by metric name, plus the number of images scored.
pub fn score(candidates: &[(String, String)], references: &BTreeMap<String, Vec<String>>, metrics: &[Metric]) -> Outcome<Map<String, Value>> {
    if candidates.is_empty() {
        return Err(Failure::data("no candidates to evaluate"));
    }
    let missing: Vec<&str> = candidates
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| references.get(*id).is_none_or(|r| r.is_empty()))
        .collect();
    if !missing.is_empty() {
        return Err(Failure::data(format!("candidates without references: {}", missing.join(", "))));
    }
    let pairs: Vec<(Vec<String>, Vec<Vec<String>>)> = candidates
        .iter()
        .map(|(id, c)| (tokenize(c), references[id].iter().map(|r| tokenize(r)).collect()))
        .collect();
    let corpus: Vec<Vec<Vec<String>>> = pairs.iter().map(|p| p.1.clone()).collect();
    let mut out = Map::new();
    for m in metrics {
        let value = match *m {
            Metric::Bleu(n) => corpus_bleu(&pairs, n)?,
            Metric::CiderD { sigma } => {
                if corpus.len() < 2 {
                    eprintln!("warning: CIDEr-D document frequencies from a single image are degenerate");
                }
                corpus_cider_d(&pairs, &build_idf(&corpus), sigma)?
            }
            Metric::Cider => {
                let idf = build_idf(&corpus);
                let total = pairs.iter().map(|(c, r)| cider(c, r, &idf)).sum::<Result<f64, _>>()?;
                total / pairs.len() as f64
            }
            Metric::RougeL { beta } => {
                let total = pairs.iter().map(|(c, r)| rouge_l(c, r, beta)).sum::<Result<f64, _>>()?;
                total / pairs.len() as f64
            }
        };
        out.insert(metric_key(m), Value::from(value));
    }
    out.insert("images".into(), Value::from(pairs.len()));
    Ok(out)
}
