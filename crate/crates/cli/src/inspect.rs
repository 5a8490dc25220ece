//! Summaries of attention-trace JSONL files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::caption::TraceLine;
use crate::failure::{Failure, Outcome, Tag, DATA};

/// Output sub-policy candidates in distribution order.
const OUTPUT_SOURCES: [&str; 3] = ["single", "composition", "sentinel"];

#[derive(Debug, Serialize)]
pub struct TokenSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence: Option<usize>,
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    /// Region the single sub-policy attends to most.
    pub region: usize,
    pub region_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<&'static str>,
}

#[derive(Debug, Serialize)]
pub struct ImageSummary {
    pub image_id: String,
    pub tokens: Vec<TokenSummary>,
    /// How often the output sub-policy preferred each source.
    pub sources: BTreeMap<&'static str, usize>,
}

pub fn read_trace(path: &Path) -> Outcome<Vec<TraceLine>> {
    let text = fs::read_to_string(path).or_code(DATA, format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).or_code(DATA, format!("{}:{}: invalid trace record", path.display(), i + 1)))
        .collect()
}

/// Groups records by image in file order.
pub fn summarize(lines: Vec<TraceLine>, only: Option<&str>) -> Outcome<Vec<ImageSummary>> {
    let mut out: Vec<ImageSummary> = Vec::new();
    for l in lines {
        if only.is_some_and(|id| id != l.image_id) {
            continue;
        }
        if out.last().is_none_or(|s| s.image_id != l.image_id) {
            out.push(ImageSummary {
                image_id: l.image_id.clone(),
                tokens: Vec::new(),
                sources: BTreeMap::new(),
            });
        }
        let summary = out.last_mut().expect("pushed above");
        let r = l.record;
        let region = r.argmaxes.single;
        let region_weight = *r.single.get(region).ok_or_else(|| Failure::data(format!("step {} has no region weights", r.step)))?;
        let source = r.argmaxes.output.and_then(|i| OUTPUT_SOURCES.get(i).copied());
        if let Some(s) = source {
            *summary.sources.entry(s).or_default() += 1;
        }
        summary.tokens.push(TokenSummary {
            sentence: l.sentence,
            step: r.step,
            word: r.word,
            region,
            region_weight,
            source,
        });
    }
    if out.is_empty() {
        return Err(Failure::data("trace holds no matching records"));
    }
    Ok(out)
}
