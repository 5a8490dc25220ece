use std::fmt;
use std::str::FromStr;

use crate::{bleu, cider, cider_d, rouge_l, IdfTable, MetricError, Token, DEFAULT_BETA, DEFAULT_SIGMA};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Bleu(usize),
    CiderD { sigma: f64 },
    Cider,
    RougeL { beta: f64 },
}

impl Metric {
    pub fn needs_idf(&self) -> bool {
        matches!(self, Metric::CiderD { .. } | Metric::Cider)
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        match key.as_str() {
            "bleu-1" | "bleu1" => Ok(Metric::Bleu(1)),
            "bleu-2" | "bleu2" => Ok(Metric::Bleu(2)),
            "bleu-3" | "bleu3" => Ok(Metric::Bleu(3)),
            "bleu-4" | "bleu4" | "bleu" => Ok(Metric::Bleu(4)),
            "cider" | "cider-d" | "ciderd" => Ok(Metric::CiderD { sigma: DEFAULT_SIGMA }),
            "cider-plain" => Ok(Metric::Cider),
            "rouge-l" | "rougel" | "rouge" => Ok(Metric::RougeL { beta: DEFAULT_BETA }),
            _ => Err(MetricError::UnknownMetric(s.to_string())),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Bleu(n) => write!(f, "BLEU-{n}"),
            Metric::CiderD { .. } => write!(f, "CIDEr"),
            Metric::Cider => write!(f, "CIDEr-plain"),
            Metric::RougeL { .. } => write!(f, "ROUGE-L"),
        }
    }
}

/// Which metric serves as the sequence reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub metric: Metric,
}

impl RewardSpec {
    pub fn new(metric: Metric) -> Self {
        Self { metric }
    }
}

impl FromStr for RewardSpec {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(RewardSpec::new)
    }
}

/// Scores `candidate` against `references` with the metric named by `spec`.
/// CIDEr variants need `idf`; the others ignore it.
pub fn reward<T: Token, R: AsRef<[T]>>(
    candidate: &[T],
    references: &[R],
    spec: &RewardSpec,
    idf: Option<&IdfTable<T>>,
) -> Result<f64, MetricError> {
    match spec.metric {
        Metric::Bleu(n) => bleu(candidate, references, n),
        Metric::RougeL { beta } => rouge_l(candidate, references, beta),
        Metric::CiderD { sigma } => cider_d(candidate, references, idf.ok_or(MetricError::MissingIdf)?, sigma),
        Metric::Cider => cider(candidate, references, idf.ok_or(MetricError::MissingIdf)?),
    }
}
