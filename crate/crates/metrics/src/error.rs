use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("n-gram order {0} is outside 1..=4")]
    InvalidOrder(usize),
    #[error("reference set is empty")]
    NoReferences,
    #[error("idf table is empty; build it from the evaluation references with build_idf")]
    MissingIdf,
    #[error("unknown metric '{0}' (expected one of bleu-1..bleu-4, cider, cider-d, rouge-l)")]
    UnknownMetric(String),
}
