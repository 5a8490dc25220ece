//! Errors tagged with the process exit code they map to.

use std::fmt;

pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;
const INTERNAL: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(CONFIG, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(DATA, anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<cavp_core::Error> for Failure {
    fn from(e: cavp_core::Error) -> Self {
        use cavp_core::substrate::SubstrateError;
        use cavp_core::Error as E;
        let code = match &e {
            E::Config(_) => CONFIG,
            E::NonFinite(_) | E::Substrate(SubstrateError::NonFinite(_)) => NUMERIC,
            E::Data(_) | E::Io(_) | E::Json(_) | E::Checkpoint(_) | E::Metric(_) => DATA,
            E::Substrate(_) | E::EmptyActionSpace => INTERNAL,
        };
        Self::new(code, e)
    }
}

impl From<cavp_metrics::MetricError> for Failure {
    fn from(e: cavp_metrics::MetricError) -> Self {
        Self::new(DATA, e)
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Attaches an exit code and a context message to any error.
pub trait Tag<T> {
    fn or_code(self, code: u8, what: impl fmt::Display) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn or_code(self, code: u8, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::new(code, e.into().context(what.to_string())))
    }
}
