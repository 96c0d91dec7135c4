use thiserror::Error;

/// Problems with a scenario or sweep description.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown PHY `{0}` (expected bt5_2m, bt5_1m, bt5_500k, bt5_125k or ieee802154)")]
    UnknownPhy(String),
    #[error("unknown environment `{0}` (expected home, industrial or outdoor)")]
    UnknownEnv(String),
    #[error("unknown scheduler `{0}` (expected orchestra or minimal)")]
    UnknownScheduler(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("no connected placement with mean degree in [{min_degree}, {max_degree}] after {attempts} attempts (nodes={nodes}, range={range_m} m)")]
    GenerationFailed {
        nodes: usize,
        range_m: f64,
        min_degree: f64,
        max_degree: f64,
        attempts: u32,
    },
    #[error("node count must be at least 2, got {0}")]
    TooFewNodes(usize),
    #[error("positions file line {line}: {reason}")]
    BadPositions { line: usize, reason: String },
}

/// Failures inside a single simulation run.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invariant violated at asn {asn}: {what}")]
    Invariant { asn: u64, what: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Validation problems exit with 1, everything else with 2.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
