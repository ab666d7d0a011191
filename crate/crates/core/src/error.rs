use thiserror::Error;

/// Errors raised while loading or validating an experiment configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("missing config key `{0}`")]
    MissingKey(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("config override {var}: {reason}")]
    Override { var: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid key length {0} bits (expected one of 64, 128, 192, 256, 1024, 2048, 3072, 4096)")]
    InvalidKeyLength(u32),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called after the episode finished (t = {0})")]
    EpisodeDone(usize),
    #[error("action does not match the action spec: {0}")]
    BadAction(String),
    #[error("decision does not match the world: {0}")]
    BadDecision(String),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("non-finite gradient in {location} (epoch {epoch}, minibatch {minibatch})")]
    NonFiniteGradient {
        location: &'static str,
        epoch: usize,
        minibatch: usize,
    },
    #[error("non-finite parameter after update in {0}")]
    NonFiniteParameter(&'static str),
    #[error("rollout buffer is empty")]
    EmptyBuffer,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("bad magic bytes: not a checkpoint file")]
    BadMagic,
    #[error("unsupported schema version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("shape mismatch in head `{head}`: checkpoint has {found}, environment expects {expected}")]
    ShapeMismatch {
        head: String,
        expected: usize,
        found: usize,
    },
    #[error("artifact `{path}` does not match its manifest hash")]
    HashMismatch { path: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Top-level error for harness runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Crypto(_) => "crypto",
            Error::Env(_) => "env",
            Error::Agent(_) => "agent",
            Error::Oracle(_) => "oracle",
            Error::Persist(_) => "persist",
            Error::Io(_) => "io",
            Error::Other(_) => "other",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Persist(PersistError::Json(e))
    }
}
