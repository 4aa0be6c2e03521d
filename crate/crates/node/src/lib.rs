//! SugarChain node: a single-validator chain behind a JSON HTTP API, with a
//! crash-safe block file and an operator CLI over the same service.

pub mod api;
pub mod cli;
pub mod config;
pub mod service;
pub mod store;

use sugarchain_core::identity::IdentityError;
use sugarchain_core::state::{identity_code, Rejection};
use sugarchain_core::supplychain::SupplyError;
use sugarchain_core::survey::SurveyError;
use thiserror::Error;

pub use config::NodeConfig;
pub use service::NodeService;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no chain at {0}; run `init` first")]
    NotInitialized(String),
    #[error("{0} already exists")]
    AlreadyInitialized(String),
    #[error("block store is corrupt: {0}")]
    CorruptStore(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("address {0} is already in use")]
    PortInUse(String),
    #[error("a valid session is required")]
    MissingSession,
    #[error("{0}")]
    Identity(IdentityError),
    #[error("transaction rejected: {0}")]
    Rejected(Rejection),
    #[error("{0}")]
    Supply(SupplyError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Survey(SurveyError),
}

impl NodeError {
    /// Stable error code used in API envelopes and CLI JSON output.
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::Config(_) => "ConfigInvalid",
            NodeError::NotInitialized(_) => "NotInitialized",
            NodeError::AlreadyInitialized(_) => "AlreadyInitialized",
            NodeError::CorruptStore(_) => "CorruptStore",
            NodeError::Io(_) => "Io",
            NodeError::PortInUse(_) => "PortInUse",
            NodeError::MissingSession => "SessionUnknown",
            NodeError::Identity(e) => identity_code(e),
            NodeError::Rejected(r) => r.code(),
            NodeError::Supply(SupplyError::UnknownLot(_)) => "UnknownLot",
            NodeError::Supply(e) => Rejection::Supply(e.clone()).code(),
            NodeError::NotFound(_) => "NotFound",
            NodeError::BadRequest(_) => "BadRequest",
            NodeError::Survey(e) => match e {
                SurveyError::SchemaMismatch(_) => "SchemaMismatch",
                SurveyError::BadValue { .. } => "BadValue",
                SurveyError::EmptyFile => "EmptyFile",
                SurveyError::EmptyInput => "EmptyInput",
                SurveyError::NothingToReport => "NothingToReport",
                SurveyError::Io(_) => "Io",
            },
        }
    }
}

impl From<IdentityError> for NodeError {
    fn from(e: IdentityError) -> Self {
        NodeError::Identity(e)
    }
}

impl From<Rejection> for NodeError {
    fn from(e: Rejection) -> Self {
        NodeError::Rejected(e)
    }
}

impl From<SupplyError> for NodeError {
    fn from(e: SupplyError) -> Self {
        NodeError::Supply(e)
    }
}

impl From<SurveyError> for NodeError {
    fn from(e: SurveyError) -> Self {
        NodeError::Survey(e)
    }
}
