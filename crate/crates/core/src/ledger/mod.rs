//! Append-only hash-chained block store.

mod block;
mod chain;
mod tx;

use thiserror::Error;

use crate::crypto::{Digest, UserId};

pub use block::{compute_tx_root, make_genesis, Block, BlockHeader, GenesisInfo};
pub(crate) use block::validate_validator_set;
pub use chain::{verify_blocks, verify_encoded, Chain, VerifyFailure, VerifyReport};
pub use tx::{Payload, SignedTransaction, TxError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("validator set is empty")]
    EmptyValidatorSet,
    #[error("validator {0} listed twice")]
    DuplicateValidator(UserId),
    #[error("block at height {height} does not link to the current tip")]
    BadPrevHash { height: u64 },
    #[error("expected height {expected}, got {got}")]
    BadHeight { expected: u64, got: u64 },
    #[error("stored block hash at height {height} does not match its header")]
    BadBlockHash { height: u64 },
    #[error("stored tx root at height {height} does not match its transactions")]
    BadTxRoot { height: u64 },
    #[error("proposer signature at height {height} does not verify")]
    BadProposerSignature { height: u64 },
    #[error("proposer {proposer} at height {height} is not a validator")]
    UnknownProposer { height: u64, proposer: UserId },
    #[error("malformed genesis: {0}")]
    BadGenesis(&'static str),
    #[error("transaction {index} at height {height}: {reason}")]
    BadTransaction {
        height: u64,
        index: usize,
        reason: TxError,
    },
    #[error("transaction {0} already committed")]
    DuplicateTransaction(Digest),
    #[error("transaction {0} not found")]
    NotFound(Digest),
}
