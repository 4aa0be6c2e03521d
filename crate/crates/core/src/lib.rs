//! Permissioned, hash-chained ledger for sugarcane supply-chain provenance.
//!
//! * [`ledger`]: blocks, transactions and the append-only chain.
//! * [`identity`]: registration, login, recovery and sessions.
//! * [`supplychain`]: the per-lot custody state machine, settlement and tracing.
//! * [`state`]: committed world state derived by replaying blocks.
//! * [`consensus`]: round-robin proof-of-authority and a deterministic network simulator.
//! * [`survey`]: the farmer questionnaire loader and exact marginal tabulation.

pub mod codec;
pub mod consensus;
pub mod crypto;
pub mod identity;
pub mod ledger;
pub mod state;
pub mod supplychain;
pub mod survey;

pub use crypto::{hash_canonical, Digest, Keypair, SessionId, Signature, UserId};
