//! Round-robin proof-of-authority block production and a deterministic,
//! tick-driven network simulator to exercise it.
//!
//! Time is divided into slots. In each slot one validator, chosen by height
//! and by how many slots at that height were already skipped, may propose a
//! block. A proposal is relayed with endorsement signatures for `f + 1`
//! latency windows; at the slot deadline a node commits iff it holds exactly
//! one valid candidate. Two candidates mean the proposer equivocated and the
//! slot is skipped, as is a slot with no valid candidate.

mod message;
mod oracle;
mod sim;
mod workload;

use std::collections::BTreeMap;

use log::debug;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{Digest, Keypair, UserId};
use crate::ledger::{make_genesis, Block, Chain, LedgerError, SignedTransaction};
use crate::state::{BlockRejection, LedgerState, Rejection};
use crate::supplychain::{ChainRules, LotEvent};

pub use message::{Endorsement, MessageKind, NetworkMessage, ProposalEnvelope};
pub use oracle::{run_oracle, OracleRun};
pub use sim::{
    run_simulation, ByzantineBehavior, NodeStatus, RejectionRecord, SimConfig, SimError, SimReport,
};
pub use workload::{parse_workload, supply_workload_script, Workload, WorkloadEntry, WorkloadError};

/// The fixed, ordered authority list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidatorSet {
    validators: Vec<UserId>,
    pub epoch: u64,
}

impl ValidatorSet {
    pub fn new(validators: Vec<UserId>) -> Result<Self, LedgerError> {
        crate::ledger::validate_validator_set(&validators)?;
        Ok(Self {
            validators,
            epoch: 0,
        })
    }

    pub fn from_chain(chain: &Chain) -> Self {
        Self {
            validators: chain.validators().to_vec(),
            epoch: 0,
        }
    }

    pub fn validators(&self) -> &[UserId] {
        &self.validators
    }

    pub fn len(&self) -> usize {
        self.validators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validators.is_empty()
    }

    pub fn contains(&self, id: &UserId) -> bool {
        self.validators.contains(id)
    }

    pub fn index_of(&self, id: &UserId) -> Option<usize> {
        self.validators.iter().position(|v| v == id)
    }

    /// Proposer for `height` after `round` skipped slots at that height.
    pub fn proposer_at(&self, height: u64, round: u64) -> UserId {
        let n = self.validators.len() as u64;
        let i = (height.saturating_sub(1) % n + round % n) % n;
        self.validators[i as usize]
    }
}

/// `validators[(height - 1) mod n]`.
pub fn expected_proposer(set: &ValidatorSet, height: u64) -> UserId {
    set.proposer_at(height, 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposeError {
    #[error("{me} is not the proposer for height {height} round {round}")]
    NotMyTurn { me: UserId, height: u64, round: u64 },
    #[error("nothing to propose and empty blocks are disabled")]
    EmptyMempoolPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum ProposalRejection {
    #[error("block does not verify: {0}")]
    BadBlock(#[serde(serialize_with = "ser_display")] LedgerError),
    #[error("proposer {got} is not the expected {expected}")]
    WrongProposer { expected: UserId, got: UserId },
    #[error("block timestamp {got}, slot starts at {expected}")]
    BadTimestamp { expected: u64, got: u64 },
    #[error("transaction rejected: {0}")]
    BadTx(#[serde(serialize_with = "ser_display")] BlockRejection),
    #[error("delivered leg {leg} of lot {lot_id} is overdue for settlement")]
    MissingSettlement { lot_id: Digest, leg: u32 },
}

fn ser_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl ProposalRejection {
    pub fn code(&self) -> &'static str {
        match self {
            ProposalRejection::BadBlock(_) => "BadBlock",
            ProposalRejection::WrongProposer { .. } => "WrongProposer",
            ProposalRejection::BadTimestamp { .. } => "BadTimestamp",
            ProposalRejection::BadTx(_) => "BadTx",
            ProposalRejection::MissingSettlement { .. } => "MissingSettlement",
        }
    }
}

/// A pending transaction removed from the mempool without being included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub tx_id: Digest,
    pub reason: String,
}

/// Knobs for block assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProposalPolicy {
    pub allow_empty: bool,
    /// Only transactions at least this old at the block timestamp are
    /// considered, so every node has seen them.
    pub min_age: u64,
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub block: Block,
    /// Transactions dropped as permanently invalid while assembling.
    pub audit: Vec<AuditEntry>,
}

/// One node's view: the committed chain, the state it implies, and the
/// mempool of transactions not yet committed.
#[derive(Debug, Clone)]
pub struct Replica {
    chain: Chain,
    state: LedgerState,
    mempool: BTreeMap<(u64, Digest), SignedTransaction>,
}

impl Replica {
    pub fn new(genesis: Block, rules: ChainRules) -> Result<Self, LedgerError> {
        let chain = Chain::new(genesis)?;
        let state = LedgerState::new(chain.validators().to_vec(), rules);
        Ok(Self {
            chain,
            state,
            mempool: BTreeMap::new(),
        })
    }

    pub fn with_validators(
        validators: &[UserId],
        chain_id: &str,
        rules: ChainRules,
    ) -> Result<Self, LedgerError> {
        Self::new(make_genesis(validators, chain_id)?, rules)
    }

    /// Adopt an already verified chain and its replayed state.
    pub fn from_parts(chain: Chain, state: LedgerState) -> Self {
        Self {
            chain,
            state,
            mempool: BTreeMap::new(),
        }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn height(&self) -> u64 {
        self.chain.height()
    }

    pub fn tip_hash(&self) -> Digest {
        self.chain.tip_hash()
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn pending(&self) -> impl Iterator<Item = &SignedTransaction> {
        self.mempool.values()
    }

    /// Queue a transaction; false if it is already queued or committed.
    pub fn add_tx(&mut self, tx: SignedTransaction) -> bool {
        if self.state.contains_tx(&tx.tx_id) {
            return false;
        }
        self.mempool.insert((tx.timestamp, tx.tx_id), tx).is_none()
    }

    pub fn discard(&mut self, audit: &[AuditEntry]) {
        self.mempool.retain(|(_, id), _| !audit.iter().any(|a| a.tx_id == *id));
    }

    /// Drop transactions that can never be included, plus those older than
    /// `ttl` that are still invalid against committed state.
    pub fn prune(&mut self, now: u64, ttl: u64) -> Vec<AuditEntry> {
        let mut audit = Vec::new();
        for tx in self.mempool.values() {
            let reason = match self.state.check_tx(tx) {
                Ok(()) => continue,
                Err(r) if is_permanent(&r) => r.to_string(),
                Err(r) if tx.timestamp.saturating_add(ttl) < now => format!("expired: {r}"),
                Err(_) => continue,
            };
            audit.push(AuditEntry {
                tx_id: tx.tx_id,
                reason,
            });
        }
        self.discard(&audit);
        audit
    }

    /// Validate `block` and, if it passes, append it and advance state.
    pub fn commit(
        &mut self,
        block: Block,
        set: &ValidatorSet,
        round: u64,
        slot_start: Option<u64>,
    ) -> Result<(), ProposalRejection> {
        let next = validate_proposal(self, &block, set, round, slot_start)?;
        self.chain
            .append(block)
            .map_err(ProposalRejection::BadBlock)?;
        self.state = next;
        let state = &self.state;
        self.mempool.retain(|(_, id), _| !state.contains_tx(id));
        Ok(())
    }
}

/// Failures that no later state can cure.
fn is_permanent(r: &Rejection) -> bool {
    matches!(r, Rejection::InvalidTx(_) | Rejection::Duplicate(_))
}

/// Assemble and sign the next block. Overdue auto-settlements come first,
/// signed by the proposer; then pending transactions at least
/// `policy.min_age` old in `(timestamp, tx_id)` order, each checked
/// against the state produced by everything before it. Transactions that
/// fail only because of current state stay pending.
pub fn propose_block(
    replica: &Replica,
    keypair: &Keypair,
    set: &ValidatorSet,
    round: u64,
    timestamp: u64,
    policy: ProposalPolicy,
) -> Result<Proposal, ProposeError> {
    let height = replica.height() + 1;
    let me = keypair.user_id();
    if set.proposer_at(height, round) != me {
        return Err(ProposeError::NotMyTurn { me, height, round });
    }

    let mut state = replica.state.clone();
    let mut txs = Vec::new();
    let mut audit = Vec::new();
    for s in replica.state.auto_settle() {
        let tx = SignedTransaction::sign(keypair, LotEvent::PaymentSettled(s), timestamp);
        if state.apply_tx(&tx, height).is_ok() {
            txs.push(tx);
        }
    }
    let ripe = |tx: &&SignedTransaction| tx.timestamp.saturating_add(policy.min_age) <= timestamp;
    for tx in replica.mempool.values().filter(ripe) {
        match state.apply_tx(tx, height) {
            Ok(()) => txs.push(tx.clone()),
            Err(r) if is_permanent(&r) => {
                debug!("dropping {}: {r}", tx.tx_id);
                audit.push(AuditEntry {
                    tx_id: tx.tx_id,
                    reason: r.to_string(),
                });
            }
            Err(_) => {}
        }
    }
    if txs.is_empty() && !policy.allow_empty {
        return Err(ProposeError::EmptyMempoolPolicy);
    }
    Ok(Proposal {
        block: Block::propose(replica.chain.tip(), txs, keypair, timestamp),
        audit,
    })
}

/// Full check of a proposed block against the replica's committed chain:
/// block invariants, proposer rotation, optional slot timestamp, every
/// transaction in order, and the auto-settlement deadline. Returns the state
/// the block would produce.
pub fn validate_proposal(
    replica: &Replica,
    block: &Block,
    set: &ValidatorSet,
    round: u64,
    slot_start: Option<u64>,
) -> Result<LedgerState, ProposalRejection> {
    replica
        .chain
        .check_append(block)
        .map_err(ProposalRejection::BadBlock)?;
    let expected = set.proposer_at(block.height(), round);
    if block.header.proposer != expected {
        return Err(ProposalRejection::WrongProposer {
            expected,
            got: block.header.proposer,
        });
    }
    if let Some(expected) = slot_start {
        if block.header.timestamp != expected {
            return Err(ProposalRejection::BadTimestamp {
                expected,
                got: block.header.timestamp,
            });
        }
    }
    let mut next = replica.state.clone();
    next.apply_block(block).map_err(ProposalRejection::BadTx)?;
    for (lot_id, leg) in replica.state.settlements_due(block.height()) {
        let paid = next
            .lot(&lot_id)
            .and_then(|l| l.legs.get(leg as usize))
            .is_some_and(|l| l.settled.is_some());
        if !paid {
            return Err(ProposalRejection::MissingSettlement { lot_id, leg });
        }
    }
    Ok(next)
}
