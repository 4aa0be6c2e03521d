//! Committed world state: registered users and lot states, derived by
//! replaying blocks. Every transaction is authorized and validated here
//! before it can be part of a block.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{Digest, Keypair, SessionId, UserId};
use crate::identity::{IdentityError, IdentityEvent, Role, SessionStore, UserDirectory, UserRecord};
use crate::ledger::{Block, Chain, Payload, SignedTransaction, TxError};
use crate::supplychain::{
    auto_settle, check_event, ChainRules, LotEvent, LotState, Settlement, SettlementMode,
    SupplyError, TransitionContext, TxMeta,
};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum Rejection {
    #[error("invalid transaction: {0}")]
    InvalidTx(#[serde(serialize_with = "ser_display")] TxError),
    #[error("transaction {0} already committed")]
    Duplicate(Digest),
    #[error("submitter {0} is not registered")]
    UnknownSubmitter(UserId),
    #[error(transparent)]
    Identity(#[serde(serialize_with = "ser_display")] IdentityError),
    #[error("unauthorized: {0}")]
    Unauthorized(&'static str),
    #[error(transparent)]
    Supply(SupplyError),
}

fn ser_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl Rejection {
    /// Stable error code for wire envelopes.
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::InvalidTx(TxError::BadSignature) => "BadSignature",
            Rejection::InvalidTx(TxError::BadTxId) => "BadTxId",
            Rejection::Duplicate(_) => "DuplicateTransaction",
            Rejection::UnknownSubmitter(_) => "UnknownUser",
            Rejection::Identity(e) => identity_code(e),
            Rejection::Unauthorized(_) => "Unauthorized",
            Rejection::Supply(SupplyError::Unauthorized(_)) => "Unauthorized",
            Rejection::Supply(SupplyError::UnknownLot(_)) => "UnknownLot",
            Rejection::Supply(SupplyError::IllegalTransition(_)) => "IllegalTransition",
            Rejection::Supply(SupplyError::StaleCustody) => "StaleCustody",
        }
    }
}

pub fn identity_code(e: &IdentityError) -> &'static str {
    match e {
        IdentityError::AlreadyRegistered(_) => "AlreadyRegistered",
        IdentityError::WeakPassword => "WeakPassword",
        IdentityError::InvalidEmail => "InvalidEmail",
        IdentityError::InvalidRecoverySet => "InvalidRecoverySet",
        IdentityError::UnknownUser => "UnknownUser",
        IdentityError::BadPassword => "BadPassword",
        IdentityError::RecoveryFailed => "RecoveryFailed",
        IdentityError::SessionExpired => "SessionExpired",
        IdentityError::SessionUnknown => "SessionUnknown",
        IdentityError::DecryptAuthFailure => "DecryptAuthFailure",
    }
}

/// A block transaction that failed replay.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("block {height} transaction {index} ({tx_id}): {reason}")]
pub struct BlockRejection {
    pub height: u64,
    pub index: usize,
    pub tx_id: Digest,
    pub reason: Rejection,
}

#[derive(Debug, Clone)]
pub struct LedgerState {
    validators: Vec<UserId>,
    rules: ChainRules,
    users: BTreeMap<UserId, UserRecord>,
    lots: BTreeMap<Digest, LotState>,
    seen: HashSet<Digest>,
    height: u64,
}

impl UserDirectory for LedgerState {
    fn user(&self, id: &UserId) -> Option<&UserRecord> {
        self.users.get(id)
    }
}

impl LedgerState {
    pub fn new(validators: Vec<UserId>, rules: ChainRules) -> Self {
        Self {
            validators,
            rules,
            users: BTreeMap::new(),
            lots: BTreeMap::new(),
            seen: HashSet::new(),
            height: 0,
        }
    }

    /// Replay every block of a verified chain.
    pub fn from_chain(chain: &Chain, rules: ChainRules) -> Result<Self, BlockRejection> {
        let mut state = Self::new(chain.validators().to_vec(), rules);
        for block in &chain.blocks()[1..] {
            state.apply_block(block)?;
        }
        Ok(state)
    }

    pub fn rules(&self) -> &ChainRules {
        &self.rules
    }

    pub fn validators(&self) -> &[UserId] {
        &self.validators
    }

    pub fn is_validator(&self, id: &UserId) -> bool {
        self.validators.contains(id)
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn users(&self) -> &BTreeMap<UserId, UserRecord> {
        &self.users
    }

    pub fn lots(&self) -> &BTreeMap<Digest, LotState> {
        &self.lots
    }

    pub fn lot(&self, id: &Digest) -> Option<&LotState> {
        self.lots.get(id)
    }

    pub fn role_of(&self, id: &UserId) -> Option<Role> {
        self.users.get(id).map(|u| u.role)
    }

    pub fn contains_tx(&self, id: &Digest) -> bool {
        self.seen.contains(id)
    }

    fn lot_for(&self, tx: &SignedTransaction, ev: &LotEvent) -> Option<&LotState> {
        let id = ev.lot_id().unwrap_or(tx.tx_id);
        self.lots.get(&id)
    }

    /// Full admission check of one transaction against the current state.
    pub fn check_tx(&self, tx: &SignedTransaction) -> Result<(), Rejection> {
        tx.verify().map_err(Rejection::InvalidTx)?;
        if self.seen.contains(&tx.tx_id) {
            return Err(Rejection::Duplicate(tx.tx_id));
        }
        match &tx.payload {
            Payload::Identity(IdentityEvent::Register(rec)) => {
                if tx.submitter != rec.user_id {
                    return Err(Rejection::Unauthorized("registrations are self-signed"));
                }
                if self.users.contains_key(&rec.user_id) {
                    return Err(Rejection::Identity(IdentityError::AlreadyRegistered(rec.user_id)));
                }
                if rec.role == Role::Validator && !self.is_validator(&rec.user_id) {
                    return Err(Rejection::Unauthorized("validator role is fixed at genesis"));
                }
                Ok(())
            }
            Payload::Identity(IdentityEvent::RotateCredentials(rot)) => {
                if !self.users.contains_key(&rot.user_id) {
                    return Err(Rejection::Identity(IdentityError::UnknownUser));
                }
                if tx.submitter != rot.user_id && !self.is_validator(&tx.submitter) {
                    return Err(Rejection::Unauthorized(
                        "credential rotation by the user or a validator",
                    ));
                }
                Ok(())
            }
            Payload::Supply(ev) => {
                let is_validator = self.is_validator(&tx.submitter);
                if !is_validator && !self.users.contains_key(&tx.submitter) {
                    return Err(Rejection::UnknownSubmitter(tx.submitter));
                }
                let role_of = |id: &UserId| self.role_of(id);
                let ctx = TransitionContext {
                    rules: self.rules,
                    role_of: &role_of,
                };
                check_event(self.lot_for(tx, ev), &tx.submitter, is_validator, ev, &ctx)
                    .map_err(Rejection::Supply)
            }
        }
    }

    /// Check and apply one transaction committed at `height`.
    pub fn apply_tx(&mut self, tx: &SignedTransaction, height: u64) -> Result<(), Rejection> {
        self.check_tx(tx)?;
        let meta = TxMeta {
            tx_id: tx.tx_id,
            height,
            timestamp: tx.timestamp,
        };
        match &tx.payload {
            Payload::Identity(IdentityEvent::Register(rec)) => {
                self.users.insert(rec.user_id, rec.clone());
            }
            Payload::Identity(IdentityEvent::RotateCredentials(rot)) => {
                if let Some(rec) = self.users.get_mut(&rot.user_id) {
                    rec.apply_rotation(rot);
                }
            }
            Payload::Supply(ev @ LotEvent::LotRegistered(_)) => {
                let lot = LotState::registered(ev, tx.submitter, meta).expect("registration event");
                self.lots.insert(lot.lot_id, lot);
            }
            Payload::Supply(ev) => {
                let id = ev.lot_id().expect("lot event names a lot");
                let users = &self.users;
                let role_of = |id: &UserId| users.get(id).map(|u| u.role);
                let ctx = TransitionContext {
                    rules: self.rules,
                    role_of: &role_of,
                };
                self.lots
                    .get_mut(&id)
                    .expect("checked lot exists")
                    .apply(ev, meta, &ctx);
            }
        }
        self.seen.insert(tx.tx_id);
        Ok(())
    }

    /// Apply a block's transactions in order; all or nothing.
    pub fn apply_block(&mut self, block: &Block) -> Result<(), BlockRejection> {
        let height = block.height();
        let mut next = self.clone();
        for (index, tx) in block.transactions.iter().enumerate() {
            next.apply_tx(tx, height).map_err(|reason| BlockRejection {
                height,
                index,
                tx_id: tx.tx_id,
                reason,
            })?;
        }
        next.height = height;
        *self = next;
        Ok(())
    }

    /// Settlements the next block should carry (auto mode only).
    pub fn auto_settle(&self) -> Vec<Settlement> {
        auto_settle(&self.lots, &self.rules.settlement)
    }

    /// Delivered, unpaid legs that a block at `height` must settle to stay
    /// within the auto-mode lag bound.
    pub fn settlements_due(&self, height: u64) -> Vec<(Digest, u32)> {
        if self.rules.settlement.mode != SettlementMode::Auto {
            return Vec::new();
        }
        let lag = self.rules.settlement.max_block_lag.max(1);
        self.lots
            .values()
            .flat_map(|lot| {
                lot.legs.iter().filter_map(move |leg| match (leg.delivered_height, &leg.settled) {
                    (Some(d), None) if d + lag <= height => Some((lot.lot_id, leg.index)),
                    _ => None,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmitError {
    #[error(transparent)]
    Session(IdentityError),
    #[error("session belongs to a different user than the signing key")]
    SessionMismatch,
    #[error(transparent)]
    Rejected(Rejection),
}

/// Session-gated submission of a supply-chain event: checks the session,
/// signs with the caller's key and validates against committed state. The
/// returned transaction is ready to be queued for the next block.
pub fn submit_event(
    state: &LedgerState,
    sessions: &SessionStore,
    session_id: &SessionId,
    keypair: &Keypair,
    event: LotEvent,
    now: u64,
) -> Result<SignedTransaction, SubmitError> {
    let user = sessions
        .validate(session_id, now)
        .map_err(SubmitError::Session)?;
    if user != keypair.user_id() {
        return Err(SubmitError::SessionMismatch);
    }
    let tx = SignedTransaction::sign(keypair, event, now);
    state.check_tx(&tx).map_err(SubmitError::Rejected)?;
    Ok(tx)
}
