use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{LotEvent, QualityReport, Settlement};
use crate::crypto::{Digest, UserId};
use crate::identity::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SettlementMode {
    #[default]
    Auto,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementRule {
    pub mode: SettlementMode,
    /// Auto mode: a delivery committed at height h is settled by h + lag.
    pub max_block_lag: u64,
}

impl Default for SettlementRule {
    fn default() -> Self {
        Self {
            mode: SettlementMode::Auto,
            max_block_lag: 1,
        }
    }
}

impl SettlementRule {
    pub fn auto(max_block_lag: u64) -> Self {
        Self {
            mode: SettlementMode::Auto,
            max_block_lag: max_block_lag.max(1),
        }
    }

    pub fn manual() -> Self {
        Self {
            mode: SettlementMode::Manual,
            max_block_lag: 1,
        }
    }
}

/// How far a transfer may move along the custody chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CustodyOrder {
    /// Only to the immediately next role.
    #[default]
    Adjacent,
    /// To any strictly later role.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ChainRules {
    pub settlement: SettlementRule,
    pub custody: CustodyOrder,
}

/// Why an event cannot be applied to a lot in its current state.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum Violation {
    #[error("lot already exists")]
    LotExists,
    #[error("lot is not registered")]
    LotUnknown,
    #[error("lot has reached the consumer")]
    LotConsumed,
    #[error("quantity and price must be positive")]
    NonPositiveAmount,
    #[error("a transfer is already pending")]
    TransferPending,
    #[error("previous leg is not settled")]
    UnsettledLeg,
    #[error("sender is not the current custodian")]
    NotCustodian,
    #[error("sender and receiver are the same actor")]
    SelfTransfer,
    #[error("receiver is not a registered actor")]
    UnknownActor,
    #[error("{from} cannot hand over to {to}")]
    IllegalRoles { from: Role, to: Role },
    #[error("no pending transfer to confirm")]
    NoPendingTransfer,
    #[error("leg {got} does not match pending leg {expected}")]
    LegMismatch { expected: u32, got: u32 },
    #[error("no outstanding payment for leg {0}")]
    NoOutstandingPayment(u32),
    #[error("payer/payee do not match the delivered leg")]
    PartyMismatch,
    #[error("amount {got} differs from owed {expected}")]
    AmountMismatch { expected: u64, got: u64 },
}

/// Inputs a transition may depend on besides the lot itself.
pub struct TransitionContext<'a> {
    pub rules: ChainRules,
    pub role_of: &'a dyn Fn(&UserId) -> Option<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leg {
    pub index: u32,
    pub from: UserId,
    pub to: UserId,
    pub role_from: Role,
    pub role_to: Role,
    pub price_paise_per_kg: u64,
    pub transfer_tx: Digest,
    pub transfer_height: u64,
    pub transfer_timestamp: u64,
    pub delivered_height: Option<u64>,
    pub settled: Option<SettledPayment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettledPayment {
    pub tx_id: Digest,
    pub height: u64,
    pub amount_paise: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutstandingPayment {
    pub leg: u32,
    pub payer: UserId,
    pub payee: UserId,
    pub amount_paise: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub tx_id: Digest,
    pub height: u64,
    pub timestamp: u64,
    pub event: LotEvent,
}

/// Committed state of one lot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotState {
    pub lot_id: Digest,
    pub quantity_kg: u64,
    pub farm_location: String,
    pub price_paise_per_kg: u64,
    pub registered_by: UserId,
    pub custodian_role: Role,
    pub custodian: UserId,
    pub legs: Vec<Leg>,
    pub quality: Vec<QualityReport>,
    pub history: Vec<HistoryEntry>,
}

/// Where a transaction sits on the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxMeta {
    pub tx_id: Digest,
    pub height: u64,
    pub timestamp: u64,
}

impl LotState {
    pub fn is_consumed(&self) -> bool {
        self.custodian_role == Role::Consumer
    }

    pub fn pending_transfer(&self) -> Option<&Leg> {
        self.legs.last().filter(|l| l.delivered_height.is_none())
    }

    pub fn amount_owed(&self, leg: &Leg) -> Option<u64> {
        self.quantity_kg.checked_mul(leg.price_paise_per_kg)
    }

    pub fn outstanding_payments(&self) -> Vec<OutstandingPayment> {
        self.legs
            .iter()
            .filter(|l| l.delivered_height.is_some() && l.settled.is_none())
            .map(|l| OutstandingPayment {
                leg: l.index,
                payer: l.to,
                payee: l.from,
                amount_paise: self.amount_owed(l).unwrap_or(u64::MAX),
            })
            .collect()
    }

    /// True once every delivered leg has been paid.
    pub fn settled(&self) -> bool {
        self.legs
            .iter()
            .all(|l| l.delivered_height.is_none() || l.settled.is_some())
    }

    pub fn was_custodian(&self, who: &UserId) -> bool {
        self.registered_by == *who
            || self
                .legs
                .iter()
                .any(|l| l.delivered_height.is_some() && l.to == *who)
    }

    /// Apply an event that has already passed [`validate_transition`].
    pub fn apply(&mut self, event: &LotEvent, meta: TxMeta, ctx: &TransitionContext<'_>) {
        match event {
            LotEvent::LotRegistered(_) => {}
            LotEvent::QualityUpdate(q) => self.quality.push(q.quality.clone()),
            LotEvent::Transfer(t) => {
                let role_to = (ctx.role_of)(&t.actor_to).expect("validated receiver role");
                self.legs.push(Leg {
                    index: self.legs.len() as u32,
                    from: t.actor_from,
                    to: t.actor_to,
                    role_from: self.custodian_role,
                    role_to,
                    price_paise_per_kg: t.price_paise_per_kg,
                    transfer_tx: meta.tx_id,
                    transfer_height: meta.height,
                    transfer_timestamp: meta.timestamp,
                    delivered_height: None,
                    settled: None,
                });
            }
            LotEvent::DeliveryConfirmed(d) => {
                let leg = &mut self.legs[d.leg as usize];
                leg.delivered_height = Some(meta.height);
                self.custodian = leg.to;
                self.custodian_role = leg.role_to;
            }
            LotEvent::PaymentSettled(s) => {
                self.legs[s.leg as usize].settled = Some(SettledPayment {
                    tx_id: meta.tx_id,
                    height: meta.height,
                    amount_paise: s.amount_paise,
                });
            }
        }
        self.history.push(HistoryEntry {
            tx_id: meta.tx_id,
            height: meta.height,
            timestamp: meta.timestamp,
            event: event.clone(),
        });
    }

    /// State right after a (validated) registration.
    pub fn registered(event: &LotEvent, submitter: UserId, meta: TxMeta) -> Option<Self> {
        let LotEvent::LotRegistered(r) = event else {
            return None;
        };
        Some(Self {
            lot_id: meta.tx_id,
            quantity_kg: r.quantity_kg,
            farm_location: r.farm_location.clone(),
            price_paise_per_kg: r.price_paise_per_kg,
            registered_by: submitter,
            custodian_role: Role::Farmer,
            custodian: submitter,
            legs: Vec::new(),
            quality: r.quality.iter().cloned().collect(),
            history: vec![HistoryEntry {
                tx_id: meta.tx_id,
                height: meta.height,
                timestamp: meta.timestamp,
                event: event.clone(),
            }],
        })
    }
}

fn roles_allowed(from: Role, to: Role, order: CustodyOrder) -> bool {
    match (from.stage(), to.stage()) {
        (Some(a), Some(b)) => match order {
            CustodyOrder::Adjacent => b == a + 1,
            CustodyOrder::Forward => b > a,
        },
        _ => false,
    }
}

/// Pure check of one event against the lot's current state (`None` when the
/// lot does not exist yet).
pub fn validate_transition(
    state: Option<&LotState>,
    event: &LotEvent,
    ctx: &TransitionContext<'_>,
) -> Result<(), Violation> {
    match event {
        LotEvent::LotRegistered(r) => {
            if state.is_some() {
                return Err(Violation::LotExists);
            }
            if r.quantity_kg == 0 || r.price_paise_per_kg == 0 {
                return Err(Violation::NonPositiveAmount);
            }
            Ok(())
        }
        LotEvent::QualityUpdate(_) => live(state).map(|_| ()),
        LotEvent::Transfer(t) => {
            let s = live(state)?;
            if s.pending_transfer().is_some() {
                return Err(Violation::TransferPending);
            }
            if ctx.rules.settlement.mode == SettlementMode::Auto && !s.settled() {
                return Err(Violation::UnsettledLeg);
            }
            if t.actor_from != s.custodian {
                return Err(Violation::NotCustodian);
            }
            if t.actor_from == t.actor_to {
                return Err(Violation::SelfTransfer);
            }
            if t.price_paise_per_kg == 0 {
                return Err(Violation::NonPositiveAmount);
            }
            let to = (ctx.role_of)(&t.actor_to).ok_or(Violation::UnknownActor)?;
            if !roles_allowed(s.custodian_role, to, ctx.rules.custody) {
                return Err(Violation::IllegalRoles {
                    from: s.custodian_role,
                    to,
                });
            }
            if s.quantity_kg.checked_mul(t.price_paise_per_kg).is_none() {
                return Err(Violation::NonPositiveAmount);
            }
            Ok(())
        }
        LotEvent::DeliveryConfirmed(d) => {
            let s = state.ok_or(Violation::LotUnknown)?;
            let pending = s.pending_transfer().ok_or(Violation::NoPendingTransfer)?;
            if pending.index != d.leg {
                return Err(Violation::LegMismatch {
                    expected: pending.index,
                    got: d.leg,
                });
            }
            Ok(())
        }
        LotEvent::PaymentSettled(p) => {
            let s = state.ok_or(Violation::LotUnknown)?;
            check_settlement(s, p)
        }
    }
}

fn live(state: Option<&LotState>) -> Result<&LotState, Violation> {
    let s = state.ok_or(Violation::LotUnknown)?;
    if s.is_consumed() {
        Err(Violation::LotConsumed)
    } else {
        Ok(s)
    }
}

fn check_settlement(s: &LotState, p: &Settlement) -> Result<(), Violation> {
    let owed = s
        .outstanding_payments()
        .into_iter()
        .find(|o| o.leg == p.leg)
        .ok_or(Violation::NoOutstandingPayment(p.leg))?;
    if owed.payer != p.payer || owed.payee != p.payee {
        return Err(Violation::PartyMismatch);
    }
    if owed.amount_paise != p.amount_paise {
        return Err(Violation::AmountMismatch {
            expected: owed.amount_paise,
            got: p.amount_paise,
        });
    }
    Ok(())
}
