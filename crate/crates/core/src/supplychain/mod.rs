//! Per-lot custody state machine for the linear value chain
//! seed supplier -> farmer -> sugar mill -> distributor -> retailer -> consumer,
//! with delivery confirmation, payment settlement and provenance tracing.

mod event;
mod lot;
mod trace;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{Digest, UserId};
use crate::identity::Role;

pub use event::{
    DeliveryConfirmation, LotEvent, LotRegistration, QualityReport, QualityUpdate, Settlement,
    Transfer, TAG_DELIVERY_CONFIRMED, TAG_LOT_REGISTERED, TAG_PAYMENT_SETTLED, TAG_QUALITY_UPDATE,
    TAG_TRANSFER,
};
pub use lot::{
    validate_transition, ChainRules, CustodyOrder, HistoryEntry, Leg, LotState, OutstandingPayment,
    SettledPayment, SettlementMode, SettlementRule, TransitionContext, TxMeta, Violation,
};
pub use trace::{
    payment_latency, trace_lot, LegLatency, LotProvenance, PaymentLatency, ProvenanceLeg,
    QualityEntry,
};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum SupplyError {
    #[error("unauthorized: {0}")]
    Unauthorized(&'static str),
    #[error("unknown lot {0}")]
    UnknownLot(Digest),
    #[error("illegal transition: {0}")]
    IllegalTransition(Violation),
    #[error("submitter no longer holds custody")]
    StaleCustody,
}

impl From<Violation> for SupplyError {
    fn from(v: Violation) -> Self {
        SupplyError::IllegalTransition(v)
    }
}

/// Who may submit what. Checked before [`validate_transition`].
pub fn authorize(
    state: Option<&LotState>,
    submitter: &UserId,
    submitter_role: Option<Role>,
    is_validator: bool,
    event: &LotEvent,
    rules: &ChainRules,
) -> Result<(), SupplyError> {
    if let LotEvent::LotRegistered(_) = event {
        return match submitter_role {
            Some(Role::Farmer) => Ok(()),
            _ => Err(SupplyError::Unauthorized("only farmers register lots")),
        };
    }
    let lot_id = event.lot_id().expect("non-registration events name a lot");
    let s = state.ok_or(SupplyError::UnknownLot(lot_id))?;
    match event {
        LotEvent::LotRegistered(_) => unreachable!(),
        LotEvent::QualityUpdate(_) => {
            if *submitter == s.custodian || submitter_role == Some(Role::SugarMill) {
                Ok(())
            } else {
                Err(SupplyError::Unauthorized(
                    "quality updates come from the custodian or a sugar mill",
                ))
            }
        }
        LotEvent::Transfer(t) => {
            if *submitter != s.custodian {
                return Err(if s.was_custodian(submitter) {
                    SupplyError::StaleCustody
                } else {
                    SupplyError::Unauthorized("only the custodian transfers a lot")
                });
            }
            if t.actor_from != *submitter {
                return Err(SupplyError::Unauthorized("transfer must be sent by its submitter"));
            }
            Ok(())
        }
        LotEvent::DeliveryConfirmed(_) => {
            let pending = s
                .pending_transfer()
                .ok_or(SupplyError::IllegalTransition(Violation::NoPendingTransfer))?;
            if pending.to == *submitter {
                Ok(())
            } else {
                Err(SupplyError::Unauthorized("only the receiver confirms delivery"))
            }
        }
        LotEvent::PaymentSettled(p) => match rules.settlement.mode {
            SettlementMode::Auto if is_validator => Ok(()),
            SettlementMode::Auto => Err(SupplyError::Unauthorized(
                "settlements are issued automatically by validators",
            )),
            SettlementMode::Manual => match s.legs.get(p.leg as usize) {
                Some(leg) if leg.to != *submitter => {
                    Err(SupplyError::Unauthorized("only the payer settles a leg"))
                }
                _ => Ok(()),
            },
        },
    }
}

/// Authorization followed by the transition check.
pub fn check_event(
    state: Option<&LotState>,
    submitter: &UserId,
    is_validator: bool,
    event: &LotEvent,
    ctx: &TransitionContext<'_>,
) -> Result<(), SupplyError> {
    authorize(
        state,
        submitter,
        (ctx.role_of)(submitter),
        is_validator,
        event,
        &ctx.rules,
    )?;
    validate_transition(state, event, ctx)?;
    Ok(())
}

/// Settlements owed on the current state, in (lot id, leg) order. Running it
/// again after the settlements commit yields nothing.
pub fn auto_settle(lots: &BTreeMap<Digest, LotState>, rule: &SettlementRule) -> Vec<Settlement> {
    if rule.mode != SettlementMode::Auto {
        return Vec::new();
    }
    lots.values()
        .flat_map(|lot| {
            lot.outstanding_payments().into_iter().map(|o| Settlement {
                lot_id: lot.lot_id,
                leg: o.leg,
                payer: o.payer,
                payee: o.payee,
                amount_paise: o.amount_paise,
            })
        })
        .collect()
}
