use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{LotEvent, QualityReport, SupplyError};
use crate::crypto::{Digest, UserId};
use crate::identity::{IdentityEvent, Role};
use crate::ledger::{Chain, Payload};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceLeg {
    pub index: u32,
    pub role_from: Role,
    pub role_to: Role,
    pub from: UserId,
    pub to: UserId,
    pub tx_id: Digest,
    pub height: u64,
    pub timestamp: u64,
    pub price_paise_per_kg: u64,
    pub delivered_height: Option<u64>,
    pub settled_height: Option<u64>,
    pub amount_paise: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityEntry {
    pub tx_id: Digest,
    pub height: u64,
    pub timestamp: u64,
    pub report: QualityReport,
}

/// The journey of one lot, rebuilt from committed blocks only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotProvenance {
    pub lot_id: Digest,
    pub registered_by: UserId,
    pub farm_location: String,
    pub quantity_kg: u64,
    pub registered_height: u64,
    pub registered_at: u64,
    pub seed_supplier: Option<UserId>,
    pub custodian_role: Role,
    pub legs: Vec<ProvenanceLeg>,
    pub quality_timeline: Vec<QualityEntry>,
}

impl LotProvenance {
    /// Each leg starts where the previous one ended.
    pub fn is_contiguous(&self) -> bool {
        let mut role = Role::Farmer;
        for leg in &self.legs {
            if leg.role_from != role {
                return false;
            }
            role = leg.role_to;
        }
        true
    }
}

/// Reconstruct a lot's provenance by scanning the chain.
pub fn trace_lot(chain: &Chain, lot_id: &Digest) -> Result<LotProvenance, SupplyError> {
    let (reg_tx, reg_height) = chain
        .get_transaction(lot_id)
        .map_err(|_| SupplyError::UnknownLot(*lot_id))?;
    let Payload::Supply(LotEvent::LotRegistered(reg)) = &reg_tx.payload else {
        return Err(SupplyError::UnknownLot(*lot_id));
    };

    let mut roles: HashMap<UserId, Role> = HashMap::new();
    let mut prov = LotProvenance {
        lot_id: *lot_id,
        registered_by: reg_tx.submitter,
        farm_location: reg.farm_location.clone(),
        quantity_kg: reg.quantity_kg,
        registered_height: reg_height,
        registered_at: reg_tx.timestamp,
        seed_supplier: reg.seed_supplier,
        custodian_role: Role::Farmer,
        legs: Vec::new(),
        quality_timeline: Vec::new(),
    };
    if let Some(q) = &reg.quality {
        prov.quality_timeline.push(QualityEntry {
            tx_id: reg_tx.tx_id,
            height: reg_height,
            timestamp: reg_tx.timestamp,
            report: q.clone(),
        });
    }

    for (tx, height) in chain.transactions() {
        let event = match &tx.payload {
            Payload::Identity(IdentityEvent::Register(rec)) => {
                roles.insert(rec.user_id, rec.role);
                continue;
            }
            Payload::Identity(_) => continue,
            Payload::Supply(ev) => ev,
        };
        if event.lot_id() != Some(*lot_id) {
            continue;
        }
        match event {
            LotEvent::LotRegistered(_) => {}
            LotEvent::QualityUpdate(q) => prov.quality_timeline.push(QualityEntry {
                tx_id: tx.tx_id,
                height,
                timestamp: tx.timestamp,
                report: q.quality.clone(),
            }),
            LotEvent::Transfer(t) => {
                let role_to = roles.get(&t.actor_to).copied().unwrap_or(Role::Consumer);
                prov.legs.push(ProvenanceLeg {
                    index: prov.legs.len() as u32,
                    role_from: prov.custodian_role,
                    role_to,
                    from: t.actor_from,
                    to: t.actor_to,
                    tx_id: tx.tx_id,
                    height,
                    timestamp: tx.timestamp,
                    price_paise_per_kg: t.price_paise_per_kg,
                    delivered_height: None,
                    settled_height: None,
                    amount_paise: None,
                });
            }
            LotEvent::DeliveryConfirmed(d) => {
                if let Some(leg) = prov.legs.get_mut(d.leg as usize) {
                    leg.delivered_height = Some(height);
                    prov.custodian_role = leg.role_to;
                }
            }
            LotEvent::PaymentSettled(s) => {
                if let Some(leg) = prov.legs.get_mut(s.leg as usize) {
                    leg.settled_height = Some(height);
                    leg.amount_paise = Some(s.amount_paise);
                }
            }
        }
    }
    Ok(prov)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegLatency {
    pub leg: u32,
    pub delivered_height: u64,
    pub settled_height: u64,
    pub blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentLatency {
    pub lot_id: Digest,
    pub settled: Vec<LegLatency>,
    /// Delivered legs still waiting for payment.
    pub outstanding: Vec<u32>,
}

/// Blocks between each leg's delivery confirmation and its settlement.
pub fn payment_latency(chain: &Chain, lot_id: &Digest) -> Result<PaymentLatency, SupplyError> {
    let prov = trace_lot(chain, lot_id)?;
    let mut out = PaymentLatency {
        lot_id: *lot_id,
        settled: Vec::new(),
        outstanding: Vec::new(),
    };
    for leg in &prov.legs {
        match (leg.delivered_height, leg.settled_height) {
            (Some(d), Some(s)) => out.settled.push(LegLatency {
                leg: leg.index,
                delivered_height: d,
                settled_height: s,
                blocks: s.saturating_sub(d),
            }),
            (Some(_), None) => out.outstanding.push(leg.index),
            _ => {}
        }
    }
    Ok(out)
}
