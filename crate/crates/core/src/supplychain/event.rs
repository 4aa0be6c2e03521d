use serde::{Deserialize, Serialize};

use crate::codec::{Decode, DecodeError, DecodeResult, Decoder, Encode, Encoder};
use crate::crypto::{Digest, UserId};

pub const TAG_LOT_REGISTERED: u8 = 0x10;
pub const TAG_QUALITY_UPDATE: u8 = 0x11;
pub const TAG_TRANSFER: u8 = 0x12;
pub const TAG_DELIVERY_CONFIRMED: u8 = 0x13;
pub const TAG_PAYMENT_SETTLED: u8 = 0x14;

/// Field quality observation. Moisture is in basis points (7250 = 72.50%).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub grade: String,
    pub moisture_bp: u32,
    pub affected_by_worms: bool,
}

impl Encode for QualityReport {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.grade)
            .u32(self.moisture_bp)
            .bool(self.affected_by_worms);
    }
}

impl Decode for QualityReport {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            grade: dec.string()?,
            moisture_bp: dec.u32()?,
            affected_by_worms: dec.bool()?,
        })
    }
}

/// A farmer puts a new lot on the ledger. Its lot id is the registering
/// transaction's id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotRegistration {
    pub quantity_kg: u64,
    pub farm_location: String,
    pub price_paise_per_kg: u64,
    #[serde(default)]
    pub mill_info: Option<String>,
    #[serde(default)]
    pub seed_supplier: Option<UserId>,
    #[serde(default)]
    pub quality: Option<QualityReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityUpdate {
    pub lot_id: Digest,
    pub quality: QualityReport,
}

/// Hand the whole lot to the next actor in the chain at an agreed price.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub lot_id: Digest,
    pub actor_from: UserId,
    pub actor_to: UserId,
    pub price_paise_per_kg: u64,
    #[serde(default)]
    pub mill_info: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryConfirmation {
    pub lot_id: Digest,
    pub leg: u32,
}

/// Closes a delivered leg: the receiver pays the sender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub lot_id: Digest,
    pub leg: u32,
    pub payer: UserId,
    pub payee: UserId,
    pub amount_paise: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LotEvent {
    LotRegistered(LotRegistration),
    QualityUpdate(QualityUpdate),
    Transfer(Transfer),
    DeliveryConfirmed(DeliveryConfirmation),
    PaymentSettled(Settlement),
}

impl LotEvent {
    pub fn tag(&self) -> u8 {
        match self {
            LotEvent::LotRegistered(_) => TAG_LOT_REGISTERED,
            LotEvent::QualityUpdate(_) => TAG_QUALITY_UPDATE,
            LotEvent::Transfer(_) => TAG_TRANSFER,
            LotEvent::DeliveryConfirmed(_) => TAG_DELIVERY_CONFIRMED,
            LotEvent::PaymentSettled(_) => TAG_PAYMENT_SETTLED,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LotEvent::LotRegistered(_) => "lot_registered",
            LotEvent::QualityUpdate(_) => "quality_update",
            LotEvent::Transfer(_) => "transfer",
            LotEvent::DeliveryConfirmed(_) => "delivery_confirmed",
            LotEvent::PaymentSettled(_) => "payment_settled",
        }
    }

    /// The lot this event targets; `None` for registrations, whose id is
    /// only known once the transaction is signed.
    pub fn lot_id(&self) -> Option<Digest> {
        match self {
            LotEvent::LotRegistered(_) => None,
            LotEvent::QualityUpdate(e) => Some(e.lot_id),
            LotEvent::Transfer(e) => Some(e.lot_id),
            LotEvent::DeliveryConfirmed(e) => Some(e.lot_id),
            LotEvent::PaymentSettled(e) => Some(e.lot_id),
        }
    }

    pub(crate) fn encode_body(&self, enc: &mut Encoder) {
        match self {
            LotEvent::LotRegistered(e) => {
                enc.u64(e.quantity_kg)
                    .str(&e.farm_location)
                    .u64(e.price_paise_per_kg)
                    .option(e.mill_info.as_ref())
                    .option(e.seed_supplier.as_ref())
                    .option(e.quality.as_ref());
            }
            LotEvent::QualityUpdate(e) => {
                enc.value(&e.lot_id).value(&e.quality);
            }
            LotEvent::Transfer(e) => {
                enc.value(&e.lot_id)
                    .value(&e.actor_from)
                    .value(&e.actor_to)
                    .u64(e.price_paise_per_kg)
                    .option(e.mill_info.as_ref());
            }
            LotEvent::DeliveryConfirmed(e) => {
                enc.value(&e.lot_id).u32(e.leg);
            }
            LotEvent::PaymentSettled(e) => {
                enc.value(&e.lot_id)
                    .u32(e.leg)
                    .value(&e.payer)
                    .value(&e.payee)
                    .u64(e.amount_paise);
            }
        }
    }

    pub(crate) fn decode_body(tag: u8, dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(match tag {
            TAG_LOT_REGISTERED => LotEvent::LotRegistered(LotRegistration {
                quantity_kg: dec.u64()?,
                farm_location: dec.string()?,
                price_paise_per_kg: dec.u64()?,
                mill_info: dec.option()?,
                seed_supplier: dec.option()?,
                quality: dec.option()?,
            }),
            TAG_QUALITY_UPDATE => LotEvent::QualityUpdate(QualityUpdate {
                lot_id: dec.value()?,
                quality: dec.value()?,
            }),
            TAG_TRANSFER => LotEvent::Transfer(Transfer {
                lot_id: dec.value()?,
                actor_from: dec.value()?,
                actor_to: dec.value()?,
                price_paise_per_kg: dec.u64()?,
                mill_info: dec.option()?,
            }),
            TAG_DELIVERY_CONFIRMED => LotEvent::DeliveryConfirmed(DeliveryConfirmation {
                lot_id: dec.value()?,
                leg: dec.u32()?,
            }),
            TAG_PAYMENT_SETTLED => LotEvent::PaymentSettled(Settlement {
                lot_id: dec.value()?,
                leg: dec.u32()?,
                payer: dec.value()?,
                payee: dec.value()?,
                amount_paise: dec.u64()?,
            }),
            _ => {
                return Err(DecodeError::InvalidTag {
                    what: "lot event",
                    tag,
                })
            }
        })
    }
}
