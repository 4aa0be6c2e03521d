use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Decode, DecodeError, DecodeResult, Decoder, Encode, Encoder};
use crate::crypto::{hash_canonical, verify_signature, Digest, Keypair, Signature, UserId};
use crate::identity::IdentityEvent;
use crate::supplychain::LotEvent;

/// Union of everything a transaction can carry. The first byte of the
/// canonical encoding is the tag: `0x01..=0x02` identity, `0x10..=0x14`
/// supply chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Identity(IdentityEvent),
    Supply(LotEvent),
}

impl Payload {
    pub fn tag(&self) -> u8 {
        match self {
            Payload::Identity(ev) => ev.tag(),
            Payload::Supply(ev) => ev.tag(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::Identity(ev) => ev.kind_name(),
            Payload::Supply(ev) => ev.kind_name(),
        }
    }
}

impl Encode for Payload {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.tag());
        match self {
            Payload::Identity(ev) => ev.encode_body(enc),
            Payload::Supply(ev) => ev.encode_body(enc),
        }
    }
}

impl Decode for Payload {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        let tag = dec.u8()?;
        match tag {
            0x01..=0x0f => IdentityEvent::decode_body(tag, dec).map(Payload::Identity),
            0x10..=0x1f => LotEvent::decode_body(tag, dec).map(Payload::Supply),
            _ => Err(DecodeError::InvalidTag {
                what: "payload",
                tag,
            }),
        }
    }
}

impl From<IdentityEvent> for Payload {
    fn from(ev: IdentityEvent) -> Self {
        Payload::Identity(ev)
    }
}

impl From<LotEvent> for Payload {
    fn from(ev: LotEvent) -> Self {
        Payload::Supply(ev)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("transaction id does not match its contents")]
    BadTxId,
    #[error("signature does not verify against the submitter key")]
    BadSignature,
}

/// A payload signed by its submitter.
///
/// `tx_id` is the digest of the signed body (submitter, payload, timestamp),
/// so two submissions of identical event data at different times stay
/// distinct while an exact replay collides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTransaction {
    pub tx_id: Digest,
    pub submitter: UserId,
    pub payload: Payload,
    pub timestamp: u64,
    pub signature: Signature,
}

impl SignedTransaction {
    pub fn signing_bytes(submitter: &UserId, payload: &Payload, timestamp: u64) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.value(submitter).value(payload).u64(timestamp);
        enc.finish()
    }

    pub fn sign(keypair: &Keypair, payload: impl Into<Payload>, timestamp: u64) -> Self {
        let payload = payload.into();
        let submitter = keypair.user_id();
        let body = Self::signing_bytes(&submitter, &payload, timestamp);
        Self {
            tx_id: hash_canonical(&body),
            submitter,
            signature: keypair.sign(&body),
            payload,
            timestamp,
        }
    }

    /// Assemble a transaction from a detached signature produced elsewhere
    /// (a wallet that never hands its key to the node).
    pub fn from_parts(
        submitter: UserId,
        payload: Payload,
        timestamp: u64,
        signature: Signature,
    ) -> Result<Self, TxError> {
        let body = Self::signing_bytes(&submitter, &payload, timestamp);
        let tx = Self {
            tx_id: hash_canonical(&body),
            submitter,
            payload,
            timestamp,
            signature,
        };
        tx.verify()?;
        Ok(tx)
    }

    pub fn compute_id(&self) -> Digest {
        hash_canonical(&Self::signing_bytes(
            &self.submitter,
            &self.payload,
            self.timestamp,
        ))
    }

    pub fn verify(&self) -> Result<(), TxError> {
        let body = Self::signing_bytes(&self.submitter, &self.payload, self.timestamp);
        if hash_canonical(&body) != self.tx_id {
            return Err(TxError::BadTxId);
        }
        if !verify_signature(&self.submitter, &body, &self.signature) {
            return Err(TxError::BadSignature);
        }
        Ok(())
    }
}

impl Encode for SignedTransaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.tx_id)
            .value(&self.submitter)
            .value(&self.payload)
            .u64(self.timestamp)
            .value(&self.signature);
    }
}

impl Decode for SignedTransaction {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            tx_id: dec.value()?,
            submitter: dec.value()?,
            payload: dec.value()?,
            timestamp: dec.u64()?,
            signature: dec.value()?,
        })
    }
}
