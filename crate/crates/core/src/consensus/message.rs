use serde::Serialize;

use crate::codec::{Decode, DecodeResult, Decoder, Encode, Encoder};
use crate::crypto::{hash_concat, verify_signature, Digest, Keypair, Signature, UserId};
use crate::ledger::Block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum MessageKind {
    TxGossip,
    BlockProposal,
    BlockVoteAck,
}

/// A message in flight between two simulated nodes. The payload is the
/// canonical encoding of a transaction or a [`ProposalEnvelope`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkMessage {
    pub kind: MessageKind,
    pub sender: usize,
    pub receiver: usize,
    pub payload: Vec<u8>,
    pub sent_at: u64,
    pub deliver_at: u64,
}

/// One validator's signature over `(slot, block_hash)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endorsement {
    pub signer: UserId,
    pub signature: Signature,
}

impl Endorsement {
    fn message(slot: u64, block_hash: &Digest) -> Digest {
        hash_concat([
            b"sugarchain-endorse".as_slice(),
            &slot.to_be_bytes(),
            block_hash.as_bytes(),
        ])
    }

    pub fn sign(keypair: &Keypair, slot: u64, block_hash: &Digest) -> Self {
        Self {
            signer: keypair.user_id(),
            signature: keypair.sign(Self::message(slot, block_hash).as_bytes()),
        }
    }

    pub fn verify(&self, slot: u64, block_hash: &Digest) -> bool {
        verify_signature(
            &self.signer,
            Self::message(slot, block_hash).as_bytes(),
            &self.signature,
        )
    }
}

impl Encode for Endorsement {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.signer).value(&self.signature);
    }
}

impl Decode for Endorsement {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            signer: dec.value()?,
            signature: dec.value()?,
        })
    }
}

/// A proposed block plus the chain of endorsements it has collected. The
/// first endorsement is the proposer's own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalEnvelope {
    pub slot: u64,
    pub round: u64,
    pub block: Block,
    pub endorsements: Vec<Endorsement>,
}

impl ProposalEnvelope {
    /// Distinct, correctly signed endorsers led by `proposer`.
    pub fn endorsements_valid(&self, proposer: &UserId, is_validator: impl Fn(&UserId) -> bool) -> bool {
        let Some(first) = self.endorsements.first() else {
            return false;
        };
        if first.signer != *proposer {
            return false;
        }
        let mut seen = Vec::with_capacity(self.endorsements.len());
        for e in &self.endorsements {
            if seen.contains(&e.signer)
                || !is_validator(&e.signer)
                || !e.verify(self.slot, &self.block.block_hash)
            {
                return false;
            }
            seen.push(e.signer);
        }
        true
    }

    pub fn signed_by(&self, id: &UserId) -> bool {
        self.endorsements.iter().any(|e| e.signer == *id)
    }
}

impl Encode for ProposalEnvelope {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.slot)
            .u64(self.round)
            .value(&self.block)
            .seq(&self.endorsements);
    }
}

impl Decode for ProposalEnvelope {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            slot: dec.u64()?,
            round: dec.u64()?,
            block: dec.value()?,
            endorsements: dec.seq()?,
        })
    }
}
