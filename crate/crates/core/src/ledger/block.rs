use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{LedgerError, SignedTransaction};
use crate::codec::{Decode, DecodeResult, Decoder, Encode, Encoder};
use crate::crypto::{hash_canonical, hash_concat, verify_signature, Digest, Keypair, Signature, UserId};

/// Genesis-only header extension: the chain identity and the authority list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisInfo {
    pub chain_id: String,
    pub validators: Vec<UserId>,
}

impl Encode for GenesisInfo {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.chain_id).seq(&self.validators);
    }
}

impl Decode for GenesisInfo {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            chain_id: dec.string()?,
            validators: dec.seq()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_root: Digest,
    pub proposer: UserId,
    pub timestamp: u64,
    pub genesis: Option<GenesisInfo>,
}

impl BlockHeader {
    pub fn hash(&self) -> Digest {
        hash_canonical(&self.to_canonical_bytes())
    }
}

impl Encode for BlockHeader {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .value(&self.prev_hash)
            .value(&self.tx_root)
            .value(&self.proposer)
            .u64(self.timestamp)
            .option(self.genesis.as_ref());
    }
}

impl Decode for BlockHeader {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            height: dec.u64()?,
            prev_hash: dec.value()?,
            tx_root: dec.value()?,
            proposer: dec.value()?,
            timestamp: dec.u64()?,
            genesis: dec.option()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<SignedTransaction>,
    pub proposer_signature: Signature,
    pub block_hash: Digest,
}

/// Digest of the ordered concatenation of transaction ids.
pub fn compute_tx_root(transactions: &[SignedTransaction]) -> Digest {
    hash_concat(transactions.iter().map(|tx| tx.tx_id.as_bytes().as_slice()))
}

impl Block {
    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn is_genesis(&self) -> bool {
        self.header.height == 0
    }

    /// Build and sign a block on top of `prev`.
    pub fn propose(
        prev: &Block,
        transactions: Vec<SignedTransaction>,
        proposer: &Keypair,
        timestamp: u64,
    ) -> Self {
        let header = BlockHeader {
            height: prev.header.height + 1,
            prev_hash: prev.block_hash,
            tx_root: compute_tx_root(&transactions),
            proposer: proposer.user_id(),
            timestamp,
            genesis: None,
        };
        Self::seal(header, transactions, proposer)
    }

    /// Sign `header` as given and compute its hash. Nothing is recomputed
    /// from `transactions`, which lets tests build deliberately broken blocks.
    pub fn seal(header: BlockHeader, transactions: Vec<SignedTransaction>, proposer: &Keypair) -> Self {
        let header_bytes = header.to_canonical_bytes();
        Self {
            proposer_signature: proposer.sign(&header_bytes),
            block_hash: hash_canonical(&header_bytes),
            header,
            transactions,
        }
    }

    /// Stateless checks: the block is internally consistent and links onto
    /// `prev` (`None` means this must be a genesis block).
    pub fn verify_against(&self, prev: Option<&Block>) -> Result<(), LedgerError> {
        let h = &self.header;
        let (expected_height, expected_prev) = match prev {
            None => (0, Digest::ZERO),
            Some(p) => (p.header.height + 1, p.block_hash),
        };
        if h.height != expected_height {
            return Err(LedgerError::BadHeight {
                expected: expected_height,
                got: h.height,
            });
        }
        if h.prev_hash != expected_prev {
            return Err(LedgerError::BadPrevHash { height: h.height });
        }
        let header_bytes = h.to_canonical_bytes();
        if hash_canonical(&header_bytes) != self.block_hash {
            return Err(LedgerError::BadBlockHash { height: h.height });
        }
        if compute_tx_root(&self.transactions) != h.tx_root {
            return Err(LedgerError::BadTxRoot { height: h.height });
        }
        if h.height == 0 {
            check_genesis_shape(self)?;
        } else {
            if h.genesis.is_some() {
                return Err(LedgerError::BadGenesis("validator list outside genesis"));
            }
            if !verify_signature(&h.proposer, &header_bytes, &self.proposer_signature) {
                return Err(LedgerError::BadProposerSignature { height: h.height });
            }
        }
        for (index, tx) in self.transactions.iter().enumerate() {
            tx.verify().map_err(|reason| LedgerError::BadTransaction {
                height: h.height,
                index,
                reason,
            })?;
        }
        Ok(())
    }
}

fn check_genesis_shape(block: &Block) -> Result<(), LedgerError> {
    let Some(info) = &block.header.genesis else {
        return Err(LedgerError::BadGenesis("missing validator list"));
    };
    validate_validator_set(&info.validators)?;
    if !block.transactions.is_empty() {
        return Err(LedgerError::BadGenesis("genesis carries transactions"));
    }
    if block.header.proposer != UserId::NONE || block.proposer_signature != Signature::EMPTY {
        return Err(LedgerError::BadGenesis("genesis is unsigned"));
    }
    if block.header.timestamp != 0 {
        return Err(LedgerError::BadGenesis("genesis timestamp is zero"));
    }
    Ok(())
}

pub(crate) fn validate_validator_set(validators: &[UserId]) -> Result<(), LedgerError> {
    if validators.is_empty() {
        return Err(LedgerError::EmptyValidatorSet);
    }
    let mut seen = BTreeSet::new();
    for v in validators {
        if !seen.insert(v) {
            return Err(LedgerError::DuplicateValidator(*v));
        }
    }
    Ok(())
}

/// Height-0 block carrying the validator set. Deterministic: identical
/// inputs give byte-identical blocks.
pub fn make_genesis(validators: &[UserId], chain_id: &str) -> Result<Block, LedgerError> {
    validate_validator_set(validators)?;
    let transactions = Vec::new();
    let header = BlockHeader {
        height: 0,
        prev_hash: Digest::ZERO,
        tx_root: compute_tx_root(&transactions),
        proposer: UserId::NONE,
        timestamp: 0,
        genesis: Some(GenesisInfo {
            chain_id: chain_id.to_owned(),
            validators: validators.to_vec(),
        }),
    };
    Ok(Block {
        block_hash: header.hash(),
        header,
        transactions,
        proposer_signature: Signature::EMPTY,
    })
}

impl Encode for Block {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.header)
            .seq(&self.transactions)
            .value(&self.proposer_signature)
            .value(&self.block_hash);
    }
}

impl Decode for Block {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            header: dec.value()?,
            transactions: dec.seq()?,
            proposer_signature: dec.value()?,
            block_hash: dec.value()?,
        })
    }
}
