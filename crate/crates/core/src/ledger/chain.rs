use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{Block, LedgerError, SignedTransaction};
use crate::codec::Decode;
use crate::crypto::{Digest, UserId};

/// An append-only, verified sequence of blocks rooted at a genesis block.
///
/// Every way of constructing or extending a `Chain` runs full verification,
/// so holding one is proof the invariants hold.
#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
    tx_index: HashMap<Digest, (usize, usize)>,
}

impl Chain {
    pub fn new(genesis: Block) -> Result<Self, LedgerError> {
        genesis.verify_against(None)?;
        Ok(Self {
            blocks: vec![genesis],
            tx_index: HashMap::new(),
        })
    }

    /// Rebuild a chain from stored blocks, verifying each one in order.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self, VerifyFailure> {
        let mut iter = blocks.into_iter();
        let genesis = iter.next().ok_or(VerifyFailure {
            height: 0,
            reason: LedgerError::BadGenesis("empty chain"),
        })?;
        let mut chain = Chain::new(genesis).map_err(|reason| VerifyFailure { height: 0, reason })?;
        for block in iter {
            let height = chain.height() + 1;
            chain
                .append(block)
                .map_err(|reason| VerifyFailure { height, reason })?;
        }
        Ok(chain)
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn chain_id(&self) -> &str {
        &self.genesis_info().chain_id
    }

    pub fn validators(&self) -> &[UserId] {
        &self.genesis_info().validators
    }

    fn genesis_info(&self) -> &super::GenesisInfo {
        self.blocks[0]
            .header
            .genesis
            .as_ref()
            .expect("verified genesis carries its info")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip().block_hash
    }

    pub fn height(&self) -> u64 {
        self.tip().header.height
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        usize::try_from(height).ok().and_then(|h| self.blocks.get(h))
    }

    pub fn contains_tx(&self, tx_id: &Digest) -> bool {
        self.tx_index.contains_key(tx_id)
    }

    /// Checks `block` could be appended without modifying anything.
    pub fn check_append(&self, block: &Block) -> Result<(), LedgerError> {
        block.verify_against(Some(self.tip()))?;
        if !self.validators().contains(&block.header.proposer) {
            return Err(LedgerError::UnknownProposer {
                height: block.header.height,
                proposer: block.header.proposer,
            });
        }
        let mut fresh = std::collections::HashSet::new();
        for tx in &block.transactions {
            if self.tx_index.contains_key(&tx.tx_id) || !fresh.insert(tx.tx_id) {
                return Err(LedgerError::DuplicateTransaction(tx.tx_id));
            }
        }
        Ok(())
    }

    /// Extend the chain by one block. Earlier blocks are never touched.
    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        self.check_append(&block)?;
        let pos = self.blocks.len();
        for (i, tx) in block.transactions.iter().enumerate() {
            self.tx_index.insert(tx.tx_id, (pos, i));
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn get_transaction(&self, tx_id: &Digest) -> Result<(&SignedTransaction, u64), LedgerError> {
        let (b, i) = self
            .tx_index
            .get(tx_id)
            .ok_or(LedgerError::NotFound(*tx_id))?;
        let block = &self.blocks[*b];
        Ok((&block.transactions[*i], block.header.height))
    }

    /// Re-run every check from raw block contents.
    pub fn verify(&self) -> VerifyReport {
        verify_blocks(&self.blocks)
    }

    pub fn transactions(&self) -> impl Iterator<Item = (&SignedTransaction, u64)> {
        self.blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(move |tx| (tx, b.header.height)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyFailure {
    pub height: u64,
    pub reason: LedgerError,
}

impl fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed at height {}: {}", self.height, self.reason)
    }
}

impl std::error::Error for VerifyFailure {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerifyReport {
    Ok { height: u64 },
    Failed { height: u64, reason: String },
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, VerifyReport::Ok { .. })
    }

    pub fn failed_height(&self) -> Option<u64> {
        match self {
            VerifyReport::Ok { .. } => None,
            VerifyReport::Failed { height, .. } => Some(*height),
        }
    }
}

impl From<VerifyFailure> for VerifyReport {
    fn from(f: VerifyFailure) -> Self {
        VerifyReport::Failed {
            height: f.height,
            reason: f.reason.to_string(),
        }
    }
}

/// Verify a sequence of blocks; reports the lowest failing position.
pub fn verify_blocks(blocks: &[Block]) -> VerifyReport {
    match Chain::from_blocks(blocks.to_vec()) {
        Ok(chain) => VerifyReport::Ok {
            height: chain.height(),
        },
        Err(f) => f.into(),
    }
}

/// Verify canonical block encodings as stored. A record that does not decode
/// fails at its position in the sequence.
pub fn verify_encoded<B: AsRef<[u8]>>(records: &[B]) -> VerifyReport {
    let mut blocks = Vec::with_capacity(records.len());
    for (pos, raw) in records.iter().enumerate() {
        match Block::from_canonical_bytes(raw.as_ref()) {
            Ok(b) => blocks.push(b),
            Err(e) => {
                // Anything before the undecodable record still gets checked.
                if let Err(f) = Chain::from_blocks(blocks) {
                    return f.into();
                }
                return VerifyReport::Failed {
                    height: pos as u64,
                    reason: format!("undecodable block: {e}"),
                };
            }
        }
    }
    verify_blocks(&blocks)
}
