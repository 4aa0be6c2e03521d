//! Single-node sequential replay of a workload under the same slot schedule
//! as the simulator, with no network. Slots whose proposer is crashed or
//! byzantine produce nothing. For fault-free runs (and for byzantine runs
//! where honest nodes reject every faulty slot) the simulator's honest tips
//! must equal this oracle's tip.

use super::sim::{NodeStatus, SimConfig};
use super::workload::Workload;
use super::{propose_block, AuditEntry, ProposeError};
use crate::crypto::Digest;
use crate::ledger::{Chain, SignedTransaction};

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub chain: Chain,
    pub audit: Vec<AuditEntry>,
}

impl OracleRun {
    pub fn tip(&self) -> Digest {
        self.chain.tip_hash()
    }

    /// Committed transaction ids in chain order.
    pub fn committed(&self) -> Vec<Digest> {
        self.chain.transactions().map(|(tx, _)| tx.tx_id).collect()
    }
}

/// Replay `slots` slots of `workload` sequentially.
pub fn run_oracle(config: &SimConfig, workload: &Workload, slots: u64) -> OracleRun {
    let set = config.validator_set();
    let keys = config.validator_keys();
    let mut replica = config.fresh_replica();
    let mut audit = Vec::new();
    let mut pending: Vec<&SignedTransaction> = workload
        .entries
        .iter()
        .filter(|e| config.status_of(e.node) != NodeStatus::Crashed)
        .map(|e| &e.tx)
        .collect();
    pending.sort_by_key(|tx| std::cmp::Reverse(tx.timestamp));

    let mut round = 0u64;
    for slot in 0..slots {
        let start = config.slot_start(slot);
        while pending.last().is_some_and(|tx| tx.timestamp <= start) {
            replica.add_tx(pending.pop().expect("non-empty").clone());
        }
        let height = replica.height() + 1;
        let proposer = set.proposer_at(height, round);
        let idx = set.index_of(&proposer).expect("proposer is a validator");
        let committed = if config.status_of(idx) == NodeStatus::Honest {
            match propose_block(&replica, &keys[idx], &set, round, start, config.policy()) {
                Ok(p) => {
                    replica.discard(&p.audit);
                    audit.extend(p.audit);
                    replica
                        .commit(p.block, &set, round, Some(start))
                        .expect("own proposal validates");
                    true
                }
                Err(ProposeError::EmptyMempoolPolicy) => false,
                Err(e) => unreachable!("{e}"),
            }
        } else {
            false
        };
        round = if committed { 0 } else { round + 1 };
        audit.extend(replica.prune(config.slot_start(slot + 1), config.tx_ttl_ticks));
    }
    OracleRun {
        chain: replica.chain().clone(),
        audit,
    }
}
