//! Deterministic discrete-event network harness. Every node is a validator
//! running the same replica logic; only message delivery is simulated.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::message::{Endorsement, MessageKind, NetworkMessage, ProposalEnvelope};
use super::workload::Workload;
use super::{propose_block, validate_proposal, AuditEntry, ProposalPolicy, Replica, ValidatorSet};
use crate::codec::{Decode, Encode};
use crate::crypto::{hash_concat, Digest, Keypair};
use crate::ledger::{Block, Chain, SignedTransaction};
use crate::supplychain::{ChainRules, CustodyOrder, SettlementRule};

pub const SIM_CHAIN_ID: &str = "sugarchain-sim";
pub const REPORT_HEADER: &str = "sugarchain-sim-report v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::ConfigInvalid(msg.into())
}

/// What a byzantine validator does in the slots where it proposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ByzantineBehavior {
    /// A correctly signed block whose tx_root does not match its body.
    #[default]
    TamperedTxRoot,
    /// Two different valid blocks, each sent to part of the network.
    Equivocate,
    /// Never proposes.
    Silent,
}

impl ByzantineBehavior {
    pub fn as_str(self) -> &'static str {
        match self {
            ByzantineBehavior::TamperedTxRoot => "tampered_tx_root",
            ByzantineBehavior::Equivocate => "equivocate",
            ByzantineBehavior::Silent => "silent",
        }
    }
}

impl FromStr for ByzantineBehavior {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "tampered_tx_root" => Ok(ByzantineBehavior::TamperedTxRoot),
            "equivocate" => Ok(ByzantineBehavior::Equivocate),
            "silent" => Ok(ByzantineBehavior::Silent),
            _ => Err(invalid(format!("unknown byzantine_behavior {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub node_count: usize,
    pub byzantine_nodes: BTreeSet<usize>,
    pub byzantine_behavior: ByzantineBehavior,
    pub crashed_nodes: BTreeSet<usize>,
    pub latency_min: u64,
    pub latency_max: u64,
    pub drop_probability: f64,
    pub rng_seed: u64,
    pub max_ticks: u64,
    pub allow_empty_blocks: bool,
    pub rules: ChainRules,
    /// Byzantine validators tolerated; proposals are relayed for
    /// `fault_bound + 1` latency windows. Defaults to the byzantine count.
    pub fault_bound: Option<usize>,
    /// Pending transactions still invalid after this many ticks are dropped.
    pub tx_ttl_ticks: u64,
    /// Workload script path, for file-driven runs.
    pub workload: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            node_count: 4,
            byzantine_nodes: BTreeSet::new(),
            byzantine_behavior: ByzantineBehavior::default(),
            crashed_nodes: BTreeSet::new(),
            latency_min: 1,
            latency_max: 3,
            drop_probability: 0.0,
            rng_seed: 0,
            max_ticks: 100_000,
            allow_empty_blocks: false,
            rules: ChainRules::default(),
            fault_bound: None,
            tx_ttl_ticks: 1_000,
            workload: None,
        }
    }
}

fn parse_set(v: &str) -> Result<BTreeSet<usize>, SimError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| invalid(format!("bad node id {s:?}"))))
        .collect()
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, SimError> {
    v.parse().map_err(|_| invalid(format!("{key}: bad value {v:?}")))
}

impl SimConfig {
    /// `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut c = SimConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "node_count" => c.node_count = parse_num(k, v)?,
                "byzantine_nodes" => c.byzantine_nodes = parse_set(v)?,
                "byzantine_behavior" => c.byzantine_behavior = v.parse()?,
                "crashed_nodes" => c.crashed_nodes = parse_set(v)?,
                "latency_min" => c.latency_min = parse_num(k, v)?,
                "latency_max" => c.latency_max = parse_num(k, v)?,
                "drop_probability" => c.drop_probability = parse_num(k, v)?,
                "rng_seed" => c.rng_seed = parse_num(k, v)?,
                "max_ticks" => c.max_ticks = parse_num(k, v)?,
                "allow_empty_blocks" => c.allow_empty_blocks = parse_num(k, v)?,
                "fault_bound" => c.fault_bound = Some(parse_num(k, v)?),
                "tx_ttl_ticks" => c.tx_ttl_ticks = parse_num(k, v)?,
                "settlement" => {
                    c.rules.settlement = match v {
                        "auto" => SettlementRule::auto(c.rules.settlement.max_block_lag),
                        "manual" => SettlementRule::manual(),
                        _ => return Err(invalid(format!("settlement must be auto or manual, got {v:?}"))),
                    }
                }
                "max_block_lag" => {
                    let lag: u64 = parse_num(k, v)?;
                    if lag == 0 {
                        return Err(invalid("max_block_lag must be at least 1"));
                    }
                    c.rules.settlement.max_block_lag = lag;
                }
                "custody" => {
                    c.rules.custody = match v {
                        "adjacent" => CustodyOrder::Adjacent,
                        "forward" => CustodyOrder::Forward,
                        _ => return Err(invalid(format!("custody must be adjacent or forward, got {v:?}"))),
                    }
                }
                "workload" => c.workload = Some(v.to_owned()),
                _ => return Err(invalid(format!("unknown key {k:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.node_count == 0 {
            return Err(invalid("node_count must be at least 1"));
        }
        if let Some(n) = self
            .byzantine_nodes
            .iter()
            .chain(&self.crashed_nodes)
            .find(|n| **n >= self.node_count)
        {
            return Err(invalid(format!("node {n} outside 0..{}", self.node_count)));
        }
        if let Some(n) = self.byzantine_nodes.intersection(&self.crashed_nodes).next() {
            return Err(invalid(format!("node {n} is both byzantine and crashed")));
        }
        if self.latency_min == 0 || self.latency_min > self.latency_max {
            return Err(invalid("need 1 <= latency_min <= latency_max"));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(invalid("drop_probability must be in [0, 1)"));
        }
        let f = self.fault_bound();
        if f < self.byzantine_nodes.len() {
            return Err(invalid("fault_bound is below the number of byzantine nodes"));
        }
        if f >= self.node_count {
            return Err(invalid("fault_bound must be below node_count"));
        }
        if self.tx_ttl_ticks < self.slot_len() + self.latency_max {
            return Err(invalid("tx_ttl_ticks must cover at least one slot plus one latency"));
        }
        Ok(())
    }

    pub fn fault_bound(&self) -> usize {
        self.fault_bound.unwrap_or(self.byzantine_nodes.len())
    }

    /// Relay windows per slot.
    pub fn relay_rounds(&self) -> u64 {
        self.fault_bound() as u64 + 1
    }

    pub fn slot_len(&self) -> u64 {
        self.relay_rounds() * self.latency_max + 1
    }

    pub fn slot_start(&self, slot: u64) -> u64 {
        slot * self.slot_len()
    }

    pub fn slot_deadline(&self, slot: u64) -> u64 {
        self.slot_start(slot) + self.relay_rounds() * self.latency_max
    }

    pub fn status_of(&self, node: usize) -> NodeStatus {
        if self.crashed_nodes.contains(&node) {
            NodeStatus::Crashed
        } else if self.byzantine_nodes.contains(&node) {
            NodeStatus::Byzantine(self.byzantine_behavior)
        } else {
            NodeStatus::Honest
        }
    }

    pub fn validator_keys(&self) -> Vec<Keypair> {
        (0..self.node_count)
            .map(|i| Keypair::from_label(&format!("validator-{i}")))
            .collect()
    }

    pub fn validator_set(&self) -> ValidatorSet {
        ValidatorSet::new(self.validator_keys().iter().map(Keypair::user_id).collect())
            .expect("distinct derived validator keys")
    }

    pub fn policy(&self) -> ProposalPolicy {
        ProposalPolicy {
            allow_empty: self.allow_empty_blocks,
            min_age: self.latency_max,
        }
    }

    pub fn fresh_replica(&self) -> Replica {
        Replica::with_validators(self.validator_set().validators(), SIM_CHAIN_ID, self.rules)
            .expect("valid validator set")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Honest,
    Byzantine(ByzantineBehavior),
    Crashed,
}

impl NodeStatus {
    pub fn is_honest(self) -> bool {
        self == NodeStatus::Honest
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeStatus::Honest => f.write_str("honest"),
            NodeStatus::Byzantine(b) => write!(f, "byzantine:{}", b.as_str()),
            NodeStatus::Crashed => f.write_str("crashed"),
        }
    }
}

/// One proposal rejected by at least one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectionRecord {
    pub slot: u64,
    pub height: u64,
    pub round: u64,
    pub proposer: usize,
    pub block_hash: Digest,
    pub code: &'static str,
    pub reason: String,
    pub nodes: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct NodeSummary {
    pub id: usize,
    pub status: NodeStatus,
    pub height: u64,
    pub tip: Digest,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub node_count: usize,
    pub rng_seed: u64,
    pub slots: u64,
    pub ticks: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub late: u64,
    pub submitted: usize,
    pub lost: usize,
    pub byzantine_proposals: u64,
    pub equivocations_detected: u64,
    pub fork_events: u64,
    pub nodes: Vec<NodeSummary>,
    pub rejections: Vec<RejectionRecord>,
    pub audit: Vec<(usize, AuditEntry)>,
    /// Final chains, indexed by node id. Not part of the text report.
    pub chains: Vec<Chain>,
}

impl SimReport {
    pub fn honest_tips(&self) -> Vec<Digest> {
        self.nodes
            .iter()
            .filter(|n| n.status.is_honest())
            .map(|n| n.tip)
            .collect()
    }

    /// All honest nodes hold the same tip.
    pub fn converged(&self) -> bool {
        let tips = self.honest_tips();
        tips.windows(2).all(|w| w[0] == w[1])
    }

    /// Stable text form; identical runs give identical bytes.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        writeln!(o, "{REPORT_HEADER}").unwrap();
        writeln!(o, "nodes {} seed {}", self.node_count, self.rng_seed).unwrap();
        writeln!(o, "slots {} ticks {}", self.slots, self.ticks).unwrap();
        writeln!(
            o,
            "messages delivered {} dropped {} late {}",
            self.delivered, self.dropped, self.late
        )
        .unwrap();
        writeln!(o, "workload submitted {} lost {}", self.submitted, self.lost).unwrap();
        writeln!(o, "byzantine_proposals {}", self.byzantine_proposals).unwrap();
        writeln!(o, "rejected_proposals {}", self.rejections.len()).unwrap();
        writeln!(o, "equivocations_detected {}", self.equivocations_detected).unwrap();
        writeln!(o, "fork_events {}", self.fork_events).unwrap();
        for n in &self.nodes {
            writeln!(o, "node {} tip {} height {} {}", n.id, n.tip, n.height, n.status).unwrap();
        }
        for r in &self.rejections {
            let nodes: Vec<String> = r.nodes.iter().map(usize::to_string).collect();
            writeln!(
                o,
                "reject slot {} height {} round {} proposer {} block {} nodes {} {}: {}",
                r.slot,
                r.height,
                r.round,
                r.proposer,
                r.block_hash,
                nodes.join(","),
                r.code,
                r.reason
            )
            .unwrap();
        }
        for (node, a) in &self.audit {
            writeln!(o, "audit node {node} tx {} {}", a.tx_id, a.reason).unwrap();
        }
        o
    }
}

struct Node {
    keypair: Keypair,
    status: NodeStatus,
    replica: Replica,
    round: u64,
    candidates: Vec<Block>,
    rejected: HashSet<Digest>,
}

struct Net {
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    in_flight: HashMap<u64, NetworkMessage>,
    seq: u64,
    delivered: u64,
    dropped: u64,
    lat: (u64, u64),
    drop_p: f64,
}

impl Net {
    fn send(&mut self, kind: MessageKind, sender: usize, receiver: usize, payload: Vec<u8>, now: u64) {
        if self.drop_p > 0.0 && self.rng.gen_bool(self.drop_p) {
            self.dropped += 1;
            return;
        }
        let deliver_at = now + self.rng.gen_range(self.lat.0..=self.lat.1);
        self.seq += 1;
        self.queue.push(Reverse((deliver_at, self.seq)));
        self.in_flight.insert(
            self.seq,
            NetworkMessage {
                kind,
                sender,
                receiver,
                payload,
                sent_at: now,
                deliver_at,
            },
        );
    }

    fn broadcast(&mut self, kind: MessageKind, sender: usize, n: usize, payload: &[u8], now: u64) {
        for to in (0..n).filter(|to| *to != sender) {
            self.send(kind, sender, to, payload.to_vec(), now);
        }
    }

    fn pop_due(&mut self, now: u64) -> Option<NetworkMessage> {
        match self.queue.peek() {
            Some(Reverse((t, _))) if *t <= now => {
                let Reverse((_, seq)) = self.queue.pop().expect("peeked");
                self.in_flight.remove(&seq)
            }
            _ => None,
        }
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    set: ValidatorSet,
    nodes: Vec<Node>,
    net: Net,
    late: u64,
    byzantine_proposals: u64,
    equivocations: u64,
    rejections: BTreeMap<(u64, Digest), RejectionRecord>,
    audit: Vec<(usize, AuditEntry)>,
}

/// Run `workload` on a simulated validator network. Fully determined by
/// `config` (including its seed) and the workload.
pub fn run_simulation(config: &SimConfig, workload: &Workload) -> Result<SimReport, SimError> {
    config.validate()?;
    let mut entries: Vec<_> = workload.entries.iter().collect();
    entries.sort_by_key(|e| e.tick);
    if let Some(e) = entries.iter().find(|e| e.node >= config.node_count) {
        return Err(invalid(format!("workload submits to node {} of {}", e.node, config.node_count)));
    }
    if let Some(e) = entries.iter().find(|e| e.tx.timestamp != e.tick) {
        return Err(invalid(format!(
            "transaction {} timestamp {} differs from its submit tick {}",
            e.tx.tx_id, e.tx.timestamp, e.tick
        )));
    }

    let keys = config.validator_keys();
    let base = config.fresh_replica();
    let mut sim = Sim {
        cfg: config,
        set: config.validator_set(),
        nodes: keys
            .into_iter()
            .enumerate()
            .map(|(i, keypair)| Node {
                keypair,
                status: config.status_of(i),
                replica: base.clone(),
                round: 0,
                candidates: Vec::new(),
                rejected: HashSet::new(),
            })
            .collect(),
        net: Net {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            queue: BinaryHeap::new(),
            in_flight: HashMap::new(),
            seq: 0,
            delivered: 0,
            dropped: 0,
            lat: (config.latency_min, config.latency_max),
            drop_p: config.drop_probability,
        },
        late: 0,
        byzantine_proposals: 0,
        equivocations: 0,
        rejections: BTreeMap::new(),
        audit: Vec::new(),
    };

    let mut next_entry = 0;
    let mut lost = 0;
    let mut slot = 0u64;
    let mut tick = 0u64;
    let mut slots_run = 0u64;
    while config.slot_deadline(slot) < config.max_ticks {
        let start = config.slot_start(slot);
        let deadline = config.slot_deadline(slot);
        for t in start..=deadline {
            tick = t;
            while next_entry < entries.len() && entries[next_entry].tick == t {
                let e = entries[next_entry];
                next_entry += 1;
                if sim.nodes[e.node].status == NodeStatus::Crashed {
                    lost += 1;
                    continue;
                }
                sim.nodes[e.node].replica.add_tx(e.tx.clone());
                let bytes = e.tx.to_canonical_bytes();
                sim.net
                    .broadcast(MessageKind::TxGossip, e.node, config.node_count, &bytes, t);
            }
            while let Some(msg) = sim.net.pop_due(t) {
                sim.net.delivered += 1;
                sim.deliver(msg, slot, t);
            }
            if t == start {
                sim.propose(slot, t);
            }
        }
        sim.decide(slot);
        slots_run = slot + 1;
        let quiet = next_entry == entries.len()
            && sim.net.queue.is_empty()
            && sim.nodes.iter().filter(|n| n.status != NodeStatus::Crashed).all(|n| {
                n.replica.mempool_len() == 0 && n.replica.state().auto_settle().is_empty()
            });
        if quiet && !config.allow_empty_blocks {
            break;
        }
        slot += 1;
    }

    Ok(sim.finish(slots_run, tick, entries.len(), lost))
}

impl Sim<'_> {
    fn deliver(&mut self, msg: NetworkMessage, slot: u64, now: u64) {
        let id = msg.receiver;
        if self.nodes[id].status == NodeStatus::Crashed {
            return;
        }
        match msg.kind {
            MessageKind::TxGossip => {
                if let Ok(tx) = SignedTransaction::from_canonical_bytes(&msg.payload) {
                    self.nodes[id].replica.add_tx(tx);
                }
            }
            MessageKind::BlockProposal | MessageKind::BlockVoteAck => {
                match ProposalEnvelope::from_canonical_bytes(&msg.payload) {
                    Ok(env) => self.on_envelope(id, env, slot, now),
                    Err(e) => debug!("node {id}: undecodable proposal: {e}"),
                }
            }
        }
    }

    fn on_envelope(&mut self, id: usize, env: ProposalEnvelope, slot: u64, now: u64) {
        let cfg = self.cfg;
        let j = env.endorsements.len() as u64;
        if env.slot != slot || now > cfg.slot_start(slot) + j * cfg.latency_max {
            self.late += 1;
            return;
        }
        let node = &self.nodes[id];
        let height = node.replica.height() + 1;
        let proposer = self.set.proposer_at(height, node.round);
        if env.round != node.round
            || env.block.height() != height
            || !env.endorsements_valid(&proposer, |v| self.set.contains(v))
        {
            debug!("node {id}: envelope does not match slot {slot} view");
            return;
        }
        let hash = env.block.block_hash;
        if node.rejected.contains(&hash) || node.candidates.iter().any(|b| b.block_hash == hash) {
            return;
        }
        let start = cfg.slot_start(slot);
        match validate_proposal(&node.replica, &env.block, &self.set, node.round, Some(start)) {
            Err(reason) => {
                let proposer_idx = self.set.index_of(&proposer).expect("proposer is a validator");
                let round = node.round;
                self.nodes[id].rejected.insert(hash);
                self.rejections
                    .entry((slot, hash))
                    .or_insert_with(|| RejectionRecord {
                        slot,
                        height,
                        round,
                        proposer: proposer_idx,
                        block_hash: hash,
                        code: reason.code(),
                        reason: reason.to_string(),
                        nodes: BTreeSet::new(),
                    })
                    .nodes
                    .insert(id);
            }
            Ok(_) => {
                let node = &mut self.nodes[id];
                node.candidates.push(env.block.clone());
                let me = node.keypair.user_id();
                if node.candidates.len() <= 2 && j < cfg.relay_rounds() && !env.signed_by(&me) {
                    let mut relay = env;
                    relay.endorsements.push(Endorsement::sign(&node.keypair, slot, &hash));
                    let bytes = relay.to_canonical_bytes();
                    self.net
                        .broadcast(MessageKind::BlockVoteAck, id, cfg.node_count, &bytes, now);
                }
            }
        }
    }

    fn propose(&mut self, slot: u64, now: u64) {
        for id in 0..self.nodes.len() {
            let node = &self.nodes[id];
            let height = node.replica.height() + 1;
            if node.status == NodeStatus::Crashed
                || self.set.proposer_at(height, node.round) != node.keypair.user_id()
            {
                continue;
            }
            match node.status {
                NodeStatus::Crashed => {}
                NodeStatus::Honest => self.propose_honest(id, slot, now),
                NodeStatus::Byzantine(b) => self.propose_byzantine(id, b, slot, now),
            }
        }
    }

    fn envelope(&self, id: usize, slot: u64, block: Block) -> Vec<u8> {
        let node = &self.nodes[id];
        ProposalEnvelope {
            slot,
            round: node.round,
            endorsements: vec![Endorsement::sign(&node.keypair, slot, &block.block_hash)],
            block,
        }
        .to_canonical_bytes()
    }

    fn propose_honest(&mut self, id: usize, slot: u64, now: u64) {
        let node = &self.nodes[id];
        let proposal = match propose_block(
            &node.replica,
            &node.keypair,
            &self.set,
            node.round,
            now,
            self.cfg.policy(),
        ) {
            Ok(p) => p,
            Err(e) => {
                debug!("node {id} slot {slot}: {e}");
                return;
            }
        };
        let node = &mut self.nodes[id];
        node.replica.discard(&proposal.audit);
        self.audit.extend(proposal.audit.iter().cloned().map(|a| (id, a)));
        let bytes = self.envelope(id, slot, proposal.block.clone());
        self.nodes[id].candidates.push(proposal.block);
        self.net
            .broadcast(MessageKind::BlockProposal, id, self.cfg.node_count, &bytes, now);
    }

    fn propose_byzantine(&mut self, id: usize, behavior: ByzantineBehavior, slot: u64, now: u64) {
        if behavior == ByzantineBehavior::Silent {
            return;
        }
        let node = &self.nodes[id];
        let policy = ProposalPolicy {
            allow_empty: true,
            ..self.cfg.policy()
        };
        let Ok(proposal) = propose_block(&node.replica, &node.keypair, &self.set, node.round, now, policy)
        else {
            return;
        };
        let honest = proposal.block;
        let n = self.cfg.node_count;
        match behavior {
            ByzantineBehavior::Silent => {}
            ByzantineBehavior::TamperedTxRoot => {
                let mut header = honest.header.clone();
                header.tx_root = hash_concat([b"tampered".as_slice(), header.tx_root.as_bytes()]);
                let bad = Block::seal(header, honest.transactions, &node.keypair);
                let bytes = self.envelope(id, slot, bad);
                self.byzantine_proposals += 1;
                self.net.broadcast(MessageKind::BlockProposal, id, n, &bytes, now);
            }
            ByzantineBehavior::Equivocate => {
                // The variant drops the last ordinary transaction so both
                // blocks stay valid; with nothing to drop the slot stays quiet.
                let Some(last) = honest.transactions.last() else {
                    return;
                };
                if self.set.contains(&last.submitter) {
                    return;
                }
                let mut txs = honest.transactions.clone();
                txs.pop();
                let prev = node.replica.chain().tip();
                let variant = Block::propose(prev, txs, &node.keypair, now);
                let a = self.envelope(id, slot, honest);
                let b = self.envelope(id, slot, variant);
                self.byzantine_proposals += 2;
                let others: Vec<usize> = (0..n).filter(|i| *i != id).collect();
                if others.len() == 1 {
                    self.net.send(MessageKind::BlockProposal, id, others[0], a, now);
                    self.net.send(MessageKind::BlockProposal, id, others[0], b, now);
                } else {
                    for (k, to) in others.into_iter().enumerate() {
                        let bytes = if k % 2 == 0 { a.clone() } else { b.clone() };
                        self.net.send(MessageKind::BlockProposal, id, to, bytes, now);
                    }
                }
            }
        }
    }

    fn decide(&mut self, slot: u64) {
        let cfg = self.cfg;
        let next_start = cfg.slot_start(slot + 1);
        let mut saw_equivocation = false;
        for id in 0..self.nodes.len() {
            let node = &mut self.nodes[id];
            if node.status == NodeStatus::Crashed {
                continue;
            }
            let candidates = std::mem::take(&mut node.candidates);
            node.rejected.clear();
            if candidates.len() == 1 {
                let block = candidates.into_iter().next().expect("one candidate");
                match node
                    .replica
                    .commit(block, &self.set, node.round, Some(cfg.slot_start(slot)))
                {
                    Ok(()) => node.round = 0,
                    Err(e) => {
                        debug!("node {id}: candidate failed at commit: {e}");
                        node.round += 1;
                    }
                }
            } else {
                if candidates.len() > 1 && node.status.is_honest() {
                    saw_equivocation = true;
                }
                node.round += 1;
            }
            let pruned = node.replica.prune(next_start, cfg.tx_ttl_ticks);
            if node.status.is_honest() {
                self.audit.extend(pruned.into_iter().map(|a| (id, a)));
            }
        }
        if saw_equivocation {
            self.equivocations += 1;
        }
    }

    fn finish(self, slots: u64, ticks: u64, submitted: usize, lost: usize) -> SimReport {
        let honest: Vec<&Node> = self.nodes.iter().filter(|n| n.status.is_honest()).collect();
        let max_h = honest.iter().map(|n| n.replica.height()).max().unwrap_or(0);
        let fork_events = (1..=max_h)
            .filter(|h| {
                let hashes: BTreeSet<Digest> = honest
                    .iter()
                    .filter_map(|n| n.replica.chain().block(*h).map(|b| b.block_hash))
                    .collect();
                hashes.len() > 1
            })
            .count() as u64;
        SimReport {
            node_count: self.cfg.node_count,
            rng_seed: self.cfg.rng_seed,
            slots,
            ticks,
            delivered: self.net.delivered,
            dropped: self.net.dropped,
            late: self.late,
            submitted,
            lost,
            byzantine_proposals: self.byzantine_proposals,
            equivocations_detected: self.equivocations,
            fork_events,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| NodeSummary {
                    id,
                    status: n.status,
                    height: n.replica.height(),
                    tip: n.replica.tip_hash(),
                })
                .collect(),
            rejections: self.rejections.into_values().collect(),
            audit: self.audit,
            chains: self.nodes.into_iter().map(|n| n.replica.chain().clone()).collect(),
        }
    }
}
