//! Shared test helpers and independent oracles. Also compiled into the node
//! crate's acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use sugarchain_core::consensus::{parse_workload, propose_block, ProposalPolicy, Replica, ValidatorSet};
use sugarchain_core::crypto::{Digest, Keypair, UserId};
use sugarchain_core::identity::Role;
use sugarchain_core::ledger::{Block, Chain, Payload};
use sugarchain_core::supplychain::{
    ChainRules, CustodyOrder, DeliveryConfirmation, LotEvent, LotRegistration, LotState,
    QualityReport, QualityUpdate, Settlement, SettlementMode, SettlementRule, Transfer,
    TransitionContext, TxMeta,
};

pub const OPEN: ProposalPolicy = ProposalPolicy {
    allow_empty: false,
    min_age: 0,
};

/// A single-validator chain of `blocks` blocks after genesis with
/// `per_block` transactions each (registrations, one lot, then quality
/// updates).
pub fn chain_with_blocks(blocks: usize, per_block: usize) -> Chain {
    assert!(per_block >= 1);
    let key = Keypair::from_label("validator-0");
    let set = ValidatorSet::new(vec![key.user_id()]).unwrap();
    let mut r = Replica::with_validators(set.validators(), "test-chain", ChainRules::default()).unwrap();
    let mut script = String::from("0 0 farmer-1 register farmer\n1 0 mill-1 register sugar_mill\n2 0 farmer-1 lot l1 100 400 village\n");
    let total = blocks * per_block;
    for i in 3..total {
        let who = if i % 2 == 0 { "farmer-1" } else { "mill-1" };
        script.push_str(&format!("{i} 0 {who} quality l1 G{i} {} no\n", 5000 + i));
    }
    let w = parse_workload(&script).unwrap();
    for (b, chunk) in w.entries.chunks(per_block).enumerate() {
        for e in chunk {
            r.add_tx(e.tx.clone());
        }
        let ts = 1_000 + b as u64;
        let p = propose_block(&r, &key, &set, 0, ts, OPEN).unwrap();
        assert_eq!(p.block.transactions.len(), chunk.len());
        r.commit(p.block, &set, 0, None).unwrap();
    }
    r.chain().clone()
}

// ---------------------------------------------------------------------------
// Transition oracle: an independent restatement of the custody rules over an
// abstract lot, used to cross-check `validate_transition` by enumeration.

pub const ACTORS: [(&str, Role); 6] = [
    ("F", Role::Farmer),
    ("F2", Role::Farmer),
    ("M", Role::SugarMill),
    ("D", Role::Distributor),
    ("R", Role::Retailer),
    ("C", Role::Consumer),
];

const QTY: u64 = 10;
const PRICE: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ev {
    Register,
    RegisterZero,
    Quality,
    Transfer(usize, usize),
    TransferZeroPrice,
    Deliver(u32),
    Settle(u32),
    SettleWrongAmount(u32),
}

/// Every event the enumeration tries at each step.
pub fn alphabet() -> Vec<Ev> {
    let mut v = vec![Ev::Register, Ev::RegisterZero, Ev::Quality, Ev::TransferZeroPrice];
    for from in 0..ACTORS.len() {
        for to in 0..ACTORS.len() {
            if from != to {
                v.push(Ev::Transfer(from, to));
            }
        }
    }
    for leg in 0..4 {
        v.push(Ev::Deliver(leg));
        v.push(Ev::Settle(leg));
    }
    v.push(Ev::SettleWrongAmount(0));
    v
}

fn stage(role: Role) -> i32 {
    match role {
        Role::SeedSupplier => 0,
        Role::Farmer => 1,
        Role::SugarMill => 2,
        Role::Distributor => 3,
        Role::Retailer => 4,
        Role::Consumer => 5,
        Role::Validator => -100,
    }
}

#[derive(Debug, Clone, Default)]
struct AbstractLot {
    custodian: usize,
    legs: Vec<(usize, usize, bool, bool)>, // from, to, delivered, settled
}

/// The oracle's transition table.
fn oracle_step(lot: &Option<AbstractLot>, ev: Ev, rules: &ChainRules) -> Option<Option<AbstractLot>> {
    let auto = rules.settlement.mode == SettlementMode::Auto;
    match (lot, ev) {
        (None, Ev::Register) => Some(Some(AbstractLot::default())),
        (_, Ev::Register) | (_, Ev::RegisterZero) | (None, _) => None,
        (Some(l), _) if ACTORS[l.custodian].1 == Role::Consumer && matches!(ev, Ev::Quality | Ev::Transfer(..) | Ev::TransferZeroPrice) => None,
        (Some(l), Ev::Quality) => Some(Some(l.clone())),
        (Some(_), Ev::TransferZeroPrice) => None,
        (Some(l), Ev::Transfer(from, to)) => {
            let pending = l.legs.iter().any(|leg| !leg.2);
            let unpaid = l.legs.iter().any(|leg| leg.2 && !leg.3);
            let a = stage(ACTORS[l.custodian].1);
            let b = stage(ACTORS[to].1);
            let order_ok = match rules.custody {
                CustodyOrder::Adjacent => b == a + 1,
                CustodyOrder::Forward => b > a,
            };
            if pending || (auto && unpaid) || from != l.custodian || !order_ok {
                return None;
            }
            let mut n = l.clone();
            n.legs.push((from, to, false, false));
            Some(Some(n))
        }
        (Some(l), Ev::Deliver(k)) => {
            let last = l.legs.len().checked_sub(1)?;
            if l.legs[last].2 || last as u32 != k {
                return None;
            }
            let mut n = l.clone();
            n.legs[last].2 = true;
            n.custodian = n.legs[last].1;
            Some(Some(n))
        }
        (Some(l), Ev::Settle(k)) => {
            let leg = l.legs.get(k as usize)?;
            if !leg.2 || leg.3 {
                return None;
            }
            let mut n = l.clone();
            n.legs[k as usize].3 = true;
            Some(Some(n))
        }
        (Some(_), Ev::SettleWrongAmount(_)) => None,
    }
}

/// All accepted sequences of length 1..=max_len under the oracle table.
pub fn oracle_accepted(max_len: usize, rules: &ChainRules) -> Vec<Vec<Ev>> {
    let alpha = alphabet();
    let mut out = Vec::new();
    let mut frontier: Vec<(Vec<Ev>, Option<AbstractLot>)> = vec![(Vec::new(), None)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (seq, lot) in &frontier {
            for ev in &alpha {
                if let Some(n) = oracle_step(lot, *ev, rules) {
                    let mut s = seq.clone();
                    s.push(*ev);
                    out.push(s.clone());
                    next.push((s, n));
                }
            }
        }
        frontier = next;
    }
    out
}

pub fn actor_id(i: usize) -> UserId {
    Keypair::from_label(&format!("enum-actor-{}", ACTORS[i].0)).user_id()
}

const LOT_ID: Digest = Digest([0x42; 32]);

/// Concrete event for the implementation, given the lot state so far.
fn concrete(ev: Ev, state: Option<&LotState>) -> LotEvent {
    let leg_parties = |k: u32| {
        state
            .and_then(|s| s.legs.get(k as usize))
            .map(|l| (l.to, l.from))
            .unwrap_or((actor_id(0), actor_id(1)))
    };
    match ev {
        Ev::Register | Ev::RegisterZero => LotEvent::LotRegistered(LotRegistration {
            quantity_kg: if ev == Ev::Register { QTY } else { 0 },
            farm_location: "v".into(),
            price_paise_per_kg: 5,
            mill_info: None,
            seed_supplier: None,
            quality: None,
        }),
        Ev::Quality => LotEvent::QualityUpdate(QualityUpdate {
            lot_id: LOT_ID,
            quality: QualityReport {
                grade: "A".into(),
                moisture_bp: 7000,
                affected_by_worms: false,
            },
        }),
        Ev::Transfer(from, to) => LotEvent::Transfer(Transfer {
            lot_id: LOT_ID,
            actor_from: actor_id(from),
            actor_to: actor_id(to),
            price_paise_per_kg: PRICE,
            mill_info: None,
        }),
        Ev::TransferZeroPrice => LotEvent::Transfer(Transfer {
            lot_id: LOT_ID,
            actor_from: state.map(|s| s.custodian).unwrap_or(actor_id(0)),
            actor_to: actor_id(2),
            price_paise_per_kg: 0,
            mill_info: None,
        }),
        Ev::Deliver(leg) => LotEvent::DeliveryConfirmed(DeliveryConfirmation { lot_id: LOT_ID, leg }),
        Ev::Settle(leg) | Ev::SettleWrongAmount(leg) => {
            let (payer, payee) = leg_parties(leg);
            LotEvent::PaymentSettled(Settlement {
                lot_id: LOT_ID,
                leg,
                payer,
                payee,
                amount_paise: if matches!(ev, Ev::Settle(_)) { QTY * PRICE } else { QTY * PRICE + 1 },
            })
        }
    }
}

/// All accepted sequences of length 1..=max_len under the implementation's
/// `validate_transition` + `LotState::apply`.
pub fn implementation_accepted(max_len: usize, rules: &ChainRules) -> Vec<Vec<Ev>> {
    use sugarchain_core::supplychain::validate_transition;
    let roles: HashMap<UserId, Role> = (0..ACTORS.len()).map(|i| (actor_id(i), ACTORS[i].1)).collect();
    let role_of = |id: &UserId| roles.get(id).copied();
    let ctx = TransitionContext {
        rules: *rules,
        role_of: &role_of,
    };
    let alpha = alphabet();
    let mut out = Vec::new();
    let mut frontier: Vec<(Vec<Ev>, Option<LotState>)> = vec![(Vec::new(), None)];
    let mut counter = 0u8;
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (seq, state) in &frontier {
            for ev in &alpha {
                let event = concrete(*ev, state.as_ref());
                if validate_transition(state.as_ref(), &event, &ctx).is_err() {
                    continue;
                }
                counter = counter.wrapping_add(1);
                let meta = TxMeta {
                    tx_id: Digest([counter; 32]),
                    height: seq.len() as u64 + 1,
                    timestamp: seq.len() as u64,
                };
                let new_state = match state {
                    None => {
                        let mut s = LotState::registered(&event, actor_id(0), meta).expect("registration");
                        s.lot_id = LOT_ID;
                        s
                    }
                    Some(s) => {
                        let mut s = s.clone();
                        s.apply(&event, meta, &ctx);
                        s
                    }
                };
                let mut s = seq.clone();
                s.push(*ev);
                out.push(s.clone());
                next.push((s, Some(new_state)));
            }
        }
        frontier = next;
    }
    out
}

pub fn rule_variants() -> Vec<ChainRules> {
    let mut v = Vec::new();
    for settlement in [SettlementRule::auto(1), SettlementRule::manual()] {
        for custody in [CustodyOrder::Adjacent, CustodyOrder::Forward] {
            v.push(ChainRules { settlement, custody });
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Settlement-bound checker: scans a committed chain without using the state
// machine.

#[derive(Debug, Default)]
pub struct SettlementCheck {
    pub deliveries: usize,
    pub settled_within_bound: usize,
}

pub fn check_settlement_bound(chain: &Chain, lag: u64) -> Result<SettlementCheck, String> {
    let mut qty: HashMap<Digest, u64> = HashMap::new();
    let mut legs: HashMap<(Digest, u32), (UserId, UserId, u64)> = HashMap::new();
    let mut leg_count: HashMap<Digest, u32> = HashMap::new();
    let mut delivered: BTreeMap<(Digest, u32), u64> = BTreeMap::new();
    let mut settled: HashMap<(Digest, u32), (u64, u64, UserId, UserId)> = HashMap::new();
    for (tx, h) in chain.transactions() {
        let Payload::Supply(ev) = &tx.payload else { continue };
        match ev {
            LotEvent::LotRegistered(r) => {
                qty.insert(tx.tx_id, r.quantity_kg);
            }
            LotEvent::Transfer(t) => {
                let n = leg_count.entry(t.lot_id).or_default();
                legs.insert((t.lot_id, *n), (t.actor_from, t.actor_to, t.price_paise_per_kg));
                *n += 1;
            }
            LotEvent::DeliveryConfirmed(d) => {
                delivered.insert((d.lot_id, d.leg), h);
            }
            LotEvent::PaymentSettled(s) => {
                if settled.insert((s.lot_id, s.leg), (h, s.amount_paise, s.payer, s.payee)).is_some() {
                    return Err(format!("leg {} of {} settled twice", s.leg, s.lot_id));
                }
            }
            LotEvent::QualityUpdate(_) => {}
        }
    }
    let tip = chain.height();
    let mut out = SettlementCheck::default();
    for ((lot, leg), dh) in delivered {
        out.deliveries += 1;
        let Some(&(sh, amount, payer, payee)) = settled.get(&(lot, leg)) else {
            if dh + lag <= tip {
                return Err(format!("leg {leg} of {lot} delivered at {dh} never settled (tip {tip})"));
            }
            continue;
        };
        if sh > dh + lag {
            return Err(format!("leg {leg} of {lot} delivered at {dh} settled at {sh}"));
        }
        let (from, to, price) = legs[&(lot, leg)];
        let owed = qty[&lot] * price;
        if amount != owed || payer != to || payee != from {
            return Err(format!("leg {leg} of {lot}: paid {amount}, owed {owed}"));
        }
        out.settled_within_bound += 1;
    }
    Ok(out)
}

pub fn block_count(chain: &Chain) -> usize {
    chain.blocks().len()
}

pub fn blocks_of(chain: &Chain) -> Vec<Block> {
    chain.blocks().to_vec()
}

// ---------------------------------------------------------------------------
// Script replay on a single validator: one block per script line, each
// followed by a settlement block when one is owed.

pub struct Replayed {
    pub replica: Replica,
    pub validator: Keypair,
    pub set: ValidatorSet,
    pub workload: sugarchain_core::consensus::Workload,
    /// Lines whose transaction was refused, with the reason code.
    pub refused: Vec<(usize, &'static str)>,
}

pub fn replay(script: &str, rules: ChainRules) -> Replayed {
    let key = Keypair::from_label("validator-0");
    let set = ValidatorSet::new(vec![key.user_id()]).unwrap();
    let mut r = Replica::with_validators(set.validators(), "replay", rules).unwrap();
    let w = parse_workload(script).unwrap();
    let mut refused = Vec::new();
    for (i, e) in w.entries.iter().enumerate() {
        if let Err(rej) = r.state().check_tx(&e.tx) {
            refused.push((i, rej.code()));
            continue;
        }
        r.add_tx(e.tx.clone());
        let p = propose_block(&r, &key, &set, 0, e.tick, OPEN).unwrap();
        r.commit(p.block, &set, 0, None).unwrap();
        while let Ok(p) = propose_block(&r, &key, &set, 0, e.tick, OPEN) {
            r.commit(p.block, &set, 0, None).unwrap();
        }
    }
    Replayed {
        replica: r,
        validator: key,
        set,
        workload: w,
        refused,
    }
}

pub const FULL_CHAIN_ACTORS: &str = "\
0 0 seed-1 register seed_supplier
0 0 farmer-1 register farmer
0 0 farmer-2 register farmer
0 0 mill-1 register sugar_mill
0 0 mill-2 register sugar_mill
0 0 distributor-1 register distributor
0 0 retailer-1 register retailer
0 0 consumer-1 register consumer
";

// ---------------------------------------------------------------------------
// Published questionnaire marginals, as percentages of the 40 respondents.

pub const PUBLISHED_MARGINALS: &[(&str, &[(&str, &str)])] = &[
    ("q1", &[("gt10", "67.5"), ("y6_10", "17.5"), ("y1_5", "15")]),
    ("q2", &[("yes", "80"), ("no", "20")]),
    ("q4", &[("yes", "75"), ("no", "20"), ("dont_know", "5")]),
    ("q6", &[("yes", "90"), ("no", "5"), ("dont_know", "5")]),
    ("q7", &[("after", "92.5"), ("instant", "7.5")]),
    ("q8", &[("stated", "77.5"), ("none", "22.5")]),
    ("q9", &[("must_find", "70"), ("easy_sell", "30")]),
    ("q10", &[("yes", "80"), ("no", "15"), ("dont_know", "5")]),
    ("q11", &[("yes", "72.5"), ("no", "27.5")]),
    ("q12", &[("farmer", "75"), ("government", "2.5"), ("others", "22.5")]),
    ("q13", &[("yes", "60"), ("no", "40")]),
    ("q14", &[("yes", "57.5"), ("no", "40"), ("dont_know", "2.5")]),
    ("q15", &[("gov_office", "7.5"), ("private_shop", "17.5"), ("others", "75")]),
];

/// Exact value of a decimal percentage string, as a fraction of one.
pub fn percent_ratio(p: &str) -> num_rational::Ratio<u64> {
    let (whole, frac) = p.split_once('.').unwrap_or((p, ""));
    let scale = 10u64.pow(frac.len() as u32);
    let digits: u64 = format!("{whole}{frac}").parse().expect("decimal percentage");
    num_rational::Ratio::new(digits, 100 * scale)
}
