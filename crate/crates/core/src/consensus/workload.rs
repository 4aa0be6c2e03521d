//! Plain-text workload scripts, one transaction per line:
//!
//! ```text
//! # tick node actor action args...
//! 0  0 farmer-1 register farmer
//! 5  1 farmer-1 lot l1 5000 400 kolhapur
//! 6  1 farmer-1 quality l1 A 7200 no
//! 9  2 farmer-1 transfer l1 mill-1 450
//! 12 2 mill-1   deliver l1
//! 20 0 mill-1   settle l1 0
//! ```
//!
//! Actor keys are derived from the actor name, so a script always produces
//! the same transactions. Lot aliases resolve to the registering
//! transaction's id.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use thiserror::Error;

use crate::crypto::{hash_canonical, Digest, Keypair, UserId};
use crate::identity::{register_with_keypair, KdfParams, RegistrationForm, Role, UserRecord};
use crate::ledger::SignedTransaction;
use crate::supplychain::{
    DeliveryConfirmation, LotEvent, LotRegistration, QualityReport, QualityUpdate, Settlement,
    Transfer,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("workload line {line}: {message}")]
pub struct WorkloadError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct WorkloadEntry {
    pub tick: u64,
    pub node: usize,
    pub tx: SignedTransaction,
}

#[derive(Debug, Clone, Default)]
pub struct Workload {
    pub entries: Vec<WorkloadEntry>,
    pub actors: BTreeMap<String, UserId>,
    pub lots: BTreeMap<String, Digest>,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.entries.iter().map(|e| e.tick).max()
    }
}

pub fn actor_keypair(name: &str) -> Keypair {
    Keypair::from_label(&format!("actor:{name}"))
}

pub fn actor_password(name: &str) -> String {
    format!("pw-{name}-secret")
}

struct LotInfo {
    id: Digest,
    quantity_kg: u64,
    legs: Vec<(UserId, UserId, u64)>,
}

/// Parse and build every transaction of a script.
pub fn parse_workload(text: &str) -> Result<Workload, WorkloadError> {
    let mut out = Workload::default();
    let mut lots: BTreeMap<String, LotInfo> = BTreeMap::new();
    let empty: BTreeMap<UserId, UserRecord> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| WorkloadError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let f: Vec<&str> = content.split_whitespace().collect();
        if f.len() < 4 {
            return Err(err("expected: tick node actor action args...".into()));
        }
        let tick: u64 = f[0].parse().map_err(|_| err(format!("bad tick {:?}", f[0])))?;
        let node: usize = f[1].parse().map_err(|_| err(format!("bad node {:?}", f[1])))?;
        let actor = f[2];
        let keypair = actor_keypair(actor);
        let args = &f[4..];
        let want = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(format!("{} takes {n} argument(s)", f[3])))
            }
        };
        let num = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad number {s:?}")));
        let lot_ref = |alias: &str| {
            lots.get(alias)
                .map(|l| l.id)
                .ok_or_else(|| err(format!("unknown lot alias {alias:?}")))
        };

        let tx = match f[3] {
            "register" => {
                want(1)?;
                let role: Role = args[0].parse().map_err(|_| err(format!("bad role {:?}", args[0])))?;
                let form = RegistrationForm {
                    name: actor.to_owned(),
                    email: format!("{actor}@example.invalid"),
                    phone: "0000000000".into(),
                    password: actor_password(actor),
                    role,
                    recovery: (1..=3).map(|k| (format!("question {k}"), format!("answer {k}"))).collect(),
                };
                let seed = hash_canonical(format!("workload-rng:{actor}").as_bytes());
                let mut rng = ChaCha20Rng::from_seed(seed.0);
                let reg = register_with_keypair(&empty, keypair, &form, KdfParams::new(1), tick, &mut rng)
                    .map_err(|e| err(e.to_string()))?;
                out.actors.insert(actor.to_owned(), reg.user_id);
                reg.transaction
            }
            "lot" => {
                want(4)?;
                if lots.contains_key(args[0]) {
                    return Err(err(format!("lot alias {:?} reused", args[0])));
                }
                let quantity_kg = num(args[1])?;
                let ev = LotEvent::LotRegistered(LotRegistration {
                    quantity_kg,
                    farm_location: args[3].to_owned(),
                    price_paise_per_kg: num(args[2])?,
                    mill_info: None,
                    seed_supplier: None,
                    quality: None,
                });
                let tx = SignedTransaction::sign(&keypair, ev, tick);
                lots.insert(
                    args[0].to_owned(),
                    LotInfo {
                        id: tx.tx_id,
                        quantity_kg,
                        legs: Vec::new(),
                    },
                );
                out.lots.insert(args[0].to_owned(), tx.tx_id);
                tx
            }
            "quality" => {
                want(4)?;
                let worms = match args[3] {
                    "yes" => true,
                    "no" => false,
                    other => return Err(err(format!("worms flag must be yes/no, got {other:?}"))),
                };
                let ev = LotEvent::QualityUpdate(QualityUpdate {
                    lot_id: lot_ref(args[0])?,
                    quality: QualityReport {
                        grade: args[1].to_owned(),
                        moisture_bp: num(args[2])? as u32,
                        affected_by_worms: worms,
                    },
                });
                SignedTransaction::sign(&keypair, ev, tick)
            }
            "transfer" => {
                want(3)?;
                let lot_id = lot_ref(args[0])?;
                let to = actor_keypair(args[1]).user_id();
                let price = num(args[2])?;
                lots.get_mut(args[0]).expect("checked alias").legs.push((keypair.user_id(), to, price));
                let ev = LotEvent::Transfer(Transfer {
                    lot_id,
                    actor_from: keypair.user_id(),
                    actor_to: to,
                    price_paise_per_kg: price,
                    mill_info: None,
                });
                SignedTransaction::sign(&keypair, ev, tick)
            }
            "deliver" => {
                want(1)?;
                let lot_id = lot_ref(args[0])?;
                let legs = lots[args[0]].legs.len();
                if legs == 0 {
                    return Err(err("deliver before any transfer".into()));
                }
                let ev = LotEvent::DeliveryConfirmed(DeliveryConfirmation {
                    lot_id,
                    leg: (legs - 1) as u32,
                });
                SignedTransaction::sign(&keypair, ev, tick)
            }
            "settle" => {
                want(2)?;
                let lot_id = lot_ref(args[0])?;
                let info = &lots[args[0]];
                let leg = num(args[1])? as usize;
                let (from, to, price) = *info
                    .legs
                    .get(leg)
                    .ok_or_else(|| err(format!("lot {:?} has no leg {leg}", args[0])))?;
                let ev = LotEvent::PaymentSettled(Settlement {
                    lot_id,
                    leg: leg as u32,
                    payer: to,
                    payee: from,
                    amount_paise: info.quantity_kg.saturating_mul(price),
                });
                SignedTransaction::sign(&keypair, ev, tick)
            }
            other => return Err(err(format!("unknown action {other:?}"))),
        };
        out.entries.push(WorkloadEntry { tick, node, tx });
    }
    Ok(out)
}

/// A seeded supply-chain script with exactly `txs` lines (at least the eight
/// actor registrations). Lots walk farmer -> mill -> distributor -> retailer
/// -> consumer; leftover lines become mill quality updates. Submissions are
/// spread over `nodes`.
pub fn supply_workload_script(txs: usize, nodes: &[usize], seed: u64) -> String {
    const ACTORS: [(&str, &str); 8] = [
        ("seed-1", "seed_supplier"),
        ("farmer-1", "farmer"),
        ("farmer-2", "farmer"),
        ("mill-1", "sugar_mill"),
        ("mill-2", "sugar_mill"),
        ("distributor-1", "distributor"),
        ("retailer-1", "retailer"),
        ("consumer-1", "consumer"),
    ];
    const PER_LOT: usize = 10;
    assert!(!nodes.is_empty(), "at least one submitting node");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("# tick node actor action args\n");
    let line = |out: &mut String, rng: &mut ChaCha8Rng, tick: u64, rest: String| {
        let node = nodes[rng.gen_range(0..nodes.len())];
        writeln!(out, "{tick} {node} {rest}").unwrap();
    };

    let regs = txs.min(ACTORS.len());
    for (i, (name, role)) in ACTORS.iter().take(regs).enumerate() {
        line(&mut out, &mut rng, i as u64, format!("{name} register {role}"));
    }
    let body = txs - regs;
    let n_lots = body / PER_LOT;
    let mut extra = body % PER_LOT;
    for k in 0..n_lots {
        let alias = format!("lot{k}");
        let mut t = 12 + 4 * k as u64;
        let farmer = if rng.gen_bool(0.5) { "farmer-1" } else { "farmer-2" };
        let mill = if rng.gen_bool(0.5) { "mill-1" } else { "mill-2" };
        let qty = rng.gen_range(1..=50) * 100;
        let base = rng.gen_range(300..=1200u64);
        line(&mut out, &mut rng, t, format!("{farmer} lot {alias} {qty} {base} village-{k}"));
        t += 1;
        let grade = ["A", "B", "C"][rng.gen_range(0..3)];
        let worms = if rng.gen_bool(0.9) { "yes" } else { "no" };
        let moisture = rng.gen_range(6000..8000);
        line(&mut out, &mut rng, t, format!("{farmer} quality {alias} {grade} {moisture} {worms}"));
        if extra > 0 {
            extra -= 1;
            t += 1;
            line(&mut out, &mut rng, t, format!("{mill} quality {alias} A {moisture} no"));
        }
        let path = [farmer, mill, "distributor-1", "retailer-1", "consumer-1"];
        let mut price = base;
        for hop in path.windows(2) {
            price += rng.gen_range(0..=100);
            t += rng.gen_range(2..=8);
            line(&mut out, &mut rng, t, format!("{} transfer {alias} {} {price}", hop[0], hop[1]));
            t += rng.gen_range(1..=8);
            line(&mut out, &mut rng, t, format!("{} deliver {alias}", hop[1]));
        }
    }
    // Lines that did not fit a full lot: quality updates on a fresh lot.
    if extra > 0 {
        let t = 12 + 4 * n_lots as u64;
        line(&mut out, &mut rng, t, "farmer-1 lot spare 1000 400 village-spare".into());
        for i in 1..extra {
            line(&mut out, &mut rng, t + i as u64, format!("mill-1 quality spare B {} yes", 6000 + i));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_round_trip_counts() {
        for n in [0, 3, 8, 9, 18, 50, 200] {
            let script = supply_workload_script(n, &[0, 1, 2, 3], 7);
            let w = parse_workload(&script).unwrap();
            assert_eq!(w.len(), n, "target {n}");
        }
    }

    #[test]
    fn deterministic_transactions() {
        let a = parse_workload(&supply_workload_script(40, &[0], 1)).unwrap();
        let b = parse_workload(&supply_workload_script(40, &[0], 1)).unwrap();
        let ids = |w: &Workload| w.entries.iter().map(|e| e.tx.tx_id).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_workload("0 0 a register farmer\n\n1 0 a deliver nolot\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(parse_workload("x 0 a register farmer").is_err());
        assert!(parse_workload("0 0 a fly away").is_err());
        assert!(parse_workload("0 0 a register wizard").is_err());
    }
}
