//! The node's request handlers, independent of transport. The HTTP API and
//! the CLI both drive a `NodeService`.
//!
//! The node is the chain's only validator. Each accepted transaction is
//! sealed into its own block straight away, followed by any settlement
//! blocks that the delivery made due. Readers share a lock; everything that
//! appends a block holds it exclusively.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sugarchain_core::consensus::{
    propose_block, validate_proposal, AuditEntry, ProposalPolicy, ProposeError, Replica, ValidatorSet,
};
use sugarchain_core::crypto::hash_concat;
use sugarchain_core::identity::{
    login, recover_password, register_user, RegistrationForm, Role, Session, SessionStore,
    RECOVERY_QUESTIONS,
};
use sugarchain_core::ledger::{make_genesis, Block, Payload, SignedTransaction, VerifyReport};
use sugarchain_core::state::LedgerState;
use sugarchain_core::supplychain::{
    payment_latency, trace_lot, ChainRules, LotEvent, LotProvenance, PaymentLatency,
};
use sugarchain_core::survey::{
    export_report, fixture_records, load_survey, payment_delay_summary, tabulate_all,
};
use sugarchain_core::{Digest, Keypair, SessionId, Signature, UserId};

use crate::store::{self, BlockStore};
use crate::{NodeConfig, NodeError};

pub const PARAMS_FILE: &str = "chain.json";
pub const SESSIONS_FILE: &str = "sessions.json";
/// How far ahead of the node clock a transaction timestamp may be.
pub const MAX_CLOCK_SKEW_MS: u64 = 5 * 60 * 1000;
const DEV_TICK_MS: u64 = 1_000;

const POLICY: ProposalPolicy = ProposalPolicy {
    allow_empty: false,
    min_age: 0,
};

/// Chain parameters fixed at `init`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    pub chain_id: String,
    pub rules: ChainRules,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitReport {
    pub chain_id: String,
    pub validator: UserId,
    pub genesis_hash: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub chain_id: String,
    pub height: u64,
    pub tip: Digest,
    pub validator: UserId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementReceipt {
    pub tx_id: Digest,
    pub height: u64,
    pub lot_id: Digest,
    pub leg: u32,
    pub amount_paise: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committed {
    pub tx_id: Digest,
    pub height: u64,
    pub block_hash: Digest,
    /// Automatic settlements sealed right after this transaction.
    pub settlements: Vec<SettlementReceipt>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Registered {
    pub user_id: UserId,
    pub role: Role,
    /// The user's signing key. The node does not keep a copy.
    pub secret_key: String,
    #[serde(flatten)]
    pub committed: Committed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoggedIn {
    pub session: Session,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recovered {
    pub session: Session,
    #[serde(flatten)]
    pub committed: Committed,
}

/// A supply-chain event signed by the submitter's wallet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub submitter: UserId,
    pub event: LotEvent,
    pub timestamp: u64,
    pub signature: Signature,
}

impl SubmitRequest {
    pub fn sign(key: &Keypair, event: LotEvent, timestamp: u64) -> Self {
        let tx = SignedTransaction::sign(key, event.clone(), timestamp);
        Self {
            submitter: tx.submitter,
            event,
            timestamp,
            signature: tx.signature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub height: u64,
    pub transaction: SignedTransaction,
}

struct Inner {
    store: BlockStore,
    replica: Replica,
    validator: Keypair,
    set: ValidatorSet,
}

pub struct NodeService {
    config: NodeConfig,
    params: ChainParams,
    inner: RwLock<Inner>,
    sessions: SessionStore,
    session_counter: AtomicU64,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> NodeError + '_ {
    move |e| NodeError::Io(format!("{}: {e}", path.display()))
}

fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn dev_rng(seed: u64, tip: &Digest, purpose: &str) -> ChaCha20Rng {
    let d = hash_concat([
        b"sugarchain-dev-rng".as_slice(),
        &seed.to_be_bytes(),
        tip.as_bytes(),
        purpose.as_bytes(),
    ]);
    ChaCha20Rng::from_seed(*d.as_bytes())
}

/// Write `contents` to `path` atomically.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), NodeError> {
    use std::io::Write;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| NodeError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn load_validator_key(path: &Path) -> Result<Keypair, NodeError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Keypair::from_secret_hex(text.trim())
        .map_err(|e| NodeError::Config(format!("validator key {}: {e}", path.display())))
}

fn write_secret(path: &Path, key: &Keypair) -> Result<(), NodeError> {
    write_atomic(path, format!("{}\n", key.secret_hex()).as_bytes())?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600)).map_err(io_err(path))?;
    }
    Ok(())
}

impl NodeService {
    /// Create the data directory, validator key and genesis block.
    pub fn init(config: &NodeConfig) -> Result<InitReport, NodeError> {
        config.validate()?;
        let dir = &config.data_dir;
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        if dir.join(store::BLOCKS_FILE).exists() {
            return Err(NodeError::AlreadyInitialized(dir.display().to_string()));
        }
        let key_path = config.validator_key_path();
        let validator = if key_path.exists() {
            load_validator_key(&key_path)?
        } else {
            let key = match config.dev_seed {
                Some(seed) => Keypair::from_label(&format!("dev-validator-{seed}")),
                None => Keypair::generate(&mut rand::rngs::OsRng),
            };
            write_secret(&key_path, &key)?;
            key
        };
        let params = ChainParams {
            chain_id: config.chain_id.clone(),
            rules: config.rules(),
        };
        let genesis = make_genesis(&[validator.user_id()], &params.chain_id)
            .map_err(|e| NodeError::Config(e.to_string()))?;
        write_atomic(
            &dir.join(PARAMS_FILE),
            serde_json::to_string_pretty(&params).expect("params serialize").as_bytes(),
        )?;
        BlockStore::create(dir, &genesis)?;
        debug!("initialised chain {} in {}", params.chain_id, dir.display());
        Ok(InitReport {
            chain_id: params.chain_id,
            validator: validator.user_id(),
            genesis_hash: genesis.block_hash,
        })
    }

    /// Load and verify an initialised data directory.
    pub fn open(config: NodeConfig) -> Result<Self, NodeError> {
        config.validate()?;
        let dir = config.data_dir.clone();
        let params_path = dir.join(PARAMS_FILE);
        let params: ChainParams = match std::fs::read(&params_path) {
            Ok(raw) => serde_json::from_slice(&raw)
                .map_err(|e| NodeError::CorruptStore(format!("{}: {e}", params_path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(NodeError::NotInitialized(dir.display().to_string()))
            }
            Err(e) => return Err(io_err(&params_path)(e)),
        };
        if params.rules != config.rules() || params.chain_id != config.chain_id {
            warn!("configured chain parameters differ from {}; using the stored ones", params_path.display());
        }
        let (store, chain, torn) = BlockStore::open(&dir)?;
        if let Some(t) = torn {
            warn!("recovered block store by dropping a torn {}-byte tail", t.bytes);
        }
        if chain.chain_id() != params.chain_id {
            return Err(NodeError::CorruptStore("genesis chain id does not match chain.json".into()));
        }
        let validator = load_validator_key(&config.validator_key_path())?;
        if chain.validators() != [validator.user_id()] {
            return Err(NodeError::Config("validator key is not this chain's sole validator".into()));
        }
        let state = LedgerState::from_chain(&chain, params.rules)
            .map_err(|e| NodeError::CorruptStore(e.to_string()))?;
        let set = ValidatorSet::from_chain(&chain);
        let sessions = SessionStore::new(config.session_ttl_ms());
        let sessions_path = dir.join(SESSIONS_FILE);
        if let Ok(raw) = std::fs::read(&sessions_path) {
            match serde_json::from_slice::<Vec<Session>>(&raw) {
                Ok(saved) => sessions.restore(saved),
                Err(e) => warn!("ignoring unreadable {}: {e}", sessions_path.display()),
            }
        }
        debug!("opened chain {} at height {}", params.chain_id, chain.height());
        Ok(Self {
            config,
            params,
            inner: RwLock::new(Inner {
                store,
                replica: Replica::from_parts(chain, state),
                validator,
                set,
            }),
            sessions,
            session_counter: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().expect("node lock poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().expect("node lock poisoned")
    }

    fn now(&self, inner: &Inner) -> u64 {
        let tip = inner.replica.chain().tip().header.timestamp;
        match self.config.dev_seed {
            Some(_) => tip + DEV_TICK_MS,
            None => wall_clock_ms().max(tip),
        }
    }

    fn rng(&self, inner: &Inner, purpose: &str) -> ChaCha20Rng {
        match self.config.dev_seed {
            Some(seed) => dev_rng(seed, &inner.replica.tip_hash(), purpose),
            None => ChaCha20Rng::from_entropy(),
        }
    }

    fn persist_sessions(&self) -> Result<(), NodeError> {
        let now = self.now(&self.read());
        self.sessions.purge_expired(now);
        let json = serde_json::to_vec_pretty(&self.sessions.snapshot()).expect("sessions serialize");
        write_atomic(&self.config.data_dir.join(SESSIONS_FILE), &json)
    }

    /// Seal the next block if there is anything to put in it.
    fn seal_next(&self, inner: &mut Inner, timestamp: u64) -> Result<Option<Block>, NodeError> {
        let proposal = match propose_block(&inner.replica, &inner.validator, &inner.set, 0, timestamp, POLICY) {
            Ok(p) => p,
            Err(ProposeError::EmptyMempoolPolicy) => return Ok(None),
            Err(e) => return Err(NodeError::Config(e.to_string())),
        };
        inner.replica.discard(&proposal.audit);
        for a in &proposal.audit {
            warn!("dropped transaction {}: {}", a.tx_id, a.reason);
        }
        let block = proposal.block;
        validate_proposal(&inner.replica, &block, &inner.set, 0, None)
            .map_err(|e| NodeError::CorruptStore(format!("own proposal invalid: {e}")))?;
        inner.store.append(&block)?;
        inner
            .replica
            .commit(block.clone(), &inner.set, 0, None)
            .expect("validated above");
        Ok(Some(block))
    }

    fn commit_tx(&self, inner: &mut Inner, tx: SignedTransaction) -> Result<Committed, NodeError> {
        inner.replica.state().check_tx(&tx)?;
        let now = self.now(inner);
        if tx.timestamp > now + MAX_CLOCK_SKEW_MS {
            return Err(NodeError::BadRequest("transaction timestamp is in the future".into()));
        }
        let tx_id = tx.tx_id;
        inner.replica.add_tx(tx.clone());
        let sealed = self.seal_next(inner, now.max(tx.timestamp))?;
        let Some(block) = sealed.filter(|b| b.transactions.iter().any(|t| t.tx_id == tx_id)) else {
            inner.replica.discard(&[AuditEntry {
                tx_id,
                reason: "not sealed".into(),
            }]);
            return Err(NodeError::BadRequest("transaction could not be sealed".into()));
        };
        let mut settlements = Vec::new();
        loop {
            let ts = self.now(inner);
            let Some(b) = self.seal_next(inner, ts)? else { break };
            for t in &b.transactions {
                if let Payload::Supply(LotEvent::PaymentSettled(s)) = &t.payload {
                    settlements.push(SettlementReceipt {
                        tx_id: t.tx_id,
                        height: b.height(),
                        lot_id: s.lot_id,
                        leg: s.leg,
                        amount_paise: s.amount_paise,
                    });
                }
            }
        }
        Ok(Committed {
            tx_id,
            height: block.height(),
            block_hash: block.block_hash,
            settlements,
        })
    }

    /// The node clock in ms, as used for new transactions.
    pub fn clock_ms(&self) -> u64 {
        self.now(&self.read())
    }

    pub fn status(&self) -> Status {
        let inner = self.read();
        Status {
            chain_id: self.params.chain_id.clone(),
            height: inner.replica.height(),
            tip: inner.replica.tip_hash(),
            validator: inner.validator.user_id(),
        }
    }

    pub fn register(&self, form: &RegistrationForm) -> Result<Registered, NodeError> {
        let mut inner = self.write();
        let now = self.now(&inner);
        let mut rng = self.rng(&inner, "register");
        let reg = register_user(inner.replica.state(), form, self.config.kdf(), now, &mut rng)?;
        let committed = self.commit_tx(&mut inner, reg.transaction)?;
        Ok(Registered {
            user_id: reg.user_id,
            role: form.role,
            secret_key: reg.keypair.secret_hex(),
            committed,
        })
    }

    pub fn login(&self, user_id: &UserId, password: &str) -> Result<LoggedIn, NodeError> {
        let (session, role) = {
            let inner = self.read();
            let n = self.session_counter.fetch_add(1, Ordering::Relaxed);
            let mut rng = self.rng(&inner, &format!("session:{user_id}:{n}"));
            let now = self.now(&inner);
            let session = login(inner.replica.state(), &self.sessions, user_id, password, now, &mut rng)?;
            (session, inner.replica.state().role_of(user_id).expect("logged-in user exists"))
        };
        self.persist_sessions()?;
        Ok(LoggedIn { session, role })
    }

    /// Replace a forgotten password; the validator signs the rotation.
    pub fn recover(
        &self,
        user_id: &UserId,
        answers: &[String; RECOVERY_QUESTIONS],
        new_password: &str,
    ) -> Result<Recovered, NodeError> {
        let recovered = {
            let mut inner = self.write();
            let now = self.now(&inner);
            let mut rng = self.rng(&inner, &format!("recover:{user_id}"));
            let rec = recover_password(
                inner.replica.state(),
                &self.sessions,
                &inner.validator,
                user_id,
                answers,
                new_password,
                self.config.kdf(),
                now,
                &mut rng,
            )?;
            let committed = self.commit_tx(&mut inner, rec.transaction)?;
            Recovered {
                session: rec.session,
                committed,
            }
        };
        self.persist_sessions()?;
        Ok(recovered)
    }

    /// The user behind a session token.
    pub fn authenticate(&self, token: Option<&str>) -> Result<UserId, NodeError> {
        let token = token.ok_or(NodeError::MissingSession)?;
        let id = SessionId::from_hex(token.trim()).map_err(|_| NodeError::MissingSession)?;
        let now = match self.config.dev_seed {
            Some(_) => self.now(&self.read()),
            None => wall_clock_ms(),
        };
        Ok(self.sessions.validate(&id, now)?)
    }

    /// Submit a signed supply-chain event on behalf of the session's user.
    pub fn submit(&self, session: Option<&str>, req: SubmitRequest) -> Result<Committed, NodeError> {
        let user = self.authenticate(session)?;
        if user != req.submitter {
            return Err(NodeError::Rejected(sugarchain_core::state::Rejection::Unauthorized(
                "session does not belong to the submitter",
            )));
        }
        let tx = SignedTransaction::from_parts(req.submitter, Payload::Supply(req.event), req.timestamp, req.signature)
            .map_err(|e| NodeError::Rejected(sugarchain_core::state::Rejection::InvalidTx(e)))?;
        let mut inner = self.write();
        self.commit_tx(&mut inner, tx)
    }

    pub fn transaction(&self, tx_id: &Digest) -> Result<TxRecord, NodeError> {
        let inner = self.read();
        let (tx, height) = inner
            .replica
            .chain()
            .get_transaction(tx_id)
            .map_err(|_| NodeError::NotFound(format!("transaction {tx_id}")))?;
        Ok(TxRecord {
            height,
            transaction: tx.clone(),
        })
    }

    pub fn trace(&self, lot_id: &Digest) -> Result<LotProvenance, NodeError> {
        Ok(trace_lot(self.read().replica.chain(), lot_id)?)
    }

    pub fn latency(&self, lot_id: &Digest) -> Result<PaymentLatency, NodeError> {
        Ok(payment_latency(self.read().replica.chain(), lot_id)?)
    }

    /// Re-verify the block file on disk from scratch.
    pub fn verify(&self) -> Result<VerifyReport, NodeError> {
        let _guard = self.read();
        store::verify_file(&self.config.data_dir)
    }

    /// Blocks `from..=to`, clamped to the chain.
    pub fn blocks(&self, from: Option<u64>, to: Option<u64>) -> Result<Vec<Block>, NodeError> {
        let inner = self.read();
        let height = inner.replica.height();
        let from = from.unwrap_or(0);
        let to = to.unwrap_or(height).min(height);
        if from > to {
            return Err(NodeError::BadRequest(format!("empty block range {from}..={to}")));
        }
        Ok(inner.replica.chain().blocks()[from as usize..=to as usize].to_vec())
    }

    pub fn survey_report(&self) -> Result<String, NodeError> {
        survey_report(self.config.survey_csv.as_deref())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.config.data_dir.clone()
    }
}

/// Full survey report for a CSV file, or for the bundled fixture.
pub fn survey_report(csv: Option<&Path>) -> Result<String, NodeError> {
    let records = match csv {
        Some(p) => load_survey(p)?,
        None => fixture_records(),
    };
    let dists = tabulate_all(&records)?;
    let delay = payment_delay_summary(&records)?;
    Ok(export_report(&dists, Some(&delay))?)
}
