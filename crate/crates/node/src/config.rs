//! Node configuration, read from a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sugarchain_core::identity::KdfParams;
use sugarchain_core::supplychain::{ChainRules, CustodyOrder, SettlementMode, SettlementRule};

use crate::NodeError;

pub const CONFIG_ENV: &str = "SUGARCHAIN_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub data_dir: PathBuf,
    pub listen_address: String,
    pub chain_id: String,
    /// Hex-encoded validator secret. Generated into the data directory by
    /// `init` when absent.
    pub validator_key: Option<PathBuf>,
    pub session_ttl_minutes: u64,
    pub settlement: SettlementMode,
    pub max_block_lag: u64,
    pub custody: CustodyOrder,
    pub kdf_iterations: u32,
    /// Survey file served by `GET /v1/survey/report`; the bundled fixture
    /// when unset.
    pub survey_csv: Option<PathBuf>,
    /// Deterministic mode for tests and demos: the clock advances one second
    /// per block and all randomness derives from this seed and the chain tip.
    pub dev_seed: Option<u64>,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("sugarchain-data"),
            listen_address: "127.0.0.1:7420".into(),
            chain_id: "sugarchain".into(),
            validator_key: None,
            session_ttl_minutes: 30,
            settlement: SettlementMode::Auto,
            max_block_lag: 1,
            custody: CustodyOrder::Adjacent,
            kdf_iterations: KdfParams::default().iterations,
            survey_csv: None,
            dev_seed: None,
        }
    }
}

impl NodeConfig {
    pub fn parse(text: &str) -> Result<Self, NodeError> {
        let cfg: NodeConfig = toml::from_str(text).map_err(|e| NodeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, NodeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NodeError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        let bad = |m: &str| Err(NodeError::Config(m.into()));
        if self.session_ttl_minutes < 1 {
            return bad("session_ttl_minutes must be at least 1");
        }
        if self.max_block_lag < 1 {
            return bad("max_block_lag must be at least 1");
        }
        if self.kdf_iterations < 1 {
            return bad("kdf_iterations must be at least 1");
        }
        if self.chain_id.is_empty() {
            return bad("chain_id must not be empty");
        }
        if self.listen_address.parse::<SocketAddr>().is_err() {
            return bad("listen_address must be host:port");
        }
        Ok(())
    }

    pub fn rules(&self) -> ChainRules {
        ChainRules {
            settlement: SettlementRule {
                mode: self.settlement,
                max_block_lag: self.max_block_lag,
            },
            custody: self.custody,
        }
    }

    pub fn kdf(&self) -> KdfParams {
        KdfParams::new(self.kdf_iterations)
    }

    pub fn session_ttl_ms(&self) -> u64 {
        self.session_ttl_minutes * 60 * 1000
    }

    pub fn validator_key_path(&self) -> PathBuf {
        self.validator_key
            .clone()
            .unwrap_or_else(|| self.data_dir.join("validator.key"))
    }
}
