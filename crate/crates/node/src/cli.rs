//! Operator command line. Every subcommand that touches the chain opens the
//! data directory directly, so the node must not be serving it at the time.
//!
//! Exit codes: 0 success, 1 operation failed, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sugarchain_core::consensus::{
    parse_workload, run_simulation, supply_workload_script, NodeStatus, SimConfig,
};
use sugarchain_core::identity::{RegistrationForm, Role};
use sugarchain_core::ledger::VerifyReport;
use sugarchain_core::supplychain::LotEvent;
use sugarchain_core::{Digest, Keypair, UserId};

use crate::api::{self, ApiEnvelope};
use crate::config::CONFIG_ENV;
use crate::service::{self, Committed, SubmitRequest};
use crate::{NodeConfig, NodeError, NodeService};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "sugarchain", version, about = "SugarChain node and operator tools")]
pub struct Cli {
    /// Node configuration file (TOML). SUGARCHAIN_CONFIG takes precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the data directory, validator key and genesis block.
    Init,
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Register a user and print (or save) the new signing key.
    Register {
        #[arg(long)]
        name: String,
        #[arg(long)]
        email: String,
        #[arg(long, default_value = "")]
        phone: String,
        #[arg(long)]
        password: String,
        #[arg(long)]
        role: Role,
        /// Recovery question and answer as "question=answer"; give three.
        #[arg(long = "recovery", value_parser = parse_recovery, required = true)]
        recovery: Vec<(String, String)>,
        /// Write the signing key here instead of printing it.
        #[arg(long)]
        key_out: Option<PathBuf>,
    },
    /// Open a session.
    Login {
        #[arg(long)]
        user: UserId,
        #[arg(long)]
        password: String,
    },
    /// Replace a forgotten password using the three recovery answers.
    Recover {
        #[arg(long)]
        user: UserId,
        #[arg(long = "answer", num_args = 3, required = true)]
        answers: Vec<String>,
        #[arg(long)]
        new_password: String,
    },
    /// Sign a supply-chain event with a local key and commit it.
    Submit {
        #[arg(long)]
        session: String,
        /// File holding the hex signing key.
        #[arg(long)]
        key: PathBuf,
        /// Event JSON, or @path to read it from a file.
        #[arg(long)]
        event: String,
        /// Transaction timestamp in ms; defaults to the node clock.
        #[arg(long)]
        timestamp: Option<u64>,
    },
    /// Show a committed transaction.
    Tx { tx_id: Digest },
    /// Provenance of a lot.
    Trace { lot_id: Digest },
    /// Delivery-to-payment latency for each leg of a lot.
    Latency { lot_id: Digest },
    /// Re-verify the stored chain.
    Verify,
    /// List blocks in a height range.
    Blocks {
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
    },
    /// Chain height and tip.
    Status,
    /// Questionnaire tools.
    Survey {
        #[command(subcommand)]
        command: SurveyCommand,
    },
    /// Run a simulated validator network.
    Simulate {
        config: PathBuf,
        /// Workload script; overrides the config's `workload` key.
        #[arg(long)]
        workload: Option<PathBuf>,
        /// Size of the generated workload when no script is given.
        #[arg(long, default_value_t = 200)]
        txs: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum SurveyCommand {
    /// Per-question marginals of a survey CSV (the bundled fixture if omitted).
    Report { csv: Option<PathBuf> },
}

fn parse_recovery(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(q, a)| (q.trim().to_owned(), a.to_owned()))
        .ok_or_else(|| "expected question=answer".to_owned())
}

/// A command's result in both renderings.
struct Output {
    json: serde_json::Value,
    text: String,
    ok: bool,
}

impl Output {
    fn new<T: Serialize>(value: &T, text: String) -> Self {
        Self {
            json: serde_json::to_value(value).expect("output serializes"),
            text,
            ok: true,
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<NodeConfig, NodeError> {
    let path = std::env::var_os(CONFIG_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| cli.config.clone());
    let mut cfg = match path {
        Some(p) => NodeConfig::load(&p)?,
        None => NodeConfig::default(),
    };
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    Ok(cfg)
}

fn committed_text(c: &Committed) -> String {
    let mut s = format!("committed {} height {}", c.tx_id, c.height);
    for p in &c.settlements {
        write!(
            s,
            "\nsettled lot {} leg {} amount_paise {} height {}",
            p.lot_id, p.leg, p.amount_paise, p.height
        )
        .unwrap();
    }
    s
}

fn read_arg(value: &str) -> Result<String, NodeError> {
    match value.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| NodeError::Io(format!("{path}: {e}"))),
        None => Ok(value.to_owned()),
    }
}

fn write_key(path: &Path, hex: &str) -> Result<(), NodeError> {
    std::fs::write(path, format!("{hex}\n")).map_err(|e| NodeError::Io(format!("{}: {e}", path.display())))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))
            .map_err(|e| NodeError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn simulate(config: &Path, workload: Option<&Path>, txs: usize) -> Result<Output, NodeError> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| NodeError::Io(format!("{}: {e}", p.display())));
    let cfg = SimConfig::parse(&read(config)?).map_err(|e| NodeError::Config(e.to_string()))?;
    let script = match workload.map(Path::to_path_buf).or_else(|| {
        cfg.workload
            .as_ref()
            .map(|w| config.parent().unwrap_or(Path::new(".")).join(w))
    }) {
        Some(p) => read(&p)?,
        None => {
            let honest: Vec<usize> = (0..cfg.node_count)
                .filter(|i| cfg.status_of(*i) == NodeStatus::Honest)
                .collect();
            supply_workload_script(txs, &honest, cfg.rng_seed)
        }
    };
    let w = parse_workload(&script).map_err(|e| NodeError::BadRequest(e.to_string()))?;
    let report = run_simulation(&cfg, &w).map_err(|e| NodeError::Config(e.to_string()))?;
    let json = serde_json::json!({
        "converged": report.converged(),
        "slots": report.slots,
        "byzantine_proposals": report.byzantine_proposals,
        "rejected_proposals": report.rejections.len(),
        "fork_events": report.fork_events,
        "tips": report.nodes.iter().map(|n| n.tip).collect::<Vec<_>>(),
        "report": report.to_text(),
    });
    Ok(Output {
        json,
        text: report.to_text(),
        ok: true,
    })
}

fn execute(cli: &Cli) -> Result<Output, NodeError> {
    // commands that need no data directory
    match &cli.command {
        Command::Survey {
            command: SurveyCommand::Report { csv },
        } => {
            let report = service::survey_report(csv.as_deref())?;
            return Ok(Output::new(&api::SurveyReport { report: report.clone() }, report));
        }
        Command::Simulate { config, workload, txs } => return simulate(config, workload.as_deref(), *txs),
        _ => {}
    }
    let cfg = resolve_config(cli)?;
    if let Command::Init = cli.command {
        let r = NodeService::init(&cfg)?;
        let text = format!(
            "initialised chain {} validator {} genesis {}",
            r.chain_id, r.validator, r.genesis_hash
        );
        return Ok(Output::new(&r, text));
    }
    let svc = NodeService::open(cfg)?;
    Ok(match &cli.command {
        Command::Init | Command::Survey { .. } | Command::Simulate { .. } => unreachable!("handled above"),
        Command::Serve { listen } => {
            let addr = listen.clone().unwrap_or_else(|| svc.config().listen_address.clone());
            serve(svc, &addr)?;
            Output::new(&(), "stopped".into())
        }
        Command::Register {
            name,
            email,
            phone,
            password,
            role,
            recovery,
            key_out,
        } => {
            let form = RegistrationForm {
                name: name.clone(),
                email: email.clone(),
                phone: phone.clone(),
                password: password.clone(),
                role: *role,
                recovery: recovery.clone(),
            };
            let mut r = svc.register(&form)?;
            let mut text = format!(
                "registered {} role {}\n{}",
                r.user_id,
                r.role.as_str(),
                committed_text(&r.committed)
            );
            match key_out {
                Some(p) => {
                    write_key(p, &r.secret_key)?;
                    write!(text, "\nkey written to {}", p.display()).unwrap();
                    r.secret_key = String::new();
                }
                None => write!(text, "\nsecret_key {}", r.secret_key).unwrap(),
            }
            Output::new(&r, text)
        }
        Command::Login { user, password } => {
            let r = svc.login(user, password)?;
            let text = format!("session {} expires_at {}", r.session.session_id, r.session.expires_at);
            Output::new(&r, text)
        }
        Command::Recover {
            user,
            answers,
            new_password,
        } => {
            let answers: [String; 3] = answers.clone().try_into().expect("clap enforces three answers");
            let r = svc.recover(user, &answers, new_password)?;
            let text = format!("session {}\n{}", r.session.session_id, committed_text(&r.committed));
            Output::new(&r, text)
        }
        Command::Submit {
            session,
            key,
            event,
            timestamp,
        } => {
            let hex = std::fs::read_to_string(key).map_err(|e| NodeError::Io(format!("{}: {e}", key.display())))?;
            let keypair = Keypair::from_secret_hex(hex.trim()).map_err(|e| NodeError::BadRequest(e.to_string()))?;
            let ev: LotEvent = serde_json::from_str(&read_arg(event)?)
                .map_err(|e| NodeError::BadRequest(format!("event: {e}")))?;
            let ts = match timestamp {
                Some(t) => *t,
                None => svc.clock_ms(),
            };
            let r = svc.submit(Some(session), SubmitRequest::sign(&keypair, ev, ts))?;
            let text = committed_text(&r);
            Output::new(&r, text)
        }
        Command::Tx { tx_id } => {
            let r = svc.transaction(tx_id)?;
            let text = format!(
                "tx {} height {} kind {} submitter {} timestamp {}",
                r.transaction.tx_id,
                r.height,
                r.transaction.payload.kind_name(),
                r.transaction.submitter,
                r.transaction.timestamp
            );
            Output::new(&r, text)
        }
        Command::Trace { lot_id } => {
            let p = svc.trace(lot_id)?;
            let mut text = format!(
                "lot {} registered by {} at height {} qty_kg {} location {}\ncustodian {}",
                p.lot_id,
                p.registered_by,
                p.registered_height,
                p.quantity_kg,
                p.farm_location,
                p.custodian_role.as_str()
            );
            for l in &p.legs {
                let opt = |v: Option<u64>| v.map_or("-".to_owned(), |h| h.to_string());
                write!(
                    text,
                    "\nleg {} {} -> {} height {} price {} delivered {} settled {}",
                    l.index,
                    l.role_from.as_str(),
                    l.role_to.as_str(),
                    l.height,
                    l.price_paise_per_kg,
                    opt(l.delivered_height),
                    opt(l.settled_height)
                )
                .unwrap();
            }
            for q in &p.quality_timeline {
                write!(text, "\nquality height {} {:?}", q.height, q.report).unwrap();
            }
            Output::new(&p, text)
        }
        Command::Latency { lot_id } => {
            let l = svc.latency(lot_id)?;
            let mut text = format!("lot {}", l.lot_id);
            for s in &l.settled {
                write!(
                    text,
                    "\nleg {} delivered {} settled {} blocks {}",
                    s.leg, s.delivered_height, s.settled_height, s.blocks
                )
                .unwrap();
            }
            for o in &l.outstanding {
                write!(text, "\nleg {o} outstanding").unwrap();
            }
            Output::new(&l, text)
        }
        Command::Verify => {
            let r = svc.verify()?;
            match &r {
                VerifyReport::Ok { height } => Output::new(&r, format!("chain ok height={height}")),
                VerifyReport::Failed { height, reason } => Output {
                    ok: false,
                    ..Output::new(&r, format!("chain FAILED height={height}: {reason}"))
                },
            }
        }
        Command::Blocks { from, to } => {
            let blocks = svc.blocks(*from, *to)?;
            let text = blocks
                .iter()
                .map(|b| format!("{} {} txs {}", b.height(), b.block_hash, b.transactions.len()))
                .collect::<Vec<_>>()
                .join("\n");
            Output::new(&blocks, text)
        }
        Command::Status => {
            let s = svc.status();
            let text = format!("chain {} height {} tip {}", s.chain_id, s.height, s.tip);
            Output::new(&s, text)
        }
    })
}

fn serve(svc: NodeService, addr: &str) -> Result<(), NodeError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| NodeError::Io(e.to_string()))?;
    rt.block_on(async {
        let listener = api::bind(addr).await?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        api::serve(Arc::new(svc), listener, shutdown).await
    })
}

/// Parse `args` and run the command, writing to `out` and `err`. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let result = execute(&cli);
    let ok = result.as_ref().is_ok_and(|o| o.ok);
    match (cli.format, result) {
        (Format::Json, Ok(o)) => {
            let env = ApiEnvelope {
                request_id: "cli".into(),
                ok: o.ok,
                result: Some(o.json),
                error: None,
            };
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&env).expect("json"));
        }
        (Format::Json, Err(e)) => {
            let env = ApiEnvelope::<()>::failure("cli".into(), &e);
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&env).expect("json"));
        }
        (Format::Text, Ok(o)) => {
            let _ = writeln!(out, "{}", o.text.trim_end());
        }
        (Format::Text, Err(e)) => {
            let _ = writeln!(err, "error [{}]: {e}", e.code());
        }
    }
    if ok {
        0
    } else {
        1
    }
}
