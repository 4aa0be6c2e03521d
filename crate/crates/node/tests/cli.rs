mod common;

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sugarchain_core::identity::Role;
use sugarchain_core::supplychain::{DeliveryConfirmation, LotEvent, LotRegistration, Transfer};
use sugarchain_core::{Digest, Keypair, UserId};
use sugarchain_node::api::router;
use sugarchain_node::service::SubmitRequest;
use sugarchain_node::NodeService;
use tower::ServiceExt;

use common::cli;

fn write_config(dir: &Path) -> String {
    let path = dir.join("node.toml");
    std::fs::write(
        &path,
        format!(
            "data_dir = {:?}\nkdf_iterations = 32\ndev_seed = 7\n",
            dir.join("data").display().to_string()
        ),
    )
    .unwrap();
    path.display().to_string()
}

fn json_ok(args: &[&str]) -> Value {
    let mut all = vec!["--format", "json"];
    all.extend_from_slice(args);
    let (code, out, err) = cli(&all);
    assert_eq!(code, 0, "{args:?}: {out}{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["ok"], true);
    v["result"].clone()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let c = cfg.as_str();

    let (code, _, err) = cli(&["--config", c, "trace", "00"]);
    assert_eq!(code, 2, "{err}");
    assert_eq!(cli(&["no-such-command"]).0, 2);
    assert_eq!(cli(&["--format", "yaml", "status"]).0, 2);
    assert_eq!(cli(&["--help"]).0, 0);

    let (code, _, err) = cli(&["--config", c, "status"]);
    assert_eq!(code, 1);
    assert!(err.contains("NotInitialized"), "{err}");

    assert_eq!(cli(&["--config", c, "init"]).0, 0);
    let (code, _, err) = cli(&["--config", c, "init"]);
    assert_eq!((code, err.contains("AlreadyInitialized")), (1, true), "{err}");

    let (code, out, _) = cli(&["--config", c, "verify"]);
    assert_eq!((code, out.trim()), (0, "chain ok height=0"));

    let unknown = Digest([5; 32]).to_string();
    let (code, _, err) = cli(&["--config", c, "trace", &unknown]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown lot"), "{err}");

    let (code, out, _) = cli(&["--config", c, "--format", "json", "trace", &unknown]);
    assert_eq!(code, 1);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!((v["ok"].as_bool(), v["error"]["code"].as_str()), (Some(false), Some("UnknownLot")));

    let (code, _, err) = cli(&["--config", "/nonexistent/node.toml", "status"]);
    assert_eq!((code, err.contains("ConfigInvalid")), (1, true), "{err}");
}

#[test]
fn store_corruption_refuses_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert_eq!(cli(&["--config", &cfg, "init"]).0, 0);
    let key = dir.path().join("f.key");
    let (code, out, err) = cli(&[
        "--config", &cfg, "register", "--name", "F", "--email", "f@x.in", "--password", "password-f",
        "--role", "farmer", "--recovery", "a=1", "--recovery", "b=2", "--recovery", "c=3", "--key-out",
        key.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(!out.contains("secret_key"));
    assert_eq!(cli(&["--config", &cfg, "verify"]).1.trim(), "chain ok height=1");

    let log = dir.path().join("data").join(sugarchain_node::store::BLOCKS_FILE);
    let mut bytes = std::fs::read(&log).unwrap();
    bytes[3] = if bytes[3] == b'A' { b'B' } else { b'A' };
    std::fs::write(&log, &bytes).unwrap();
    for args in [&["verify"][..], &["status"], &["blocks"]] {
        let mut all = vec!["--config", cfg.as_str()];
        all.extend_from_slice(args);
        let (code, _, err) = cli(&all);
        assert_eq!(code, 1);
        assert!(err.contains("CorruptStore"), "{err}");
    }
}

#[test]
fn survey_and_simulate_commands() {
    let (code, out, _) = cli(&["survey", "report"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("sugarchain-survey-report v1\nrecords 40\n"));
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    std::fs::write(&csv, sugarchain_core::survey::FIXTURE_CSV).unwrap();
    let (code, from_file, _) = cli(&["survey", "report", csv.to_str().unwrap()]);
    assert_eq!((code, from_file), (0, out));
    std::fs::write(&csv, "farmer_id,q1\nx,gt10\n").unwrap();
    let (code, _, err) = cli(&["survey", "report", csv.to_str().unwrap()]);
    assert_eq!((code, err.contains("SchemaMismatch")), (1, true), "{err}");

    let sim = dir.path().join("sim.conf");
    std::fs::write(&sim, "node_count = 4\nrng_seed = 3\nlatency_max = 2\n").unwrap();
    let (code, out, err) = cli(&["simulate", sim.to_str().unwrap(), "--txs", "30"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("sugarchain-sim-report v1\n"));
    let v = json_ok(&["simulate", sim.to_str().unwrap(), "--txs", "30"]);
    assert_eq!(v["converged"], true);
    std::fs::write(&sim, "node_count = 0\n").unwrap();
    assert_eq!(cli(&["simulate", sim.to_str().unwrap()]).0, 1);
}

#[test]
fn serve_on_busy_port_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert_eq!(cli(&["--config", &cfg, "init"]).0, 0);
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = busy.local_addr().unwrap().to_string();
    let (code, _, err) = cli(&["--config", &cfg, "serve", "--listen", &addr]);
    assert_eq!(code, 1);
    assert!(err.contains("PortInUse"), "{err}");
}

// --- API/CLI parity --------------------------------------------------------

enum Step {
    Register(&'static str, Role),
    Login(&'static str),
    Submit(&'static str, fn(&Ctx) -> LotEvent, u64),
    Recover(&'static str),
}

#[derive(Default)]
struct Ctx {
    users: std::collections::HashMap<&'static str, (UserId, Keypair, String)>,
    lot: Option<Digest>,
}

impl Ctx {
    fn id(&self, n: &str) -> UserId {
        self.users[n].0
    }
}

fn workload() -> Vec<Step> {
    use Step::*;
    vec![
        Register("farmer", Role::Farmer),
        Register("mill", Role::SugarMill),
        Register("dist", Role::Distributor),
        Login("farmer"),
        Login("mill"),
        Login("dist"),
        Submit(
            "farmer",
            |_| {
                LotEvent::LotRegistered(LotRegistration {
                    quantity_kg: 1200,
                    farm_location: "Sangli".into(),
                    price_paise_per_kg: 350,
                    mill_info: None,
                    seed_supplier: None,
                    quality: None,
                })
            },
            1,
        ),
        Submit(
            "farmer",
            |c| {
                LotEvent::Transfer(Transfer {
                    lot_id: c.lot.unwrap(),
                    actor_from: c.id("farmer"),
                    actor_to: c.id("mill"),
                    price_paise_per_kg: 350,
                    mill_info: None,
                })
            },
            2,
        ),
        Submit("mill", |c| LotEvent::DeliveryConfirmed(DeliveryConfirmation { lot_id: c.lot.unwrap(), leg: 0 }), 3),
        Submit(
            "mill",
            |c| {
                LotEvent::Transfer(Transfer {
                    lot_id: c.lot.unwrap(),
                    actor_from: c.id("mill"),
                    actor_to: c.id("dist"),
                    price_paise_per_kg: 420,
                    mill_info: Some("refined".into()),
                })
            },
            4,
        ),
        Submit("dist", |c| LotEvent::DeliveryConfirmed(DeliveryConfirmation { lot_id: c.lot.unwrap(), leg: 1 }), 5),
        Recover("farmer"),
    ]
}

fn run_cli_path(dir: &Path) -> (String, u64) {
    let cfg = write_config(dir);
    let c = cfg.as_str();
    assert_eq!(cli(&["--config", c, "init"]).0, 0);
    let mut ctx = Ctx::default();
    let mut sessions = std::collections::HashMap::new();
    for step in workload() {
        match step {
            Step::Register(name, role) => {
                let f = common::form(name, role);
                let key = dir.join(format!("{name}.key"));
                let recovery: Vec<String> = f.recovery.iter().map(|(q, a)| format!("{q}={a}")).collect();
                let r = json_ok(&[
                    "--config", c, "register", "--name", &f.name, "--email", &f.email, "--phone", &f.phone,
                    "--password", &f.password, "--role", role.as_str(), "--recovery", &recovery[0],
                    "--recovery", &recovery[1], "--recovery", &recovery[2], "--key-out", key.to_str().unwrap(),
                ]);
                let kp = Keypair::from_secret_hex(std::fs::read_to_string(&key).unwrap().trim()).unwrap();
                assert_eq!(r["user_id"], json!(kp.user_id()));
                ctx.users.insert(name, (kp.user_id(), kp, key.display().to_string()));
            }
            Step::Login(name) => {
                let id = ctx.id(name).to_string();
                let r = json_ok(&["--config", c, "login", "--user", &id, "--password", &format!("{name}-password")]);
                sessions.insert(name, r["session"]["session_id"].as_str().unwrap().to_owned());
            }
            Step::Submit(name, ev, ts) => {
                let event = serde_json::to_string(&ev(&ctx)).unwrap();
                let r = json_ok(&[
                    "--config", c, "submit", "--session", &sessions[name], "--key", &ctx.users[name].2, "--event",
                    &event, "--timestamp", &ts.to_string(),
                ]);
                if ctx.lot.is_none() {
                    ctx.lot = Some(Digest::from_hex(r["tx_id"].as_str().unwrap()).unwrap());
                }
            }
            Step::Recover(name) => {
                let id = ctx.id(name).to_string();
                json_ok(&[
                    "--config", c, "recover", "--user", &id, "--answer", "a1", "a2", "a3",
                    "--new-password", "after-recovery",
                ]);
            }
        }
    }
    let s = json_ok(&["--config", c, "status"]);
    (s["tip"].as_str().unwrap().to_owned(), s["height"].as_u64().unwrap())
}

async fn post(app: &axum::Router, uri: &str, body: Value, token: Option<&str>) -> Value {
    let mut req = Request::builder().method("POST").uri(uri).header("content-type", "application/json");
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let resp = app.clone().oneshot(req.body(Body::from(body.to_string())).unwrap()).await.unwrap();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["ok"], true, "{uri}: {v}");
    v["result"].clone()
}

async fn run_api_path(dir: &Path) -> (String, u64) {
    let cfg = common::dev_config(&dir.join("data"));
    NodeService::init(&cfg).unwrap();
    let app = router(Arc::new(NodeService::open(cfg).unwrap()));
    let mut ctx = Ctx::default();
    let mut sessions = std::collections::HashMap::new();
    for step in workload() {
        match step {
            Step::Register(name, role) => {
                let r = post(&app, "/v1/register", serde_json::to_value(common::form(name, role)).unwrap(), None).await;
                let kp = Keypair::from_secret_hex(r["secret_key"].as_str().unwrap()).unwrap();
                ctx.users.insert(name, (kp.user_id(), kp, String::new()));
            }
            Step::Login(name) => {
                let body = json!({"user_id": ctx.id(name), "password": format!("{name}-password")});
                let r = post(&app, "/v1/login", body, None).await;
                sessions.insert(name, r["session"]["session_id"].as_str().unwrap().to_owned());
            }
            Step::Submit(name, ev, ts) => {
                let req = SubmitRequest::sign(&ctx.users[name].1, ev(&ctx), ts);
                let r = post(&app, "/v1/tx", serde_json::to_value(req).unwrap(), Some(&sessions[name])).await;
                if ctx.lot.is_none() {
                    ctx.lot = Some(Digest::from_hex(r["tx_id"].as_str().unwrap()).unwrap());
                }
            }
            Step::Recover(name) => {
                let body = json!({"user_id": ctx.id(name), "answers": ["a1", "a2", "a3"], "new_password": "after-recovery"});
                post(&app, "/v1/recover", body, None).await;
            }
        }
    }
    let req = Request::builder().uri("/v1/status").body(Body::empty()).unwrap();
    let bytes = app.oneshot(req).await.unwrap().into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    (v["result"]["tip"].as_str().unwrap().to_owned(), v["result"]["height"].as_u64().unwrap())
}

#[tokio::test]
async fn api_and_cli_reach_the_same_state() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cli_dir = a.path().to_path_buf();
    let via_cli = tokio::task::spawn_blocking(move || run_cli_path(&cli_dir)).await.unwrap();
    let via_api = run_api_path(b.path()).await;
    assert_eq!(via_cli, via_api);
    // 3 registrations, 5 events, 2 settlements, 1 rotation
    assert_eq!(via_cli.1, 11);
}
