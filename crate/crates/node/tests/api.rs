mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sugarchain_core::identity::Role;
use sugarchain_core::supplychain::{DeliveryConfirmation, LotEvent, LotRegistration, Transfer};
use sugarchain_core::{Digest, Keypair, UserId};
use sugarchain_node::api::{self, router};
use sugarchain_node::service::SubmitRequest;
use sugarchain_node::{NodeError, NodeService};
use tower::ServiceExt;

struct Api {
    app: Router,
    _dir: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = common::dev_config(dir.path());
        NodeService::init(&cfg).unwrap();
        let svc = Arc::new(NodeService::open(cfg).unwrap());
        Api {
            app: router(svc),
            _dir: dir,
        }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
        let mut req = Request::builder()
            .method(method)
            .uri(uri)
            .header("x-request-id", "req-1");
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        // envelope invariant
        assert_eq!(v["request_id"], "req-1");
        assert_eq!(v["ok"].as_bool().unwrap(), status == StatusCode::OK, "{v}");
        assert_ne!(v.get("result").is_some(), v.get("error").is_some(), "{v}");
        (status, v)
    }

    async fn register(&self, name: &str, role: Role) -> (UserId, Keypair) {
        let (s, v) = self
            .call("POST", "/v1/register", Some(serde_json::to_value(common::form(name, role)).unwrap()), None)
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        let key = Keypair::from_secret_hex(v["result"]["secret_key"].as_str().unwrap()).unwrap();
        (key.user_id(), key)
    }

    async fn login(&self, user: &UserId, name: &str) -> String {
        let (s, v) = self
            .call("POST", "/v1/login", Some(json!({"user_id": user, "password": format!("{name}-password")})), None)
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v["result"]["session"]["session_id"].as_str().unwrap().to_owned()
    }

    async fn submit(&self, token: &str, key: &Keypair, ev: LotEvent, ts: u64) -> (StatusCode, Value) {
        let req = SubmitRequest::sign(key, ev, ts);
        self.call("POST", "/v1/tx", Some(serde_json::to_value(req).unwrap()), Some(token)).await
    }
}

fn lot_registration(qty: u64, price: u64) -> LotEvent {
    LotEvent::LotRegistered(LotRegistration {
        quantity_kg: qty,
        farm_location: "Kolhapur".into(),
        price_paise_per_kg: price,
        mill_info: None,
        seed_supplier: None,
        quality: None,
    })
}

fn digest(v: &Value) -> Digest {
    Digest::from_hex(v.as_str().unwrap()).unwrap()
}

#[tokio::test]
async fn lot_lifecycle_over_http() {
    let api = Api::new();
    let (farmer, fkey) = api.register("farmer", Role::Farmer).await;
    let (mill, mkey) = api.register("mill", Role::SugarMill).await;
    let ft = api.login(&farmer, "farmer").await;
    let mt = api.login(&mill, "mill").await;

    let (s, v) = api.submit(&ft, &fkey, lot_registration(5000, 400), 1).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let lot = digest(&v["result"]["tx_id"]);

    let transfer = LotEvent::Transfer(Transfer {
        lot_id: lot,
        actor_from: farmer,
        actor_to: mill,
        price_paise_per_kg: 400,
        mill_info: Some("Unit 2".into()),
    });
    let (s, v) = api.submit(&ft, &fkey, transfer, 2).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let deliver = LotEvent::DeliveryConfirmed(DeliveryConfirmation { lot_id: lot, leg: 0 });
    let (s, v) = api.submit(&mt, &mkey, deliver, 3).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let delivered_at = v["result"]["height"].as_u64().unwrap();
    let settled = &v["result"]["settlements"][0];
    assert_eq!(settled["amount_paise"], 2_000_000);
    assert_eq!(settled["height"].as_u64().unwrap(), delivered_at + 1);

    let (s, v) = api.call("GET", &format!("/v1/lot/{lot}/trace"), None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["custodian_role"], "sugar_mill");
    assert_eq!(v["result"]["legs"][0]["amount_paise"], 2_000_000);
    let (_, v) = api.call("GET", &format!("/v1/lot/{lot}/latency"), None, None).await;
    assert_eq!(v["result"]["settled"][0]["blocks"], 1);

    let (s, v) = api.call("GET", &format!("/v1/tx/{lot}"), None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["transaction"]["payload"]["kind"], "lot_registered");

    let (_, v) = api.call("GET", "/v1/chain/verify", None, None).await;
    assert_eq!(v["result"]["status"], "ok");
    let height = v["result"]["height"].as_u64().unwrap();
    let (_, v) = api.call("GET", "/v1/chain/blocks?from=1&to=2", None, None).await;
    assert_eq!(v["result"].as_array().unwrap().len(), 2);
    let (s, v) = api.call("GET", &format!("/v1/chain/blocks?from={}", height + 1), None, None).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BadRequest")));

    // illegal follow-ups map to their module error codes
    let (s, v) = api.submit(&ft, &fkey, LotEvent::DeliveryConfirmed(DeliveryConfirmation { lot_id: lot, leg: 0 }), 4).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["error"]["code"], "IllegalTransition");
    let (s, v) = api.call("GET", &format!("/v1/lot/{}/trace", Digest([3; 32])), None, None).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownLot")));
}

#[tokio::test]
async fn mutating_endpoints_require_a_session() {
    let api = Api::new();
    let (farmer, fkey) = api.register("farmer", Role::Farmer).await;
    let (other, _) = api.register("other", Role::Farmer).await;
    let other_token = api.login(&other, "other").await;
    let req = serde_json::to_value(SubmitRequest::sign(&fkey, lot_registration(1, 1), 1)).unwrap();

    for token in [None, Some("zz"), Some("00000000000000000000000000000000")] {
        let (s, v) = api.call("POST", "/v1/tx", Some(req.clone()), token).await;
        assert_eq!(s, StatusCode::UNAUTHORIZED, "{token:?}");
        assert_eq!(v["error"]["code"], "SessionUnknown");
    }
    // a session belonging to someone else
    let (s, v) = api.call("POST", "/v1/tx", Some(req.clone()), Some(&other_token)).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::FORBIDDEN, Some("Unauthorized")));
    // no session: body is not even parsed
    let (s, _) = api.call("POST", "/v1/tx", Some(json!({"junk": true})), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);

    // credential endpoints check their own credentials
    let (s, v) = api
        .call("POST", "/v1/login", Some(json!({"user_id": farmer, "password": "nope-nope"})), None)
        .await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("BadPassword")));
    let (s, v) = api
        .call(
            "POST",
            "/v1/recover",
            Some(json!({"user_id": farmer, "answers": ["a1", "a2", "wrong"], "new_password": "brand-new-pw"})),
            None,
        )
        .await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("RecoveryFailed")));
    let (s, v) = api
        .call("POST", "/v1/register", Some(serde_json::to_value(common::form("farmer", Role::Validator)).unwrap()), None)
        .await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::FORBIDDEN, Some("Unauthorized")));
    let (s, v) = api.call("POST", "/v1/register", Some(json!({"name": 1})), None).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BadRequest")));

    // a tampered signature is rejected even with a valid session
    let token = api.login(&farmer, "farmer").await;
    let mut bad = req.clone();
    bad["timestamp"] = json!(2);
    let (s, v) = api.call("POST", "/v1/tx", Some(bad), Some(&token)).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("BadSignature")));
    let (s, _) = api.call("POST", "/v1/tx", Some(req), Some(&token)).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn recovery_over_http() {
    let api = Api::new();
    let (farmer, _) = api.register("farmer", Role::Farmer).await;
    let (s, v) = api
        .call(
            "POST",
            "/v1/recover",
            Some(json!({"user_id": farmer, "answers": [" A1", "a2", "a3 "], "new_password": "brand-new-pw"})),
            None,
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, _) = api
        .call("POST", "/v1/login", Some(json!({"user_id": farmer, "password": "brand-new-pw"})), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = api
        .call("POST", "/v1/login", Some(json!({"user_id": farmer, "password": "farmer-password"})), None)
        .await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, v) = api.call("POST", "/v1/register", Some(serde_json::to_value(common::form("farmer", Role::Farmer)).unwrap()), None).await;
    // same form, fresh key: a second account is fine
    assert_eq!(s, StatusCode::OK, "{v}");
}

#[tokio::test]
async fn survey_and_unknown_routes() {
    let api = Api::new();
    let (s, v) = api.call("GET", "/v1/survey/report", None, None).await;
    assert_eq!(s, StatusCode::OK);
    let report = v["result"]["report"].as_str().unwrap();
    assert!(report.starts_with("sugarchain-survey-report v1\n"));
    assert!(report.contains("  gt10 27/40 67.5%"));
    let (s, v) = api.call("GET", "/v2/anything", None, None).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("NotFound")));
    let (s, v) = api.call("GET", "/v1/tx/xyz", None, None).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BadRequest")));
}

#[tokio::test]
async fn second_bind_reports_port_in_use() {
    let first = api::bind("127.0.0.1:0").await.unwrap();
    let addr = first.local_addr().unwrap().to_string();
    match api::bind(&addr).await {
        Err(NodeError::PortInUse(a)) => assert_eq!(a, addr),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn serves_real_connections_and_shuts_down() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::dev_config(dir.path());
    NodeService::init(&cfg).unwrap();
    let svc = Arc::new(NodeService::open(cfg).unwrap());
    let listener = api::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(api::serve(svc, listener, async {
        let _ = rx.await;
    }));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /v1/status HTTP/1.1\r\nhost: x\r\nconnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    assert!(buf.contains("\"height\":0"));
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
