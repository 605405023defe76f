use std::sync::Arc;

use super::api::*;
use super::*;
use crate::cardsim::{mutual_authenticate, OfflineDelta, VirtualCard};
use crate::clock::{Clock, ManualClock};
use crate::demo::{self, seed_demo};
use crate::ledger::{Ledger, TxKind};
use crate::money::Money;
use crate::protocol::{decode, encode, Envelope, Method};
use crate::AccountId;

struct Rig {
    clock: Arc<ManualClock>,
    service: Service,
}

fn rig() -> Rig {
    let clock = Arc::new(ManualClock::sample());
    let ledger = Arc::new(Ledger::in_memory(clock.clone()));
    seed_demo(&ledger).unwrap();
    let service = Service::new(ledger, clock.clone(), &Config::default(), AuditLog::in_memory());
    Rig { clock, service }
}

impl Rig {
    fn login(&self, user: &str, pass: &str) -> String {
        self.service
            .login(&LoginRequest {
                username: user.into(),
                password: pass.into(),
            })
            .unwrap()
            .token
    }

    fn merchant(&self) -> String {
        self.login(demo::MERCHANT_USERNAME, demo::MERCHANT_PASSWORD)
    }

    fn insert_card(&self, token: &str) -> VirtualCard {
        let record = self.service.ledger().card(&demo::CARDHOLDER_CARD.into()).unwrap();
        let card = VirtualCard::issue(&record);
        let channel = LocalChannel {
            service: &self.service,
            token,
        };
        let session = mutual_authenticate(&card, &channel, self.clock.now()).unwrap();
        assert!(session.card_authenticated && session.server_authenticated);
        card
    }

    fn call(&self, token: &str, request: &Envelope) -> Envelope {
        let reply = self.service.rpc(Some(token), &encode(request));
        assert_eq!(reply.status, 200, "{}", reply.body);
        decode(&reply.body).unwrap()
    }

    fn req(&self, method: Method) -> Envelope {
        Envelope::request(method, self.clock.now())
    }

    fn balance(&self, account: &str) -> Money {
        self.service.ledger().balance(&AccountId::new(account)).unwrap()
    }

    fn potc(&self, token: &str, amount: i64, pin: &str) -> Vec<Envelope> {
        let entry = self
            .req(Method::EnterAmount)
            .with_to("Merchant")
            .with_from("User")
            .with_amount(Money::from_rupees(amount))
            .with_extra(TRANSACTION_KEY, "potc");
        let mut out = vec![self.call(token, &entry)];
        out.push(self.call(token, &self.req(Method::EnterPin).with_text("Please insert PIN:")));
        out.push(self.call(token, &self.req(Method::VerifyPin).with_pin(pin)));
        let transmit = Envelope {
            method: Method::Transmit,
            extras: Default::default(),
            ..entry
        };
        out.push(self.call(token, &transmit));
        out
    }
}

#[test]
fn login_is_uniform() {
    let r = rig();
    assert!(r.service.login(&LoginRequest {
        username: "1".into(),
        password: "1".into()
    })
    .unwrap()
    .admin);
    let wrong = r
        .service
        .login(&LoginRequest {
            username: "1".into(),
            password: "2".into(),
        })
        .unwrap_err();
    let unknown = r
        .service
        .login(&LoginRequest {
            username: "nobody".into(),
            password: "2".into(),
        })
        .unwrap_err();
    assert_eq!((wrong.status(), wrong.body()), (unknown.status(), unknown.body()));
}

#[test]
fn tokens_are_distinct_128_bit_hex() {
    let r = rig();
    let a = r.merchant();
    let b = r.merchant();
    assert_ne!(a, b);
    assert_eq!(a.len(), 32);
    assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn expired_and_unknown_tokens_look_the_same() {
    let r = rig();
    let token = r.merchant();
    let probe = encode(&r.req(Method::VerifyAccount).with_to("Merchant"));
    assert_eq!(r.service.rpc(Some(&token), &probe).status, 200);
    r.clock.advance(15 * 60 + 1);
    let expired = r.service.rpc(Some(&token), &probe);
    let unknown = r.service.rpc(Some("00"), &probe);
    let missing = r.service.rpc(None, &probe);
    assert_eq!(expired.status, 401);
    assert_eq!(expired, unknown);
    assert_eq!(expired, missing);
    assert!(r.service.sessions().is_empty());
}

#[test]
fn sweep_drops_expired_sessions() {
    let r = rig();
    r.merchant();
    r.clock.advance(60);
    r.merchant();
    r.clock.advance(15 * 60 - 30);
    assert_eq!(r.service.sweep_sessions(), 1);
    assert_eq!(r.service.sessions().len(), 1);
}

#[test]
fn protocol_errors_never_reach_the_ledger() {
    let r = rig();
    let token = r.merchant();
    let before = r.service.ledger().journal_len();
    let reply = r.service.rpc(Some(&token), r#"{"Amount": "100", "To Account": "Merchant"}"#);
    assert_eq!(reply.status, 400);
    assert_eq!(reply.body, r#"{"Error":"Internal: bad request"}"#);
    let reply = r.service.rpc(Some(&token), r#"{"Method": "Refund"}"#);
    assert_eq!(reply.body, r#"{"Error":"Internal: unknown method"}"#);
    let reply = r.service.rpc(Some(&token), "not json at all {");
    assert_eq!(reply.status, 400);
    assert_eq!(r.service.ledger().journal_len(), before);
}

#[test]
fn verify_account() {
    let r = rig();
    let token = r.merchant();
    let ok = r.call(&token, &r.req(Method::VerifyAccount).with_to("Merchant"));
    assert_eq!(ok.result.as_deref(), Some("Verified"));
    let missing = r.call(&token, &r.req(Method::VerifyAccount).with_to("Ghost"));
    assert_eq!(missing.result.as_deref(), Some("NotVerified"));
    assert_eq!(missing.error.as_deref(), Some("Account Not Found"));
}

#[test]
fn pay_over_counter_end_to_end() {
    let r = rig();
    let token = r.merchant();
    r.insert_card(&token);
    let replies = r.potc(&token, 100, demo::CARDHOLDER_PIN);
    let results: Vec<_> = replies.iter().map(|e| e.result.clone().unwrap()).collect();
    assert_eq!(results, ["OK", "PIN", "Verified", "OK"]);
    assert_eq!(replies[3].error, None);
    assert_eq!(r.balance("User"), Money::from_rupees(20));

    // insufficient on the second try
    let replies = r.potc(&token, 100, demo::CARDHOLDER_PIN);
    assert_eq!(replies[3].result.as_deref(), Some("NotTransmitted"));
    assert_eq!(replies[3].error.as_deref(), Some("Account Has Not Enough Cash"));
}

#[test]
fn transactions_need_a_card() {
    let r = rig();
    let token = r.merchant();
    let entry = r
        .req(Method::EnterAmount)
        .with_to("Merchant")
        .with_amount(Money::from_rupees(10));
    let resp = r.call(&token, &entry);
    assert_eq!(resp.result.as_deref(), Some("NotOK"));
    assert_eq!(resp.error.as_deref(), Some("Internal: card not authenticated"));
    let transmit = r.call(
        &token,
        &r.req(Method::Transmit).with_to("Merchant").with_amount(Money::from_rupees(10)),
    );
    assert_eq!(transmit.result.as_deref(), Some("NotTransmitted"));
    assert_eq!(r.service.ledger().journal_len(), 1);
}

#[test]
fn failed_card_auth_detaches_the_card() {
    let r = rig();
    let token = r.merchant();
    r.insert_card(&token);
    let challenge = r
        .service
        .card_challenge(Some(&token), &ChallengeRequest { card_id: "1".into() })
        .unwrap();
    let resp = r
        .service
        .card_authenticate(
            Some(&token),
            &AuthenticateRequest {
                card_id: "1".into(),
                server_nonce: challenge.nonce,
                card_mac: "00".repeat(32),
                card_nonce: "11".repeat(16),
            },
        )
        .unwrap();
    assert!(!resp.card_accepted);
    assert_eq!(resp.server_mac, None);
    let entry = r.req(Method::EnterAmount).with_to("Merchant").with_amount(Money::from_rupees(1));
    assert_eq!(r.call(&token, &entry).result.as_deref(), Some("NotOK"));
}

#[test]
fn card_endpoints_need_login() {
    let r = rig();
    let err = r
        .service
        .card_challenge(None, &ChallengeRequest { card_id: "1".into() })
        .unwrap_err();
    assert_eq!(err.status(), 401);
    let err = r
        .service
        .card_sync(Some("bogus"), &SyncRequest {
            card_id: "1".into(),
            deltas: vec![],
        })
        .unwrap_err();
    assert_eq!(err.status(), 401);
}

#[test]
fn card_sync_through_service() {
    let r = rig();
    let token = r.merchant();
    let sync = |deltas: Vec<OfflineDelta>| {
        r.service.card_sync(Some(&token), &SyncRequest {
            card_id: "1".into(),
            deltas,
        })
    };
    assert_eq!(sync(vec![]).unwrap_err().status(), 403);
    let mut card = r.insert_card(&token);
    card.record_offline(Money::from_rupees(-100), TxKind::Withdraw, r.clock.now())
        .unwrap();
    let resp = sync(card.pending.clone()).unwrap();
    assert_eq!(resp.cached_balance_minor, 2_000);
    assert_eq!(resp.watermark, 1);
    assert_eq!(resp.applied_tx_ids.len(), 1);
    let again = sync(card.pending.clone()).unwrap();
    assert_eq!(again.skipped, vec![1]);
    assert_eq!(r.balance("User"), Money::from_rupees(20));
}

#[test]
fn add_customer_is_admin_only_and_audited_redacted() {
    let r = rig();
    let form = |req: Envelope| {
        req.with_extra(form::NAME, "Saad")
            .with_extra(form::ACCOUNT, "Saad-1")
            .with_extra(form::BALANCE, "50")
            .with_extra(form::USERNAME, "saad")
            .with_extra(form::PASSWORD, "hunter2")
            .with_extra(form::PIN, "5678")
    };
    let merchant = r.merchant();
    let refused = r.call(&merchant, &form(r.req(Method::AddCustomer)));
    assert_eq!(refused.error.as_deref(), Some("Internal: not permitted"));

    let admin = r.login("1", "1");
    let ok = r.call(&admin, &form(r.req(Method::AddCustomer)));
    assert_eq!(ok.result.as_deref(), Some("OK"));
    assert_eq!(ok.extra(form::CARD_KEY).map(str::len), Some(64));
    assert_eq!(r.balance("Saad-1"), Money::from_rupees(50));
    assert_eq!(r.service.ledger().total(), 0);

    let dup = r.call(&admin, &form(r.req(Method::AddCustomer)));
    assert_eq!(dup.result.as_deref(), Some("NotOK"));

    let log = r.service.audit().entries().unwrap();
    let text = serde_json::to_string(&log).unwrap();
    assert!(!text.contains("hunter2"));
    assert!(!text.contains("5678"));
    assert!(!text.contains(ok.extra(form::CARD_KEY).unwrap()));
    assert!(text.contains("****"));
}

#[test]
fn pins_never_reach_the_audit_log() {
    let r = rig();
    let token = r.merchant();
    r.insert_card(&token);
    r.potc(&token, 10, "1234");
    r.potc(&token, 10, "9876");
    let text = serde_json::to_string(&r.service.audit().entries().unwrap()).unwrap();
    assert!(!text.contains("1234"));
    assert!(!text.contains("9876"));
}

#[test]
fn cancel_is_refused_to_the_payer() {
    let r = rig();
    let merchant = r.merchant();
    r.insert_card(&merchant);
    r.potc(&merchant, 100, "1234");
    let cancel = r
        .req(Method::CancelTransaction)
        .with_from("User")
        .with_to("Merchant")
        .with_amount(Money::from_rupees(100));

    let rum = r.login(demo::CARDHOLDER_USERNAME, demo::CARDHOLDER_PASSWORD);
    let refused = r.call(&rum, &cancel);
    assert_eq!(refused.error.as_deref(), Some("Internal: not permitted"));

    let ok = r.call(&merchant, &cancel);
    assert_eq!(ok.result.as_deref(), Some("OK"));
    assert_eq!(r.balance("User"), Money::from_rupees(120));
    let again = r.call(&merchant, &cancel);
    assert_eq!(again.result.as_deref(), Some("NotOK"));
    assert_eq!(again.error.as_deref(), Some("Internal: no matching transaction"));
}

#[test]
fn standalone_verify_pin() {
    let r = rig();
    let token = r.merchant();
    let no_card = r.call(&token, &r.req(Method::VerifyPin).with_pin("1234"));
    assert_eq!(no_card.result.as_deref(), Some("NotVerified"));
    r.insert_card(&token);
    let ok = r.call(&token, &r.req(Method::VerifyPin).with_pin("1234"));
    assert_eq!(ok.result.as_deref(), Some("Verified"));
    let bad = r.call(&token, &r.req(Method::VerifyPin).with_pin("1111"));
    assert_eq!(bad.error.as_deref(), Some("Verification Unsuccessful"));
}

#[test]
fn rpc_login_returns_a_token() {
    let r = rig();
    let req = r
        .req(Method::Login)
        .with_extra(USERNAME_KEY, "1")
        .with_extra(PASSWORD_KEY, "1");
    let resp = decode(&r.service.rpc(None, &encode(&req)).body).unwrap();
    assert_eq!(resp.result.as_deref(), Some("OK"));
    let token = resp.extra(TOKEN_KEY).unwrap();
    let probe = r.call(token, &r.req(Method::VerifyAccount).with_to("User"));
    assert_eq!(probe.result.as_deref(), Some("Verified"));
    let bad = r.req(Method::Login).with_extra(USERNAME_KEY, "1");
    let resp = decode(&r.service.rpc(None, &encode(&bad)).body).unwrap();
    assert_eq!(resp.error.as_deref(), Some("Verification Unsuccessful"));
}

#[test]
fn audit_counts_every_request_under_load() {
    let r = Arc::new(rig());
    let token = r.merchant();
    std::thread::scope(|s| {
        for t in 0..8 {
            let r = r.clone();
            let token = token.clone();
            s.spawn(move || {
                for i in 0..50 {
                    let body = match (t + i) % 3 {
                        0 => encode(&r.req(Method::VerifyAccount).with_to("User")),
                        1 => "{garbage".to_string(),
                        _ => encode(&r.req(Method::Transmit)),
                    };
                    let tok = if i % 7 == 0 { None } else { Some(token.as_str()) };
                    r.service.rpc(tok, &body);
                }
            });
        }
    });
    assert_eq!(r.service.audit().len(), 400);
    let entries = r.service.audit().entries().unwrap();
    let mut seqs: Vec<u64> = entries.iter().map(|e| e.seq).collect();
    seqs.sort();
    assert_eq!(seqs, (1..=400).collect::<Vec<_>>());
}

#[test]
fn every_ok_reply_decodes() {
    let r = rig();
    let token = r.merchant();
    r.insert_card(&token);
    let bodies = [
        encode(&r.req(Method::VerifyAccount).with_to("User")),
        encode(&r.req(Method::EnterPin)),
        encode(&r.req(Method::CancelTransaction)),
        encode(&r.req(Method::AddCustomer)),
        encode(&r.req(Method::EnterAmount).with_to(" currency detector").with_amount(Money::from_rupees(125))),
    ];
    for body in bodies {
        let reply = r.service.rpc(Some(&token), &body);
        assert_eq!(reply.status, 200);
        assert!(decode(&reply.body).is_ok(), "{}", reply.body);
    }
}

#[test]
fn health_reports_journal_length() {
    let r = rig();
    let h = r.service.health();
    assert_eq!(h.status, "ok");
    assert_eq!(h.journal_length, 1);
    assert!(h.build.starts_with("cardpay/"));
}
