//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line; the
//! test fails if any criterion does.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::Instant;

use cardpay_core::cardsim::{mutual_authenticate, AuthAnswer, Authenticator, CardError, CardSession, Mac, Nonce, ServerChannel, VirtualCard};
use cardpay_core::ledger::{CustomerProfile, NewCustomer, SecretKey, TxKind, JOURNAL_FILE};
use cardpay_core::protocol::{decode_transcript, wire_errors};
use cardpay_core::server::{AuditLog, Config, LocalChannel, Service};
use cardpay_core::store::{replay, replay_prefix, FaultInjector, FaultPoint, StateHash, SyncPolicy};
use cardpay_core::workflows::{NoteBundle, Stage, Terminal, WorkflowKind, WorkflowRun, CASH_LABEL};
use cardpay_core::{decode, encode, AccountId, CardId, Clock, Envelope, Ledger, LedgerConfig, LedgerError, ManualClock, Method, Money};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/golden/messages")
}

fn customer(i: usize, rupees: i64) -> NewCustomer {
    NewCustomer {
        profile: CustomerProfile {
            name: format!("Customer {i}"),
            account_id: Some(format!("A{i}")),
            ..Default::default()
        },
        initial_balance: Money::from_rupees(rupees),
        username: format!("user{i}"),
        password: "pw".into(),
        pin: "1234".into(),
        admin: false,
        card_id: Some(format!("{i}")),
    }
}

fn account(i: usize) -> AccountId {
    AccountId::new(format!("A{i}"))
}

fn wire_conformance() -> Outcome {
    let required = [
        "OK",
        "Transmission Successful",
        "NotVerified",
        "NotTransmitted",
        "Verification Unsuccessful",
        "Account Not Found",
        "Account Has Not Enough Cash",
        "null",
    ];
    let mut seen = BTreeMap::new();
    let mut count = 0;
    let mut kinds = std::collections::BTreeSet::new();
    for entry in std::fs::read_dir(golden_dir()).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let env = decode(&text).map_err(|e| format!("{name}: {e}"))?;
        ensure!(encode(&env) == text, "{name} does not re-encode byte-identically");
        if env.is_response() {
            let error = env.error.clone().unwrap_or_else(|| "null".into());
            ensure!(wire_errors::is_conformant(&error), "{name}: error {error:?}");
            *seen.entry(error).or_insert(0) += 1;
            *seen.entry(env.result.clone().unwrap_or_default()).or_insert(0) += 1;
        }
        kinds.insert(name.split('_').next().unwrap().to_string());
        count += 1;
    }
    ensure!(kinds.len() == 4, "workflows covered: {kinds:?}");
    for s in required {
        ensure!(seen.contains_key(s), "no golden message carries {s:?}");
    }
    Ok(format!("{count} golden messages, {} distinct result/error strings", seen.len()))
}

/// Map-based reference ledger: balances plus the list of journaled
/// transfers, nothing else.
#[derive(Default)]
struct Oracle {
    balances: BTreeMap<String, i64>,
    customers: std::collections::BTreeSet<String>,
    records: Vec<(String, String, i64, bool, bool)>,
}

impl Oracle {
    fn new() -> Self {
        let mut o = Oracle::default();
        o.balances.insert("GENESIS".into(), 0);
        o.balances.insert("CASH".into(), 0);
        o
    }

    fn add(&mut self, account: &str, minor: i64) {
        self.customers.insert(account.into());
        self.balances.insert(account.into(), 0);
        if minor != 0 {
            self.transfer("GENESIS", account, minor, false).unwrap();
        }
    }

    fn transfer(&mut self, from: &str, to: &str, minor: i64, cancel: bool) -> Result<(), ()> {
        if minor <= 0 || from == to || !self.balances.contains_key(from) || !self.balances.contains_key(to) {
            return Err(());
        }
        if self.customers.contains(from) && self.balances[from] < minor {
            return Err(());
        }
        *self.balances.get_mut(from).unwrap() -= minor;
        *self.balances.get_mut(to).unwrap() += minor;
        self.records.push((from.into(), to.into(), minor, cancel, false));
        Ok(())
    }

    fn cancel(&mut self, from: &str, to: &str, minor: i64) -> Result<(), ()> {
        if minor <= 0 {
            return Err(());
        }
        let target = self
            .records
            .iter()
            .rposition(|(f, t, m, is_cancel, reversed)| !is_cancel && !reversed && f == from && t == to && *m == minor)
            .ok_or(())?;
        self.transfer(to, from, minor, true)?;
        self.records[target].4 = true;
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Op {
    Transfer(usize, usize, i64),
    Deposit(usize, i64),
    Withdraw(usize, i64),
    Cancel(usize, usize, i64),
    Unknown(usize, i64),
}

fn random_op(rng: &mut ChaCha8Rng, n: usize, history: &[(usize, usize, i64)]) -> Op {
    let amount = |rng: &mut ChaCha8Rng| rng.random_range(-20..400i64) * 100 + if rng.random_bool(0.2) { 50 } else { 0 };
    match rng.random_range(0..10) {
        0..=3 => Op::Transfer(rng.random_range(0..n), rng.random_range(0..n), amount(rng)),
        4 => Op::Deposit(rng.random_range(0..n), amount(rng)),
        5 => Op::Withdraw(rng.random_range(0..n), amount(rng)),
        6..=7 if !history.is_empty() => {
            let &(f, t, m) = history.choose(rng).unwrap();
            Op::Cancel(f, t, m)
        }
        8 => Op::Cancel(rng.random_range(0..n), rng.random_range(0..n), amount(rng)),
        _ => Op::Unknown(rng.random_range(0..n), amount(rng)),
    }
}

fn apply_ledger(l: &Ledger, op: &Op) -> Result<TxKind, LedgerError> {
    let m = Money::from_minor;
    let r = match *op {
        Op::Transfer(f, t, a) => l.transfer(&account(f), &account(t), m(a), TxKind::AccountToAccount),
        Op::Deposit(t, a) => l.transfer(&AccountId::cash(), &account(t), m(a), TxKind::Deposit),
        Op::Withdraw(f, a) => l.transfer(&account(f), &AccountId::cash(), m(a), TxKind::Withdraw),
        Op::Cancel(f, t, a) => l.cancel(&account(f), &account(t), m(a)),
        Op::Unknown(f, a) => l.transfer(&account(f), &AccountId::new("Ghost"), m(a), TxKind::PayOverCounter),
    };
    r.map(|rec| rec.kind)
}

fn apply_oracle(o: &mut Oracle, op: &Op) -> Result<(), ()> {
    let a = |i: usize| format!("A{i}");
    match *op {
        Op::Transfer(f, t, m) => o.transfer(&a(f), &a(t), m, false),
        Op::Deposit(t, m) => o.transfer("CASH", &a(t), m, false),
        Op::Withdraw(f, m) => o.transfer(&a(f), "CASH", m, false),
        Op::Cancel(f, t, m) => o.cancel(&a(f), &a(t), m),
        Op::Unknown(f, m) => o.transfer(&a(f), "Ghost", m, false),
    }
}

fn history_entry(op: &Op) -> Option<(usize, usize, i64)> {
    match *op {
        Op::Transfer(f, t, m) => Some((f, t, m)),
        _ => None,
    }
}

struct LongRun {
    _dir: tempfile::TempDir,
    journal: PathBuf,
    ledger: Ledger,
    /// State hash right after record k was journaled.
    hashes: BTreeMap<u64, StateHash>,
    ops: usize,
    applied: usize,
}

fn long_run() -> Result<LongRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let config = LedgerConfig {
        sync: SyncPolicy::Flush,
        ..LedgerConfig::default()
    };
    let ledger = Ledger::open(&store, Arc::new(ManualClock::stepping(ManualClock::sample().now(), 7)), config)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut hashes = BTreeMap::new();
    for i in 0..10 {
        ledger.add_customer(customer(i, rng.random_range(0..500))).map_err(|e| e.to_string())?;
        hashes.insert(ledger.journal_len(), ledger.state_hash());
    }
    ensure!(ledger.total() == 0, "nonzero total after seeding");
    let mut history = Vec::new();
    let mut applied = 0;
    for step in 0..10_000 {
        let op = random_op(&mut rng, 10, &history);
        if apply_ledger(&ledger, &op).is_ok() {
            applied += 1;
            history.extend(history_entry(&op));
        }
        hashes.insert(ledger.journal_len(), ledger.state_hash());
        ensure!(ledger.total() == 0, "total {} after op {step} {op:?}", ledger.total());
    }
    Ok(LongRun {
        journal: store.join(JOURNAL_FILE),
        _dir: dir,
        ledger,
        hashes,
        ops: 10_000,
        applied,
    })
}

fn conservation(run: &Result<LongRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let mut total = 0i128;
    for account in run.ledger.accounts() {
        total += account.balance.minor_units as i128;
        if account.owner.is_some() {
            ensure!(account.balance.minor_units >= 0, "{} went negative", account.account_id);
        }
    }
    ensure!(total == 0, "final sum {total}");
    Ok(format!("{} ops ({} applied), sum 0 after every op", run.ops, run.applied))
}

fn replay_determinism(run: &Result<LongRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let state = replay(&run.journal).map_err(|e| e.to_string())?;
    ensure!(state.hash() == run.ledger.state_hash(), "full replay hash differs from live state");
    let len = run.ledger.journal_len();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut ks: Vec<u64> = (0..20).map(|_| rng.random_range(1..=len)).collect();
    ks[0] = 1;
    ks[19] = len;
    for &k in &ks {
        let prefix = replay_prefix(&run.journal, k).map_err(|e| e.to_string())?;
        ensure!(prefix.hash() == run.hashes[&k], "prefix {k} hash differs");
    }
    Ok(format!("{len} records, full replay and 20 prefixes match"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for trial in 0..1_000 {
        let ledger = Ledger::in_memory(Arc::new(ManualClock::sample()));
        let mut oracle = Oracle::new();
        let n = rng.random_range(2..6);
        for i in 0..n {
            let rupees = rng.random_range(0..300);
            ledger.add_customer(customer(i, rupees)).map_err(|e| e.to_string())?;
            oracle.add(&format!("A{i}"), rupees * 100);
        }
        let mut history = Vec::new();
        for _ in 0..rng.random_range(1..60) {
            let op = random_op(&mut rng, n, &history);
            let l = apply_ledger(&ledger, &op).is_ok();
            let o = apply_oracle(&mut oracle, &op).is_ok();
            ensure!(l == o, "trial {trial}: {op:?} ledger ok={l} oracle ok={o}");
            if l {
                history.extend(history_entry(&op));
            }
        }
        let live: BTreeMap<String, i64> = ledger
            .balances()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.minor_units))
            .collect();
        ensure!(live == oracle.balances, "trial {trial}: balances differ\n{live:?}\n{:?}", oracle.balances);
    }
    Ok("1000/1000 runs identical".into())
}

fn cancel_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for trial in 0..100 {
        let ledger = Ledger::in_memory(Arc::new(ManualClock::sample()));
        ledger.add_customer(customer(0, rng.random_range(1..1000))).map_err(|e| e.to_string())?;
        ledger.add_customer(customer(1, rng.random_range(0..1000))).map_err(|e| e.to_string())?;
        let (a, b) = (account(0), account(1));
        let before = (ledger.balance(&a).unwrap(), ledger.balance(&b).unwrap());
        let amount = Money::from_minor(rng.random_range(1..=before.0.minor_units));
        ledger
            .transfer(&a, &b, amount, TxKind::AccountToAccount)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        ledger.cancel(&a, &b, amount).map_err(|e| format!("trial {trial}: {e}"))?;
        let after = (ledger.balance(&a).unwrap(), ledger.balance(&b).unwrap());
        ensure!(before == after, "trial {trial}: {before:?} became {after:?}");
        ensure!(
            matches!(ledger.cancel(&a, &b, amount), Err(LedgerError::NoMatchingTransaction)),
            "trial {trial}: second cancel not refused"
        );
    }
    Ok("100/100 restored, repeat cancel refused".into())
}

fn crash_atomicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3 * 50);
    let mut trials = 0;
    for point in FaultPoint::ALL {
        for trial in 0..50 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let store = dir.path().join("store");
            let faults = FaultInjector::default();
            let open = |faults: FaultInjector| {
                Ledger::open(
                    &store,
                    Arc::new(ManualClock::sample()),
                    LedgerConfig {
                        sync: SyncPolicy::Flush,
                        faults,
                        ..LedgerConfig::default()
                    },
                )
                .map_err(|e| e.to_string())
            };
            let ledger = open(faults.clone())?;
            for i in 0..3 {
                ledger.add_customer(customer(i, rng.random_range(100..500))).map_err(|e| e.to_string())?;
            }
            let mut last = None;
            for _ in 0..rng.random_range(0..5) {
                let (f, t) = (rng.random_range(0..3), rng.random_range(0..3));
                let amount = Money::from_rupees(rng.random_range(1..50));
                if f != t && ledger.transfer(&account(f), &account(t), amount, TxKind::AccountToAccount).is_ok() {
                    last = Some((f, t, amount));
                }
            }
            let before = ledger.balances();
            let len = ledger.journal_len();
            // every other trial crashes a cancel instead of a transfer
            let (from, to, amount, is_cancel) = match last {
                Some((f, t, a)) if trial % 2 == 1 => (t, f, a, true),
                _ => (0, 1, Money::from_rupees(rng.random_range(1..100)), false),
            };
            faults.arm(point);
            let result = if is_cancel {
                ledger.cancel(&account(to), &account(from), amount)
            } else {
                ledger.transfer(&account(from), &account(to), amount, TxKind::AccountToAccount)
            };
            let acknowledged = result.is_ok();
            ensure!(acknowledged == (point == FaultPoint::PostAck), "{point:?}: unexpected outcome {result:?}");
            ensure!(ledger.is_poisoned(), "{point:?}: ledger still writable after crash");
            drop(ledger);

            let reopened = open(FaultInjector::default())?;
            let after = reopened.balances();
            let durable = reopened.journal_len() == len + 1;
            ensure!(durable || reopened.journal_len() == len, "{point:?}: journal length {}", reopened.journal_len());
            ensure!(!(acknowledged && !durable), "{point:?}: acknowledged transfer lost");
            let mut expected = before.clone();
            if durable {
                let f = expected.get_mut(&account(from)).unwrap();
                *f = Money::from_minor(f.minor_units - amount.minor_units);
                let t = expected.get_mut(&account(to)).unwrap();
                *t = Money::from_minor(t.minor_units + amount.minor_units);
            }
            let norm = |m: &BTreeMap<AccountId, Money>| {
                m.iter()
                    .filter(|(_, v)| v.minor_units != 0)
                    .map(|(k, v)| (k.clone(), v.minor_units))
                    .collect::<BTreeMap<_, _>>()
            };
            ensure!(norm(&after) == norm(&expected), "{point:?} trial {trial}: partial state {after:?}");
            ensure!(reopened.total() == 0, "{point:?}: total {}", reopened.total());
            let replayed = replay(store.join(JOURNAL_FILE)).map_err(|e| e.to_string())?;
            ensure!(replayed.hash() == reopened.state_hash(), "{point:?}: replay differs after recovery");
            reopened
                .transfer(&account(2), &AccountId::cash(), Money::from_minor(1), TxKind::Withdraw)
                .map_err(|e| format!("{point:?}: store unusable after recovery: {e}"))?;
            drop(reopened);
            open(FaultInjector::default())?;
            trials += 1;
        }
    }
    Ok(format!("{trials} crashes recovered whole"))
}

fn two_factor() -> Outcome {
    let mut cases = 0;
    for kind in WorkflowKind::ALL {
        for (card_ok, pin_ok) in [(false, true), (true, false), (false, false)] {
            // PIN-less attempts are tried both ways: skipping VerifyPIN and
            // sending the wrong PIN
            for skip_verify in [false, true] {
                let what = format!("{kind:?} card={card_ok} pin={pin_ok} skip={skip_verify}");
                let clock = Arc::new(ManualClock::sample());
                let ledger = Arc::new(Ledger::in_memory(clock.clone()));
                ledger.add_customer(customer(0, 500)).map_err(|e| e.to_string())?;
                ledger.add_customer(customer(1, 0)).map_err(|e| e.to_string())?;
                let config = Config::default();
                let service = Service::new(ledger.clone(), clock.clone(), &config, AuditLog::in_memory());
                let token = service
                    .login(&cardpay_core::server::api::LoginRequest {
                        username: "user1".into(),
                        password: "pw".into(),
                    })
                    .map_err(|e| e.to_string())?
                    .token;
                let mut card = VirtualCard::issue(&ledger.card(&"0".into()).unwrap());
                if !card_ok {
                    card = card.with_key(SecretKey([0x42; 32]));
                }
                let channel = LocalChannel {
                    service: &service,
                    token: &token,
                };
                let _ = mutual_authenticate(&card, &channel, clock.now());
                let journal_before = ledger.journal_len();

                let pin = if pin_ok { "1234" } else { "9999" };
                let entry = entry_for(kind);
                let mut steps = vec![entry.clone(), Envelope::request(Method::EnterPin, clock.now())];
                if !(skip_verify && !pin_ok) {
                    steps.push(Envelope::request(Method::VerifyPin, clock.now()).with_pin(pin));
                }
                steps.push(Envelope {
                    method: Method::Transmit,
                    extras: Default::default(),
                    ..entry
                });
                let mut last = None;
                for step in &steps {
                    let reply = service.rpc(Some(&token), &encode(step));
                    last = Some(decode(&reply.body).map_err(|e| format!("{what}: {e}"))?);
                }
                let last = last.unwrap();
                ensure!(
                    last.method == Method::Transmit && last.result.as_deref() == Some("NotTransmitted") && last.error.is_some(),
                    "{what}: transmit answered {:?}",
                    last.result
                );
                ensure!(ledger.journal_len() == journal_before, "{what}: ledger moved");
                let handle = service.sessions().get(&token, clock.now()).unwrap();
                let session = handle.lock().unwrap();
                if let Some(run) = &session.run {
                    ensure!(
                        run.transcript.iter().all(|e| e.method != Method::Transmit),
                        "{what}: Transmit reached the transcript"
                    );
                }
                drop(session);

                // the same attempt straight against the workflow engine
                let run = engine_attempt(kind, card_ok, pin_ok, skip_verify)?;
                if let Some(run) = run {
                    ensure!(run.stage != Stage::Done && run.record.is_none(), "{what}: engine completed");
                    ensure!(
                        run.transcript.iter().all(|e| e.method != Method::Transmit),
                        "{what}: engine transcript has Transmit"
                    );
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} attempts over 3 factor combinations x 4 workflows, all refused"))
}

fn entry_for(kind: WorkflowKind) -> Envelope {
    let now = ManualClock::sample().now();
    let base = Envelope::request(Method::EnterAmount, now)
        .with_extra(cardpay_core::server::TRANSACTION_KEY, kind.slug())
        .with_amount(Money::from_rupees(100));
    match kind {
        WorkflowKind::PayOverCounter | WorkflowKind::AccountToAccount => base.with_from("A0").with_to("A1"),
        WorkflowKind::Withdraw => base.with_from("A0").with_to(CASH_LABEL),
        WorkflowKind::Deposit => base
            .with_from(CASH_LABEL)
            .with_to("A0")
            .with_extra(cardpay_core::workflows::NOTES_KEY, "100"),
    }
}

fn engine_attempt(kind: WorkflowKind, card_ok: bool, pin_ok: bool, skip_verify: bool) -> Result<Option<WorkflowRun>, String> {
    let clock = Arc::new(ManualClock::sample());
    let ledger = Arc::new(Ledger::in_memory(clock.clone()));
    ledger.add_customer(customer(0, 500)).map_err(|e| e.to_string())?;
    ledger.add_customer(customer(1, 0)).map_err(|e| e.to_string())?;
    let terminal = Terminal::new(ledger.clone(), clock.clone());
    let mut card = VirtualCard::issue(&ledger.card(&"0".into()).unwrap());
    if !card_ok {
        card = card.with_key(SecretKey([0x42; 32]));
    }
    let auth = Authenticator::new(ledger.clone(), clock.clone());
    let mut session = mutual_authenticate(&card, &auth, clock.now()).map_err(|e| e.to_string())?;
    let pin = if pin_ok { "1234" } else { "9999" };
    if skip_verify && !pin_ok {
        let Ok(mut run) = terminal.begin(kind, &mut session) else {
            return Ok(None);
        };
        let entry = entry_for(kind);
        for step in [
            entry.clone(),
            Envelope::request(Method::EnterPin, clock.now()),
            Envelope {
                method: Method::Transmit,
                extras: Default::default(),
                ..entry
            },
        ] {
            let _ = terminal.step(&mut run, &mut session, step);
        }
        return Ok(Some(run));
    }
    let result = match kind {
        WorkflowKind::PayOverCounter => terminal.run_pay_over_counter(&mut session, Money::from_rupees(100), pin, &account(1)),
        WorkflowKind::AccountToAccount => terminal.run_account_to_account(&mut session, Money::from_rupees(100), pin, &account(1)),
        WorkflowKind::Withdraw => terminal.run_cash_withdrawal(&mut session, Money::from_rupees(100), pin),
        WorkflowKind::Deposit => terminal.run_cash_deposit(&mut session, &NoteBundle::new([100]), pin, &account(0)),
    };
    match result {
        Ok(run) => Ok(Some(run)),
        Err(_) if !card_ok => Ok(None),
        Err(e) => Err(format!("{kind:?}: {e}")),
    }
}

/// Independently computed reference values (Python `hmac`, key 00..1f,
/// nonce a0..af, one-byte direction tag prefixed for the tagged forms).
const VECTOR_KEY: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";
const VECTOR_NONCE: &str = "a0a1a2a3a4a5a6a7a8a9aaabacadaeaf";
const VECTOR_RAW: &str = "b1489727b2602a0e047cb237580a4c795aaf9023c5bc6b0b865c7fa17e0a2367";
const VECTOR_CARD_TO_SERVER: &str = "c3f9755c9bf7ef49e3a5956dc6844ec6d07933d1cd2c26ffebc2eb56ee2595fc";
const VECTOR_SERVER_TO_CARD: &str = "8584e9829206c11a03f68137e95a9facf3aa09aa96a0a69ad8c378aec6bb8965";

/// A keyless impostor server: it bounces the card's own challenge back to
/// the card and passes the answer off as its own.
struct ReflectingServer<'a> {
    card: &'a VirtualCard,
}

impl ServerChannel for ReflectingServer<'_> {
    fn challenge(&self, _: &CardId) -> Result<Nonce, CardError> {
        Ok(Nonce::random())
    }

    fn authenticate(&self, _: &CardId, _: &Nonce, _: &Mac, card_nonce: &Nonce) -> Result<AuthAnswer, CardError> {
        Ok(AuthAnswer {
            card_accepted: true,
            server_mac: Some(self.card.answer_challenge(card_nonce)?),
        })
    }
}

fn challenge_response() -> Outcome {
    let clock = Arc::new(ManualClock::sample());
    let ledger = Arc::new(Ledger::in_memory(clock.clone()));
    ledger.add_customer(customer(0, 0)).map_err(|e| e.to_string())?;
    let issued = VirtualCard::issue(&ledger.card(&"0".into()).unwrap());

    let vector = issued.clone().with_key(SecretKey::from_hex(VECTOR_KEY).unwrap());
    let nonce = Nonce::from_hex(VECTOR_NONCE).unwrap();
    let mac = |r: Result<Mac, CardError>| r.map(|m| m.to_hex()).map_err(|e| e.to_string());
    ensure!(mac(vector.card_respond(&nonce))? == VECTOR_RAW, "raw vector mismatch");
    ensure!(mac(vector.answer_challenge(&nonce))? == VECTOR_CARD_TO_SERVER, "card->server vector mismatch");
    ensure!(
        vector
            .verify_server(&nonce, &Mac::from_hex(VECTOR_SERVER_TO_CARD).unwrap())
            .map_err(|e| e.to_string())?,
        "server->card vector rejected"
    );

    let auth = Authenticator::new(ledger.clone(), clock.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for i in 0..10_000 {
        let nonce = auth.issue_challenge(&issued.card_id).map_err(|e| e.to_string())?;
        let forged = Mac(rng.random());
        let accepted = auth
            .server_verify_card(&issued.card_id, &nonce, &forged)
            .map_err(|e| e.to_string())?;
        ensure!(!accepted, "forged mac {i} accepted");
    }

    let session = mutual_authenticate(&issued, &ReflectingServer { card: &issued }, clock.now()).map_err(|e| e.to_string())?;
    ensure!(!session.server_authenticated, "card accepted a reflected answer");
    // a keyless card bouncing the server's nonce back: the server withholds
    // its answer, so there is nothing to reflect
    let server_nonce = auth.issue_challenge(&issued.card_id).map_err(|e| e.to_string())?;
    let accepted = auth
        .server_verify_card(&issued.card_id, &server_nonce, &Mac([0; 32]))
        .map_err(|e| e.to_string())?;
    ensure!(!accepted, "server accepted a zero mac");
    let untagged = issued.card_respond(&server_nonce).map_err(|e| e.to_string())?;
    let fresh = auth.issue_challenge(&issued.card_id).map_err(|e| e.to_string())?;
    let reflected = auth.respond_to_card(&issued.card_id, &fresh).map_err(|e| e.to_string())?;
    ensure!(
        !auth
            .server_verify_card(&issued.card_id, &fresh, &reflected)
            .map_err(|e| e.to_string())?,
        "server accepted its own answer reflected back"
    );
    ensure!(untagged != reflected, "direction tags do not separate answers");
    let _ = CardSession::new(issued.card_id.clone(), clock.now());
    Ok("vectors match, 10000 forgeries and reflections rejected".into())
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn demo_fidelity() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_cardpay");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let seed = Command::new(bin)
        .args(["seed", "--store"])
        .arg(&store)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(seed.status.success(), "seed failed: {}", String::from_utf8_lossy(&seed.stderr));

    let mut child = Command::new(bin)
        .args(["serve", "--port", "0", "--store"])
        .arg(&store)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let stdout = child.stdout.take().unwrap();
    let server = Server(child);
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).map_err(|e| e.to_string())?;
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected serve output {line:?}"))?
        .to_string();

    let demo = Command::new(bin)
        .args(["demo", "potc", "100", "--server", &format!("http://{addr}"), "--store"])
        .arg(&store)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(demo.status.success(), "demo failed: {}", String::from_utf8_lossy(&demo.stderr));
    drop(server);

    let transcript = decode_transcript(&String::from_utf8_lossy(&demo.stdout)).map_err(|e| e.to_string())?;
    let last = transcript.last().ok_or("empty transcript")?;
    ensure!(last.result.as_deref() == Some("OK"), "final result {:?}", last.result);
    ensure!(transcript.len() == 8, "transcript has {} envelopes", transcript.len());

    let ledger = Ledger::open(&store, Arc::new(ManualClock::sample()), LedgerConfig::default()).map_err(|e| e.to_string())?;
    let rum = ledger
        .customer_by_username(cardpay_core::demo::CARDHOLDER_USERNAME)
        .ok_or("no Rum")?;
    ensure!(rum.name == "Rum", "cardholder is {:?}", rum.name);
    let balance = ledger.balance(&rum.account_id).map_err(|e| e.to_string())?;
    ensure!(balance == Money::from_rupees(20), "Rum has {balance}");
    Ok(format!("Rum at {balance}, final Result \"OK\""))
}

fn report(name: &str, started: Instant, outcome: std::thread::Result<Outcome>) -> bool {
    let (passed, detail) = match outcome {
        Ok(Ok(detail)) => (true, detail),
        Ok(Err(why)) => (false, why),
        Err(panic) => (
            false,
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    };
    // written to the raw handle so the lines show without --nocapture
    let _ = writeln!(
        std::io::stdout().lock(),
        "{} {name}: {detail} ({:.1}s)",
        if passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    passed
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let mut check = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        if !report(name, started, catch_unwind(AssertUnwindSafe(f))) {
            failed.push(name.to_string());
        }
    };
    check("wire conformance", &mut wire_conformance);
    let started = Instant::now();
    let run = catch_unwind(AssertUnwindSafe(long_run)).unwrap_or_else(|_| Err("long run panicked".into()));
    let run_secs = started.elapsed();
    check("conservation", &mut || conservation(&run).map(|d| format!("{d}, {:.1}s run", run_secs.as_secs_f64())));
    check("oracle equivalence", &mut oracle_equivalence);
    check("cancel identity", &mut cancel_identity);
    check("replay determinism", &mut || replay_determinism(&run));
    check("crash atomicity", &mut crash_atomicity);
    check("two-factor and card auth", &mut two_factor);
    check("challenge-response", &mut challenge_response);
    check("demo fidelity", &mut demo_fidelity);
    assert!(failed.is_empty(), "failed: {failed:?}");
}
