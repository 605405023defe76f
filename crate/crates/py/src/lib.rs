//! Python bindings: the wire codec, the ledger, card-authenticated
//! workflows and journal replay.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use cardpay_core::cardsim::{hmac_sha256, mutual_authenticate, Authenticator, Nonce, TAG_CARD_TO_SERVER, TAG_SERVER_TO_CARD};
use cardpay_core::ledger::{CustomerProfile, NewCustomer, SecretKey, TransactionRecord, TxKind};
use cardpay_core::protocol::{encode_transcript, validate_sequence};
use cardpay_core::workflows::{NoteBundle, Terminal, WorkflowKind};
use cardpay_core::{demo, store, AccountId, Clock, Envelope, Ledger, LedgerConfig, Money, SystemClock};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(cardpay, CardpayError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    CardpayError::new_err(e.to_string())
}

fn money(text: &str) -> PyResult<Money> {
    Money::parse_wire(text).map_err(|e| PyValueError::new_err(format!("bad amount {text:?}: {e}")))
}

/// One protocol message.
#[pyclass(name = "Envelope", module = "cardpay", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEnvelope {
    inner: Envelope,
}

#[pymethods]
impl PyEnvelope {
    /// Parses a message, tolerating the sloppy forms terminals send.
    #[staticmethod]
    fn decode(text: &str) -> PyResult<Self> {
        cardpay_core::decode(text)
            .map(|inner| PyEnvelope { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Canonical wire text.
    fn encode(&self) -> String {
        cardpay_core::encode(&self.inner)
    }

    /// A copy with the PIN masked.
    fn redacted(&self) -> Self {
        PyEnvelope {
            inner: self.inner.redacted(),
        }
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn result(&self) -> Option<String> {
        self.inner.result.clone()
    }

    #[getter]
    fn error(&self) -> Option<String> {
        self.inner.error.clone()
    }

    #[getter]
    fn to_account(&self) -> Option<String> {
        self.inner.to_account.as_ref().map(|a| a.to_string())
    }

    #[getter]
    #[allow(clippy::wrong_self_convention)]
    fn from_account(&self) -> Option<String> {
        self.inner.from_account.as_ref().map(|a| a.to_string())
    }

    #[getter]
    fn amount(&self) -> Option<String> {
        self.inner.amount.map(|m| m.to_wire())
    }

    #[getter]
    fn message(&self) -> Option<String> {
        self.inner.free_text.clone()
    }

    #[getter]
    fn timestamp(&self) -> String {
        self.inner.timestamp.to_rfc3339_opts(chrono_secs(), true)
    }

    #[getter]
    fn extras(&self) -> BTreeMap<String, String> {
        self.inner.extras.clone()
    }

    fn is_response(&self) -> bool {
        self.inner.is_response()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Envelope({:?}, result={:?})", self.inner.method.as_str(), self.inner.result)
    }

    fn __str__(&self) -> String {
        self.encode()
    }
}

fn chrono_secs() -> chrono::SecondsFormat {
    chrono::SecondsFormat::Secs
}

/// Checks a list of messages for stage-order violations; returns their
/// descriptions (empty when the transcript is well formed).
#[pyfunction]
fn check_sequence(messages: Vec<PyRef<'_, PyEnvelope>>) -> Vec<String> {
    let envs: Vec<Envelope> = messages.iter().map(|m| m.inner.clone()).collect();
    validate_sequence(&envs).iter().map(|v| v.to_string()).collect()
}

/// HMAC-SHA-256 of a 16-byte nonce under a 32-byte key, both hex.
/// `direction` is `"card"` (card answering the server), `"server"`, or
/// `None` for the untagged MAC.
#[pyfunction]
#[pyo3(signature = (key_hex, nonce_hex, direction=None))]
fn card_mac(key_hex: &str, nonce_hex: &str, direction: Option<&str>) -> PyResult<String> {
    let key = SecretKey::from_hex(key_hex).ok_or_else(|| PyValueError::new_err("key must be 32 hex bytes"))?;
    let nonce = Nonce::from_hex(nonce_hex).ok_or_else(|| PyValueError::new_err("nonce must be 16 hex bytes"))?;
    let tag = match direction {
        None => None,
        Some("card") => Some(TAG_CARD_TO_SERVER),
        Some("server") => Some(TAG_SERVER_TO_CARD),
        Some(other) => return Err(PyValueError::new_err(format!("unknown direction {other:?}"))),
    };
    Ok(hmac_sha256(&key.0, tag, &nonce.0).to_hex())
}

/// Replays a journal file; returns `(records, state_hash_hex)`.
#[pyfunction]
#[pyo3(signature = (journal, upto=None))]
fn replay(journal: PathBuf, upto: Option<u64>) -> PyResult<(u64, String)> {
    let state = match upto {
        Some(k) => store::replay_prefix(&journal, k),
        None => store::replay(&journal),
    }
    .map_err(err)?;
    Ok((state.last_tx, state.hash().to_hex()))
}

fn record_dict(r: &TransactionRecord) -> BTreeMap<&'static str, String> {
    let mut d = BTreeMap::new();
    d.insert("tx_id", r.tx_id.to_string());
    d.insert("kind", r.kind.as_str().to_string());
    d.insert("from", r.from_account.to_string());
    d.insert("to", r.to_account.to_string());
    d.insert("amount", r.amount.to_wire());
    d.insert("timestamp", r.timestamp.to_rfc3339_opts(chrono_secs(), true));
    if let Some(of) = r.reversal_of {
        d.insert("reversal_of", of.to_string());
    }
    d
}

/// Outcome of one workflow run.
#[pyclass(name = "Run", module = "cardpay", frozen, get_all)]
struct PyRun {
    kind: String,
    stage: String,
    result: Option<String>,
    error: Option<String>,
    tx_id: Option<u64>,
    payout: Option<String>,
    transcript: Vec<PyEnvelope>,
}

#[pymethods]
impl PyRun {
    /// True when the transfer reached the ledger.
    fn succeeded(&self) -> bool {
        self.tx_id.is_some()
    }

    /// The PIN-masked transcript in wire form.
    fn transcript_text(&self) -> String {
        let envs: Vec<Envelope> = self.transcript.iter().map(|e| e.inner.redacted()).collect();
        encode_transcript(&envs)
    }

    fn __repr__(&self) -> String {
        format!("Run({}, {}, result={:?})", self.kind, self.stage, self.result)
    }
}

/// The account ledger, in memory or backed by a store directory.
#[pyclass(name = "Ledger", module = "cardpay", frozen)]
struct PyLedger {
    inner: Arc<Ledger>,
}

fn need<'a>(v: Option<&'a str>, what: &str) -> PyResult<&'a str> {
    v.ok_or_else(|| PyValueError::new_err(format!("{what} is required")))
}

#[pymethods]
impl PyLedger {
    #[new]
    #[pyo3(signature = (store=None))]
    fn new(store: Option<PathBuf>) -> PyResult<Self> {
        let clock = Arc::new(SystemClock);
        let inner = match store {
            None => Ledger::in_memory(clock),
            Some(dir) => Ledger::open(dir, clock, LedgerConfig::default()).map_err(err)?,
        };
        Ok(PyLedger { inner: Arc::new(inner) })
    }

    /// Adds the demo admin, cardholder and merchant.
    fn seed_demo(&self) -> PyResult<()> {
        demo::seed_demo(&self.inner).map(|_| ()).map_err(err)
    }

    /// Returns `(customer_id, account_id, card_id)`.
    #[pyo3(signature = (name, username, password, pin, balance="0", account=None, card=None, admin=false))]
    #[allow(clippy::too_many_arguments)]
    fn add_customer(
        &self,
        name: &str,
        username: &str,
        password: &str,
        pin: &str,
        balance: &str,
        account: Option<String>,
        card: Option<String>,
        admin: bool,
    ) -> PyResult<(String, String, String)> {
        let handle = self
            .inner
            .add_customer(NewCustomer {
                profile: CustomerProfile {
                    name: name.into(),
                    account_id: account,
                    ..Default::default()
                },
                initial_balance: money(balance)?,
                username: username.into(),
                password: password.into(),
                pin: pin.into(),
                admin,
                card_id: card,
            })
            .map_err(err)?;
        Ok((
            handle.customer_id.to_string(),
            handle.account_id.to_string(),
            handle.card_id.to_string(),
        ))
    }

    /// Balance in rupees, wire form.
    fn balance(&self, account: &str) -> PyResult<String> {
        Ok(self.inner.balance(&AccountId::new(account)).map_err(err)?.to_wire())
    }

    fn balance_minor(&self, account: &str) -> PyResult<i64> {
        Ok(self.inner.balance(&AccountId::new(account)).map_err(err)?.minor_units)
    }

    fn verify_account(&self, account: &str) -> bool {
        self.inner.verify_account(&AccountId::new(account))
    }

    /// Moves money and returns the new transaction id. `kind` is one of
    /// POTC, A2A, Withdraw, Deposit.
    #[pyo3(signature = (from_account, to_account, amount, kind="A2A"))]
    fn transfer(&self, from_account: &str, to_account: &str, amount: &str, kind: &str) -> PyResult<u64> {
        let kind: TxKind = kind.parse().map_err(PyValueError::new_err)?;
        self.inner
            .transfer(&AccountId::new(from_account), &AccountId::new(to_account), money(amount)?, kind)
            .map(|r| r.tx_id)
            .map_err(err)
    }

    /// Reverses the latest matching transfer; returns the reversal's id.
    fn cancel(&self, from_account: &str, to_account: &str, amount: &str) -> PyResult<u64> {
        self.inner
            .cancel(&AccountId::new(from_account), &AccountId::new(to_account), money(amount)?)
            .map(|r| r.tx_id)
            .map_err(err)
    }

    /// Sum of every balance in paisa; always 0.
    fn total(&self) -> i128 {
        self.inner.total()
    }

    fn state_hash(&self) -> String {
        self.inner.state_hash().to_hex()
    }

    fn journal_len(&self) -> u64 {
        self.inner.journal_len()
    }

    fn balances(&self) -> BTreeMap<String, String> {
        self.inner
            .balances()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_wire()))
            .collect()
    }

    fn records(&self) -> Vec<BTreeMap<&'static str, String>> {
        self.inner.records().iter().map(record_dict).collect()
    }

    /// Authenticates `card` against this ledger's server side, then runs one
    /// transaction. `kind` is potc, a2a, withdraw or deposit; `to` is the
    /// recipient (potc, a2a) or the credited account (deposit). Deposits
    /// take `notes`, e.g. "100,50".
    #[pyo3(signature = (kind, card, pin, amount=None, to=None, notes=None))]
    fn run(
        &self,
        kind: &str,
        card: &str,
        pin: &str,
        amount: Option<&str>,
        to: Option<&str>,
        notes: Option<&str>,
    ) -> PyResult<PyRun> {
        let kind = WorkflowKind::from_slug(kind)
            .ok_or_else(|| PyValueError::new_err(format!("unknown workflow {kind:?}")))?;
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let record = self.inner.card(&card.into()).map_err(err)?;
        let card = cardpay_core::cardsim::VirtualCard::issue(&record);
        let auth = Authenticator::new(self.inner.clone(), clock.clone());
        let mut session = mutual_authenticate(&card, &auth, clock.now()).map_err(err)?;
        let terminal = Terminal::new(self.inner.clone(), clock);
        let run = match kind {
            WorkflowKind::PayOverCounter | WorkflowKind::AccountToAccount => {
                let amount = money(need(amount, "amount")?)?;
                let to = AccountId::new(need(to, "to")?);
                if kind == WorkflowKind::PayOverCounter {
                    terminal.run_pay_over_counter(&mut session, amount, pin, &to)
                } else {
                    terminal.run_account_to_account(&mut session, amount, pin, &to)
                }
            }
            WorkflowKind::Withdraw => terminal.run_cash_withdrawal(&mut session, money(need(amount, "amount")?)?, pin),
            WorkflowKind::Deposit => {
                let notes: NoteBundle = need(notes, "notes")?.parse().map_err(|e| PyValueError::new_err(format!("{e}")))?;
                let target = to.map(AccountId::new).unwrap_or_else(|| record.account_id.clone());
                terminal.run_cash_deposit(&mut session, &notes, pin, &target)
            }
        }
        .map_err(err)?;
        let last = run.last();
        Ok(PyRun {
            kind: run.kind.slug().to_string(),
            stage: format!("{:?}", run.stage),
            result: last.and_then(|e| e.result.clone()),
            error: last.and_then(|e| e.error.clone()),
            tx_id: run.record.as_ref().map(|r| r.tx_id),
            payout: run.payout().map(|p| p.to_string()),
            transcript: run.transcript.iter().map(|e| PyEnvelope { inner: e.clone() }).collect(),
        })
    }

    fn __repr__(&self) -> String {
        format!("Ledger(records={})", self.inner.journal_len())
    }
}

#[pymodule]
fn cardpay(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CardpayError", m.py().get_type::<CardpayError>())?;
    m.add_class::<PyEnvelope>()?;
    m.add_class::<PyLedger>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(check_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(card_mac, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
