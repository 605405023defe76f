use std::sync::Arc;

use chrono::Duration;
use thiserror::Error;

use super::api::*;
use super::audit::AuditLog;
use super::config::Config;
use super::session::{OperatorSession, SessionStore};
use crate::cardsim::{AuthAnswer, Authenticator, CardError, CardSession, Mac, Nonce, ServerChannel};
use crate::clock::Clock;
use crate::ids::{AccountId, CardId};
use crate::ledger::{CustomerProfile, Ledger, LedgerConfig, LedgerError, NewCustomer};
use crate::money::Money;
use crate::protocol::{decode, encode, wire_errors, Envelope, Method, ProtocolError};
use crate::workflows::{resolve_account, results, Terminal, WorkflowError, WorkflowKind};

pub const BUILD_ID: &str = concat!("cardpay/", env!("CARGO_PKG_VERSION"));

/// Extra key naming the transaction kind on an EnterAmount request.
pub const TRANSACTION_KEY: &str = "Transaction";
pub const USERNAME_KEY: &str = "Username";
pub const PASSWORD_KEY: &str = "Password";
pub const TOKEN_KEY: &str = "Token";

/// The add-customer form, keyed by its field labels.
pub mod form {
    pub const ID: &str = "Customer ID";
    pub const NAME: &str = "Customer Name";
    pub const PHONE: &str = "Customer Phone";
    pub const OFFICE: &str = "Customer Office";
    pub const FLOOR: &str = "Customer Floor";
    pub const EMAIL: &str = "Customer Email";
    pub const DEPARTMENT: &str = "Customer Department";
    pub const ACCOUNT: &str = "Customer Account";
    pub const BALANCE: &str = "Customer Balance";
    pub const USERNAME: &str = "Customer Username";
    pub const PASSWORD: &str = "Customer Password";
    pub const PIN: &str = "Customer PIN";
    pub const ADMIN: &str = "Admin";
    pub const CARD_ID: &str = "Card ID";
    pub const CARD_KEY: &str = "Card Key";
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session expired")]
    Unauthorized,
    #[error("login failed")]
    LoginFailed,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("card session required")]
    Forbidden,
    #[error(transparent)]
    Card(#[from] CardError),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Unauthorized | ServiceError::LoginFailed => 401,
            ServiceError::Forbidden => 403,
            ServiceError::BadRequest(_) => 400,
            ServiceError::Card(CardError::Ledger(e)) if !matches!(e, LedgerError::UnknownCard(_)) => 500,
            ServiceError::Card(_) => 400,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let error = match self {
            ServiceError::Unauthorized => wire_errors::internal("session expired"),
            ServiceError::LoginFailed => wire_errors::VERIFICATION_UNSUCCESSFUL.to_string(),
            ServiceError::BadRequest(_) => wire_errors::internal("bad request"),
            ServiceError::Forbidden => wire_errors::internal("card not authenticated"),
            ServiceError::Card(CardError::UnknownCard(_)) => wire_errors::internal("unknown card"),
            ServiceError::Card(e) => wire_errors::internal(&e.to_string()),
        };
        ErrorBody { error }
    }
}

/// HTTP status plus body text of one /rpc exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcReply {
    pub status: u16,
    pub body: String,
}

impl RpcReply {
    fn ok(envelope: &Envelope) -> Self {
        RpcReply {
            status: 200,
            body: encode(envelope),
        }
    }

    fn error(err: &ServiceError) -> Self {
        RpcReply {
            status: err.status(),
            body: serde_json::to_string(&err.body()).unwrap_or_default(),
        }
    }

    fn bad(detail: &str) -> Self {
        RpcReply {
            status: 400,
            body: serde_json::to_string(&ErrorBody {
                error: wire_errors::internal(detail),
            })
            .unwrap_or_default(),
        }
    }
}

/// The failure `Result` string for a refused request of `method`.
fn refusal_result(method: Method) -> &'static str {
    match method {
        Method::VerifyPin => results::NOT_VERIFIED,
        Method::Transmit => results::NOT_TRANSMITTED,
        _ => results::NOT_OK,
    }
}

/// Everything behind the HTTP routes.
pub struct Service {
    ledger: Arc<Ledger>,
    clock: Arc<dyn Clock>,
    terminal: Terminal,
    auth: Authenticator,
    sessions: SessionStore,
    audit: AuditLog,
}

impl Service {
    pub fn new(ledger: Arc<Ledger>, clock: Arc<dyn Clock>, config: &Config, audit: AuditLog) -> Self {
        Service {
            terminal: Terminal::with_denominations(ledger.clone(), clock.clone(), config.denominations.clone()),
            auth: Authenticator::new(ledger.clone(), clock.clone()),
            sessions: SessionStore::new(Duration::seconds(config.session_ttl_secs as i64)),
            ledger,
            clock,
            audit,
        }
    }

    /// Opens the ledger and audit log under `config.store`.
    pub fn open(config: &Config, clock: Arc<dyn Clock>) -> Result<Self, LedgerError> {
        let ledger_config = LedgerConfig {
            pin_attempt_limit: config.pin_attempt_limit,
            sync: config.sync_policy(),
            ..LedgerConfig::default()
        };
        let ledger = Arc::new(Ledger::open(&config.store, clock.clone(), ledger_config)?);
        let audit = AuditLog::open(&config.audit_path()).map_err(|e| LedgerError::Store(e.into()))?;
        Ok(Service::new(ledger, clock, config, audit))
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn health(&self) -> Health {
        Health {
            status: if self.ledger.is_poisoned() { "degraded" } else { "ok" }.to_string(),
            build: BUILD_ID.to_string(),
            journal_length: self.ledger.journal_len(),
        }
    }

    pub fn login(&self, req: &LoginRequest) -> Result<LoginResponse, ServiceError> {
        let customer = self
            .ledger
            .authenticate(&req.username, &req.password)
            .map_err(|_| ServiceError::LoginFailed)?;
        let (token, expires_at) = self.sessions.create(&customer, self.clock.now());
        Ok(LoginResponse {
            token,
            customer_id: customer.customer_id,
            admin: customer.admin,
            expires_at,
        })
    }

    pub fn sweep_sessions(&self) -> usize {
        self.sessions.sweep(self.clock.now())
    }

    pub fn logout(&self, token: &str) -> bool {
        self.sessions.remove(token)
    }

    fn session(&self, token: Option<&str>) -> Result<super::session::SessionHandle, ServiceError> {
        token
            .and_then(|t| self.sessions.get(t, self.clock.now()))
            .ok_or(ServiceError::Unauthorized)
    }

    pub fn card_challenge(&self, token: Option<&str>, req: &ChallengeRequest) -> Result<ChallengeResponse, ServiceError> {
        self.session(token)?;
        let nonce = self.auth.issue_challenge(&req.card_id)?;
        Ok(ChallengeResponse {
            card_id: req.card_id.clone(),
            nonce: nonce.to_hex(),
        })
    }

    /// Checks the card's answer and, if it passes, answers the card's own
    /// challenge and attaches a card session to the operator session. A
    /// failed card detaches any previous card session.
    pub fn card_authenticate(
        &self,
        token: Option<&str>,
        req: &AuthenticateRequest,
    ) -> Result<AuthenticateResponse, ServiceError> {
        let handle = self.session(token)?;
        let parse_err = || ServiceError::BadRequest("malformed hex".into());
        let server_nonce = Nonce::from_hex(&req.server_nonce).ok_or_else(parse_err)?;
        let card_nonce = Nonce::from_hex(&req.card_nonce).ok_or_else(parse_err)?;
        let card_mac = Mac::from_hex(&req.card_mac).ok_or_else(parse_err)?;

        let accepted = self.auth.server_verify_card(&req.card_id, &server_nonce, &card_mac)?;
        let mut session = handle.lock().unwrap_or_else(|p| p.into_inner());
        session.run = None;
        if !accepted {
            session.card_session = None;
            return Ok(AuthenticateResponse {
                card_accepted: false,
                server_mac: None,
            });
        }
        let mut card_session = CardSession::new(req.card_id.clone(), self.clock.now());
        card_session.accept_nonce(server_nonce);
        if !card_session.accept_nonce(card_nonce) {
            return Err(CardError::NonceReplayed.into());
        }
        card_session.card_authenticated = true;
        let server_mac = self.auth.respond_to_card(&req.card_id, &card_nonce)?;
        session.card_session = Some(card_session);
        Ok(AuthenticateResponse {
            card_accepted: true,
            server_mac: Some(server_mac.to_hex()),
        })
    }

    pub fn card_sync(&self, token: Option<&str>, req: &SyncRequest) -> Result<SyncResponse, ServiceError> {
        let handle = self.session(token)?;
        let session = handle.lock().unwrap_or_else(|p| p.into_inner());
        match &session.card_session {
            Some(cs) if cs.card_authenticated && cs.card_id == req.card_id => {}
            _ => return Err(ServiceError::Forbidden),
        }
        let report = crate::cardsim::reconcile(&self.ledger, &req.card_id, &req.deltas)?;
        Ok(SyncResponse {
            card_id: req.card_id.clone(),
            cached_balance_minor: report.card.cached_balance.minor_units,
            watermark: report.watermark,
            applied_tx_ids: report.applied.iter().map(|r| r.tx_id).collect(),
            rejected: report
                .rejected
                .iter()
                .map(|r| RejectedDeltaBody {
                    sequence_no: r.delta.sequence_no,
                    error: r.error.clone(),
                })
                .collect(),
            skipped: report.skipped,
        })
    }

    /// Handles one /rpc body and appends the exchange to the audit log.
    pub fn rpc(&self, token: Option<&str>, body: &str) -> RpcReply {
        let decoded = decode(body);
        let (reply, customer) = match &decoded {
            Err(ProtocolError::UnknownMethod(_)) => (RpcReply::bad("unknown method"), None),
            Err(_) => (RpcReply::bad("bad request"), None),
            Ok(request) if request.method == Method::Login => (RpcReply::ok(&self.rpc_login(request)), None),
            Ok(request) => match self.session(token) {
                Err(e) => (RpcReply::error(&e), None),
                Ok(handle) => {
                    let mut session = handle.lock().unwrap_or_else(|p| p.into_inner());
                    let response = self.dispatch(&mut session, request.clone());
                    (RpcReply::ok(&response), Some(session.customer_id.clone()))
                }
            },
        };
        let logged_request = decoded.ok().map(|r| encode(&r.redacted()));
        let logged_response = match decode(&reply.body) {
            Ok(env) => encode(&env.redacted()),
            Err(_) => reply.body.clone(),
        };
        if let Err(e) = self
            .audit
            .record(self.clock.now(), customer, logged_request, reply.status, logged_response)
        {
            tracing::error!(error = %e, "audit write failed");
        }
        reply
    }

    fn refuse(&self, request: &Envelope, detail: &str) -> Envelope {
        request
            .respond(refusal_result(request.method), self.clock.now())
            .with_error(wire_errors::internal(detail))
    }

    fn rpc_login(&self, request: &Envelope) -> Envelope {
        let creds = LoginRequest {
            username: request.extra(USERNAME_KEY).unwrap_or_default().to_string(),
            password: request.extra(PASSWORD_KEY).unwrap_or_default().to_string(),
        };
        match self.login(&creds) {
            Ok(login) => request
                .respond(results::OK, self.clock.now())
                .with_extra(TOKEN_KEY, login.token),
            Err(_) => request
                .respond(results::NOT_OK, self.clock.now())
                .with_error(wire_errors::VERIFICATION_UNSUCCESSFUL),
        }
    }

    fn dispatch(&self, session: &mut OperatorSession, request: Envelope) -> Envelope {
        match request.method {
            Method::EnterAmount => self.start_workflow(session, request),
            Method::EnterPin | Method::Transmit => self.continue_workflow(session, request),
            Method::VerifyPin => {
                let in_run = session
                    .run
                    .as_ref()
                    .is_some_and(|r| r.stage == crate::workflows::Stage::AwaitPin);
                if in_run {
                    self.continue_workflow(session, request)
                } else {
                    self.standalone_verify_pin(session, &request)
                }
            }
            Method::CancelTransaction => self.cancel(session, &request),
            Method::AddCustomer => self.add_customer(session, &request),
            Method::VerifyAccount => self.verify_account(&request),
            Method::Login => unreachable!("handled before session lookup"),
        }
    }

    fn workflow_kind(request: &Envelope) -> Option<WorkflowKind> {
        if let Some(named) = request.extra(TRANSACTION_KEY) {
            return WorkflowKind::from_slug(named);
        }
        let is_cash = |a: &Option<AccountId>| a.as_ref().is_some_and(|a| resolve_account(a) == AccountId::cash());
        Some(if is_cash(&request.to_account) {
            WorkflowKind::Withdraw
        } else if is_cash(&request.from_account) {
            WorkflowKind::Deposit
        } else {
            WorkflowKind::PayOverCounter
        })
    }

    fn start_workflow(&self, session: &mut OperatorSession, request: Envelope) -> Envelope {
        let Some(kind) = Self::workflow_kind(&request) else {
            return self.refuse(&request, "unknown transaction");
        };
        session.run = None;
        let Some(card) = session.card_session.as_mut() else {
            return self.refuse(&request, "card not authenticated");
        };
        let mut run = match self.terminal.begin(kind, card) {
            Ok(run) => run,
            Err(e) => return self.refuse(&request, &workflow_detail(&e)),
        };
        let response = match self.terminal.step(&mut run, card, request.clone()) {
            Ok(resp) => resp,
            Err(e) => self.refuse(&request, &workflow_detail(&e)),
        };
        session.run = Some(run);
        response
    }

    fn continue_workflow(&self, session: &mut OperatorSession, request: Envelope) -> Envelope {
        let (Some(run), Some(card)) = (session.run.as_mut(), session.card_session.as_mut()) else {
            return self.refuse(&request, "no transaction in progress");
        };
        match self.terminal.step(run, card, request.clone()) {
            Ok(resp) => resp,
            Err(e) => self.refuse(&request, &workflow_detail(&e)),
        }
    }

    fn standalone_verify_pin(&self, session: &mut OperatorSession, request: &Envelope) -> Envelope {
        let Some(card) = session.card_session.as_ref().filter(|c| c.card_authenticated) else {
            return self.refuse(request, "card not authenticated");
        };
        let owner = self
            .ledger
            .card(&card.card_id)
            .and_then(|c| self.ledger.owner_of(&c.account_id));
        let verified = match (owner, request.pin.as_deref()) {
            (Ok(owner), Some(pin)) => self.ledger.verify_pin(&owner, pin).unwrap_or(false),
            _ => false,
        };
        let now = self.clock.now();
        if verified {
            request.respond(results::VERIFIED, now)
        } else {
            request
                .respond(results::NOT_VERIFIED, now)
                .with_error(wire_errors::VERIFICATION_UNSUCCESSFUL)
        }
    }

    fn verify_account(&self, request: &Envelope) -> Envelope {
        let Some(account) = request.to_account.as_ref().or(request.from_account.as_ref()) else {
            return self.refuse(request, "no account given");
        };
        let now = self.clock.now();
        if self.ledger.verify_account(&resolve_account(account)) {
            request.respond(results::VERIFIED, now)
        } else {
            request
                .respond(results::NOT_VERIFIED, now)
                .with_error(wire_errors::ACCOUNT_NOT_FOUND)
        }
    }

    /// Reverses `From → To` of `Amount`. Only an admin or the owner of the
    /// `To` account (the one paying the money back) may cancel.
    fn cancel(&self, session: &OperatorSession, request: &Envelope) -> Envelope {
        let (Some(from), Some(to), Some(amount)) = (&request.from_account, &request.to_account, request.amount) else {
            return self.refuse(request, "cancel needs accounts and amount");
        };
        let (from, to) = (resolve_account(from), resolve_account(to));
        if !session.admin && to != session.account_id {
            return self.refuse(request, "not permitted");
        }
        match self.ledger.cancel(&from, &to, amount) {
            Ok(_) => request.respond(results::OK, self.clock.now()),
            Err(e) => request
                .respond(results::NOT_OK, self.clock.now())
                .with_error(e.wire_error()),
        }
    }

    fn add_customer(&self, session: &OperatorSession, request: &Envelope) -> Envelope {
        if !session.admin {
            return self.refuse(request, "not permitted");
        }
        let field = |key: &str| request.extra(key).unwrap_or_default().trim().to_string();
        let optional = |key: &str| Some(field(key)).filter(|v| !v.is_empty());
        let balance = match optional(form::BALANCE) {
            None => Money::zero(),
            Some(text) => match Money::parse_wire(&text) {
                Ok(m) => m,
                Err(_) => return self.refuse(request, "bad balance"),
            },
        };
        let new = NewCustomer {
            profile: CustomerProfile {
                customer_id: optional(form::ID),
                name: field(form::NAME),
                phone: field(form::PHONE),
                office: field(form::OFFICE),
                room: field(form::FLOOR),
                email: field(form::EMAIL),
                department: field(form::DEPARTMENT),
                account_id: optional(form::ACCOUNT),
            },
            initial_balance: balance,
            username: field(form::USERNAME),
            password: request.extra(form::PASSWORD).unwrap_or_default().to_string(),
            pin: request
                .extra(form::PIN)
                .map(str::to_string)
                .or_else(|| request.pin.clone())
                .unwrap_or_default(),
            admin: field(form::ADMIN).eq_ignore_ascii_case("true"),
            card_id: optional(form::CARD_ID),
        };
        if new.profile.name.is_empty() || new.username.is_empty() || new.password.is_empty() {
            return self.refuse(request, "name, username and password are required");
        }
        match self.ledger.add_customer(new) {
            Ok(handle) => {
                let key = self
                    .ledger
                    .card(&handle.card_id)
                    .map(|c| c.secret_key.to_hex())
                    .unwrap_or_default();
                let mut resp = request
                    .respond(results::OK, self.clock.now())
                    .with_extra(form::ID, handle.customer_id.as_str())
                    .with_extra(form::ACCOUNT, handle.account_id.as_str())
                    .with_extra(form::CARD_ID, handle.card_id.as_str())
                    .with_extra(form::CARD_KEY, key);
                resp.to_account = Some(handle.account_id);
                resp
            }
            Err(e) => request
                .respond(results::NOT_OK, self.clock.now())
                .with_error(e.wire_error()),
        }
    }

    /// Makes the journal durable; called on shutdown.
    pub fn flush(&self) -> Result<(), LedgerError> {
        self.ledger.sync()
    }
}

fn workflow_detail(e: &WorkflowError) -> String {
    match e {
        WorkflowError::CardNotAuthenticated => "card not authenticated".into(),
        WorkflowError::OutOfSequence { .. } => "out of sequence".into(),
        WorkflowError::CardUnavailable(_) => "card blocked".into(),
        WorkflowError::WrongSession(_) => "wrong card".into(),
        WorkflowError::NotARequest => "expected a request".into(),
        WorkflowError::Cash(e) => e.to_string(),
        WorkflowError::Ledger(_) => "storage failure".into(),
    }
}

/// A [`ServerChannel`] that calls a [`Service`] in-process under an
/// operator token, the same path the HTTP card endpoints take.
pub struct LocalChannel<'a> {
    pub service: &'a Service,
    pub token: &'a str,
}

impl ServerChannel for LocalChannel<'_> {
    fn challenge(&self, card_id: &CardId) -> Result<Nonce, CardError> {
        let resp = self
            .service
            .card_challenge(Some(self.token), &ChallengeRequest { card_id: card_id.clone() })
            .map_err(channel_error)?;
        Nonce::from_hex(&resp.nonce).ok_or_else(|| CardError::Channel("bad nonce".into()))
    }

    fn authenticate(
        &self,
        card_id: &CardId,
        server_nonce: &Nonce,
        card_mac: &Mac,
        card_nonce: &Nonce,
    ) -> Result<AuthAnswer, CardError> {
        let resp = self
            .service
            .card_authenticate(
                Some(self.token),
                &AuthenticateRequest {
                    card_id: card_id.clone(),
                    server_nonce: server_nonce.to_hex(),
                    card_mac: card_mac.to_hex(),
                    card_nonce: card_nonce.to_hex(),
                },
            )
            .map_err(channel_error)?;
        resp.into_answer()
    }
}

fn channel_error(e: ServiceError) -> CardError {
    match e {
        ServiceError::Card(inner) => inner,
        other => CardError::Channel(other.to_string()),
    }
}

impl AuthenticateResponse {
    pub fn into_answer(self) -> Result<AuthAnswer, CardError> {
        let server_mac = match self.server_mac {
            Some(hex) => Some(Mac::from_hex(&hex).ok_or_else(|| CardError::Channel("bad mac".into()))?),
            None => None,
        };
        Ok(AuthAnswer {
            card_accepted: self.card_accepted,
            server_mac,
        })
    }
}
