//! The four terminal transactions as message-driven state machines.
//!
//! A run is fed one request envelope at a time through [`Terminal::step`],
//! which appends the request and its response to the run's transcript. The
//! `run_*` drivers feed a whole happy-path sequence at once.

mod cash;

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::cardsim::CardSession;
use crate::clock::Clock;
use crate::ids::{AccountId, CardId, CustomerId};
use crate::ledger::{CardStatus, Ledger, LedgerError, TransactionRecord, TxKind};
use crate::money::Money;
use crate::protocol::{wire_errors, Envelope, Method};

pub use self::cash::{CashError, Denominations, NoteBundle};

/// How the cash side of deposits and withdrawals appears on the wire.
pub const CASH_LABEL: &str = "currency detector";
/// Extra key carrying deposited notes, e.g. `"Notes": "100,100"`.
pub const NOTES_KEY: &str = "Notes";
/// Extra key on a withdrawal's final response listing dispensed notes.
pub const PAYOUT_KEY: &str = "Payout";

pub mod results {
    pub const OK: &str = "OK";
    pub const OKAY: &str = "Okay";
    pub const NOT_OK: &str = "NotOK";
    pub const PIN: &str = "PIN";
    pub const VERIFIED: &str = "Verified";
    pub const NOT_VERIFIED: &str = "NotVerified";
    pub const TRANSMISSION_SUCCESSFUL: &str = "Transmission Successful";
    pub const NOT_TRANSMITTED: &str = "NotTransmitted";
}

pub mod prompts {
    pub const INSERT_PIN: &str = "Please insert PIN:";
    pub const ENTER_PIN: &str = "Please Enter PIN:";
    pub const VERIFYING_PIN: &str = "Verifying PIN entry";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum WorkflowKind {
    PayOverCounter,
    AccountToAccount,
    Withdraw,
    Deposit,
}

impl WorkflowKind {
    pub const ALL: [WorkflowKind; 4] = [
        WorkflowKind::PayOverCounter,
        WorkflowKind::AccountToAccount,
        WorkflowKind::Withdraw,
        WorkflowKind::Deposit,
    ];

    pub fn tx_kind(self) -> TxKind {
        match self {
            WorkflowKind::PayOverCounter => TxKind::PayOverCounter,
            WorkflowKind::AccountToAccount => TxKind::AccountToAccount,
            WorkflowKind::Withdraw => TxKind::Withdraw,
            WorkflowKind::Deposit => TxKind::Deposit,
        }
    }

    /// Short name used by the CLI and the `Transaction` extra.
    pub fn slug(self) -> &'static str {
        match self {
            WorkflowKind::PayOverCounter => "potc",
            WorkflowKind::AccountToAccount => "a2a",
            WorkflowKind::Withdraw => "withdraw",
            WorkflowKind::Deposit => "deposit",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        let s = s.trim();
        WorkflowKind::ALL.into_iter().find(|k| {
            k.slug().eq_ignore_ascii_case(s) || k.tx_kind().as_str().eq_ignore_ascii_case(s)
        })
    }

    fn amount_accepted(self) -> &'static str {
        match self {
            WorkflowKind::PayOverCounter => results::OK,
            _ => results::OKAY,
        }
    }

    fn transmitted(self) -> &'static str {
        match self {
            WorkflowKind::AccountToAccount => results::TRANSMISSION_SUCCESSFUL,
            _ => results::OK,
        }
    }

    pub fn pin_prompt(self) -> &'static str {
        match self {
            WorkflowKind::PayOverCounter => prompts::INSERT_PIN,
            _ => prompts::ENTER_PIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    AwaitAmount,
    AwaitPin,
    PinVerified,
    /// PIN verified but the recipient is still unknown; Transmit must name it.
    AwaitAccount,
    Done,
    Failed,
}

impl Stage {
    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("card session is not authenticated")]
    CardNotAuthenticated,
    #[error("card {0} is not usable")]
    CardUnavailable(CardId),
    #[error("session belongs to card {0}")]
    WrongSession(CardId),
    #[error("{method:?} is not allowed at stage {stage:?}")]
    OutOfSequence { stage: Stage, method: Method },
    #[error("expected a request, got a response")]
    NotARequest,
    #[error(transparent)]
    Cash(#[from] CashError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// One transaction in progress.
#[derive(Debug, Clone)]
pub struct WorkflowRun {
    pub kind: WorkflowKind,
    pub stage: Stage,
    pub session_ref: CardId,
    pub transcript: Vec<Envelope>,
    pub pending_amount: Option<Money>,
    pub pending_account: Option<AccountId>,
    /// Deposited notes, or notes to dispense for a withdrawal.
    pub notes: Option<NoteBundle>,
    pub record: Option<TransactionRecord>,
    card_account: AccountId,
    customer: CustomerId,
    pin_prompted: bool,
}

impl WorkflowRun {
    pub fn last(&self) -> Option<&Envelope> {
        self.transcript.last()
    }

    /// The `Result` of the final response, if any.
    pub fn final_result(&self) -> Option<&str> {
        self.last().and_then(|e| e.result.as_deref())
    }

    pub fn payout(&self) -> Option<&NoteBundle> {
        match (self.kind, self.stage) {
            (WorkflowKind::Withdraw, Stage::Done) => self.notes.as_ref(),
            _ => None,
        }
    }

    /// The account debited by this run.
    pub fn source(&self) -> AccountId {
        match self.kind {
            WorkflowKind::Deposit => AccountId::cash(),
            _ => self.card_account.clone(),
        }
    }

    fn destination(&self) -> Option<AccountId> {
        match self.kind {
            WorkflowKind::Withdraw => Some(AccountId::cash()),
            _ => self.pending_account.clone(),
        }
    }
}

/// Maps wire account text to a ledger account: trims, and reads the
/// currency-detector label as the CASH account.
pub fn resolve_account(text: &AccountId) -> AccountId {
    let trimmed = text.as_str().trim();
    if trimmed.eq_ignore_ascii_case(CASH_LABEL) || trimmed == AccountId::cash().as_str() {
        AccountId::cash()
    } else {
        AccountId::new(trimmed)
    }
}

fn wire_account(id: &AccountId) -> AccountId {
    if *id == AccountId::cash() {
        AccountId::new(CASH_LABEL)
    } else {
        id.clone()
    }
}

/// Executes workflows against a ledger.
pub struct Terminal {
    ledger: Arc<Ledger>,
    clock: Arc<dyn Clock>,
    denominations: Denominations,
}

impl Terminal {
    pub fn new(ledger: Arc<Ledger>, clock: Arc<dyn Clock>) -> Self {
        Terminal::with_denominations(ledger, clock, Denominations::default())
    }

    pub fn with_denominations(ledger: Arc<Ledger>, clock: Arc<dyn Clock>, denominations: Denominations) -> Self {
        Terminal {
            ledger,
            clock,
            denominations,
        }
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn denominations(&self) -> &Denominations {
        &self.denominations
    }

    /// Opens a run for `session`. Refused unless the card is authenticated;
    /// clears any PIN verification left from an earlier run.
    pub fn begin(&self, kind: WorkflowKind, session: &mut CardSession) -> Result<WorkflowRun, WorkflowError> {
        if !session.card_authenticated {
            return Err(WorkflowError::CardNotAuthenticated);
        }
        let card = self
            .ledger
            .card(&session.card_id)
            .map_err(|_| WorkflowError::CardUnavailable(session.card_id.clone()))?;
        if card.status != CardStatus::Active {
            return Err(WorkflowError::CardUnavailable(card.card_id));
        }
        let customer = self.ledger.owner_of(&card.account_id)?;
        session.pin_verified = false;
        Ok(WorkflowRun {
            kind,
            stage: Stage::AwaitAmount,
            session_ref: card.card_id,
            transcript: Vec::new(),
            pending_amount: None,
            pending_account: None,
            notes: None,
            record: None,
            card_account: card.account_id,
            customer,
            pin_prompted: false,
        })
    }

    /// Feeds one request to the run and returns the response. Requests that
    /// do not fit the current stage are refused without touching the
    /// transcript.
    pub fn step(
        &self,
        run: &mut WorkflowRun,
        session: &mut CardSession,
        request: Envelope,
    ) -> Result<Envelope, WorkflowError> {
        if session.card_id != run.session_ref {
            return Err(WorkflowError::WrongSession(run.session_ref.clone()));
        }
        if request.is_response() {
            return Err(WorkflowError::NotARequest);
        }
        let allowed = match (run.stage, request.method) {
            (Stage::AwaitAmount, Method::EnterAmount) => true,
            (Stage::AwaitPin, Method::EnterPin) => !run.pin_prompted,
            (Stage::AwaitPin, Method::VerifyPin) => run.pin_prompted,
            (Stage::PinVerified | Stage::AwaitAccount, Method::Transmit) => session.is_transaction_capable(),
            _ => false,
        };
        if !allowed {
            return Err(WorkflowError::OutOfSequence {
                stage: run.stage,
                method: request.method,
            });
        }
        let response = match request.method {
            Method::EnterAmount => self.enter_amount(run, &request),
            Method::EnterPin => {
                run.pin_prompted = true;
                self.reply(&request, results::PIN)
            }
            Method::VerifyPin => self.verify_pin(run, session, &request)?,
            Method::Transmit => self.transmit(run, session, &request),
            _ => unreachable!("filtered above"),
        };
        run.transcript.push(request);
        run.transcript.push(response.clone());
        Ok(response)
    }

    fn reply(&self, request: &Envelope, result: &str) -> Envelope {
        request.respond(result, self.clock.now())
    }

    fn fill_response(&self, run: &WorkflowRun, mut response: Envelope) -> Envelope {
        response.from_account = Some(wire_account(&run.source()));
        response.to_account = run.destination().map(|a| wire_account(&a));
        response.amount = run.pending_amount;
        response
    }

    /// Merges account, amount and notes from `request` into the run.
    fn absorb(&self, run: &mut WorkflowRun, request: &Envelope) -> Result<(), String> {
        if let Some(from) = &request.from_account {
            if resolve_account(from) != run.source() {
                return Err("from account does not match the card".into());
            }
        }
        if let Some(to) = &request.to_account {
            let to = resolve_account(to);
            let expected = match run.kind {
                WorkflowKind::Withdraw => Some(AccountId::cash()),
                _ => run.pending_account.clone(),
            };
            match expected {
                Some(expected) if expected != to => return Err("to account does not match".into()),
                None if to == AccountId::cash() => return Err("cash is not a valid recipient".into()),
                _ => {}
            }
            if run.kind != WorkflowKind::Withdraw {
                run.pending_account = Some(to);
            }
        }
        let mut amount = request.amount;
        if run.kind == WorkflowKind::Deposit {
            if let Some(text) = request.extra(NOTES_KEY) {
                let bundle: NoteBundle = text.parse().map_err(|e: CashError| e.to_string())?;
                let total = self.denominations.count(&bundle).map_err(|e| e.to_string())?;
                if amount.is_some_and(|a| a != total) {
                    return Err("amount does not match counted notes".into());
                }
                amount = Some(total);
                run.notes = Some(bundle);
            }
        }
        if let Some(amount) = amount {
            if !amount.is_positive() {
                return Err("amount must be positive".into());
            }
            if run.pending_amount.is_some_and(|p| p != amount) {
                return Err("amount does not match".into());
            }
            if run.kind == WorkflowKind::Deposit && run.notes.is_none() {
                return Err("deposit needs counted notes".into());
            }
            if run.kind == WorkflowKind::Withdraw {
                run.notes = Some(self.denominations.payout(amount).map_err(|e| e.to_string())?);
            }
            run.pending_amount = Some(amount);
        }
        Ok(())
    }

    fn enter_amount(&self, run: &mut WorkflowRun, request: &Envelope) -> Envelope {
        match self.absorb(run, request) {
            Ok(()) => {
                run.stage = Stage::AwaitPin;
                self.fill_response(run, self.reply(request, run.kind.amount_accepted()))
            }
            Err(detail) => {
                run.stage = Stage::Failed;
                self.fill_response(
                    run,
                    request
                        .respond(results::NOT_OK, self.clock.now())
                        .with_error(wire_errors::internal(&detail)),
                )
            }
        }
    }

    fn verify_pin(
        &self,
        run: &mut WorkflowRun,
        session: &mut CardSession,
        request: &Envelope,
    ) -> Result<Envelope, WorkflowError> {
        let verified = match request.pin.as_deref() {
            Some(pin) => match self.ledger.verify_pin(&run.customer, pin) {
                Ok(ok) => ok,
                Err(LedgerError::PinLocked) => false,
                Err(other) => return Err(other.into()),
            },
            None => false,
        };
        session.pin_verified = verified;
        let response = if verified {
            run.stage = if run.pending_account.is_none() && run.kind != WorkflowKind::Withdraw {
                Stage::AwaitAccount
            } else {
                Stage::PinVerified
            };
            self.reply(request, results::VERIFIED)
        } else {
            run.stage = Stage::Failed;
            request
                .respond(results::NOT_VERIFIED, self.clock.now())
                .with_error(wire_errors::VERIFICATION_UNSUCCESSFUL)
        };
        Ok(response)
    }

    fn transmit(&self, run: &mut WorkflowRun, session: &mut CardSession, request: &Envelope) -> Envelope {
        // one verified PIN buys one transmit
        session.pin_verified = false;
        let outcome = self.absorb(run, request).and_then(|()| {
            let to = run.destination().ok_or("no recipient account")?;
            let amount = run.pending_amount.ok_or("no amount")?;
            Ok((to, amount))
        });
        let failed = |run: &mut WorkflowRun, error: String| {
            run.stage = Stage::Failed;
            request
                .respond(results::NOT_TRANSMITTED, self.clock.now())
                .with_error(error)
        };
        let response = match outcome {
            Err(detail) => failed(run, wire_errors::internal(&detail)),
            Ok((to, amount)) => match self.ledger.transfer(&run.source(), &to, amount, run.kind.tx_kind()) {
                Ok(record) => {
                    run.record = Some(record);
                    run.stage = Stage::Done;
                    let mut response = self.reply(request, run.kind.transmitted());
                    if let Some(payout) = run.payout() {
                        response = response.with_extra(PAYOUT_KEY, payout.to_string());
                    }
                    response
                }
                Err(e) => failed(run, e.wire_error()),
            },
        };
        self.fill_response(run, response)
    }

    fn request(&self, method: Method) -> Envelope {
        Envelope::request(method, self.clock.now())
    }

    /// Feeds the standard four-request sequence, stopping early if the run
    /// fails.
    fn drive(
        &self,
        mut run: WorkflowRun,
        session: &mut CardSession,
        entry: Envelope,
        pin: &str,
    ) -> Result<WorkflowRun, WorkflowError> {
        let transmit = Envelope {
            method: Method::Transmit,
            free_text: None,
            extras: Default::default(),
            ..entry.clone()
        };
        let steps = [
            entry,
            self.request(Method::EnterPin).with_text(run.kind.pin_prompt()),
            self.request(Method::VerifyPin)
                .with_text(prompts::VERIFYING_PIN)
                .with_pin(pin),
            Envelope {
                timestamp: self.clock.now(),
                ..transmit
            },
        ];
        for request in steps {
            if run.stage.is_terminal() {
                break;
            }
            self.step(&mut run, session, request)?;
        }
        Ok(run)
    }

    pub fn run_pay_over_counter(
        &self,
        session: &mut CardSession,
        amount: Money,
        pin: &str,
        recipient: &AccountId,
    ) -> Result<WorkflowRun, WorkflowError> {
        self.run_transfer(WorkflowKind::PayOverCounter, session, amount, pin, recipient)
    }

    pub fn run_account_to_account(
        &self,
        session: &mut CardSession,
        amount: Money,
        pin: &str,
        recipient: &AccountId,
    ) -> Result<WorkflowRun, WorkflowError> {
        self.run_transfer(WorkflowKind::AccountToAccount, session, amount, pin, recipient)
    }

    fn run_transfer(
        &self,
        kind: WorkflowKind,
        session: &mut CardSession,
        amount: Money,
        pin: &str,
        recipient: &AccountId,
    ) -> Result<WorkflowRun, WorkflowError> {
        let run = self.begin(kind, session)?;
        let entry = self
            .request(Method::EnterAmount)
            .with_to(recipient.clone())
            .with_from(run.card_account.clone())
            .with_amount(amount);
        self.drive(run, session, entry, pin)
    }

    pub fn run_cash_withdrawal(
        &self,
        session: &mut CardSession,
        amount: Money,
        pin: &str,
    ) -> Result<WorkflowRun, WorkflowError> {
        let run = self.begin(WorkflowKind::Withdraw, session)?;
        let entry = self
            .request(Method::EnterAmount)
            .with_to(CASH_LABEL)
            .with_from(run.card_account.clone())
            .with_amount(amount);
        self.drive(run, session, entry, pin)
    }

    /// Deposits `notes` into `target`. An empty bundle is refused before
    /// anything is sent.
    pub fn run_cash_deposit(
        &self,
        session: &mut CardSession,
        notes: &NoteBundle,
        pin: &str,
        target: &AccountId,
    ) -> Result<WorkflowRun, WorkflowError> {
        if notes.is_empty() {
            return Err(CashError::EmptyNotes.into());
        }
        let run = self.begin(WorkflowKind::Deposit, session)?;
        let mut entry = self
            .request(Method::EnterAmount)
            .with_to(target.clone())
            .with_from(CASH_LABEL)
            .with_extra(NOTES_KEY, notes.to_string());
        if let Some(total) = notes.total() {
            entry = entry.with_amount(total);
        }
        self.drive(run, session, entry, pin)
    }
}
