//! Authoritative account store.
//!
//! Every balance change is a [`TransactionRecord`] appended to the journal
//! (when the ledger is file-backed) before it is applied in memory, under a
//! single writer lock. The signed sum of all balances, system accounts
//! included, is zero after every operation.

pub mod digest;
mod registry;
mod types;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::ids::{AccountId, CardId, CustomerId};
use crate::money::{Currency, Money};
use crate::protocol::wire_errors;
use crate::store::{
    state_hash, FaultInjector, FaultPoint, Journal, StateHash, StoreError, SyncPolicy,
};

use self::digest::SecretDigest;
use self::registry::{
    read_json, write_json, AccountEntry, CardEntry, Registry,
};
pub use self::registry::{PendingDelta, SyncMark, JOURNAL_FILE, KEYSTORE_FILE, REGISTRY_FILE};
pub use self::types::*;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("username {0:?} is already taken")]
    DuplicateUsername(String),
    #[error("account {0} already exists")]
    DuplicateAccount(AccountId),
    #[error("customer {0} already exists")]
    DuplicateCustomer(CustomerId),
    #[error("card {0} already exists")]
    DuplicateCard(CardId),
    #[error("PIN must be 4 to 8 digits")]
    InvalidPin,
    #[error("unknown customer {0}")]
    UnknownCustomer(CustomerId),
    #[error("account {0} not found")]
    AccountNotFound(AccountId),
    #[error("unknown card {0}")]
    UnknownCard(CardId),
    #[error("account {account} has {balance}, needs {requested}")]
    InsufficientFunds {
        account: AccountId,
        balance: Money,
        requested: Money,
    },
    #[error("source and destination are the same account")]
    SameAccount,
    #[error("amount must be positive, got {0}")]
    NonPositiveAmount(Money),
    #[error("negative initial balance {0}")]
    NegativeBalance(Money),
    #[error("unsupported currency {0}")]
    WrongCurrency(Currency),
    #[error("{0} records cannot be created by a plain transfer")]
    InvalidKind(TxKind),
    #[error("no matching transaction to cancel")]
    NoMatchingTransaction,
    #[error("too many failed PIN attempts")]
    PinLocked,
    #[error("invalid credentials")]
    AuthFailed,
    #[error("balance overflow")]
    Overflow,
    #[error("ledger crashed and must be reopened")]
    Poisoned,
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl LedgerError {
    /// The string put in a response's `Error` field.
    pub fn wire_error(&self) -> String {
        match self {
            LedgerError::AccountNotFound(_) => wire_errors::ACCOUNT_NOT_FOUND.to_string(),
            LedgerError::InsufficientFunds { .. } => wire_errors::NOT_ENOUGH_CASH.to_string(),
            LedgerError::PinLocked => wire_errors::VERIFICATION_UNSUCCESSFUL.to_string(),
            LedgerError::NoMatchingTransaction => wire_errors::internal("no matching transaction"),
            LedgerError::SameAccount => wire_errors::internal("same account"),
            LedgerError::Store(_) | LedgerError::Poisoned => wire_errors::internal("storage failure"),
            other => wire_errors::internal(&other.to_string()),
        }
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, LedgerError::Store(StoreError::Crashed(_)))
    }
}

pub type Result<T, E = LedgerError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    /// Consecutive failed PIN checks before a customer is locked out.
    /// `None` never locks.
    pub pin_attempt_limit: Option<u32>,
    pub sync: SyncPolicy,
    pub faults: FaultInjector,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            pin_attempt_limit: None,
            sync: SyncPolicy::Fsync,
            faults: FaultInjector::default(),
        }
    }
}

/// What happened to one offline delta submitted at sync.
#[derive(Debug)]
pub enum DeltaOutcome {
    Applied(TransactionRecord),
    /// At or below the card's watermark; skipped.
    AlreadyApplied,
    /// Refused by the ledger; the watermark still advances past it.
    Rejected(LedgerError),
}

struct Persistence {
    dir: PathBuf,
    journal: Journal,
}

#[derive(Default)]
struct Inner {
    accounts: BTreeMap<AccountId, Account>,
    customers: BTreeMap<CustomerId, CustomerRecord>,
    usernames: HashMap<String, CustomerId>,
    cards: BTreeMap<CardId, CardRecord>,
    sync_marks: BTreeMap<CardId, SyncMark>,
    records: Vec<TransactionRecord>,
    reversed: HashSet<u64>,
    pin_failures: HashMap<CustomerId, u32>,
    persistence: Option<Persistence>,
    poisoned: bool,
}

pub struct Ledger {
    inner: RwLock<Inner>,
    clock: Arc<dyn Clock>,
    config: LedgerConfig,
    /// Used to keep login timing uniform for unknown usernames.
    decoy: SecretDigest,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.read();
        f.debug_struct("Ledger")
            .field("accounts", &inner.accounts.len())
            .field("records", &inner.records.len())
            .finish()
    }
}

impl Default for Ledger {
    fn default() -> Self {
        Ledger::in_memory(Arc::new(SystemClock))
    }
}

fn system_account(id: AccountId) -> Account {
    Account {
        account_id: id,
        owner: None,
        balance: Money::zero(),
        kind: AccountKind::System,
    }
}

fn valid_pin(pin: &str) -> bool {
    (4..=8).contains(&pin.len()) && pin.bytes().all(|b| b.is_ascii_digit())
}

impl Ledger {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::in_memory_with(clock, LedgerConfig::default())
    }

    pub fn in_memory_with(clock: Arc<dyn Clock>, config: LedgerConfig) -> Self {
        let mut inner = Inner::default();
        for id in [AccountId::genesis(), AccountId::cash()] {
            inner.accounts.insert(id.clone(), system_account(id));
        }
        Ledger {
            inner: RwLock::new(inner),
            clock,
            config,
            decoy: SecretDigest::new(""),
        }
    }

    /// Opens the store directory, creating it (but not its parents) if
    /// missing, and recovers state from the registry and journal.
    pub fn open(dir: impl AsRef<Path>, clock: Arc<dyn Clock>, config: LedgerConfig) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            std::fs::create_dir(&dir).map_err(StoreError::from)?;
        }
        let registry: Registry = read_json(&dir.join(REGISTRY_FILE)).map_err(StoreError::from)?;
        let keys: BTreeMap<CardId, String> =
            read_json(&dir.join(KEYSTORE_FILE)).map_err(StoreError::from)?;
        let (journal, records) =
            Journal::open(dir.join(JOURNAL_FILE), config.sync, config.faults.clone())?;

        let ledger = Self::in_memory_with(clock, config);
        {
            let mut inner = ledger.write();
            for customer in registry.customers {
                inner
                    .usernames
                    .insert(customer.username.clone(), customer.customer_id.clone());
                inner.customers.insert(customer.customer_id.clone(), customer);
            }
            for entry in registry.accounts {
                inner.accounts.insert(
                    entry.account_id.clone(),
                    Account {
                        account_id: entry.account_id,
                        owner: Some(entry.owner),
                        balance: Money::zero(),
                        kind: AccountKind::Customer,
                    },
                );
            }
            for card in registry.cards {
                let key = keys
                    .get(&card.card_id)
                    .and_then(|k| SecretKey::from_hex(k))
                    .ok_or_else(|| {
                        StoreError::Io(std::io::Error::other(format!(
                            "keystore has no key for card {}",
                            card.card_id
                        )))
                    })?;
                inner.cards.insert(
                    card.card_id.clone(),
                    CardRecord {
                        card_id: card.card_id,
                        card_number: card.card_number,
                        account_id: card.account_id,
                        owner_name: card.owner_name,
                        status: card.status,
                        cached_balance: Money::from_minor(card.cached_balance_minor),
                        secret_key: key,
                    },
                );
            }
            for record in &records {
                for id in [&record.from_account, &record.to_account] {
                    if !inner.accounts.contains_key(id) {
                        return Err(StoreError::Replay(crate::store::ReplayError::Ordering {
                            line_no: record.tx_id,
                            reason: format!("journal references unregistered account {id}"),
                        })
                        .into());
                    }
                }
                inner.apply(record.clone())?;
            }
            inner.sync_marks = registry.sync_marks;
            let mut resolved = false;
            let records_len = inner.records.len() as u64;
            for mark in inner.sync_marks.values_mut() {
                if let Some(pending) = mark.pending.take() {
                    if pending.tx_id <= records_len {
                        mark.applied = mark.applied.max(pending.sequence_no);
                    }
                    resolved = true;
                }
            }
            inner.persistence = Some(Persistence { dir, journal });
            if resolved {
                inner.save_registry()?;
            }
        }
        Ok(ledger)
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    fn writable(&self) -> Result<RwLockWriteGuard<'_, Inner>> {
        let inner = self.write();
        if inner.poisoned {
            return Err(LedgerError::Poisoned);
        }
        Ok(inner)
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn store_dir(&self) -> Option<PathBuf> {
        self.read().persistence.as_ref().map(|p| p.dir.clone())
    }

    /// Creates customer, account and active card; funds the initial balance
    /// from GENESIS with a Seed record when it is nonzero.
    pub fn add_customer(&self, new: NewCustomer) -> Result<CustomerHandle> {
        if !valid_pin(&new.pin) {
            return Err(LedgerError::InvalidPin);
        }
        if new.initial_balance.minor_units < 0 {
            return Err(LedgerError::NegativeBalance(new.initial_balance));
        }
        if new.initial_balance.currency != Currency::PKR {
            return Err(LedgerError::WrongCurrency(new.initial_balance.currency));
        }
        let mut inner = self.writable()?;
        if inner.usernames.contains_key(&new.username) {
            return Err(LedgerError::DuplicateUsername(new.username));
        }
        let customer_id = match &new.profile.customer_id {
            Some(id) => {
                let id = CustomerId::new(id.trim());
                if inner.customers.contains_key(&id) {
                    return Err(LedgerError::DuplicateCustomer(id));
                }
                id
            }
            None => inner.fresh_id(|n| CustomerId::new(format!("C{n:04}")), |i, id| {
                i.customers.contains_key(id)
            }),
        };
        let account_id = match &new.profile.account_id {
            Some(id) => {
                let id = AccountId::new(id.trim());
                if id.is_system() || inner.accounts.contains_key(&id) {
                    return Err(LedgerError::DuplicateAccount(id));
                }
                id
            }
            None => inner.fresh_id(|n| AccountId::new(format!("ACC-{n:04}")), |i, id| {
                i.accounts.contains_key(id)
            }),
        };
        let card_id = match &new.card_id {
            Some(id) => {
                let id = CardId::new(id.trim());
                if inner.cards.contains_key(&id) {
                    return Err(LedgerError::DuplicateCard(id));
                }
                id
            }
            None => inner.fresh_id(|n| CardId::new(n.to_string()), |i, id| i.cards.contains_key(id)),
        };

        let customer = CustomerRecord {
            customer_id: customer_id.clone(),
            name: new.profile.name.clone(),
            phone: new.profile.phone,
            office: new.profile.office,
            room: new.profile.room,
            email: new.profile.email,
            department: new.profile.department,
            username: new.username.clone(),
            password_digest: SecretDigest::new(&new.password),
            pin_digest: SecretDigest::new(&new.pin),
            account_id: account_id.clone(),
            admin: new.admin,
        };
        let card = CardRecord {
            card_id: card_id.clone(),
            card_number: card_id.0.clone(),
            account_id: account_id.clone(),
            owner_name: new.profile.name,
            status: CardStatus::Active,
            cached_balance: Money::zero(),
            secret_key: SecretKey::generate(),
        };
        inner.usernames.insert(new.username, customer_id.clone());
        inner.customers.insert(customer_id.clone(), customer);
        inner.accounts.insert(
            account_id.clone(),
            Account {
                account_id: account_id.clone(),
                owner: Some(customer_id.clone()),
                balance: Money::zero(),
                kind: AccountKind::Customer,
            },
        );
        inner.cards.insert(card_id.clone(), card);
        inner.save_registry()?;
        inner.save_keystore()?;

        if new.initial_balance.is_positive() {
            self.transfer_locked(
                &mut inner,
                &AccountId::genesis(),
                &account_id,
                new.initial_balance,
                TxKind::Seed,
                None,
            )?;
            let funded = inner.accounts[&account_id].balance;
            if let Some(card) = inner.cards.get_mut(&card_id) {
                card.cached_balance = funded;
            }
            inner.save_registry()?;
        }
        Ok(CustomerHandle {
            customer_id,
            account_id,
            card_id,
        })
    }

    /// Constant-time check of `pin` against the customer's stored digest.
    pub fn verify_pin(&self, customer_id: &CustomerId, pin: &str) -> Result<bool> {
        let mut inner = self.write();
        let customer = inner
            .customers
            .get(customer_id)
            .ok_or_else(|| LedgerError::UnknownCustomer(customer_id.clone()))?;
        let failures = inner.pin_failures.get(customer_id).copied().unwrap_or(0);
        if let Some(limit) = self.config.pin_attempt_limit {
            if failures >= limit {
                return Err(LedgerError::PinLocked);
            }
        }
        let ok = customer.pin_digest.matches(pin);
        if ok {
            inner.pin_failures.remove(customer_id);
        } else {
            inner.pin_failures.insert(customer_id.clone(), failures + 1);
        }
        Ok(ok)
    }

    /// Username/password login. Unknown users and wrong passwords fail
    /// identically and take the same digest work.
    pub fn authenticate(&self, username: &str, password: &str) -> Result<CustomerRecord> {
        let inner = self.read();
        let customer = inner
            .usernames
            .get(username)
            .and_then(|id| inner.customers.get(id));
        let digest = customer.map(|c| &c.password_digest).unwrap_or(&self.decoy);
        let ok = digest.matches(password);
        match customer {
            Some(c) if ok => Ok(c.clone()),
            _ => Err(LedgerError::AuthFailed),
        }
    }

    pub fn verify_account(&self, account_id: &AccountId) -> bool {
        self.read().accounts.contains_key(account_id)
    }

    /// True iff the account can cover `amount`; system accounts always can.
    pub fn check_balance(&self, account_id: &AccountId, amount: Money) -> Result<bool> {
        if !amount.is_positive() {
            return Err(LedgerError::NonPositiveAmount(amount));
        }
        let inner = self.read();
        let account = inner
            .accounts
            .get(account_id)
            .ok_or_else(|| LedgerError::AccountNotFound(account_id.clone()))?;
        Ok(account.kind == AccountKind::System || account.balance >= amount)
    }

    pub fn balance(&self, account_id: &AccountId) -> Result<Money> {
        self.read()
            .accounts
            .get(account_id)
            .map(|a| a.balance)
            .ok_or_else(|| LedgerError::AccountNotFound(account_id.clone()))
    }

    pub fn account(&self, account_id: &AccountId) -> Result<Account> {
        self.read()
            .accounts
            .get(account_id)
            .cloned()
            .ok_or_else(|| LedgerError::AccountNotFound(account_id.clone()))
    }

    /// Atomically moves `amount` from `from` to `to` and journals it.
    pub fn transfer(
        &self,
        from: &AccountId,
        to: &AccountId,
        amount: Money,
        kind: TxKind,
    ) -> Result<TransactionRecord> {
        if kind == TxKind::Cancel {
            return Err(LedgerError::InvalidKind(kind));
        }
        let mut inner = self.writable()?;
        self.transfer_locked(&mut inner, from, to, amount, kind, None)
    }

    /// Reverses the most recent non-reversed transfer `originator →
    /// counterparty` of exactly `amount`.
    pub fn cancel(
        &self,
        originator: &AccountId,
        counterparty: &AccountId,
        amount: Money,
    ) -> Result<TransactionRecord> {
        if !amount.is_positive() {
            return Err(LedgerError::NonPositiveAmount(amount));
        }
        let mut inner = self.writable()?;
        let target = inner
            .records
            .iter()
            .rev()
            .find(|r| {
                r.kind != TxKind::Cancel
                    && &r.from_account == originator
                    && &r.to_account == counterparty
                    && r.amount == amount
                    && !inner.reversed.contains(&r.tx_id)
            })
            .map(|r| r.tx_id)
            .ok_or(LedgerError::NoMatchingTransaction)?;
        self.transfer_locked(
            &mut inner,
            counterparty,
            originator,
            amount,
            TxKind::Cancel,
            Some(target),
        )
    }

    fn transfer_locked(
        &self,
        inner: &mut Inner,
        from: &AccountId,
        to: &AccountId,
        amount: Money,
        kind: TxKind,
        reversal_of: Option<u64>,
    ) -> Result<TransactionRecord> {
        if !amount.is_positive() {
            return Err(LedgerError::NonPositiveAmount(amount));
        }
        if amount.currency != Currency::PKR {
            return Err(LedgerError::WrongCurrency(amount.currency));
        }
        if from == to {
            return Err(LedgerError::SameAccount);
        }
        let source = inner
            .accounts
            .get(from)
            .ok_or_else(|| LedgerError::AccountNotFound(from.clone()))?;
        let dest = inner
            .accounts
            .get(to)
            .ok_or_else(|| LedgerError::AccountNotFound(to.clone()))?;
        if source.kind == AccountKind::Customer && source.balance < amount {
            return Err(LedgerError::InsufficientFunds {
                account: from.clone(),
                balance: source.balance,
                requested: amount,
            });
        }
        source.balance.checked_sub(amount).ok_or(LedgerError::Overflow)?;
        dest.balance.checked_add(amount).ok_or(LedgerError::Overflow)?;

        let record = TransactionRecord {
            tx_id: inner.records.len() as u64 + 1,
            kind,
            from_account: from.clone(),
            to_account: to.clone(),
            amount,
            timestamp: self.clock.now(),
            reversal_of,
        };
        if let Some(p) = inner.persistence.as_mut() {
            if let Err(e) = p.journal.append(&record) {
                if matches!(e, StoreError::Crashed(_)) {
                    inner.poisoned = true;
                }
                return Err(e.into());
            }
        }
        inner.apply(record.clone())?;
        if inner.persistence.is_some() && self.config.faults.trip(FaultPoint::PostAck) {
            // the caller still gets its acknowledgement; the process is gone
            inner.poisoned = true;
        }
        Ok(record)
    }

    pub fn customer(&self, customer_id: &CustomerId) -> Result<CustomerRecord> {
        self.read()
            .customers
            .get(customer_id)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownCustomer(customer_id.clone()))
    }

    pub fn customer_by_username(&self, username: &str) -> Option<CustomerRecord> {
        let inner = self.read();
        let id = inner.usernames.get(username)?;
        inner.customers.get(id).cloned()
    }

    /// The customer owning `account_id`, if it is a customer account.
    pub fn owner_of(&self, account_id: &AccountId) -> Result<CustomerId> {
        let inner = self.read();
        let account = inner
            .accounts
            .get(account_id)
            .ok_or_else(|| LedgerError::AccountNotFound(account_id.clone()))?;
        account
            .owner
            .clone()
            .ok_or_else(|| LedgerError::AccountNotFound(account_id.clone()))
    }

    pub fn card(&self, card_id: &CardId) -> Result<CardRecord> {
        self.read()
            .cards
            .get(card_id)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownCard(card_id.clone()))
    }

    pub fn cards(&self) -> Vec<CardRecord> {
        self.read().cards.values().cloned().collect()
    }

    pub fn set_card_status(&self, card_id: &CardId, status: CardStatus) -> Result<()> {
        let mut inner = self.writable()?;
        let card = inner
            .cards
            .get_mut(card_id)
            .ok_or_else(|| LedgerError::UnknownCard(card_id.clone()))?;
        card.status = status;
        inner.save_registry()?;
        Ok(())
    }

    pub fn sync_mark(&self, card_id: &CardId) -> SyncMark {
        self.read().sync_marks.get(card_id).copied().unwrap_or_default()
    }

    /// Submits one offline card delta: negative amounts move money from the
    /// card's account to CASH, positive ones from CASH to the account.
    /// Deltas at or below the card's watermark are skipped.
    pub fn apply_card_delta(
        &self,
        card_id: &CardId,
        sequence_no: u64,
        signed_amount: Money,
        kind: TxKind,
    ) -> Result<DeltaOutcome> {
        let mut inner = self.writable()?;
        let account = inner
            .cards
            .get(card_id)
            .map(|c| c.account_id.clone())
            .ok_or_else(|| LedgerError::UnknownCard(card_id.clone()))?;
        let mark = inner.sync_marks.get(card_id).copied().unwrap_or_default();
        if sequence_no <= mark.applied {
            return Ok(DeltaOutcome::AlreadyApplied);
        }
        let tx_id = inner.records.len() as u64 + 1;
        inner.sync_marks.insert(
            card_id.clone(),
            SyncMark {
                applied: mark.applied,
                pending: Some(PendingDelta { sequence_no, tx_id }),
            },
        );
        inner.save_registry()?;

        let magnitude = Money {
            minor_units: signed_amount.minor_units.saturating_abs(),
            ..signed_amount
        };
        let (from, to) = if signed_amount.minor_units < 0 {
            (account, AccountId::cash())
        } else {
            (AccountId::cash(), account)
        };
        let kind = if kind == TxKind::Cancel { TxKind::Withdraw } else { kind };
        let outcome = match self.transfer_locked(&mut inner, &from, &to, magnitude, kind, None) {
            Ok(record) => DeltaOutcome::Applied(record),
            Err(e) if e.is_crash() => return Err(e),
            Err(e) => DeltaOutcome::Rejected(e),
        };
        inner.sync_marks.insert(
            card_id.clone(),
            SyncMark {
                applied: sequence_no,
                pending: None,
            },
        );
        inner.save_registry()?;
        Ok(outcome)
    }

    /// Sets the server's copy of the card replica to the account balance.
    pub fn refresh_card_cache(&self, card_id: &CardId) -> Result<CardRecord> {
        let mut inner = self.writable()?;
        let account = inner
            .cards
            .get(card_id)
            .map(|c| c.account_id.clone())
            .ok_or_else(|| LedgerError::UnknownCard(card_id.clone()))?;
        let balance = inner.accounts.get(&account).map(|a| a.balance).unwrap_or_default();
        let card = inner.cards.get_mut(card_id).expect("checked above");
        card.cached_balance = balance;
        let card = card.clone();
        inner.save_registry()?;
        Ok(card)
    }

    pub fn records(&self) -> Vec<TransactionRecord> {
        self.read().records.clone()
    }

    /// The last `limit` records touching `account_id`, oldest first.
    pub fn recent_records(&self, account_id: &AccountId, limit: usize) -> Vec<TransactionRecord> {
        let inner = self.read();
        let mut hits: Vec<_> = inner
            .records
            .iter()
            .rev()
            .filter(|r| &r.from_account == account_id || &r.to_account == account_id)
            .take(limit)
            .cloned()
            .collect();
        hits.reverse();
        hits
    }

    pub fn journal_len(&self) -> u64 {
        self.read().records.len() as u64
    }

    pub fn is_reversed(&self, tx_id: u64) -> bool {
        self.read().reversed.contains(&tx_id)
    }

    pub fn accounts(&self) -> Vec<Account> {
        self.read().accounts.values().cloned().collect()
    }

    pub fn balances(&self) -> BTreeMap<AccountId, Money> {
        self.read()
            .accounts
            .iter()
            .map(|(id, a)| (id.clone(), a.balance))
            .collect()
    }

    /// Signed sum of every balance; zero whenever the ledger is consistent.
    pub fn total(&self) -> i128 {
        self.read()
            .accounts
            .values()
            .map(|a| a.balance.minor_units as i128)
            .sum()
    }

    pub fn state_hash(&self) -> StateHash {
        let inner = self.read();
        state_hash(
            inner.accounts.iter().map(|(id, a)| (id, a.balance.minor_units)),
            inner.records.len() as u64,
        )
    }

    pub fn is_poisoned(&self) -> bool {
        self.read().poisoned
    }

    /// Flushes the journal to stable storage.
    pub fn sync(&self) -> Result<()> {
        if let Some(p) = self.write().persistence.as_mut() {
            p.journal.sync().map_err(StoreError::from)?;
        }
        Ok(())
    }
}

impl Inner {
    fn apply(&mut self, record: TransactionRecord) -> Result<()> {
        let amount = record.amount;
        let from = self
            .accounts
            .get_mut(&record.from_account)
            .ok_or_else(|| LedgerError::AccountNotFound(record.from_account.clone()))?;
        from.balance = from.balance.checked_sub(amount).ok_or(LedgerError::Overflow)?;
        let to = self
            .accounts
            .get_mut(&record.to_account)
            .ok_or_else(|| LedgerError::AccountNotFound(record.to_account.clone()))?;
        to.balance = to.balance.checked_add(amount).ok_or(LedgerError::Overflow)?;
        if let Some(target) = record.reversal_of {
            self.reversed.insert(target);
        }
        self.records.push(record);
        Ok(())
    }

    fn fresh_id<T>(&self, make: impl Fn(usize) -> T, taken: impl Fn(&Inner, &T) -> bool) -> T {
        (1..)
            .map(&make)
            .find(|id| !taken(self, id))
            .expect("unbounded id space")
    }

    fn save_registry(&self) -> Result<()> {
        let Some(p) = &self.persistence else {
            return Ok(());
        };
        let registry = Registry {
            customers: self.customers.values().cloned().collect(),
            accounts: self
                .accounts
                .values()
                .filter_map(|a| {
                    a.owner.clone().map(|owner| AccountEntry {
                        account_id: a.account_id.clone(),
                        owner,
                    })
                })
                .collect(),
            cards: self
                .cards
                .values()
                .map(|c| CardEntry {
                    card_id: c.card_id.clone(),
                    card_number: c.card_number.clone(),
                    account_id: c.account_id.clone(),
                    owner_name: c.owner_name.clone(),
                    status: c.status,
                    cached_balance_minor: c.cached_balance.minor_units,
                })
                .collect(),
            sync_marks: self.sync_marks.clone(),
        };
        write_json(&p.dir.join(REGISTRY_FILE), &registry).map_err(StoreError::from)?;
        Ok(())
    }

    fn save_keystore(&self) -> Result<()> {
        let Some(p) = &self.persistence else {
            return Ok(());
        };
        let keys: BTreeMap<&CardId, String> = self
            .cards
            .iter()
            .map(|(id, c)| (id, c.secret_key.to_hex()))
            .collect();
        write_json(&p.dir.join(KEYSTORE_FILE), &keys).map_err(StoreError::from)?;
        Ok(())
    }
}
