use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use cardpay_core::cardsim::VirtualCard;
use cardpay_core::ledger::{JOURNAL_FILE, KEYSTORE_FILE, REGISTRY_FILE};
use cardpay_core::server::Config;
use cardpay_core::{demo, store, AccountId, CardId, Ledger, LedgerConfig, SystemClock};

pub const CARDS_DIR: &str = "cards";

pub fn card_path(dir: &Path, card: &CardId) -> std::path::PathBuf {
    dir.join(format!("{card}.card.json"))
}

pub fn key_path(dir: &Path, card: &CardId) -> std::path::PathBuf {
    dir.join(format!("{card}.key.json"))
}

fn open(dir: &Path) -> anyhow::Result<Ledger> {
    if !dir.join(REGISTRY_FILE).is_file() {
        bail!("no store at {}", dir.display());
    }
    Ledger::open(dir, Arc::new(SystemClock), LedgerConfig::default())
        .with_context(|| format!("opening store {}", dir.display()))
}

fn is_empty(ledger: &Ledger) -> bool {
    ledger.journal_len() == 0 && ledger.cards().is_empty()
}

pub fn seed(dir: &Path, force: bool) -> anyhow::Result<()> {
    if force && dir.is_dir() {
        let audit = Config {
            store: dir.to_path_buf(),
            ..Config::default()
        }
        .audit_path();
        for path in [dir.join(JOURNAL_FILE), dir.join(REGISTRY_FILE), dir.join(KEYSTORE_FILE), audit] {
            if path.exists() {
                fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
            }
        }
        let cards = dir.join(CARDS_DIR);
        if cards.is_dir() {
            fs::remove_dir_all(&cards)?;
        }
    }
    let ledger = Ledger::open(dir, Arc::new(SystemClock), LedgerConfig::default())
        .with_context(|| format!("opening store {}", dir.display()))?;
    if !is_empty(&ledger) {
        bail!("store {} is not empty (use --force to wipe it)", dir.display());
    }
    let data = demo::seed_demo(&ledger)?;
    ledger.sync()?;

    let cards = dir.join(CARDS_DIR);
    fs::create_dir_all(&cards)?;
    for handle in [&data.cardholder, &data.merchant, &data.admin] {
        let record = ledger.card(&handle.card_id)?;
        let card = VirtualCard::issue(&record);
        card.save(&card_path(&cards, &record.card_id), &key_path(&cards, &record.card_id))?;
        let customer = ledger.customer(&handle.customer_id)?;
        println!(
            "customer {} ({}) account {} card {} balance {}",
            customer.customer_id,
            customer.username,
            record.account_id,
            record.card_id,
            ledger.balance(&record.account_id)?
        );
    }
    Ok(())
}

pub fn replay(path: &Path, upto: Option<u64>) -> anyhow::Result<()> {
    let journal = if path.is_dir() { path.join(JOURNAL_FILE) } else { path.to_path_buf() };
    if !journal.is_file() {
        bail!("no journal at {}", journal.display());
    }
    let state = match upto {
        Some(k) => store::replay_prefix(&journal, k)?,
        None => store::replay(&journal)?,
    };
    println!("records {}", state.last_tx);
    println!("total {}", state.total());
    println!("state {}", state.hash().to_hex());
    Ok(())
}

pub fn inspect(dir: &Path, account: &AccountId, limit: usize) -> anyhow::Result<()> {
    let ledger = open(dir)?;
    let balance = ledger.balance(account)?;
    println!("account {account} balance {balance}");
    let records = ledger.recent_records(account, limit);
    for r in records {
        let reversal = r.reversal_of.map(|id| format!(" reverses #{id}")).unwrap_or_default();
        println!(
            "#{} {} {} {} -> {} {}{}",
            r.tx_id,
            r.timestamp.format("%Y-%m-%dT%H:%M:%SZ"),
            r.kind.as_str(),
            r.from_account,
            r.to_account,
            r.amount,
            reversal
        );
    }
    Ok(())
}
