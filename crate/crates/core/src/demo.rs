//! The demo data set: an admin, the cardholder "Rum" and a merchant.

use crate::ids::{AccountId, CardId};
use crate::ledger::{CustomerHandle, CustomerProfile, Ledger, LedgerError, NewCustomer};
use crate::money::Money;

pub const ADMIN_USERNAME: &str = "1";
pub const ADMIN_PASSWORD: &str = "1";
pub const ADMIN_ACCOUNT: &str = "Admin";

pub const CARDHOLDER_NAME: &str = "Rum";
pub const CARDHOLDER_USERNAME: &str = "rum";
pub const CARDHOLDER_PASSWORD: &str = "rum";
pub const CARDHOLDER_PIN: &str = "1234";
pub const CARDHOLDER_ACCOUNT: &str = "User";
pub const CARDHOLDER_CARD: &str = "1";
pub const CARDHOLDER_BALANCE_RUPEES: i64 = 120;

pub const MERCHANT_USERNAME: &str = "merchant";
pub const MERCHANT_PASSWORD: &str = "merchant";
pub const MERCHANT_PIN: &str = "4321";
pub const MERCHANT_ACCOUNT: &str = "Merchant";

#[derive(Debug, Clone)]
pub struct DemoData {
    pub admin: CustomerHandle,
    pub cardholder: CustomerHandle,
    pub merchant: CustomerHandle,
}

impl DemoData {
    pub fn cardholder_card(&self) -> &CardId {
        &self.cardholder.card_id
    }
}

fn person(name: &str, account: &str, card: &str, user: &str, pass: &str, pin: &str) -> NewCustomer {
    NewCustomer {
        profile: CustomerProfile {
            name: name.into(),
            account_id: Some(account.into()),
            ..Default::default()
        },
        initial_balance: Money::zero(),
        username: user.into(),
        password: pass.into(),
        pin: pin.into(),
        admin: false,
        card_id: Some(card.into()),
    }
}

/// Adds the demo customers to `ledger`. Fails if any of them exists.
pub fn seed_demo(ledger: &Ledger) -> Result<DemoData, LedgerError> {
    let cardholder = ledger.add_customer(NewCustomer {
        initial_balance: Money::from_rupees(CARDHOLDER_BALANCE_RUPEES),
        ..person(
            CARDHOLDER_NAME,
            CARDHOLDER_ACCOUNT,
            CARDHOLDER_CARD,
            CARDHOLDER_USERNAME,
            CARDHOLDER_PASSWORD,
            CARDHOLDER_PIN,
        )
    })?;
    let merchant = ledger.add_customer(person(
        "Merchant",
        MERCHANT_ACCOUNT,
        "2",
        MERCHANT_USERNAME,
        MERCHANT_PASSWORD,
        MERCHANT_PIN,
    ))?;
    let admin = ledger.add_customer(NewCustomer {
        admin: true,
        ..person("Administrator", ADMIN_ACCOUNT, "0", ADMIN_USERNAME, ADMIN_PASSWORD, "0000")
    })?;
    Ok(DemoData {
        admin,
        cardholder,
        merchant,
    })
}

pub fn cardholder_account() -> AccountId {
    AccountId::new(CARDHOLDER_ACCOUNT)
}

pub fn merchant_account() -> AccountId {
    AccountId::new(MERCHANT_ACCOUNT)
}
