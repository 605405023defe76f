use std::path::PathBuf;

use anyhow::{bail, Context};
use cardpay_core::cardsim::{mutual_authenticate, AuthAnswer, CardError, Mac, Nonce, ServerChannel, VirtualCard};
use cardpay_core::protocol::encode_transcript;
use cardpay_core::server::api::{
    AuthenticateRequest, AuthenticateResponse, ChallengeRequest, ChallengeResponse, ErrorBody, LoginRequest,
    LoginResponse,
};
use cardpay_core::server::TRANSACTION_KEY;
use cardpay_core::workflows::{
    prompts, Denominations, WorkflowKind, CASH_LABEL, NOTES_KEY,
};
use cardpay_core::{decode, demo, encode, AccountId, CardId, Clock, Envelope, Method, Money, SystemClock};
use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::store::{card_path, key_path};

/// A logged-in operator terminal talking to the server over HTTP.
struct Terminal {
    http: Client,
    base: String,
    token: String,
}

impl Terminal {
    fn login(base: &str, username: &str, password: &str) -> anyhow::Result<Self> {
        let http = Client::new();
        let base = base.trim_end_matches('/').to_string();
        let resp = http
            .post(format!("{base}/login"))
            .json(&LoginRequest {
                username: username.into(),
                password: password.into(),
            })
            .send()
            .with_context(|| format!("cannot reach {base}"))?;
        if !resp.status().is_success() {
            let status = resp.status();
            let body: ErrorBody = resp.json().unwrap_or(ErrorBody { error: String::new() });
            bail!("login refused ({status}): {}", body.error);
        }
        let login: LoginResponse = resp.json()?;
        Ok(Terminal {
            http,
            base,
            token: login.token,
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, CardError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .bearer_auth(&self.token)
            .json(body)
            .send()
            .map_err(|e| CardError::Channel(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(CardError::Channel(format!("{path}: HTTP {}", resp.status())));
        }
        resp.json().map_err(|e| CardError::Channel(e.to_string()))
    }

    fn rpc(&self, request: &Envelope) -> anyhow::Result<Envelope> {
        let text = self
            .http
            .post(format!("{}/rpc", self.base))
            .bearer_auth(&self.token)
            .body(encode(request))
            .send()?
            .text()?;
        decode(&text).with_context(|| format!("undecodable reply {text:?}"))
    }
}

impl ServerChannel for Terminal {
    fn challenge(&self, card_id: &CardId) -> Result<Nonce, CardError> {
        let resp: ChallengeResponse = self.post(
            "/card/challenge",
            &ChallengeRequest {
                card_id: card_id.clone(),
            },
        )?;
        Nonce::from_hex(&resp.nonce).ok_or_else(|| CardError::Channel("malformed nonce".into()))
    }

    fn authenticate(
        &self,
        card_id: &CardId,
        server_nonce: &Nonce,
        card_mac: &Mac,
        card_nonce: &Nonce,
    ) -> Result<AuthAnswer, CardError> {
        let resp: AuthenticateResponse = self.post(
            "/card/authenticate",
            &AuthenticateRequest {
                card_id: card_id.clone(),
                server_nonce: server_nonce.to_hex(),
                card_mac: card_mac.to_hex(),
                card_nonce: card_nonce.to_hex(),
            },
        )?;
        resp.into_answer()
    }
}

pub struct Demo {
    pub server: String,
    pub username: String,
    pub password: String,
    pub card_dir: PathBuf,
    pub card: CardId,
    pub pin: String,
    pub kind: WorkflowKind,
    pub amount: Money,
    pub to: Option<AccountId>,
}

pub struct Outcome {
    /// Every request and reply, PINs masked.
    pub transcript: String,
    pub succeeded: bool,
}

impl Demo {
    pub fn run(&self) -> anyhow::Result<Outcome> {
        let card = VirtualCard::load(
            &card_path(&self.card_dir, &self.card),
            Some(&key_path(&self.card_dir, &self.card)),
        )
        .with_context(|| format!("loading card {} from {}", self.card, self.card_dir.display()))?;
        let terminal = Terminal::login(&self.server, &self.username, &self.password)?;
        let session = mutual_authenticate(&card, &terminal, SystemClock.now())?;
        if !(session.card_authenticated && session.server_authenticated) {
            bail!("card authentication failed");
        }

        let entry = self.entry(&card.account_id)?;
        let transmit = Envelope {
            method: Method::Transmit,
            free_text: None,
            extras: Default::default(),
            ..entry.clone()
        };
        let steps = [
            entry,
            Envelope::request(Method::EnterPin, SystemClock.now()).with_text(self.kind.pin_prompt()),
            Envelope::request(Method::VerifyPin, SystemClock.now())
                .with_text(prompts::VERIFYING_PIN)
                .with_pin(self.pin.clone()),
            transmit,
        ];
        let mut transcript = Vec::new();
        let mut succeeded = false;
        for mut request in steps {
            request.timestamp = SystemClock.now();
            let reply = terminal.rpc(&request)?;
            transcript.push(request.redacted());
            let failed = reply.error.is_some();
            succeeded = request.method == Method::Transmit && !failed;
            transcript.push(reply.redacted());
            if failed {
                break;
            }
        }
        Ok(Outcome {
            transcript: encode_transcript(&transcript),
            succeeded,
        })
    }

    fn entry(&self, card_account: &AccountId) -> anyhow::Result<Envelope> {
        let base = Envelope::request(Method::EnterAmount, SystemClock.now())
            .with_extra(TRANSACTION_KEY, self.kind.slug())
            .with_amount(self.amount);
        let recipient = || self.to.clone().unwrap_or_else(demo::merchant_account);
        Ok(match self.kind {
            WorkflowKind::PayOverCounter | WorkflowKind::AccountToAccount => {
                base.with_to(recipient()).with_from(card_account.clone())
            }
            WorkflowKind::Withdraw => base.with_to(CASH_LABEL).with_from(card_account.clone()),
            WorkflowKind::Deposit => {
                let notes = Denominations::default()
                    .payout(self.amount)
                    .map_err(|e| anyhow::anyhow!("cannot make {} from notes: {e}", self.amount))?;
                base.with_to(self.to.clone().unwrap_or_else(|| card_account.clone()))
                    .with_from(CASH_LABEL)
                    .with_extra(NOTES_KEY, notes.to_string())
            }
        })
    }
}
