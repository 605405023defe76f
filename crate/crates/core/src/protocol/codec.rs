use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveTime, SecondsFormat, TimeZone, Utc};

use super::lenient::{parse_flat_object, Scalar};
use super::{Envelope, Method, ProtocolError, NULL_ERROR};
use crate::ids::AccountId;
use crate::money::Money;

/// Result of a decode along with keys that were not recognized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub envelope: Envelope,
    /// Keys that did not map to a core field or a known extra.
    pub ignored_keys: Vec<String>,
}

/// Canonical wire text for `envelope`.
///
/// Key order is fixed: Method, Result, Message, To Account, From Account,
/// Amount, PIN, Time, Date, Timestamp, Error, then extras sorted by key.
/// `Error` is written for every response, as `"null"` when unset.
pub fn encode(envelope: &Envelope) -> String {
    let mut fields: Vec<(&str, String)> = Vec::with_capacity(12 + envelope.extras.len());
    fields.push(("Method", envelope.method.as_str().to_string()));
    if let Some(result) = &envelope.result {
        fields.push(("Result", result.clone()));
    }
    if let Some(text) = &envelope.free_text {
        fields.push(("Message", text.clone()));
    }
    if let Some(to) = &envelope.to_account {
        fields.push(("To Account", to.0.clone()));
    }
    if let Some(from) = &envelope.from_account {
        fields.push(("From Account", from.0.clone()));
    }
    if let Some(amount) = &envelope.amount {
        fields.push(("Amount", amount.to_wire()));
    }
    if let Some(pin) = &envelope.pin {
        fields.push(("PIN", pin.clone()));
    }
    let ts = envelope.timestamp;
    fields.push(("Time", ts.format("%H%M hours").to_string()));
    fields.push(("Date", ts.format("%-d-%-m-%Y").to_string()));
    fields.push(("Timestamp", ts.to_rfc3339_opts(SecondsFormat::Secs, true)));
    match (&envelope.error, envelope.is_response()) {
        (Some(error), _) => fields.push(("Error", error.clone())),
        (None, true) => fields.push(("Error", NULL_ERROR.to_string())),
        (None, false) => {}
    }
    for (key, value) in &envelope.extras {
        fields.push((key.as_str(), value.clone()));
    }

    let mut out = String::from("{\n");
    for (i, (key, value)) in fields.iter().enumerate() {
        out.push_str("  ");
        out.push_str(&json_string(key));
        out.push_str(": ");
        out.push_str(&json_string(value));
        if i + 1 < fields.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push('}');
    out
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn decode(text: &str) -> Result<Envelope, ProtocolError> {
    decode_with_diagnostics(text).map(|d| d.envelope)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Method,
    Result,
    Message,
    To,
    From,
    Amount,
    Pin,
    Time,
    Date,
    Timestamp,
    Error,
}

fn classify(key: &str) -> Option<Field> {
    let k = key.trim().to_ascii_lowercase();
    Some(match k.as_str() {
        "method" | "message type" => Field::Method,
        "result" => Field::Result,
        "message" => Field::Message,
        "to account" => Field::To,
        "from account" => Field::From,
        "amount" => Field::Amount,
        "pin" => Field::Pin,
        "time" => Field::Time,
        "date" => Field::Date,
        "timestamp" => Field::Timestamp,
        "error" => Field::Error,
        _ => return None,
    })
}

/// Lenient decode. See the module docs for what is tolerated.
pub fn decode_with_diagnostics(text: &str) -> Result<Decoded, ProtocolError> {
    let members = parse_flat_object(text)?;

    let mut seen: Vec<Field> = Vec::new();
    let mut method = None;
    let mut to_account = None;
    let mut from_account = None;
    let mut amount = None;
    let mut pin = None;
    let mut result = None;
    let mut error = None;
    let mut free_text = None;
    let mut timestamp = None;
    let mut legacy_time = None;
    let mut legacy_date = None;
    let mut extras = BTreeMap::new();
    let mut ignored_keys = Vec::new();

    for (key, value) in members {
        let Some(field) = classify(&key) else {
            match value {
                Scalar::Text(v) => {
                    extras.insert(key.trim().to_string(), v);
                }
                Scalar::Null => ignored_keys.push(key),
            }
            continue;
        };
        if seen.contains(&field) {
            // first spelling wins
            ignored_keys.push(key);
            continue;
        }
        seen.push(field);
        let Scalar::Text(value) = value else {
            if field == Field::Method {
                return Err(ProtocolError::MissingMethod);
            }
            continue;
        };
        match field {
            Field::Method => method = Some(value.parse::<Method>()?),
            Field::Result => result = Some(value),
            Field::Message => free_text = Some(value),
            Field::To => to_account = Some(AccountId::new(value.trim())),
            Field::From => from_account = Some(AccountId::new(value.trim())),
            Field::Amount => {
                amount = Some(
                    Money::parse_wire(&value).map_err(|_| ProtocolError::BadAmount(value.clone()))?,
                )
            }
            Field::Pin => pin = Some(value),
            Field::Time => legacy_time = Some(value),
            Field::Date => legacy_date = Some(value),
            Field::Timestamp => {
                let parsed = DateTime::parse_from_rfc3339(value.trim()).map_err(|e| {
                    ProtocolError::Syntax {
                        offset: 0,
                        detail: format!("bad Timestamp {value:?}: {e}"),
                    }
                })?;
                timestamp = Some(parsed.with_timezone(&Utc));
            }
            Field::Error => {
                if value != NULL_ERROR {
                    error = Some(value);
                }
            }
        }
    }

    let method = method.ok_or(ProtocolError::MissingMethod)?;
    let timestamp = timestamp
        .or_else(|| legacy_instant(legacy_time.as_deref(), legacy_date.as_deref()))
        .unwrap_or(DateTime::UNIX_EPOCH);

    let mut envelope = Envelope::request(method, timestamp);
    envelope.to_account = to_account;
    envelope.from_account = from_account;
    envelope.amount = amount;
    envelope.pin = pin;
    envelope.result = result;
    envelope.error = error;
    envelope.free_text = free_text;
    envelope.extras = extras;
    Ok(Decoded {
        envelope,
        ignored_keys,
    })
}

/// Best-effort reading of `"1100 hours"` / `"13-5-2012"`.
fn legacy_instant(time: Option<&str>, date: Option<&str>) -> Option<DateTime<Utc>> {
    let date = NaiveDate::parse_from_str(date?.trim(), "%d-%m-%Y").ok()?;
    let time = time
        .and_then(|t| {
            let digits = t.trim().trim_end_matches("hours").trim();
            NaiveTime::parse_from_str(digits, "%H%M").ok()
        })
        .unwrap_or(NaiveTime::MIN);
    Some(Utc.from_utc_datetime(&date.and_time(time)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, ManualClock};

    fn at() -> DateTime<Utc> {
        ManualClock::sample().now()
    }

    #[test]
    fn transmit_success_response_carries_ok_and_null_error() {
        let req = Envelope::request(Method::Transmit, at())
            .with_to("Merchant")
            .with_from("User")
            .with_amount(Money::from_rupees(100));
        let text = encode(&req.respond("OK", at()));
        assert!(text.contains(r#""Result": "OK""#));
        assert!(text.contains(r#""Error": "null""#));
    }

    #[test]
    fn enter_amount_request_renders_rupees_and_accounts() {
        let req = Envelope::request(Method::EnterAmount, at())
            .with_to("Merchant")
            .with_from("User")
            .with_amount(Money::from_rupees(100));
        let text = encode(&req);
        assert!(text.contains(r#""Amount": "100""#));
        assert!(text.contains(r#""To Account": "Merchant""#));
        assert!(text.contains(r#""Time": "1100 hours""#));
        assert!(text.contains(r#""Date": "13-5-2012""#));
        assert!(text.contains(r#""Timestamp": "2012-05-13T11:00:00Z""#));
        assert!(!text.contains("Error"), "requests carry no Error key");
    }

    #[test]
    fn minimal_envelope_round_trips() {
        let env = Envelope::request(Method::EnterAmount, at());
        assert_eq!(decode(&encode(&env)).unwrap(), env);
    }

    #[test]
    fn message_type_alias_and_verified_result() {
        let text = r#"{
            "Message Type": "VerifyPIN",
            "Result": "Verified",
            "Time": "1100 hours",
            "Date": "13-5-2012",
            "Error": "null"
        }"#;
        let env = decode(text).unwrap();
        assert_eq!(env.method, Method::VerifyPin);
        assert_eq!(env.result.as_deref(), Some("Verified"));
        assert_eq!(env.error, None);
        assert_eq!(env.timestamp, at());
    }

    #[test]
    fn method_without_amount_leaves_amount_unset() {
        let env = decode(r#"{"Method":"EnterAmount"}"#).unwrap();
        assert_eq!(env.method, Method::EnterAmount);
        assert_eq!(env.amount, None);
        assert_eq!(env.timestamp, DateTime::UNIX_EPOCH);
    }

    #[test]
    fn rupee_prefix_is_stripped_into_paisa() {
        let env = decode(r#"{"Method": "Transmit", "Amount": "Rs. 100"}"#).unwrap();
        assert_eq!(env.amount, Some(Money::from_minor(10_000)));
    }

    #[test]
    fn lowercase_method_key_and_amount_alias() {
        let env = decode(
            "{\n  \"method\": \"Amount\"\n  \"To Account\": \"User No.1\"\n  \"From Account\": \" User No.2\"\n}",
        )
        .unwrap();
        assert_eq!(env.method, Method::EnterAmount);
        assert_eq!(env.from_account, Some(AccountId::new("User No.2")));
    }

    #[test]
    fn errors() {
        assert_eq!(
            decode(r#"{"Result": "OK"}"#).unwrap_err(),
            ProtocolError::MissingMethod
        );
        assert_eq!(
            decode(r#"{"Method": "Transmit", "Amount": "Rs. lots"}"#).unwrap_err(),
            ProtocolError::BadAmount("Rs. lots".into())
        );
        assert!(matches!(
            decode(r#"{"Method": "Transmit""#).unwrap_err(),
            ProtocolError::Syntax { .. }
        ));
        assert_eq!(
            decode(r#"{"Method": "Refund"}"#).unwrap_err(),
            ProtocolError::UnknownMethod("Refund".into())
        );
    }

    #[test]
    fn unknown_keys_become_extras() {
        let decoded =
            decode_with_diagnostics(r#"{"Method": "AddCustomer", "Customer Name": "Rum", "Note": null}"#)
                .unwrap();
        assert_eq!(decoded.envelope.extra("Customer Name"), Some("Rum"));
        assert_eq!(decoded.ignored_keys, vec!["Note".to_string()]);
    }

    #[test]
    fn pin_is_redacted_in_diagnostics_only() {
        let env = Envelope::request(Method::VerifyPin, at())
            .with_pin("4321")
            .with_extra("Customer Password", "hunter2");
        assert!(encode(&env).contains(r#""PIN": "4321""#));
        let shown = format!("{env} {env:?}");
        assert!(!shown.contains("4321"));
        assert!(!shown.contains("hunter2"));
        assert!(shown.contains("****"));
    }
}
