//! Stage-order checker for transaction transcripts.

use std::fmt;

use super::{Envelope, Method};

/// The request order every transaction transcript follows.
pub const WORKFLOW_ORDER: [Method; 4] = [
    Method::EnterAmount,
    Method::EnterPin,
    Method::VerifyPin,
    Method::Transmit,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A request arrived before its stage.
    OutOfOrder { method: Method },
    /// A request was not followed by its response.
    MissingResponse { method: Method },
    /// A response with no outstanding request of the same method.
    UnpairedResponse { method: Method },
    /// Something followed a response whose `error` was set.
    ContinuedAfterError,
    EmptyTranscript,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfOrder { method } => write!(f, "{method} is out of order"),
            Violation::MissingResponse { method } => write!(f, "{method} request has no response"),
            Violation::UnpairedResponse { method } => {
                write!(f, "{method} response without a request")
            }
            Violation::ContinuedAfterError => f.write_str("messages follow an error response"),
            Violation::EmptyTranscript => f.write_str("empty transcript"),
        }
    }
}

/// Checks that `transcript` is a prefix of
/// EnterAmount → EnterPIN → VerifyPIN → Transmit, each request immediately
/// answered, with nothing after an error response. A trailing unanswered
/// request is allowed (the run is still in flight).
pub fn validate_sequence(transcript: &[Envelope]) -> Vec<Violation> {
    if transcript.is_empty() {
        return vec![Violation::EmptyTranscript];
    }
    let mut violations = Vec::new();
    let mut next_stage = 0usize;
    let mut outstanding: Option<Method> = None;

    for (i, env) in transcript.iter().enumerate() {
        if i > 0 {
            let prev = &transcript[i - 1];
            if prev.is_response() && prev.error.is_some() {
                violations.push(Violation::ContinuedAfterError);
                break;
            }
        }
        if env.is_response() {
            match outstanding.take() {
                Some(m) if m == env.method => {}
                _ => violations.push(Violation::UnpairedResponse { method: env.method }),
            }
            continue;
        }
        if let Some(m) = outstanding.take() {
            violations.push(Violation::MissingResponse { method: m });
        }
        outstanding = Some(env.method);
        match WORKFLOW_ORDER.iter().position(|m| *m == env.method) {
            Some(stage) if stage == next_stage => next_stage += 1,
            _ => violations.push(Violation::OutOfOrder { method: env.method }),
        }
    }
    violations
}
