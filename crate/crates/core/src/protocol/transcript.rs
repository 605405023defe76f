//! Transcript files: canonical envelopes back to back, each followed by a
//! newline.

use super::{decode, encode, Envelope, ProtocolError};

pub fn encode_transcript(envelopes: &[Envelope]) -> String {
    envelopes.iter().map(|e| encode(e) + "\n").collect()
}

/// Splits on lines consisting of a lone `}`.
pub fn decode_transcript(text: &str) -> Result<Vec<Envelope>, ProtocolError> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        current.push_str(line);
        current.push('\n');
        if line.trim_end() == "}" {
            out.push(decode(&current)?);
            current.clear();
        }
    }
    if !current.trim().is_empty() {
        out.push(decode(&current)?);
    }
    Ok(out)
}
