//! Tolerant reader for flat JSON-like objects.
//!
//! Accepts strict JSON plus: missing or repeated commas between members,
//! typographic quotes, and bare values that run to the end of the line.
//! Nested objects and arrays are rejected.

use super::ProtocolError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Scalar {
    Text(String),
    Null,
}

fn normalize_quotes(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' => '"',
            '\u{2018}' | '\u{2019}' => '\'',
            '\u{00A0}' => ' ',
            other => other,
        })
        .collect()
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, detail: impl Into<String>) -> ProtocolError {
        ProtocolError::Syntax {
            offset: self.pos,
            detail: detail.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn skip_ws_and_commas(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace() || c == ',') {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ProtocolError> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(self.err(format!("expected {want:?}, found {c:?}"))),
            None => Err(self.err(format!("expected {want:?}, found end of input"))),
        }
    }

    /// A double-quoted JSON string starting at the cursor.
    fn string(&mut self) -> Result<String, ProtocolError> {
        let start = self.pos;
        self.expect('"')?;
        let mut escaped = false;
        loop {
            match self.bump() {
                None => return Err(self.err("unterminated string")),
                Some('\\') if !escaped => escaped = true,
                Some('"') if !escaped => break,
                Some(_) => escaped = false,
            }
        }
        serde_json::from_str(&self.src[start..self.pos]).map_err(|e| self.err(e.to_string()))
    }

    /// An unquoted value, up to end of line, a comma or a closing brace.
    fn bare(&mut self) -> Scalar {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == '\n' || c == ',' || c == '}' {
                break;
            }
            self.bump();
        }
        let raw = self.src[start..self.pos].trim().trim_matches('"').trim();
        if raw == "null" {
            Scalar::Null
        } else {
            Scalar::Text(raw.to_string())
        }
    }
}

pub(crate) fn parse_flat_object(text: &str) -> Result<Vec<(String, Scalar)>, ProtocolError> {
    let normalized = normalize_quotes(text);
    let mut cur = Cursor {
        src: &normalized,
        pos: 0,
    };
    cur.skip_ws();
    cur.expect('{')?;
    let mut members = Vec::new();
    loop {
        cur.skip_ws_and_commas();
        match cur.peek() {
            Some('}') => {
                cur.bump();
                break;
            }
            Some('"') => {}
            Some(c) => return Err(cur.err(format!("expected key, found {c:?}"))),
            None => return Err(cur.err("unterminated object")),
        }
        let key = cur.string()?;
        cur.skip_ws();
        cur.expect(':')?;
        while matches!(cur.peek(), Some(c) if c == ' ' || c == '\t') {
            cur.bump();
        }
        let value = match cur.peek() {
            Some('"') => {
                let s = cur.string()?;
                // tolerate a stray closing quote, e.g. `"13-5-2012""`
                if cur.peek() == Some('"') {
                    cur.bump();
                }
                Scalar::Text(s)
            }
            Some('{') | Some('[') => return Err(cur.err("nested values are not supported")),
            Some(_) => cur.bare(),
            None => return Err(cur.err("missing value")),
        };
        members.push((key, value));
    }
    cur.skip_ws();
    if cur.pos != normalized.len() {
        return Err(cur.err("trailing characters after object"));
    }
    Ok(members)
}
