//! Flat `key = value` text format used for scene descriptions and pipeline
//! configuration.
//!
//! One entry per line. `#` starts a comment that runs to end of line, blank
//! lines are ignored, keys may repeat (callers decide whether that is
//! allowed). Whitespace around keys and values is trimmed.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T, KvError>
    where
        T::Err: fmt::Display,
    {
        self.value
            .parse::<T>()
            .map_err(|e| self.invalid(e.to_string()))
    }

    pub fn invalid(&self, reason: impl Into<String>) -> KvError {
        KvError::InvalidValue {
            line: self.line,
            key: self.key.clone(),
            reason: reason.into(),
        }
    }

    /// Whitespace-separated fields of the value.
    pub fn fields(&self) -> Vec<&str> {
        self.value.split_whitespace().collect()
    }
}

pub fn parse(text: &str) -> Result<Vec<Entry>, KvError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(KvError::Syntax { line })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError::Syntax { line });
        }
        entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

/// Fails on the first key not in `allowed`, and on repeats of keys not in
/// `repeatable`.
pub fn check_keys(entries: &[Entry], allowed: &[&str], repeatable: &[&str]) -> Result<(), KvError> {
    let mut seen: Vec<&str> = Vec::new();
    for e in entries {
        if !allowed.contains(&e.key.as_str()) {
            return Err(KvError::UnknownKey {
                line: e.line,
                key: e.key.clone(),
            });
        }
        if seen.contains(&e.key.as_str()) && !repeatable.contains(&e.key.as_str()) {
            return Err(KvError::DuplicateKey {
                line: e.line,
                key: e.key.clone(),
            });
        }
        seen.push(&e.key);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let entries = parse("# header\n\nwidth = 64  # trailing\nobject = disk 1 2\n").unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].key, "width");
        assert_eq!(entries[0].parse::<usize>().unwrap(), 64);
        assert_eq!(entries[1].line, 4);
        assert_eq!(entries[1].fields(), vec!["disk", "1", "2"]);
    }

    #[test]
    fn rejects_bad_syntax_and_unknown_keys() {
        assert_eq!(parse("just words"), Err(KvError::Syntax { line: 1 }));
        assert_eq!(parse(" = 3"), Err(KvError::Syntax { line: 1 }));
        let e = parse("a = 1\nb = 2\na = 3").unwrap();
        assert!(matches!(
            check_keys(&e, &["a"], &[]),
            Err(KvError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            check_keys(&e, &["a", "b"], &[]),
            Err(KvError::DuplicateKey { line: 3, .. })
        ));
        assert!(check_keys(&e, &["a", "b"], &["a"]).is_ok());
    }
}
