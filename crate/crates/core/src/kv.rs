//! Flat `key=value` documents used for source descriptors, plans and reports.
//!
//! One pair per line, `#` starts a comment line, keys keep insertion order.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an existing value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse(format!("missing key {key:?}")))
    }

    pub fn parse_field<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.require(key)?
            .parse()
            .map_err(|e| Error::Parse(format!("{key}: {e}")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Copies every entry of `other` under `prefix.`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &KvDoc) -> &mut Self {
        for (k, v) in other.entries() {
            self.set(format!("{prefix}.{k}"), v);
        }
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
            }
            doc.set(k, v.trim());
        }
        Ok(doc)
    }
}

impl fmt::Display for KvDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let doc = KvDoc::parse("# comment\nlabel = qrng-a\nlength_bits=1024\n\n").unwrap();
        assert_eq!(doc.get("label"), Some("qrng-a"));
        assert_eq!(doc.parse_field::<u64>("length_bits").unwrap(), 1024);
        assert_eq!(doc.to_string(), "label=qrng-a\nlength_bits=1024\n");
        assert_eq!(KvDoc::parse(&doc.to_string()).unwrap(), doc);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvDoc::parse("novalue").is_err());
        assert!(KvDoc::parse("=x").is_err());
        assert!(KvDoc::new().require("missing").is_err());
    }
}
