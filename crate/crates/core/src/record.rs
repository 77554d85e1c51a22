//! Flat `key = value` text records.
//!
//! Used for experiment configs, covariance and prior specs, and checkpoints.
//! A `[section]` header prefixes the keys that follow it with `section.`;
//! `#` starts a comment; arrays are comma-separated lists. Floats are written
//! with Rust's shortest round-trip formatting so values survive a
//! write/read cycle bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    entries: BTreeMap<String, String>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(format!("line {}: unterminated section", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(format!("line {}: empty key", lineno + 1)));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if entries.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(Error::parse(format!("line {}: duplicate key `{full}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn set_floats(&mut self, key: impl Into<String>, values: &[f64]) {
        self.set(key, join(values));
    }

    pub fn set_usizes(&mut self, key: impl Into<String>, values: &[usize]) {
        self.set(key, join(values));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::parse(format!("missing key `{key}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|_| Error::parse(format!("key `{key}`: cannot parse `{raw}`")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        if self.contains(key) {
            self.get(key)
        } else {
            Ok(default)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.str(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse()
                    .map_err(|_| Error::parse(format!("key `{key}`: cannot parse `{item}`")))
            })
            .collect()
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> Record {
        let head = format!("{prefix}.");
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&head).map(|rest| (rest.to_string(), v.clone())))
            .collect();
        Record { entries }
    }

    /// Inserts every entry of `other` under `prefix.`.
    pub fn merge_section(&mut self, prefix: &str, other: &Record) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}.{k}"), v.clone());
        }
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let rec = Record::parse(
            "top = 1\n# comment\n[data]\nkind = gsm # trailing\nd = 100\n[model]\nm=2\n",
        )
        .unwrap();
        assert_eq!(rec.get::<usize>("top").unwrap(), 1);
        assert_eq!(rec.str("data.kind").unwrap(), "gsm");
        assert_eq!(rec.get::<usize>("model.m").unwrap(), 2);
        assert_eq!(rec.section("data").get::<usize>("d").unwrap(), 100);
    }

    #[test]
    fn float_lists_round_trip_exactly() {
        let values = [0.1, -1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE];
        let mut rec = Record::new();
        rec.set_floats("phi", &values);
        let back = Record::parse(&rec.to_text()).unwrap();
        let parsed: Vec<f64> = back.list("phi").unwrap();
        assert_eq!(parsed, values);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Record::parse("no equals sign").is_err());
        assert!(Record::parse("a = 1\na = 2").is_err());
        assert!(Record::parse("[open\n").is_err());
    }
}
