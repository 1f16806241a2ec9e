//! Flat `key=value` configuration with dotted sections.
//!
//! Lines starting with `#` and blank lines are ignored. Every key must be
//! read by the experiment that runs, otherwise [`Config::finish`] rejects it.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::CliError;

#[derive(Debug)]
pub struct Config {
    entries: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Validation(format!("line {}: expected key=value, got {line:?}", n + 1)));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Validation(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Validation(format!("line {}: duplicate key {key}", n + 1)));
            }
        }
        Ok(Config { entries, used: RefCell::new(BTreeSet::new()) })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    /// Sorted `key=value` lines; the basis of the config hash.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| CliError::Validation(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn req<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?.ok_or_else(|| CliError::Validation(format!("{key} is required")))
    }

    pub fn positive(&self, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        let v = match default {
            Some(d) => self.or(key, d)?,
            None => self.req(key)?,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Validation(format!("{key} must be > 0")));
        }
        Ok(v)
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|x| x.trim().parse().map_err(|_| CliError::Validation(format!("{key}: cannot parse {x:?}"))))
            .collect::<Result<Vec<f64>, _>>()
            .map(Some)
    }

    /// Indices `N` appearing in keys `prefix.N.*`, in increasing order.
    pub fn indices(&self, prefix: &str) -> Result<Vec<usize>, CliError> {
        let head = format!("{prefix}.");
        let mut out = BTreeSet::new();
        for key in self.entries.keys() {
            if let Some(rest) = key.strip_prefix(&head) {
                let idx = rest.split('.').next().unwrap_or("");
                let n = idx.parse().map_err(|_| CliError::Validation(format!("{key}: {idx:?} is not an index")))?;
                out.insert(n);
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Fails on keys that were never read.
    pub fn finish(&self, experiment: &str) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.entries.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!("unknown key(s) for {experiment}: {}", unknown.join(", "))))
        }
    }
}
