//! Flat `section.key = value` configuration.
//!
//! Files are TOML; nested tables and dotted keys both flatten to dotted
//! names. Every key a command reads is recorded with its resolved value, and
//! any key left unread is an error.

use crate::error::CliError;
use serde_json::Value as Json;
use std::collections::{BTreeMap, BTreeSet};
use toml::Value;

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, Value>,
    read: BTreeSet<String>,
    resolved: BTreeMap<String, Json>,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

pub(crate) fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("config key `{key}`: {reason}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(bad(key, format!("expected a number, got {}", other.type_str()))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, CliError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => Err(bad(key, format!("expected a nonnegative integer, got {other}"))),
    }
}

fn as_list<'a>(key: &str, v: &'a Value) -> Result<&'a [Value], CliError> {
    match v {
        Value::Array(a) => Ok(a),
        other => Err(bad(key, format!("expected an array, got {}", other.type_str()))),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("cannot parse config: {}", e.message())))?;
        let mut values = BTreeMap::new();
        flatten("", table, &mut values);
        Ok(Self {
            values,
            ..Self::default()
        })
    }

    fn fetch(&mut self, key: &str) -> Option<Value> {
        self.read.insert(key.to_string());
        self.values.get(key).cloned()
    }

    fn record(&mut self, key: &str, value: impl Into<Json>) {
        self.resolved.insert(key.to_string(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Replaces (or inserts) a value, as a command-line override does.
    pub fn set_u64(&mut self, key: &str, value: u64) {
        self.values.insert(key.to_string(), Value::Integer(value as i64));
    }

    pub fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        let v = self.fetch(key).map(|v| as_f64(key, &v)).transpose()?;
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(bad(key, "must be finite"));
            }
            self.record(key, x);
        }
        Ok(v)
    }

    pub fn f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.opt_f64(key)?.unwrap_or(default);
        self.record(key, v);
        Ok(v)
    }

    /// A strictly positive number.
    pub fn positive(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.f64(key, default)?;
        if !(v > 0.0) {
            return Err(bad(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn u64(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        let v = match self.fetch(key) {
            Some(v) => as_u64(key, &v)?,
            None => default,
        };
        self.record(key, v);
        Ok(v)
    }

    pub fn usize_in(&mut self, key: &str, default: usize, lo: usize, hi: usize) -> Result<usize, CliError> {
        let v = self.u64(key, default as u64)?;
        if v < lo as u64 || v > hi as u64 {
            return Err(bad(key, format!("must lie in [{lo}, {hi}], got {v}")));
        }
        Ok(v as usize)
    }

    pub fn bool(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        let v = match self.fetch(key) {
            Some(Value::Boolean(b)) => b,
            Some(other) => return Err(bad(key, format!("expected a boolean, got {}", other.type_str()))),
            None => default,
        };
        self.record(key, v);
        Ok(v)
    }

    pub fn opt_string(&mut self, key: &str) -> Result<Option<String>, CliError> {
        match self.fetch(key) {
            Some(Value::String(s)) => {
                self.record(key, s.clone());
                Ok(Some(s))
            }
            Some(other) => Err(bad(key, format!("expected a string, got {}", other.type_str()))),
            None => Ok(None),
        }
    }

    pub fn string(&mut self, key: &str, default: &str) -> Result<String, CliError> {
        let v = self.opt_string(key)?.unwrap_or_else(|| default.to_string());
        self.record(key, v.clone());
        Ok(v)
    }

    pub fn opt_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(v) = self.fetch(key) else {
            return Ok(None);
        };
        let list = as_list(key, &v)?
            .iter()
            .map(|x| as_f64(key, x))
            .collect::<Result<Vec<_>, _>>()?;
        if list.iter().any(|x| !x.is_finite()) {
            return Err(bad(key, "entries must be finite"));
        }
        self.record(key, list.clone());
        Ok(Some(list))
    }

    pub fn f64_list(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
        let v = self.opt_f64_list(key)?.unwrap_or(default);
        self.record(key, v.clone());
        Ok(v)
    }

    pub fn u64_list(&mut self, key: &str, default: Vec<u64>) -> Result<Vec<u64>, CliError> {
        let v = match self.fetch(key) {
            Some(v) => as_list(key, &v)?
                .iter()
                .map(|x| as_u64(key, x))
                .collect::<Result<Vec<_>, _>>()?,
            None => default,
        };
        self.record(key, v.clone());
        Ok(v)
    }

    /// Errors on the first key that no reader asked for.
    pub fn finish(&self) -> Result<(), CliError> {
        match self.values.keys().find(|k| !self.read.contains(*k)) {
            Some(k) => Err(bad(k, "unknown key for this command")),
            None => Ok(()),
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, Json> {
        &self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattens_tables_and_dotted_keys() {
        let mut c = Config::parse("seed = 3\nfield.s = 0.9\n[ensemble]\ncount = 64\n").unwrap();
        assert_eq!(c.u64("seed", 0).unwrap(), 3);
        assert_eq!(c.f64("field.s", 0.0).unwrap(), 0.9);
        assert_eq!(c.u64("ensemble.count", 1).unwrap(), 64);
        assert_eq!(c.f64("flow.h", 0.5).unwrap(), 0.5);
        c.finish().unwrap();
        assert_eq!(c.resolved()["flow.h"], Json::from(0.5));
    }

    #[test]
    fn unknown_keys_are_named() {
        let mut c = Config::parse("field.s = 0.9\nfield.colour = 1\n").unwrap();
        c.f64("field.s", 0.0).unwrap();
        let msg = c.finish().unwrap_err().to_string();
        assert!(msg.contains("field.colour"), "{msg}");
    }

    #[test]
    fn type_and_domain_errors_name_the_key() {
        let mut c = Config::parse("a = \"x\"\nb = -1.0\nc = 7\n").unwrap();
        assert!(c.f64("a", 0.0).unwrap_err().to_string().contains("`a`"));
        assert!(c.positive("b", 1.0).unwrap_err().to_string().contains("`b`"));
        assert!(c.usize_in("c", 1, 1, 3).unwrap_err().to_string().contains("`c`"));
    }
}
