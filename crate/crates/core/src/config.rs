//! Flat `key = value` run configuration with `#` comments.
//!
//! Every consumer declares the keys it accepts with defaults; any other key in the
//! file or on the command line is rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("config line {}: expected 'key = value'", ln + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Usage(format!("config line {}: empty key", ln + 1)));
            }
            if cfg.values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Usage(format!("config line {}: duplicate key '{k}'", ln + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    /// Apply `key=value` overrides (command line wins over file).
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("override '{p}' is not key=value")))?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn set_default(&mut self, key: &str, value: impl ToString) {
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .raw(key)
            .ok_or_else(|| Error::Usage(format!("missing config key '{key}'")))?;
        raw.parse()
            .map_err(|_| Error::Usage(format!("config key '{key}': cannot parse '{raw}'")))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self
            .raw(key)
            .ok_or_else(|| Error::Usage(format!("missing config key '{key}'")))?;
        raw.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Usage(format!("config key '{key}': cannot parse '{s}'")))
            })
            .collect()
    }

    /// Fill defaults and reject every key not in `known`.
    pub fn resolve(&mut self, known: &[(&str, &str)]) -> Result<()> {
        for (k, _) in self.values.iter() {
            if !known.iter().any(|(n, _)| n == k) {
                return Err(Error::Usage(format!("unknown config key '{k}'")));
            }
        }
        for (k, v) in known {
            self.set_default(k, v);
        }
        Ok(())
    }

    /// Sorted snapshot that parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_resolve_and_snapshot() {
        let mut c = RunConfig::parse("# comment\nseed = 7\nlr=1e-3 # trailing\n\n").unwrap();
        c.apply_overrides(["lr=2e-3"]).unwrap();
        c.resolve(&[("seed", "0"), ("lr", "1e-3"), ("epochs", "5")]).unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), 7);
        assert_eq!(c.get::<f64>("lr").unwrap(), 2e-3);
        assert_eq!(c.get::<usize>("epochs").unwrap(), 5);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        let mut c = RunConfig::parse("sed = 7").unwrap();
        assert!(c.resolve(&[("seed", "0")]).is_err());
        assert!(RunConfig::parse("just words").is_err());
        assert!(RunConfig::parse("a = 1\na = 2").is_err());
        let c = RunConfig::parse("n = x").unwrap();
        assert!(c.get::<usize>("n").is_err());
        let c = RunConfig::parse("t = 80, 24.4 ,5.84").unwrap();
        assert_eq!(c.get_list::<f64>("t").unwrap(), vec![80.0, 24.4, 5.84]);
    }
}
