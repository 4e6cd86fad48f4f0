//! `key = value` configuration files with `#` comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{DataError, Result};

/// Environment variable naming the configuration file.
pub const CONFIG_ENV: &str = "IRIS_CONFIG";

/// Parsed configuration. Later duplicates of a key are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
    /// Directory relative paths are resolved against.
    base: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(DataError::Config { line: i + 1, message: format!("expected `key = value`, got {line:?}") });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(DataError::Config { line: i + 1, message: "empty key".into() });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(DataError::Config { line: i + 1, message: format!("duplicate key {k}") });
            }
        }
        Ok(Self { entries, base: None })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Typed lookup; `None` when absent, an error when unparsable.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| DataError::ConfigValue {
                key: key.into(),
                message: format!("cannot parse {v:?} as {}", std::any::type_name::<T>()),
            }),
        }
    }

    /// Path value resolved against the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let p = PathBuf::from(self.get(key)?);
        Some(match &self.base {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        })
    }
}

/// Explicit path first, then `$IRIS_CONFIG`, then `./iris.conf` if present.
pub fn resolve_config_path(explicit: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()) {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from("iris.conf");
    local.exists().then_some(local)
}
