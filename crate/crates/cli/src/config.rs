//! Line-oriented `key = value` files. Flags given on the command line take
//! precedence over file entries; unrecognized keys are rejected.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};

use crate::UsageError;

#[derive(Debug, Default)]
pub struct Settings {
    entries: Vec<(String, String)>,
    base: PathBuf,
    used: RefCell<BTreeSet<String>>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| xlalign::Error::Io {
                path: path.to_owned(),
                source: e,
            })
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut s =
            Settings::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        s.base = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(s)
    }

    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("line {}: expected key = value", i + 1)))?;
            entries.push((normalize(k), v.trim().to_owned()));
        }
        Ok(Settings {
            entries,
            ..Default::default()
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_owned());
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Every value of a repeatable key, in file order.
    pub fn all(&self, key: &str) -> Vec<&str> {
        self.used.borrow_mut().insert(key.to_owned());
        self.entries
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    /// The flag value if given, else the parsed file entry.
    pub fn pick<T>(&self, cli: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let from_file = match self.raw(key) {
            Some(v) => Some(
                v.parse::<T>()
                    .map_err(|e| UsageError(format!("config key {key}: {e}")))?,
            ),
            None => None,
        };
        Ok(cli.or(from_file))
    }

    pub fn flag(&self, cli: bool, key: &str) -> Result<bool> {
        Ok(cli || self.pick::<bool>(None, key)?.unwrap_or(false))
    }

    pub fn path(&self, cli: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        cli.or_else(|| self.raw(key).map(|v| self.base.join(v)))
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }

    /// Fails on file keys that no lookup asked for.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .entries
            .iter()
            .map(|(k, _)| k.as_str())
            .filter(|k| !used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(UsageError(format!("unknown config keys: {}", unknown.join(", "))).into())
        }
    }
}

/// Comma-separated list, e.g. `0,2,3`.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| UsageError(format!("bad list entry {s:?}: {e}")).into())
        })
        .collect()
}
