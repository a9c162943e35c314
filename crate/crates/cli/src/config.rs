//! Flat `key = value` configuration with command-line overrides.
//!
//! Keys use the long flag names (`bw-method`, `risk-floor`, ...); underscores
//! are accepted as well. Blank lines and lines starting with `#` are ignored.
//! A flag given on the command line replaces the file's value.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use capplan_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Every key a config file may contain.
pub const KEYS: &[&str] = &[
    "alpha",
    "allocation",
    "bw-grid",
    "bw-method",
    "cap",
    "field",
    "grid",
    "incidents",
    "k",
    "lmax",
    "out",
    "out-dir",
    "pilot-grid",
    "pilot-method",
    "rate",
    "risk-floor",
    "risks",
    "seed",
    "stations",
    "truncate",
    "vehicles",
    "vehicles-out",
    "window",
];

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

pub fn parse_config(name: &str, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: name.to_string(),
            line: i as u64 + 1,
            message: msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, found `{line}`")))?;
        let key = normalize(k);
        if !KEYS.contains(&key.as_str()) {
            return Err(parse_err(format!("unknown key `{key}`")));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(parse_err(format!("key `{key}` given twice")));
        }
    }
    Ok(out)
}

/// Settings for one command: config file values overlaid with flags.
#[derive(Debug, Clone)]
pub struct Settings {
    command: String,
    values: BTreeMap<String, String>,
    /// Relative paths in the config file resolve against its directory.
    base: Option<PathBuf>,
    from_file: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(command: &str, config: Option<&Path>, flags: Vec<(&'static str, Option<String>)>) -> Result<Self> {
        let (from_file, base) = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
                (
                    parse_config(&path.display().to_string(), &text)?,
                    path.parent().map(Path::to_path_buf),
                )
            }
            None => (BTreeMap::new(), None),
        };
        let mut values = from_file.clone();
        let mut overridden = Vec::new();
        for (k, v) in flags {
            debug_assert!(KEYS.contains(&k), "flag `{k}` missing from KEYS");
            if let Some(v) = v {
                values.insert(k.to_string(), v);
                overridden.push(k);
            }
        }
        let from_file = from_file
            .into_iter()
            .filter(|(k, _)| !overridden.contains(&k.as_str()))
            .collect();
        Ok(Settings {
            command: command.to_string(),
            values,
            base,
            from_file,
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::InvalidInput(format!("invalid value `{s}` for `{key}`: {e}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::InvalidInput(format!("missing `--{key}` (flag or config key)")))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key)?;
        let p = PathBuf::from(raw);
        match (&self.base, self.from_file.contains_key(key)) {
            (Some(base), true) if p.is_relative() => Some(base.join(p)),
            _ => Some(p),
        }
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::InvalidInput(format!("missing `--{key}` (flag or config key)")))
    }

    /// Merged settings as sorted `key=value` lines, prefixed by the command.
    /// Paths appear as written, not resolved.
    pub fn canonical(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    /// SHA-256 of [`Settings::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
