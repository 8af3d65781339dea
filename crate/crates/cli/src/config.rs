//! Layered run settings: command-line flags over an optional `key=value`
//! file over built-in defaults. Every resolved value is recorded so a run can
//! write its manifest, which is itself a valid config file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::exit::CliError;

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may use `-` or `_`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::bad_input(format!("config line {}: expected key=value, got {line:?}", n + 1)))?;
        let key = normalize(k);
        if key.is_empty() {
            return Err(CliError::bad_input(format!("config line {}: empty key", n + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::bad_input(format!("config line {}: {key} given twice", n + 1)));
        }
    }
    Ok(out)
}

pub struct Settings {
    command: &'static str,
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(command: &'static str, config: Option<&Path>) -> Result<Self, CliError> {
        let file = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Self { command, file, resolved: BTreeMap::new() })
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.file.get(key) {
            // manifests record unset optional values as empty
            None => Ok(None),
            Some(v) if v.is_empty() => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::bad_input(format!("config value {key}={v} does not parse"))),
        }
    }

    /// Flag, else config file, else `default`.
    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Like [`Settings::get`] without a default; absent values are recorded
    /// as empty.
    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        self.resolved.insert(key.to_string(), v.as_ref().map(T::to_string).unwrap_or_default());
        Ok(v)
    }

    /// A value that must come from somewhere.
    pub fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.get_opt(key, flag)?
            .ok_or_else(|| CliError::bad_input(format!("--{} is required", key.replace('_', "-"))))
    }

    /// Rejects config keys the command never asked for, then returns the
    /// manifest text.
    pub fn finish(&self) -> Result<String, CliError> {
        if let Some(k) = self.file.keys().find(|k| !self.resolved.contains_key(*k)) {
            return Err(CliError::bad_input(format!("unknown config key {k:?} for {}", self.command)));
        }
        Ok(self.manifest())
    }

    pub fn manifest(&self) -> String {
        let mut s = format!("# otsteg {} resolved settings\n", self.command);
        for (k, v) in &self.resolved {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}
