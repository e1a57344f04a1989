//! Plain-text `key = value` configuration files.
//!
//! Keys are the long flag names without the leading dashes; `_` and `-` are
//! interchangeable. Blank lines and lines starting with `#` are ignored.
//! A flag given on the command line always wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    source: String,
}

fn normalise(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("ConfigError", format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::new("ConfigError", format!("{source}:{}: expected key = value", i + 1)));
            };
            values.insert(normalise(k), v.trim().to_string());
        }
        Ok(ConfigFile { values, source: source.to_string() })
    }

    /// Rejects keys that no flag of the command knows about.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::new("ConfigError", format!("{}: unknown key `{k}`", self.source))),
            None => Ok(()),
        }
    }

    /// Flag value, else config value, else `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.resolve_opt(flag, key)?.unwrap_or(default))
    }

    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                CliError::new("ConfigError", format!("{}: invalid value `{v}` for `{key}`: {e}", self.source))
            }),
        }
    }

    /// Boolean switches: a set flag wins; otherwise the file decides.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        self.resolve_opt::<bool>(None, key).map(|v| v.unwrap_or(false))
    }
}
