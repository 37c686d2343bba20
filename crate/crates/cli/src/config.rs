use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::CliError;

/// Flat key/value settings read from a JSON object. Command-line flags take
/// precedence over entries here.
#[derive(Debug, Default)]
pub struct Config {
    entries: Map<String, Value>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let Value::Object(raw) = value else {
            return Err(CliError::Input(format!("config {} must be a JSON object", path.display())));
        };
        let mut entries = Map::new();
        for (k, v) in raw {
            if v.is_object() {
                return Err(CliError::Input(format!("config key `{k}`: nested objects are not supported")));
            }
            entries.insert(k.replace('-', "_"), v);
        }
        Ok(Self { entries })
    }

    /// Rejects keys the current command does not understand.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Input(format!(
                "unknown config key(s) {} (this command accepts: {})",
                unknown.join(", "),
                known.join(", ")
            )))
        }
    }

    /// The flag value if given, else the config entry parsed as `T`.
    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        let Some(v) = self.entries.get(key) else { return Ok(None) };
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            Value::Null => return Ok(None),
            other => other.to_string(),
        };
        text.parse()
            .map(Some)
            .map_err(|e| CliError::Input(format!("config key `{key}`: {e}")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| CliError::Input(format!("missing `--{}`", key.replace('_', "-"))))
    }
}

/// Comma-separated list parsed element-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<T>().map_err(|e| format!("`{t}`: {e}")))
            .collect::<Result<Vec<T>, String>>()
            .map(List)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> Config {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, json).unwrap();
        Config::load(&path).unwrap()
    }

    #[test]
    fn flags_override_entries() {
        let c = config(r#"{"n": 50, "scenario": "fair+RE", "train-fraction": 0.1}"#);
        assert_eq!(c.get::<usize>("n", None).unwrap(), Some(50));
        assert_eq!(c.get("n", Some(7usize)).unwrap(), Some(7));
        assert_eq!(c.get::<f64>("train_fraction", None).unwrap(), Some(0.1));
        assert_eq!(c.get_or("seed", None, 3u64).unwrap(), 3);
        assert!(c.get::<usize>("scenario", None).is_err());
    }

    #[test]
    fn arrays_become_lists() {
        let c = config(r#"{"groups": [2, 10, 50]}"#);
        let l: List<usize> = c.require("groups", None).unwrap();
        assert_eq!(l.0, vec![2, 10, 50]);
    }

    #[test]
    fn unknown_keys_are_reported() {
        let c = config(r#"{"n": 1, "bogus": 2}"#);
        let err = c.check_keys(&["n"]).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }
}
