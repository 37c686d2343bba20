//! Plain-text model files: one `key=value` pair per line, vectors as
//! comma-separated numbers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{FittedModel, ModelKind, SolverStats};

#[derive(Debug, Error)]
pub enum ModelParseError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn escape_key(k: &str) -> String {
    k.replace('%', "%25").replace(',', "%2C").replace('\n', "%0A").replace('\r', "%0D")
}

fn unescape_key(k: &str) -> String {
    k.replace("%2C", ",").replace("%0A", "\n").replace("%0D", "\r").replace("%25", "%")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn default_keys(keys: &[String]) -> bool {
    keys.iter().enumerate().all(|(i, k)| *k == (i + 1).to_string())
}

impl FittedModel {
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        line("kind", self.kind.to_string());
        line("mu", self.mu.to_string());
        if let Some(l) = self.lambda {
            line("lambda", l.to_string());
        }
        if let Some(c) = self.c {
            line("c", c.to_string());
        }
        line("beta", join(&self.beta));
        line("g", join(&self.g));
        if !default_keys(&self.cluster_keys) {
            let keys: Vec<String> = self.cluster_keys.iter().map(|k| escape_key(k)).collect();
            line("cluster_keys", keys.join(","));
        }
        line("fairness_residual", self.fairness_residual.to_string());
        line("status", self.stats.status.to_string());
        line("iterations", self.stats.iterations.to_string());
        line("primal_residual", self.stats.primal_residual.to_string());
        line("dual_residual", self.stats.dual_residual.to_string());
        line("objective", self.stats.objective.to_string());
        line("wall_time", self.stats.wall_time.to_string());
        out
    }

    pub fn from_kv_str(text: &str) -> Result<Self, ModelParseError> {
        let mut map: HashMap<&str, &str> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (k, v) = raw.split_once('=').ok_or(ModelParseError::Syntax { line: i + 1 })?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &'static str| map.get(k).copied().ok_or(ModelParseError::Missing(k));
        let bad = |k: &str, m: String| ModelParseError::Value { key: k.to_string(), message: m };
        let num = |k: &'static str| -> Result<f64, ModelParseError> {
            get(k)?.parse::<f64>().map_err(|e| bad(k, e.to_string()))
        };
        let opt = |k: &'static str| -> Result<Option<f64>, ModelParseError> {
            map.get(k).map(|v| v.parse::<f64>().map_err(|e| bad(k, e.to_string()))).transpose()
        };
        let vector = |k: &'static str| -> Result<Vec<f64>, ModelParseError> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| bad(k, e.to_string())))
                .collect()
        };

        let kind: ModelKind = get("kind")?.parse().map_err(|m| bad("kind", m))?;
        let beta = vector("beta")?;
        if beta.is_empty() {
            return Err(bad("beta", "empty".into()));
        }
        let g = vector("g")?;
        let cluster_keys = match map.get("cluster_keys") {
            Some(v) if !v.is_empty() => v.split(',').map(unescape_key).collect::<Vec<_>>(),
            _ => (1..=g.len()).map(|i| i.to_string()).collect(),
        };
        if !g.is_empty() && cluster_keys.len() != g.len() {
            return Err(bad(
                "cluster_keys",
                format!("{} keys for {} cluster effects", cluster_keys.len(), g.len()),
            ));
        }
        let iterations = get("iterations")?
            .parse::<usize>()
            .map_err(|e| bad("iterations", e.to_string()))?;
        Ok(FittedModel {
            kind,
            beta,
            g,
            mu: num("mu")?,
            lambda: opt("lambda")?,
            c: opt("c")?,
            cluster_keys,
            fairness_residual: opt("fairness_residual")?.unwrap_or(f64::NAN),
            stats: SolverStats {
                status: get("status")?.parse().map_err(|m| bad("status", m))?,
                iterations,
                primal_residual: num("primal_residual")?,
                dual_residual: num("dual_residual")?,
                objective: opt("objective")?.unwrap_or(f64::NAN),
                wall_time: num("wall_time")?,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelParseError> {
        std::fs::write(path, self.to_kv_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelParseError> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }
}
