use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hybridprec::experiments::ExperimentConfig;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Usage or configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

/// Loads the config file (or the desk default), applies `key=value`
/// overrides in order and validates the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            ExperimentConfig::from_json_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::desk(),
    };
    let mut value = serde_json::to_value(&base)?;
    for o in overrides {
        apply_override(&mut value, o).map_err(|e| usage(e.to_string()))?;
    }
    let text = serde_json::to_string(&value)?;
    ExperimentConfig::from_json_str(&text).map_err(|e| usage(format!("after overrides: {e}")))
}

/// `a.b.c=v`; `v` is parsed as JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override `{spec}` is not key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is malformed");
    }
    let parsed = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let (last, path) = parts.split_last().expect("non-empty");
    let mut node = root;
    for p in path {
        node = node
            .get_mut(*p)
            .filter(|v| v.is_object())
            .ok_or_else(|| anyhow!("unknown config section `{p}` in `{key}`"))?;
    }
    let obj = node.as_object_mut().ok_or_else(|| anyhow!("`{key}` does not name a field"))?;
    obj.insert(last.to_string(), parsed);
    Ok(())
}

/// Lowercase hex sha256 of the compact JSON of the resolved config.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let text = serde_json::to_string(cfg).context("serializing config")?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

pub fn parse_list<T: std::str::FromStr>(name: &str, s: &str) -> Result<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse().map_err(|_| usage(format!("--{name}: cannot parse `{x}`"))))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(usage(format!("--{name} must not be empty")));
    }
    Ok(v)
}
