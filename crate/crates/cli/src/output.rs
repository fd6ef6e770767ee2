use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

/// Shared metadata written next to every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub version: &'static str,
    pub config: serde_json::Value,
}

pub struct Writer {
    pub dir: PathBuf,
    pub meta: Meta,
}

impl Writer {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            meta,
        })
    }

    /// Writes `name` with a header row plus `name.meta.json`.
    pub fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        let mut n = 0usize;
        for r in rows {
            w.write_record(&r)?;
            n += 1;
        }
        w.flush()?;
        let sidecar = json!({
            "file": name,
            "columns": header,
            "rows": n,
            "meta": self.meta,
        });
        write_json(&self.dir.join(format!("{name}.meta.json")), &sidecar)?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Fixed formatting so reruns are byte-identical.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.12e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
