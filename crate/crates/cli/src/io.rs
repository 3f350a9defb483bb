use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use ssrl_core::screen::WellRecord;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so readers see either the old file, no file, or the full new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".ssrl-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Provenance of one command, written as `run.json` next to its artifacts.
pub struct RunRecord {
    pub command: &'static str,
    pub inputs: Vec<(String, PathBuf)>,
    pub outputs: Vec<String>,
}

impl RunRecord {
    pub fn new(command: &'static str) -> Self {
        Self { command, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.push((role.to_string(), path.to_path_buf()));
    }

    /// Writes an artifact below `out` and records its name.
    pub fn artifact(&mut self, out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&out.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn json_artifact<T: Serialize>(&mut self, out: &Path, name: &str, value: &T) -> Result<()> {
        write_json(&out.join(name), value)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, out: &Path, cfg: Option<&RunConfig>) -> Result<()> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let inputs: serde_json::Map<String, Value> = self
            .inputs
            .into_iter()
            .map(|(k, p)| (k, Value::String(p.display().to_string())))
            .collect();
        let record = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": cfg.map(RunConfig::sha256),
            "seeds": cfg.map(RunConfig::seeds),
            "config": cfg,
            "inputs": inputs,
            "outputs": self.outputs,
            "timestamp_unix": timestamp,
        });
        write_json(&out.join("run.json"), &record)
    }
}

/// `well_id,f0,f1,...` with values in shortest round-trip form.
pub fn embeddings_csv(records: &[WellRecord], xs: &[Vec<f64>]) -> Vec<u8> {
    let dim = xs.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("well_id".to_string()).chain((0..dim).map(|i| format!("f{i}"))).collect();
    w.write_record(&header).expect("in-memory write");
    for (r, x) in records.iter().zip(xs) {
        let row: Vec<String> = std::iter::once(r.well_id.clone()).chain(x.iter().map(|v| v.to_string())).collect();
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Reads an embeddings CSV and orders its rows like `records`.
pub fn read_embeddings(path: &Path, records: &[WellRecord]) -> Result<Vec<Vec<f64>>> {
    let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut rd = csv::Reader::from_reader(text.as_slice());
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.get(0) != Some("well_id") || header.len() < 2 {
        return Err(bad("header must be well_id,f0,...".into()));
    }
    let dim = header.len() - 1;
    let mut by_id: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != dim + 1 {
            return Err(bad(format!("row {}: expected {} fields", i + 1, dim + 1)));
        }
        let x = row
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(format!("row {}: non-numeric feature", i + 1)))?;
        if by_id.insert(row[0].to_string(), x).is_some() {
            return Err(bad(format!("row {}: duplicate well {}", i + 1, &row[0])));
        }
    }
    records
        .iter()
        .map(|r| by_id.remove(&r.well_id).ok_or_else(|| bad(format!("no embedding for well {}", r.well_id))))
        .collect()
}
