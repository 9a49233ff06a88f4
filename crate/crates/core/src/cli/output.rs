//! Run directory: `manifest.json`, `records.jsonl`, `summary.csv` and
//! per-size report files.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::verify::{CsvRow, CSV_HEADER};

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.jsonl";
pub const SUMMARY: &str = "summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub n: usize,
    pub d: u64,
    /// 1-based line in `records.jsonl`.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub n: usize,
    pub d: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Files of the run directory, relative to it.
    pub artifacts: Vec<String>,
    pub records: Vec<RecordEntry>,
    pub failures: Vec<FailureEntry>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    n: usize,
    d: u64,
    record: T,
}

/// Append-only per-disorder log of one run directory.
pub struct RunDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
    /// Raw lines already on disk, keyed by `(N, d)`.
    done: BTreeMap<(usize, u64), String>,
    lines: usize,
    writer: BufWriter<File>,
}

impl RunDir {
    /// Opens `root`, resuming when it holds a run of the same config and
    /// refusing when it holds a different one.
    pub fn open(root: &Path, config: &ExperimentConfig, workers: usize) -> Result<Self> {
        let hash = config.hash();
        let manifest_path = root.join(MANIFEST);
        let mut done = BTreeMap::new();
        let mut entries = Vec::new();
        let mut lines = 0;
        let mut manifest = if manifest_path.exists() {
            let old: RunManifest = serde_json::from_reader(BufReader::new(File::open(&manifest_path)?))?;
            if old.config_hash != hash {
                return Err(Error::Unsupported(format!(
                    "{} holds a run with a different configuration (hash {}); choose another --out",
                    root.display(),
                    old.config_hash
                )));
            }
            let records = root.join(RECORDS);
            if records.exists() {
                for raw in BufReader::new(File::open(&records)?).lines() {
                    let raw = raw?;
                    lines += 1;
                    if raw.trim().is_empty() {
                        continue;
                    }
                    let head: Line<serde_json::Value> = serde_json::from_str(&raw)?;
                    entries.push(RecordEntry { n: head.n, d: head.d, line: lines });
                    done.insert((head.n, head.d), raw);
                }
            }
            log::info!("resuming {} with {} stored records", root.display(), done.len());
            RunManifest { workers, status: RunStatus::Running, finished_unix: None, error: None, failures: Vec::new(), ..old }
        } else {
            if root.exists() && fs::read_dir(root)?.next().is_some() {
                return Err(Error::Unsupported(format!(
                    "{} is not empty and holds no manifest; choose another --out",
                    root.display()
                )));
            }
            fs::create_dir_all(root)?;
            RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                experiment: config.experiment.name().to_string(),
                config_hash: hash,
                config: config.clone(),
                workers,
                started_unix: unix_now(),
                finished_unix: None,
                status: RunStatus::Running,
                error: None,
                artifacts: vec![RECORDS.to_string()],
                records: Vec::new(),
                failures: Vec::new(),
            }
        };
        manifest.records = entries;
        let writer = BufWriter::new(OpenOptions::new().create(true).append(true).open(root.join(RECORDS))?);
        let dir = Self { root: root.to_path_buf(), manifest, done, lines, writer };
        dir.save_manifest()?;
        Ok(dir)
    }

    /// Stored record of disorder `d` at size `n`.
    pub fn stored<T: DeserializeOwned>(&self, n: usize, d: u64) -> Result<Option<T>> {
        match self.done.get(&(n, d)) {
            None => Ok(None),
            Some(raw) => Ok(Some(serde_json::from_str::<Line<T>>(raw)?.record)),
        }
    }

    /// Appends records and flushes them to disk.
    pub fn append<T: Serialize>(&mut self, n: usize, records: &[(u64, T)]) -> Result<()> {
        for (d, record) in records {
            let raw = serde_json::to_string(&Line { n, d: *d, record })?;
            writeln!(self.writer, "{raw}")?;
            self.lines += 1;
            self.manifest.records.push(RecordEntry { n, d: *d, line: self.lines });
            self.done.insert((n, *d), raw);
        }
        self.writer.flush()?;
        self.save_manifest()
    }

    pub fn record_failures(&mut self, n: usize, failures: &[(u64, String)]) {
        self.manifest.failures.extend(failures.iter().map(|(d, e)| FailureEntry { n, d: *d, error: e.clone() }));
    }

    /// Writes a JSON artifact and lists it in the manifest.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let file = File::create(self.root.join(name))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.flush()?;
        self.add_artifact(name);
        Ok(())
    }

    pub fn write_summary(&mut self, rows: &[CsvRow]) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.root.join(SUMMARY))?);
        writeln!(w, "{CSV_HEADER}")?;
        for r in rows {
            writeln!(w, "{}", r.line())?;
        }
        w.flush()?;
        self.add_artifact(SUMMARY);
        Ok(())
    }

    fn add_artifact(&mut self, name: &str) {
        if !self.manifest.artifacts.iter().any(|a| a == name) {
            self.manifest.artifacts.push(name.to_string());
        }
    }

    pub fn save_manifest(&self) -> Result<()> {
        let tmp = self.root.join(format!("{MANIFEST}.tmp"));
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut w, &self.manifest)?;
        w.flush()?;
        drop(w);
        fs::rename(tmp, self.root.join(MANIFEST))?;
        Ok(())
    }

    /// Marks the run complete or failed and returns the final manifest.
    pub fn finish(mut self, outcome: &Result<()>) -> Result<RunManifest> {
        self.manifest.finished_unix = Some(unix_now());
        match outcome {
            Ok(()) => self.manifest.status = RunStatus::Complete,
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.error = Some(e.to_string());
            }
        }
        self.writer.flush()?;
        self.save_manifest()?;
        Ok(self.manifest)
    }
}
