//! Run manifests and artifact writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Model file path or built-in name.
    pub config: String,
    pub seeds: Vec<u64>,
    pub out_dir: Option<String>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &str, seeds: Vec<u64>, out_dir: Option<&Path>) -> Self {
        Self {
            command: command.to_string(),
            config: config.to_string(),
            seeds,
            out_dir: out_dir.map(|p| p.display().to_string()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
        }
    }

    fn comment_lines(&self) -> Vec<String> {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        vec![
            format!("command: {}", self.command),
            format!("config: {}", self.config),
            format!("seeds: {}", seeds.join(",")),
            format!("out_dir: {}", self.out_dir.as_deref().unwrap_or("-")),
            format!("tool_version: {}", self.tool_version),
            format!("timestamp: {}", self.timestamp),
        ]
    }
}

/// UTC now, or `SOURCE_DATE_EPOCH` when set.
fn timestamp() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| DateTime::<Utc>::from_timestamp(s, 0))
        .unwrap_or_else(Utc::now);
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// A CSV table whose leading `#` lines carry the schema and the manifest.
pub struct Table {
    schema: &'static str,
    header: Vec<&'static str>,
    notes: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &'static str, header: &[&'static str]) -> Self {
        Self { schema, header: header.to_vec(), notes: Vec::new(), rows: Vec::new() }
    }

    pub fn note(&mut self, line: String) {
        self.notes.push(line);
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self, manifest: &RunManifest) -> Result<String> {
        let mut out = String::new();
        out.push_str(&format!("# schema: {}\n", self.schema));
        for line in manifest.comment_lines().iter().chain(&self.notes) {
            out.push_str(&format!("# {line}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        out.push_str(std::str::from_utf8(&w.into_inner()?)?);
        Ok(out)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: &'a T,
}

pub fn json<T: Serialize>(manifest: &RunManifest, body: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Envelope { manifest, body })?)
}

/// Writes artifacts under `--out`, or prints the CSV when no directory is given.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self { dir })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// CSV goes to stdout without `--out`; JSON only to files.
    pub fn emit(&self, stem: &str, csv: &str, json: &str) -> Result<()> {
        match &self.dir {
            Some(d) => {
                self.write(&d.join(format!("{stem}.csv")), csv.as_bytes())?;
                self.write(&d.join(format!("{stem}.json")), json.as_bytes())
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(csv.as_bytes())?;
                Ok(())
            }
        }
    }

    pub fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        if let Some(d) = &self.dir {
            self.write(&d.join(rel), bytes)?;
        }
        Ok(())
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
    }
}
