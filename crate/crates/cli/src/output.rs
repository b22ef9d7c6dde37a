use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Format, RunConfig};

/// Provenance carried by every artifact.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: String,
    pub mode: String,
    pub config_sha256: String,
    pub seed: u64,
    pub replicas: u64,
    pub rng: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

impl Meta {
    pub fn new(config: &RunConfig, timestamps: bool) -> Self {
        Self {
            tool: format!("cutpaste {}", env!("CARGO_PKG_VERSION")),
            mode: config.mode().name().to_string(),
            config_sha256: config.digest(),
            seed: config.seed,
            replicas: config.replicas,
            rng: cutpaste::rng::RNG_ALGORITHM.to_string(),
            generated_at_unix: timestamps.then(|| {
                std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
            }),
        }
    }
}

pub struct Writer {
    dir: PathBuf,
    format: Format,
    meta: Meta,
    written: Vec<PathBuf>,
}

/// A rectangular artifact.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Serialize)]
struct JsonTable<'a> {
    meta: &'a Meta,
    columns: &'a [String],
    rows: &'a [Vec<String>],
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

impl Writer {
    pub fn new(config: &RunConfig, timestamps: bool) -> Result<Self> {
        let dir = config.output.out_dir.clone();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, format: config.output.format, meta: Meta::new(config, timestamps), written: Vec::new() })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    fn create(&mut self, name: &str) -> Result<(BufWriter<File>, PathBuf)> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.written.push(path.clone());
        Ok((BufWriter::new(file), path))
    }

    /// Writes `stem.csv` (metadata as `#` comment lines) or `stem.json`.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<()> {
        match self.format {
            Format::Csv => {
                let (mut out, path) = self.create(&format!("{stem}.csv"))?;
                let meta = serde_json::to_value(&self.meta)?;
                for (key, value) in meta.as_object().expect("struct") {
                    match value {
                        serde_json::Value::String(s) => writeln!(out, "# {key}={s}")?,
                        other => writeln!(out, "# {key}={other}")?,
                    }
                }
                let mut csv = csv::Writer::from_writer(out);
                csv.write_record(&table.columns)?;
                for row in &table.rows {
                    csv.write_record(row)?;
                }
                csv.flush().with_context(|| format!("writing {}", path.display()))?;
            }
            Format::Json => {
                let meta = self.meta.clone();
                let doc = JsonTable { meta: &meta, columns: &table.columns, rows: &table.rows };
                self.json(&format!("{stem}.json"), &doc)?;
            }
        }
        Ok(())
    }

    /// Writes a JSON document with `meta` merged in at top level.
    pub fn document<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let meta = self.meta.clone();
        self.json(name, &JsonDoc { meta: &meta, body })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let (mut out, path) = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
        out.flush().with_context(|| format!("writing {}", path.display()))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}
