//! Result files: CSV tables and self-describing JSON documents.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zoegd::egd::EgdSchedule;
use zoegd::estimator::EstimatorSchedule;

use crate::config::{ExperimentConfig, OutputFormat};

pub const SCHEMA_VERSION: &str = "1";

/// A CSV-representable row. Fields must be scalars or options of scalars.
pub trait Record: Serialize {
    fn header() -> &'static [&'static str];
}

/// The invocation plus every quantity derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub experiment: ExperimentConfig,
    pub schedule: Option<EgdSchedule>,
    pub estimator: Option<EstimatorSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<R, S> {
    pub schema_version: String,
    pub config: EffectiveConfig,
    pub records: Vec<R>,
    pub summary: S,
}

impl<R, S> Report<R, S> {
    pub fn new(config: EffectiveConfig, records: Vec<R>, summary: S) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            config,
            records,
            summary,
        }
    }
}

#[derive(Serialize)]
struct Meta<'a, S> {
    schema_version: &'a str,
    config: &'a EffectiveConfig,
    summary: &'a S,
}

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write CSV to {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot write JSON to {}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Path of the JSON file that carries config and summary next to a CSV table.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes `report` to `path`.
///
/// JSON is one object `{schema_version, config, records, summary}`. CSV is a
/// header row and one row per record; config and summary then go to
/// [`meta_path`] as JSON.
pub fn write_results<R: Record, S: Serialize>(
    report: &Report<R, S>,
    format: OutputFormat,
    path: &Path,
) -> Result<(), WriteError> {
    match format {
        OutputFormat::Json => write_json(report, path),
        OutputFormat::Csv => {
            write_csv(&report.records, path)?;
            let meta = Meta {
                schema_version: &report.schema_version,
                config: &report.config,
                summary: &report.summary,
            };
            write_json(&meta, &meta_path(path))
        }
    }
}

pub fn write_csv<R: Record>(records: &[R], path: &Path) -> Result<(), WriteError> {
    let file = File::create(path).map_err(|e| WriteError::Io {
        path: path.to_owned(),
        source: e,
    })?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    let csv_err = |e| WriteError::Csv {
        path: path.to_owned(),
        source: e,
    };
    w.write_record(R::header()).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| WriteError::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), WriteError> {
    let file = File::create(path).map_err(|e| WriteError::Io {
        path: path.to_owned(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| WriteError::Json {
        path: path.to_owned(),
        source: e,
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| WriteError::Io {
            path: path.to_owned(),
            source: e,
        })
}

/// Keeps records whose `t` is a multiple of `every`, plus the last record.
pub fn thin<T: Clone>(records: &[T], every: u64, t: impl Fn(&T) -> u64) -> Vec<T> {
    let every = every.max(1);
    let last = records.len().saturating_sub(1);
    records
        .iter()
        .enumerate()
        .filter(|(i, r)| t(r).is_multiple_of(every) || *i == last)
        .map(|(_, r)| r.clone())
        .collect()
}
