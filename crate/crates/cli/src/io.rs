//! CSV and JSON files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svofuse::models::{ModelDescription, ModelSpec};
use svofuse::SignalArray;

use crate::error::{CliError, CliResult};

/// Full-precision decimal: 17 significant digits round-trip every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Metadata written next to a simulated CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalMeta {
    pub schema_version: u32,
    pub model: ModelDescription,
    pub preset: Option<String>,
    pub seed: u64,
    pub n_samples: usize,
    pub sample_rate_hz: f64,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn read_meta(csv: &Path) -> Option<SignalMeta> {
    let text = fs::read_to_string(meta_path(csv)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Reads a CSV with a header row of sensor labels and one row per sample.
pub fn read_signals(path: &Path, sample_rate_hz: f64) -> CliResult<SignalArray> {
    let shown = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{shown}: {e}")))?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::input(format!("{shown}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(CliError::input(format!("{shown}: missing header row")));
    }
    let p = labels.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let record = record.map_err(|e| CliError::input(format!("{shown}: line {line}: {e}")))?;
        if record.len() != p {
            return Err(CliError::input(format!(
                "{shown}: line {line} has {} fields, header has {p}",
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::input(format!("{shown}: line {line}, column {} (`{}`): `{cell}` is not a number", c + 1, labels[c]))
            })?;
            columns[c].push(v);
        }
    }
    SignalArray::new(columns, sample_rate_hz, labels).map_err(|e| CliError::input(format!("{shown}: {e}")))
}

pub fn write_signals(path: &Path, signals: &SignalArray) -> CliResult<()> {
    let rows = (0..signals.len())
        .map(|t| signals.rows().iter().map(|row| fmt_f64(row[t])).collect())
        .collect::<Vec<Vec<String>>>();
    write_table(path, signals.labels(), &rows)
}

pub fn write_table<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> CliResult<()> {
    let wrap = |e: csv::Error| CliError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    writer.write_record(header.iter().map(|h| h.as_ref())).map_err(wrap)?;
    for row in rows {
        writer.write_record(row).map_err(wrap)?;
    }
    writer.flush().map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: e,
    })
}

/// A preset name or a JSON model file, with an optional drift override.
pub fn load_model(preset: Option<&str>, file: Option<&Path>, delta: Option<f64>) -> CliResult<(ModelSpec, Option<String>)> {
    let (model, name) = match (preset, file) {
        (Some(_), Some(_)) => return Err(CliError::input("give either --preset or --model, not both")),
        (Some(name), None) => (ModelSpec::preset(name)?, Some(name.to_ascii_lowercase())),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            let desc: ModelDescription =
                serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            (ModelSpec::try_from(desc)?, None)
        }
        (None, None) => return Err(CliError::input("a model is required: use --preset or --model")),
    };
    Ok((match delta {
        Some(d) => model.with_delta(d),
        None => model,
    }, name))
}
