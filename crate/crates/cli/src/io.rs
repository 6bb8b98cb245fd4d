//! On-disk formats: metadata CSV plus raw `f32` signal files, JSON
//! artifacts, checkpoints, the training-history CSV and report CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use ecg_cvae_core::dataset::{NUM_LEADS, SIGNAL_LEN};
use ecg_cvae_core::evaluation::EvaluationReport;
use ecg_cvae_core::nn::{decode_checkpoint, encode_checkpoint, Model};
use ecg_cvae_core::training::EpochLog;
use ecg_cvae_core::{Corpus, DiagClass, EcgRecord, LabelSet};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const METADATA_HEADER: [&str; 8] = ["record_id", "strat_fold", "CD", "HYP", "MI", "NORM", "STTC", "signal_file"];
pub const METADATA_FILE: &str = "metadata.csv";
pub const SIGNAL_BYTES: usize = SIGNAL_LEN * NUM_LEADS * 4;
pub const HISTORY_HEADER: &str = "epoch,lr,train_loss,train_acc,val_loss,val_acc,val_precision,val_recall";

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::malformed(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::malformed(path, e))
}

/// Decodes a 48,000-byte little-endian `f32` signal, time-major.
pub fn read_signal_file(path: &Path) -> CliResult<Vec<f32>> {
    let bytes = read_bytes(path)?;
    if bytes.len() % 4 != 0 {
        return Err(CliError::malformed(path, format!("{} bytes is not a whole number of f32 values", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub fn write_signal_file(path: &Path, signal: &[f32]) -> CliResult<()> {
    let bytes: Vec<u8> = signal.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_bytes(path, &bytes)
}

fn parse_bit(path: &Path, column: &str, raw: &str) -> CliResult<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(CliError::SchemaMismatch {
            path: path.to_path_buf(),
            column: column.into(),
            detail: format!("expected 0 or 1, found `{other}`"),
        }),
    }
}

/// One metadata row, before its signal is read.
#[derive(Clone, Debug, PartialEq)]
pub struct MetadataRow {
    pub record_id: String,
    pub strat_fold: i64,
    pub labels: LabelSet,
    pub signal_file: PathBuf,
}

/// Parses and validates the metadata CSV header and rows.
pub fn load_metadata(metadata: &Path) -> CliResult<Vec<MetadataRow>> {
    let file = fs::File::open(metadata).map_err(|e| CliError::io(metadata, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| CliError::malformed(metadata, e))?.clone();
    for (i, expected) in METADATA_HEADER.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(expected) {
            return Err(CliError::SchemaMismatch {
                path: metadata.to_path_buf(),
                column: (*expected).into(),
                detail: format!("header position {i} holds `{}`", headers.get(i).unwrap_or("")),
            });
        }
    }
    if headers.len() != METADATA_HEADER.len() {
        return Err(CliError::SchemaMismatch {
            path: metadata.to_path_buf(),
            column: headers.get(METADATA_HEADER.len()).unwrap_or("").into(),
            detail: format!("expected {} columns, found {}", METADATA_HEADER.len(), headers.len()),
        });
    }

    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CliError::malformed(metadata, e))?;
        let record_id = row[0].trim().to_string();
        let strat_fold: i64 = row[1].trim().parse().map_err(|_| CliError::SchemaMismatch {
            path: metadata.to_path_buf(),
            column: "strat_fold".into(),
            detail: format!("record {record_id}: `{}` is not an integer", &row[1]),
        })?;
        let mut bits = [0u8; 5];
        for (j, class) in DiagClass::ALL.iter().enumerate() {
            bits[j] = parse_bit(metadata, class.name(), &row[2 + j])?;
        }
        rows.push(MetadataRow {
            record_id,
            strat_fold,
            labels: LabelSet::from_multi_hot(&bits),
            signal_file: PathBuf::from(row[7].trim()),
        });
    }
    Ok(rows)
}

/// Reads the metadata CSV and every signal it references. Signal paths are
/// resolved against `signal_dir` unless absolute.
pub fn load_corpus(metadata: &Path, signal_dir: &Path) -> CliResult<Corpus> {
    let mut records = Vec::new();
    for row in load_metadata(metadata)? {
        let signal_path = if row.signal_file.is_absolute() {
            row.signal_file
        } else {
            signal_dir.join(row.signal_file)
        };
        let signal = read_signal_file(&signal_path)?;
        records.push(EcgRecord::new(row.record_id, signal, row.labels, row.strat_fold)?);
    }
    Ok(Corpus::new(records)?)
}

/// Writes `metadata.csv` and `signals/<record_id>.bin` under `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> CliResult<PathBuf> {
    let metadata = dir.join(METADATA_FILE);
    let mut out = String::with_capacity(64 * (corpus.len() + 1));
    out.push_str(&METADATA_HEADER.join(","));
    out.push('\n');
    for record in corpus.records() {
        let rel = format!("signals/{}.bin", record.record_id());
        write_signal_file(&dir.join(&rel), record.signal())?;
        let bits = record.labels().to_multi_hot();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            record.record_id(),
            record.strat_fold(),
            bits[0],
            bits[1],
            bits[2],
            bits[3],
            bits[4],
            rel
        ));
    }
    write_bytes(&metadata, out.as_bytes())?;
    Ok(metadata)
}

pub fn save_checkpoint(path: &Path, model: &Model) -> CliResult<()> {
    write_bytes(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> CliResult<Model> {
    Ok(decode_checkpoint(&read_bytes(path)?)?)
}

pub fn write_history(path: &Path, history: &[EpochLog]) -> CliResult<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for log in history {
        writer.serialize(log).map_err(|e| CliError::malformed(path, e))?;
    }
    let mut bytes = writer.into_inner().map_err(|e| CliError::malformed(path, e.error().to_string()))?;
    if history.is_empty() {
        bytes = format!("{HISTORY_HEADER}\n").into_bytes();
    }
    write_bytes(path, &bytes)
}

pub fn read_history(path: &Path) -> CliResult<Vec<EpochLog>> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::malformed(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != HISTORY_HEADER {
        return Err(CliError::malformed(path, format!("expected header `{HISTORY_HEADER}`")));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| CliError::malformed(path, e)))
        .collect()
}

/// `class,tn,fp,fn,tp`, one row per class.
pub fn confusion_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("class,tn,fp,fn,tp\n");
    for c in &report.classes {
        out.push_str(&format!("{},{},{},{},{}\n", c.class, c.tn, c.fp, c.fn_, c.tp));
    }
    out
}

/// `class,precision,recall,f1,support,auc`; an undefined AUC is left empty.
pub fn per_class_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("class,precision,recall,f1,support,auc\n");
    for c in &report.classes {
        let auc = c.auc.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{},{}\n", c.class, c.precision, c.recall, c.f1, c.support, auc));
    }
    out
}
