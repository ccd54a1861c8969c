//! Append-only JSON Lines history with a schema header.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::EvaluationRecord;

use super::HarnessError;

pub const HISTORY_SCHEMA: &str = "usemoc-history";
pub const HISTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryHeader {
    pub schema: String,
    pub version: u32,
    pub config_hash: String,
    pub problem: String,
    pub algorithm: String,
    pub seed: u64,
    pub objectives: Vec<String>,
    pub reference_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub index: usize,
    #[serde(flatten)]
    pub record: EvaluationRecord,
    /// Hypervolume of the feasible front after this evaluation.
    pub phv: Option<f64>,
}

#[derive(Debug)]
pub struct HistoryWriter {
    file: File,
}

impl HistoryWriter {
    /// Creates the file and writes the header line.
    pub fn create(path: &Path, header: &HistoryHeader) -> Result<Self, HarnessError> {
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        let mut writer = Self { file };
        writer.write_json(path, header)?;
        Ok(writer)
    }

    /// Opens an existing history for appending after truncating it to
    /// `valid_len` bytes (drops a partially written last line).
    pub fn append_to(path: &Path, valid_len: u64) -> Result<Self, HarnessError> {
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        file.set_len(valid_len).map_err(|e| HarnessError::io(path, e))?;
        let mut file = file;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::End(0))
            .map_err(|e| HarnessError::io(path, e))?;
        Ok(Self { file })
    }

    pub fn append(&mut self, path: &Path, line: &HistoryLine) -> Result<(), HarnessError> {
        self.write_json(path, line)
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), HarnessError> {
        let mut text = serde_json::to_string(value).expect("history entries serialize");
        text.push('\n');
        self.file
            .write_all(text.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| HarnessError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryLog {
    pub header: HistoryHeader,
    pub lines: Vec<HistoryLine>,
    /// Length in bytes of the complete lines.
    pub valid_len: u64,
    /// Whether a trailing partial line was ignored.
    pub dropped_partial: bool,
}

impl HistoryLog {
    pub fn records(&self) -> Vec<EvaluationRecord> {
        self.lines.iter().map(|l| l.record.clone()).collect()
    }
}

pub fn read_history(path: &Path) -> Result<HistoryLog, HarnessError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| HarnessError::io(path, e))?;
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    let dropped_partial = complete < text.len();
    let mut lines = text[..complete].lines();
    let bad = |n: usize, reason: String| HarnessError::History(format!("{}:{n}: {reason}", path.display()));
    let header: HistoryHeader = serde_json::from_str(lines.next().ok_or_else(|| bad(1, "missing header".into()))?)
        .map_err(|e| bad(1, e.to_string()))?;
    if header.schema != HISTORY_SCHEMA || header.version != HISTORY_VERSION {
        return Err(bad(
            1,
            format!("unsupported schema {} v{}", header.schema, header.version),
        ));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let parsed: HistoryLine = serde_json::from_str(line).map_err(|e| bad(i + 2, e.to_string()))?;
        if parsed.index != i {
            return Err(bad(i + 2, format!("expected index {i}, found {}", parsed.index)));
        }
        records.push(parsed);
    }
    Ok(HistoryLog {
        header,
        lines: records,
        valid_len: complete as u64,
        dropped_partial,
    })
}
