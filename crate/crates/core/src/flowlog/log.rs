use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use super::record::{FlowRecord, InvalidRecord};

#[derive(Debug, thiserror::Error)]
pub enum FlowLogError {
    #[error(transparent)]
    Invalid(#[from] InvalidRecord),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

/// Append-only JSONL file of flow records. One writer per file.
#[derive(Debug)]
pub struct FlowLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl FlowLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FlowLogError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates and appends one line. The whole line goes out in a single
    /// write while holding the writer lock.
    pub fn append(&self, record: &FlowRecord) -> Result<(), FlowLogError> {
        record.validate()?;
        let mut line = serde_json::to_string(record).expect("flow record serializes");
        line.push('\n');
        let mut f = self.file.lock();
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn scan(&self) -> Result<LogScan, FlowLogError> {
        scan_file(&self.path)
    }
}

/// Parsed records plus the count of lines that did not parse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogScan {
    pub records: Vec<FlowRecord>,
    pub skipped_lines: usize,
}

pub fn scan_file(path: impl AsRef<Path>) -> Result<LogScan, FlowLogError> {
    let file = File::open(path)?;
    scan_reader(BufReader::new(file))
}

pub fn scan_reader(reader: impl BufRead) -> Result<LogScan, FlowLogError> {
    let mut scan = LogScan::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FlowRecord>(&line) {
            Ok(r) => scan.records.push(r),
            Err(e) => {
                tracing::debug!(error = %e, "skipping malformed flow log line");
                scan.skipped_lines += 1;
            }
        }
    }
    Ok(scan)
}
