use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::records::Record;
use super::DataError;

/// Reads one record per line, validating each and rejecting duplicate ids.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn load_jsonl<R: Record>(path: &Path) -> Result<Vec<R>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line::<R>(&line, line_no)?;
        record
            .validate(base_dir)
            .map_err(|message| DataError::Invalid { line: line_no, message })?;
        if !seen.insert(record.id().to_string()) {
            return Err(DataError::DuplicateId { line: line_no, id: record.id().to_string() });
        }
        out.push(record);
    }
    Ok(out)
}

pub(crate) fn parse_line<R: Record>(line: &str, line_no: usize) -> Result<R, DataError> {
    serde_json::from_str::<R>(line).map_err(|e| DataError::Parse {
        line: line_no,
        message: clean_serde_message(&e),
    })
}

/// Writes records as UTF-8 JSONL, validating each first. The file is only
/// replaced once every record serialized successfully.
pub fn save_jsonl<R: Record>(records: &[R], path: &Path) -> Result<(), DataError> {
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut buf = Vec::new();
    let mut seen = HashSet::new();
    for (idx, record) in records.iter().enumerate() {
        let index = idx + 1;
        record
            .validate(base_dir)
            .map_err(|message| DataError::Invalid { line: index, message })?;
        if !seen.insert(record.id()) {
            return Err(DataError::DuplicateId { line: index, id: record.id().to_string() });
        }
        serde_json::to_writer(&mut buf, record).map_err(|e| DataError::Serialize {
            index,
            message: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf).map_err(|e| DataError::io(path, e))?;
    w.flush().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// Appends a single record as one line; used by append-only logs.
pub fn append_jsonl<R: Record>(record: &R, path: &Path) -> Result<(), DataError> {
    let mut line = serde_json::to_vec(record)
        .map_err(|e| DataError::Serialize { index: 1, message: e.to_string() })?;
    line.push(b'\n');
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| DataError::io(path, e))?;
    file.write_all(&line).map_err(|e| DataError::io(path, e))?;
    file.sync_data().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

// serde_json messages look like "missing field `label` at line 1 column 42";
// the per-line position is noise once the file line number is known.
fn clean_serde_message(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    let msg = match msg.rfind(" at line ") {
        Some(pos) => &msg[..pos],
        None => &msg[..],
    };
    msg.replace('`', "")
}
