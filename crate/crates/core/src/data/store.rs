use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use super::jsonl::{load_jsonl, parse_line, save_jsonl};
use super::records::Record;
use super::DataError;

/// A directory of JSONL collections (`<root>/<name>.jsonl`) with a lazily
/// built id → byte offset index per collection.
///
/// Writes take `&mut self`, so a store has a single writer; readers of the
/// underlying files see only completed writes because `put` replaces the
/// file through a rename.
#[derive(Debug)]
pub struct DatasetStore {
    root: PathBuf,
    index: HashMap<String, HashMap<String, u64>>,
}

impl DatasetStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, DataError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| DataError::io(&root, e))?;
        Ok(Self { root, index: HashMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn collection_path(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}.jsonl"))
    }

    /// Replaces a collection with `records`.
    pub fn put<R: Record>(&mut self, name: &str, records: &[R]) -> Result<(), DataError> {
        let path = self.collection_path(name);
        let tmp = self.root.join(format!(".{name}.jsonl.tmp"));
        save_jsonl(records, &tmp)?;
        std::fs::rename(&tmp, &path).map_err(|e| DataError::io(&path, e))?;
        self.index.remove(name);
        Ok(())
    }

    pub fn get_all<R: Record>(&self, name: &str) -> Result<Vec<R>, DataError> {
        load_jsonl(&self.collection_path(name))
    }

    /// Random access by id through the offset index.
    pub fn get<R: Record>(&mut self, name: &str, id: &str) -> Result<R, DataError> {
        let path = self.collection_path(name);
        if !self.index.contains_key(name) {
            let built = build_index(&path)?;
            self.index.insert(name.to_string(), built);
        }
        let offset = *self.index[name].get(id).ok_or_else(|| DataError::UnknownId {
            collection: name.to_string(),
            id: id.to_string(),
        })?;
        let mut file = File::open(&path).map_err(|e| DataError::io(&path, e))?;
        file.seek(SeekFrom::Start(offset)).map_err(|e| DataError::io(&path, e))?;
        let mut line = String::new();
        BufReader::new(file).read_line(&mut line).map_err(|e| DataError::io(&path, e))?;
        parse_line(line.trim_end(), 0)
    }
}

fn build_index(path: &Path) -> Result<HashMap<String, u64>, DataError> {
    #[derive(serde::Deserialize)]
    struct IdOnly {
        id: String,
    }
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut index = HashMap::new();
    let mut offset = 0u64;
    let mut line_no = 0;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| DataError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !line.trim().is_empty() {
            let rec: IdOnly = serde_json::from_str(line.trim_end())
                .map_err(|e| DataError::Parse { line: line_no, message: e.to_string() })?;
            if index.insert(rec.id.clone(), offset).is_some() {
                return Err(DataError::DuplicateId { line: line_no, id: rec.id });
            }
        }
        offset += n as u64;
    }
    Ok(index)
}
