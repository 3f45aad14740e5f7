use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub id: String,
    pub summary: String,
    /// Seconds since the Unix epoch.
    pub ts: u64,
    pub model: String,
}

/// Append-only JSONL store of teacher answers, at most one per sample id.
#[derive(Debug, Default)]
pub struct HarvestCache {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: HashMap<String, CacheEntry>,
}

impl HarvestCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) the cache file and loads its entries.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            entries = Self::read(BufReader::new(File::open(&path)?))?;
            // drop a torn final line so the next append starts clean
            let bytes = std::fs::read(&path)?;
            if bytes.last().is_some_and(|&b| b != b'\n') {
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                OpenOptions::new().write(true).open(&path)?.set_len(keep as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            file: Some(file),
            entries,
        })
    }

    /// Parses cache lines. A torn final line from an interrupted write is
    /// ignored; any other bad line or a repeated id is an error.
    pub fn read(r: impl BufRead) -> std::io::Result<HashMap<String, CacheEntry>> {
        let mut entries = HashMap::new();
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
        let last = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry = match serde_json::from_str(line) {
                Ok(e) => e,
                Err(_) if i == last => break,
                Err(e) => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("cache line {}: {e}", i + 1),
                    ))
                }
            };
            if entries.contains_key(&entry.id) {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("cache line {}: repeated id {:?}", i + 1, entry.id),
                ));
            }
            entries.insert(entry.id.clone(), entry);
        }
        Ok(entries)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, id: &str) -> Option<&CacheEntry> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Persists an entry (flushed to the file) before it becomes visible.
    /// An existing entry for the id is kept.
    pub fn insert(&mut self, id: &str, summary: &str, model: &str) -> std::io::Result<&CacheEntry> {
        if !self.entries.contains_key(id) {
            let entry = CacheEntry {
                id: id.to_string(),
                summary: summary.to_string(),
                ts: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                model: model.to_string(),
            };
            if let Some(f) = self.file.as_mut() {
                let mut line = serde_json::to_vec(&entry)?;
                line.push(b'\n');
                f.write_all(&line)?;
                f.flush()?;
            }
            self.entries.insert(id.to_string(), entry);
        }
        Ok(&self.entries[id])
    }

    #[cfg(test)]
    pub(crate) fn break_writes_for_test(&mut self, path: &Path) {
        self.file = Some(File::open(path).expect("cache file exists"));
    }
}
