use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::warn;

use super::TranslationRecord;

pub const CACHE_FILE_NAME: &str = "translations.jsonl";

type Key = (String, String);

/// Append-only translation cache, one JSON record per line, keyed by
/// `(sentence_id, backend_id)`. Later lines win over earlier ones.
pub struct TranslationCache {
    entries: Mutex<HashMap<Key, TranslationRecord>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
    skipped: usize,
}

impl TranslationCache {
    /// Opens (creating if needed) the cache file inside `dir`.
    pub fn open(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(CACHE_FILE_NAME);
        let mut entries = HashMap::new();
        let mut skipped = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<TranslationRecord>(&line) {
                    Ok(r) if !r.translation.trim().is_empty() => {
                        entries.insert((r.sentence_id.clone(), r.backend_id.clone()), r);
                    }
                    Ok(r) => {
                        warn!(
                            "{}:{}: empty translation for {}; will re-fetch",
                            path.display(),
                            lineno + 1,
                            r.sentence_id
                        );
                        skipped += 1;
                    }
                    Err(e) => {
                        warn!(
                            "{}:{}: skipping corrupt cache entry: {e}",
                            path.display(),
                            lineno + 1
                        );
                        skipped += 1;
                    }
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        // A crash mid-write can leave a partial last line; start on a fresh one.
        if std::fs::metadata(&path)?.len() > 0 && !ends_with_newline(&path)? {
            file.write_all(b"\n")?;
        }
        Ok(TranslationCache {
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path),
            skipped,
        })
    }

    /// A cache that lives only as long as the process.
    pub fn in_memory() -> Self {
        TranslationCache {
            entries: Mutex::new(HashMap::new()),
            file: None,
            path: None,
            skipped: 0,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Number of lines ignored on open because they did not parse.
    pub fn skipped_entries(&self) -> usize {
        self.skipped
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, sentence_id: &str, backend_id: &str) -> Option<TranslationRecord> {
        self.entries
            .lock()
            .unwrap()
            .get(&(sentence_id.to_string(), backend_id.to_string()))
            .cloned()
    }

    pub fn put(&self, record: &TranslationRecord) -> io::Result<()> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
            line.push('\n');
            let mut f = file.lock().unwrap();
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries.lock().unwrap().insert(
            (record.sentence_id.clone(), record.backend_id.clone()),
            record.clone(),
        );
        Ok(())
    }

    /// All records for one backend, sorted by sentence id.
    pub fn records_for(&self, backend_id: &str) -> Vec<TranslationRecord> {
        let mut out: Vec<_> = self
            .entries
            .lock()
            .unwrap()
            .values()
            .filter(|r| r.backend_id == backend_id)
            .cloned()
            .collect();
        out.sort_by(|a, b| a.sentence_id.cmp(&b.sentence_id));
        out
    }
}

fn ends_with_newline(path: &Path) -> io::Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = File::open(path)?;
    f.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    f.read_exact(&mut last)?;
    Ok(last[0] == b'\n')
}
