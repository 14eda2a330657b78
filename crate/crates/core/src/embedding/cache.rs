//! On-disk cache of sentence vectors.
//!
//! The file is a plain sequence of records, each laid out as
//!
//! ```text
//! u32 LE  provider name length   | provider name (UTF-8)
//! u32 LE  answer identity length | answer identity (UTF-8)
//! u32 LE  D                      | D x f64 LE
//! ```
//!
//! `D = 0` records an answer that had no embeddable tokens. Records are
//! written sorted by (provider, identity).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::RwLock;

use super::EmbeddingError;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub provider: String,
    pub identity: String,
    pub values: Vec<f64>,
}

pub fn write_cache_records<'a, W, I>(mut out: W, records: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CacheRecord>,
{
    for r in records {
        for s in [&r.provider, &r.identity] {
            out.write_all(&(s.len() as u32).to_le_bytes())?;
            out.write_all(s.as_bytes())?;
        }
        out.write_all(&(r.values.len() as u32).to_le_bytes())?;
        for v in &r.values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn read_cache_records<R: Read>(mut input: R) -> Result<Vec<CacheRecord>, EmbeddingError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cursor = &bytes[..];
    let corrupt = |what: &str| EmbeddingError::CorruptCache(format!("truncated {what}"));

    fn take<'a>(cursor: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
        if cursor.len() < n {
            return None;
        }
        let (head, tail) = cursor.split_at(n);
        *cursor = tail;
        Some(head)
    }
    fn take_u32(cursor: &mut &[u8]) -> Option<usize> {
        take(cursor, 4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
    fn take_str(cursor: &mut &[u8]) -> Option<Result<String, std::string::FromUtf8Error>> {
        let len = take_u32(cursor)?;
        take(cursor, len).map(|b| String::from_utf8(b.to_vec()))
    }

    let mut records = Vec::new();
    while !cursor.is_empty() {
        let provider = take_str(&mut cursor)
            .ok_or_else(|| corrupt("provider name"))?
            .map_err(|e| EmbeddingError::CorruptCache(e.to_string()))?;
        let identity = take_str(&mut cursor)
            .ok_or_else(|| corrupt("answer identity"))?
            .map_err(|e| EmbeddingError::CorruptCache(e.to_string()))?;
        let dim = take_u32(&mut cursor).ok_or_else(|| corrupt("dimension"))?;
        let raw = take(&mut cursor, dim.checked_mul(8).ok_or_else(|| corrupt("vector"))?)
            .ok_or_else(|| corrupt("vector"))?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        records.push(CacheRecord {
            provider,
            identity,
            values,
        });
    }
    Ok(records)
}

/// Sentence-vector cache keyed by (provider name, answer identity).
///
/// Reads take a shared lock, inserts an exclusive one. [`persist`] replaces
/// the file atomically, so a failed run never leaves a truncated cache.
///
/// [`persist`]: EmbeddingCache::persist
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<(String, String), Vec<f64>>>,
    dirty: AtomicBool,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the cache at `path`, loading existing records if the file exists.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, EmbeddingError> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let file = std::fs::File::open(&path)?;
            for r in read_cache_records(std::io::BufReader::new(file))? {
                entries.insert((r.provider, r.identity), r.values);
            }
        }
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            dirty: AtomicBool::new(false),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// `Some(vec![])` means the answer is cached as having no embeddable tokens.
    pub fn get(&self, provider: &str, identity: &str) -> Option<Vec<f64>> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&(provider.to_string(), identity.to_string()))
            .cloned()
    }

    pub fn insert(&self, provider: &str, identity: &str, values: Vec<f64>) {
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert((provider.to_string(), identity.to_string()), values);
        self.dirty.store(true, Ordering::Release);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<CacheRecord> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .iter()
            .map(|((provider, identity), values)| CacheRecord {
                provider: provider.clone(),
                identity: identity.clone(),
                values: values.clone(),
            })
            .collect()
    }

    /// Writes the cache to its file if anything changed since it was opened.
    /// Returns whether a write happened.
    pub fn persist(&self) -> Result<bool, EmbeddingError> {
        let Some(path) = &self.path else {
            return Ok(false);
        };
        if !self.dirty.load(Ordering::Acquire) {
            return Ok(false);
        }
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        write_cache_records(std::io::BufWriter::new(tmp.as_file_mut()), &self.records())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| EmbeddingError::Io(e.error))?;
        self.dirty.store(false, Ordering::Release);
        Ok(true)
    }
}
