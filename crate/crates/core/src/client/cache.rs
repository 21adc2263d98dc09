//! Persistent embedding cache keyed by (model id, text hash).

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClientError, EmbedBackend};
use crate::hashing::content_hash_full;

const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheFile {
    schema_version: u32,
    entries: BTreeMap<String, Vec<f64>>,
}

/// Text-embedding cache so reruns and resumed runs do not re-bill.
///
/// Persisted as a single JSON document beside the checkpoint; an in-memory
/// cache (no path) behaves identically minus persistence.
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: BTreeMap::new(),
        }
    }

    /// Open a cache backed by `path`, loading existing entries when present.
    pub fn open(path: &Path) -> io::Result<Self> {
        let entries = if path.exists() {
            let text = std::fs::read_to_string(path)?;
            let file: CacheFile = serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            if file.schema_version != CACHE_SCHEMA_VERSION {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unsupported cache schema version {}", file.schema_version),
                ));
            }
            file.entries
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self) -> io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let file = CacheFile {
            schema_version: CACHE_SCHEMA_VERSION,
            entries: self.entries.clone(),
        };
        let body = serde_json::to_string(&file)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        crate::artifacts::atomic_write(path, body.as_bytes())
    }

    fn key(model_id: &str, text: &str) -> String {
        format!("{model_id}:{}", content_hash_full(text))
    }

    /// Embed `texts`, consulting the cache first and calling the backend only
    /// for misses. Output order matches input order.
    pub fn embed(
        &mut self,
        backend: &dyn EmbedBackend,
        texts: &[String],
    ) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::InvalidInput("no texts to embed".into()));
        }
        let model = backend.model_id();
        let keys: Vec<String> = texts.iter().map(|t| Self::key(&model, t)).collect();
        let mut misses: Vec<usize> = Vec::new();
        let mut miss_texts: Vec<String> = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            if !self.entries.contains_key(key) {
                // A text repeated within one call is only fetched once.
                if !miss_texts.contains(&texts[i]) {
                    misses.push(i);
                    miss_texts.push(texts[i].clone());
                }
            }
        }
        if !miss_texts.is_empty() {
            let fresh = backend.embed(&miss_texts)?;
            for (i, vec) in misses.iter().zip(fresh) {
                self.entries.insert(keys[*i].clone(), vec);
            }
        }
        Ok(keys
            .iter()
            .map(|k| self.entries.get(k).expect("filled above").clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::HashProjectionEmbedder;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct CountingEmbedder {
        inner: HashProjectionEmbedder,
        calls: AtomicUsize,
    }

    impl EmbedBackend for CountingEmbedder {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
            self.calls.fetch_add(texts.len(), Ordering::SeqCst);
            self.inner.embed(texts)
        }

        fn model_id(&self) -> String {
            self.inner.model_id()
        }
    }

    #[test]
    fn cache_avoids_repeat_calls_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let backend = CountingEmbedder {
            inner: HashProjectionEmbedder::new(3, 16),
            calls: AtomicUsize::new(0),
        };

        let mut cache = EmbeddingCache::open(&path).unwrap();
        let texts = vec!["alpha".to_string(), "beta".to_string(), "alpha".to_string()];
        let first = cache.embed(&backend, &texts).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
        assert_eq!(first[0], first[2]);
        cache.save().unwrap();

        let mut reopened = EmbeddingCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        let again = reopened.embed(&backend, &texts).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2, "no new calls");
        assert_eq!(first, again);
    }
}
