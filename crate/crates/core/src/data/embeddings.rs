use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::DataError;

/// Unit-normalized image embeddings keyed by image id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    /// Inserts a raw vector, normalizing it to unit length.
    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<(), DataError> {
        let id = id.into();
        let line = self.entries.len() + 2;
        if vector.len() != self.dim {
            return Err(DataError::DimensionMismatch {
                line,
                expected: self.dim,
                found: vector.len(),
            });
        }
        let normalized = normalize(vector).ok_or_else(|| DataError::ZeroNorm {
            line,
            id: id.clone(),
        })?;
        if self.entries.contains_key(&id) {
            return Err(DataError::DuplicateId { line, id });
        }
        self.entries.insert(id, normalized);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<&[f64], DataError> {
        self.entries
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| DataError::MissingEmbedding(id.to_owned()))
    }

    /// Cosine similarity between two stored images.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, DataError> {
        Ok(cosine(self.get(a)?, self.get(b)?))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Dot product of two unit vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

#[derive(Deserialize)]
struct Header {
    dim: usize,
}

#[derive(Deserialize)]
struct Entry {
    id: String,
    v: Vec<f64>,
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_embeddings(BufReader::new(file))
}

pub fn parse_embeddings(reader: impl BufRead) -> Result<EmbeddingStore, DataError> {
    let mut store: Option<EmbeddingStore> = None;
    for (idx, text) in reader.lines().enumerate() {
        let line = idx + 1;
        let text = text.map_err(|e| DataError::Parse {
            line,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| DataError::Parse {
            line,
            message: e.to_string(),
        };
        match store.as_mut() {
            None => {
                let header: Header = serde_json::from_str(&text).map_err(parse_err)?;
                if header.dim == 0 {
                    return Err(DataError::Parse {
                        line,
                        message: "dim must be positive".into(),
                    });
                }
                store = Some(EmbeddingStore::new(header.dim));
            }
            Some(store) => {
                let entry: Entry = serde_json::from_str(&text).map_err(parse_err)?;
                store.insert(entry.id, entry.v).map_err(|e| relabel(e, line))?;
            }
        }
    }
    store.ok_or(DataError::Parse {
        line: 1,
        message: "missing {\"dim\": ..} header".into(),
    })
}

fn relabel(err: DataError, line: usize) -> DataError {
    match err {
        DataError::DimensionMismatch {
            expected, found, ..
        } => DataError::DimensionMismatch {
            line,
            expected,
            found,
        },
        DataError::ZeroNorm { id, .. } => DataError::ZeroNorm { line, id },
        DataError::DuplicateId { id, .. } => DataError::DuplicateId { line, id },
        other => other,
    }
}
