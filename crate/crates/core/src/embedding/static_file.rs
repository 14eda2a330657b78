use std::collections::HashMap;
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{EmbeddingError, EmbeddingProvider, ProviderKind, Token, WordVector};

/// Word vectors loaded from a `word v1 ... vD` text file.
#[derive(Debug)]
pub struct StaticEmbeddings {
    name: String,
    dimension: usize,
    vectors: HashMap<String, WordVector>,
    oov: AtomicUsize,
}

impl StaticEmbeddings {
    pub fn lookup(&self, word: &str) -> Option<&WordVector> {
        self.vectors.get(word)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vectors.len()
    }
}

/// Reads a word-vector text file: one `word v1 v2 ... vD` entry per line,
/// single-space separated, no header. The dimension is taken from the first
/// row. A word listed twice keeps its last row.
pub fn load_static_embeddings<R: BufRead>(
    reader: R,
    name: impl Into<String>,
) -> Result<StaticEmbeddings, EmbeddingError> {
    let mut dimension = 0;
    let mut vectors = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', ' ']);
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        if word.is_empty() {
            return Err(EmbeddingError::MalformedVector {
                line: line_no,
                reason: "missing word".into(),
            });
        }
        let values = parts
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| EmbeddingError::MalformedVector {
                        line: line_no,
                        reason: format!("`{p}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(EmbeddingError::MalformedVector {
                line: line_no,
                reason: format!("word `{word}` has no components"),
            });
        }
        if dimension == 0 {
            dimension = values.len();
        } else if values.len() != dimension {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected: dimension,
                found: values.len(),
            });
        }
        let vector = WordVector::new(values).expect("checked non-empty and finite");
        if vectors.insert(word.to_string(), vector).is_some() {
            log::warn!("line {line_no}: duplicate entry for `{word}`, keeping the later row");
        }
    }
    if vectors.is_empty() {
        return Err(EmbeddingError::EmptyFile);
    }
    Ok(StaticEmbeddings {
        name: name.into(),
        dimension,
        vectors,
        oov: AtomicUsize::new(0),
    })
}

impl EmbeddingProvider for StaticEmbeddings {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::StaticFile
    }

    fn embed_tokens(&self, tokens: &[Token]) -> Result<Vec<WordVector>, EmbeddingError> {
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyTokens);
        }
        let mut out = Vec::with_capacity(tokens.len());
        for t in tokens {
            match self.vectors.get(t.as_str()) {
                Some(v) => out.push(v.clone()),
                None => {
                    self.oov.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        if out.is_empty() {
            return Err(EmbeddingError::AllTokensOov);
        }
        Ok(out)
    }

    fn oov_count(&self) -> usize {
        self.oov.load(Ordering::Relaxed)
    }
}
