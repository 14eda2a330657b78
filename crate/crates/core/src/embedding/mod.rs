//! Token embeddings behind a provider boundary.
//!
//! Three providers implement [`EmbeddingProvider`]:
//!
//! * [`StaticEmbeddings`] reads a plain-text word-vector file. Tokens missing
//!   from the file are skipped and counted.
//! * [`HashEmbeddings`] derives a unit vector from a seeded hash of each token.
//!   It needs no model assets and is identical on every platform.
//! * [`RemoteProvider`] calls an embedding service over HTTP, which is how
//!   contextual models are consumed.
//!
//! Computed sentence vectors can be persisted in an [`EmbeddingCache`].

mod cache;
pub(crate) mod hashed;
mod remote;
mod static_file;
mod tokenize;

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{read_cache_records, write_cache_records, CacheRecord, EmbeddingCache};
pub use hashed::{HashEmbeddings, DEFAULT_HASH_DIMENSION};
pub use remote::{remote_embed, EmbedRequest, EmbedResponse, ModelInfo, RemoteClient, RemoteProvider};
pub use static_file::{load_static_embeddings, StaticEmbeddings};
pub use tokenize::{tokenize, Token};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: {reason}")]
    MalformedVector { line: usize, reason: String },
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("no tokens to embed")]
    EmptyTokens,
    #[error("every token is out of vocabulary")]
    AllTokensOov,
    #[error("embedding service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("unknown model `{model}`; the service offers {available:?}")]
    UnknownModel { model: String, available: Vec<String> },
    #[error("response shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("invalid provider spec `{0}`")]
    InvalidSpec(String),
    #[error("corrupt cache file: {0}")]
    CorruptCache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One token's embedding. All components are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordVector(Vec<f64>);

impl WordVector {
    pub fn new(values: Vec<f64>) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            None
        } else {
            Some(Self(values))
        }
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    StaticFile,
    DeterministicTest,
    RemoteService,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StaticFile => "static-file",
            Self::DeterministicTest => "deterministic-test",
            Self::RemoteService => "remote-service",
        })
    }
}

/// Maps token sequences to per-token vectors of a fixed dimension.
///
/// Static providers may drop out-of-vocabulary tokens, so the output can be
/// shorter than the input; it is never longer, and it is never empty on
/// success.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn kind(&self) -> ProviderKind;
    fn embed_tokens(&self, tokens: &[Token]) -> Result<Vec<WordVector>, EmbeddingError>;

    /// Embeds several sentences. Providers that can batch override this.
    fn embed_batch(&self, sentences: &[Vec<Token>]) -> Vec<Result<Vec<WordVector>, EmbeddingError>> {
        sentences.iter().map(|s| self.embed_tokens(s)).collect()
    }

    /// Tokens skipped so far as out-of-vocabulary.
    fn oov_count(&self) -> usize {
        0
    }
}

/// Parsed form of the `--provider` argument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProviderSpec {
    /// `static:PATH`
    Static { path: String },
    /// `test:SEED` or `test:SEED:DIM`
    Test { seed: u64, dimension: usize },
    /// `remote:URL,MODEL`
    Remote { url: String, model: String },
}

impl ProviderSpec {
    pub fn parse(spec: &str) -> Result<Self, EmbeddingError> {
        let invalid = || EmbeddingError::InvalidSpec(spec.to_string());
        let (kind, rest) = spec.split_once(':').ok_or_else(invalid)?;
        match kind {
            "static" if !rest.is_empty() => Ok(Self::Static { path: rest.to_string() }),
            "test" => {
                let (seed, dimension) = match rest.split_once(':') {
                    Some((s, d)) => (s, d.parse().map_err(|_| invalid())?),
                    None => (rest, DEFAULT_HASH_DIMENSION),
                };
                if dimension == 0 {
                    return Err(invalid());
                }
                Ok(Self::Test {
                    seed: seed.parse().map_err(|_| invalid())?,
                    dimension,
                })
            }
            "remote" => {
                let (url, model) = rest.rsplit_once(',').ok_or_else(invalid)?;
                if url.is_empty() || model.is_empty() {
                    return Err(invalid());
                }
                Ok(Self::Remote {
                    url: url.to_string(),
                    model: model.to_string(),
                })
            }
            _ => Err(invalid()),
        }
    }

    /// Name under which vectors from this provider are cached and reported.
    pub fn provider_name(&self) -> String {
        match self {
            Self::Static { path } => {
                let stem = std::path::Path::new(path)
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or(path);
                format!("static:{stem}")
            }
            Self::Test { seed, dimension } => format!("test:{seed}:{dimension}"),
            Self::Remote { url, model } => format!("remote:{model}@{url}"),
        }
    }

    pub fn connect(&self) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
        Ok(match self {
            Self::Static { path } => {
                let file = std::fs::File::open(path)?;
                Box::new(load_static_embeddings(std::io::BufReader::new(file), self.provider_name())?)
            }
            Self::Test { seed, dimension } => Box::new(HashEmbeddings::new(*seed, *dimension)),
            Self::Remote { url, model } => Box::new(RemoteProvider::connect(RemoteClient::new(url)?, model)?),
        })
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Static { path } => write!(f, "static:{path}"),
            Self::Test { seed, dimension } if *dimension == DEFAULT_HASH_DIMENSION => write!(f, "test:{seed}"),
            Self::Test { seed, dimension } => write!(f, "test:{seed}:{dimension}"),
            Self::Remote { url, model } => write!(f, "remote:{url},{model}"),
        }
    }
}

impl std::str::FromStr for ProviderSpec {
    type Err = EmbeddingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for ProviderSpec {
    type Error = EmbeddingError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<ProviderSpec> for String {
    fn from(spec: ProviderSpec) -> Self {
        spec.to_string()
    }
}

/// Stable 64-bit FNV-1a digest of `text`, used to tie cache entries to the
/// exact text they were computed from.
pub fn content_digest(text: &str) -> u64 {
    hashed::fnv1a(hashed::FNV_OFFSET, text.as_bytes())
}

/// Provider that connects on first use.
///
/// Lets fully cached runs proceed without the model file or the service.
pub struct LazyProvider {
    spec: ProviderSpec,
    name: String,
    inner: OnceLock<Result<Box<dyn EmbeddingProvider>, String>>,
}

impl LazyProvider {
    pub fn new(spec: ProviderSpec) -> Self {
        Self {
            name: spec.provider_name(),
            spec,
            inner: OnceLock::new(),
        }
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn get(&self) -> Result<&dyn EmbeddingProvider, EmbeddingError> {
        match self.inner.get_or_init(|| self.spec.connect().map_err(|e| e.to_string())) {
            Ok(p) => Ok(p.as_ref()),
            Err(e) => Err(EmbeddingError::ProviderFailure(format!("cannot open provider `{}`: {e}", self.spec))),
        }
    }
}

impl fmt::Debug for LazyProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LazyProvider").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl EmbeddingProvider for LazyProvider {
    fn name(&self) -> &str {
        &self.name
    }

    /// Zero when the underlying provider cannot be opened.
    fn dimension(&self) -> usize {
        self.get().map(|p| p.dimension()).unwrap_or(0)
    }

    fn kind(&self) -> ProviderKind {
        match self.spec {
            ProviderSpec::Static { .. } => ProviderKind::StaticFile,
            ProviderSpec::Test { .. } => ProviderKind::DeterministicTest,
            ProviderSpec::Remote { .. } => ProviderKind::RemoteService,
        }
    }

    fn embed_tokens(&self, tokens: &[Token]) -> Result<Vec<WordVector>, EmbeddingError> {
        self.get()?.embed_tokens(tokens)
    }

    fn embed_batch(&self, sentences: &[Vec<Token>]) -> Vec<Result<Vec<WordVector>, EmbeddingError>> {
        match self.get() {
            Ok(p) => p.embed_batch(sentences),
            Err(e) => {
                let msg = e.to_string();
                sentences.iter().map(|_| Err(EmbeddingError::ProviderFailure(msg.clone()))).collect()
            }
        }
    }

    fn oov_count(&self) -> usize {
        self.inner.get().and_then(|r| r.as_ref().ok()).map_or(0, |p| p.oov_count())
    }
}
