//! Client for the contextual embedding service.
//!
//! Wire contract (JSON over HTTP):
//!
//! * `GET  /v1/models` returns `[{"name": .., "dim": .., "layer": ..}, ..]`
//! * `POST /v1/embed` takes `{"model": .., "sentences": [[token, ..], ..]}` and
//!   returns `{"model": .., "dim": D, "vectors": [[[f64; D], ..], ..]}` with
//!   one vector per input token.
//! * `404` means an unknown model; the body may carry `{"models": [..]}`.
//!   `503` means the model is still loading. `400` is a malformed request.

use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingProvider, ProviderKind, Token, WordVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub layer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub sentences: Vec<Vec<Token>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub model: String,
    pub dim: usize,
    pub vectors: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    #[serde(default)]
    models: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct RemoteClient {
    base: String,
    http: Client,
}

impl RemoteClient {
    pub fn new(base_url: &str) -> Result<Self, EmbeddingError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbeddingError::ProviderFailure(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn list_models(&self) -> Result<Vec<ModelInfo>, EmbeddingError> {
        let resp = self
            .http
            .get(format!("{}/v1/models", self.base))
            .send()
            .map_err(transport)?;
        let resp = check_status(resp, None)?;
        resp.json().map_err(|e| EmbeddingError::ProviderFailure(format!("bad /v1/models body: {e}")))
    }

    /// Sends one embed request without any shape checking.
    pub fn embed_raw(&self, request: &EmbedRequest) -> Result<EmbedResponse, EmbeddingError> {
        let resp = self
            .http
            .post(format!("{}/v1/embed", self.base))
            .json(request)
            .send()
            .map_err(transport)?;
        let resp = check_status(resp, Some(&request.model))?;
        resp.json().map_err(|e| EmbeddingError::ProviderFailure(format!("bad /v1/embed body: {e}")))
    }
}

fn transport(e: reqwest::Error) -> EmbeddingError {
    if e.is_connect() || e.is_timeout() {
        EmbeddingError::ServiceUnavailable(e.to_string())
    } else {
        EmbeddingError::ProviderFailure(e.to_string())
    }
}

fn check_status(resp: Response, model: Option<&str>) -> Result<Response, EmbeddingError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    Err(match status {
        StatusCode::NOT_FOUND if model.is_some() => EmbeddingError::UnknownModel {
            model: model.unwrap_or_default().to_string(),
            available: serde_json::from_str::<ErrorBody>(&body)
                .ok()
                .and_then(|b| b.models)
                .unwrap_or_default(),
        },
        StatusCode::SERVICE_UNAVAILABLE => EmbeddingError::ServiceUnavailable(format!("{status}: {body}")),
        _ => EmbeddingError::ProviderFailure(format!("{status}: {body}")),
    })
}

/// Embeds `sentences` with `model`, checking the model against the service's
/// advertised list and the response against the request's shape.
pub fn remote_embed(
    client: &RemoteClient,
    model: &str,
    sentences: &[Vec<Token>],
) -> Result<Vec<Vec<WordVector>>, EmbeddingError> {
    let models = client.list_models()?;
    let info = models
        .iter()
        .find(|m| m.name == model)
        .ok_or_else(|| EmbeddingError::UnknownModel {
            model: model.to_string(),
            available: models.iter().map(|m| m.name.clone()).collect(),
        })?;
    embed_checked(client, model, info.dim, sentences)
}

fn embed_checked(
    client: &RemoteClient,
    model: &str,
    dim: usize,
    sentences: &[Vec<Token>],
) -> Result<Vec<Vec<WordVector>>, EmbeddingError> {
    if sentences.iter().any(Vec::is_empty) || sentences.is_empty() {
        return Err(EmbeddingError::EmptyTokens);
    }
    let request = EmbedRequest {
        model: model.to_string(),
        sentences: sentences.to_vec(),
    };
    let response = client.embed_raw(&request)?;
    if response.dim != dim {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "service advertised dimension {dim} for `{model}` but answered with {}",
            response.dim
        )));
    }
    if response.vectors.len() != sentences.len() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "sent {} sentences, received {}",
            sentences.len(),
            response.vectors.len()
        )));
    }
    response
        .vectors
        .into_iter()
        .zip(sentences)
        .enumerate()
        .map(|(s, (vectors, tokens))| {
            if vectors.len() != tokens.len() {
                return Err(EmbeddingError::ShapeMismatch(format!(
                    "sentence {s}: sent {} tokens, received {} vectors",
                    tokens.len(),
                    vectors.len()
                )));
            }
            vectors
                .into_iter()
                .map(|v| {
                    if v.len() != dim {
                        return Err(EmbeddingError::ShapeMismatch(format!(
                            "sentence {s}: vector of dimension {} instead of {dim}",
                            v.len()
                        )));
                    }
                    WordVector::new(v).ok_or_else(|| {
                        EmbeddingError::ShapeMismatch(format!("sentence {s}: non-finite component"))
                    })
                })
                .collect()
        })
        .collect()
}

/// Provider backed by one model of a running embedding service.
#[derive(Debug)]
pub struct RemoteProvider {
    client: RemoteClient,
    model: String,
    dimension: usize,
    name: String,
}

impl RemoteProvider {
    pub fn connect(client: RemoteClient, model: &str) -> Result<Self, EmbeddingError> {
        let models = client.list_models()?;
        let info = models
            .iter()
            .find(|m| m.name == model)
            .ok_or_else(|| EmbeddingError::UnknownModel {
                model: model.to_string(),
                available: models.iter().map(|m| m.name.clone()).collect(),
            })?;
        if info.dim == 0 {
            return Err(EmbeddingError::ProviderFailure(format!("model `{model}` advertises dimension 0")));
        }
        Ok(Self {
            name: format!("remote:{model}@{}", client.base_url()),
            dimension: info.dim,
            model: model.to_string(),
            client,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteService
    }

    fn embed_tokens(&self, tokens: &[Token]) -> Result<Vec<WordVector>, EmbeddingError> {
        let mut out = embed_checked(&self.client, &self.model, self.dimension, &[tokens.to_vec()])?;
        Ok(out.pop().expect("shape checked"))
    }

    fn embed_batch(&self, sentences: &[Vec<Token>]) -> Vec<Result<Vec<WordVector>, EmbeddingError>> {
        let (empty, nonempty): (Vec<_>, Vec<_>) = sentences.iter().enumerate().partition(|(_, s)| s.is_empty());
        let mut out: Vec<Option<Result<Vec<WordVector>, EmbeddingError>>> = (0..sentences.len()).map(|_| None).collect();
        for (i, _) in empty {
            out[i] = Some(Err(EmbeddingError::EmptyTokens));
        }
        if !nonempty.is_empty() {
            let batch: Vec<Vec<Token>> = nonempty.iter().map(|(_, s)| (*s).clone()).collect();
            match embed_checked(&self.client, &self.model, self.dimension, &batch) {
                Ok(vectors) => {
                    for ((i, _), v) in nonempty.iter().zip(vectors) {
                        out[*i] = Some(Ok(v));
                    }
                }
                Err(e) => {
                    let msg = e.to_string();
                    for (i, _) in &nonempty {
                        out[*i] = Some(Err(match &e {
                            EmbeddingError::ServiceUnavailable(_) => EmbeddingError::ServiceUnavailable(msg.clone()),
                            _ => EmbeddingError::ProviderFailure(msg.clone()),
                        }));
                    }
                }
            }
        }
        out.into_iter().map(|r| r.expect("every slot filled")).collect()
    }
}
