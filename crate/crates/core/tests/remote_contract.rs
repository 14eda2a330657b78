//! Remote embedding client against an in-process stub of the service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use asag_core::embedding::{
    remote_embed, tokenize, EmbedRequest, EmbeddingError, EmbeddingProvider, ProviderSpec, RemoteClient,
    RemoteProvider, Token,
};
use asag_core::features::sowe;
use serde_json::json;

const DIM: usize = 4;

/// Context-free stub vector: a function of the token text only.
fn stub_vector(token: &str) -> Vec<f64> {
    let h = token.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    (0..DIM).map(|i| ((h >> (i * 8)) & 0xff) as f64 / 255.0 - 0.5).collect()
}

struct Stub {
    url: String,
    embed_calls: Arc<AtomicUsize>,
}

type Handler = dyn Fn(&str, &str, &str) -> (u16, String) + Send + Sync;

fn serve(handler: Arc<Handler>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let embed_calls = Arc::new(AtomicUsize::new(0));
    let calls = embed_calls.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let handler = handler.clone();
            let calls = calls.clone();
            thread::spawn(move || handle(stream, &*handler, &calls));
        }
    });
    Stub { url, embed_calls }
}

fn handle(stream: TcpStream, handler: &Handler, calls: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    if path == "/v1/embed" {
        calls.fetch_add(1, Ordering::SeqCst);
    }
    let (status, payload) = handler(&method, &path, std::str::from_utf8(&body).unwrap());
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        503 => "Service Unavailable",
        _ => "Error",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )
    .unwrap();
}

/// Well-behaved service with model `stub` plus two misbehaving models:
/// `short` drops one vector from each sentence and `liar` answers with a
/// dimension different from the one it advertises.
fn service() -> Stub {
    serve(Arc::new(|method, path, body| match (method, path) {
        ("GET", "/v1/models") => (
            200,
            json!([
                {"name": "stub", "dim": DIM, "layer": "top"},
                {"name": "short", "dim": DIM},
                {"name": "liar", "dim": DIM},
            ])
            .to_string(),
        ),
        ("POST", "/v1/embed") => {
            let req: EmbedRequest = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return (400, json!({"error": e.to_string()}).to_string()),
            };
            let vectors: Vec<Vec<Vec<f64>>> = match req.model.as_str() {
                "stub" => req
                    .sentences
                    .iter()
                    .map(|s| s.iter().map(|t| stub_vector(t.as_str())).collect())
                    .collect(),
                "short" => req
                    .sentences
                    .iter()
                    .map(|s| s.iter().skip(1).map(|t| stub_vector(t.as_str())).collect())
                    .collect(),
                "liar" => req
                    .sentences
                    .iter()
                    .map(|s| s.iter().map(|t| stub_vector(t.as_str())[..DIM - 1].to_vec()).collect())
                    .collect(),
                _ => {
                    return (
                        404,
                        json!({"error": "unknown model", "models": ["stub", "short", "liar"]}).to_string(),
                    )
                }
            };
            let dim = if req.model == "liar" { DIM - 1 } else { DIM };
            (200, json!({"model": req.model, "dim": dim, "vectors": vectors}).to_string())
        }
        _ => (404, "{}".into()),
    }))
}

fn tokens(words: &[&str]) -> Vec<Token> {
    words.iter().map(|w| Token::new(*w).unwrap()).collect()
}

#[test]
fn lists_models_with_dimensions() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    let models = client.list_models().unwrap();
    assert_eq!(models.len(), 3);
    assert_eq!(models[0].name, "stub");
    assert_eq!(models[0].dim, DIM);
    assert_eq!(models[0].layer.as_deref(), Some("top"));
    assert_eq!(models[1].layer, None);
}

#[test]
fn one_vector_per_token_in_every_sentence() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    let sentences = vec![tokens(&["the", "stack", "grows"]), tokens(&["a", "b", "c", "d", "e"])];
    let out = remote_embed(&client, "stub", &sentences).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].len(), 3);
    assert_eq!(out[1].len(), 5);
    assert!(out.iter().flatten().all(|v| v.dimension() == DIM));
    assert_eq!(out[0][1].as_slice(), stub_vector("stack").as_slice());
}

#[test]
fn advertised_dimension_matches_embed_responses() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    let advertised = client.list_models().unwrap()[0].dim;
    let raw = client
        .embed_raw(&EmbedRequest { model: "stub".into(), sentences: vec![tokens(&["x", "y"])] })
        .unwrap();
    assert_eq!(raw.dim, advertised);
    assert!(raw.vectors[0].iter().all(|v| v.len() == advertised));
}

#[test]
fn repeated_requests_are_identical() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    let sentences = vec![tokenize("Linked lists use pointers.")];
    let a = remote_embed(&client, "stub", &sentences).unwrap();
    let b = remote_embed(&client, "stub", &sentences).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_model_lists_alternatives() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    match remote_embed(&client, "foo", &[tokens(&["x"])]) {
        Err(EmbeddingError::UnknownModel { model, available }) => {
            assert_eq!(model, "foo");
            assert_eq!(available, ["stub", "short", "liar"]);
        }
        other => panic!("expected UnknownModel, got {other:?}"),
    }
    // The raw 404 carries the list in its body as well.
    match client.embed_raw(&EmbedRequest { model: "foo".into(), sentences: vec![tokens(&["x"])] }) {
        Err(EmbeddingError::UnknownModel { model, available }) => {
            assert_eq!(model, "foo");
            assert_eq!(available.len(), 3);
        }
        other => panic!("expected UnknownModel, got {other:?}"),
    }
    assert!(matches!(
        RemoteProvider::connect(client, "foo"),
        Err(EmbeddingError::UnknownModel { .. })
    ));
}

#[test]
fn malformed_responses_are_shape_mismatches() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    let sentences = vec![tokens(&["a", "b", "c"])];
    assert!(matches!(remote_embed(&client, "short", &sentences), Err(EmbeddingError::ShapeMismatch(_))));
    assert!(matches!(remote_embed(&client, "liar", &sentences), Err(EmbeddingError::ShapeMismatch(_))));
}

#[test]
fn empty_sentences_are_rejected_before_sending() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    assert!(matches!(remote_embed(&client, "stub", &[vec![]]), Err(EmbeddingError::EmptyTokens)));
    assert_eq!(stub.embed_calls.load(Ordering::SeqCst), 0);
}

#[test]
fn loading_service_is_unavailable() {
    let stub = serve(Arc::new(|_, _, _| (503, json!({"error": "loading"}).to_string())));
    let client = RemoteClient::new(&stub.url).unwrap();
    assert!(matches!(client.list_models(), Err(EmbeddingError::ServiceUnavailable(_))));
    assert!(matches!(
        client.embed_raw(&EmbedRequest { model: "stub".into(), sentences: vec![tokens(&["x"])] }),
        Err(EmbeddingError::ServiceUnavailable(_))
    ));
}

#[test]
fn refused_connection_is_unavailable() {
    let url = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", listener.local_addr().unwrap())
    };
    let client = RemoteClient::new(&url).unwrap();
    assert!(matches!(client.list_models(), Err(EmbeddingError::ServiceUnavailable(_))));
    let spec = ProviderSpec::parse(&format!("remote:{url},stub")).unwrap();
    assert!(matches!(spec.connect(), Err(EmbeddingError::ServiceUnavailable(_))));
}

#[test]
fn provider_batches_into_one_request() {
    let stub = service();
    let spec = ProviderSpec::parse(&format!("remote:{},stub", stub.url)).unwrap();
    let provider = spec.connect().unwrap();
    assert_eq!(provider.name(), spec.provider_name());
    assert_eq!(provider.dimension(), DIM);
    let sentences = vec![tokens(&["a", "b"]), vec![], tokens(&["c"])];
    let out = provider.embed_batch(&sentences);
    assert_eq!(stub.embed_calls.load(Ordering::SeqCst), 1);
    assert_eq!(out[0].as_ref().unwrap().len(), 2);
    assert!(matches!(out[1], Err(EmbeddingError::EmptyTokens)));
    assert_eq!(out[2].as_ref().unwrap().len(), 1);
    let sentence = sowe(out[0].as_ref().unwrap()).unwrap();
    assert_eq!(sentence.dimension(), provider.dimension());
}

#[test]
fn provider_failures_reach_every_sentence_of_the_batch() {
    let stub = service();
    let client = RemoteClient::new(&stub.url).unwrap();
    let provider = RemoteProvider::connect(client, "short").unwrap();
    let out = provider.embed_batch(&[tokens(&["a", "b"]), tokens(&["c"])]);
    assert!(out.iter().all(|r| matches!(r, Err(EmbeddingError::ProviderFailure(_)))));
}
