//! Wire-protocol tests for the HTTP embedding and translation clients
//! against an in-process mock service.

use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use semrel_core::corpus::{parse_semrel_csv, LanguageCode, Split};
use semrel_core::embeddings::{
    fetch_health, score_pairs_unsupervised, EmbeddingError, EmbeddingProvider, HttpProvider,
};
use semrel_core::translation::{
    translate_split, HttpTranslator, TranslationCache, TranslationError, TranslationProvider,
};

type Handler = dyn Fn(&str, &str, &Value) -> (u16, Value) + Send + Sync;

struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<(String, Value)>>>,
    server: Arc<tiny_http::Server>,
}

impl MockServer {
    fn start(handler: Box<Handler>) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (srv, log) = (Arc::clone(&server), Arc::clone(&requests));
        thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let parsed: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                let url = req.url().to_string();
                let method = req.method().to_string();
                log.lock().unwrap().push((url.clone(), parsed.clone()));
                let (status, reply) = handler(&method, &url, &parsed);
                let header =
                    tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let resp = tiny_http::Response::from_string(reply.to_string())
                    .with_status_code(status)
                    .with_header(header);
                let _ = req.respond(resp);
            }
        });
        Self {
            url: format!("http://127.0.0.1:{port}"),
            requests,
            server,
        }
    }

    fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
    }
}

/// Deterministic unit vector derived from the text's SHA-256.
fn stub_vector(text: &str, dim: usize) -> Vec<f64> {
    let digest = Sha256::digest(text.as_bytes());
    let raw: Vec<f64> = (0..dim)
        .map(|i| f64::from(digest[i % 32]) / 127.5 - 1.0 + i as f64 * 1e-3)
        .collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / norm).collect()
}

fn embed_handler(dim: usize) -> Box<Handler> {
    Box::new(move |_, url, body| {
        assert_eq!(url, "/v1/embed");
        let texts: Vec<&str> = body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t.as_str().unwrap())
            .collect();
        let vectors: Vec<Vec<f64>> = texts.iter().map(|t| stub_vector(t, dim)).collect();
        (
            200,
            json!({"model": body["model"], "dimension": dim, "vectors": vectors}),
        )
    })
}

fn fast(p: HttpProvider) -> HttpProvider {
    p.with_retries(3, Duration::from_millis(5))
}

#[test]
fn embed_request_shape_order_and_memoization() {
    let server = MockServer::start(embed_handler(8));
    let provider = fast(HttpProvider::new(&server.url, "stub", 8)).with_batch_size(3);
    let texts = ["a", "b", "c", "a", "d", "e", "f", "b", "g"];
    let out = provider.embed_batch(&texts).unwrap();
    assert_eq!(out.len(), texts.len());
    for (t, v) in texts.iter().zip(&out) {
        assert_eq!(v.values(), stub_vector(t, 8).as_slice());
    }
    // 7 distinct texts in chunks of 3.
    assert_eq!(server.request_count(), 3);
    {
        let log = server.requests.lock().unwrap();
        let mut sent: Vec<String> = Vec::new();
        for (url, body) in log.iter() {
            assert_eq!(url, "/v1/embed");
            assert_eq!(body["model"], "stub");
            let obj = body.as_object().unwrap();
            assert_eq!(obj.len(), 2, "unexpected request fields: {body}");
            sent.extend(body["texts"].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_string()));
        }
        sent.sort();
        assert_eq!(sent, ["a", "b", "c", "d", "e", "f", "g"]);
    }

    let again = provider.embed_batch(&["g", "a"]).unwrap();
    assert_eq!(server.request_count(), 3, "memoized texts must not be re-requested");
    assert_eq!(again[0], out[8]);
}

#[test]
fn permuting_input_permutes_output() {
    let server = MockServer::start(embed_handler(4));
    let provider = fast(HttpProvider::new(&server.url, "stub", 4)).with_batch_size(2);
    let texts = ["x", "y", "z", "w", "v"];
    let fwd = provider.embed_batch(&texts).unwrap();
    let rev_texts: Vec<&str> = texts.iter().rev().copied().collect();
    let rev = provider.embed_batch(&rev_texts).unwrap();
    let mut rev = rev;
    rev.reverse();
    assert_eq!(fwd, rev);
}

#[test]
fn short_vector_is_a_dimension_violation() {
    let server = MockServer::start(Box::new(|_, _, body| {
        let n = body["texts"].as_array().unwrap().len();
        let vectors: Vec<Vec<f64>> = (0..n).map(|_| vec![0.1; 767]).collect();
        (200, json!({"model": "m", "dimension": 768, "vectors": vectors}))
    }));
    let provider = fast(HttpProvider::new(&server.url, "m", 768));
    assert_eq!(
        provider.embed_batch(&["only"]).unwrap_err(),
        EmbeddingError::DimensionViolation {
            index: 0,
            expected: 768,
            found: 767
        }
    );
}

#[test]
fn wrong_vector_count_is_a_protocol_error() {
    let server = MockServer::start(Box::new(|_, _, _| {
        (200, json!({"model": "m", "dimension": 2, "vectors": [[1.0, 0.0]]}))
    }));
    let provider = fast(HttpProvider::new(&server.url, "m", 2));
    assert!(matches!(
        provider.embed_batch(&["a", "b"]),
        Err(EmbeddingError::ProtocolError(_))
    ));
}

#[test]
fn loading_service_is_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let inner = embed_handler(3);
    let server = MockServer::start(Box::new(move |m, u, b| {
        if seen.fetch_add(1, Ordering::SeqCst) < 2 {
            (503, json!({"error": "loading"}))
        } else {
            inner(m, u, b)
        }
    }));
    let provider = fast(HttpProvider::new(&server.url, "stub", 3));
    let out = provider.embed_batch(&["hello"]).unwrap();
    assert_eq!(out[0].values(), stub_vector("hello", 3).as_slice());
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_503_is_unreachable_after_three_attempts() {
    let server = MockServer::start(Box::new(|_, _, _| (503, json!({"error": "loading"}))));
    let provider = fast(HttpProvider::new(&server.url, "stub", 3));
    assert!(matches!(
        provider.embed_batch(&["hello"]),
        Err(EmbeddingError::ProviderUnreachable(_))
    ));
    assert_eq!(server.request_count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(Box::new(|_, _, _| (404, json!({"error": "unknown model"}))));
    let provider = fast(HttpProvider::new(&server.url, "nope", 3));
    match provider.embed_batch(&["hello"]) {
        Err(EmbeddingError::ProtocolError(m)) => assert!(m.contains("404"), "{m}"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.request_count(), 1);
}

fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    format!("http://127.0.0.1:{port}")
}

#[test]
fn closed_port_is_unreachable() {
    let provider = fast(HttpProvider::new(&dead_url(), "stub", 3));
    assert!(matches!(
        provider.embed_batch(&["hello"]),
        Err(EmbeddingError::ProviderUnreachable(_))
    ));
    let translator = HttpTranslator::new(&dead_url(), LanguageCode::Esp, LanguageCode::Eng)
        .with_retries(2, Duration::from_millis(5));
    assert!(matches!(
        translator.translate(&["hola"]),
        Err(TranslationError::ProviderUnreachable(_))
    ));
}

#[test]
fn health_endpoint() {
    let server = MockServer::start(Box::new(|method, url, _| {
        assert_eq!((method, url), ("GET", "/v1/health"));
        (
            200,
            json!({"status": "ok", "mode": "stub", "models": [{"name": "stub", "dimension": 16}]}),
        )
    }));
    let health = fetch_health(&server.url).unwrap();
    assert_eq!(health.status, "ok");
    assert_eq!(health.mode, "stub");
    assert_eq!(health.dimension_of("stub"), Some(16));
    assert_eq!(health.dimension_of("other"), None);
}

#[test]
fn track_b_over_http() {
    let server = MockServer::start(embed_handler(16));
    let provider = fast(HttpProvider::new(&server.url, "stub", 16));
    let split = parse_semrel_csv(
        "PairID,Sentence1,Sentence2,Score\np1,same,same,1.0\np2,one,two,0.2\np3,three,four,\n"
            .as_bytes(),
        LanguageCode::Eng,
        Split::Dev,
    )
    .unwrap();
    let scores = score_pairs_unsupervised(&provider, &split).unwrap();
    assert_eq!(scores.raw[0], 1.0);
    let (u, v) = (stub_vector("one", 16), stub_vector("two", 16));
    let expected: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    assert!((scores.raw[1] - expected).abs() < 1e-12);
    assert!(scores.clamped().iter().all(|s| (0.0..=1.0).contains(s)));
}

fn dictionary_handler() -> Box<Handler> {
    Box::new(|_, url, body| {
        assert_eq!(url, "/v1/translate");
        assert_eq!(body.as_object().unwrap().len(), 3, "{body}");
        let dict = [("hola", "hello"), ("amigo", "friend"), ("gato", "cat")];
        let translations: Vec<String> = body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| {
                t.as_str()
                    .unwrap()
                    .split(' ')
                    .map(|w| dict.iter().find(|(k, _)| *k == w).map_or(w, |(_, v)| *v))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        (200, json!({ "translations": translations }))
    })
}

#[test]
fn translate_request_shape_and_chunking() {
    let server = MockServer::start(dictionary_handler());
    let translator = HttpTranslator::new(&server.url, LanguageCode::Esp, LanguageCode::Eng)
        .with_retries(3, Duration::from_millis(5))
        .with_batch_size(2);
    let out = translator
        .translate(&["hola amigo", "el gato", "adiós", "hola"])
        .unwrap();
    assert_eq!(out, ["hello friend", "el cat", "adiós", "hello"]);
    assert_eq!(server.request_count(), 2);
    for (_, body) in server.requests.lock().unwrap().iter() {
        assert_eq!(body["source"], LanguageCode::Esp.as_str());
        assert_eq!(body["target"], LanguageCode::Eng.as_str());
    }
}

#[test]
fn translate_split_over_http_with_cache() {
    let server = MockServer::start(dictionary_handler());
    let translator = HttpTranslator::new(&server.url, LanguageCode::Esp, LanguageCode::Eng)
        .with_retries(3, Duration::from_millis(5));
    let split = parse_semrel_csv(
        "PairID,Sentence1,Sentence2,Score\ns1,hola amigo,hola,0.7\ns2,el gato,hola amigo,0.3\n"
            .as_bytes(),
        LanguageCode::Esp,
        Split::Train,
    )
    .unwrap();
    let mut cache = TranslationCache::new();
    let first = translate_split(&translator, &split, Some(&mut cache)).unwrap();
    assert_eq!(server.request_count(), 1);
    assert_eq!(first.translated.pairs()[1].sentence1, "el cat");
    assert_eq!(first.translated.pairs()[0].score, Some(0.7));
    assert_eq!(cache.len(), 3);

    let second = translate_split(&translator, &split, Some(&mut cache)).unwrap();
    assert_eq!(server.request_count(), 1, "warm cache must not call the service");
    assert_eq!(first, second);
}

#[test]
fn short_translation_list_is_a_protocol_error() {
    let server = MockServer::start(Box::new(|_, _, _| (200, json!({"translations": []}))));
    let translator = HttpTranslator::new(&server.url, LanguageCode::Esp, LanguageCode::Eng)
        .with_retries(1, Duration::from_millis(5));
    assert!(matches!(
        translator.translate(&["hola"]),
        Err(TranslationError::ProtocolError(_))
    ));
}
