//! Wire-contract tests for the remote providers and the detector adapter,
//! against a minimal in-process HTTP server.
#![cfg(feature = "remote")]

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use claimveil::model::BinaryLabel;
use claimveil::providers::{
    ChatProvider, ChatRequest, ProviderError, RemoteChat, RemoteEmbedder, RetryPolicy,
    SentenceEmbedderProvider,
};
use claimveil::victim::{
    Detector, DetectorAdapterConfig, Gateway, QueryBudget, RawVerdict, RemoteDetector,
};

struct MockResponse {
    status: u16,
    headers: Vec<(&'static str, String)>,
    body: String,
}

impl MockResponse {
    fn ok(body: &str) -> Self {
        Self { status: 200, headers: vec![], body: body.to_owned() }
    }

    fn too_many_requests(retry_after_secs: Option<u64>) -> Self {
        let mut headers = vec![];
        if let Some(s) = retry_after_secs {
            headers.push(("Retry-After", s.to_string()));
        }
        Self { status: 429, headers, body: String::new() }
    }
}

/// Serves scripted responses, one connection per request. Records bodies.
struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<String>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    fn start(responses: Vec<MockResponse>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<String>>> = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        let queue = Mutex::new(VecDeque::from(responses));
        let handle = std::thread::spawn(move || {
            while let Ok((mut stream, _)) = listener.accept() {
                let Some(response) = queue.lock().unwrap().pop_front() else { break };
                let body = read_request_body(&mut stream);
                seen.lock().unwrap().push(body);
                let reason = match response.status {
                    200 => "OK",
                    429 => "Too Many Requests",
                    500 => "Internal Server Error",
                    _ => "Other",
                };
                let mut head = format!("HTTP/1.1 {} {}\r\n", response.status, reason);
                for (k, v) in &response.headers {
                    head.push_str(&format!("{k}: {v}\r\n"));
                }
                head.push_str(&format!(
                    "Content-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    response.body.len()
                ));
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(response.body.as_bytes());
                let empty = queue.lock().unwrap().is_empty();
                if empty {
                    break;
                }
            }
        });
        Self { url, requests, handle: Some(handle) }
    }

    fn finish(mut self) -> Vec<String> {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        Arc::try_unwrap(self.requests).map(|m| m.into_inner().unwrap()).unwrap_or_default()
    }
}

fn read_request_body(stream: &mut std::net::TcpStream) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let mut header_end = 0;
    loop {
        let n = stream.read(&mut chunk).unwrap_or(0);
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buf) {
            header_end = pos;
            break;
        }
    }
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|l| l.to_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().ok()))
        .flatten()
        .unwrap_or(0);
    let mut body = buf[header_end..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).unwrap_or(0);
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    String::from_utf8_lossy(&body).to_string()
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy { max_attempts, backoff_base: Duration::from_millis(1) }
}

#[test]
fn chat_retries_through_two_rate_limits() {
    let server = MockServer::start(vec![
        MockResponse::too_many_requests(Some(0)),
        MockResponse::too_many_requests(None),
        MockResponse::ok(r#"{"text": "a rewritten claim"}"#),
    ]);
    let chat = RemoteChat {
        url: server.url.clone(),
        timeout: Duration::from_secs(5),
        retry: fast_retry(3),
        auth_bearer: None,
        limiter: None,
    };
    let req = ChatRequest::new("system text", "user text", 1.0);
    let reply = chat.chat_complete(&req).unwrap();
    assert_eq!(reply, "a rewritten claim");

    let requests = server.finish();
    assert_eq!(requests.len(), 3, "two 429s then success, total attempts <= max_attempts");
    let body: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(body["system"], "system text");
    assert_eq!(body["user"], "user text");
    assert_eq!(body["temperature"], 1.0);
    assert!(body["max_output"].is_u64());
}

#[test]
fn rate_limit_surfaces_only_after_exhaustion() {
    let server = MockServer::start(vec![
        MockResponse::too_many_requests(Some(0)),
        MockResponse::too_many_requests(Some(0)),
    ]);
    let chat = RemoteChat {
        url: server.url.clone(),
        timeout: Duration::from_secs(5),
        retry: fast_retry(2),
        auth_bearer: None,
        limiter: None,
    };
    let err = chat.chat_complete(&ChatRequest::new("s", "u", 1.0)).unwrap_err();
    assert!(matches!(err, ProviderError::RateLimited { .. }), "{err}");
    assert_eq!(server.finish().len(), 2, "attempts capped at max_attempts");
}

#[test]
fn malformed_chat_response_is_reported() {
    let server = MockServer::start(vec![MockResponse::ok(r#"{"unexpected": true}"#)]);
    let chat = RemoteChat {
        url: server.url.clone(),
        timeout: Duration::from_secs(5),
        retry: fast_retry(1),
        auth_bearer: None,
        limiter: None,
    };
    let err = chat.chat_complete(&ChatRequest::new("s", "u", 1.0)).unwrap_err();
    assert!(matches!(err, ProviderError::MalformedResponse(_)), "{err}");
    server.finish();
}

#[test]
fn embedder_enforces_declared_dimension() {
    let server = MockServer::start(vec![
        MockResponse::ok(r#"{"embedding": [0.1, 0.2, 0.3]}"#),
        MockResponse::ok(r#"{"embedding": [0.1, 0.2]}"#),
    ]);
    let embedder = RemoteEmbedder {
        url: server.url.clone(),
        dimension: 3,
        timeout: Duration::from_secs(5),
        retry: fast_retry(1),
        auth_bearer: None,
        limiter: None,
    };
    assert_eq!(embedder.embed("text").unwrap(), vec![0.1, 0.2, 0.3]);
    let err = embedder.embed("text").unwrap_err();
    assert!(matches!(err, ProviderError::DimensionMismatch { declared: 3, actual: 2 }));
    server.finish();
}

#[test]
fn detector_adapter_translates_verdicts() {
    let server = MockServer::start(vec![
        MockResponse::ok(r#"{"verdict": "supported"}"#),
        MockResponse::ok(r#"{"verdict": "not_enough_info"}"#),
    ]);
    let config = DetectorAdapterConfig {
        endpoint: server.url.clone(),
        auth_env: None,
        verdict_field: "verdict".into(),
        verdict_map: Default::default(),
        timeout_ms: 5000,
        max_attempts: Some(1),
    };
    let detector = RemoteDetector::new(config, None);
    assert_eq!(detector.verdict("claim one").unwrap(), RawVerdict::True);
    assert_eq!(detector.verdict("claim two").unwrap(), RawVerdict::NotEnoughInfo);

    let requests = server.finish();
    let body: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(body["claim"], "claim one");
}

#[test]
fn token_bucket_blocks_beyond_burst() {
    use claimveil::providers::RateLimiter;
    use std::time::Instant;
    // Burst of 50, then ~20 ms per token: draining 52 tokens must take at
    // least two refill intervals.
    let limiter = RateLimiter::new(50.0);
    let start = Instant::now();
    for _ in 0..52 {
        limiter.acquire();
    }
    assert!(start.elapsed() >= Duration::from_millis(30), "{:?}", start.elapsed());
}

#[test]
fn transport_failure_does_not_consume_budget() {
    // No server behind this address: connection refused immediately.
    let dead = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        format!("http://{addr}/")
    };
    let config = DetectorAdapterConfig {
        endpoint: dead,
        auth_env: None,
        verdict_field: "verdict".into(),
        verdict_map: Default::default(),
        timeout_ms: 500,
        max_attempts: Some(1),
    };
    let gateway = Gateway::new(
        Arc::new(RemoteDetector::new(config, None)),
        Arc::new(claimveil::providers::CallLog::new()),
    );
    let mut budget = QueryBudget::new(10);
    let err = gateway.classify("text", &mut budget, BinaryLabel::False, "t");
    assert!(err.is_err());
    assert_eq!(budget.used, 0, "failed transport must not consume budget");
}
