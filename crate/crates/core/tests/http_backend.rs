//! HTTP chat and embedding clients against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use nl2opt::backend::BackendError;
use nl2opt::hrag::{Embedder, HttpEmbedder};
use nl2opt::{CallKey, ChatBackend, ChatRequest, HttpBackend};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<String>,
    body: Value,
}

fn read_request(stream: &mut TcpStream) -> Seen {
    let mut reader = BufReader::new(stream);
    let mut headers = Vec::new();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end().to_owned();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
        headers.push(line);
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    Seen {
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    }
}

/// Serves the scripted `(status, body)` responses in order, one per connection.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            log.lock().unwrap().push(read_request(&mut stream));
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn backend(url: &str) -> HttpBackend {
    HttpBackend::new(url, "NL2OPT_TEST_KEY", Duration::from_secs(5))
        .unwrap()
        .with_backoff(Duration::from_millis(5))
}

fn key() -> CallKey {
    CallKey::new("t", "param_extractor", 0)
}

#[test]
fn sends_chat_shape_and_reads_first_choice() {
    std::env::set_var("NL2OPT_TEST_KEY", "sk-local");
    let (url, seen) = serve(vec![(200, completion("{\"Cities\": {}}"))]);
    let b = backend(&url);
    let request = ChatRequest {
        temperature: 0.2,
        ..ChatRequest::new("you extract parameters", "problem text")
    };
    assert_eq!(b.complete(&key(), &request).unwrap(), "{\"Cities\": {}}");
    let seen = seen.lock().unwrap();
    let body = &seen[0].body;
    assert_eq!(body["model"], "qwen-plus-2025-09-11");
    assert_eq!(body["temperature"], 0.2);
    assert_eq!(body["messages"][0], json!({"role": "system", "content": "you extract parameters"}));
    assert_eq!(body["messages"][1]["role"], "user");
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-local")));
    assert_eq!(b.request_log(), vec![key()]);
}

#[test]
fn transient_failures_are_retried() {
    let (url, seen) = serve(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, completion("finally")),
    ]);
    assert_eq!(backend(&url).complete(&key(), &ChatRequest::new("s", "u")).unwrap(), "finally");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "{\"error\": \"bad\"}".into()), (200, completion("unused"))]);
    let err = backend(&url).complete(&key(), &ChatRequest::new("s", "u")).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable { attempts: 1, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_reply_is_an_error() {
    let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    let err = backend(&url).complete(&key(), &ChatRequest::new("s", "u")).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable { attempts: 1, .. }));
}

#[test]
fn refused_connection_gives_up_after_retries() {
    // bind then drop to get a port nothing listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = backend(&format!("http://127.0.0.1:{port}/v1/chat/completions"));
    let err = b.complete(&key(), &ChatRequest::new("s", "u")).unwrap_err();
    // first try plus the default two retries
    assert!(matches!(err, BackendError::Unavailable { attempts: 3, .. }), "{err:?}");
}

#[test]
fn embedder_orders_by_index() {
    let body = json!({"data": [
        {"index": 1, "embedding": [0.0, 2.0]},
        {"index": 0, "embedding": [3.0, 4.0]},
    ]})
    .to_string();
    let (url, seen) = serve(vec![(200, body)]);
    let e = HttpEmbedder::new(url, "text-embedding-v4", "NL2OPT_TEST_KEY", Duration::from_secs(5)).unwrap();
    let out = e.embed(&["a".into(), "b".into()]).unwrap();
    assert_eq!(out, vec![vec![0.6, 0.8], vec![0.0, 1.0]]);
    assert_eq!(seen.lock().unwrap()[0].body["input"], json!(["a", "b"]));
}
