//! Talking to an OpenAI-compatible chat endpoint.
//!
//! A throwaway local server stands in for the provider: it fails once with
//! 503, then answers. Point `HttpBackend::new` at a real endpoint and set the
//! key variable to use a hosted model. `cargo run --example http_backend`

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use nl2opt::{CallKey, ChatBackend, ChatRequest, HttpBackend};

fn serve(listener: TcpListener) {
    let replies = [
        (503, "{}".to_owned()),
        (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": "{\"Demand\": {}}"}}]}).to_string()),
    ];
    for (status, body) in replies {
        let Ok((mut stream, _)) = listener.accept() else { return };
        let mut reader = BufReader::new(&mut stream);
        let mut length = 0;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 || line.trim().is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
        let mut request = vec![0; length];
        let _ = reader.read_exact(&mut request);
        let _ = write!(stream, "HTTP/1.1 {status} X\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}", body.len());
    }
}

pub fn run() -> anyhow::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let url = format!("http://{}/v1/chat/completions", listener.local_addr()?);
    let server = thread::spawn(move || serve(listener));

    std::env::set_var("NL2OPT_EXAMPLE_KEY", "sk-example");
    let backend = HttpBackend::new(&url, "NL2OPT_EXAMPLE_KEY", Duration::from_secs(5))?.with_backoff(Duration::from_millis(10));
    let key = CallKey::new("demo", "param_extractor", 0);
    let reply = backend.complete(&key, &ChatRequest::new("You extract parameters.", "A factory meets demand..."))?;
    let _ = server.join();
    Ok(format!("reply: {reply}\nlogged calls: {}\n", backend.request_log().len()))
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
