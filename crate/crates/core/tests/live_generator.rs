use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use algograph::generator::{
    Generator, GeneratorErrorKind, LiveConfig, LiveGenerator, ProblemContext, QueryCost,
};

/// Serves the given (status, body) replies in order, one per connection,
/// and records every request body.
fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let request = read_request(&stream);
            log.lock().unwrap().push(request);
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn read_request(stream: &TcpStream) -> String {
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if line == "\r\n" || line.is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    String::from_utf8(body).unwrap()
}

fn completion(content: &str, prompt_tokens: u64, completion_tokens: u64) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    })
    .to_string()
}

fn generator(url: String, max_retries: u32) -> LiveGenerator {
    let config = LiveConfig {
        base_url: url,
        model: "test-model".into(),
        api_key_env: "UNUSED".into(),
        temperature: 1.0,
        max_retries,
        backoff_ms: 1,
        timeout_seconds: 10,
        min_cost: 1,
    };
    LiveGenerator::with_key(config, "secret".into()).unwrap()
}

fn ctx() -> ProblemContext {
    ProblemContext {
        description: "Find a short tour.".into(),
        ..Default::default()
    }
}

#[test]
fn cost_comes_from_the_usage_field() {
    let reply = completion("{\"thoughts\": \"t\", \"code\": \"def solve():\\n    return 1\"}", 321, 45);
    let (url, seen) = mock_server(vec![(200, reply)]);
    let mut g = generator(url, 0);
    let r = g.generate_initial(&ctx()).unwrap();
    assert_eq!(r.payload, "def solve():\n    return 1\n");
    assert_eq!(r.cost, QueryCost::new(321, 45, 1));
    let request: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
    assert_eq!(request["model"], "test-model");
    assert_eq!(request["temperature"], 1.0);
    assert!(request["messages"][0]["content"].as_str().unwrap().contains("Find a short tour."));
}

#[test]
fn transient_failures_are_retried_and_charged() {
    let (url, seen) = mock_server(vec![
        (503, "{}".into()),
        (500, "{}".into()),
        (200, completion("[]", 100, 10)),
    ]);
    let mut g = generator(url, 3);
    let r = g.generate_corrections(&ctx(), "x = 1\n", Some("### Highly Encouraged\n* None")).unwrap();
    assert_eq!(r.payload, "[]");
    let sent = seen.lock().unwrap();
    assert_eq!(sent.len(), 3);
    let prompt: serde_json::Value = serde_json::from_str(&sent[0]).unwrap();
    let prompt = prompt["messages"][0]["content"].as_str().unwrap().to_owned();
    let failed = algograph::generator::estimate_tokens(&prompt);
    assert_eq!(r.cost.total, 2 * failed + 110);
}

#[test]
fn exhausted_retries_report_the_spent_cost() {
    let (url, _) = mock_server(vec![(503, "{}".into()), (503, "{}".into())]);
    let mut g = generator(url, 1);
    let err = g.generate_initial(&ctx()).unwrap_err();
    assert_eq!(err.kind, GeneratorErrorKind::Transport);
    assert!(err.cost.total > 0);
}

#[test]
fn overlong_summaries_are_truncated() {
    let long = vec!["word"; 700].join(" ");
    let reply = completion(&serde_json::json!({"summary": long}).to_string(), 10, 700);
    let (url, _) = mock_server(vec![(200, reply)]);
    let mut g = generator(url, 0);
    let r = g.update_summary(&ctx(), "", &[]).unwrap();
    assert_eq!(r.payload.split_whitespace().count(), 500);
}
