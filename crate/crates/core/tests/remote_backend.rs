//! The HTTP backend against a local canned-response server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use evotree::gateway::{
    complete_checked, ChatBackend, ChatRequest, Embedder, FinishReason, GatewayError, Message, RemoteChat,
    RemoteConfig, RemoteEmbedder,
};

struct Captured {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serve `replies` (status, body) in order, one connection each.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            let _ = tx.send(Captured {
                path,
                authorization,
                body: serde_json::from_slice(&raw).unwrap_or(serde_json::Value::Null),
            });
            let reason = if status == 200 { "OK" } else { "Err" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn config(base_url: String) -> RemoteConfig {
    RemoteConfig {
        base_url,
        backoff_ms: 0,
        timeout_secs: 10,
        ..RemoteConfig::default()
    }
}

fn chat_body(content: &str, finish: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": finish}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3}
    })
    .to_string()
}

fn request() -> ChatRequest {
    ChatRequest::new(vec![Message::system("s"), Message::user("u")], "gpt-4o")
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, rx) = serve(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, chat_body("ANSWER: ok", "stop")),
    ]);
    let chat = RemoteChat::new(config(url), "sk-test");
    let resp = chat.complete(&request()).unwrap();
    assert_eq!(resp.content, "ANSWER: ok");
    assert_eq!(resp.finish_reason, FinishReason::Completed);
    assert_eq!(resp.usage.prompt_tokens, 12);
    assert_eq!(chat.network_attempts(), 3);
    let first = rx.recv().unwrap();
    assert_eq!(first.path, "/v1/chat/completions");
    assert_eq!(first.authorization.as_deref(), Some("Bearer sk-test"));
    assert_eq!(first.body["model"], "gpt-4o");
    assert_eq!(first.body["messages"][1]["content"], "u");
}

#[test]
fn gives_up_after_retry_cap() {
    let (url, _rx) = serve(vec![(500, "{}".into()); 4]);
    let chat = RemoteChat::new(config(url), "k");
    let err = chat.complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Status { status: 500, .. }), "{err}");
    assert_eq!(chat.network_attempts(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, _rx) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let chat = RemoteChat::new(config(url), "k");
    let err = chat.complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Status { status: 401, .. }));
    assert_eq!(chat.network_attempts(), 1);
}

#[test]
fn length_finish_is_truncation() {
    let (url, _rx) = serve(vec![
        (200, chat_body("ANSWER: half", "length")),
        (200, chat_body("ANSWER: full", "stop")),
    ]);
    let chat = RemoteChat::new(config(url), "k");
    let resp = complete_checked(&chat, &request(), "ANSWER:", 2).unwrap();
    assert_eq!(resp.content, "ANSWER: full");
    assert_eq!(chat.network_attempts(), 2);
}

#[test]
fn embeddings_round_trip() {
    let body = serde_json::json!({"data": [{"embedding": [0.6, 0.8, 0.0]}]}).to_string();
    let (url, rx) = serve(vec![(200, body)]);
    let embedder = RemoteEmbedder::new(config(url), "k");
    let v = embedder.embed("reactor trip").unwrap();
    assert_eq!(v.values(), &[0.6, 0.8, 0.0]);
    let req = rx.recv().unwrap();
    assert_eq!(req.path, "/v1/embeddings");
    assert_eq!(req.body["model"], "text-embedding-ada-002");
    assert_eq!(req.body["input"], "reactor trip");
    assert!(matches!(embedder.embed("  "), Err(GatewayError::EmptyText)));
}

#[test]
fn malformed_json_is_decode_error() {
    let (url, _rx) = serve(vec![(200, "not json".into())]);
    let chat = RemoteChat::new(config(url), "k");
    assert!(matches!(chat.complete(&request()), Err(GatewayError::Decode(_))));
}

#[test]
fn connection_refused_is_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let chat = RemoteChat::new(
        RemoteConfig {
            retry_cap: 1,
            ..config(url)
        },
        "k",
    );
    assert!(matches!(chat.complete(&request()), Err(GatewayError::Transport(_))));
    assert_eq!(chat.network_attempts(), 2);
}
