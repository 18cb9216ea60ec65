//! HttpBackend against a one-shot local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use autograms::config::{BackendKind, BackendSettings, ReplyStartType};
use autograms::llm::{ChatPrompt, ClassifierPrompt, HttpBackend, LlmBackend, LlmError};
use serde_json::Value;

/// Serves one request with the given status and body after `delay`, and
/// hands back what the client sent (headers, body).
fn serve_once(status: u16, body: &'static str, delay: Duration) -> (String, thread::JoinHandle<(String, Value)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut headers = String::new();
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            headers.push_str(&line);
        }
        let mut buf = vec![0; len];
        reader.read_exact(&mut buf).unwrap();
        thread::sleep(delay);
        let mut stream = stream;
        let reply = format!(
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        let _ = stream.write_all(reply.as_bytes());
        (headers, serde_json::from_slice(&buf).unwrap_or(Value::Null))
    });
    (url, handle)
}

fn backend(url: String, timeout_secs: u64, key_env: Option<&str>) -> HttpBackend {
    HttpBackend::from_settings(&BackendSettings {
        kind: BackendKind::Http,
        endpoint: Some(url),
        model: Some("test-model".into()),
        api_key_env: key_env.map(str::to_string),
        timeout_secs,
        ..Default::default()
    })
    .unwrap()
}

fn prompt() -> ChatPrompt {
    ChatPrompt {
        inputs: vec!["first".into(), "second".into()],
        outputs: vec!["reply".into()],
        reply_start: String::new(),
        start_type: ReplyStartType::Suffix,
        initial_prompt: String::new(),
    }
}

const OK: &str = r#"{"choices": [{"message": {"role": "assistant", "content": "hello there"}}]}"#;

#[test]
fn chat_request_shape_and_credential() {
    std::env::set_var("AUTOGRAM_TEST_KEY", "secret-token");
    let (url, server) = serve_once(200, OK, Duration::ZERO);
    let mut b = backend(url, 5, Some("AUTOGRAM_TEST_KEY"));
    assert_eq!(b.generate(&prompt()).unwrap(), "hello there");
    let (headers, body) = server.join().unwrap();
    assert!(headers.to_ascii_lowercase().contains("authorization: bearer secret-token"));
    let roles: Vec<&str> = body["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["user", "assistant", "user"]);
    assert_eq!(body["model"], "test-model");
}

#[test]
fn classifier_request_has_bias_per_choice() {
    let (url, server) = serve_once(200, r#"{"choices": [{"message": {"content": "C"}}]}"#, Duration::ZERO);
    let mut b = backend(url, 5, None);
    let cp = ClassifierPrompt { history_text: "User: hi".into(), mc_text: "q A. x B. y C. z".into(), num_choices: 3 };
    assert_eq!(b.classify_raw(&cp).unwrap(), "C");
    let (_, body) = server.join().unwrap();
    assert_eq!(body["max_tokens"], 1);
    assert_eq!(body["logit_bias"].as_object().unwrap().len(), 3);
}

#[test]
fn error_status_is_reported() {
    let (url, server) = serve_once(500, "{}", Duration::ZERO);
    assert!(matches!(backend(url, 5, None).generate(&prompt()), Err(LlmError::HttpError(500))));
    server.join().unwrap();
}

#[test]
fn malformed_body() {
    let (url, server) = serve_once(200, r#"{"unexpected": true}"#, Duration::ZERO);
    assert!(matches!(backend(url, 5, None).generate(&prompt()), Err(LlmError::MalformedResponse(_))));
    server.join().unwrap();
}

#[test]
fn slow_server_times_out() {
    let (url, server) = serve_once(200, OK, Duration::from_millis(2500));
    assert!(matches!(backend(url, 1, None).generate(&prompt()), Err(LlmError::Timeout)));
    server.join().unwrap();
}

#[test]
fn missing_credential() {
    let s = BackendSettings {
        kind: BackendKind::Http,
        endpoint: Some("http://127.0.0.1:9".into()),
        api_key_env: Some("AUTOGRAM_TEST_UNSET_KEY".into()),
        ..Default::default()
    };
    assert!(matches!(HttpBackend::from_settings(&s), Err(LlmError::MissingCredential(_))));
}
