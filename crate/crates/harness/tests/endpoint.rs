use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use pointcount::dataset::{generate, manifest_path, GenerateOptions, SplitName};
use pointcount::run::{evaluate, RunConfig, RunRecord, RECORDS_FILE};
use pointcount::source::{EndpointConfig, ModelSpec, RetryPolicy};
use pointcount_core::parse::NO_ANSWER;
use pointcount_core::Approach;
use serde_json::Value;

struct Seen {
    auth: Option<String>,
    body: Value,
}

fn read_request(stream: &mut TcpStream) -> Option<Seen> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.to_ascii_lowercase().as_str() {
                "content-length" => len = v.trim().parse().ok()?,
                "authorization" => auth = Some(v.trim().to_owned()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Seen { auth, body: serde_json::from_slice(&body).ok()? })
}

/// Fails every third request with 503, answers the rest.
fn mock_server() -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (n, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { continue };
            let Some(req) = read_request(&mut stream) else { continue };
            log.lock().unwrap().push(req);
            let resp = if n % 3 == 0 {
                "HTTP/1.1 503 Service Unavailable\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_owned()
            } else {
                let body = serde_json::json!({
                    "choices": [{"message": {"role": "assistant", "content": "Coordinates: (0, 0). Answer: 1"}}]
                })
                .to_string();
                format!("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len())
            };
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (url, seen)
}

fn manifest(dir: &Path) -> std::path::PathBuf {
    let mut opts = GenerateOptions::new(dir, 4);
    opts.splits = vec![SplitName::Id];
    opts.images = false;
    generate(&opts).unwrap();
    manifest_path(dir, SplitName::Id)
}

fn fast_retry(attempts: u32) -> RetryPolicy {
    RetryPolicy { max_attempts: attempts, base_delay_ms: 1, max_delay_ms: 5 }
}

#[test]
fn chat_completions_round_trip() {
    std::env::set_var("POINTCOUNT_TEST_TOKEN", "sekret-token");
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path());
    let (url, seen) = mock_server();
    let mut ep = EndpointConfig::new(url, "test-model");
    ep.token_env = Some("POINTCOUNT_TEST_TOKEN".into());
    ep.retry = fast_retry(5);
    let mut cfg = RunConfig::new(&m, ModelSpec::Endpoint(ep), Approach::Ptc, dir.path().join("run"));
    cfg.limit = Some(6);
    cfg.concurrency = 2;
    let out = evaluate(&cfg).unwrap();
    assert_eq!((out.report.samples, out.errors), (6, 0));

    let seen = seen.lock().unwrap();
    // Six answered requests plus the 503s that were retried.
    assert_eq!(seen.len(), 9);
    for s in seen.iter() {
        assert_eq!(s.auth.as_deref(), Some("Bearer sekret-token"));
        assert_eq!(s.body["model"], "test-model");
        assert_eq!(s.body["temperature"], 0);
        assert_eq!(s.body["max_tokens"], 3_000);
        let content = &s.body["messages"][0]["content"];
        assert!(content[0]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,iVBOR"));
        assert!(content[1]["text"].as_str().unwrap().contains("Coordinates:"));
    }
    let log = std::fs::read_to_string(cfg.out.join(RECORDS_FILE)).unwrap();
    assert!(!log.contains("sekret"));
    assert!(!std::fs::read_to_string(cfg.out.join("run.json")).unwrap().contains("sekret"));
    let first: RunRecord = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first.parsed.answer, 1);
    assert_eq!(first.request_digest.len(), 64);
}

#[test]
fn unreachable_endpoint_records_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path());
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut ep = EndpointConfig::new(format!("http://127.0.0.1:{port}/v1/chat/completions"), "m");
    ep.token_env = None;
    ep.retry = fast_retry(2);
    let mut cfg = RunConfig::new(&m, ModelSpec::Endpoint(ep), Approach::Dc, dir.path().join("run"));
    cfg.limit = Some(3);
    let out = evaluate(&cfg).unwrap();
    assert_eq!(out.errors, 3);
    assert_eq!(out.report.accuracy, 0.0);
    let log = std::fs::read_to_string(cfg.out.join(RECORDS_FILE)).unwrap();
    for line in log.lines() {
        let r: RunRecord = serde_json::from_str(line).unwrap();
        assert_eq!(r.parsed.answer, NO_ANSWER);
        assert!(r.error.unwrap().contains("unreachable after 2 attempts"));
    }
}
