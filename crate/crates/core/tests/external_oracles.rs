#![cfg(feature = "external-oracles")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::sync::mpsc;
use std::thread;

use evoattack::oracle::{transcribe, OracleError};
use evoattack::{AudioClip, TranscriberBinding};

fn clip() -> AudioClip {
    AudioClip::new((0..1600).map(|i| if i % 2 == 0 { 0.25 } else { -0.25 }).collect(), 16_000).unwrap()
}

fn script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn subprocess_reads_stdout_for_the_substituted_file() {
    let dir = tempfile::tempdir().unwrap();
    // Prints the RIFF magic of the file it was handed, then a transcript.
    let cmd = script(dir.path(), "asr.sh", r#"head -c 4 "$2"; echo; echo "  Turn LEFT, now! ""#);
    let binding = TranscriberBinding::Subprocess { command: format!("{cmd} --wav {{input}}") };
    assert_eq!(transcribe(&clip(), &binding).unwrap().text(), "riff turn left now");
}

#[test]
fn subprocess_failure_carries_status_and_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "broken.sh", "echo 'model not loaded' >&2; exit 3");
    let binding = TranscriberBinding::Subprocess { command: format!("{cmd} {{input}}") };
    match transcribe(&clip(), &binding) {
        Err(OracleError::Exit { status, stderr }) => {
            assert!(status.contains('3'), "{status}");
            assert_eq!(stderr, "model not loaded");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn subprocess_missing_program_is_a_spawn_error() {
    let binding = TranscriberBinding::Subprocess { command: "/no/such/asr {input}".into() };
    assert!(matches!(transcribe(&clip(), &binding), Err(OracleError::Spawn(_))));
}

/// Serves one request with `status` and `body`, reporting what it received.
fn serve_once(status: &'static str, body: &'static str) -> (String, mpsc::Receiver<(String, Vec<u8>)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/transcribe", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut head = String::new();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            head.push_str(&line);
        }
        let mut payload = vec![0; length];
        reader.read_exact(&mut payload).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        tx.send((head, payload)).unwrap();
    });
    (url, rx)
}

#[test]
fn http_posts_wav_and_reads_text() {
    let (url, rx) = serve_once("200 OK", r#"{"text": "Hello, World"}"#);
    let binding = TranscriberBinding::Http { url, timeout_secs: 5.0 };
    assert_eq!(transcribe(&clip(), &binding).unwrap().text(), "hello world");
    let (head, payload) = rx.recv().unwrap();
    assert!(head.starts_with("POST /transcribe"), "{head}");
    assert!(head.to_ascii_lowercase().contains("content-type: audio/wav"), "{head}");
    assert_eq!(&payload[..4], b"RIFF");
    assert_eq!(AudioClip::from_wav_bytes(&payload).unwrap().len(), 1600);
}

#[test]
fn http_error_status_is_reported() {
    let (url, _rx) = serve_once("503 Service Unavailable", "{}");
    let binding = TranscriberBinding::Http { url, timeout_secs: 5.0 };
    assert!(matches!(transcribe(&clip(), &binding), Err(OracleError::Status(503))));
}

#[test]
fn http_response_without_text_is_malformed() {
    let (url, _rx) = serve_once("200 OK", r#"{"words": []}"#);
    let binding = TranscriberBinding::Http { url, timeout_secs: 5.0 };
    assert!(matches!(transcribe(&clip(), &binding), Err(OracleError::Malformed(_))));
}

#[test]
fn http_silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let hold = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        thread::sleep(std::time::Duration::from_secs(2));
        drop(stream);
    });
    let binding = TranscriberBinding::Http { url, timeout_secs: 0.3 };
    assert!(matches!(transcribe(&clip(), &binding), Err(OracleError::Timeout)));
    hold.join().unwrap();
}

#[test]
fn http_connection_refused_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let binding = TranscriberBinding::Http { url: format!("http://127.0.0.1:{port}/"), timeout_secs: 2.0 };
    assert!(matches!(transcribe(&clip(), &binding), Err(OracleError::Transport(_))));
}
