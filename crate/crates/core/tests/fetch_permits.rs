//! Contract tests for the permit fetch client against a local mock
//! server: pagination, retry-on-failure, token forwarding, and
//! equivalence with parsing a downloaded copy.

use longwatch_core::geo::GeoBounds;
use longwatch_core::ingest::fetch::{fetch_permits, FetchConfig, FetchError};
use longwatch_core::ingest::{parse_permits, PermitColumnMap};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

const HEADER: &str =
    "Job Number,Latitude Point,Longitude Point,First Permit Date,Expiration Date,Borough Name,Permit Renewed";

fn permit_row(i: usize) -> String {
    format!(
        "P{i:03},40.7{:02},-74.0{:02},2023-01-01,2025-01-01,Manhattan,false",
        10 + i % 80,
        i % 90
    )
}

/// What the mock saw in one request.
#[derive(Debug, Clone)]
struct SeenRequest {
    query: HashMap<String, String>,
    token: Option<String>,
}

enum Reply {
    Csv(String),
    Status(u16),
}

/// Minimal single-threaded HTTP/1.1 server answering a fixed script of
/// replies, recording each request.
fn mock_server(
    replies: Vec<Reply>,
) -> (String, mpsc::Receiver<SeenRequest>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    let handle = thread::spawn(move || {
        for reply in replies {
            let (stream, _) = match listener.accept() {
                Ok(conn) => conn,
                Err(_) => return,
            };
            if let Some(seen) = handle_request(&stream) {
                let _ = tx.send(seen);
            }
            respond(stream, &reply);
        }
    });
    (format!("http://{addr}/permits"), rx, handle)
}

fn handle_request(stream: &TcpStream) -> Option<SeenRequest> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let mut token = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("x-app-token") {
                token = Some(value.trim().to_string());
            }
        }
    }
    let query = path
        .split_once('?')
        .map(|(_, q)| q)
        .unwrap_or("")
        .split('&')
        .filter_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            Some((url_decode(k), url_decode(v)))
        })
        .collect();
    Some(SeenRequest { query, token })
}

fn url_decode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let decoded = (bytes[i] == b'%')
            .then(|| {
                let h = (*bytes.get(i + 1)? as char).to_digit(16)?;
                let l = (*bytes.get(i + 2)? as char).to_digit(16)?;
                Some(((h * 16 + l) as u8) as char)
            })
            .flatten();
        match decoded {
            Some(c) => {
                out.push(c);
                i += 3;
            }
            None => {
                out.push(bytes[i] as char);
                i += 1;
            }
        }
    }
    out
}

fn respond(mut stream: TcpStream, reply: &Reply) {
    let response = match reply {
        Reply::Csv(body) => format!(
            "HTTP/1.1 200 OK\r\ncontent-type: text/csv\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
            body.len(),
            body
        ),
        Reply::Status(code) => format!(
            "HTTP/1.1 {code} Error\r\ncontent-length: 0\r\nconnection: close\r\n\r\n"
        ),
    };
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
    // drain whatever the client still has buffered before closing
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let mut sink = [0u8; 256];
    let _ = stream.read(&mut sink);
}

fn page(rows: &[String]) -> String {
    format!("{HEADER}\n{}\n", rows.join("\n"))
}

fn quick_config(endpoint: String) -> FetchConfig {
    let mut cfg = FetchConfig::new(endpoint);
    cfg.backoff_base = Duration::from_millis(1);
    cfg
}

#[test]
fn paginates_until_short_page() {
    let rows: Vec<String> = (0..4).map(permit_row).collect();
    let (endpoint, rx, handle) = mock_server(vec![
        Reply::Csv(page(&rows[..3])),
        Reply::Csv(page(&rows[3..])),
    ]);
    let mut cfg = quick_config(endpoint);
    cfg.page_size = 3;
    let parsed = fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()).unwrap();
    handle.join().unwrap();

    assert_eq!(parsed.permits.len(), 4);
    let requests: Vec<SeenRequest> = rx.try_iter().collect();
    assert_eq!(requests.len(), 2, "one full page plus one short page");
    assert_eq!(
        requests[0].query.get("$limit").map(String::as_str),
        Some("3")
    );
    assert_eq!(
        requests[0].query.get("$offset").map(String::as_str),
        Some("0")
    );
    assert_eq!(
        requests[1].query.get("$offset").map(String::as_str),
        Some("3")
    );
}

#[test]
fn fetch_equals_parse_of_concatenated_fixture() {
    let rows: Vec<String> = (0..5).map(permit_row).collect();
    let (endpoint, _rx, handle) = mock_server(vec![
        Reply::Csv(page(&rows[..3])),
        Reply::Csv(page(&rows[3..])),
    ]);
    let mut cfg = quick_config(endpoint);
    cfg.page_size = 3;
    let fetched = fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()).unwrap();
    handle.join().unwrap();

    let combined = page(&rows);
    let local = parse_permits(
        combined.as_bytes(),
        &PermitColumnMap::default(),
        &GeoBounds::nyc(),
    )
    .unwrap();
    assert_eq!(fetched.permits, local.permits);
    assert_eq!(fetched.rejects.rejected, local.rejects.rejected);
}

#[test]
fn repeated_500_errors_after_three_attempts() {
    let (endpoint, rx, handle) = mock_server(vec![
        Reply::Status(500),
        Reply::Status(500),
        Reply::Status(500),
    ]);
    let cfg = quick_config(endpoint);
    let err = fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()).unwrap_err();
    handle.join().unwrap();

    match err {
        FetchError::Http {
            status, attempts, ..
        } => {
            assert_eq!(status, 500);
            assert_eq!(attempts, 3);
        }
        other => panic!("expected Http error, got {other:?}"),
    }
    assert_eq!(rx.try_iter().count(), 3, "three attempts, then give up");
}

#[test]
fn recovers_after_transient_failure() {
    let rows: Vec<String> = (0..2).map(permit_row).collect();
    let (endpoint, rx, handle) = mock_server(vec![Reply::Status(503), Reply::Csv(page(&rows))]);
    let mut cfg = quick_config(endpoint);
    cfg.page_size = 10;
    let parsed = fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()).unwrap();
    handle.join().unwrap();
    assert_eq!(parsed.permits.len(), 2);
    assert_eq!(rx.try_iter().count(), 2);
}

#[test]
fn empty_dataset_needs_one_request() {
    let (endpoint, rx, handle) = mock_server(vec![Reply::Csv(format!("{HEADER}\n"))]);
    let mut cfg = quick_config(endpoint);
    cfg.page_size = 100;
    let parsed = fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()).unwrap();
    handle.join().unwrap();
    assert!(parsed.permits.is_empty());
    assert_eq!(rx.try_iter().count(), 1);
}

#[test]
fn app_token_is_forwarded_as_header() {
    let rows = vec![permit_row(0)];
    let (endpoint, rx, handle) = mock_server(vec![Reply::Csv(page(&rows))]);
    let mut cfg = quick_config(endpoint);
    cfg.app_token = Some("sekret-token".to_string());
    fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()).unwrap();
    handle.join().unwrap();
    let seen: Vec<SeenRequest> = rx.try_iter().collect();
    assert_eq!(seen[0].token.as_deref(), Some("sekret-token"));
}

#[test]
fn page_cap_stops_a_server_that_never_shortens() {
    // every reply is a full page; the client must give up at the cap
    let rows: Vec<String> = (0..2).map(permit_row).collect();
    let full = page(&rows);
    let (endpoint, _rx, handle) = mock_server(vec![
        Reply::Csv(full.clone()),
        Reply::Csv(full.clone()),
        Reply::Csv(full),
    ]);
    let mut cfg = quick_config(endpoint);
    cfg.page_size = 2;
    cfg.max_pages = 3;
    let err = fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()).unwrap_err();
    handle.join().unwrap();
    assert!(matches!(err, FetchError::TooManyPages { pages: 3 }));
}

#[test]
fn page_size_bounds_are_enforced() {
    let cfg = FetchConfig {
        page_size: 0,
        ..FetchConfig::new("http://127.0.0.1:1/x")
    };
    assert!(matches!(
        fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()),
        Err(FetchError::InvalidPageSize(0))
    ));
    let cfg = FetchConfig {
        page_size: 50_001,
        ..FetchConfig::new("http://127.0.0.1:1/x")
    };
    assert!(matches!(
        fetch_permits(&cfg, &PermitColumnMap::default(), &GeoBounds::nyc()),
        Err(FetchError::InvalidPageSize(50_001))
    ));
}
