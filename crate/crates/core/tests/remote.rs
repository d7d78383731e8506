//! `EntrezClient` against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use meshforge::retrieval::remote::{EntrezClient, EntrezConfig, RemoteError};

/// Serves `responses` in order, one per connection, and records request targets.
fn mock(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            log.lock().unwrap().push(line.split_whitespace().nth(1).unwrap_or("").to_string());
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                    break;
                }
            }
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: text/xml\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (format!("http://{addr}"), seen)
}

fn page(count: usize, ids: &[u32]) -> String {
    let ids: String = ids.iter().map(|i| format!("<Id>{i}</Id>")).collect();
    format!("<?xml version=\"1.0\"?><eSearchResult><Count>{count}</Count><IdList>{ids}</IdList></eSearchResult>")
}

fn config(url: String, cache: Option<std::path::PathBuf>) -> EntrezConfig {
    EntrezConfig {
        base_url: url,
        page_size: 2,
        backoff: Duration::from_millis(5),
        min_interval: Duration::from_millis(1),
        timeout: Duration::from_secs(5),
        cache_dir: cache,
        ..EntrezConfig::default()
    }
}

#[test]
fn pages_until_count_then_serves_from_cache() {
    let (url, seen) = mock(vec![(200, page(3, &[11, 12])), (200, page(3, &[13]))]);
    let dir = tempfile::tempdir().unwrap();
    let client = EntrezClient::new(config(url, Some(dir.path().to_path_buf()))).unwrap();
    let date = "2019-12-31".parse().ok();

    let ids = client.search("sepsis AND newborn", date).unwrap();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), ["11", "12", "13"]);
    let reqs = seen.lock().unwrap().clone();
    assert_eq!(reqs.len(), 2);
    assert!(reqs[0].contains("retstart=0") && reqs[1].contains("retstart=2"));
    assert!(reqs[0].contains("maxdate=2019%2F12%2F31"));

    // the server has no responses left, so this must come from disk
    let again = client.search("sepsis AND newborn", date).unwrap();
    assert_eq!(again.len(), 3);
    assert_eq!(seen.lock().unwrap().len(), 2);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn retries_server_errors() {
    let (url, seen) = mock(vec![(503, String::new()), (500, String::new()), (200, page(1, &[7]))]);
    let client = EntrezClient::new(config(url, None)).unwrap();
    let ids = client.search("x", None).unwrap();
    assert_eq!(ids.len(), 1);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, _) = mock(vec![(503, String::new()); 4]);
    let client = EntrezClient::new(config(url, None)).unwrap();
    assert!(matches!(client.search("x", None), Err(RemoteError::Status { status: 503, .. })));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = mock(vec![(400, String::new()), (200, page(0, &[]))]);
    let client = EntrezClient::new(config(url, None)).unwrap();
    assert!(matches!(client.search("x", None), Err(RemoteError::Status { status: 400, .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_xml_is_a_parse_error() {
    let (url, _) = mock(vec![(200, "<eSearchResult><Count>".to_string())]);
    let dir = tempfile::tempdir().unwrap();
    let client = EntrezClient::new(config(url, Some(dir.path().to_path_buf()))).unwrap();
    assert!(matches!(client.search("x", None), Err(RemoteError::Parse { .. })));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn service_error_element() {
    let (url, _) = mock(vec![(200, "<eSearchResult><ERROR>bad term</ERROR></eSearchResult>".to_string())]);
    let client = EntrezClient::new(config(url, None)).unwrap();
    match client.search("x", None) {
        Err(RemoteError::Service { message, .. }) => assert_eq!(message, "bad term"),
        other => panic!("{other:?}"),
    }
}
