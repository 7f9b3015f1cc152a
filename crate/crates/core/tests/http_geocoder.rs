use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use excellence_map::address::CityKey;
use excellence_map::geocode::{resolve_all, GeoCache, HttpGeocoder, ResolverOptions};

/// Minimal geocoding service: answers `q=` lookups from a fixed table and
/// records every query it sees.
struct MockService {
    endpoint: String,
    queries: Arc<Mutex<Vec<String>>>,
}

fn decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => out.push(b' '),
            b'%' if i + 2 < bytes.len() => {
                out.push(u8::from_str_radix(&s[i + 1..i + 3], 16).unwrap());
                i += 2;
            }
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8(out).unwrap()
}

impl MockService {
    fn start(answers: &'static [(&'static str, &'static str)]) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = format!("http://{}/search", listener.local_addr().unwrap());
        let queries = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&queries);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                loop {
                    let mut header = String::new();
                    if reader.read_line(&mut header).unwrap() == 0 || header == "\r\n" {
                        break;
                    }
                }
                let target = request_line.split_whitespace().nth(1).unwrap_or("");
                let query = target
                    .split_once('?')
                    .map(|(_, q)| q)
                    .unwrap_or("")
                    .split('&')
                    .find_map(|kv| kv.strip_prefix("q="))
                    .map(decode)
                    .unwrap_or_default();
                seen.lock().unwrap().push(query.clone());
                let (status, body) = if query == "BROKEN, NOWHERE" {
                    ("500 Internal Server Error", "oops".to_string())
                } else {
                    let body = answers
                        .iter()
                        .find(|(q, _)| *q == query)
                        .map(|(_, json)| json.to_string())
                        .unwrap_or_else(|| "[]".into());
                    ("200 OK", body)
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        Self { endpoint, queries }
    }

    fn queries(&self) -> Vec<String> {
        self.queries.lock().unwrap().clone()
    }
}

const ANSWERS: &[(&str, &str)] = &[
    (
        "BERLIN, GERMANY",
        r#"[{"lat": "52.52", "lon": "13.405", "display_name": "Berlin"}]"#,
    ),
    ("ATHENS, GA, USA", r#"[{"lat": 33.9519, "lon": -83.3576}]"#),
];

fn fast() -> ResolverOptions {
    ResolverOptions {
        batch_interval: Duration::ZERO,
        retries: 1,
        ..Default::default()
    }
}

#[test]
fn resolves_found_and_missing_cities() {
    let service = MockService::start(ANSWERS);
    let mut backend = HttpGeocoder::new(&service.endpoint).with_api_key(None);
    let mut cache = GeoCache::in_memory();
    let berlin = CityKey::new("BERLIN", None, "GERMANY");
    let athens = CityKey::new("ATHENS", Some("GA"), "USA");
    let atlantis = CityKey::new("ATLANTIS", None, "OCEAN");
    let keys: BTreeSet<CityKey> = [berlin.clone(), athens.clone(), atlantis.clone()].into();

    let first = resolve_all(&keys, &mut backend, &mut cache, &fast()).unwrap();
    assert_eq!(first.points.len(), 3);
    let b = &first.points[&berlin];
    assert_eq!((b.lat, b.lon, b.failed), (52.52, 13.405, false));
    assert_eq!(first.points[&athens].lat, 33.9519);
    assert!(first.points[&atlantis].failed);
    assert_eq!(first.failures, vec![atlantis]);

    let calls = service.queries().len();
    assert_eq!(calls, 3);
    let second = resolve_all(&keys, &mut backend, &mut cache, &fast()).unwrap();
    assert_eq!(
        service.queries().len(),
        calls,
        "warm cache must not hit the service"
    );
    assert_eq!(second.points, first.points);
    assert_eq!(second.cache_hits, 3);
}

#[test]
fn server_errors_become_uncached_failures() {
    let service = MockService::start(ANSWERS);
    let mut backend = HttpGeocoder::new(&service.endpoint).with_api_key(None);
    let mut cache = GeoCache::in_memory();
    let broken = CityKey::new("BROKEN", None, "NOWHERE");
    let keys: BTreeSet<CityKey> = [broken.clone()].into();

    let result = resolve_all(&keys, &mut backend, &mut cache, &fast()).unwrap();
    assert!(result.points[&broken].failed);
    assert_eq!(result.batches, 2, "one retry");
    assert!(result.warnings.iter().any(|w| w.contains("unresolved")));
    assert!(cache.get(&broken).is_none());
}

#[test]
fn api_key_is_sent_as_query_parameter() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/search", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut line = String::new();
        BufReader::new(stream.try_clone().unwrap())
            .read_line(&mut line)
            .unwrap();
        let body = "[]";
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        line
    });
    let mut backend = HttpGeocoder::new(endpoint).with_api_key(Some("s3cret".into()));
    let keys: BTreeSet<CityKey> = [CityKey::new("PARIS", None, "FRANCE")].into();
    resolve_all(&keys, &mut backend, &mut GeoCache::in_memory(), &fast()).unwrap();
    let line = handle.join().unwrap();
    assert!(line.contains("key=s3cret"), "{line}");
    assert!(line.contains("format=json"), "{line}");
}
