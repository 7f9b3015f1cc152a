//! City coordinates from a pluggable backend, behind a persistent cache.
//!
//! Unresolvable cities get the `(0, 0)` failure sentinel. They stay in the
//! statistics but are left off the maps.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::warn;

use crate::address::CityKey;

/// Environment variable holding the HTTP geocoder API key.
pub const API_KEY_ENV: &str = "EXCELLENCE_MAP_GEOCODER_KEY";

/// Largest batch a backend is asked to resolve at once.
pub const DEFAULT_BATCH_SIZE: usize = 1000;

pub const DEFAULT_BATCH_INTERVAL: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    /// Backend that produced the point.
    pub source: String,
    pub failed: bool,
}

impl GeoPoint {
    /// Rejects out-of-range coordinates and the `(0, 0)` sentinel.
    pub fn resolved(lat: f64, lon: f64, source: impl Into<String>) -> Result<Self, GeocodeError> {
        let in_range = (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon);
        if !in_range || (lat == 0.0 && lon == 0.0) {
            return Err(GeocodeError::BadCoordinates { lat, lon });
        }
        Ok(Self {
            lat,
            lon,
            source: source.into(),
            failed: false,
        })
    }

    pub fn failed(source: impl Into<String>) -> Self {
        Self {
            lat: 0.0,
            lon: 0.0,
            source: source.into(),
            failed: true,
        }
    }

    /// Treats `(0, 0)` as failure, anything else as a resolved point.
    pub fn from_coordinates(
        lat: f64,
        lon: f64,
        source: impl Into<String>,
    ) -> Result<Self, GeocodeError> {
        if lat == 0.0 && lon == 0.0 {
            Ok(Self::failed(source))
        } else {
            Self::resolved(lat, lon, source)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeocodeError {
    #[error("coordinates out of range: {lat}, {lon}")]
    BadCoordinates { lat: f64, lon: f64 },
    #[error("{path}: line {line}: {message}")]
    BadFile {
        path: String,
        line: usize,
        message: String,
    },
    #[error("geocoding transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Resolves batches of city keys. `None` in the answer means the backend
/// answered but knows no such place.
pub trait GeocodeBackend {
    fn name(&self) -> &str;

    fn resolve_batch(&mut self, keys: &[CityKey]) -> Result<Vec<Option<(f64, f64)>>, GeocodeError>;
}

/// Offline lookup table.
///
/// File format: tab-separated `city, region, country, lat, lon, source`
/// with an optional seventh `override` column. When a key occurs more than
/// once, a row flagged `override` (or `1`/`yes`) wins; otherwise the last row
/// does. Blank lines and lines starting with `#` are ignored.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<CityKey, (f64, f64)>,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: CityKey, lat: f64, lon: f64) {
        self.entries.insert(key, (lat, lon));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CityKey) -> Option<(f64, f64)> {
        self.entries.get(key).copied()
    }

    pub fn load(path: &Path) -> Result<Self, GeocodeError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, GeocodeError> {
        let mut gazetteer = Self::new();
        let mut overridden = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let row = parse_point_row(line, 6).map_err(|message| GeocodeError::BadFile {
                path: origin.to_string(),
                line: idx + 1,
                message,
            })?;
            let is_override = row
                .extra
                .first()
                .map(|s| {
                    matches!(
                        s.trim().to_ascii_lowercase().as_str(),
                        "override" | "1" | "yes" | "true"
                    )
                })
                .unwrap_or(false);
            if overridden.contains(&row.key) && !is_override {
                continue;
            }
            if is_override {
                overridden.insert(row.key.clone());
            }
            gazetteer.entries.insert(row.key, (row.lat, row.lon));
        }
        Ok(gazetteer)
    }
}

impl GeocodeBackend for Gazetteer {
    fn name(&self) -> &str {
        "gazetteer"
    }

    fn resolve_batch(&mut self, keys: &[CityKey]) -> Result<Vec<Option<(f64, f64)>>, GeocodeError> {
        Ok(keys
            .iter()
            .map(|k| {
                self.get(k)
                    .filter(|&(lat, lon)| !(lat == 0.0 && lon == 0.0))
            })
            .collect())
    }
}

/// Always answers "not found". Used when no backend is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct Offline;

impl GeocodeBackend for Offline {
    fn name(&self) -> &str {
        "offline"
    }

    fn resolve_batch(&mut self, keys: &[CityKey]) -> Result<Vec<Option<(f64, f64)>>, GeocodeError> {
        Ok(vec![None; keys.len()])
    }
}

/// Client for a search-style geocoding service.
///
/// For each key it requests `GET {endpoint}?q=<city, region, country>&format=json&limit=1`
/// (plus `&key=<api key>` when [`API_KEY_ENV`] is set) and reads the first
/// element of the returned JSON array, whose `lat`/`lon` may be numbers or
/// numeric strings. An empty array means "not found".
pub struct HttpGeocoder {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpGeocoder {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .user_agent(concat!("excellence-map/", env!("CARGO_PKG_VERSION")))
                .build(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn lookup(&self, key: &CityKey) -> Result<Option<(f64, f64)>, GeocodeError> {
        let query = match &key.region {
            Some(region) => format!("{}, {}, {}", key.city, region, key.country),
            None => format!("{}, {}", key.city, key.country),
        };
        let mut request = self
            .agent
            .get(&self.endpoint)
            .query("q", &query)
            .query("format", "json")
            .query("limit", "1");
        if let Some(api_key) = &self.api_key {
            request = request.query("key", api_key);
        }
        let body: serde_json::Value = match request.call() {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| GeocodeError::Transport(e.to_string()))?,
            Err(ureq::Error::Status(404, _)) => return Ok(None),
            Err(e) => return Err(GeocodeError::Transport(e.to_string())),
        };
        let first = match &body {
            serde_json::Value::Array(items) => items.first(),
            obj @ serde_json::Value::Object(_) => Some(obj),
            _ => None,
        };
        let Some(first) = first else { return Ok(None) };
        let coord = |name: &str| -> Option<f64> {
            match first.get(name)? {
                serde_json::Value::Number(n) => n.as_f64(),
                serde_json::Value::String(s) => s.trim().parse().ok(),
                _ => None,
            }
        };
        match (coord("lat"), coord("lon")) {
            (Some(lat), Some(lon)) => Ok(Some((lat, lon))),
            _ => Err(GeocodeError::Transport(format!(
                "response for {query:?} lacks lat/lon"
            ))),
        }
    }
}

impl GeocodeBackend for HttpGeocoder {
    fn name(&self) -> &str {
        "http"
    }

    fn resolve_batch(&mut self, keys: &[CityKey]) -> Result<Vec<Option<(f64, f64)>>, GeocodeError> {
        keys.iter().map(|k| self.lookup(k)).collect()
    }
}

struct PointRow {
    key: CityKey,
    lat: f64,
    lon: f64,
    source: String,
    extra: Vec<String>,
}

fn parse_point_row(line: &str, min_cols: usize) -> Result<PointRow, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < min_cols {
        return Err(format!(
            "expected at least {min_cols} tab-separated columns, got {}",
            cols.len()
        ));
    }
    let city = cols[0].trim();
    let country = cols[2].trim();
    if city.is_empty() || country.is_empty() {
        return Err("empty city or country".into());
    }
    let region = Some(cols[1].trim()).filter(|r| !r.is_empty());
    let lat: f64 = cols[3]
        .trim()
        .parse()
        .map_err(|_| format!("bad latitude {:?}", cols[3]))?;
    let lon: f64 = cols[4]
        .trim()
        .parse()
        .map_err(|_| format!("bad longitude {:?}", cols[4]))?;
    if !((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)) {
        return Err(format!("coordinates out of range: {lat}, {lon}"));
    }
    Ok(PointRow {
        key: CityKey::new(city, region, country),
        lat,
        lon,
        source: cols[5].trim().to_string(),
        extra: cols[6..].iter().map(|s| s.to_string()).collect(),
    })
}

fn point_row(key: &CityKey, point: &GeoPoint) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        key.city,
        key.region.as_deref().unwrap_or(""),
        key.country,
        point.lat,
        point.lon,
        point.source
    )
}

/// Persistent resolution cache.
///
/// File format: tab-separated `city, region, country, lat, lon, source,
/// timestamp` (Unix seconds), UTF-8, append-only. Later rows win. Failed
/// lookups are stored with `0, 0` so they are not retried.
#[derive(Debug, Default)]
pub struct GeoCache {
    path: Option<PathBuf>,
    entries: BTreeMap<CityKey, GeoPoint>,
}

impl GeoCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a cache file. A corrupt file is discarded and
    /// rebuilt from scratch with a warning.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, GeocodeError> {
        let path = path.into();
        let mut cache = Self {
            path: Some(path.clone()),
            entries: BTreeMap::new(),
        };
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(e.into()),
        };
        match Self::read_entries(BufReader::new(file)) {
            Ok(entries) => cache.entries = entries,
            Err(message) => {
                warn!(
                    "geocode cache {} is corrupt ({message}); rebuilding",
                    path.display()
                );
                File::create(&path)?;
            }
        }
        Ok(cache)
    }

    fn read_entries<R: BufRead>(input: R) -> Result<BTreeMap<CityKey, GeoPoint>, String> {
        let mut entries = BTreeMap::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let row = parse_point_row(&line, 7).map_err(|m| format!("line {}: {m}", idx + 1))?;
            if row.extra[0].trim().parse::<u64>().is_err() {
                return Err(format!("line {}: bad timestamp", idx + 1));
            }
            let point = GeoPoint::from_coordinates(row.lat, row.lon, row.source)
                .map_err(|e| format!("line {}: {e}", idx + 1))?;
            entries.insert(row.key, point);
        }
        Ok(entries)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CityKey) -> Option<&GeoPoint> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<CityKey, GeoPoint> {
        &self.entries
    }

    /// Records new resolutions, appending them to the cache file if any.
    pub fn store(&mut self, points: &[(CityKey, GeoPoint)]) -> Result<(), GeocodeError> {
        if points.is_empty() {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let stamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut buf = String::new();
            for (key, point) in points {
                buf.push_str(&point_row(key, point));
                buf.push('\t');
                buf.push_str(&stamp.to_string());
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
        }
        for (key, point) in points {
            self.entries.insert(key.clone(), point.clone());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ResolverOptions {
    pub batch_size: usize,
    /// Minimum spacing between the starts of two backend batches.
    pub batch_interval: Duration,
    /// Extra attempts after a transport failure.
    pub retries: u32,
}

impl Default for ResolverOptions {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            batch_interval: DEFAULT_BATCH_INTERVAL,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Resolution {
    /// One point per requested key.
    pub points: BTreeMap<CityKey, GeoPoint>,
    /// Keys that ended with the failure sentinel.
    pub failures: Vec<CityKey>,
    pub batches: usize,
    pub cache_hits: usize,
    pub warnings: Vec<String>,
}

/// Resolves every key, consulting the cache first and chunking the rest into
/// serialized, rate-limited backend batches. Transport failures that persist
/// after the retries yield failure sentinels and are not cached.
pub fn resolve_all(
    keys: &BTreeSet<CityKey>,
    backend: &mut dyn GeocodeBackend,
    cache: &mut GeoCache,
    options: &ResolverOptions,
) -> Result<Resolution, GeocodeError> {
    let mut out = Resolution::default();
    let mut missing = Vec::new();
    for key in keys {
        match cache.get(key) {
            Some(point) => {
                out.cache_hits += 1;
                out.points.insert(key.clone(), point.clone());
            }
            None => missing.push(key.clone()),
        }
    }

    let mut last_start: Option<Instant> = None;
    for chunk in missing.chunks(options.batch_size.max(1)) {
        let mut attempt = 0;
        let answer = loop {
            if let Some(prev) = last_start {
                let elapsed = prev.elapsed();
                if elapsed < options.batch_interval {
                    thread::sleep(options.batch_interval - elapsed);
                }
            }
            last_start = Some(Instant::now());
            out.batches += 1;
            match backend.resolve_batch(chunk) {
                Ok(answer) if answer.len() == chunk.len() => break Ok(answer),
                Ok(answer) => {
                    break Err(GeocodeError::Transport(format!(
                        "backend returned {} answers for {} keys",
                        answer.len(),
                        chunk.len()
                    )))
                }
                Err(e) if attempt < options.retries => {
                    warn!("geocoding batch failed ({e}), retrying");
                    attempt += 1;
                }
                Err(e) => break Err(e),
            }
        };

        match answer {
            Ok(answer) => {
                let mut fresh = Vec::with_capacity(chunk.len());
                for (key, coords) in chunk.iter().zip(answer) {
                    let point = match coords {
                        Some((lat, lon)) => GeoPoint::resolved(lat, lon, backend.name())
                            .unwrap_or_else(|e| {
                                out.warnings.push(format!("{key}: {e}"));
                                GeoPoint::failed(backend.name())
                            }),
                        None => GeoPoint::failed(backend.name()),
                    };
                    fresh.push((key.clone(), point));
                }
                cache.store(&fresh)?;
                out.points.extend(fresh);
            }
            Err(e) => {
                let msg = format!("{} cities left unresolved: {e}", chunk.len());
                warn!("{msg}");
                out.warnings.push(msg);
                for key in chunk {
                    out.points
                        .insert(key.clone(), GeoPoint::failed(backend.name()));
                }
            }
        }
    }

    out.failures = out
        .points
        .iter()
        .filter(|(_, p)| p.failed)
        .map(|(k, _)| k.clone())
        .collect();
    for key in &out.failures {
        out.warnings.push(format!("no coordinates for {key}"));
    }
    Ok(out)
}

/// Writes resolved points in the gazetteer layout (failures as `0, 0`).
pub fn write_points<W: Write>(mut out: W, points: &BTreeMap<CityKey, GeoPoint>) -> io::Result<()> {
    for (key, point) in points {
        writeln!(out, "{}", point_row(key, point))?;
    }
    Ok(())
}

/// Reads a file written by [`write_points`].
pub fn read_points(text: &str, origin: &str) -> Result<BTreeMap<CityKey, GeoPoint>, GeocodeError> {
    let mut points = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| GeocodeError::BadFile {
            path: origin.to_string(),
            line: idx + 1,
            message,
        };
        let row = parse_point_row(line, 6).map_err(bad)?;
        let point = GeoPoint::from_coordinates(row.lat, row.lon, row.source)
            .map_err(|e| bad(e.to_string()))?;
        points.insert(row.key, point);
    }
    Ok(points)
}
