//! Stage orchestration: parse, geocode, stats, map.
//!
//! Each stage reads and writes plain text files so it can be run on its
//! own; [`run_pipeline`] chains them in memory and writes the same files.
//!
//! | stage   | reads                          | writes                        |
//! |---------|--------------------------------|-------------------------------|
//! | parse   | export files                   | `corpus.tsv`, `cities.txt`    |
//! | geocode | `corpus.tsv`                   | `geo.tsv`                     |
//! | stats   | `corpus.tsv`, `geo.tsv`        | `ucities.csv`                 |
//! | map     | `ucities.csv`                  | `ztest.txt`, `cities.geojson`, `map.html` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::address::{self, CityKey, CountMode};
use crate::emit::{self, HtmlOptions, OverlayDocument, OverlayFormat, TableError};
use crate::geocode::{
    self, Gazetteer, GeoCache, GeoPoint, GeocodeBackend, GeocodeError, HttpGeocoder, Offline,
    ResolverOptions,
};
use crate::record::{self, CorpusError, ParseDiagnostics, Record};
use crate::stats::{self, CityStats, Share, StatsError, StatsOptions, ThresholdResult};

pub const CORPUS_FILE: &str = "corpus.tsv";
pub const CITIES_FILE: &str = "cities.txt";
pub const GEO_FILE: &str = "geo.tsv";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Geocode(#[from] GeocodeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Table(#[from] TableError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which document types enter the analysis.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DocTypeFilter {
    /// Articles, plus records whose export carries no document type.
    #[default]
    Articles,
    Any,
    /// Case-insensitive list; a record matches if any of its `;`-separated
    /// types is listed.
    OneOf(Vec<String>),
}

impl DocTypeFilter {
    pub fn accepts(&self, record: &Record) -> bool {
        let types = || {
            record
                .doc_type
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
        };
        match self {
            Self::Any => true,
            Self::Articles => {
                record.doc_type.trim().is_empty()
                    || types().any(|t| t.eq_ignore_ascii_case("article"))
            }
            Self::OneOf(list) => types().any(|t| list.iter().any(|l| l.eq_ignore_ascii_case(t))),
        }
    }
}

impl FromStr for DocTypeFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" => Err("empty document type filter".into()),
            "article" | "articles" => Ok(Self::Articles),
            "any" | "all" => Ok(Self::Any),
            _ => Ok(Self::OneOf(
                s.split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .collect(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum GeocoderChoice {
    /// Every city fails; useful for statistics-only runs.
    #[default]
    Offline,
    Gazetteer(PathBuf),
    Http {
        endpoint: String,
    },
}

impl FromStr for GeocoderChoice {
    type Err = String;

    /// `offline`, `gazetteer:PATH`, or `http:URL`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("offline") || s.eq_ignore_ascii_case("none") {
            return Ok(Self::Offline);
        }
        if let Some(path) = s.strip_prefix("gazetteer:") {
            return Ok(Self::Gazetteer(PathBuf::from(path)));
        }
        if let Some(url) = s.strip_prefix("http:") {
            let endpoint = if url.starts_with("//") {
                format!("http:{url}")
            } else {
                url.to_string()
            };
            return Ok(Self::Http { endpoint });
        }
        if s.starts_with("https://") {
            return Ok(Self::Http {
                endpoint: s.to_string(),
            });
        }
        Err(format!(
            "unknown geocoder {s:?} (offline | gazetteer:PATH | http:URL)"
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Export files, or directories whose files are all read (sorted).
    pub inputs: Vec<PathBuf>,
    pub percentile: Share,
    pub alpha: f64,
    pub bonferroni: bool,
    /// Use the realized top share `T/N` as `p_e` instead of the percentile.
    pub empirical_share: bool,
    pub count_mode: CountMode,
    pub geocoder: GeocoderChoice,
    pub cache: Option<PathBuf>,
    pub batch_size: usize,
    pub batch_interval: Duration,
    pub out_dir: PathBuf,
    pub formats: BTreeSet<OverlayFormat>,
    pub file_names: BTreeMap<OverlayFormat, String>,
    pub doc_types: DocTypeFilter,
    pub title: String,
    pub tile_url: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            percentile: Share::TEN_PERCENT,
            alpha: 0.05,
            bonferroni: false,
            empirical_share: false,
            count_mode: CountMode::Paper,
            geocoder: GeocoderChoice::Offline,
            cache: None,
            batch_size: geocode::DEFAULT_BATCH_SIZE,
            batch_interval: geocode::DEFAULT_BATCH_INTERVAL,
            out_dir: PathBuf::from("out"),
            formats: OverlayFormat::ALL.into_iter().collect(),
            file_names: BTreeMap::new(),
            doc_types: DocTypeFilter::Articles,
            title: HtmlOptions::default().title,
            tile_url: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PipelineError::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let p = self.percentile.to_f64();
        if !(p > 0.0 && p < 1.0) {
            return Err(PipelineError::Config(format!(
                "percentile must lie in (0, 1), got {}",
                self.percentile
            )));
        }
        if self.batch_size == 0 {
            return Err(PipelineError::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn output_path(&self, format: OverlayFormat) -> PathBuf {
        let name = self
            .file_names
            .get(&format)
            .map(String::as_str)
            .unwrap_or_else(|| format.default_file_name());
        self.out_dir.join(name)
    }

    pub fn html_options(&self) -> HtmlOptions {
        HtmlOptions {
            title: self.title.clone(),
            tile_url: self.tile_url.clone(),
        }
    }

    /// Applies `key = value` settings on top of `self`. Relative paths are
    /// resolved against `base`. See [`CONFIG_KEYS`].
    pub fn apply_config_text(&mut self, text: &str, base: &Path) -> Result<(), PipelineError> {
        let mut inputs_reset = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad =
                |msg: String| PipelineError::Config(format!("config line {}: {msg}", idx + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            let key = key.trim().to_ascii_lowercase().replace('-', "_");
            let value = value.trim().trim_matches('"');
            let path = |v: &str| {
                let p = PathBuf::from(v);
                if p.is_relative() {
                    base.join(p)
                } else {
                    p
                }
            };
            match key.as_str() {
                "input" | "inputs" => {
                    if !inputs_reset {
                        self.inputs.clear();
                        inputs_reset = true;
                    }
                    self.inputs.extend(
                        value
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(path),
                    );
                }
                "percentile" => {
                    self.percentile = value.parse().map_err(|e: StatsError| bad(e.to_string()))?
                }
                "alpha" => {
                    self.alpha = value
                        .parse()
                        .map_err(|_| bad(format!("bad alpha {value:?}")))?
                }
                "bonferroni" => {
                    self.bonferroni =
                        parse_bool(value).ok_or_else(|| bad(format!("bad boolean {value:?}")))?
                }
                "empirical_share" => {
                    self.empirical_share =
                        parse_bool(value).ok_or_else(|| bad(format!("bad boolean {value:?}")))?
                }
                "count_mode" => self.count_mode = value.parse().map_err(bad)?,
                "geocoder" => {
                    self.geocoder = match value.parse().map_err(bad)? {
                        GeocoderChoice::Gazetteer(p) => {
                            GeocoderChoice::Gazetteer(path(&p.to_string_lossy()))
                        }
                        other => other,
                    }
                }
                "endpoint" => {
                    self.geocoder = GeocoderChoice::Http {
                        endpoint: value.to_string(),
                    }
                }
                "cache" => self.cache = Some(path(value)),
                "batch_size" => {
                    self.batch_size = value
                        .parse()
                        .map_err(|_| bad(format!("bad batch size {value:?}")))?
                }
                "rate_limit_ms" => {
                    self.batch_interval = Duration::from_millis(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad interval {value:?}")))?,
                    )
                }
                "out" => self.out_dir = path(value),
                "formats" => self.formats = parse_formats(value).map_err(bad)?,
                "doc_types" => self.doc_types = value.parse().map_err(bad)?,
                "title" => self.title = value.to_string(),
                "tile_url" => self.tile_url = Some(value.to_string()).filter(|s| !s.is_empty()),
                "gpsviz_file" => {
                    self.file_names
                        .insert(OverlayFormat::GpsVisualizer, value.to_string());
                }
                "geojson_file" => {
                    self.file_names
                        .insert(OverlayFormat::GeoJson, value.to_string());
                }
                "table_file" => {
                    self.file_names
                        .insert(OverlayFormat::Table, value.to_string());
                }
                "html_file" => {
                    self.file_names
                        .insert(OverlayFormat::Html, value.to_string());
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<(), PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.apply_config_text(&text, base)
    }

    fn stats_options(&self, threshold: &ThresholdResult) -> Result<StatsOptions, PipelineError> {
        let share = if self.empirical_share {
            Share::from_ratio(threshold.realized_share()).map_err(|_| {
                PipelineError::Config("empirical share is 100%: every paper is top-cited".into())
            })?
        } else {
            self.percentile
        };
        Ok(StatsOptions {
            share,
            alpha: self.alpha,
            bonferroni: self.bonferroni,
        })
    }

    fn resolver_options(&self) -> ResolverOptions {
        ResolverOptions {
            batch_size: self.batch_size,
            batch_interval: self.batch_interval,
            ..Default::default()
        }
    }
}

/// Keys understood by [`PipelineConfig::apply_config_text`].
pub const CONFIG_KEYS: &[&str] = &[
    "input",
    "percentile",
    "alpha",
    "bonferroni",
    "empirical_share",
    "count_mode",
    "geocoder",
    "endpoint",
    "cache",
    "batch_size",
    "rate_limit_ms",
    "out",
    "formats",
    "doc_types",
    "title",
    "tile_url",
    "gpsviz_file",
    "geojson_file",
    "table_file",
    "html_file",
];

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

pub fn parse_formats(s: &str) -> Result<BTreeSet<OverlayFormat>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(OverlayFormat::ALL.into_iter().collect());
    }
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

/// Expands directories to their files, sorted by name.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)
                .map_err(io_err(input))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

#[derive(Debug, Clone, Default)]
pub struct ParseStage {
    pub corpus: Vec<Record>,
    pub diagnostics: ParseDiagnostics,
    /// Records removed by the document-type filter.
    pub filtered_out: usize,
}

/// Reads, merges and filters the exports.
pub fn parse_stage(config: &PipelineConfig) -> Result<ParseStage, PipelineError> {
    let files = expand_inputs(&config.inputs)?;
    let mut parts = Vec::with_capacity(files.len());
    for file in &files {
        let bytes = fs::read(file).map_err(io_err(file))?;
        parts.push(record::parse_export(&bytes));
    }
    let merged = record::merge_parsed(parts);
    let before = merged.records.len();
    let corpus: Vec<Record> = merged
        .records
        .into_iter()
        .filter(|r| config.doc_types.accepts(r))
        .collect();
    Ok(ParseStage {
        filtered_out: before - corpus.len(),
        corpus,
        diagnostics: merged.diagnostics,
    })
}

fn make_backend(choice: &GeocoderChoice) -> Result<Box<dyn GeocodeBackend>, PipelineError> {
    Ok(match choice {
        GeocoderChoice::Offline => Box::new(Offline),
        GeocoderChoice::Gazetteer(path) => Box::new(Gazetteer::load(path)?),
        GeocoderChoice::Http { endpoint } => Box::new(HttpGeocoder::new(endpoint.clone())),
    })
}

pub fn geocode_stage(
    corpus: &[Record],
    config: &PipelineConfig,
) -> Result<geocode::Resolution, PipelineError> {
    let keys = address::city_keys(corpus);
    let mut backend = make_backend(&config.geocoder)?;
    let mut cache = match &config.cache {
        Some(path) => GeoCache::open(path)?,
        None => GeoCache::in_memory(),
    };
    Ok(geocode::resolve_all(
        &keys,
        backend.as_mut(),
        &mut cache,
        &config.resolver_options(),
    )?)
}

#[derive(Debug, Clone)]
pub struct StatsStage {
    pub threshold: ThresholdResult,
    pub options: StatsOptions,
    pub rows: Vec<CityStats>,
}

pub fn stats_stage(
    corpus: &[Record],
    points: &BTreeMap<CityKey, GeoPoint>,
    config: &PipelineConfig,
) -> Result<StatsStage, PipelineError> {
    let citations: Vec<u64> = corpus.iter().map(|r| r.times_cited).collect();
    let threshold =
        stats::citation_threshold(&citations, config.percentile).map_err(|e| match e {
            StatsError::EmptyCorpus => PipelineError::EmptyCorpus,
            other => other.into(),
        })?;
    let top = stats::classify_top(corpus, &threshold);
    let tallies = address::tally(corpus, &top, config.count_mode);
    let options = config.stats_options(&threshold)?;
    let rows = stats::city_table(&tallies, &options, points);
    Ok(StatsStage {
        threshold,
        options,
        rows,
    })
}

/// Renders the enabled formats. The table is rendered only when
/// `include_table` is set.
pub fn render(
    rows: &[CityStats],
    config: &PipelineConfig,
    include_table: bool,
) -> Vec<OverlayDocument> {
    config
        .formats
        .iter()
        .filter(|&&f| include_table || f != OverlayFormat::Table)
        .map(|f| match f {
            OverlayFormat::GpsVisualizer => emit::emit_gpsviz(rows),
            OverlayFormat::GeoJson => emit::emit_geojson(rows),
            OverlayFormat::Table => emit::emit_table(rows),
            OverlayFormat::Html => emit::emit_html(rows, &config.html_options()),
        })
        .collect()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn write_documents(
    docs: &[OverlayDocument],
    config: &PipelineConfig,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    for doc in docs {
        let path = config.output_path(doc.format);
        write_file(&path, doc.body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    /// Corpus size after filtering.
    pub records: usize,
    pub records_skipped: usize,
    pub duplicates: usize,
    pub address_free: usize,
    pub filtered_out: usize,
    pub min_top: usize,
    pub cutoff: u64,
    pub top_count: usize,
    pub cities: usize,
    pub testable: usize,
    pub significant_positive: usize,
    pub significant_negative: usize,
    pub geocode_failures: usize,
    pub address_failures: usize,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunReport {
    fn with_stats(mut self, stats: &StatsStage) -> Self {
        self.records = stats.threshold.total;
        self.min_top = stats.threshold.min_top;
        self.cutoff = stats.threshold.cutoff;
        self.top_count = stats.threshold.top_count;
        self.cities = stats.rows.len();
        self.testable = stats.rows.iter().filter(|r| r.testable()).count();
        self.significant_positive = stats
            .rows
            .iter()
            .filter(|r| r.significant() && r.z > 0.0)
            .count();
        self.significant_negative = stats
            .rows
            .iter()
            .filter(|r| r.significant() && r.z < 0.0)
            .count();
        self.geocode_failures = stats.rows.iter().filter(|r| r.point.failed).count();
        self
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records analysed        {}", self.records)?;
        if self.records_skipped + self.duplicates + self.filtered_out > 0 {
            writeln!(
                f,
                "records dropped         {} skipped, {} duplicates, {} filtered by type",
                self.records_skipped, self.duplicates, self.filtered_out
            )?;
        }
        writeln!(f, "records without address {}", self.address_free)?;
        writeln!(
            f,
            "top set                 {} papers cited >= {} times (nominal {})",
            self.top_count, self.cutoff, self.min_top
        )?;
        writeln!(f, "cities                  {}", self.cities)?;
        writeln!(f, "testable cities         {}", self.testable)?;
        writeln!(
            f,
            "significant             {} above, {} below expectation",
            self.significant_positive, self.significant_negative
        )?;
        writeln!(f, "geocoding failures      {}", self.geocode_failures)?;
        writeln!(f, "unreadable addresses    {}", self.address_failures)?;
        for path in &self.outputs {
            writeln!(f, "wrote {}", path.display())?;
        }
        Ok(())
    }
}

fn corpus_warnings(corpus: &[Record]) -> (usize, Vec<String>) {
    let mut count = 0;
    let mut warnings = Vec::new();
    for r in corpus {
        for failure in address::extract_occurrences(r).failures {
            count += 1;
            warnings.push(format!(
                "{}: {:?}: {}",
                failure.ut, failure.address, failure.error
            ));
        }
    }
    (count, warnings)
}

fn serialize_corpus(corpus: &[Record]) -> Vec<u8> {
    let mut buf = Vec::new();
    record::write_corpus(&mut buf, corpus).expect("in-memory write");
    buf
}

/// `parse` stage: writes `corpus.tsv` and `cities.txt` into the output
/// directory.
pub fn run_parse(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let parsed = parse_stage(config)?;
    if parsed.corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let corpus_path = config.out_dir.join(CORPUS_FILE);
    write_file(&corpus_path, &serialize_corpus(&parsed.corpus))?;
    let mut cities = Vec::new();
    address::write_cities(&mut cities, &parsed.corpus).expect("in-memory write");
    let cities_path = config.out_dir.join(CITIES_FILE);
    write_file(&cities_path, &cities)?;
    let (address_failures, mut warnings) = corpus_warnings(&parsed.corpus);
    warnings.splice(
        0..0,
        parsed.diagnostics.warnings.iter().map(|w| w.to_string()),
    );
    Ok(RunReport {
        records: parsed.corpus.len(),
        records_skipped: parsed.diagnostics.records_skipped,
        duplicates: parsed.diagnostics.duplicates,
        address_free: parsed.corpus.iter().filter(|r| !r.has_addresses()).count(),
        filtered_out: parsed.filtered_out,
        address_failures,
        outputs: vec![corpus_path, cities_path],
        warnings,
        ..Default::default()
    })
}

pub fn load_corpus(path: &Path) -> Result<Vec<Record>, PipelineError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(record::read_corpus(BufReader::new(file))?)
}

pub fn load_points(path: &Path) -> Result<BTreeMap<CityKey, GeoPoint>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(geocode::read_points(&text, &path.display().to_string())?)
}

/// `geocode` stage: resolves every city of a corpus dump, writes `geo.tsv`.
pub fn run_geocode(
    corpus_path: &Path,
    config: &PipelineConfig,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let corpus = load_corpus(corpus_path)?;
    let resolution = geocode_stage(&corpus, config)?;
    let path = config.out_dir.join(GEO_FILE);
    let mut buf = Vec::new();
    geocode::write_points(&mut buf, &resolution.points).expect("in-memory write");
    write_file(&path, &buf)?;
    Ok(RunReport {
        records: corpus.len(),
        cities: resolution.points.len(),
        geocode_failures: resolution.failures.len(),
        outputs: vec![path],
        warnings: resolution.warnings,
        ..Default::default()
    })
}

/// `stats` stage: writes the statistics table from a corpus dump and a
/// points file.
pub fn run_stats(
    corpus_path: &Path,
    geo_path: &Path,
    config: &PipelineConfig,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let corpus = load_corpus(corpus_path)?;
    let points = load_points(geo_path)?;
    let stats = stats_stage(&corpus, &points, config)?;
    let table = emit::emit_table(&stats.rows);
    let path = config.output_path(OverlayFormat::Table);
    write_file(&path, table.body.as_bytes())?;
    Ok(RunReport {
        address_free: corpus.iter().filter(|r| !r.has_addresses()).count(),
        outputs: vec![path],
        ..Default::default()
    }
    .with_stats(&stats))
}

/// `map` stage: renders the enabled map formats from a statistics table.
pub fn run_map(table_path: &Path, config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let text = fs::read_to_string(table_path).map_err(io_err(table_path))?;
    let rows = emit::parse_table(&text)?;
    let docs = render(&rows, config, false);
    let outputs = write_documents(&docs, config)?;
    Ok(RunReport {
        cities: rows.len(),
        testable: rows.iter().filter(|r| r.testable()).count(),
        significant_positive: rows.iter().filter(|r| r.significant() && r.z > 0.0).count(),
        significant_negative: rows.iter().filter(|r| r.significant() && r.z < 0.0).count(),
        geocode_failures: rows.iter().filter(|r| r.point.failed).count(),
        outputs,
        ..Default::default()
    })
}

/// Runs every stage and writes intermediates plus the enabled outputs.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let parsed = parse_stage(config)?;
    if parsed.corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let corpus = &parsed.corpus;
    let mut outputs = Vec::new();

    let corpus_path = config.out_dir.join(CORPUS_FILE);
    write_file(&corpus_path, &serialize_corpus(corpus))?;
    outputs.push(corpus_path);
    let mut cities = Vec::new();
    address::write_cities(&mut cities, corpus).expect("in-memory write");
    let cities_path = config.out_dir.join(CITIES_FILE);
    write_file(&cities_path, &cities)?;
    outputs.push(cities_path);

    let resolution = geocode_stage(corpus, config)?;
    let mut geo = Vec::new();
    geocode::write_points(&mut geo, &resolution.points).expect("in-memory write");
    let geo_path = config.out_dir.join(GEO_FILE);
    write_file(&geo_path, &geo)?;
    outputs.push(geo_path);

    let stats = stats_stage(corpus, &resolution.points, config)?;
    let docs = render(&stats.rows, config, true);
    outputs.extend(write_documents(&docs, config)?);

    let (address_failures, address_warnings) = corpus_warnings(corpus);
    let mut warnings: Vec<String> = parsed
        .diagnostics
        .warnings
        .iter()
        .map(|w| w.to_string())
        .collect();
    warnings.extend(address_warnings);
    warnings.extend(resolution.warnings);
    Ok(RunReport {
        records_skipped: parsed.diagnostics.records_skipped,
        duplicates: parsed.diagnostics.duplicates,
        address_free: corpus.iter().filter(|r| !r.has_addresses()).count(),
        filtered_out: parsed.filtered_out,
        address_failures,
        outputs,
        warnings,
        ..Default::default()
    }
    .with_stats(&stats))
}
