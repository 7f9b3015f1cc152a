//! Field-tagged "full record" export parsing.
//!
//! The export grammar is line oriented. A line starts with a two character
//! tag and a space, continuation lines start with three spaces, `ER` closes a
//! record and `EF` closes the file:
//!
//! ```text
//! FN Clarivate Analytics Web of Science
//! VR 1.0
//! PT J
//! AU Smith, J
//! C1 [Smith, J] Univ Example, Dept Phys, Berlin, Germany.
//! TC 12
//! PY 2008
//! UT WOS:000001
//! ER
//!
//! EF
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};

/// One parsed bibliographic article.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// Unique accession number (`UT`).
    pub ut: String,
    /// Document type (`DT`), empty when the export does not carry it.
    pub doc_type: String,
    pub pub_year: Option<i32>,
    pub times_cited: u64,
    /// Raw `C1` address entries in export order.
    pub addresses: Vec<String>,
    /// Other tags, kept only when [`ParseOptions::keep_extras`] is set.
    pub extras: BTreeMap<String, String>,
}

impl Record {
    pub fn has_addresses(&self) -> bool {
        !self.addresses.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    /// 1-based line number, 0 when the warning is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseDiagnostics {
    /// Records kept. `records_parsed + records_skipped` equals the number
    /// of `ER` markers seen.
    pub records_parsed: usize,
    pub records_skipped: usize,
    /// Records dropped while merging because their `UT` was already seen.
    pub duplicates: usize,
    /// Records without any address entry. They are kept.
    pub address_free: usize,
    pub warnings: Vec<Warning>,
}

impl ParseDiagnostics {
    fn warn(&mut self, line: usize, message: impl Into<String>) {
        self.warnings.push(Warning {
            line,
            message: message.into(),
        });
    }

    fn absorb(&mut self, other: ParseDiagnostics) {
        self.records_parsed += other.records_parsed;
        self.records_skipped += other.records_skipped;
        self.duplicates += other.duplicates;
        self.address_free += other.address_free;
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Keep unrecognised tags in [`Record::extras`].
    pub keep_extras: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedExport {
    pub records: Vec<Record>,
    pub diagnostics: ParseDiagnostics,
}

/// Parses one export file with default options.
pub fn parse_export(input: &[u8]) -> ParsedExport {
    parse_export_with(input, &ParseOptions::default())
}

pub fn parse_export_with(input: &[u8], options: &ParseOptions) -> ParsedExport {
    let mut parser = Parser::new(options);
    let input = input.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(input);
    for (idx, raw) in input.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line_no = idx + 1;
        let line = match std::str::from_utf8(raw) {
            Ok(s) => std::borrow::Cow::Borrowed(s),
            Err(_) => {
                parser
                    .diag
                    .warn(line_no, "invalid UTF-8 replaced with U+FFFD");
                String::from_utf8_lossy(raw)
            }
        };
        if parser.feed(line_no, &line) {
            break;
        }
    }
    parser.finish()
}

/// Parses several exports and concatenates them, keeping the first record
/// seen for every `UT`.
pub fn merge_exports<I, B>(inputs: I) -> ParsedExport
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    merge_exports_with(inputs, &ParseOptions::default())
}

pub fn merge_exports_with<I, B>(inputs: I, options: &ParseOptions) -> ParsedExport
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    merge_parsed(
        inputs
            .into_iter()
            .map(|input| parse_export_with(input.as_ref(), options)),
    )
}

/// Merges already parsed exports, deduplicating by `UT`.
pub fn merge_parsed(parts: impl IntoIterator<Item = ParsedExport>) -> ParsedExport {
    let mut seen = HashSet::new();
    let mut merged = ParsedExport::default();
    for (file_idx, part) in parts.into_iter().enumerate() {
        merged.diagnostics.absorb(part.diagnostics);
        for record in part.records {
            if seen.insert(record.ut.clone()) {
                merged.records.push(record);
            } else {
                merged.diagnostics.duplicates += 1;
                if !record.has_addresses() {
                    merged.diagnostics.address_free -= 1;
                }
                merged.diagnostics.warn(
                    0,
                    format!(
                        "input {}: duplicate record {} ignored",
                        file_idx + 1,
                        record.ut
                    ),
                );
            }
        }
    }
    merged
}

#[derive(Default)]
struct Pending {
    start_line: usize,
    ut: Option<String>,
    doc_type: Option<String>,
    pub_year: Option<String>,
    times_cited: Option<String>,
    addresses: Vec<String>,
    extras: BTreeMap<String, String>,
    touched: bool,
}

struct Parser<'a> {
    options: &'a ParseOptions,
    diag: ParseDiagnostics,
    records: Vec<Record>,
    pending: Pending,
    current_tag: Option<String>,
    saw_header: bool,
    saw_content: bool,
    saw_end: bool,
}

impl<'a> Parser<'a> {
    fn new(options: &'a ParseOptions) -> Self {
        Self {
            options,
            diag: ParseDiagnostics::default(),
            records: Vec::new(),
            pending: Pending::default(),
            current_tag: None,
            saw_header: false,
            saw_content: false,
            saw_end: false,
        }
    }

    /// Returns true once the `EF` marker is reached.
    fn feed(&mut self, line_no: usize, line: &str) -> bool {
        if line.trim().is_empty() {
            self.current_tag = None;
            return false;
        }

        if let Some(rest) = line.strip_prefix("   ") {
            self.continuation(line_no, rest.trim());
            return false;
        }

        let (tag, value) = split_tag(line);
        if !self.saw_content {
            self.saw_content = true;
            if tag == "FN" {
                self.saw_header = true;
                return false;
            }
            self.diag
                .warn(line_no, "missing FN header, reading records anyway");
        }

        match tag {
            "FN" | "VR" if self.saw_header && !self.pending.touched => {}
            "EF" => {
                self.saw_end = true;
                return true;
            }
            "ER" => self.close_record(line_no),
            _ => self.field(line_no, tag, value),
        }
        false
    }

    fn field(&mut self, line_no: usize, tag: &str, value: &str) {
        if tag.len() != 2 || !tag.chars().all(|c| c.is_ascii_alphanumeric()) {
            self.diag.warn(
                line_no,
                format!("unrecognised line {:?} ignored", truncate(tag)),
            );
            self.current_tag = None;
            return;
        }
        let p = &mut self.pending;
        if !p.touched {
            p.touched = true;
            p.start_line = line_no;
        }
        let value = value.trim();
        match tag {
            "UT" => p.ut = Some(value.to_string()),
            "DT" => p.doc_type = Some(value.to_string()),
            "PY" => p.pub_year = Some(value.to_string()),
            "TC" => p.times_cited = Some(value.to_string()),
            "C1" => {
                if !value.is_empty() {
                    p.addresses.push(value.to_string());
                }
            }
            _ => {
                if self.options.keep_extras {
                    let entry = p.extras.entry(tag.to_string()).or_default();
                    if !entry.is_empty() {
                        entry.push('\n');
                    }
                    entry.push_str(value);
                }
            }
        }
        self.current_tag = Some(tag.to_string());
    }

    fn continuation(&mut self, line_no: usize, value: &str) {
        let Some(tag) = self.current_tag.as_deref() else {
            self.diag
                .warn(line_no, "continuation line without a field ignored");
            return;
        };
        let p = &mut self.pending;
        match tag {
            "C1" => match p.addresses.last_mut() {
                Some(last) if !starts_new_address(last, value) => {
                    last.push(' ');
                    last.push_str(value);
                }
                _ => p.addresses.push(value.to_string()),
            },
            "UT" | "DT" | "PY" | "TC" => {
                let slot = match tag {
                    "UT" => &mut p.ut,
                    "DT" => &mut p.doc_type,
                    "PY" => &mut p.pub_year,
                    _ => &mut p.times_cited,
                };
                if let Some(s) = slot {
                    s.push(' ');
                    s.push_str(value);
                }
            }
            _ => {
                if self.options.keep_extras {
                    if let Some(entry) = p.extras.get_mut(tag) {
                        entry.push('\n');
                        entry.push_str(value);
                    }
                }
            }
        }
    }

    fn close_record(&mut self, line_no: usize) {
        self.current_tag = None;
        let p = std::mem::take(&mut self.pending);
        let start = if p.touched { p.start_line } else { line_no };

        let ut = match p.ut.filter(|s| !s.is_empty()) {
            Some(ut) => ut,
            None => {
                self.diag.records_skipped += 1;
                self.diag
                    .warn(start, "record without UT identifier skipped");
                return;
            }
        };
        let times_cited = match p.times_cited.as_deref().map(str::parse::<u64>) {
            Some(Ok(tc)) => tc,
            Some(Err(_)) => {
                self.diag.records_skipped += 1;
                self.diag
                    .warn(start, format!("record {ut}: unreadable TC value, skipped"));
                return;
            }
            None => {
                self.diag.records_skipped += 1;
                self.diag
                    .warn(start, format!("record {ut}: no TC field, skipped"));
                return;
            }
        };
        let pub_year = match p.pub_year.as_deref().map(str::parse::<i32>) {
            Some(Ok(y)) => Some(y),
            Some(Err(_)) => {
                self.diag
                    .warn(start, format!("record {ut}: unreadable PY value"));
                None
            }
            None => None,
        };
        if p.addresses.is_empty() {
            self.diag.address_free += 1;
            self.diag
                .warn(start, format!("record {ut}: no address field"));
        }

        self.diag.records_parsed += 1;
        self.records.push(Record {
            ut,
            doc_type: p.doc_type.unwrap_or_default(),
            pub_year,
            times_cited,
            addresses: p.addresses,
            extras: p.extras,
        });
    }

    fn finish(mut self) -> ParsedExport {
        if !self.saw_end && self.saw_content {
            self.diag
                .warn(0, "file ends without EF marker (truncated?)");
        }
        if self.pending.touched {
            let line = self.pending.start_line;
            self.diag
                .warn(line, "unterminated record at end of input discarded");
        }
        ParsedExport {
            records: self.records,
            diagnostics: self.diag,
        }
    }
}

fn split_tag(line: &str) -> (&str, &str) {
    match line.char_indices().nth(2) {
        Some((idx, ' ')) => (&line[..idx], &line[idx + 1..]),
        Some(_) => (line, ""),
        None => (line.trim_end(), ""),
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(24).collect()
}

/// Address entries end with a period in exports; a bracketed author group
/// always opens a new one.
fn starts_new_address(previous: &str, next: &str) -> bool {
    previous.ends_with('.') || next.starts_with('[')
}

/// Writes the normalized corpus dump: one tab-separated header line per
/// record (`ut, doc_type, pub_year, times_cited, address_count`) followed by
/// its addresses, each indented by four spaces.
pub fn write_corpus<W: Write>(mut out: W, records: &[Record]) -> io::Result<()> {
    for r in records {
        let year = r.pub_year.map(|y| y.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            clean(&r.ut),
            clean(&r.doc_type),
            year,
            r.times_cited,
            r.addresses.len()
        )?;
        for a in &r.addresses {
            writeln!(out, "    {}", clean(a))?;
        }
    }
    Ok(())
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus dump line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads a dump produced by [`write_corpus`].
pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<Record>, CorpusError> {
    let mut records: Vec<Record> = Vec::new();
    let mut expected_addresses = 0usize;
    let mut last_line = 0;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        last_line = line_no;
        let bad = |message: &str| CorpusError::Malformed {
            line: line_no,
            message: message.to_string(),
        };
        if line.is_empty() {
            continue;
        }
        if let Some(address) = line.strip_prefix("    ") {
            let record = records
                .last_mut()
                .ok_or_else(|| bad("address before any record"))?;
            if expected_addresses == 0 {
                return Err(bad("more addresses than announced"));
            }
            record.addresses.push(address.to_string());
            expected_addresses -= 1;
            continue;
        }
        if expected_addresses != 0 {
            return Err(bad("fewer addresses than announced"));
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad("expected 5 tab-separated columns"));
        }
        let pub_year = if cols[2].is_empty() {
            None
        } else {
            Some(cols[2].parse().map_err(|_| bad("bad year"))?)
        };
        let times_cited = cols[3].parse().map_err(|_| bad("bad citation count"))?;
        expected_addresses = cols[4].parse().map_err(|_| bad("bad address count"))?;
        records.push(Record {
            ut: cols[0].to_string(),
            doc_type: cols[1].to_string(),
            pub_year,
            times_cited,
            addresses: Vec::with_capacity(expected_addresses),
            extras: BTreeMap::new(),
        });
    }
    if expected_addresses != 0 {
        return Err(CorpusError::Malformed {
            line: last_line,
            message: "dump ends inside an address list".into(),
        });
    }
    Ok(records)
}
