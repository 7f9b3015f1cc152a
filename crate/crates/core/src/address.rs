//! City keys from raw affiliation addresses, and per-city paper counts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::record::Record;

/// Normalized geographic identity of an address.
///
/// Country tokens are kept exactly as the export spells them (`ENGLAND`,
/// `PEOPLES R CHINA`, ...); no synonyms are merged.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CityKey {
    pub city: String,
    pub region: Option<String>,
    pub country: String,
}

impl CityKey {
    pub fn new(city: &str, region: Option<&str>, country: &str) -> Self {
        Self {
            city: city.to_uppercase(),
            region: region.map(str::to_uppercase),
            country: country.to_uppercase(),
        }
    }
}

/// Renders `CITY[, REGION], COUNTRY`; [`normalize_city`] parses this form back
/// into the same key.
impl fmt::Display for CityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.region {
            Some(region) => write!(f, "{}, {}, {}", self.city, region, self.country),
            None => write!(f, "{}, {}", self.city, self.country),
        }
    }
}

impl FromStr for CityKey {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_city(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AddressError {
    #[error("address has no comma-separated city/country tail")]
    NoTail,
    #[error("no recognizable country token")]
    NoCountry,
    #[error("no city name before the country")]
    NoCity,
}

/// Extracts the `(city, region, country)` tail of a raw address.
///
/// A leading `[author; author]` group is dropped, postal codes are removed,
/// and US-style tails (`Athens, GA 30602 USA`) yield the state as region.
/// Other tails whose second-to-last part is a bare 2-3 letter code
/// (`Sydney, NSW 2006, Australia`) get that code as region too.
pub fn normalize_city(raw: &str) -> Result<CityKey, AddressError> {
    let text = strip_author_group(raw);
    let text = text.trim().trim_end_matches('.').trim();
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() < 2 {
        return Err(AddressError::NoTail);
    }
    let tail = parts[parts.len() - 1];
    let before = &parts[..parts.len() - 1];

    if let Some((region, country)) = us_tail(tail) {
        let city =
            city_name(before.last().copied().unwrap_or_default()).ok_or(AddressError::NoCity)?;
        return Ok(CityKey {
            city,
            region: Some(region),
            country,
        });
    }

    let country = strip_postal(tail).ok_or(AddressError::NoCountry)?;
    if !country.chars().any(char::is_alphabetic) {
        return Err(AddressError::NoCountry);
    }

    let mut before = before;
    let mut region = None;
    if before.len() >= 2 {
        if let Some(code) = region_code(before[before.len() - 1]) {
            if city_name(before[before.len() - 2]).is_some() {
                region = Some(code);
                before = &before[..before.len() - 1];
            }
        }
    }
    let city = city_name(before[before.len() - 1]).ok_or(AddressError::NoCity)?;
    Ok(CityKey {
        city,
        region,
        country,
    })
}

fn strip_author_group(raw: &str) -> &str {
    let trimmed = raw.trim_start();
    if trimmed.starts_with('[') {
        if let Some(end) = trimmed.find(']') {
            return &trimmed[end + 1..];
        }
    }
    trimmed
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_uppercase).collect()
}

fn is_state_code(t: &str) -> bool {
    t.len() == 2 && t.chars().all(|c| c.is_ascii_uppercase())
}

/// `ST [ZIP] USA` or `ST USA`.
fn us_tail(tail: &str) -> Option<(String, String)> {
    let toks = tokens(tail);
    match toks.as_slice() {
        [st, zip, usa] if usa == "USA" && is_state_code(st) && is_postal(zip) => {
            Some((st.clone(), usa.clone()))
        }
        [st, usa] if usa == "USA" && is_state_code(st) => Some((st.clone(), usa.clone())),
        _ => None,
    }
}

fn is_postal(t: &str) -> bool {
    t.chars().any(|c| c.is_ascii_digit())
}

/// Drops every token carrying a digit (`D-80539`, `CB2`, `02138`) and a two
/// letter suffix glued to a numeric code (`1012 CX`).
fn strip_postal(s: &str) -> Option<String> {
    let toks = tokens(s);
    let mut kept = Vec::with_capacity(toks.len());
    let mut after_postal = false;
    for t in toks {
        if is_postal(&t) {
            after_postal = true;
            continue;
        }
        if after_postal && t.len() == 2 && t.chars().all(|c| c.is_ascii_alphabetic()) {
            after_postal = false;
            continue;
        }
        after_postal = false;
        kept.push(t);
    }
    if kept.is_empty() {
        None
    } else {
        Some(kept.join(" "))
    }
}

fn city_name(segment: &str) -> Option<String> {
    strip_postal(segment).filter(|c| c.chars().any(char::is_alphabetic))
}

/// A part that is only an uppercase 2-3 letter subdivision code, possibly
/// followed by a postal code.
fn region_code(segment: &str) -> Option<String> {
    let mut toks = segment.split_whitespace();
    let code = toks.next()?;
    if !(2..=3).contains(&code.len()) || !code.chars().all(|c| c.is_ascii_uppercase()) {
        return None;
    }
    if toks.all(is_postal) {
        Some(code.to_string())
    } else {
        None
    }
}

/// A record's attachment to one city.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CityOccurrence {
    pub ut: String,
    pub key: CityKey,
    /// Distinct addresses of the record that resolve to `key`.
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressFailure {
    pub ut: String,
    pub address: String,
    pub error: AddressError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    /// Sorted by key.
    pub occurrences: Vec<CityOccurrence>,
    pub failures: Vec<AddressFailure>,
}

/// Integer counting: one unit per distinct address string. Co-authors
/// sharing an address collapse to one, distinct departments in one city add
/// up in `multiplicity`.
pub fn extract_occurrences(record: &Record) -> Extraction {
    let mut seen = HashSet::new();
    let mut per_key: BTreeMap<CityKey, u32> = BTreeMap::new();
    let mut failures = Vec::new();
    for raw in &record.addresses {
        let address = collapse_whitespace(strip_author_group(raw));
        if !seen.insert(address.clone()) {
            continue;
        }
        match normalize_city(&address) {
            Ok(key) => *per_key.entry(key).or_default() += 1,
            Err(error) => failures.push(AddressFailure {
                ut: record.ut.clone(),
                address: raw.clone(),
                error,
            }),
        }
    }
    Extraction {
        occurrences: per_key
            .into_iter()
            .map(|(key, multiplicity)| CityOccurrence {
                ut: record.ut.clone(),
                key,
                multiplicity,
            })
            .collect(),
        failures,
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    /// Each record counts at most once per city.
    #[default]
    Paper,
    /// Each record counts once per distinct address in the city.
    Occurrence,
}

impl FromStr for CountMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Self::Paper),
            "occurrence" => Ok(Self::Occurrence),
            other => Err(format!(
                "unknown counting mode {other:?} (paper|occurrence)"
            )),
        }
    }
}

impl fmt::Display for CountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Occurrence => "occurrence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CityTally {
    pub key: CityKey,
    /// Papers (or occurrences, in occurrence mode) located in the city.
    pub n: u64,
    /// The part of `n` that is top-cited.
    pub n_top: u64,
    /// Total address occurrences, regardless of mode.
    pub occurrences: u64,
}

/// Counts papers per city. Tallies come back sorted by key.
pub fn tally(corpus: &[Record], top_ids: &HashSet<String>, mode: CountMode) -> Vec<CityTally> {
    let mut tallies: BTreeMap<CityKey, CityTally> = BTreeMap::new();
    for record in corpus {
        let is_top = top_ids.contains(&record.ut);
        for occ in extract_occurrences(record).occurrences {
            let units = match mode {
                CountMode::Paper => 1,
                CountMode::Occurrence => u64::from(occ.multiplicity),
            };
            let t = tallies.entry(occ.key.clone()).or_insert_with(|| CityTally {
                key: occ.key,
                n: 0,
                n_top: 0,
                occurrences: 0,
            });
            t.n += units;
            if is_top {
                t.n_top += units;
            }
            t.occurrences += u64::from(occ.multiplicity);
        }
    }
    tallies.into_values().collect()
}

/// Distinct city keys over a corpus.
pub fn city_keys(corpus: &[Record]) -> BTreeSet<CityKey> {
    corpus
        .iter()
        .flat_map(|r| extract_occurrences(r).occurrences)
        .map(|o| o.key)
        .collect()
}

/// Writes one line per address occurrence (`CITY[, REGION], COUNTRY`), in
/// corpus order. This is the geocoder input list.
pub fn write_cities<W: Write>(mut out: W, corpus: &[Record]) -> io::Result<()> {
    for record in corpus {
        for occ in extract_occurrences(record).occurrences {
            for _ in 0..occ.multiplicity {
                writeln!(out, "{}", occ.key)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(city: &str, region: Option<&str>, country: &str) -> CityKey {
        CityKey::new(city, region, country)
    }

    fn record(ut: &str, addresses: &[&str]) -> Record {
        Record {
            ut: ut.into(),
            doc_type: String::new(),
            pub_year: Some(2008),
            times_cited: 0,
            addresses: addresses.iter().map(|s| s.to_string()).collect(),
            extras: Default::default(),
        }
    }

    #[test]
    fn plain_european_address() {
        assert_eq!(
            normalize_city("Univ Example, Dept Phys, Berlin, Germany.").unwrap(),
            key("BERLIN", None, "GERMANY")
        );
    }

    #[test]
    fn us_address_keeps_state() {
        assert_eq!(
            normalize_city("Harvard Univ, Cambridge, MA 02138 USA").unwrap(),
            key("CAMBRIDGE", Some("MA"), "USA")
        );
    }

    #[test]
    fn homonymous_us_cities_differ() {
        let ga = normalize_city("Univ Georgia, Athens, GA 30602 USA").unwrap();
        let oh = normalize_city("Ohio Univ, Athens, OH 45701 USA").unwrap();
        assert_ne!(ga, oh);
        assert_eq!(ga.city, oh.city);
    }

    #[test]
    fn postal_codes_are_stripped() {
        let cases = [
            (
                "Max Planck Soc, Hofgartenstr 8, D-80539 Munich, Germany.",
                "MUNICH",
                "GERMANY",
            ),
            (
                "Univ Amsterdam, Kloveniersburgwal 48, NL-1012 CX Amsterdam, Netherlands.",
                "AMSTERDAM",
                "NETHERLANDS",
            ),
            (
                "Univ Cambridge, Dept Psychol, Cambridge CB2 3EB, England.",
                "CAMBRIDGE",
                "ENGLAND",
            ),
            (
                "Peking Univ, Beijing 100871, Peoples R China.",
                "BEIJING",
                "PEOPLES R CHINA",
            ),
            (
                "Russian Acad Sci, Moscow 117312, Russia.",
                "MOSCOW",
                "RUSSIA",
            ),
        ];
        for (raw, city, country) in cases {
            assert_eq!(
                normalize_city(raw).unwrap(),
                key(city, None, country),
                "{raw}"
            );
        }
    }

    #[test]
    fn bracketed_author_group_is_ignored() {
        assert_eq!(
            normalize_city("[Keller, L; Novak, HD] ETH, Zurich, Switzerland.").unwrap(),
            key("ZURICH", None, "SWITZERLAND")
        );
    }

    #[test]
    fn non_us_region_code() {
        assert_eq!(
            normalize_city("Univ Sydney, Sydney, NSW 2006, Australia.").unwrap(),
            key("SYDNEY", Some("NSW"), "AUSTRALIA")
        );
        assert_eq!(
            normalize_city("Univ Toronto, Toronto, ON M5S 1A1, Canada.").unwrap(),
            key("TORONTO", Some("ON"), "CANADA")
        );
    }

    #[test]
    fn unparseable_tails() {
        assert_eq!(
            normalize_city("Somewhere in Europe"),
            Err(AddressError::NoTail)
        );
        assert_eq!(
            normalize_city("Univ X, Berlin, 12345"),
            Err(AddressError::NoCountry)
        );
        assert_eq!(normalize_city(", Germany"), Err(AddressError::NoCity));
    }

    #[test]
    fn identical_addresses_collapse() {
        let r = record(
            "A",
            &[
                "[Smith, J] Univ X, Dept Phys, Berlin, Germany.",
                "[Doe, A] Univ X, Dept Phys, Berlin, Germany.",
            ],
        );
        let ex = extract_occurrences(&r);
        assert_eq!(ex.occurrences.len(), 1);
        assert_eq!(ex.occurrences[0].multiplicity, 1);
    }

    #[test]
    fn departments_in_one_city_add_multiplicity() {
        let r = record(
            "A",
            &[
                "Univ X, Dept Phys, Berlin, Germany.",
                "Univ X, Dept Chem, Berlin, Germany.",
            ],
        );
        let ex = extract_occurrences(&r);
        assert_eq!(ex.occurrences.len(), 1);
        assert_eq!(ex.occurrences[0].multiplicity, 2);
    }

    #[test]
    fn two_cities_two_occurrences() {
        let r = record(
            "A",
            &[
                "Univ X, Berlin, Germany.",
                "Harvard Univ, Cambridge, MA 02138 USA.",
            ],
        );
        let ex = extract_occurrences(&r);
        assert_eq!(ex.occurrences.len(), 2);
        assert_ne!(ex.occurrences[0].key, ex.occurrences[1].key);
    }

    #[test]
    fn failures_are_reported_not_counted() {
        let r = record("A", &["garbage", "Univ X, Berlin, Germany."]);
        let ex = extract_occurrences(&r);
        assert_eq!(ex.occurrences.len(), 1);
        assert_eq!(ex.failures.len(), 1);
        assert_eq!(ex.failures[0].error, AddressError::NoTail);
    }

    #[test]
    fn tally_paper_vs_occurrence() {
        let corpus = vec![
            record(
                "A",
                &["U, Dept 1, Berlin, Germany.", "U, Dept 2, Berlin, Germany."],
            ),
            record("B", &["U, Berlin, Germany."]),
            record("C", &["U, Paris, France."]),
        ];
        let top: HashSet<String> = ["A".to_string()].into();
        let paper = tally(&corpus, &top, CountMode::Paper);
        let berlin = paper.iter().find(|t| t.key.city == "BERLIN").unwrap();
        assert_eq!((berlin.n, berlin.n_top, berlin.occurrences), (2, 1, 3));
        let occ = tally(&corpus, &top, CountMode::Occurrence);
        let berlin = occ.iter().find(|t| t.key.city == "BERLIN").unwrap();
        assert_eq!((berlin.n, berlin.n_top), (3, 2));
        assert_eq!(paper[0].key.city, "BERLIN");
    }

    #[test]
    fn tally_constructed_three_records() {
        let corpus = vec![
            record("1", &["U, Lyon, France."]),
            record("2", &["U, Lyon, France."]),
            record("3", &["U, Oslo, Norway."]),
        ];
        let top: HashSet<String> = ["2".to_string()].into();
        let t = tally(&corpus, &top, CountMode::Paper);
        let lyon = t.iter().find(|t| t.key.city == "LYON").unwrap();
        assert_eq!((lyon.n, lyon.n_top), (2, 1));
    }

    #[test]
    fn cities_dump_lists_every_occurrence() {
        let corpus = vec![record(
            "A",
            &[
                "U, Dept 1, Athens, GA 30602 USA.",
                "U, Dept 2, Athens, GA 30602 USA.",
                "V, Kiev, Ukraine.",
            ],
        )];
        let mut out = Vec::new();
        write_cities(&mut out, &corpus).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "ATHENS, GA, USA\nATHENS, GA, USA\nKIEV, UKRAINE\n"
        );
    }

    fn word() -> impl Strategy<Value = String> {
        "[A-Z]{2,9}"
    }

    fn any_key() -> impl Strategy<Value = CityKey> {
        (
            proptest::collection::vec(word(), 1..3),
            proptest::option::of("[A-Z]{2,3}"),
            proptest::collection::vec(word(), 1..4),
        )
            .prop_map(|(city, region, country)| CityKey {
                city: city.join(" "),
                region,
                country: country.join(" "),
            })
    }

    proptest! {
        #[test]
        fn rendered_key_normalizes_to_itself(k in any_key()) {
            prop_assert_eq!(normalize_city(&k.to_string()).unwrap(), k);
        }

        #[test]
        fn normalization_is_idempotent(
            inst in "[A-Z][a-z]{2,8}( [A-Z][a-z]{2,8})?",
            city in "[A-Z][a-z]{2,8}",
            zip in proptest::option::of("[0-9]{4,5}"),
            country in "[A-Z][a-z]{3,9}",
        ) {
            let raw = match zip {
                Some(z) => format!("{inst}, {z} {city}, {country}."),
                None => format!("{inst}, {city}, {country}."),
            };
            let k = normalize_city(&raw).unwrap();
            prop_assert_eq!(normalize_city(&k.to_string()).unwrap(), k);
        }

        #[test]
        fn occurrence_mode_dominates_paper_mode(
            picks in proptest::collection::vec(proptest::collection::vec(0usize..6, 0..5), 1..30)
        ) {
            let addrs = [
                "U, Dept A, Berlin, Germany.", "U, Dept B, Berlin, Germany.",
                "V, Paris, France.", "W, Athens, GA 30602 USA.",
                "X, Athens, OH 45701 USA.", "unparseable",
            ];
            let corpus: Vec<Record> = picks.iter().enumerate()
                .map(|(i, p)| record(&i.to_string(), &p.iter().map(|&j| addrs[j]).collect::<Vec<_>>()))
                .collect();
            let none = HashSet::new();
            let paper = tally(&corpus, &none, CountMode::Paper);
            let occ = tally(&corpus, &none, CountMode::Occurrence);
            prop_assert_eq!(paper.len(), occ.len());
            for (p, o) in paper.iter().zip(&occ) {
                prop_assert_eq!(&p.key, &o.key);
                prop_assert!(o.n >= p.n);
                prop_assert!(p.n <= corpus.len() as u64);
                prop_assert!(p.n <= p.occurrences);
            }
            prop_assert_eq!(tally(&corpus, &none, CountMode::Paper), paper);
        }
    }
}
