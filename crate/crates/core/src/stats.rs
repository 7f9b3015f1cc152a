//! Top-cited thresholds and the per-city observed-vs-expected z test.
//!
//! A city with `n` papers, `n_o` of them in the top share `p_e` of the
//! corpus, is compared against its expected count `n_e = n * p_e` with the
//! z test for two independent proportions:
//!
//! ```text
//! p_o = n_o / n
//! p   = (n_o + n_e) / (2n)                  pooled proportion
//! z   = (p_o - p_e) / sqrt(p (1 - p) (2 / n))
//! ```
//!
//! The test is only meaningful when `n_e >= 5`. Colors and circle radii for
//! the map follow from the sign of `n_o - n_e`, testability and significance.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::address::{CityKey, CityTally};
use crate::geocode::GeoPoint;
use crate::record::Record;

/// Exact rational number used for shares and expected counts.
pub type Rational = Ratio<i128>;

/// Minimum expected count for which the z test is applied.
pub const MIN_EXPECTED: i128 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("degenerate pooled proportion")]
    DegeneratePooled,
    #[error("share must lie strictly between 0 and 1, got {0}")]
    InvalidShare(String),
    #[error("city must have at least one paper and no more top papers than papers (n={n}, observed={observed})")]
    InvalidCounts { n: u64, observed: u64 },
}

/// A proportion strictly between 0 and 1, held exactly.
///
/// Parsed from decimal text without going through binary floating point, so
/// `"0.10"` is exactly one tenth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Share(Rational);

impl Share {
    pub const TEN_PERCENT: Share = Share(Ratio::new_raw(1, 10));

    pub fn new(numer: i128, denom: i128) -> Result<Self, StatsError> {
        if denom == 0 {
            return Err(StatsError::InvalidShare(format!("{numer}/{denom}")));
        }
        Self::from_ratio(Ratio::new(numer, denom))
    }

    pub fn from_ratio(r: Rational) -> Result<Self, StatsError> {
        if r <= Rational::zero() || r >= Rational::from_integer(1) {
            return Err(StatsError::InvalidShare(fmt_rational(&r)));
        }
        Ok(Self(r))
    }

    /// Uses the shortest decimal representation of `value`.
    pub fn from_f64(value: f64) -> Result<Self, StatsError> {
        if !value.is_finite() {
            return Err(StatsError::InvalidShare(value.to_string()));
        }
        value.to_string().parse()
    }

    pub fn ratio(&self) -> Rational {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.0)
    }
}

impl Default for Share {
    fn default() -> Self {
        Self::TEN_PERCENT
    }
}

impl FromStr for Share {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let invalid = || StatsError::InvalidShare(s.to_string());
        let (body, scale) = match s.strip_suffix('%') {
            Some(pct) => (pct.trim(), 100i128),
            None => (s, 1),
        };
        if let Some((num, den)) = body.split_once('/') {
            let num: i128 = num.trim().parse().map_err(|_| invalid())?;
            let den: i128 = den.trim().parse().map_err(|_| invalid())?;
            if den == 0 {
                return Err(invalid());
            }
            return Self::from_ratio(Ratio::new(num, den * scale)).map_err(|_| invalid());
        }
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if (int.is_empty() && frac.is_empty())
            || frac.len() > 18
            || !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
        {
            return Err(invalid());
        }
        let digits = format!("{int}{frac}");
        let numer: i128 = digits.parse().map_err(|_| invalid())?;
        let denom = 10i128.pow(frac.len() as u32) * scale;
        Self::from_ratio(Ratio::new(numer, denom)).map_err(|_| invalid())
    }
}

impl fmt::Display for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fmt_rational(&self.0))
    }
}

fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Formats an exact rational rounded half away from zero to `places`
/// decimals.
pub fn format_fixed(r: &Rational, places: u32) -> String {
    let scale = 10i128.pow(places);
    let scaled = *r * Rational::from_integer(scale);
    let neg = scaled < Rational::zero();
    let abs = if neg { -scaled } else { scaled };
    let rounded = (abs + Ratio::new(1, 2)).floor().to_integer();
    let int = rounded / scale;
    let frac = rounded % scale;
    let sign = if neg && rounded != 0 { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = places as usize)
    }
}

/// Top-share citation cutoff after including the whole tie block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdResult {
    pub share: Share,
    /// Corpus size.
    pub total: usize,
    /// Nominal top-set size, `ceil(share * total)`.
    pub min_top: usize,
    /// Citation count at rank `min_top`; every paper cited at least this
    /// often is top.
    pub cutoff: u64,
    /// Actual top-set size including ties at the cutoff.
    pub top_count: usize,
}

impl ThresholdResult {
    /// Empirical top share `top_count / total`.
    pub fn realized_share(&self) -> Rational {
        Ratio::new(self.top_count as i128, self.total as i128)
    }
}

/// Finds the cutoff so that at least `ceil(share * N)` papers are top, with
/// every paper tied at the cutoff included.
pub fn citation_threshold(citations: &[u64], share: Share) -> Result<ThresholdResult, StatsError> {
    if citations.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let total = citations.len();
    let min_top = (share.ratio() * Rational::from_integer(total as i128))
        .ceil()
        .to_integer() as usize;
    let min_top = min_top.clamp(1, total);
    let mut sorted = citations.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let cutoff = sorted[min_top - 1];
    let top_count = sorted.partition_point(|&c| c >= cutoff);
    Ok(ThresholdResult {
        share,
        total,
        min_top,
        cutoff,
        top_count,
    })
}

/// Identifiers of the records cited at least `threshold.cutoff` times.
pub fn classify_top(corpus: &[Record], threshold: &ThresholdResult) -> HashSet<String> {
    corpus
        .iter()
        .filter(|r| r.times_cited >= threshold.cutoff)
        .map(|r| r.ut.clone())
        .collect()
}

/// z statistic for `observed` top papers out of `n` against share `expected`.
///
/// The pooled proportion and the numerator are formed exactly; only the final
/// quotient and square root are taken in floating point.
pub fn z_score(n: u64, observed: u64, expected: Share) -> Result<f64, StatsError> {
    if n == 0 || observed > n {
        return Err(StatsError::InvalidCounts { n, observed });
    }
    let n_r = Rational::from_integer(n as i128);
    let n_o = Rational::from_integer(observed as i128);
    let n_e = n_r * expected.ratio();
    let pooled = (n_o + n_e) / (n_r * 2);
    if pooled.is_zero() || pooled == Rational::from_integer(1) {
        return Err(StatsError::DegeneratePooled);
    }
    // (p_o - p_e) / sqrt(p(1-p)2/n) == (n_o - n_e) / sqrt(2n p(1-p))
    let diff = n_o - n_e;
    if diff.is_zero() {
        return Ok(0.0);
    }
    let variance = n_r * 2 * pooled * (Rational::from_integer(1) - pooled);
    Ok(rational_to_f64(&diff) / rational_to_f64(&variance).sqrt())
}

/// Two-sided standard normal tail probability `2 (1 - Phi(|z|))`.
pub fn p_value(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Per-comparison significance level after Bonferroni correction.
pub fn per_test_level(alpha: f64, tests: Option<u32>) -> f64 {
    alpha / f64::from(tests.unwrap_or(1).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Significance {
    Significant,
    NotSignificant,
    /// Expected count below five.
    NotTestable,
}

impl Significance {
    pub fn is_testable(self) -> bool {
        self != Self::NotTestable
    }

    pub fn is_significant(self) -> bool {
        self == Self::Significant
    }
}

/// `tests` is the Bonferroni comparison count; `None` means uncorrected.
pub fn significance(z: f64, expected: f64, alpha: f64, tests: Option<u32>) -> Significance {
    if expected < MIN_EXPECTED as f64 {
        Significance::NotTestable
    } else if p_value(z) < per_test_level(alpha, tests) {
        Significance::Significant
    } else {
        Significance::NotSignificant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Color {
    DarkGreen,
    LightGreen,
    LimeGreen,
    Grey,
    Orange,
    OrangeRed,
    Red,
}

impl Color {
    pub const ALL: [Color; 7] = [
        Color::DarkGreen,
        Color::LightGreen,
        Color::LimeGreen,
        Color::Grey,
        Color::Orange,
        Color::OrangeRed,
        Color::Red,
    ];

    /// Web color name.
    pub fn name(self) -> &'static str {
        match self {
            Color::DarkGreen => "darkgreen",
            Color::LightGreen => "lightgreen",
            Color::LimeGreen => "limegreen",
            Color::Grey => "gray",
            Color::Orange => "orange",
            Color::OrangeRed => "orangered",
            Color::Red => "red",
        }
    }

    pub fn hex(self) -> &'static str {
        match self {
            Color::DarkGreen => "#006400",
            Color::LightGreen => "#90EE90",
            Color::LimeGreen => "#32CD32",
            Color::Grey => "#808080",
            Color::Orange => "#FFA500",
            Color::OrangeRed => "#FF4500",
            Color::Red => "#FF0000",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Color {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Color::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s) || c.hex().eq_ignore_ascii_case(s))
            .or_else(|| s.eq_ignore_ascii_case("grey").then_some(Color::Grey))
            .ok_or_else(|| format!("unknown color {s:?}"))
    }
}

/// Green above expectation, red/orange below, grey when equal. The shade
/// encodes significance; not-testable wins over the significance result.
pub fn assign_color(observed: u64, expected: &Rational, sig: Significance) -> Color {
    let observed = Rational::from_integer(observed as i128);
    match (observed.cmp(expected), sig) {
        (Ordering::Equal, _) => Color::Grey,
        (Ordering::Greater, Significance::NotTestable) => Color::LimeGreen,
        (Ordering::Greater, Significance::Significant) => Color::DarkGreen,
        (Ordering::Greater, Significance::NotSignificant) => Color::LightGreen,
        (Ordering::Less, Significance::NotTestable) => Color::Orange,
        (Ordering::Less, Significance::Significant) => Color::Red,
        (Ordering::Less, Significance::NotSignificant) => Color::OrangeRed,
    }
}

/// `|observed - expected| + 1`, exact.
pub fn radius_exact(observed: u64, expected: &Rational) -> Rational {
    let diff = Rational::from_integer(observed as i128) - expected;
    diff.abs() + Rational::from_integer(1)
}

pub fn circle_radius(observed: u64, expected: &Rational) -> f64 {
    rational_to_f64(&radius_exact(observed, expected))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityStats {
    pub key: CityKey,
    pub n: u64,
    pub observed: u64,
    /// `n * p_e`, exact.
    pub expected: Rational,
    pub share: Share,
    pub z: f64,
    pub p_value: f64,
    pub significance: Significance,
    /// `observed / expected`.
    pub ratio: f64,
    pub color: Color,
    pub radius: f64,
    pub point: GeoPoint,
}

impl CityStats {
    pub fn observed_share(&self) -> f64 {
        self.observed as f64 / self.n as f64
    }

    pub fn pooled(&self) -> f64 {
        let n = Rational::from_integer(self.n as i128);
        rational_to_f64(
            &((Rational::from_integer(self.observed as i128) + self.expected) / (n * 2)),
        )
    }

    pub fn testable(&self) -> bool {
        self.significance.is_testable()
    }

    pub fn significant(&self) -> bool {
        self.significance.is_significant()
    }

    /// Expected count with two decimals, e.g. `71.50`.
    pub fn expected_display(&self) -> String {
        format_fixed(&self.expected, 2)
    }

    pub fn ratio_display(&self) -> String {
        format!("{:.2}", self.ratio)
    }

    /// Popup / description label: `obs: 147, exp: 71.50, ratio: 2.06*`.
    pub fn label(&self) -> String {
        format!(
            "obs: {}, exp: {}, ratio: {}{}",
            self.observed,
            self.expected_display(),
            self.ratio_display(),
            if self.significant() { "*" } else { "" }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsOptions {
    /// Expected top share under the null hypothesis.
    pub share: Share,
    pub alpha: f64,
    /// Divide `alpha` by the number of testable cities.
    pub bonferroni: bool,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            share: Share::TEN_PERCENT,
            alpha: 0.05,
            bonferroni: false,
        }
    }
}

/// Builds one row per city, largest circle first (ties broken by key).
///
/// Cities missing from `points` get the failed-geocode sentinel. Tallies
/// with `n == 0` are dropped.
pub fn city_table(
    tallies: &[CityTally],
    options: &StatsOptions,
    points: &BTreeMap<CityKey, GeoPoint>,
) -> Vec<CityStats> {
    let share = options.share;
    let tallies: Vec<&CityTally> = tallies.iter().filter(|t| t.n > 0).collect();
    let min_expected = Rational::from_integer(MIN_EXPECTED);
    let testable_count = tallies
        .iter()
        .filter(|t| Rational::from_integer(t.n as i128) * share.ratio() >= min_expected)
        .count();
    let tests = options
        .bonferroni
        .then(|| u32::try_from(testable_count).unwrap_or(u32::MAX));

    let mut rows: Vec<(Rational, CityStats)> = tallies
        .into_iter()
        .map(|t| {
            let observed = t.n_top.min(t.n);
            let expected = Rational::from_integer(t.n as i128) * share.ratio();
            // Pooled share cannot hit 0 or 1 with n >= 1 and 0 < p_e < 1.
            let z = z_score(t.n, observed, share).unwrap_or(0.0);
            let sig = significance(z, rational_to_f64(&expected), options.alpha, tests);
            let radius = radius_exact(observed, &expected);
            let stats = CityStats {
                key: t.key.clone(),
                n: t.n,
                observed,
                expected,
                share,
                z,
                p_value: p_value(z),
                significance: sig,
                ratio: rational_to_f64(&(Rational::from_integer(observed as i128) / expected)),
                color: assign_color(observed, &expected, sig),
                radius: rational_to_f64(&radius),
                point: points
                    .get(&t.key)
                    .cloned()
                    .unwrap_or_else(|| GeoPoint::failed("missing")),
            };
            (radius, stats)
        })
        .collect();
    rows.sort_by(|(ra, a), (rb, b)| rb.cmp(ra).then_with(|| a.key.cmp(&b.key)));
    rows.into_iter().map(|(_, s)| s).collect()
}
