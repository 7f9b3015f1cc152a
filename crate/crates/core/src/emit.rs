//! Map overlays and the statistics table.
//!
//! Every emitter is a pure function of the city rows: the same input gives
//! byte-identical output. Cities whose geocoding failed are left out of the
//! map formats but kept in the table.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::Ratio;
use serde::Serialize;

use crate::address::CityKey;
use crate::geocode::GeoPoint;
use crate::stats::{CityStats, Color, Rational, Share, Significance};

/// Largest circle radius on the rendered maps, in display units.
pub const MAX_DISPLAY_RADIUS: f64 = 30.0;

pub const DEFAULT_GPSVIZ_FILE: &str = "ztest.txt";
pub const DEFAULT_GEOJSON_FILE: &str = "cities.geojson";
pub const DEFAULT_TABLE_FILE: &str = "ucities.csv";
pub const DEFAULT_HTML_FILE: &str = "map.html";

pub const TABLE_HEADER: [&str; 15] = [
    "city",
    "region",
    "country",
    "n",
    "observed",
    "expected",
    "ratio",
    "z",
    "p_value",
    "testable",
    "significant",
    "color",
    "radius",
    "lat",
    "lon",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OverlayFormat {
    GpsVisualizer,
    GeoJson,
    Table,
    Html,
}

impl OverlayFormat {
    pub const ALL: [OverlayFormat; 4] = [
        OverlayFormat::GpsVisualizer,
        OverlayFormat::GeoJson,
        OverlayFormat::Table,
        OverlayFormat::Html,
    ];

    pub fn default_file_name(self) -> &'static str {
        match self {
            Self::GpsVisualizer => DEFAULT_GPSVIZ_FILE,
            Self::GeoJson => DEFAULT_GEOJSON_FILE,
            Self::Table => DEFAULT_TABLE_FILE,
            Self::Html => DEFAULT_HTML_FILE,
        }
    }
}

impl fmt::Display for OverlayFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GpsVisualizer => "gpsviz",
            Self::GeoJson => "geojson",
            Self::Table => "table",
            Self::Html => "html",
        })
    }
}

impl FromStr for OverlayFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gpsviz" | "gps" | "ztest" => Ok(Self::GpsVisualizer),
            "geojson" | "json" => Ok(Self::GeoJson),
            "table" | "csv" | "ucities" => Ok(Self::Table),
            "html" | "map" => Ok(Self::Html),
            other => Err(format!(
                "unknown output format {other:?} (gpsviz|geojson|table|html)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayDocument {
    pub format: OverlayFormat,
    pub body: String,
    /// Cities drawn (rows, for the table).
    pub feature_count: usize,
}

fn mapped(stats: &[CityStats]) -> impl Iterator<Item = &CityStats> {
    stats.iter().filter(|s| !s.point.failed)
}

/// GPS Visualizer waypoint upload text.
///
/// Columns `name, desc, latitude, longitude, color, n`; `n` carries the
/// circle radius so it can be used as the custom resize field, with the
/// visualizer's maximum radius set to 30.
pub fn emit_gpsviz(stats: &[CityStats]) -> OverlayDocument {
    let mut body = String::from("name\tdesc\tlatitude\tlongitude\tcolor\tn\n");
    let mut count = 0;
    for s in mapped(stats) {
        count += 1;
        let _ = writeln!(
            body,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.key,
            s.label(),
            s.point.lat,
            s.point.lon,
            s.color.name(),
            s.radius
        );
    }
    let omitted = stats.len() - count;
    if omitted > 0 {
        let _ = writeln!(body, "# {omitted} cities omitted: geocoding failed");
    }
    OverlayDocument {
        format: OverlayFormat::GpsVisualizer,
        body,
        feature_count: count,
    }
}

fn round_to(value: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (value * scale).round() / scale
}

#[derive(Serialize)]
struct Properties<'a> {
    city: &'a str,
    region: Option<&'a str>,
    country: &'a str,
    n: u64,
    observed: u64,
    expected: f64,
    ratio: f64,
    z: f64,
    p_value: f64,
    significant: bool,
    color: &'static str,
    radius: f64,
}

impl<'a> Properties<'a> {
    fn of(s: &'a CityStats) -> Self {
        Self {
            city: &s.key.city,
            region: s.key.region.as_deref(),
            country: &s.key.country,
            n: s.n,
            observed: s.observed,
            // Same digits as the two-decimal display.
            expected: s.expected_display().parse().unwrap_or(f64::NAN),
            ratio: s.ratio_display().parse().unwrap_or(f64::NAN),
            z: round_to(s.z, 4),
            p_value: s.p_value,
            significant: s.significant(),
            color: s.color.hex(),
            radius: s.radius,
        }
    }
}

#[derive(Serialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: &'static str,
    coordinates: [f64; 2],
}

#[derive(Serialize)]
struct Feature<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    geometry: Geometry,
    properties: Properties<'a>,
}

#[derive(Serialize)]
struct FeatureCollection<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    features: Vec<Feature<'a>>,
}

fn feature(s: &CityStats) -> Feature<'_> {
    Feature {
        kind: "Feature",
        geometry: Geometry {
            kind: "Point",
            coordinates: [s.point.lon, s.point.lat],
        },
        properties: Properties::of(s),
    }
}

/// GeoJSON `FeatureCollection` of city points. Colors are hex codes.
pub fn emit_geojson(stats: &[CityStats]) -> OverlayDocument {
    let features: Vec<Feature> = mapped(stats).map(feature).collect();
    let count = features.len();
    let collection = FeatureCollection {
        kind: "FeatureCollection",
        features,
    };
    let mut body = serde_json::to_string_pretty(&collection).expect("plain data serializes");
    body.push('\n');
    OverlayDocument {
        format: OverlayFormat::GeoJson,
        body,
        feature_count: count,
    }
}

/// Comma-separated statistics table, one row per city including failed
/// geocodes (at `0,0`). `z` and `radius` are written at full precision and
/// `p_value` in exponent form, so [`parse_table`] recovers them exactly.
pub fn emit_table(stats: &[CityStats]) -> OverlayDocument {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(TABLE_HEADER).expect("in-memory write");
    for s in stats {
        writer
            .write_record([
                s.key.city.clone(),
                s.key.region.clone().unwrap_or_default(),
                s.key.country.clone(),
                s.n.to_string(),
                s.observed.to_string(),
                s.expected_display(),
                s.ratio_display(),
                s.z.to_string(),
                format!("{:e}", s.p_value),
                s.testable().to_string(),
                s.significant().to_string(),
                s.color.name().to_string(),
                s.radius.to_string(),
                s.point.lat.to_string(),
                s.point.lon.to_string(),
            ])
            .expect("in-memory write");
    }
    let body =
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input");
    OverlayDocument {
        format: OverlayFormat::Table,
        body,
        feature_count: stats.len(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("table row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("table header does not match the expected columns")]
    Header,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Reads a table written by [`emit_table`] back into city rows.
///
/// The expected count is recovered from its two-decimal rendering and the
/// ratio from its rounded column; both reproduce the same displayed values.
pub fn parse_table(text: &str) -> Result<Vec<CityStats>, TableError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(TABLE_HEADER.iter().copied()) {
        return Err(TableError::Header);
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        let err = |message: String| TableError::Row { row, message };
        let field = |i: usize| record.get(i).unwrap_or("");
        fn num<T: FromStr>(s: &str, name: &str) -> Result<T, String> {
            s.trim().parse().map_err(|_| format!("bad {name} {s:?}"))
        }
        let n: u64 = num(field(3), "n").map_err(err)?;
        let observed: u64 = num(field(4), "observed").map_err(err)?;
        let expected =
            parse_decimal(field(5)).ok_or_else(|| err(format!("bad expected {:?}", field(5))))?;
        let ratio: f64 = num(field(6), "ratio").map_err(err)?;
        let z: f64 = num(field(7), "z").map_err(err)?;
        let p_value: f64 = num(field(8), "p_value").map_err(err)?;
        let testable: bool = num(field(9), "testable").map_err(err)?;
        let significant: bool = num(field(10), "significant").map_err(err)?;
        let color: Color = field(11).parse().map_err(err)?;
        let radius: f64 = num(field(12), "radius").map_err(err)?;
        let lat: f64 = num(field(13), "lat").map_err(err)?;
        let lon: f64 = num(field(14), "lon").map_err(err)?;
        let significance = match (testable, significant) {
            (false, false) => Significance::NotTestable,
            (true, false) => Significance::NotSignificant,
            (true, true) => Significance::Significant,
            (false, true) => return Err(err("significant but not testable".into())),
        };
        if n == 0 || expected <= Rational::from_integer(0) {
            return Err(err("n and expected must be positive".into()));
        }
        let share = Share::from_ratio(expected / Rational::from_integer(n as i128))
            .map_err(|e| err(e.to_string()))?;
        let region = Some(field(1)).filter(|r| !r.is_empty());
        let point =
            GeoPoint::from_coordinates(lat, lon, "table").map_err(|e| err(e.to_string()))?;
        rows.push(CityStats {
            key: CityKey::new(field(0), region, field(2)),
            n,
            observed,
            expected,
            share,
            z,
            p_value,
            significance,
            ratio,
            color,
            radius,
            point,
        });
    }
    Ok(rows)
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let numer: i128 = format!("{int}{frac}").parse().ok()?;
    let value = Ratio::new(numer, 10i128.checked_pow(frac.len() as u32)?);
    Some(if neg { -value } else { value })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlOptions {
    pub title: String,
    /// Slippy-map tile template with `{z}`, `{x}`, `{y}` placeholders. `None`
    /// draws the circles on a blank canvas with a lat/lon grid.
    pub tile_url: Option<String>,
}

impl Default for HtmlOptions {
    fn default() -> Self {
        Self {
            title: "Cities with more top-cited papers than expected".into(),
            tile_url: None,
        }
    }
}

/// Circle radius on screen: linear in the statistical radius, the largest
/// city drawn at [`MAX_DISPLAY_RADIUS`], never below one unit.
pub fn display_radii(stats: &[CityStats]) -> Vec<f64> {
    let max = mapped(stats).map(|s| s.radius).fold(0.0, f64::max);
    stats
        .iter()
        .map(|s| {
            if max > 0.0 {
                (s.radius / max * MAX_DISPLAY_RADIUS).max(1.0)
            } else {
                1.0
            }
        })
        .collect()
}

const TILE_ZOOM: u32 = 2;
const WORLD_PX: f64 = 256.0 * (1 << TILE_ZOOM) as f64;
const MAX_MERCATOR_LAT: f64 = 85.051_128_78;

fn project(lat: f64, lon: f64) -> (f64, f64) {
    let lat = lat.clamp(-MAX_MERCATOR_LAT, MAX_MERCATOR_LAT).to_radians();
    let x = (lon + 180.0) / 360.0 * WORLD_PX;
    let y = (1.0 - (lat.tan() + 1.0 / lat.cos()).ln() / std::f64::consts::PI) / 2.0 * WORLD_PX;
    (x, y)
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Serialize)]
struct HtmlCity<'a> {
    name: String,
    label: String,
    #[serde(flatten)]
    properties: Properties<'a>,
    lat: f64,
    lon: f64,
    display_radius: f64,
}

/// One self-contained HTML page: inline SVG circles in Web Mercator, the
/// city data embedded as JSON, and a click popup with the label. Needs no
/// network access unless a tile layer is configured.
pub fn emit_html(stats: &[CityStats], options: &HtmlOptions) -> OverlayDocument {
    let radii = display_radii(stats);
    let cities: Vec<(HtmlCity, (f64, f64))> = stats
        .iter()
        .zip(&radii)
        .filter(|(s, _)| !s.point.failed)
        .map(|(s, &r)| {
            (
                HtmlCity {
                    name: s.key.to_string(),
                    label: s.label(),
                    properties: Properties::of(s),
                    lat: s.point.lat,
                    lon: s.point.lon,
                    display_radius: round_to(r, 4),
                },
                project(s.point.lat, s.point.lon),
            )
        })
        .collect();

    let title = escape_html(&options.title);
    let mut svg = String::new();
    match &options.tile_url {
        Some(template) => {
            let tiles = 1u32 << TILE_ZOOM;
            for x in 0..tiles {
                for y in 0..tiles {
                    let url = template
                        .replace("{z}", &TILE_ZOOM.to_string())
                        .replace("{x}", &x.to_string())
                        .replace("{y}", &y.to_string());
                    let _ = writeln!(
                        svg,
                        r#"<image href="{}" x="{}" y="{}" width="256" height="256"/>"#,
                        escape_html(&url),
                        x * 256,
                        y * 256
                    );
                }
            }
        }
        None => {
            let _ = writeln!(
                svg,
                r##"<rect width="{WORLD_PX}" height="{WORLD_PX}" fill="#f4f6f8"/>"##
            );
            for lon in (-180..=180).step_by(30) {
                let (x, _) = project(0.0, f64::from(lon));
                let _ = writeln!(
                    svg,
                    r##"<line x1="{x:.2}" y1="0" x2="{x:.2}" y2="{WORLD_PX}" stroke="#d0d4d8" stroke-width="0.5"/>"##
                );
            }
            for lat in (-60..=60).step_by(30) {
                let (_, y) = project(f64::from(lat), 0.0);
                let _ = writeln!(
                    svg,
                    r##"<line x1="0" y1="{y:.2}" x2="{WORLD_PX}" y2="{y:.2}" stroke="#d0d4d8" stroke-width="0.5"/>"##
                );
            }
        }
    }
    // Big circles first so small ones stay clickable.
    let mut order: Vec<usize> = (0..cities.len()).collect();
    order.sort_by(|&a, &b| {
        cities[b]
            .0
            .display_radius
            .total_cmp(&cities[a].0.display_radius)
            .then(a.cmp(&b))
    });
    for idx in order {
        let (city, (x, y)) = &cities[idx];
        let _ = writeln!(
            svg,
            r#"<circle data-idx="{idx}" cx="{x:.2}" cy="{y:.2}" r="{}" fill="{}" fill-opacity="0.6" stroke="{}" stroke-width="1"><title>{}: {}</title></circle>"#,
            city.display_radius,
            city.properties.color,
            city.properties.color,
            escape_html(&city.name),
            escape_html(&city.label)
        );
    }

    let data: Vec<&HtmlCity> = cities.iter().map(|(c, _)| c).collect();
    let json = serde_json::to_string(&data)
        .expect("plain data serializes")
        .replace("</", "<\\/");

    let mut legend = String::new();
    for c in Color::ALL {
        let _ = write!(
            legend,
            r#"<span><i style="background:{}"></i>{}</span>"#,
            c.hex(),
            legend_text(c)
        );
    }

    let body = format!(
        r##"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ margin: 0; font: 14px sans-serif; }}
header {{ padding: 8px 12px; background: #263238; color: #fff; }}
#legend span {{ margin-right: 12px; white-space: nowrap; }}
#legend i {{ display: inline-block; width: 10px; height: 10px; border-radius: 5px; margin-right: 4px; }}
#map {{ width: 100%; height: calc(100vh - 64px); background: #e8ecef; cursor: grab; }}
#popup {{ position: absolute; display: none; background: #fff; border: 1px solid #888; padding: 6px 8px; border-radius: 4px; box-shadow: 0 2px 6px rgba(0,0,0,.3); pointer-events: none; }}
circle {{ cursor: pointer; }}
</style>
</head>
<body>
<header><strong>{title}</strong> &middot; {count} cities &middot; <span id="legend">{legend}</span></header>
<svg id="map" xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WORLD_PX} {WORLD_PX}" preserveAspectRatio="xMidYMid meet">
<g id="layer">
{svg}</g>
</svg>
<div id="popup"></div>
<script type="application/json" id="city-data">{json}</script>
<script>
(function () {{
  var cities = JSON.parse(document.getElementById('city-data').textContent);
  var svg = document.getElementById('map');
  var popup = document.getElementById('popup');
  var view = {{ x: 0, y: 0, w: {WORLD_PX}, h: {WORLD_PX} }};
  function apply() {{ svg.setAttribute('viewBox', view.x + ' ' + view.y + ' ' + view.w + ' ' + view.h); }}
  svg.addEventListener('click', function (ev) {{
    var idx = ev.target.getAttribute && ev.target.getAttribute('data-idx');
    if (idx === null || idx === undefined) {{ popup.style.display = 'none'; return; }}
    var c = cities[+idx];
    popup.textContent = '';
    var b = document.createElement('b');
    b.textContent = c.name;
    popup.appendChild(b);
    popup.appendChild(document.createElement('br'));
    popup.appendChild(document.createTextNode(c.label));
    popup.style.left = (ev.pageX + 12) + 'px';
    popup.style.top = (ev.pageY + 12) + 'px';
    popup.style.display = 'block';
  }});
  svg.addEventListener('wheel', function (ev) {{
    ev.preventDefault();
    var f = ev.deltaY < 0 ? 0.8 : 1.25;
    var r = svg.getBoundingClientRect();
    var px = view.x + (ev.clientX - r.left) / r.width * view.w;
    var py = view.y + (ev.clientY - r.top) / r.height * view.h;
    view.w *= f; view.h *= f;
    view.x = px - (px - view.x) * f; view.y = py - (py - view.y) * f;
    apply();
  }}, {{ passive: false }});
  var drag = null;
  svg.addEventListener('mousedown', function (ev) {{ drag = {{ x: ev.clientX, y: ev.clientY }}; }});
  window.addEventListener('mouseup', function () {{ drag = null; }});
  window.addEventListener('mousemove', function (ev) {{
    if (!drag) return;
    var r = svg.getBoundingClientRect();
    view.x -= (ev.clientX - drag.x) / r.width * view.w;
    view.y -= (ev.clientY - drag.y) / r.height * view.h;
    drag = {{ x: ev.clientX, y: ev.clientY }};
    apply();
  }});
}})();
</script>
</body>
</html>
"##,
        count = cities.len(),
    );
    OverlayDocument {
        format: OverlayFormat::Html,
        body,
        feature_count: cities.len(),
    }
}

fn legend_text(c: Color) -> &'static str {
    match c {
        Color::DarkGreen => "above, significant",
        Color::LightGreen => "above, not significant",
        Color::LimeGreen => "above, not testable",
        Color::Grey => "as expected",
        Color::Orange => "below, not testable",
        Color::OrangeRed => "below, not significant",
        Color::Red => "below, significant",
    }
}
