//! Render the same city table as every overlay format.

use std::collections::BTreeMap;
use std::error::Error;

use excellence_map::address::{CityKey, CityTally};
use excellence_map::emit::{self, HtmlOptions};
use excellence_map::geocode::GeoPoint;
use excellence_map::stats::{city_table, StatsOptions};

fn main() -> Result<(), Box<dyn Error>> {
    let cities = [
        ("LONDON", "ENGLAND", 715, 147, 51.5074, -0.1278),
        ("BERLIN", "GERMANY", 194, 45, 52.52, 13.405),
        ("KIEV", "UKRAINE", 235, 1, 50.4501, 30.5234),
    ];
    let mut tallies = Vec::new();
    let mut points = BTreeMap::new();
    for (city, country, n, n_top, lat, lon) in cities {
        let key = CityKey::new(city, None, country);
        points.insert(key.clone(), GeoPoint::resolved(lat, lon, "example")?);
        tallies.push(CityTally {
            key,
            n,
            n_top,
            occurrences: n,
        });
    }
    let rows = city_table(&tallies, &StatsOptions::default(), &points);

    println!("{}", emit::emit_gpsviz(&rows).body);
    println!("{}", emit::emit_table(&rows).body);
    let geojson = emit::emit_geojson(&rows);
    println!(
        "GeoJSON: {} features, {} bytes",
        geojson.feature_count,
        geojson.body.len()
    );

    let html = emit::emit_html(&rows, &HtmlOptions::default());
    let path = std::env::temp_dir().join("excellence-map-example.html");
    std::fs::write(&path, html.body)?;
    println!("HTML map written to {}", path.display());
    Ok(())
}
