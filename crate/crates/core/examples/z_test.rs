//! Test individual cities against the expected top share.

use std::collections::BTreeMap;

use excellence_map::address::{CityKey, CityTally};
use excellence_map::stats::{city_table, StatsOptions};

fn main() {
    let tallies = [
        ("KIEV", "UKRAINE", 235, 1),
        ("LONDON", "ENGLAND", 715, 147),
        ("BERLIN", "GERMANY", 194, 45),
        ("LEIDEN", "NETHERLANDS", 30, 5),
    ]
    .map(|(city, country, n, n_top)| CityTally {
        key: CityKey::new(city, None, country),
        n,
        n_top,
        occurrences: n,
    });
    let rows = city_table(&tallies, &StatsOptions::default(), &BTreeMap::new());
    println!(
        "{:<22} {:>5} {:>8} {:>8} {:>11} {:<14} {:>6}",
        "city", "n", "z", "p", "testable", "color", "radius"
    );
    for r in &rows {
        println!(
            "{:<22} {:>5} {:>8.3} {:>8.2e} {:>11} {:<14} {:>6}",
            r.key.to_string(),
            r.n,
            r.z,
            r.p_value,
            r.testable(),
            r.color.name(),
            r.radius
        );
        println!("    {}", r.label());
    }
}
