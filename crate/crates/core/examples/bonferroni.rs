//! Compare per-city significance with and without a Bonferroni correction.

use std::collections::BTreeMap;

use excellence_map::address::{CityKey, CityTally};
use excellence_map::stats::{city_table, per_test_level, StatsOptions};

fn main() {
    println!("0.05 over 90 tests: {:.4}", per_test_level(0.05, Some(90)));

    let tallies: Vec<CityTally> = (0..90u64)
        .map(|i| CityTally {
            key: CityKey::new(&format!("CITY{i:02}"), None, "TESTLAND"),
            n: 100,
            n_top: 8 + i % 18,
            occurrences: 100,
        })
        .collect();
    let plain = StatsOptions::default();
    let corrected = StatsOptions {
        bonferroni: true,
        ..plain
    };
    let count = |options: &StatsOptions| {
        city_table(&tallies, options, &BTreeMap::new())
            .iter()
            .filter(|r| r.significant())
            .count()
    };
    println!("significant at 0.05:           {}", count(&plain));
    println!("significant after correction:  {}", count(&corrected));
}
