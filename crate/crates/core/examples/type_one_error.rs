//! Rejection rate of the city test for a city that exactly matches the
//! expected share: exact binomial sum and a seeded simulation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use excellence_map::address::{CityKey, CityTally};
use excellence_map::stats::{city_table, StatsOptions};

const N: u64 = 100;
const P: f64 = 0.1;

fn significant(n_top: u64) -> bool {
    let t = CityTally {
        key: CityKey::new("SIM", None, "TESTLAND"),
        n: N,
        n_top,
        occurrences: N,
    };
    city_table(&[t], &StatsOptions::default(), &BTreeMap::new())[0].significant()
}

fn main() {
    let mut exact = 0.0;
    let mut log_pmf = (N as f64) * (1.0 - P).ln();
    for k in 0..=N {
        if k > 0 {
            log_pmf += ((N - k + 1) as f64 / k as f64).ln() + (P / (1.0 - P)).ln();
        }
        if significant(k) {
            exact += log_pmf.exp();
        }
    }
    let low = (0..=N).take_while(|&k| significant(k)).last().unwrap_or(0);
    let high = (0..=N)
        .rev()
        .take_while(|&k| significant(k))
        .last()
        .unwrap_or(N);
    println!("rejection region: k <= {low} or k >= {high}");
    println!("exact rate:     {exact:.6}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let binomial = Binomial::new(N, P).expect("valid parameters");
    let trials = 20_000;
    let hits = (0..trials)
        .filter(|_| significant(binomial.sample(&mut rng)))
        .count();
    println!(
        "simulated rate: {:.6} ({trials} trials)",
        hits as f64 / trials as f64
    );
}
