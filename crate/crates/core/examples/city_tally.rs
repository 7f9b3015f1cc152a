//! Turn raw addresses into city keys and count papers per city.

use std::collections::HashSet;
use std::error::Error;
use std::fs;

use excellence_map::address::{self, normalize_city, CountMode};
use excellence_map::record::parse_export;

fn main() -> Result<(), Box<dyn Error>> {
    for raw in [
        "[Smith, J] Univ Georgia, Dept Psychol, Athens, GA 30602 USA.",
        "Ohio Univ, Dept Phys, Athens, OH 45701 USA.",
        "Univ Sydney, Sch Psychol, Sydney, NSW 2006, Australia.",
        "Humboldt Univ, Inst Psychol, D-10099 Berlin, Germany.",
        "Univ Toronto, Dept Psychol, Toronto, ON M5S 3G3, Canada.",
    ] {
        println!("{:<28} <- {raw}", normalize_city(raw)?.to_string());
    }

    let bytes = fs::read(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/sample_export.txt"
    ))?;
    let corpus = parse_export(&bytes).records;
    // mark every paper cited 40 times or more as top
    let top: HashSet<String> = corpus
        .iter()
        .filter(|r| r.times_cited >= 40)
        .map(|r| r.ut.clone())
        .collect();

    println!(
        "\n{:<28} {:>6} {:>6} {:>11}",
        "city", "papers", "top", "occurrences"
    );
    let by_paper = address::tally(&corpus, &top, CountMode::Paper);
    let by_occurrence = address::tally(&corpus, &top, CountMode::Occurrence);
    for (p, o) in by_paper.iter().zip(&by_occurrence) {
        println!(
            "{:<28} {:>6} {:>6} {:>11}",
            p.key.to_string(),
            p.n,
            p.n_top,
            o.n
        );
    }
    Ok(())
}
