mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use excellence_map::record::{merge_exports, parse_export};

const CITIES: [&str; 6] = [
    "Univ Coll London, Dept Psychol, London WC1E 6BT, England.",
    "Humboldt Univ, Inst Psychol, D-10099 Berlin, Germany.",
    "Univ Georgia, Dept Psychol, Athens, GA 30602 USA.",
    "Univ Sydney, Sch Psychol, Sydney, NSW 2006, Australia.",
    "Univ Tokyo, Dept Psychol, Tokyo 1130033, Japan.",
    "Natl Acad Sci Ukraine, Inst Psychol, UA-01033 Kiev, Ukraine.",
];

fn synthetic(prefix: &str, count: usize, seed: u64) -> Vec<(String, u64, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n_addr = rng.gen_range(0..4);
            let addresses = (0..n_addr)
                .map(|_| format!("[Author, A] {}", CITIES[rng.gen_range(0..CITIES.len())]))
                .collect();
            (format!("{prefix}{i:09}"), rng.gen_range(0..500), addresses)
        })
        .collect()
}

#[test]
fn package_corpus_parses_to_generator_count() {
    // 20 packages of 500 records plus one of 460
    let mut packages = Vec::new();
    let mut expected = BTreeSet::new();
    for p in 0..21 {
        let size = if p < 20 { 500 } else { 460 };
        let records = synthetic(&format!("WOS:P{p:02}"), size, p as u64);
        expected.extend(records.iter().map(|r| r.0.clone()));
        packages.push(common::export_text(&records));
    }
    let merged = merge_exports(&packages);
    assert_eq!(expected.len(), 10_460);
    assert_eq!(merged.records.len(), 10_460);
    assert_eq!(merged.diagnostics.records_parsed, 10_460);
    assert_eq!(merged.diagnostics.records_skipped, 0);
    assert_eq!(merged.diagnostics.duplicates, 0);
    let got: BTreeSet<String> = merged.records.iter().map(|r| r.ut.clone()).collect();
    assert_eq!(got, expected);
}

#[test]
fn disjoint_files_add_up() {
    let a = common::export_text(&synthetic("A", 3, 1));
    let b = common::export_text(&synthetic("B", 4, 2));
    assert_eq!(merge_exports([&a, &b]).records.len(), 7);
}

#[test]
fn shared_identifier_is_dropped_once() {
    let a = synthetic("A", 3, 1);
    let mut b = synthetic("B", 4, 2);
    b[2].0 = a[0].0.clone();
    let merged = merge_exports([common::export_text(&a), common::export_text(&b)]);
    assert_eq!(merged.records.len(), 6);
    assert_eq!(merged.diagnostics.duplicates, 1);
    let dup_warnings = merged
        .diagnostics
        .warnings
        .iter()
        .filter(|w| w.message.contains("duplicate"))
        .count();
    assert_eq!(dup_warnings, 1);
    // first occurrence wins
    let kept = merged.records.iter().find(|r| r.ut == a[0].0).unwrap();
    assert_eq!(kept.times_cited, a[0].1);
}

#[test]
fn skipped_records_are_counted() {
    let text = "FN x\nVR 1.0\nPT J\nTC 3\nER\nPT J\nUT WOS:1\nER\nPT J\nUT WOS:2\nTC many\nER\nPT J\nUT WOS:3\nTC 1\nER\nEF\n";
    let parsed = parse_export(text.as_bytes());
    assert_eq!(parsed.records.len(), 1);
    assert_eq!(parsed.diagnostics.records_skipped, 3);
    assert_eq!(
        parsed.diagnostics.records_parsed + parsed.diagnostics.records_skipped,
        common::count_er(text.as_bytes())
    );
}

fn arb_record() -> impl Strategy<Value = (u64, Vec<String>)> {
    (
        0u64..1000,
        prop::collection::vec(prop::sample::select(CITIES.to_vec()), 0..4),
    )
        .prop_map(|(tc, cities)| {
            let addresses = cities.into_iter().map(|c| format!("[X, Y] {c}")).collect();
            (tc, addresses)
        })
}

fn arb_export() -> impl Strategy<Value = Vec<(String, u64, Vec<String>)>> {
    prop::collection::vec((0u32..40, arb_record()), 0..25).prop_map(|rows| {
        rows.into_iter()
            .map(|(id, (tc, addresses))| (format!("WOS:{id:05}"), tc, addresses))
            .collect()
    })
}

proptest! {
    #[test]
    fn merging_a_file_with_itself_changes_nothing(records in arb_export()) {
        let text = common::export_text(&records);
        let once = merge_exports([&text]);
        let twice = merge_exports([&text, &text]);
        prop_assert_eq!(once.records, twice.records);
    }

    #[test]
    fn merged_ids_are_the_union(a in arb_export(), b in arb_export()) {
        let (ta, tb) = (common::export_text(&a), common::export_text(&b));
        let merged = merge_exports([&ta, &tb]);
        let got: BTreeSet<String> = merged.records.iter().map(|r| r.ut.clone()).collect();
        let want: BTreeSet<String> = a.iter().chain(&b).map(|r| r.0.clone()).collect();
        prop_assert_eq!(got.len(), merged.records.len());
        prop_assert_eq!(got, want);
    }

    #[test]
    fn every_address_lands_in_exactly_one_record(records in arb_export()) {
        let text = common::export_text(&records);
        let parsed = parse_export(text.as_bytes());
        prop_assert_eq!(parsed.records.len(), records.len());
        for ((_, _, addresses), record) in records.iter().zip(&parsed.records) {
            prop_assert_eq!(addresses, &record.addresses);
        }
        prop_assert_eq!(
            parsed.diagnostics.records_parsed + parsed.diagnostics.records_skipped,
            common::count_er(text.as_bytes())
        );
    }
}
