use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;

use excellence_map::address::{tally, CityKey, CountMode};
use excellence_map::record::Record;

/// Address templates with the key each one must produce.
const TEMPLATES: [(&str, &str, Option<&str>, &str); 8] = [
    (
        "Univ Coll London, Dept Psychol, London WC1E 6BT, England.",
        "LONDON",
        None,
        "ENGLAND",
    ),
    (
        "Kings Coll London, Inst Psychiat, London SE5 8AF, England.",
        "LONDON",
        None,
        "ENGLAND",
    ),
    (
        "Humboldt Univ, Inst Psychol, D-10099 Berlin, Germany.",
        "BERLIN",
        None,
        "GERMANY",
    ),
    (
        "Univ Georgia, Dept Psychol, Athens, GA 30602 USA.",
        "ATHENS",
        Some("GA"),
        "USA",
    ),
    (
        "Ohio Univ, Dept Phys, Athens, OH 45701 USA.",
        "ATHENS",
        Some("OH"),
        "USA",
    ),
    (
        "Harvard Univ, Dept Psychol, Cambridge, MA 02138 USA.",
        "CAMBRIDGE",
        Some("MA"),
        "USA",
    ),
    (
        "Univ Cambridge, Dept Psychol, Cambridge CB2 3EB, England.",
        "CAMBRIDGE",
        None,
        "ENGLAND",
    ),
    (
        "Univ Sydney, Sch Psychol, Sydney, NSW 2006, Australia.",
        "SYDNEY",
        Some("NSW"),
        "AUSTRALIA",
    ),
];

fn expected_key(template: usize) -> CityKey {
    let (_, city, region, country) = TEMPLATES[template];
    CityKey::new(city, region, country)
}

fn arb_corpus() -> impl Strategy<Value = Vec<(Vec<usize>, bool)>> {
    prop::collection::vec(
        (
            prop::collection::vec(0..TEMPLATES.len(), 0..5),
            any::<bool>(),
        ),
        0..30,
    )
}

fn build(corpus: &[(Vec<usize>, bool)]) -> (Vec<Record>, HashSet<String>) {
    let mut records = Vec::new();
    let mut top = HashSet::new();
    for (i, (templates, is_top)) in corpus.iter().enumerate() {
        let ut = format!("R{i}");
        if *is_top {
            top.insert(ut.clone());
        }
        records.push(Record {
            ut,
            doc_type: "Article".into(),
            pub_year: None,
            times_cited: 0,
            addresses: templates
                .iter()
                .map(|&t| format!("[Author, A] {}", TEMPLATES[t].0))
                .collect(),
            extras: BTreeMap::new(),
        });
    }
    (records, top)
}

proptest! {
    #[test]
    fn paper_counts_match_recount(corpus in arb_corpus()) {
        let (records, top) = build(&corpus);
        let mut n = BTreeMap::<CityKey, u64>::new();
        let mut n_top = BTreeMap::<CityKey, u64>::new();
        for (templates, is_top) in &corpus {
            let cities: BTreeSet<CityKey> = templates.iter().map(|&t| expected_key(t)).collect();
            for c in cities {
                *n.entry(c.clone()).or_default() += 1;
                if *is_top {
                    *n_top.entry(c).or_default() += 1;
                }
            }
        }

        let tallies = tally(&records, &top, CountMode::Paper);
        let got: BTreeMap<CityKey, u64> = tallies.iter().map(|t| (t.key.clone(), t.n)).collect();
        prop_assert_eq!(&got, &n);
        for t in &tallies {
            prop_assert_eq!(t.n_top, n_top.get(&t.key).copied().unwrap_or(0));
            prop_assert!(t.n_top <= t.n);
            prop_assert!(t.n <= t.occurrences);
            prop_assert!(t.n <= records.len() as u64);
        }

        let with_address = corpus.iter().filter(|(t, _)| !t.is_empty()).count() as u64;
        let spans_two = corpus.iter().any(|(t, _)| {
            t.iter().map(|&i| expected_key(i)).collect::<BTreeSet<_>>().len() > 1
        });
        let total: u64 = tallies.iter().map(|t| t.n).sum();
        prop_assert!(total >= with_address);
        prop_assert_eq!(total == with_address, !spans_two);
    }

    #[test]
    fn occurrence_counts_distinct_addresses(corpus in arb_corpus()) {
        let (records, top) = build(&corpus);
        let mut n = BTreeMap::<CityKey, u64>::new();
        for (templates, _) in &corpus {
            let distinct: BTreeSet<usize> = templates.iter().copied().collect();
            for t in distinct {
                *n.entry(expected_key(t)).or_default() += 1;
            }
        }
        let tallies = tally(&records, &top, CountMode::Occurrence);
        let got: BTreeMap<CityKey, u64> = tallies.iter().map(|t| (t.key.clone(), t.n)).collect();
        prop_assert_eq!(got, n);
        prop_assert_eq!(tally(&records, &top, CountMode::Occurrence), tallies);
    }
}
