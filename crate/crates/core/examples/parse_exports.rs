//! Parse and merge export files, then print the parse diagnostics.
//!
//! `cargo run --example parse_exports -- [EXPORT...]`

use std::error::Error;
use std::fs;
use std::path::PathBuf;

use excellence_map::record::merge_exports;

fn main() -> Result<(), Box<dyn Error>> {
    let mut paths: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
        paths.push(root.join("data/sample_export.txt"));
        paths.push(root.join("tests/fixtures/duplicate_ut.txt"));
        paths.push(root.join("tests/fixtures/truncated.txt"));
    }
    let inputs = paths.iter().map(fs::read).collect::<Result<Vec<_>, _>>()?;
    let merged = merge_exports(&inputs);
    let d = &merged.diagnostics;

    println!("records kept      {}", merged.records.len());
    println!("records parsed    {}", d.records_parsed);
    println!("records skipped   {}", d.records_skipped);
    println!("duplicates        {}", d.duplicates);
    println!("without address   {}", d.address_free);
    for w in &d.warnings {
        println!("warning: {w}");
    }
    if let Some(first) = merged.records.first() {
        println!(
            "\nfirst record {} ({} citations):",
            first.ut, first.times_cited
        );
        for a in &first.addresses {
            println!("  {a}");
        }
    }
    Ok(())
}
