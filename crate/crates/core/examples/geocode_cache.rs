//! Resolve city keys from the bundled gazetteer through a persistent cache.

use std::collections::BTreeSet;
use std::error::Error;

use excellence_map::address::CityKey;
use excellence_map::geocode::{resolve_all, Gazetteer, GeoCache, ResolverOptions};

fn main() -> Result<(), Box<dyn Error>> {
    let mut gazetteer =
        Gazetteer::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/gazetteer.tsv").as_ref())?;
    let dir = tempfile::tempdir()?;
    let cache_path = dir.path().join("geocache.tsv");
    let keys: BTreeSet<CityKey> = [
        CityKey::new("BERLIN", None, "GERMANY"),
        CityKey::new("ATHENS", Some("GA"), "USA"),
        CityKey::new("ATHENS", None, "GREECE"),
        CityKey::new("TSUKUBA", None, "JAPAN"),
    ]
    .into();
    let options = ResolverOptions::default();

    let mut cache = GeoCache::open(&cache_path)?;
    let cold = resolve_all(&keys, &mut gazetteer, &mut cache, &options)?;
    for (key, p) in &cold.points {
        let status = if p.failed { "not found" } else { "ok" };
        println!(
            "{:<20} {:>9.4} {:>10.4}  {status}",
            key.to_string(),
            p.lat,
            p.lon
        );
    }
    println!(
        "cold pass: {} batches, {} cache hits",
        cold.batches, cold.cache_hits
    );

    let mut reopened = GeoCache::open(&cache_path)?;
    let warm = resolve_all(&keys, &mut gazetteer, &mut reopened, &options)?;
    println!(
        "warm pass: {} batches, {} cache hits",
        warm.batches, warm.cache_hits
    );
    Ok(())
}
