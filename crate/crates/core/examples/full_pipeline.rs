//! Run every stage on the bundled sample export.
//!
//! `cargo run --example full_pipeline -- [OUT_DIR]`

use std::error::Error;
use std::path::PathBuf;

use excellence_map::pipeline::{run_pipeline, GeocoderChoice, PipelineConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let out_dir = match std::env::args_os().nth(1) {
        Some(dir) => PathBuf::from(dir),
        None => std::env::temp_dir().join("excellence-map-sample"),
    };
    let config = PipelineConfig {
        inputs: vec![data.join("sample_export.txt")],
        geocoder: GeocoderChoice::Gazetteer(data.join("gazetteer.tsv")),
        out_dir,
        ..Default::default()
    };
    let report = run_pipeline(&config)?;
    print!("{report}");
    Ok(())
}
