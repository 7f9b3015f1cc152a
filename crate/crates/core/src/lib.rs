//! Which cities publish more top-cited papers than expected?
//!
//! The crate reads field-tagged bibliographic exports, locates every paper in
//! the cities of its author addresses, marks the top share of papers by
//! citation count (ties at the cutoff included), and tests each city's
//! observed number of top papers against the number its total output would
//! predict. Results come out as a statistics table and as map overlays whose
//! circle color encodes direction and significance and whose size encodes
//! the gap between observed and expected.
//!
//! ```
//! use std::collections::BTreeMap;
//! use excellence_map::{address::{CityKey, CityTally}, stats};
//!
//! let london = CityTally {
//!     key: CityKey::new("London", None, "England"),
//!     n: 715,
//!     n_top: 147,
//!     occurrences: 715,
//! };
//! let rows = stats::city_table(&[london], &Default::default(), &BTreeMap::new());
//! assert_eq!(rows[0].label(), "obs: 147, exp: 71.50, ratio: 2.06*");
//! assert_eq!(rows[0].color, stats::Color::DarkGreen);
//! ```
//!
//! Runnable walkthroughs live in `examples/`; the `excellence-map` binary
//! exposes the same pipeline as `parse`, `geocode`, `stats`, `map` and `run`.

pub mod address;
pub mod emit;
pub mod geocode;
pub mod pipeline;
pub mod record;
pub mod stats;

pub use address::{CityKey, CityTally, CountMode};
pub use emit::{OverlayDocument, OverlayFormat};
pub use geocode::GeoPoint;
pub use pipeline::{run_pipeline, PipelineConfig, RunReport};
pub use record::{ParseDiagnostics, Record};
pub use stats::{CityStats, Color, Share, Significance, ThresholdResult};
