//! Find the top-cited cutoff, including every paper tied at the cutoff.

use std::error::Error;

use excellence_map::stats::{citation_threshold, rational_to_f64, Share};

fn main() -> Result<(), Box<dyn Error>> {
    let citations = [
        95, 40, 40, 40, 40, 40, 40, 31, 12, 12, 8, 8, 8, 3, 2, 1, 0, 0, 0, 0,
    ];
    for share in ["10%", "0.2", "1/4", "50%"] {
        let share: Share = share.parse()?;
        let t = citation_threshold(&citations, share)?;
        println!(
            "share {:>4}: need {:>2} of {}, cutoff {:>2} citations, top set {:>2} (realized {:.3})",
            share.to_string(),
            t.min_top,
            t.total,
            t.cutoff,
            t.top_count,
            rational_to_f64(&t.realized_share()),
        );
    }
    Ok(())
}
