//! Trains on the `small` preset and writes the superresolved fine-mesh field
//! of one test sample next to the stored Q8 solution, plus SVG heatmaps.
//!
//! ```bash
//! cargo run --release -p merr --example superresolve
//! ```

use merr::config::RunConfig;
use merr::pipeline::{run_generate, run_superresolve, run_train};

fn main() -> merr::Result<()> {
    let mut cfg = RunConfig::preset("small")?;
    cfg.output_dir = std::env::temp_dir().join("merr_superresolve_example");
    cfg.train.max_epochs = 20;
    println!("{}", run_generate(&cfg)?);
    println!("{}", run_train(&cfg)?);
    println!("{}", run_superresolve(&cfg)?);
    println!("artifacts in {}", cfg.output_dir.join("superres").display());
    Ok(())
}
