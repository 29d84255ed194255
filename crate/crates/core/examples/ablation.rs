//! Runs the loss-composition ablation on the `small` preset: generates a
//! tiny dataset, trains the three cases from the same initial weights and
//! prints the table written to `ablation/ablation.csv`.
//!
//! ```bash
//! cargo run --release -p merr --example ablation
//! ```

use merr::config::RunConfig;
use merr::pipeline::{run_ablate, run_generate};

fn main() -> merr::Result<()> {
    let mut cfg = RunConfig::preset("small")?;
    cfg.output_dir = std::env::temp_dir().join("merr_ablation_example");
    cfg.train.max_epochs = 12;
    println!("{}", run_generate(&cfg)?);
    println!("{}", run_ablate(&cfg)?);
    let table = std::fs::read_to_string(cfg.output_dir.join("ablation/ablation.csv"))?;
    print!("{table}");
    Ok(())
}
