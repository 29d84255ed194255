//! MC-dropout uncertainty for one test sample of the `small` preset, with
//! the zero-rate control that must collapse to the deterministic output.
//!
//! ```bash
//! cargo run --release -p merr --example uncertainty
//! ```

use merr::config::RunConfig;
use merr::dataset::load_dataset;
use merr::model::{load_checkpoint, mc_dropout_predict};
use merr::pipeline::{run_generate, run_train, run_uncertainty, Layout};

fn main() -> merr::Result<()> {
    let mut cfg = RunConfig::preset("small")?;
    cfg.output_dir = std::env::temp_dir().join("merr_uncertainty_example");
    println!("{}", run_generate(&cfg)?);
    println!("{}", run_train(&cfg)?);
    println!("{}", run_uncertainty(&cfg)?);

    let layout = Layout::new(&cfg);
    let mut model = load_checkpoint::<f32>(&layout.checkpoint())?.model;
    let ds = load_dataset(&layout.dataset())?;
    model.set_dropout(0.0)?;
    let p = mc_dropout_predict(&model, &ds.samples[0].u_r, 200, 0)?;
    let max_std = p
        .std_error
        .iter()
        .chain(&p.std_super)
        .fold(0.0f64, |m, &v| m.max(v));
    println!("zero_rate_max_std={max_std:e}");
    Ok(())
}
