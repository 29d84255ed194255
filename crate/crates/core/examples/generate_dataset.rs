//! Generates a paired Q4/Q8 dataset into a binary file (resumable) and
//! prints the error-to-displacement scale ratio.
//!
//! ```bash
//! cargo run --release -p merr --example generate_dataset -- 200 /tmp/merr.bin
//! ```

use std::path::PathBuf;
use std::time::Instant;

use merr::dataset::{error_scale_ratio, generate_dataset_to, DatasetConfig};

fn main() -> merr::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let count: usize = args
        .next()
        .map_or(Ok(200), |s| s.parse())
        .expect("count must be an integer");
    let path = args.next().map_or_else(
        || std::env::temp_dir().join("merr_example.bin"),
        PathBuf::from,
    );

    let cfg = DatasetConfig {
        count,
        seed: 2024,
        ..Default::default()
    };
    let t = Instant::now();
    let ds = generate_dataset_to(&cfg, &path)?;
    println!(
        "samples={} path={} seconds={:.1}",
        ds.len(),
        path.display(),
        t.elapsed().as_secs_f64()
    );
    println!("median|e|/median|u_r|={:.4}", error_scale_ratio(&ds));
    let s = &ds.samples[0];
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    println!(
        "sample0 load={:.3e} std_used={:.3e} max|u_r|={:.3e} max|e|={:.3e}",
        s.load,
        s.std_used,
        max_abs(&s.u_r),
        max_abs(&s.e)
    );
    Ok(())
}
