//! Factors the modulus-field correlation over the centroids of both default
//! meshes and draws a few realizations.
//!
//! ```bash
//! cargo run -p merr --example grf_sample
//! ```

use std::time::Instant;

use merr::grf::{build_correlation_factor, sample_realization, GrfSpec, MaterialParams};
use merr::mesh::{build_mesh, ElementOrder};
use merr::rng;

fn main() -> merr::Result<()> {
    let q4 = build_mesh(ElementOrder::Q4, 20, 40)?;
    let q8 = build_mesh(ElementOrder::Q8, 40, 80)?;
    let spec = GrfSpec::for_meshes(MaterialParams::default(), &q4, &q8);

    let t = Instant::now();
    let factor = build_correlation_factor(&spec)?;
    println!(
        "factored {} points in {:.2}s (nugget {:e})",
        factor.dim(),
        t.elapsed().as_secs_f64(),
        factor.nugget()
    );

    for k in 0..4 {
        let r = sample_realization(&factor, &spec, &mut rng::stream(7, &[rng::tag::SAMPLE, k]))?;
        let (lo, hi) = r
            .e_q8
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &e| (a.min(e), b.max(e)));
        println!(
            "realization {k}: std={:.3e} Pa load={:.1} N/m  fine-mesh E in [{:.3e}, {:.3e}] Pa",
            r.std_used, r.load, lo, hi
        );
    }
    Ok(())
}
