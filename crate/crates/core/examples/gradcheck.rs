//! Finite-difference gradient check of every layer kind and of a
//! width-reduced model with the full 1,722-wide input and 19,682-wide
//! super head.
//!
//! ```bash
//! cargo run --release -p merr --example gradcheck
//! ```

use merr::mesh::{build_mesh, ElementOrder};
use merr::model::{ModelConfig, ModelDims};
use merr::pipeline::{gradcheck_suite, GRADCHECK_ENTRIES};

fn main() -> merr::Result<()> {
    let q4 = build_mesh(ElementOrder::Q4, 20, 40)?;
    let q8 = build_mesh(ElementOrder::Q8, 40, 80)?;
    let cfg = ModelConfig {
        hidden_error: 16,
        hidden_super: 16,
        ..Default::default()
    };
    let dims = ModelDims::new(&cfg, q4.num_dofs(), q8.num_dofs());
    let rep = gradcheck_suite(dims, 0, GRADCHECK_ENTRIES)?;
    for e in &rep.entries {
        let mark = if e.worst < e.tolerance { "ok" } else { "FAIL" };
        println!(
            "{:<16} worst={:.3e} tol={:.0e} checked={} skipped={} {mark}",
            e.name, e.worst, e.tolerance, e.checked, e.skipped
        );
    }
    println!("worst={:.3e} passed={}", rep.worst(), rep.passed());
    Ok(())
}
