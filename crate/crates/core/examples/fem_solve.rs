//! Solves the quarter plate on the 20x40 Q4 and 40x80 Q8 meshes with a uniform
//! modulus and prints displacement magnitudes and solver statistics.
//!
//! ```bash
//! cargo run -p merr --example fem_solve
//! ```

use std::time::Instant;

use merr::fem::{ElasticSolver, POISSON_RATIO, THICKNESS};
use merr::mesh::{build_coincidence_map, build_mesh, restrict_field, ElementOrder};

fn main() -> merr::Result<()> {
    let q4 = build_mesh(ElementOrder::Q4, 20, 40)?;
    let q8 = build_mesh(ElementOrder::Q8, 40, 80)?;
    let traction = 2.5e5;

    let mut solutions = Vec::new();
    for mesh in [&q4, &q8] {
        let t = Instant::now();
        let solver = ElasticSolver::new(mesh, POISSON_RATIO, THICKNESS)?;
        let setup = t.elapsed();
        let moduli = vec![2.0e11; mesh.num_elements()];
        let t = Instant::now();
        let sol = solver.solve(&moduli, traction)?;
        let max_ux = sol.u.iter().step_by(2).fold(0.0f64, |m, v| m.max(v.abs()));
        println!(
            "{}: dofs={} free={} envelope={} setup={:.3}s solve={:.3}s residual={:.2e} max|u_x|={:.4e} m",
            mesh.order(),
            mesh.num_dofs(),
            solver.num_free_dofs(),
            solver.envelope_entries(),
            setup.as_secs_f64(),
            t.elapsed().as_secs_f64(),
            sol.relative_residual,
            max_ux
        );
        solutions.push(sol.u);
    }

    let map = build_coincidence_map(&q4, &q8)?;
    let fine_on_coarse = restrict_field(&solutions[1], &map, q8.num_nodes())?;
    let err: Vec<f64> = fine_on_coarse
        .iter()
        .zip(&solutions[0])
        .map(|(h, r)| h - r)
        .collect();
    let max_e = err.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("max |u_H - u_R| at coarse nodes = {max_e:.4e} m");
    Ok(())
}
