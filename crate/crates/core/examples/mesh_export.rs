//! Builds a Q4 or Q8 quarter-plate mesh, checks the coarse/fine node
//! coincidence and writes the plain-text export.
//!
//! ```bash
//! cargo run -p merr --example mesh_export -- q8 40x80 /tmp/q8.txt
//! ```

use std::path::PathBuf;

use merr::mesh::{build_coincidence_map, build_mesh, ElementOrder};
use merr::pipeline::{parse_grid, parse_order, run_mesh};

fn main() -> merr::Result<()> {
    let mut args = std::env::args().skip(1);
    let order = parse_order(&args.next().unwrap_or_else(|| "q4".into()))?;
    let grid = parse_grid(&args.next().unwrap_or_else(|| "20x40".into()))?;
    let path = args
        .next()
        .map_or_else(|| std::env::temp_dir().join("merr_mesh.txt"), PathBuf::from);

    println!(
        "{} path={}",
        run_mesh(order, grid, Some(&path))?,
        path.display()
    );

    let mesh = build_mesh(order, grid[0], grid[1])?;
    let b = mesh.boundary();
    println!(
        "hole_nodes={} symmetry_x={} symmetry_y={} loaded_edges={}",
        b.hole_boundary.len(),
        b.symmetry_x_axis.len(),
        b.symmetry_y_axis.len(),
        b.loaded_edge.len()
    );
    let worst_det = (0..mesh.num_elements())
        .map(|e| mesh.min_jacobian_det(e))
        .fold(f64::INFINITY, f64::min);
    println!("min_jacobian_det={worst_det:.3e}");

    let coarse = build_mesh(ElementOrder::Q4, grid[0], grid[1])?;
    let fine = build_mesh(ElementOrder::Q8, 2 * grid[0], 2 * grid[1])?;
    let map = build_coincidence_map(&coarse, &fine)?;
    println!("coincident_pairs={}", map.q4_to_q8.len());
    Ok(())
}
