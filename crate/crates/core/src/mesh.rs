//! Structured Q4/Q8 meshes of the quarter plate with a quarter-circular hole.
//!
//! The quarter domain is `[0, 1] × [0, 1]` minus the disc of radius 0.4 centred
//! at the origin. A single structured block covers it: circumferential index
//! `j` picks a ray at angle `(π/2)·j/n_c` leaving the hole, radial index `i`
//! interpolates linearly along that ray up to the point where it exits the
//! square. Every node therefore also carries grid parameters `(s, t) ∈ [0, 1]²`
//! (radial and circumferential fractions), which is how fields are moved
//! between nested grids.
//!
//! Node numbering is circumferential-major for corner nodes
//! (`j·(n_r + 1) + i`); Q8 midside nodes follow, sorted by the corner-index
//! pair of their edge. Element `e = j·n_r + i` lists its corners
//! counterclockwise, then (Q8 only) the midside nodes of edges 0-1, 1-2, 2-3,
//! 3-0.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const HOLE_RADIUS: f64 = 0.4;
pub const PLATE_HALF_WIDTH: f64 = 1.0;

/// Maximum distance at which two nodes are considered coincident.
pub const COINCIDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementOrder {
    Q4,
    Q8,
}

impl ElementOrder {
    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementOrder::Q4 => 4,
            ElementOrder::Q8 => 8,
        }
    }

    /// Points per direction of the full-integration Gauss rule.
    pub fn gauss_points(self) -> usize {
        match self {
            ElementOrder::Q4 => 2,
            ElementOrder::Q8 => 3,
        }
    }

    /// Reference coordinates of the element's local nodes.
    pub fn reference_nodes(self) -> &'static [[f64; 2]] {
        const REF: [[f64; 2]; 8] = [
            [-1.0, -1.0],
            [1.0, -1.0],
            [1.0, 1.0],
            [-1.0, 1.0],
            [0.0, -1.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [-1.0, 0.0],
        ];
        &REF[..self.nodes_per_element()]
    }

    /// Node count of an `n_radial × n_circumferential` grid.
    pub fn node_count(self, n_radial: usize, n_circumferential: usize) -> usize {
        let (m, n) = (n_radial, n_circumferential);
        match self {
            ElementOrder::Q4 => (m + 1) * (n + 1),
            ElementOrder::Q8 => (2 * m + 1) * (2 * n + 1) - m * n,
        }
    }
}

impl fmt::Display for ElementOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementOrder::Q4 => "Q4",
            ElementOrder::Q8 => "Q8",
        })
    }
}

impl FromStr for ElementOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q4" => Ok(ElementOrder::Q4),
            "q8" => Ok(ElementOrder::Q8),
            other => Err(Error::InvalidArgument(format!(
                "unknown element order `{other}`"
            ))),
        }
    }
}

/// Basis values and reference-space gradients at one point.
#[derive(Debug, Clone, Copy)]
pub struct ShapeFunctions {
    len: usize,
    values: [f64; 8],
    grads: [[f64; 2]; 8],
}

impl ShapeFunctions {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.len]
    }

    /// `[dN/dξ, dN/dη]` per node.
    pub fn gradients(&self) -> &[[f64; 2]] {
        &self.grads[..self.len]
    }
}

/// Q4 bilinear or Q8 serendipity basis at `(xi, eta)`.
pub fn shape_functions(order: ElementOrder, xi: f64, eta: f64) -> ShapeFunctions {
    let mut values = [0.0; 8];
    let mut grads = [[0.0; 2]; 8];
    let refs = order.reference_nodes();
    match order {
        ElementOrder::Q4 => {
            for (a, &[xa, ya]) in refs.iter().enumerate() {
                values[a] = 0.25 * (1.0 + xi * xa) * (1.0 + eta * ya);
                grads[a] = [0.25 * xa * (1.0 + eta * ya), 0.25 * ya * (1.0 + xi * xa)];
            }
        }
        ElementOrder::Q8 => {
            for (a, &[xa, ya]) in refs.iter().enumerate() {
                if a < 4 {
                    let (p, q) = (1.0 + xi * xa, 1.0 + eta * ya);
                    let r = xi * xa + eta * ya - 1.0;
                    values[a] = 0.25 * p * q * r;
                    grads[a] = [0.25 * xa * q * (r + p), 0.25 * ya * p * (r + q)];
                } else if xa == 0.0 {
                    values[a] = 0.5 * (1.0 - xi * xi) * (1.0 + eta * ya);
                    grads[a] = [-xi * (1.0 + eta * ya), 0.5 * ya * (1.0 - xi * xi)];
                } else {
                    values[a] = 0.5 * (1.0 + xi * xa) * (1.0 - eta * eta);
                    grads[a] = [0.5 * xa * (1.0 - eta * eta), -eta * (1.0 + xi * xa)];
                }
            }
        }
    }
    ShapeFunctions {
        len: order.nodes_per_element(),
        values,
        grads,
    }
}

/// Named boundary node and edge sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundarySets {
    /// Nodes on `y = 0` (u_y constrained).
    pub symmetry_x_axis: Vec<usize>,
    /// Nodes on `x = 0` (u_x constrained).
    pub symmetry_y_axis: Vec<usize>,
    /// Element edges on `x = 1`, ordered by increasing `y`. Each edge lists its
    /// nodes along the edge: 2 for Q4, 3 (end, midside, end) for Q8.
    pub loaded_edge: Vec<Vec<usize>>,
    pub hole_boundary: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    order: ElementOrder,
    n_radial: usize,
    n_circumferential: usize,
    nodes: Vec<[f64; 2]>,
    params: Vec<[f64; 2]>,
    connectivity: Vec<usize>,
    boundary: BoundarySets,
}

/// Point where the ray at circumferential fraction `j / n` leaves the hole and
/// where it exits the square. Special angles are evaluated exactly.
fn ray_endpoints(j: usize, n: usize) -> ([f64; 2], [f64; 2]) {
    let (cos, sin) = if j == 0 {
        (1.0, 0.0)
    } else if j == n {
        (0.0, 1.0)
    } else {
        let theta = FRAC_PI_2 * (j as f64 / n as f64);
        (theta.cos(), theta.sin())
    };
    let hole = [HOLE_RADIUS * cos, HOLE_RADIUS * sin];
    let exit = match (2 * j).cmp(&n) {
        std::cmp::Ordering::Less => [PLATE_HALF_WIDTH, PLATE_HALF_WIDTH * sin / cos],
        std::cmp::Ordering::Equal => [PLATE_HALF_WIDTH, PLATE_HALF_WIDTH],
        std::cmp::Ordering::Greater => [PLATE_HALF_WIDTH * cos / sin, PLATE_HALF_WIDTH],
    };
    (hole, exit)
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Builds the structured quarter-plate mesh.
pub fn build_mesh(order: ElementOrder, n_radial: usize, n_circumferential: usize) -> Result<Mesh> {
    if n_radial == 0 || n_circumferential == 0 {
        return Err(Error::InvalidArgument(format!(
            "mesh divisions must be positive, got {n_radial}x{n_circumferential}"
        )));
    }
    let (m, n) = (n_radial, n_circumferential);
    let corner = |i: usize, j: usize| j * (m + 1) + i;

    let mut nodes = Vec::with_capacity(order.node_count(m, n));
    let mut params = Vec::with_capacity(nodes.capacity());
    for j in 0..=n {
        let (hole, exit) = ray_endpoints(j, n);
        for i in 0..=m {
            let p = if i == 0 {
                hole
            } else if i == m {
                exit
            } else {
                lerp(hole, exit, i as f64 / m as f64)
            };
            nodes.push(p);
            params.push([i as f64 / m as f64, j as f64 / n as f64]);
        }
    }

    // Midside nodes keyed by their edge's sorted corner pair.
    let mut midside: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    if order == ElementOrder::Q8 {
        for j in 0..=n {
            for i in 0..=m {
                if i < m {
                    midside.insert((corner(i, j), corner(i + 1, j)), 0);
                }
                if j < n {
                    midside.insert((corner(i, j), corner(i, j + 1)), 0);
                }
            }
        }
        let base = nodes.len();
        for (rank, (&(a, b), slot)) in midside.iter_mut().enumerate() {
            *slot = base + rank;
            let mut p = lerp(nodes[a], nodes[b], 0.5);
            let on_hole = params[a][0] == 0.0 && params[b][0] == 0.0;
            if on_hole {
                let r = p[0].hypot(p[1]);
                p = [p[0] * HOLE_RADIUS / r, p[1] * HOLE_RADIUS / r];
            }
            nodes.push(p);
            params.push(lerp(params[a], params[b], 0.5));
        }
    }
    let mid = |a: usize, b: usize| midside[&(a.min(b), a.max(b))];

    let npe = order.nodes_per_element();
    let mut connectivity = Vec::with_capacity(m * n * npe);
    for j in 0..n {
        for i in 0..m {
            let c = [
                corner(i, j),
                corner(i + 1, j),
                corner(i + 1, j + 1),
                corner(i, j + 1),
            ];
            connectivity.extend_from_slice(&c);
            if order == ElementOrder::Q8 {
                connectivity.extend_from_slice(&[
                    mid(c[0], c[1]),
                    mid(c[1], c[2]),
                    mid(c[2], c[3]),
                    mid(c[3], c[0]),
                ]);
            }
        }
    }

    let mut mesh = Mesh {
        order,
        n_radial: m,
        n_circumferential: n,
        nodes,
        params,
        connectivity,
        boundary: BoundarySets::default(),
    };
    mesh.boundary = mesh.collect_boundary_sets();
    Ok(mesh)
}

impl Mesh {
    pub fn order(&self) -> ElementOrder {
        self.order
    }

    /// `(n_radial, n_circumferential)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.n_radial, self.n_circumferential)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.n_radial * self.n_circumferential
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Grid parameters `(s, t)` of every node.
    pub fn node_params(&self) -> &[[f64; 2]] {
        &self.params
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let npe = self.order.nodes_per_element();
        &self.connectivity[e * npe..(e + 1) * npe]
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.connectivity
            .chunks_exact(self.order.nodes_per_element())
    }

    pub fn boundary(&self) -> &BoundarySets {
        &self.boundary
    }

    /// `(i, j)` grid position of element `e`.
    pub fn element_grid_position(&self, e: usize) -> (usize, usize) {
        (e % self.n_radial, e / self.n_radial)
    }

    pub fn element_coords(&self, e: usize) -> Vec<[f64; 2]> {
        self.element(e).iter().map(|&a| self.nodes[a]).collect()
    }

    /// Physical point of element `e` at reference coordinates `(xi, eta)`.
    pub fn map_point(&self, e: usize, xi: f64, eta: f64) -> [f64; 2] {
        let sf = shape_functions(self.order, xi, eta);
        let mut p = [0.0; 2];
        for (&a, &n) in self.element(e).iter().zip(sf.values()) {
            p[0] += n * self.nodes[a][0];
            p[1] += n * self.nodes[a][1];
        }
        p
    }

    /// Isoparametric centre `x(0, 0)` of every element.
    pub fn element_centroids(&self) -> Vec<[f64; 2]> {
        (0..self.num_elements())
            .map(|e| self.map_point(e, 0.0, 0.0))
            .collect()
    }

    /// Jacobian `[[dx/dξ, dy/dξ], [dx/dη, dy/dη]]` of element `e`.
    pub fn jacobian(&self, e: usize, sf: &ShapeFunctions) -> [[f64; 2]; 2] {
        let mut jac = [[0.0; 2]; 2];
        for (&a, g) in self.element(e).iter().zip(sf.gradients()) {
            let [x, y] = self.nodes[a];
            jac[0][0] += g[0] * x;
            jac[0][1] += g[0] * y;
            jac[1][0] += g[1] * x;
            jac[1][1] += g[1] * y;
        }
        jac
    }

    /// Smallest Jacobian determinant over the element's Gauss points.
    pub fn min_jacobian_det(&self, e: usize) -> f64 {
        crate::quadrature::square_rule(self.order.gauss_points())
            .into_iter()
            .map(|(xi, eta, _)| {
                let j = self.jacobian(e, &shape_functions(self.order, xi, eta));
                j[0][0] * j[1][1] - j[0][1] * j[1][0]
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Evaluates a nodal vector field at grid parameters `(s, t)` using the
    /// element basis of the grid cell containing them.
    pub fn interpolate_at(&self, field: &[f64], s: f64, t: f64) -> [f64; 2] {
        let locate = |u: f64, n: usize| {
            let scaled = u * n as f64;
            let cell = (scaled.floor() as usize).min(n - 1);
            (cell, 2.0 * (scaled - cell as f64) - 1.0)
        };
        let (i, xi) = locate(s, self.n_radial);
        let (j, eta) = locate(t, self.n_circumferential);
        let e = j * self.n_radial + i;
        let sf = shape_functions(self.order, xi, eta);
        let mut v = [0.0; 2];
        for (&a, &n) in self.element(e).iter().zip(sf.values()) {
            v[0] += n * field[2 * a];
            v[1] += n * field[2 * a + 1];
        }
        v
    }

    /// Interpolates a nodal vector field of `self` onto the nodes of `target`
    /// through the shared grid parametrization.
    pub fn transfer_field(&self, field: &[f64], target: &Mesh) -> Result<Vec<f64>> {
        check_len("transfer_field", self.num_dofs(), field.len())?;
        let mut out = Vec::with_capacity(target.num_dofs());
        for &[s, t] in target.node_params() {
            out.extend_from_slice(&self.interpolate_at(field, s, t));
        }
        Ok(out)
    }

    /// Lifts a per-element field of `self` onto a grid refined by an integer
    /// ratio: every fine element takes its parent's value.
    pub fn lift_element_field(&self, values: &[f64], fine: &Mesh) -> Result<Vec<f64>> {
        check_len("lift_element_field", self.num_elements(), values.len())?;
        let (fm, fn_) = fine.grid();
        if fm % self.n_radial != 0 || fn_ % self.n_circumferential != 0 {
            return Err(Error::IncompatibleMeshes(format!(
                "{fm}x{fn_} is not an integer refinement of {}x{}",
                self.n_radial, self.n_circumferential
            )));
        }
        let (rr, rc) = (fm / self.n_radial, fn_ / self.n_circumferential);
        Ok((0..fine.num_elements())
            .map(|e| {
                let (i, j) = fine.element_grid_position(e);
                values[(j / rc) * self.n_radial + i / rr]
            })
            .collect())
    }

    #[cfg(test)]
    pub(crate) fn set_nodes_for_test(&mut self, nodes: Vec<[f64; 2]>) {
        self.nodes = nodes;
    }

    fn collect_boundary_sets(&self) -> BoundarySets {
        let mut sets = BoundarySets::default();
        for (a, &[s, t]) in self.params.iter().enumerate() {
            if t == 0.0 {
                sets.symmetry_x_axis.push(a);
            }
            if t == 1.0 {
                sets.symmetry_y_axis.push(a);
            }
            if s == 0.0 {
                sets.hole_boundary.push(a);
            }
        }
        let on_loaded = |a: usize| self.nodes[a][0] == PLATE_HALF_WIDTH;
        for j in 0..self.n_circumferential {
            let e = j * self.n_radial + self.n_radial - 1;
            let el = self.element(e);
            let (a, b) = (el[1], el[2]);
            if on_loaded(a) && on_loaded(b) {
                sets.loaded_edge.push(match self.order {
                    ElementOrder::Q4 => vec![a, b],
                    ElementOrder::Q8 => vec![a, el[5], b],
                });
            }
        }
        sets
    }

    /// Writes the plain-text export: a header line `ORDER nodes elements`,
    /// then one `x y` line per node, then one connectivity line per element.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} {} {}",
            self.order,
            self.num_nodes(),
            self.num_elements()
        )?;
        for [x, y] in &self.nodes {
            writeln!(w, "{x} {y}")?;
        }
        for el in self.elements() {
            let line: Vec<String> = el.iter().map(|a| a.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Index of the Q8 node coincident with each Q4 node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceMap {
    pub q4_to_q8: Vec<usize>,
}

/// Matches every coarse node to a fine node at the same location.
pub fn build_coincidence_map(q4: &Mesh, q8: &Mesh) -> Result<CoincidenceMap> {
    let cell = 1e-6;
    let key = |p: [f64; 2]| ((p[0] / cell).round() as i64, (p[1] / cell).round() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (b, &p) in q8.nodes().iter().enumerate() {
        buckets.entry(key(p)).or_default().push(b);
    }

    let mut q4_to_q8 = Vec::with_capacity(q4.num_nodes());
    let mut taken = vec![false; q8.num_nodes()];
    for (a, &p) in q4.nodes().iter().enumerate() {
        let (kx, ky) = key(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &b in buckets.get(&(kx + dx, ky + dy)).into_iter().flatten() {
                    let q = q8.nodes()[b];
                    let d = (p[0] - q[0]).hypot(p[1] - q[1]);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, b));
                    }
                }
            }
        }
        match best {
            Some((d, b)) if d <= COINCIDENCE_TOL => {
                if std::mem::replace(&mut taken[b], true) {
                    return Err(Error::IncompatibleMeshes(format!(
                        "fine node {b} matched by more than one coarse node"
                    )));
                }
                q4_to_q8.push(b);
            }
            _ => {
                return Err(Error::IncompatibleMeshes(format!(
                    "coarse node {a} at ({}, {}) has no coincident fine node",
                    p[0], p[1]
                )))
            }
        }
    }
    Ok(CoincidenceMap { q4_to_q8 })
}

/// Restricts a Q8 nodal vector field to the Q4 nodes by gathering the
/// coincident values.
pub fn restrict_field(
    field_on_q8: &[f64],
    map: &CoincidenceMap,
    q8_nodes: usize,
) -> Result<Vec<f64>> {
    check_len("restrict_field", 2 * q8_nodes, field_on_q8.len())?;
    let mut out = Vec::with_capacity(2 * map.q4_to_q8.len());
    for &b in &map.q4_to_q8 {
        if b >= q8_nodes {
            return Err(Error::IncompatibleMeshes(format!(
                "map target {b} out of range"
            )));
        }
        out.push(field_on_q8[2 * b]);
        out.push(field_on_q8[2 * b + 1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grids_have_expected_counts() {
        let q4 = build_mesh(ElementOrder::Q4, 20, 40).unwrap();
        assert_eq!((q4.num_nodes(), q4.num_elements()), (861, 800));
        let q8 = build_mesh(ElementOrder::Q8, 40, 80).unwrap();
        assert_eq!((q8.num_nodes(), q8.num_elements()), (9841, 3200));
        let one = build_mesh(ElementOrder::Q4, 1, 1).unwrap();
        assert_eq!((one.num_nodes(), one.num_elements()), (4, 1));
    }

    #[test]
    fn rejects_zero_divisions() {
        assert!(build_mesh(ElementOrder::Q4, 0, 4).is_err());
        assert!(build_mesh(ElementOrder::Q8, 3, 0).is_err());
    }

    #[test]
    fn q4_center_values() {
        let sf = shape_functions(ElementOrder::Q4, 0.0, 0.0);
        assert!(sf.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn kronecker_delta_at_reference_nodes() {
        for order in [ElementOrder::Q4, ElementOrder::Q8] {
            for (k, &[xi, eta]) in order.reference_nodes().iter().enumerate() {
                let sf = shape_functions(order, xi, eta);
                for (a, &v) in sf.values().iter().enumerate() {
                    let want = if a == k { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-15, "{order} node {k} basis {a}: {v}");
                }
            }
        }
    }

    #[test]
    fn shape_gradients_match_finite_differences() {
        let h = 1e-6;
        for order in [ElementOrder::Q4, ElementOrder::Q8] {
            let (xi, eta) = (0.31, -0.47);
            let sf = shape_functions(order, xi, eta);
            let px = shape_functions(order, xi + h, eta);
            let mx = shape_functions(order, xi - h, eta);
            let py = shape_functions(order, xi, eta + h);
            let my = shape_functions(order, xi, eta - h);
            for a in 0..order.nodes_per_element() {
                let gx = (px.values()[a] - mx.values()[a]) / (2.0 * h);
                let gy = (py.values()[a] - my.values()[a]) / (2.0 * h);
                assert!((gx - sf.gradients()[a][0]).abs() < 1e-9);
                assert!((gy - sf.gradients()[a][1]).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(xi in -1.0f64..=1.0, eta in -1.0f64..=1.0, q8 in any::<bool>()) {
            let order = if q8 { ElementOrder::Q8 } else { ElementOrder::Q4 };
            let sf = shape_functions(order, xi, eta);
            let sum: f64 = sf.values().iter().sum();
            let gsum = sf.gradients().iter().fold([0.0, 0.0], |acc, g| [acc[0] + g[0], acc[1] + g[1]]);
            prop_assert!((sum - 1.0).abs() < 1e-14);
            prop_assert!(gsum[0].abs() < 1e-14 && gsum[1].abs() < 1e-14);
        }

        #[test]
        fn counts_follow_closed_form(m in 1usize..24, n in 1usize..24, q8 in any::<bool>()) {
            let order = if q8 { ElementOrder::Q8 } else { ElementOrder::Q4 };
            let mesh = build_mesh(order, m, n).unwrap();
            prop_assert_eq!(mesh.num_nodes(), order.node_count(m, n));
            prop_assert_eq!(mesh.num_elements(), m * n);
            // a single Q8 element spanning the whole quarter arc folds over
            // near the hole; any finer circumferential division is valid
            if n >= 2 || order == ElementOrder::Q4 {
                for e in 0..mesh.num_elements() {
                    prop_assert!(mesh.min_jacobian_det(e) > 0.0);
                }
            }
        }
    }

    #[test]
    fn jacobians_positive_on_default_meshes() {
        for (order, m, n) in [(ElementOrder::Q4, 20, 40), (ElementOrder::Q8, 40, 80)] {
            let mesh = build_mesh(order, m, n).unwrap();
            for e in 0..mesh.num_elements() {
                assert!(mesh.min_jacobian_det(e) > 0.0, "{order} element {e}");
            }
        }
    }

    #[test]
    fn boundary_geometry() {
        for (order, m, n) in [(ElementOrder::Q4, 20, 40), (ElementOrder::Q8, 40, 80)] {
            let mesh = build_mesh(order, m, n).unwrap();
            let b = mesh.boundary();
            for &a in &b.hole_boundary {
                let [x, y] = mesh.nodes()[a];
                assert!((x.hypot(y) - HOLE_RADIUS).abs() < 1e-12);
            }
            assert_eq!(
                b.hole_boundary.len(),
                if order == ElementOrder::Q4 {
                    n + 1
                } else {
                    2 * n + 1
                }
            );
            for &a in &b.symmetry_x_axis {
                assert_eq!(mesh.nodes()[a][1], 0.0);
            }
            for &a in &b.symmetry_y_axis {
                assert_eq!(mesh.nodes()[a][0], 0.0);
            }
            // outer outline: nodes with s == 1
            for (a, p) in mesh.node_params().iter().enumerate() {
                if p[0] == 1.0 {
                    let [x, y] = mesh.nodes()[a];
                    let on = (x - 1.0).abs() < 1e-12 || (y - 1.0).abs() < 1e-12;
                    assert!(on && x <= 1.0 + 1e-12 && y <= 1.0 + 1e-12);
                }
            }
            let edges = &b.loaded_edge;
            assert_eq!(edges.len(), n / 2);
            let mut ys: Vec<f64> = Vec::new();
            for edge in edges {
                for &a in edge {
                    assert_eq!(mesh.nodes()[a][0], 1.0);
                }
                ys.push(mesh.nodes()[edge[0]][1]);
            }
            assert!(ys.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn elements_are_counterclockwise() {
        let mesh = build_mesh(ElementOrder::Q8, 3, 4).unwrap();
        for e in 0..mesh.num_elements() {
            let c = mesh.element_coords(e);
            let area2: f64 = (0..4)
                .map(|k| {
                    let (p, q) = (c[k], c[(k + 1) % 4]);
                    p[0] * q[1] - q[0] * p[1]
                })
                .sum();
            assert!(area2 > 0.0);
        }
    }

    #[test]
    fn coincidence_map_on_default_meshes() {
        let q4 = build_mesh(ElementOrder::Q4, 20, 40).unwrap();
        let q8 = build_mesh(ElementOrder::Q8, 40, 80).unwrap();
        let map = build_coincidence_map(&q4, &q8).unwrap();
        assert_eq!(map.q4_to_q8.len(), 861);
        // brute-force nearest-neighbour oracle
        for (a, &b) in map.q4_to_q8.iter().enumerate() {
            let p = q4.nodes()[a];
            let nearest = q8
                .nodes()
                .iter()
                .enumerate()
                .min_by(|(_, u), (_, v)| {
                    let du = (u[0] - p[0]).hypot(u[1] - p[1]);
                    let dv = (v[0] - p[0]).hypot(v[1] - p[1]);
                    du.total_cmp(&dv)
                })
                .unwrap()
                .0;
            assert_eq!(nearest, b);
            let q = q8.nodes()[b];
            assert!((p[0] - q[0]).hypot(p[1] - q[1]) < 1e-12);
            assert!(b < 41 * 81, "coarse nodes map onto fine corner nodes");
        }
        let mut sorted = map.q4_to_q8.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 861);
    }

    #[test]
    fn coincidence_map_small_and_mismatched() {
        let q4 = build_mesh(ElementOrder::Q4, 1, 1).unwrap();
        let q8 = build_mesh(ElementOrder::Q8, 2, 2).unwrap();
        assert_eq!(build_coincidence_map(&q4, &q8).unwrap().q4_to_q8.len(), 4);

        let q4 = build_mesh(ElementOrder::Q4, 20, 40).unwrap();
        let q8 = build_mesh(ElementOrder::Q8, 30, 60).unwrap();
        assert!(matches!(
            build_coincidence_map(&q4, &q8),
            Err(Error::IncompatibleMeshes(_))
        ));
    }

    #[test]
    fn restriction_gathers_coincident_values() {
        let q4 = build_mesh(ElementOrder::Q4, 4, 6).unwrap();
        let q8 = build_mesh(ElementOrder::Q8, 8, 12).unwrap();
        let map = build_coincidence_map(&q4, &q8).unwrap();

        let constant = vec![3.5; q8.num_dofs()];
        assert!(restrict_field(&constant, &map, q8.num_nodes())
            .unwrap()
            .iter()
            .all(|&v| v == 3.5));

        let coords: Vec<f64> = q8.nodes().iter().flat_map(|p| [p[0], p[1]]).collect();
        let r = restrict_field(&coords, &map, q8.num_nodes()).unwrap();
        let want: Vec<f64> = q4.nodes().iter().flat_map(|p| [p[0], p[1]]).collect();
        assert_eq!(r, want);

        // embedding any coarse field into the fine corner slots then restricting is the identity
        let coarse: Vec<f64> = (0..q4.num_dofs())
            .map(|k| (k as f64 * 0.37).sin())
            .collect();
        let mut fine = vec![f64::NAN; q8.num_dofs()];
        for (a, &b) in map.q4_to_q8.iter().enumerate() {
            fine[2 * b] = coarse[2 * a];
            fine[2 * b + 1] = coarse[2 * a + 1];
        }
        assert_eq!(restrict_field(&fine, &map, q8.num_nodes()).unwrap(), coarse);

        assert!(restrict_field(&[0.0; 3], &map, q8.num_nodes()).is_err());
    }

    #[test]
    fn transfer_reproduces_linear_fields() {
        let coarse = build_mesh(ElementOrder::Q8, 2, 4).unwrap();
        let fine = build_mesh(ElementOrder::Q8, 4, 8).unwrap();
        // a field linear in the grid parameters is represented exactly by both bases
        let f = |p: [f64; 2]| [2.0 * p[0] - p[1], 0.5 + p[1]];
        let field: Vec<f64> = coarse.node_params().iter().flat_map(|&p| f(p)).collect();
        let moved = coarse.transfer_field(&field, &fine).unwrap();
        for (a, &p) in fine.node_params().iter().enumerate() {
            let want = f(p);
            assert!((moved[2 * a] - want[0]).abs() < 1e-12);
            assert!((moved[2 * a + 1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn text_export_header() {
        let mesh = build_mesh(ElementOrder::Q4, 2, 2).unwrap();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Q4 9 4");
        assert_eq!(lines.len(), 1 + 9 + 4);
        assert_eq!(lines[10], "0 1 4 3");
    }
}
