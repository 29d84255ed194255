//! Plane-stress linear elasticity on Q4/Q8 meshes.
//!
//! The quarter plate is held by symmetry constraints (`u_y = 0` on `y = 0`,
//! `u_x = 0` on `x = 0`) and pulled in `+x` by a uniform edge force per unit
//! length on `x = 1`.

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, CsrMatrix, EnvelopeMatrix};
use crate::mesh::{shape_functions, ElementOrder, Mesh};
use crate::quadrature::square_rule;

pub const POISSON_RATIO: f64 = 0.28;
pub const THICKNESS: f64 = 0.005;
/// Target relative residual of every solve.
pub const SOLVER_TOL: f64 = 1e-10;

/// Plane-stress constitutive matrix `E/(1-ν²)·[[1, ν, 0], [ν, 1, 0], [0, 0, (1-ν)/2]]`.
pub fn constitutive_matrix(modulus: f64, poisson: f64) -> [[f64; 3]; 3] {
    let c = modulus / (1.0 - poisson * poisson);
    [
        [c, c * poisson, 0.0],
        [c * poisson, c, 0.0],
        [0.0, 0.0, c * 0.5 * (1.0 - poisson)],
    ]
}

/// Row-major square element matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrix {
    pub size: usize,
    pub data: Vec<f64>,
}

impl ElementMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.size)
            .map(|row| linalg::dot(row, x))
            .collect()
    }
}

/// Strain-displacement rows at one point and the Jacobian determinant.
fn strain_matrix(
    order: ElementOrder,
    coords: &[[f64; 2]],
    e: usize,
    xi: f64,
    eta: f64,
) -> Result<(Vec<[f64; 2]>, f64)> {
    let sf = shape_functions(order, xi, eta);
    let mut j = [[0.0; 2]; 2];
    for ([x, y], g) in coords.iter().zip(sf.gradients()) {
        j[0][0] += g[0] * x;
        j[0][1] += g[0] * y;
        j[1][0] += g[1] * x;
        j[1][1] += g[1] * y;
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(det > 0.0) {
        return Err(Error::InvertedElement { element: e, det });
    }
    let grads = sf
        .gradients()
        .iter()
        .map(|g| {
            [
                (j[1][1] * g[0] - j[0][1] * g[1]) / det,
                (-j[1][0] * g[0] + j[0][0] * g[1]) / det,
            ]
        })
        .collect();
    Ok((grads, det))
}

/// `K_e = t Σ_q w_q Bᵀ D B det J` with full Gauss integration.
pub fn element_stiffness(
    mesh: &Mesh,
    e: usize,
    modulus: f64,
    poisson: f64,
    thickness: f64,
) -> Result<ElementMatrix> {
    stiffness_at(
        mesh.order(),
        &mesh.element_coords(e),
        e,
        modulus,
        poisson,
        thickness,
    )
}

/// Element stiffness for explicit nodal coordinates (element node order).
pub fn element_stiffness_at(
    order: ElementOrder,
    coords: &[[f64; 2]],
    modulus: f64,
    poisson: f64,
    thickness: f64,
) -> Result<ElementMatrix> {
    check_len(
        "element_stiffness_at",
        order.nodes_per_element(),
        coords.len(),
    )?;
    stiffness_at(order, coords, 0, modulus, poisson, thickness)
}

fn stiffness_at(
    order: ElementOrder,
    coords: &[[f64; 2]],
    e: usize,
    modulus: f64,
    poisson: f64,
    thickness: f64,
) -> Result<ElementMatrix> {
    let npe = order.nodes_per_element();
    let size = 2 * npe;
    let d = constitutive_matrix(modulus, poisson);
    let mut k = vec![0.0; size * size];
    for (xi, eta, w) in square_rule(order.gauss_points()) {
        let (g, det) = strain_matrix(order, coords, e, xi, eta)?;
        let scale = thickness * w * det;
        // B columns: node a contributes [Nx, 0, Ny] (u_x) and [0, Ny, Nx] (u_y)
        let col = |c: usize| -> [f64; 3] {
            let [nx, ny] = g[c / 2];
            if c % 2 == 0 {
                [nx, 0.0, ny]
            } else {
                [0.0, ny, nx]
            }
        };
        for p in 0..size {
            let bp = col(p);
            let dbp = [
                d[0][0] * bp[0] + d[0][1] * bp[1] + d[0][2] * bp[2],
                d[1][0] * bp[0] + d[1][1] * bp[1] + d[1][2] * bp[2],
                d[2][0] * bp[0] + d[2][1] * bp[1] + d[2][2] * bp[2],
            ];
            for q in 0..=p {
                let bq = col(q);
                let v = scale * (bq[0] * dbp[0] + bq[1] * dbp[1] + bq[2] * dbp[2]);
                k[p * size + q] += v;
            }
        }
    }
    for p in 0..size {
        for q in 0..p {
            k[q * size + p] = k[p * size + q];
        }
    }
    Ok(ElementMatrix { size, data: k })
}

fn element_dofs(mesh: &Mesh, e: usize) -> Vec<usize> {
    mesh.element(e)
        .iter()
        .flat_map(|&a| [2 * a, 2 * a + 1])
        .collect()
}

/// Global stiffness before constraints are applied.
pub fn assemble_stiffness(
    mesh: &Mesh,
    moduli: &[f64],
    poisson: f64,
    thickness: f64,
) -> Result<CsrMatrix> {
    check_len(
        "assemble_stiffness moduli",
        mesh.num_elements(),
        moduli.len(),
    )?;
    let mut triplets = Vec::new();
    for (e, &modulus) in moduli.iter().enumerate() {
        let ke = element_stiffness(mesh, e, modulus, poisson, thickness)?;
        let dofs = element_dofs(mesh, e);
        for (p, &gp) in dofs.iter().enumerate() {
            for (q, &gq) in dofs.iter().enumerate() {
                triplets.push((gp, gq, ke.get(p, q)));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.num_dofs(), triplets))
}

/// Consistent nodal forces of a uniform `+x` edge force per unit length on
/// the loaded edge: half-half on Q4 edges, 1/6–2/3–1/6 on Q8 edges.
pub fn traction_load(mesh: &Mesh, traction: f64) -> Vec<f64> {
    let mut f = vec![0.0; mesh.num_dofs()];
    for edge in &mesh.boundary().loaded_edge {
        let (a, b) = (edge[0], edge[edge.len() - 1]);
        let pa = mesh.nodes()[a];
        let pb = mesh.nodes()[b];
        let length = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        let total = traction * length;
        match mesh.order() {
            ElementOrder::Q4 => {
                f[2 * a] += 0.5 * total;
                f[2 * b] += 0.5 * total;
            }
            ElementOrder::Q8 => {
                f[2 * a] += total / 6.0;
                f[2 * edge[1]] += total * (2.0 / 3.0);
                f[2 * b] += total / 6.0;
            }
        }
    }
    f
}

/// `true` for every DOF fixed by a symmetry constraint.
pub fn constrained_dofs(mesh: &Mesh) -> Vec<bool> {
    let mut fixed = vec![false; mesh.num_dofs()];
    for &a in &mesh.boundary().symmetry_x_axis {
        fixed[2 * a + 1] = true;
    }
    for &a in &mesh.boundary().symmetry_y_axis {
        fixed[2 * a] = true;
    }
    fixed
}

/// One plane-stress boundary value problem.
#[derive(Debug, Clone)]
pub struct ElasticityProblem<'a> {
    pub mesh: &'a Mesh,
    pub moduli: &'a [f64],
    pub poisson: f64,
    pub thickness: f64,
    pub traction: f64,
}

impl<'a> ElasticityProblem<'a> {
    pub fn new(mesh: &'a Mesh, moduli: &'a [f64], traction: f64) -> Self {
        Self {
            mesh,
            moduli,
            poisson: POISSON_RATIO,
            thickness: THICKNESS,
            traction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Nodal displacements, `(u_x, u_y)` of node `i` at `(2i, 2i+1)`.
    pub u: Vec<f64>,
    pub relative_residual: f64,
}

/// Reusable solver for one mesh: element stiffnesses at unit modulus, the
/// constrained-system ordering and its envelope are computed once; each solve
/// scales the element matrices by the per-element moduli.
#[derive(Debug, Clone)]
pub struct ElasticSolver {
    n_dofs: usize,
    n_elements: usize,
    edofs: usize,
    elem_dofs: Vec<usize>,
    unit_k: Vec<f64>,
    /// Position of each DOF in the reordered free system, `usize::MAX` if fixed.
    free_pos: Vec<usize>,
    /// Free positions back to global DOFs.
    free_dofs: Vec<usize>,
    template: EnvelopeMatrix,
    /// Per element: `(local p·size + q, envelope slot)` for lower entries.
    scatter: Vec<Vec<(u32, u32)>>,
    unit_load: Vec<f64>,
}

impl ElasticSolver {
    pub fn new(mesh: &Mesh, poisson: f64, thickness: f64) -> Result<Self> {
        if !(poisson > 0.0 && poisson < 0.5) || !(thickness > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < poisson < 0.5 and thickness > 0, got {poisson}, {thickness}"
            )));
        }
        let n_elements = mesh.num_elements();
        let npe = mesh.order().nodes_per_element();
        let edofs = 2 * npe;
        let mut elem_dofs = Vec::with_capacity(n_elements * edofs);
        let mut unit_k = Vec::with_capacity(n_elements * edofs * edofs);
        for e in 0..n_elements {
            elem_dofs.extend(element_dofs(mesh, e));
            unit_k.extend(element_stiffness(mesh, e, 1.0, poisson, thickness)?.data);
        }

        // node-level RCM, free DOFs of each node kept adjacent
        let mut adjacency = vec![Vec::new(); mesh.num_nodes()];
        for el in mesh.elements() {
            for &a in el {
                for &b in el {
                    if a != b {
                        adjacency[a].push(b);
                    }
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        let node_order = linalg::reverse_cuthill_mckee(&adjacency);
        let fixed = constrained_dofs(mesh);
        let mut free_pos = vec![usize::MAX; mesh.num_dofs()];
        let mut free_dofs = Vec::new();
        for &a in &node_order {
            for d in [2 * a, 2 * a + 1] {
                if !fixed[d] {
                    free_pos[d] = free_dofs.len();
                    free_dofs.push(d);
                }
            }
        }

        let mut first: Vec<usize> = (0..free_dofs.len()).collect();
        for el in elem_dofs.chunks_exact(edofs) {
            let pos: Vec<usize> = el
                .iter()
                .map(|&d| free_pos[d])
                .filter(|&p| p != usize::MAX)
                .collect();
            let lo = pos.iter().copied().min().unwrap_or(0);
            for &p in &pos {
                first[p] = first[p].min(lo);
            }
        }
        let template = EnvelopeMatrix::with_profile(first);
        let mut scatter = Vec::with_capacity(n_elements);
        for el in elem_dofs.chunks_exact(edofs) {
            let mut entries = Vec::new();
            for (p, &gp) in el.iter().enumerate() {
                for (q, &gq) in el.iter().enumerate() {
                    let (fp, fq) = (free_pos[gp], free_pos[gq]);
                    if fp == usize::MAX || fq == usize::MAX || fq > fp {
                        continue;
                    }
                    let slot = template.slot(fp, fq).expect("entry inside envelope");
                    entries.push(((p * edofs + q) as u32, slot as u32));
                }
            }
            scatter.push(entries);
        }

        Ok(Self {
            n_dofs: mesh.num_dofs(),
            n_elements,
            edofs,
            elem_dofs,
            unit_k,
            free_pos,
            free_dofs,
            template,
            scatter,
            unit_load: traction_load(mesh, 1.0),
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn num_free_dofs(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn envelope_entries(&self) -> usize {
        self.template.stored_entries()
    }

    fn check_moduli(&self, moduli: &[f64]) -> Result<()> {
        check_len("ElasticSolver moduli", self.n_elements, moduli.len())?;
        if let Some(e) = moduli.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "element {e} has invalid modulus {}",
                moduli[e]
            )));
        }
        Ok(())
    }

    /// `K(moduli) · v` over all DOFs, element by element.
    pub fn apply_stiffness(&self, moduli: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("ElasticSolver::apply_stiffness", self.n_dofs, v.len())?;
        check_len("ElasticSolver moduli", self.n_elements, moduli.len())?;
        let mut out = vec![0.0; self.n_dofs];
        let mut local = vec![0.0; self.edofs];
        let sz = self.edofs * self.edofs;
        for e in 0..self.n_elements {
            let dofs = &self.elem_dofs[e * self.edofs..(e + 1) * self.edofs];
            for (l, &d) in local.iter_mut().zip(dofs) {
                *l = v[d];
            }
            let k = &self.unit_k[e * sz..(e + 1) * sz];
            for (p, &d) in dofs.iter().enumerate() {
                out[d] += moduli[e] * linalg::dot(&k[p * self.edofs..(p + 1) * self.edofs], &local);
            }
        }
        Ok(out)
    }

    /// `vᵀ K(moduli) v`.
    pub fn energy_norm_sq(&self, moduli: &[f64], v: &[f64]) -> Result<f64> {
        let kv = self.apply_stiffness(moduli, v)?;
        Ok(linalg::dot(&kv, v))
    }

    fn relative_residual(&self, moduli: &[f64], u: &[f64], f: &[f64]) -> Result<f64> {
        let ku = self.apply_stiffness(moduli, u)?;
        let (mut rr, mut ff) = (0.0, 0.0);
        for &d in &self.free_dofs {
            rr += (f[d] - ku[d]).powi(2);
            ff += f[d] * f[d];
        }
        Ok(if ff == 0.0 {
            rr.sqrt()
        } else {
            (rr / ff).sqrt()
        })
    }

    fn constrained_csr(&self, moduli: &[f64]) -> CsrMatrix {
        let mut triplets = Vec::new();
        let sz = self.edofs * self.edofs;
        for e in 0..self.n_elements {
            let dofs = &self.elem_dofs[e * self.edofs..(e + 1) * self.edofs];
            for (p, &gp) in dofs.iter().enumerate() {
                for (q, &gq) in dofs.iter().enumerate() {
                    let (fp, fq) = (self.free_pos[gp], self.free_pos[gq]);
                    if fp != usize::MAX && fq != usize::MAX {
                        triplets.push((
                            fp,
                            fq,
                            moduli[e] * self.unit_k[e * sz + p * self.edofs + q],
                        ));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(self.free_dofs.len(), triplets)
    }

    /// Solves for per-element moduli and an edge force per unit length.
    pub fn solve(&self, moduli: &[f64], traction: f64) -> Result<Solution> {
        self.check_moduli(moduli)?;
        if !traction.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "traction {traction} is not finite"
            )));
        }
        let f: Vec<f64> = self.unit_load.iter().map(|&l| traction * l).collect();
        let rhs: Vec<f64> = self.free_dofs.iter().map(|&d| f[d]).collect();

        let mut env = self.template.clone();
        let sz = self.edofs * self.edofs;
        {
            let vals = env.values_mut();
            for (e, entries) in self.scatter.iter().enumerate() {
                let k = &self.unit_k[e * sz..(e + 1) * sz];
                let m = moduli[e];
                for &(local, slot) in entries {
                    vals[slot as usize] += m * k[local as usize];
                }
            }
        }

        let scatter_back = |x: &[f64]| {
            let mut u = vec![0.0; self.n_dofs];
            for (&d, &v) in self.free_dofs.iter().zip(x) {
                u[d] = v;
            }
            u
        };

        let mut x = match env.factor() {
            Ok(()) => {
                let mut x = env.solve(&rhs);
                // a couple of refinement sweeps if rounding left the residual high
                for _ in 0..2 {
                    let u = scatter_back(&x);
                    if self.relative_residual(moduli, &u, &f)? <= SOLVER_TOL {
                        break;
                    }
                    let ku = self.apply_stiffness(moduli, &u)?;
                    let r: Vec<f64> = self.free_dofs.iter().map(|&d| f[d] - ku[d]).collect();
                    let dx = env.solve(&r);
                    x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
                }
                Some(x)
            }
            Err(err) => {
                log::warn!("envelope Cholesky failed ({err}); falling back to PCG");
                None
            }
        };

        let u = match x.take() {
            Some(x) if self.relative_residual(moduli, &scatter_back(&x), &f)? <= SOLVER_TOL => {
                scatter_back(&x)
            }
            start => {
                let csr = self.constrained_csr(moduli);
                let (x, _) = linalg::pcg_jacobi(
                    &csr,
                    &rhs,
                    start.as_deref(),
                    SOLVER_TOL,
                    20 * rhs.len().max(1),
                )?;
                scatter_back(&x)
            }
        };
        let relative_residual = self.relative_residual(moduli, &u, &f)?;
        if relative_residual > SOLVER_TOL {
            return Err(Error::SolverDiverged {
                iterations: 0,
                residual: relative_residual,
            });
        }
        Ok(Solution {
            u,
            relative_residual,
        })
    }
}

/// Assembles and solves one problem from scratch.
pub fn assemble_and_solve(problem: &ElasticityProblem<'_>) -> Result<Solution> {
    ElasticSolver::new(problem.mesh, problem.poisson, problem.thickness)?
        .solve(problem.moduli, problem.traction)
}

/// Stress `[σ_xx, σ_yy, τ_xy]` in element `e` at reference point `(xi, eta)`.
pub fn element_stress(
    mesh: &Mesh,
    e: usize,
    u: &[f64],
    modulus: f64,
    poisson: f64,
    xi: f64,
    eta: f64,
) -> Result<[f64; 3]> {
    check_len("element_stress", mesh.num_dofs(), u.len())?;
    let (g, _) = strain_matrix(mesh.order(), &mesh.element_coords(e), e, xi, eta)?;
    let mut strain = [0.0; 3];
    for (&a, [nx, ny]) in mesh.element(e).iter().zip(g) {
        let (ux, uy) = (u[2 * a], u[2 * a + 1]);
        strain[0] += nx * ux;
        strain[1] += ny * uy;
        strain[2] += ny * ux + nx * uy;
    }
    let d = constitutive_matrix(modulus, poisson);
    Ok([0, 1, 2].map(|r| d[r][0] * strain[0] + d[r][1] * strain[1] + d[r][2] * strain[2]))
}
