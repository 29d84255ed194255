//! Dense and sparse symmetric positive definite solvers.

use std::collections::VecDeque;

use crate::error::{check_len, Error, Result};

/// Dot product with a fixed 8-lane accumulation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[8 * c..8 * c + 8], &b[8 * c..8 * c + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for k in 8 * chunks..n {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Lower-triangular Cholesky factor stored as packed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCholesky {
    n: usize,
    packed: Vec<f64>,
}

impl DenseCholesky {
    /// Factors the symmetric matrix whose lower-triangle entries are given by
    /// `entry(i, j)` for `j <= i`.
    pub fn factor(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut packed = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            let row = i * (i + 1) / 2;
            for j in 0..=i {
                packed[row + j] = entry(i, j);
            }
        }
        // Row blocks keep the rows of the current block cache-resident while
        // earlier rows stream past once per block.
        const BLOCK: usize = 48;
        let mut r0 = 0;
        while r0 < n {
            let r1 = (r0 + BLOCK).min(n);
            for j in 0..r1 {
                let jrow = j * (j + 1) / 2;
                for i in r0.max(j)..r1 {
                    let irow = i * (i + 1) / 2;
                    let s =
                        packed[irow + j] - dot(&packed[irow..irow + j], &packed[jrow..jrow + j]);
                    if i == j {
                        if !(s > 0.0) || !s.is_finite() {
                            return Err(Error::Factorization { pivot: j, value: s });
                        }
                        packed[irow + j] = s.sqrt();
                    } else {
                        packed[irow + j] = s / packed[jrow + j];
                    }
                }
            }
            r0 = r1;
        }
        Ok(Self { n, packed })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.packed[start..start + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    /// `L · z`.
    pub fn mul_vec(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("DenseCholesky::mul_vec", self.n, z.len())?;
        Ok((0..self.n).map(|i| dot(self.row(i), &z[..=i])).collect())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from `(row, col, value)` triplets, summing
    /// duplicates. Column indices are sorted within each row.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.n, triplets)
    }
}

/// Reverse Cuthill–McKee ordering of an undirected graph given as adjacency
/// lists. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree = |v: usize| adjacency[v].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_last = |start: usize| -> (usize, usize) {
        let mut level = vec![usize::MAX; n];
        let mut queue = VecDeque::from([start]);
        level[start] = 0;
        let mut last = start;
        while let Some(v) = queue.pop_front() {
            last = v;
            for &w in &adjacency[v] {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        (last, level[last])
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree(v), v))
            .unwrap();
        // pseudo-peripheral start: walk to the far end of the BFS tree until
        // eccentricity stops growing
        let (mut start, mut ecc) = (seed, bfs_last(seed).1);
        loop {
            let (far, _) = bfs_last(start);
            let (_, far_ecc) = bfs_last(far);
            if far_ecc > ecc {
                start = far;
                ecc = far_ecc;
            } else {
                break;
            }
        }
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            next.sort_by_key(|&w| (degree(w), w));
            for w in next {
                visited[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

/// Symmetric matrix stored by its lower envelope (variable-band profile),
/// factored in place by row-oriented Cholesky.
#[derive(Debug, Clone)]
pub struct EnvelopeMatrix {
    first: Vec<usize>,
    row_start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeMatrix {
    /// Empty matrix whose row `i` spans columns `first[i]..=i`.
    pub fn with_profile(first: Vec<usize>) -> Self {
        let mut row_start = Vec::with_capacity(first.len() + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i);
            row_start.push(acc);
            acc += i + 1 - f;
        }
        row_start.push(acc);
        Self {
            first,
            row_start,
            values: vec![0.0; acc],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.values.len()
    }

    /// Storage slot of lower entry `(i, j)`, `j <= i`, if inside the profile.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        (j <= i && j >= self.first[i]).then(|| self.row_start[i] + j - self.first[i])
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn clear(&mut self) {
        self.values.fill(0.0);
    }

    /// In-place `L Lᵀ` factorization; fill stays inside the envelope.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            for j in fi..=i {
                let fj = self.first[j];
                let rj = self.row_start[j];
                let k0 = fi.max(fj);
                let (head, row_i) = self.values.split_at_mut(ri);
                let li = &row_i[k0 - fi..j - fi];
                let s = if j == i {
                    row_i[j - fi] - dot(li, li)
                } else {
                    let lj = &head[rj + k0 - fj..rj + j - fj];
                    row_i[j - fi] - dot(li, lj)
                };
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Factorization { pivot: i, value: s });
                    }
                    row_i[j - fi] = s.sqrt();
                } else {
                    let d = head[rj + j - fj];
                    row_i[j - fi] = s / d;
                }
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` with a factored matrix.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.row_start[i]..self.row_start[i + 1]];
            let s = y[i] - dot(&row[..i - fi], &y[fi..i]);
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.row_start[i]..self.row_start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        y
    }
}

/// Jacobi-preconditioned conjugate gradients. Returns the solution and the
/// final relative residual.
pub fn pcg_jacobi(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64)> {
    check_len("pcg_jacobi", a.n, b.len())?;
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; a.n], 0.0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = x0.map_or_else(|| vec![0.0; a.n], <[f64]>::to_vec);
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= rel_tol {
            return Ok((x, rel));
        }
        let ap = a.mul_vec(&p);
        let alpha = rz / dot(&p, &ap);
        for k in 0..a.n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if !rel.is_finite() {
            return Err(Error::SolverDiverged {
                iterations: it + 1,
                residual: rel,
            });
        }
        for k in 0..a.n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..a.n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if rel <= rel_tol {
        Ok((x, rel))
    } else {
        Err(Error::SolverDiverged {
            iterations: max_iter,
            residual: rel,
        })
    }
}
