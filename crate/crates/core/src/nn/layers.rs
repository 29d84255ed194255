use rand::Rng;

use super::{accumulate_tn, mul_nn, mul_nt, Matrix, Real};
use crate::error::{Error, Result};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;
pub const PRELU_INIT: f64 = 0.25;

/// A named parameter block with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, value: Vec<T>) -> Self {
        assert_eq!(value.len(), rows * cols, "param shape");
        Self {
            name: name.into(),
            rows,
            cols,
            grad: vec![T::zero(); value.len()],
            value,
        }
    }

    pub fn filled(name: impl Into<String>, rows: usize, cols: usize, v: f64) -> Self {
        Self::new(name, rows, cols, vec![T::f(v); rows * cols])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::f(x.to_f64().unwrap())).collect();
        Param {
            name: self.name.clone(),
            rows: self.rows,
            cols: self.cols,
            value: conv(&self.value),
            grad: conv(&self.grad),
        }
    }
}

/// `y = x·Wᵀ + b` with `W: out×in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Affine<T> {
    /// Xavier-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| T::f(rng.random_range(-bound..bound)))
            .collect();
        Self {
            weight: Param::new(format!("{name}.weight"), out_dim, in_dim, w),
            bias: Param::filled(format!("{name}.bias"), 1, out_dim, 0.0),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut y = mul_nt(x, &self.weight.value, self.weight.rows);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias.value) {
                *v += *b;
            }
        }
        y
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, x: &Matrix<T>, gy: &Matrix<T>) -> Matrix<T> {
        accumulate_tn(&mut self.weight.grad, gy, x);
        for r in 0..gy.rows() {
            for (g, v) in self.bias.grad.iter_mut().zip(gy.row(r)) {
                *g += *v;
            }
        }
        mul_nn(gy, &self.weight.value, self.weight.cols)
    }
}

/// Per-sample normalization over the feature axis with per-feature affine.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub eps: f64,
}

impl<T: Real> InstanceNorm<T> {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), 1, dim, 1.0),
            beta: Param::filled(format!("{name}.beta"), 1, dim, 0.0),
            eps: INSTANCE_NORM_EPS,
        }
    }

    /// Returns `(y, z, inv_std)` where `z` is the pre-affine normalized input.
    pub fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, Matrix<T>, Vec<T>) {
        let n = x.cols();
        let mut z = Matrix::zeros(x.rows(), n);
        let mut y = Matrix::zeros(x.rows(), n);
        let mut inv = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / n as f64;
            let var = row
                .iter()
                .map(|v| {
                    let d = v.to_f64().unwrap() - mean;
                    d * d
                })
                .sum::<f64>()
                / n as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv.push(T::f(is));
            let (m, s) = (T::f(mean), T::f(is));
            for (k, (zk, &xk)) in z.row_mut(r).iter_mut().zip(row).enumerate() {
                *zk = (xk - m) * s;
                y.data_mut()[r * n + k] = self.gamma.value[k] * *zk + self.beta.value[k];
            }
        }
        (y, z, inv)
    }

    pub fn backward(&mut self, z: &Matrix<T>, inv: &[T], gy: &Matrix<T>) -> Matrix<T> {
        let n = z.cols();
        let mut gx = Matrix::zeros(z.rows(), n);
        let mut gz = vec![T::zero(); n];
        for r in 0..z.rows() {
            let (zr, gr) = (z.row(r), gy.row(r));
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            for k in 0..n {
                self.gamma.grad[k] += gr[k] * zr[k];
                self.beta.grad[k] += gr[k];
                gz[k] = gr[k] * self.gamma.value[k];
                s1 += gz[k].to_f64().unwrap();
                s2 += (gz[k] * zr[k]).to_f64().unwrap();
            }
            let (m1, m2) = (T::f(s1 / n as f64), T::f(s2 / n as f64));
            for (k, g) in gx.row_mut(r).iter_mut().enumerate() {
                *g = inv[r] * (gz[k] - m1 - zr[k] * m2);
            }
        }
        gx
    }
}

/// Inverted dropout; masks are drawn by the caller so they can be replayed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {p} outside [0, 1)"
            )));
        }
        Ok(Self { p })
    }

    /// Mask entries are `0` or `1/(1−p)`. `None` when `p = 0`.
    pub fn sample_mask<T: Real, R: Rng + ?Sized>(
        &self,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Option<Matrix<T>> {
        if self.p == 0.0 {
            return None;
        }
        let keep = T::f(1.0 / (1.0 - self.p));
        let data = (0..rows * cols)
            .map(|_| {
                if rng.random::<f64>() < self.p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        Some(Matrix::from_vec(rows, cols, data).unwrap())
    }

    pub fn apply<T: Real>(x: &Matrix<T>, mask: Option<&Matrix<T>>) -> Matrix<T> {
        match mask {
            None => x.clone(),
            Some(m) => {
                let mut y = x.clone();
                for (v, k) in y.data_mut().iter_mut().zip(m.data()) {
                    *v *= *k;
                }
                y
            }
        }
    }
}

/// Leaky rectifier with one learnable negative slope.
#[derive(Debug, Clone, PartialEq)]
pub struct PRelu<T> {
    pub slope: Param<T>,
}

impl<T: Real> PRelu<T> {
    pub fn new(name: &str) -> Self {
        Self {
            slope: Param::filled(format!("{name}.slope"), 1, 1, PRELU_INIT),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let a = self.slope.value[0];
        x.map(|v| if v >= T::zero() { v } else { a * v })
    }

    pub fn backward(&mut self, x: &Matrix<T>, gy: &Matrix<T>) -> Matrix<T> {
        let a = self.slope.value[0];
        let mut gx = gy.clone();
        let mut ga = 0.0f64;
        for (g, &v) in gx.data_mut().iter_mut().zip(x.data()) {
            if v < T::zero() {
                ga += (v * *g).to_f64().unwrap();
                *g *= a;
            }
        }
        self.slope.grad[0] += T::f(ga);
        gx
    }
}

/// `y = b·(2σ(x) − 1) = b·tanh(x/2)`, kept strictly inside `(−b, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedSigmoid {
    pub bound: f64,
}

impl BoundedSigmoid {
    pub fn new(bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigmoid bound {bound} must be positive"
            )));
        }
        Ok(Self { bound })
    }

    /// Returns `(y, tanh(x/2))`.
    pub fn forward<T: Real>(&self, x: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
        let b = T::f(self.bound);
        let lim = b - b * T::epsilon();
        let half = T::f(0.5);
        let t = x.map(|v| (v * half).tanh());
        let y = t.map(|v| (b * v).max(-lim).min(lim));
        (y, t)
    }

    pub fn backward<T: Real>(&self, t: &Matrix<T>, gy: &Matrix<T>) -> Matrix<T> {
        let hb = T::f(0.5 * self.bound);
        let mut gx = gy.clone();
        for (g, &tk) in gx.data_mut().iter_mut().zip(t.data()) {
            *g *= hb * (T::one() - tk * tk);
        }
        gx
    }
}

/// One layer of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Affine(Affine<T>),
    InstanceNorm(InstanceNorm<T>),
    Dropout(Dropout),
    PRelu(PRelu<T>),
    BoundedSigmoid(BoundedSigmoid),
}

/// Values recorded by a forward pass for the matching backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Tape<T> {
    Affine { input: Matrix<T> },
    InstanceNorm { z: Matrix<T>, inv_std: Vec<T> },
    Dropout { mask: Option<Matrix<T>> },
    PRelu { input: Matrix<T> },
    BoundedSigmoid { tanh_half: Matrix<T> },
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Affine(_) => "affine",
            Layer::InstanceNorm(_) => "instance_norm",
            Layer::Dropout(_) => "dropout",
            Layer::PRelu(_) => "prelu",
            Layer::BoundedSigmoid(_) => "bounded_sigmoid",
        }
    }

    /// Expected input width, if the layer fixes one.
    pub fn in_dim(&self) -> Option<usize> {
        match self {
            Layer::Affine(a) => Some(a.in_dim()),
            Layer::InstanceNorm(n) => Some(n.gamma.len()),
            _ => None,
        }
    }

    /// Forward pass. `mask` is only read by dropout; `None` makes dropout
    /// the identity.
    pub fn forward(&self, x: &Matrix<T>, mask: Option<&Matrix<T>>) -> Result<(Matrix<T>, Tape<T>)> {
        if let Some(d) = self.in_dim() {
            if x.cols() != d {
                return Err(Error::DimensionMismatch {
                    context: "layer input width",
                    expected: d,
                    actual: x.cols(),
                });
            }
        }
        Ok(match self {
            Layer::Affine(a) => (a.forward(x), Tape::Affine { input: x.clone() }),
            Layer::InstanceNorm(n) => {
                let (y, z, inv_std) = n.forward(x);
                (y, Tape::InstanceNorm { z, inv_std })
            }
            Layer::Dropout(_) => {
                if let Some(m) = mask {
                    if (m.rows(), m.cols()) != (x.rows(), x.cols()) {
                        return Err(Error::DimensionMismatch {
                            context: "dropout mask",
                            expected: x.rows() * x.cols(),
                            actual: m.rows() * m.cols(),
                        });
                    }
                }
                (
                    Dropout::apply(x, mask),
                    Tape::Dropout {
                        mask: mask.cloned(),
                    },
                )
            }
            Layer::PRelu(p) => (p.forward(x), Tape::PRelu { input: x.clone() }),
            Layer::BoundedSigmoid(s) => {
                let (y, t) = s.forward(x);
                (y, Tape::BoundedSigmoid { tanh_half: t })
            }
        })
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, tape: &Tape<T>, gy: &Matrix<T>) -> Result<Matrix<T>> {
        let mismatch = || Error::InvalidArgument("tape does not belong to this layer".into());
        Ok(match (self, tape) {
            (Layer::Affine(a), Tape::Affine { input }) => {
                if gy.cols() != a.out_dim() || gy.rows() != input.rows() {
                    return Err(Error::DimensionMismatch {
                        context: "affine upstream gradient",
                        expected: input.rows() * a.out_dim(),
                        actual: gy.rows() * gy.cols(),
                    });
                }
                a.backward(input, gy)
            }
            (Layer::InstanceNorm(n), Tape::InstanceNorm { z, inv_std }) => {
                shape_check(z, gy)?;
                n.backward(z, inv_std, gy)
            }
            (Layer::Dropout(_), Tape::Dropout { mask }) => Dropout::apply(gy, mask.as_ref()),
            (Layer::PRelu(p), Tape::PRelu { input }) => {
                shape_check(input, gy)?;
                p.backward(input, gy)
            }
            (Layer::BoundedSigmoid(s), Tape::BoundedSigmoid { tanh_half }) => {
                shape_check(tanh_half, gy)?;
                s.backward(tanh_half, gy)
            }
            _ => return Err(mismatch()),
        })
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Affine(a) => vec![&a.weight, &a.bias],
            Layer::InstanceNorm(n) => vec![&n.gamma, &n.beta],
            Layer::PRelu(p) => vec![&p.slope],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Affine(a) => vec![&mut a.weight, &mut a.bias],
            Layer::InstanceNorm(n) => vec![&mut n.gamma, &mut n.beta],
            Layer::PRelu(p) => vec![&mut p.slope],
            _ => Vec::new(),
        }
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Affine(a) => Layer::Affine(Affine {
                weight: a.weight.cast(),
                bias: a.bias.cast(),
            }),
            Layer::InstanceNorm(n) => Layer::InstanceNorm(InstanceNorm {
                gamma: n.gamma.cast(),
                beta: n.beta.cast(),
                eps: n.eps,
            }),
            Layer::Dropout(d) => Layer::Dropout(*d),
            Layer::PRelu(p) => Layer::PRelu(PRelu {
                slope: p.slope.cast(),
            }),
            Layer::BoundedSigmoid(s) => Layer::BoundedSigmoid(*s),
        }
    }
}

fn shape_check<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(Error::DimensionMismatch {
            context: "upstream gradient shape",
            expected: a.rows() * a.cols(),
            actual: b.rows() * b.cols(),
        });
    }
    Ok(())
}
