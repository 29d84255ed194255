//! The two-branch error/superresolution network and its losses.
//!
//! ```text
//! u_r ─ Linear1 ─ IN ─ Drop ─ PReLU ─┬─ Linear2 ─ IN ─ Drop ─ PReLU ─ Linear3 ─ BSig(1e-4) → e
//!                                    └─ Linear4 ─ IN ─ Drop ─ PReLU ─ Linear5 ─ BSig(1e-2) → u_q8
//! ```
//!
//! The objective is `L_error + Σ_selected (exp(−s_i)·L_i + s_i)` where the
//! `s_i` are learnable.

mod checkpoint;
mod mc;
mod train;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{
    push_kink_signs, Affine, BoundedSigmoid, Differentiable, Dropout, InstanceNorm, Layer, Matrix,
    PRelu, Param, Real, Tape,
};
use crate::rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use mc::{mc_dropout_predict, McPrediction};
pub use train::{
    mean_l_error, train, write_history_csv, Adam, EpochRecord, StepRecord, TrainConfig,
    TrainOutcome, TrainingSet, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};

pub const ERROR_BOUND: f64 = 1e-4;
pub const SUPER_BOUND: f64 = 1e-2;
pub const DROPOUT_RATE: f64 = 0.1;

/// Which physics terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossFlags {
    pub l_u: bool,
    pub l_super: bool,
}

impl LossFlags {
    pub const CASE1: LossFlags = LossFlags {
        l_u: true,
        l_super: true,
    };
    pub const CASE2: LossFlags = LossFlags {
        l_u: true,
        l_super: false,
    };
    pub const CASE3: LossFlags = LossFlags {
        l_u: false,
        l_super: false,
    };

    pub fn label(&self) -> &'static str {
        match (self.l_u, self.l_super) {
            (true, true) => "L_u+L_super",
            (true, false) => "L_u",
            (false, true) => "L_super",
            (false, false) => "none",
        }
    }
}

impl Default for LossFlags {
    fn default() -> Self {
        Self::CASE1
    }
}

/// Hidden widths and head settings. Input and super-output widths come
/// from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_error: usize,
    pub hidden_super: usize,
    pub dropout: f64,
    pub error_bound: f64,
    pub super_bound: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_error: 1722,
            hidden_super: 2048,
            dropout: DROPOUT_RATE,
            error_bound: ERROR_BOUND,
            super_bound: SUPER_BOUND,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_error == 0 || self.hidden_super == 0 {
            return Err(Error::Config("model hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "model.dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.error_bound > 0.0 && self.super_bound > 0.0) {
            return Err(Error::Config("sigmoid bounds must be positive".into()));
        }
        Ok(())
    }
}

/// Complete layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub input: usize,
    pub hidden_error: usize,
    pub hidden_super: usize,
    pub super_out: usize,
    pub dropout: f64,
    pub error_bound: f64,
    pub super_bound: f64,
}

impl ModelDims {
    pub fn new(cfg: &ModelConfig, input: usize, super_out: usize) -> Self {
        Self {
            input,
            hidden_error: cfg.hidden_error,
            hidden_super: cfg.hidden_super,
            super_out,
            dropout: cfg.dropout,
            error_bound: cfg.error_bound,
            super_bound: cfg.super_bound,
        }
    }
}

/// Which heads a forward pass evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heads {
    Both,
    ErrorOnly,
}

/// One dropout mask (or none) per dropout layer: trunk, error, super.
pub type DropoutMasks<T> = [Option<Matrix<T>>; 3];

pub struct ForwardOutput<T> {
    pub error: Matrix<T>,
    pub superres: Option<Matrix<T>>,
    tapes: [Vec<Tape<T>>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel<T> {
    dims: ModelDims,
    trunk: Vec<Layer<T>>,
    error: Vec<Layer<T>>,
    superres: Vec<Layer<T>>,
    /// `[s1, s2]` with loss weights `β_i = exp(−s_i)`.
    pub log_weights: Param<T>,
}

fn branch_layers<T: Real>(
    names: [&str; 3],
    input: usize,
    hidden: usize,
    out: usize,
    dims: &ModelDims,
    bound: f64,
    seed: u64,
    ids: [u64; 2],
) -> Result<Vec<Layer<T>>> {
    Ok(vec![
        Layer::Affine(Affine::new(
            names[0],
            input,
            hidden,
            &mut rng::stream(seed, &[rng::tag::INIT, ids[0]]),
        )),
        Layer::InstanceNorm(InstanceNorm::new(names[1], hidden)),
        Layer::Dropout(Dropout::new(dims.dropout)?),
        Layer::PRelu(PRelu::new(names[2])),
        Layer::Affine(Affine::new(
            &format!("linear{}", ids[1]),
            hidden,
            out,
            &mut rng::stream(seed, &[rng::tag::INIT, ids[1]]),
        )),
        Layer::BoundedSigmoid(BoundedSigmoid::new(bound)?),
    ])
}

impl<T: Real> PinnModel<T> {
    /// Xavier-initialized model; each affine layer draws from its own
    /// seeded stream so initial weights do not depend on the widths of
    /// other layers.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.input == 0
            || dims.hidden_error == 0
            || dims.hidden_super == 0
            || dims.super_out == 0
        {
            return Err(Error::InvalidArgument(
                "model widths must be positive".into(),
            ));
        }
        let d = dims.input;
        let trunk = vec![
            Layer::Affine(Affine::new(
                "linear1",
                d,
                d,
                &mut rng::stream(seed, &[rng::tag::INIT, 1]),
            )),
            Layer::InstanceNorm(InstanceNorm::new("norm1", d)),
            Layer::Dropout(Dropout::new(dims.dropout)?),
            Layer::PRelu(PRelu::new("prelu1")),
        ];
        let error = branch_layers(
            ["linear2", "norm2", "prelu2"],
            d,
            dims.hidden_error,
            d,
            &dims,
            dims.error_bound,
            seed,
            [2, 3],
        )?;
        let superres = branch_layers(
            ["linear4", "norm4", "prelu4"],
            d,
            dims.hidden_super,
            dims.super_out,
            &dims,
            dims.super_bound,
            seed,
            [4, 5],
        )?;
        Ok(Self {
            dims,
            trunk,
            error,
            superres,
            log_weights: Param::filled("loss_weights.s", 1, 2, 0.0),
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims.input
    }

    pub fn error_dim(&self) -> usize {
        self.dims.input
    }

    pub fn super_dim(&self) -> usize {
        self.dims.super_out
    }

    pub fn betas(&self) -> [f64; 2] {
        let s = &self.log_weights.value;
        [
            (-s[0].to_f64().unwrap()).exp(),
            (-s[1].to_f64().unwrap()).exp(),
        ]
    }

    /// Parameter blocks in a fixed order: trunk, error branch, super branch,
    /// loss weights.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self
            .trunk
            .iter()
            .chain(&self.error)
            .chain(&self.superres)
            .flat_map(|l| l.params())
            .collect();
        v.push(&self.log_weights);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self
            .trunk
            .iter_mut()
            .chain(self.error.iter_mut())
            .chain(self.superres.iter_mut())
            .flat_map(|l| l.params_mut())
            .collect();
        v.push(&mut self.log_weights);
        v
    }

    /// Indices (into [`params`](Self::params)) of the super-branch blocks.
    pub fn super_param_range(&self) -> std::ops::Range<usize> {
        let before: usize = self
            .trunk
            .iter()
            .chain(&self.error)
            .map(|l| l.params().len())
            .sum();
        let own: usize = self.superres.iter().map(|l| l.params().len()).sum();
        before..before + own
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Sets every dropout rate (used to check that a zero rate makes MC
    /// sampling deterministic).
    pub fn set_dropout(&mut self, p: f64) -> Result<()> {
        let d = Dropout::new(p)?;
        for l in self
            .trunk
            .iter_mut()
            .chain(self.error.iter_mut())
            .chain(self.superres.iter_mut())
        {
            if let Layer::Dropout(x) = l {
                *x = d;
            }
        }
        self.dims.dropout = p;
        Ok(())
    }

    /// Fresh dropout masks for a batch; each layer draws from its own stream.
    pub fn sample_masks(
        &self,
        rows: usize,
        mut stream_for: impl FnMut(usize) -> ChaCha8Rng,
    ) -> DropoutMasks<T> {
        let d = Dropout {
            p: self.dims.dropout,
        };
        [
            d.sample_mask(rows, self.dims.input, &mut stream_for(0)),
            d.sample_mask(rows, self.dims.hidden_error, &mut stream_for(1)),
            d.sample_mask(rows, self.dims.hidden_super, &mut stream_for(2)),
        ]
    }

    pub fn forward(
        &self,
        x: &Matrix<T>,
        masks: &DropoutMasks<T>,
        heads: Heads,
    ) -> Result<ForwardOutput<T>> {
        check_len("model input width", self.dims.input, x.cols())?;
        let run = |layers: &[Layer<T>],
                   x: &Matrix<T>,
                   mask: Option<&Matrix<T>>|
         -> Result<(Matrix<T>, Vec<Tape<T>>)> {
            let mut tapes = Vec::with_capacity(layers.len());
            let mut h: Option<Matrix<T>> = None;
            for l in layers {
                let (y, t) = l.forward(h.as_ref().unwrap_or(x), mask)?;
                tapes.push(t);
                h = Some(y);
            }
            Ok((h.expect("nonempty branch"), tapes))
        };
        let (h, trunk_t) = run(&self.trunk, x, masks[0].as_ref())?;
        let (e, err_t) = run(&self.error, &h, masks[1].as_ref())?;
        let (s, sup_t) = match heads {
            Heads::Both => {
                let (s, t) = run(&self.superres, &h, masks[2].as_ref())?;
                (Some(s), t)
            }
            Heads::ErrorOnly => (None, Vec::new()),
        };
        Ok(ForwardOutput {
            error: e,
            superres: s,
            tapes: [trunk_t, err_t, sup_t],
        })
    }

    /// Eval-mode forward (no dropout).
    pub fn predict(&self, x: &Matrix<T>, heads: Heads) -> Result<(Matrix<T>, Option<Matrix<T>>)> {
        let out = self.forward(x, &[None, None, None], heads)?;
        Ok((out.error, out.superres))
    }

    /// Accumulates parameter gradients from head gradients.
    pub fn backward(
        &mut self,
        out: &ForwardOutput<T>,
        g_error: &Matrix<T>,
        g_super: Option<&Matrix<T>>,
    ) -> Result<()> {
        let back =
            |layers: &mut [Layer<T>], tapes: &[Tape<T>], g: &Matrix<T>| -> Result<Matrix<T>> {
                let mut g = g.clone();
                for (l, t) in layers.iter_mut().zip(tapes).rev() {
                    g = l.backward(t, &g)?;
                }
                Ok(g)
            };
        let mut gh = back(&mut self.error, &out.tapes[1], g_error)?;
        if let Some(gs) = g_super {
            if out.tapes[2].is_empty() {
                return Err(Error::InvalidArgument(
                    "super-head gradient without a super-head forward".into(),
                ));
            }
            let g2 = back(&mut self.superres, &out.tapes[2], gs)?;
            for (a, b) in gh.data_mut().iter_mut().zip(g2.data()) {
                *a += *b;
            }
        }
        let _ = back(&mut self.trunk, &out.tapes[0], &gh)?;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> PinnModel<U> {
        let c = |v: &[Layer<T>]| v.iter().map(|l| l.cast()).collect();
        PinnModel {
            dims: self.dims,
            trunk: c(&self.trunk),
            error: c(&self.error),
            superres: c(&self.superres),
            log_weights: self.log_weights.cast(),
        }
    }
}

/// Per-sample mean absolute difference of `pred (+ offset) − target`,
/// averaged over the batch, with its gradient w.r.t. `pred`. The offset is
/// folded into the target first, so a large offset does not round away a
/// small prediction.
fn l1_with_grad<T: Real>(
    pred: &Matrix<T>,
    offset: Option<&Matrix<T>>,
    target: &Matrix<T>,
) -> Result<(f64, Matrix<T>)> {
    for (ctx, m) in [("loss target", Some(target)), ("loss offset", offset)] {
        if let Some(m) = m {
            if (m.rows(), m.cols()) != (pred.rows(), pred.cols()) {
                return Err(Error::DimensionMismatch {
                    context: ctx,
                    expected: pred.rows() * pred.cols(),
                    actual: m.rows() * m.cols(),
                });
            }
        }
    }
    let (b, d) = (pred.rows(), pred.cols());
    if b == 0 || d == 0 {
        return Err(Error::InvalidArgument("loss over an empty batch".into()));
    }
    let scale = T::f(1.0 / (b * d) as f64);
    let mut grad = Matrix::zeros(b, d);
    let mut total = 0.0f64;
    for r in 0..b {
        let mut row_sum = 0.0f64;
        let (p, t) = (pred.row(r), target.row(r));
        let o = offset.map(|m| m.row(r));
        let g = grad.row_mut(r);
        for k in 0..d {
            let diff = match o {
                Some(o) => p[k] - (t[k] - o[k]),
                None => p[k] - t[k],
            };
            row_sum += diff.abs().to_f64().unwrap();
            g[k] = if diff > T::zero() {
                scale
            } else if diff < T::zero() {
                -scale
            } else {
                T::zero()
            };
        }
        total += row_sum / d as f64;
    }
    Ok((total / b as f64, grad))
}

/// Mean over the batch of the per-sample mean `|e_pred − e_true|`.
pub fn loss_error<T: Real>(e_pred: &Matrix<T>, e_true: &Matrix<T>) -> Result<f64> {
    Ok(l1_with_grad(e_pred, None, e_true)?.0)
}

/// `β₁ ·` mean over the batch of the per-sample mean `|e_pred + u_r − u_h_q4|`.
pub fn loss_u<T: Real>(
    e_pred: &Matrix<T>,
    u_r: &Matrix<T>,
    u_h_q4: &Matrix<T>,
    beta1: f64,
) -> Result<f64> {
    Ok(beta1 * l1_with_grad(e_pred, Some(u_r), u_h_q4)?.0)
}

/// `β₂ ·` mean over the batch of the per-sample mean `|u_pred − u_h_q8|`.
pub fn loss_super<T: Real>(u_pred: &Matrix<T>, u_h_q8: &Matrix<T>, beta2: f64) -> Result<f64> {
    Ok(beta2 * l1_with_grad(u_pred, None, u_h_q8)?.0)
}

/// `ũ_H = u_r + e_pred`.
pub fn compensate(u_r: &[f64], e_pred: &[f64]) -> Result<Vec<f64>> {
    check_len("compensate", u_r.len(), e_pred.len())?;
    Ok(u_r.iter().zip(e_pred).map(|(u, e)| u + e).collect())
}

/// Raw loss components of one batch and the weights in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l_error: f64,
    /// Unweighted; `NaN` when the term was not evaluated.
    pub l_u: f64,
    pub l_super: f64,
    pub objective: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Targets for one batch. `u_h_q8` is only needed when `L_super` is on.
pub struct BatchTargets<'a, T> {
    pub u_r: &'a Matrix<T>,
    pub e: &'a Matrix<T>,
    pub u_h_q4: &'a Matrix<T>,
    pub u_h_q8: Option<&'a Matrix<T>>,
}

/// Objective and head gradients; `∂/∂s_i` is accumulated into the model.
pub(crate) fn objective_and_grads<T: Real>(
    model: &mut PinnModel<T>,
    out: &ForwardOutput<T>,
    tgt: &BatchTargets<'_, T>,
    flags: LossFlags,
) -> Result<(LossBreakdown, Matrix<T>, Option<Matrix<T>>)> {
    let [beta1, beta2] = model.betas();
    let (l_error, mut g_e) = l1_with_grad(&out.error, None, tgt.e)?;
    let mut objective = l_error;
    let mut br = LossBreakdown {
        l_error,
        l_u: f64::NAN,
        l_super: f64::NAN,
        objective,
        beta1,
        beta2,
    };
    if flags.l_u {
        let (l_u, g_u) = l1_with_grad(&out.error, Some(tgt.u_r), tgt.u_h_q4)?;
        let b = T::f(beta1);
        for (a, g) in g_e.data_mut().iter_mut().zip(g_u.data()) {
            *a += b * *g;
        }
        objective += beta1 * l_u + model.log_weights.value[0].to_f64().unwrap();
        model.log_weights.grad[0] += T::f(1.0 - beta1 * l_u);
        br.l_u = l_u;
    }
    let mut g_s = None;
    if flags.l_super {
        let pred = out
            .superres
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("L_super needs the super head".into()))?;
        let truth = tgt
            .u_h_q8
            .ok_or_else(|| Error::InvalidArgument("L_super needs u_h_q8 targets".into()))?;
        let (l_s, mut g) = l1_with_grad(pred, None, truth)?;
        let b = T::f(beta2);
        for v in g.data_mut() {
            *v *= b;
        }
        objective += beta2 * l_s + model.log_weights.value[1].to_f64().unwrap();
        model.log_weights.grad[1] += T::f(1.0 - beta2 * l_s);
        br.l_super = l_s;
        g_s = Some(g);
    }
    br.objective = objective;
    Ok((br, g_e, g_s))
}

/// Full model under its training objective with fixed inputs and masks;
/// used for gradient checking in `f64`.
pub struct ModelProbe<'a> {
    pub model: PinnModel<f64>,
    pub masks: DropoutMasks<f64>,
    pub flags: LossFlags,
    pub input: &'a Matrix<f64>,
    pub e: &'a Matrix<f64>,
    pub u_h_q4: &'a Matrix<f64>,
    pub u_h_q8: &'a Matrix<f64>,
}

impl ModelProbe<'_> {
    fn heads(&self) -> Heads {
        if self.flags.l_super {
            Heads::Both
        } else {
            Heads::ErrorOnly
        }
    }

    fn run(&mut self, grad: bool, signs: Option<&mut Vec<bool>>) -> Result<f64> {
        let out = self.model.forward(self.input, &self.masks, self.heads())?;
        if let Some(signs) = signs {
            signs.clear();
            for t in out.tapes.iter().flatten() {
                push_kink_signs(t, signs);
            }
            let residual = |a: &Matrix<f64>,
                            off: Option<&Matrix<f64>>,
                            b: &Matrix<f64>,
                            signs: &mut Vec<bool>| {
                for (k, (p, t)) in a.data().iter().zip(b.data()).enumerate() {
                    signs.push(*p > t - off.map_or(0.0, |o| o.data()[k]));
                }
            };
            residual(&out.error, None, self.e, signs);
            if self.flags.l_u {
                residual(&out.error, Some(self.input), self.u_h_q4, signs);
            }
            if let Some(s) = &out.superres {
                residual(s, None, self.u_h_q8, signs);
            }
        }
        let tgt = BatchTargets {
            u_r: self.input,
            e: self.e,
            u_h_q4: self.u_h_q4,
            u_h_q8: Some(self.u_h_q8),
        };
        if grad {
            self.model.zero_grad();
        }
        let saved = self.model.log_weights.grad.clone();
        let (br, g_e, g_s) = objective_and_grads(&mut self.model, &out, &tgt, self.flags)?;
        if grad {
            self.model.backward(&out, &g_e, g_s.as_ref())?;
        } else {
            self.model.log_weights.grad = saved;
        }
        Ok(br.objective)
    }
}

impl Differentiable for ModelProbe<'_> {
    fn loss(&mut self) -> Result<f64> {
        self.run(false, None)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.run(true, None)
    }

    fn loss_with_signs(&mut self, signs: &mut Vec<bool>) -> Result<f64> {
        self.run(false, Some(signs))
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        self.model.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use rand::Rng;

    pub(crate) fn tiny_dims() -> ModelDims {
        ModelDims {
            input: 10,
            hidden_error: 6,
            hidden_super: 5,
            super_out: 14,
            dropout: 0.1,
            error_bound: ERROR_BOUND,
            super_bound: SUPER_BOUND,
        }
    }

    fn rand_matrix(rows: usize, cols: usize, scale: f64, r: &mut impl Rng) -> Matrix<f64> {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| scale * r.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parameter_count_formula() {
        let t = tiny_dims();
        let (d, a, b, o) = (t.input, t.hidden_error, t.hidden_super, t.super_out);
        // affine weights+biases, norm γ/β, three slopes, two log weights
        let want = d * d
            + d
            + 2 * d
            + (d * a + a)
            + 2 * a
            + (a * d + d)
            + (d * b + b)
            + 2 * b
            + (b * o + o)
            + 3
            + 2;
        assert_eq!(PinnModel::<f32>::new(t, 0).unwrap().num_parameters(), want);
    }

    #[test]
    fn outputs_bounded_and_eval_deterministic() {
        let m = PinnModel::<f64>::new(tiny_dims(), 1).unwrap();
        let x = rand_matrix(4, 10, 1e3, &mut rng::stream(2, &[]));
        let (e, s) = m.predict(&x, Heads::Both).unwrap();
        assert!(e.data().iter().all(|v| v.abs() < ERROR_BOUND));
        assert!(s
            .as_ref()
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() < SUPER_BOUND));
        let (e2, s2) = m.predict(&x, Heads::Both).unwrap();
        assert_eq!(e, e2);
        assert_eq!(s, s2);
        assert!(m
            .predict(
                &rand_matrix(1, 9, 1.0, &mut rng::stream(2, &[])),
                Heads::Both
            )
            .is_err());
    }

    #[test]
    fn zero_model_outputs_zero() {
        let mut m = PinnModel::<f64>::new(tiny_dims(), 1).unwrap();
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        let x = rand_matrix(2, 10, 1.0, &mut rng::stream(3, &[]));
        let (e, s) = m.predict(&x, Heads::Both).unwrap();
        assert!(e.data().iter().chain(s.unwrap().data()).all(|&v| v == 0.0));
    }

    #[test]
    fn loss_examples() {
        let p = Matrix::from_vec(1, 2, vec![1e-6, -3e-6]).unwrap();
        let z = Matrix::zeros(1, 2);
        assert!((loss_error(&p, &z).unwrap() - 2e-6).abs() < 1e-20);
        assert_eq!(loss_error(&p, &p).unwrap(), 0.0);
        let two = Matrix::from_vec(2, 2, vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(loss_error(&two, &Matrix::zeros(2, 2)).unwrap(), 2.0);

        let u_r = Matrix::from_vec(1, 2, vec![0.5, 0.25]).unwrap();
        let u_h = Matrix::from_vec(1, 2, vec![0.75, -0.25]).unwrap();
        let exact = Matrix::from_vec(1, 2, vec![0.25, -0.5]).unwrap();
        assert_eq!(loss_u(&exact, &u_r, &u_h, 1.0).unwrap(), 0.0);
        assert_eq!(loss_u(&p, &u_r, &u_h, 0.0).unwrap(), 0.0);
        let l1 = loss_u(&p, &u_r, &u_h, 1.0).unwrap();
        assert_eq!(loss_u(&p, &u_r, &u_h, 2.0).unwrap(), 2.0 * l1);

        let off = Matrix::from_vec(1, 3, vec![1.5, 2.5, -0.5]).unwrap();
        let base = Matrix::from_vec(1, 3, vec![1.0, 2.0, -1.0]).unwrap();
        assert!((loss_super(&off, &base, 0.3).unwrap() - 0.15).abs() < 1e-15);
        assert!(loss_error(&p, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn loss_super_matches_naive_sum() {
        let mut r = rng::stream(4, &[]);
        let a = rand_matrix(3, 50, 1e-3, &mut r);
        let b = rand_matrix(3, 50, 1e-3, &mut r);
        let naive: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / 150.0;
        let got = loss_super(&a, &b, 1.0).unwrap();
        assert!((got - naive).abs() <= 1e-12 * naive);
    }

    #[test]
    fn compensate_examples() {
        let u = [1.0, -2.0, 0.5];
        assert_eq!(compensate(&u, &[0.0; 3]).unwrap(), u.to_vec());
        let uh = [1.25, -2.5, 0.5];
        let e: Vec<f64> = uh.iter().zip(&u).map(|(h, r)| h - r).collect();
        assert_eq!(compensate(&u, &e).unwrap(), uh.to_vec());
        assert!(compensate(&u, &[0.0; 2]).is_err());
    }

    /// `(u_r, e, u_h_q4, u_h_q8)` at displacement scale `u` and error
    /// scale `err`; `u_h_q4` is offset from `u_r + e` so `L_u` and `L_error`
    /// differ.
    fn probe_data(seed: u64, dims: &ModelDims, u: f64, err: f64) -> [Matrix<f64>; 4] {
        let mut r = rng::stream(seed, &[]);
        let u_r = rand_matrix(3, dims.input, u, &mut r);
        let e = rand_matrix(3, dims.input, err, &mut r);
        let mut uh4 = rand_matrix(3, dims.input, 0.3 * err, &mut r);
        for ((h, a), b) in uh4.data_mut().iter_mut().zip(u_r.data()).zip(e.data()) {
            *h += a + b;
        }
        let uh8 = rand_matrix(3, dims.super_out, 50.0 * err, &mut r);
        [u_r, e, uh4, uh8]
    }

    fn check_all_cases(model: &PinnModel<f64>, data: &[Matrix<f64>; 4], tol: f64) {
        let [x, e, uh4, uh8] = data;
        let masks = model.sample_masks(3, |l| rng::stream(7, &[l as u64]));
        for flags in [LossFlags::CASE1, LossFlags::CASE2, LossFlags::CASE3] {
            let mut probe = ModelProbe {
                model: model.clone(),
                masks: masks.clone(),
                flags,
                input: x,
                e,
                u_h_q4: uh4,
                u_h_q8: uh8,
            };
            let rep = gradient_check(&mut probe, 10_000, 0).unwrap();
            assert!(rep.worst < tol, "{flags:?}: {:?}", rep.worst_block());
        }
    }

    #[test]
    fn full_model_gradient_check_at_data_scale() {
        let dims = tiny_dims();
        let model = PinnModel::<f64>::new(dims, 6).unwrap();
        // inputs of 1e-2 rather than 1e-4: the fixed step 1e-6 must stay small
        // against the pre-normalization spread or truncation error dominates
        check_all_cases(&model, &probe_data(5, &dims, 1e-2, 2e-5), 1e-4);
    }

    #[test]
    fn full_model_gradient_check_with_loss_weights() {
        // unit bounds keep gradients well above the finite-difference floor
        // set by the O(1) s-terms of the objective
        let dims = ModelDims {
            error_bound: 1.0,
            super_bound: 1.0,
            ..tiny_dims()
        };
        let mut model = PinnModel::<f64>::new(dims, 6).unwrap();
        model.log_weights.value = vec![0.3, -0.2];
        check_all_cases(&model, &probe_data(5, &dims, 0.5, 0.2), 1e-4);
    }

    #[test]
    fn all_ones_masks_match_eval_mode() {
        let [x, e, uh4, uh8] = probe_data(8, &tiny_dims(), 1e-4, 2e-5);
        let model = PinnModel::<f64>::new(tiny_dims(), 9).unwrap();
        let d = tiny_dims();
        let ones = |c| Some(Matrix::from_vec(3, c, vec![1.0; 3 * c]).unwrap());
        let mut a = ModelProbe {
            model: model.clone(),
            masks: [ones(d.input), ones(d.hidden_error), ones(d.hidden_super)],
            flags: LossFlags::CASE1,
            input: &x,
            e: &e,
            u_h_q4: &uh4,
            u_h_q8: &uh8,
        };
        let mut b = ModelProbe {
            model,
            masks: [None, None, None],
            flags: LossFlags::CASE1,
            input: &x,
            e: &e,
            u_h_q4: &uh4,
            u_h_q8: &uh8,
        };
        assert_eq!(a.loss_and_grad().unwrap(), b.loss_and_grad().unwrap());
        let ga: Vec<Vec<f64>> = a.model.params().iter().map(|p| p.grad.clone()).collect();
        let gb: Vec<Vec<f64>> = b.model.params().iter().map(|p| p.grad.clone()).collect();
        assert_eq!(ga, gb);
    }

    #[test]
    fn case3_objective_is_l_error() {
        let [x, e, uh4, uh8] = probe_data(10, &tiny_dims(), 1e-4, 2e-5);
        let mut model = PinnModel::<f64>::new(tiny_dims(), 11).unwrap();
        let out = model
            .forward(&x, &[None, None, None], Heads::ErrorOnly)
            .unwrap();
        let tgt = BatchTargets {
            u_r: &x,
            e: &e,
            u_h_q4: &uh4,
            u_h_q8: Some(&uh8),
        };
        let (br, _, gs) = objective_and_grads(&mut model, &out, &tgt, LossFlags::CASE3).unwrap();
        assert_eq!(br.objective, br.l_error);
        assert_eq!(br.objective, loss_error(&out.error, &e).unwrap());
        assert!(gs.is_none());
    }
}
