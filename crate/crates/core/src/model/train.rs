use std::io::Write;
use std::ops::Range;

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{objective_and_grads, BatchTargets, Heads, LossFlags, PinnModel};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::nn::{Matrix, Param, Real};
use crate::rng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Samples drawn (without replacement) from the training set per epoch.
    pub epoch_subsample: usize,
    pub lr0: f64,
    /// Multiplicative learning-rate decay per epoch.
    pub decay: f64,
    pub max_epochs: usize,
    /// Input noise std relative to the per-feature RMS of the training inputs.
    pub input_noise_rel: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epoch_subsample: 4096,
            lr0: 1e-5,
            decay: 0.99,
            max_epochs: 300,
            input_noise_rel: 1e-4,
            patience: 20,
            min_delta: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train.{m}")));
        if self.batch_size == 0
            || self.epoch_subsample == 0
            || self.max_epochs == 0
            || self.patience == 0
        {
            return bad("batch_size, epoch_subsample, max_epochs and patience must be positive");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if !(self.input_noise_rel >= 0.0) || !(self.min_delta >= 0.0) {
            return bad("input_noise_rel and min_delta must be non-negative");
        }
        Ok(())
    }
}

/// Network-ready matrices for a set of samples.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    pub u_r: Matrix<T>,
    pub e: Matrix<T>,
    pub u_h_q4: Matrix<T>,
    /// Only materialized when the super head is trained or evaluated.
    pub u_h_q8: Option<Matrix<T>>,
}

impl<T: Real> TrainingSet<T> {
    pub fn from_samples(samples: &[Sample], with_super: bool) -> Result<Self> {
        let conv = |f: &dyn Fn(&Sample) -> &Vec<f64>| -> Result<Matrix<T>> {
            let rows: Vec<Vec<T>> = samples
                .iter()
                .map(|s| f(s).iter().map(|&v| T::f(v)).collect())
                .collect();
            Matrix::from_rows(&rows)
        };
        Ok(Self {
            u_r: conv(&|s| &s.u_r)?,
            e: conv(&|s| &s.e)?,
            u_h_q4: conv(&|s| &s.u_h_q4)?,
            u_h_q8: if with_super {
                Some(conv(&|s| &s.u_h_q8)?)
            } else {
                None
            },
        })
    }

    pub fn len(&self) -> usize {
        self.u_r.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn gather<T: Real>(m: &Matrix<T>, idx: &[usize]) -> Matrix<T> {
    let mut out = Matrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &[&Param<T>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            t: 0,
        }
    }

    /// One update of every block outside `skip`.
    pub fn step(&mut self, params: Vec<&mut Param<T>>, lr: f64, skip: Range<usize>) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let (b1, b2) = (T::f(ADAM_BETA1), T::f(ADAM_BETA2));
        let (ob1, ob2) = (T::f(1.0 - ADAM_BETA1), T::f(1.0 - ADAM_BETA2));
        let (step, inv_c2, eps) = (T::f(lr / c1), T::f(1.0 / c2), T::f(ADAM_EPS));
        for (k, p) in params.into_iter().enumerate() {
            if skip.contains(&k) {
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + ob1 * g;
                v[i] = b2 * v[i] + ob2 * g * g;
                p.value[i] -= step * m[i] / ((v[i] * inv_c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's batches (train mode: noise and dropout on).
    pub l_error_train: f64,
    /// Eval-mode mean over the test set.
    pub l_error_test: f64,
    pub l_u_raw: f64,
    pub l_super_raw: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub batch: usize,
    pub objective: f64,
    pub l_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest test `L_error`.
    pub model: PinnModel<T>,
    pub optimizer: Adam<T>,
    pub history: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Eval-mode `L_error` over a whole set (per-sample means, averaged).
pub fn mean_l_error<T: Real>(model: &PinnModel<T>, set: &TrainingSet<T>) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(64) {
        let (e, _) = model.predict(&gather(&set.u_r, chunk), Heads::ErrorOnly)?;
        total += super::loss_error(&e, &gather(&set.e, chunk))? * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

fn feature_rms<T: Real>(m: &Matrix<T>) -> Vec<f64> {
    let mut acc = vec![0.0f64; m.cols()];
    for r in 0..m.rows() {
        for (a, v) in acc.iter_mut().zip(m.row(r)) {
            let v = v.to_f64().unwrap();
            *a += v * v;
        }
    }
    acc.iter()
        .map(|s| (s / m.rows().max(1) as f64).sqrt())
        .collect()
}

/// Trains `model` and returns the best-on-test checkpoint.
pub fn train<T: Real>(
    mut model: PinnModel<T>,
    train_set: &TrainingSet<T>,
    test_set: &TrainingSet<T>,
    cfg: &TrainConfig,
    flags: LossFlags,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidArgument(
            "training and test sets must be nonempty".into(),
        ));
    }
    if flags.l_super && train_set.u_h_q8.is_none() {
        return Err(Error::InvalidArgument(
            "L_super needs u_h_q8 in the training set".into(),
        ));
    }
    let n = train_set.len();
    let sub = if cfg.epoch_subsample > n {
        log::warn!(
            "epoch_subsample {} exceeds the training set ({n}); using {n}",
            cfg.epoch_subsample
        );
        n
    } else {
        cfg.epoch_subsample
    };
    let noise_std: Vec<T> = feature_rms(&train_set.u_r)
        .iter()
        .map(|r| T::f(r * cfg.input_noise_rel))
        .collect();
    let heads = if flags.l_super {
        Heads::Both
    } else {
        Heads::ErrorOnly
    };
    let frozen = if flags.l_super {
        0..0
    } else {
        model.super_param_range()
    };
    let mut adam = Adam::new(&model.params());

    let mut history = Vec::new();
    let mut steps = Vec::new();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let lr = cfg.lr0 * cfg.decay.powi(epoch as i32 - 1);
        let order = sample(
            &mut rng::stream(cfg.seed, &[rng::tag::SUBSAMPLE, epoch as u64]),
            n,
            sub,
        )
        .into_vec();
        let mut sums = [0.0f64; 4];
        let mut n_batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = gather(&train_set.u_r, chunk);
            let mut noise = rng::stream(cfg.seed, &[rng::tag::NOISE, epoch as u64, b as u64]);
            for r in 0..x.rows() {
                for (v, s) in x.row_mut(r).iter_mut().zip(&noise_std) {
                    let z: f64 = StandardNormal.sample(&mut noise);
                    *v += *s * T::f(z);
                }
            }
            let e = gather(&train_set.e, chunk);
            let uh4 = gather(&train_set.u_h_q4, chunk);
            let uh8 = if flags.l_super {
                train_set.u_h_q8.as_ref().map(|m| gather(m, chunk))
            } else {
                None
            };
            let masks = model.sample_masks(chunk.len(), |l| {
                rng::stream(
                    cfg.seed,
                    &[rng::tag::DROPOUT, epoch as u64, b as u64, l as u64],
                )
            });
            let out = model.forward(&x, &masks, heads)?;
            model.zero_grad();
            let tgt = BatchTargets {
                u_r: &x,
                e: &e,
                u_h_q4: &uh4,
                u_h_q8: uh8.as_ref(),
            };
            let (br, g_e, g_s) = objective_and_grads(&mut model, &out, &tgt, flags)?;
            if !br.objective.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    value: br.objective,
                });
            }
            model.backward(&out, &g_e, g_s.as_ref())?;
            adam.step(model.params_mut(), lr, frozen.clone());
            steps.push(StepRecord {
                epoch,
                batch: b,
                objective: br.objective,
                l_error: br.l_error,
            });
            sums[0] += br.l_error;
            sums[1] += br.l_u;
            sums[2] += br.l_super;
            sums[3] += br.objective;
            n_batches += 1;
        }
        let [beta1, beta2] = model.betas();
        if !(beta1 > 0.0 && beta2 > 0.0 && beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                batch: n_batches,
                value: beta1.min(beta2),
            });
        }
        let test = mean_l_error(&model, test_set)?;
        let nb = n_batches as f64;
        let rec = EpochRecord {
            epoch,
            lr,
            l_error_train: sums[0] / nb,
            l_error_test: test,
            l_u_raw: sums[1] / nb,
            l_super_raw: sums[2] / nb,
            beta1,
            beta2,
            objective: sums[3] / nb,
        };
        log::info!(
            "epoch {epoch}: train {:.4e} test {:.4e} objective {:.4e}",
            rec.l_error_train,
            rec.l_error_test,
            rec.objective
        );
        history.push(rec);
        if test < best.0 - cfg.min_delta {
            best = (test, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        optimizer: adam,
        history,
        steps,
        best_epoch: best.2,
        stopped_early,
    })
}

pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochRecord]) -> Result<()> {
    writeln!(
        w,
        "epoch,lr,l_error_train,l_error_test,l_u_raw,l_super_raw,beta1,beta2,objective"
    )?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.lr,
            r.l_error_train,
            r.l_error_test,
            r.l_u_raw,
            r.l_super_raw,
            r.beta1,
            r.beta2,
            r.objective
        )?;
    }
    Ok(())
}
