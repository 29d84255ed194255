//! Monte Carlo dropout prediction.

use super::{Heads, PinnModel};
use crate::error::{check_len, Error, Result};
use crate::nn::{Matrix, Real};
use crate::rng;

/// Passes evaluated together; every chunk is full-height so each row goes
/// through identical kernels.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    pub mean_super: Vec<f64>,
    pub std_super: Vec<f64>,
    pub passes: usize,
}

/// Kahan-compensated running sums of deviations from a fixed shift.
struct Moments {
    shift: Vec<f64>,
    s1: Vec<f64>,
    c1: Vec<f64>,
    s2: Vec<f64>,
    c2: Vec<f64>,
}

fn kahan(sum: &mut f64, comp: &mut f64, x: f64) {
    let y = x - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

impl Moments {
    fn new(shift: Vec<f64>) -> Self {
        let n = shift.len();
        Self {
            shift,
            s1: vec![0.0; n],
            c1: vec![0.0; n],
            s2: vec![0.0; n],
            c2: vec![0.0; n],
        }
    }

    fn add(&mut self, row: &[f64]) {
        for k in 0..row.len() {
            let d = row[k] - self.shift[k];
            kahan(&mut self.s1[k], &mut self.c1[k], d);
            kahan(&mut self.s2[k], &mut self.c2[k], d * d);
        }
    }

    /// Mean and population standard deviation.
    fn finish(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let n = n as f64;
        let mean = self
            .s1
            .iter()
            .zip(&self.shift)
            .map(|(s, c)| c + s / n)
            .collect();
        let std = self
            .s1
            .iter()
            .zip(&self.s2)
            .map(|(s1, s2)| {
                let m = s1 / n;
                (s2 / n - m * m).max(0.0).sqrt()
            })
            .collect();
        (mean, std)
    }
}

fn to_f64<T: Real>(row: &[T]) -> Vec<f64> {
    row.iter().map(|v| v.to_f64().unwrap()).collect()
}

/// Runs `n_passes` stochastic forward passes with dropout active. Pass `k`
/// draws its masks from streams keyed by `(seed, k, layer)`, so results do
/// not depend on how passes are grouped.
pub fn mc_dropout_predict<T: Real>(
    model: &PinnModel<T>,
    u_r: &[f64],
    n_passes: usize,
    seed: u64,
) -> Result<McPrediction> {
    if n_passes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 passes, got {n_passes}"
        )));
    }
    check_len("mc_dropout_predict input", model.input_dim(), u_r.len())?;
    let row: Vec<T> = u_r.iter().map(|&v| T::f(v)).collect();
    let x = Matrix::from_rows(&vec![row; CHUNK])?;

    // The eval-mode output doubles as the shift: a zero dropout rate then
    // yields exactly zero deviations.
    let (e0, s0) = model.predict(&x, Heads::Both)?;
    let mut me = Moments::new(to_f64(e0.row(0)));
    let mut ms = Moments::new(to_f64(s0.expect("both heads").row(0)));

    let mut done = 0;
    while done < n_passes {
        let masks_rows: Vec<_> = (0..CHUNK)
            .map(|i| {
                model.sample_masks(1, |l| {
                    rng::stream(seed, &[rng::tag::MC, (done + i) as u64, l as u64])
                })
            })
            .collect();
        let stack = |layer: usize| -> Result<Option<Matrix<T>>> {
            if masks_rows[0][layer].is_none() {
                return Ok(None);
            }
            let rows: Vec<&[T]> = masks_rows
                .iter()
                .map(|m| m[layer].as_ref().unwrap().data())
                .collect();
            Ok(Some(Matrix::from_rows(&rows)?))
        };
        let masks = [stack(0)?, stack(1)?, stack(2)?];
        let out = model.forward(&x, &masks, Heads::Both)?;
        let sup = out.superres.as_ref().expect("both heads");
        let take = CHUNK.min(n_passes - done);
        for r in 0..take {
            me.add(&to_f64(out.error.row(r)));
            ms.add(&to_f64(sup.row(r)));
        }
        done += take;
    }
    let (mean_error, std_error) = me.finish(n_passes);
    let (mean_super, std_super) = ms.finish(n_passes);
    Ok(McPrediction {
        mean_error,
        std_error,
        mean_super,
        std_super,
        passes: n_passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny_dims;

    fn input() -> Vec<f64> {
        (0..tiny_dims().input)
            .map(|k| ((k as f64) * 0.7).sin() * 1e-4)
            .collect()
    }

    #[test]
    fn zero_rate_gives_zero_std_and_eval_mean() {
        let mut model = PinnModel::<f32>::new(tiny_dims(), 3).unwrap();
        model.set_dropout(0.0).unwrap();
        let p = mc_dropout_predict(&model, &input(), 50, 1).unwrap();
        assert!(p.std_error.iter().chain(&p.std_super).all(|&s| s == 0.0));
        let x =
            Matrix::from_rows(&[input().iter().map(|&v| v as f32).collect::<Vec<_>>()]).unwrap();
        let (e, s) = model.predict(&x, Heads::Both).unwrap();
        assert_eq!(p.mean_error, to_f64(e.row(0)));
        assert_eq!(p.mean_super, to_f64(s.unwrap().row(0)));
    }

    #[test]
    fn active_dropout_spreads_and_is_deterministic() {
        let model = PinnModel::<f32>::new(tiny_dims(), 3).unwrap();
        let a = mc_dropout_predict(&model, &input(), 200, 5).unwrap();
        assert!(a.std_error.iter().chain(&a.std_super).all(|&s| s > 0.0));
        assert_eq!(a, mc_dropout_predict(&model, &input(), 200, 5).unwrap());
        assert_ne!(a, mc_dropout_predict(&model, &input(), 200, 6).unwrap());
        assert!(mc_dropout_predict(&model, &input(), 1, 5).is_err());
    }

    #[test]
    fn moments_match_two_pass_formula() {
        let rows = [[1.0, 2.0], [3.0, -2.0], [2.0, 0.5]];
        let mut m = Moments::new(vec![0.25, 0.0]);
        for r in &rows {
            m.add(r);
        }
        let (mean, std) = m.finish(3);
        for k in 0..2 {
            let mu = rows.iter().map(|r| r[k]).sum::<f64>() / 3.0;
            let var = rows.iter().map(|r| (r[k] - mu).powi(2)).sum::<f64>() / 3.0;
            assert!((mean[k] - mu).abs() < 1e-14);
            assert!((std[k] - var.sqrt()).abs() < 1e-14);
        }
    }
}
