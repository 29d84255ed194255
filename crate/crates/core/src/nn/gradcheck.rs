use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::{Layer, Matrix, Param, Tape};
use crate::error::Result;
use crate::rng;

/// Something with a scalar loss and `f64` parameter blocks.
pub trait Differentiable {
    /// Loss at the current parameter values.
    fn loss(&mut self) -> Result<f64>;
    /// Zeroes gradients, runs forward and backward, returns the loss.
    fn loss_and_grad(&mut self) -> Result<f64>;
    fn params_mut(&mut self) -> Vec<&mut Param<f64>>;
    /// Loss plus the sign of every point where the loss is not smooth
    /// (activation kinks, absolute-value residuals). Smooth objectives
    /// leave `signs` empty.
    fn loss_with_signs(&mut self, signs: &mut Vec<bool>) -> Result<f64> {
        signs.clear();
        self.loss()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub name: String,
    pub checked: usize,
    /// Entries whose difference stencil crossed a kink at every step tried.
    pub skipped: usize,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub blocks: Vec<BlockError>,
    pub worst: f64,
}

impl GradReport {
    pub fn checked(&self) -> usize {
        self.blocks.iter().map(|b| b.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.blocks.iter().map(|b| b.skipped).sum()
    }

    pub fn worst_block(&self) -> Option<&BlockError> {
        self.blocks
            .iter()
            .max_by(|a, b| a.worst.total_cmp(&b.worst))
    }
}

/// Relative finite-difference steps, tried in order. Losses here are often
/// 1e-5 or smaller, where a step near 1e-6 is dominated by round-off.
pub const FD_STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];

/// Compares analytic gradients against the fourth-order central difference
/// with step `h·max(1, |θ|)`. Blocks larger than `max_entries` are checked on
/// a seeded random subset. The error per entry is
/// `|g_analytic − g_fd| / max(|g_fd|, 1e-12)`.
///
/// A stencil that changes the sign of any kink does not measure a
/// derivative; such an entry is retried with the next smaller step and
/// counted as skipped when every step crosses.
pub fn gradient_check<D: Differentiable + ?Sized>(
    obj: &mut D,
    max_entries: usize,
    seed: u64,
) -> Result<GradReport> {
    obj.loss_and_grad()?;
    let mut base = Vec::new();
    obj.loss_with_signs(&mut base)?;
    let mut signs = Vec::new();
    let analytic: Vec<Vec<f64>> = obj.params_mut().iter().map(|p| p.grad.clone()).collect();
    let names: Vec<String> = obj.params_mut().iter().map(|p| p.name.clone()).collect();
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let len = analytic[b].len();
        let entries: Vec<usize> = if len <= max_entries {
            (0..len).collect()
        } else {
            let mut r = rng::stream(seed, &[rng::tag::GRADCHECK, b as u64]);
            let mut v = sample(&mut r, len, max_entries).into_vec();
            v.sort_unstable();
            v
        };
        let (mut worst, mut skipped) = (0.0f64, 0);
        for &i in &entries {
            let theta = obj.params_mut()[b].value[i];
            let mut fd = None;
            for rel in FD_STEPS {
                let h = rel * theta.abs().max(1.0);
                let mut smooth = true;
                let mut at = |obj: &mut D, k: f64| -> Result<f64> {
                    obj.params_mut()[b].value[i] = theta + k * h;
                    let l = obj.loss_with_signs(&mut signs)?;
                    smooth &= signs == base;
                    Ok(l)
                };
                let (l1, lm1, l2, lm2) =
                    (at(obj, 1.0)?, at(obj, -1.0)?, at(obj, 2.0)?, at(obj, -2.0)?);
                obj.params_mut()[b].value[i] = theta;
                if smooth {
                    fd = Some((8.0 * (l1 - lm1) - (l2 - lm2)) / (12.0 * h));
                    break;
                }
            }
            match fd {
                Some(fd) => worst = worst.max((analytic[b][i] - fd).abs() / fd.abs().max(1e-12)),
                None => skipped += 1,
            }
        }
        blocks.push(BlockError {
            name,
            checked: entries.len() - skipped,
            skipped,
            worst,
        });
    }
    let worst = blocks.iter().map(|b| b.worst).fold(0.0, f64::max);
    Ok(GradReport { blocks, worst })
}

/// A single layer under the loss `Σ r ⊙ layer(x)` with a fixed random
/// readout `r`. The input is exposed as a parameter block so the input
/// gradient is checked too.
pub struct LayerProbe {
    pub layer: Layer<f64>,
    pub input: Param<f64>,
    pub mask: Option<Matrix<f64>>,
    pub readout: Vec<f64>,
}

impl LayerProbe {
    /// Random input in `[-1, 1]` and readout in `[-1, 1]`.
    pub fn new<R: Rng + ?Sized>(
        layer: Layer<f64>,
        rows: usize,
        cols: usize,
        out_cols: usize,
        rng: &mut R,
    ) -> Self {
        let input = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let readout = (0..rows * out_cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Self {
            layer,
            input: Param::new("input", rows, cols, input),
            mask: None,
            readout,
        }
    }

    fn x(&self) -> Matrix<f64> {
        Matrix::from_vec(self.input.rows, self.input.cols, self.input.value.clone()).unwrap()
    }
}

/// Appends the sign of every activation kink recorded on `tape`.
pub fn push_kink_signs(tape: &Tape<f64>, signs: &mut Vec<bool>) {
    if let Tape::PRelu { input } = tape {
        signs.extend(input.data().iter().map(|v| *v > 0.0));
    }
}

impl Differentiable for LayerProbe {
    fn loss_with_signs(&mut self, signs: &mut Vec<bool>) -> Result<f64> {
        let (y, tape) = self.layer.forward(&self.x(), self.mask.as_ref())?;
        signs.clear();
        push_kink_signs(&tape, signs);
        Ok(y.data().iter().zip(&self.readout).map(|(a, b)| a * b).sum())
    }

    fn loss(&mut self) -> Result<f64> {
        let (y, _) = self.layer.forward(&self.x(), self.mask.as_ref())?;
        Ok(y.data().iter().zip(&self.readout).map(|(a, b)| a * b).sum())
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        for p in self.params_mut() {
            p.zero_grad();
        }
        let (y, tape) = self.layer.forward(&self.x(), self.mask.as_ref())?;
        let gy = Matrix::from_vec(y.rows(), y.cols(), self.readout.clone())?;
        let gx = self.layer.backward(&tape, &gy)?;
        self.input.grad.copy_from_slice(gx.data());
        Ok(y.data().iter().zip(&self.readout).map(|(a, b)| a * b).sum())
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        let mut v = self.layer.params_mut();
        v.push(&mut self.input);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Affine, BoundedSigmoid, Dropout, InstanceNorm, PRelu};

    fn check(layer: Layer<f64>, cols: usize, out_cols: usize, seed: u64, mask: bool) -> GradReport {
        let mut r = rng::stream(seed, &[]);
        let mut probe = LayerProbe::new(layer, 3, cols, out_cols, &mut r);
        if mask {
            probe.mask = Dropout::new(0.3).unwrap().sample_mask(3, cols, &mut r);
        }
        gradient_check(&mut probe, 1_000, seed).unwrap()
    }

    #[test]
    fn every_layer_kind_matches_finite_differences() {
        let mut r = rng::stream(1, &[]);
        let affine = Layer::Affine(Affine::new("a", 6, 4, &mut r));
        assert!(check(affine, 6, 4, 2, false).worst < 1e-8);

        let mut norm = InstanceNorm::new("n", 7);
        for (k, g) in norm.gamma.value.iter_mut().enumerate() {
            *g = 0.5 + 0.1 * k as f64;
        }
        assert!(check(Layer::InstanceNorm(norm), 7, 7, 3, false).worst < 1e-6);

        let mut prelu = PRelu::new("p");
        prelu.slope.value[0] = 0.3;
        assert!(check(Layer::PRelu(prelu), 8, 8, 4, false).worst < 1e-6);

        let drop = Layer::Dropout(Dropout::new(0.3).unwrap());
        assert!(check(drop, 5, 5, 5, true).worst < 1e-6);

        let sig = Layer::BoundedSigmoid(BoundedSigmoid::new(1.0).unwrap());
        assert!(check(sig, 4, 4, 6, false).worst < 1e-6);
    }

    #[test]
    fn stencils_across_a_kink_are_retried_or_skipped() {
        let mut r = rng::stream(7, &[]);
        let mut probe = LayerProbe::new(Layer::PRelu(PRelu::new("p")), 1, 3, 3, &mut r);
        // crossed by every step, by the two larger steps, and by none
        probe.input.value = vec![5e-6, 1.5e-4, 0.5];
        let rep = gradient_check(&mut probe, 100, 0).unwrap();
        let input = rep.blocks.iter().find(|b| b.name == "input").unwrap();
        assert_eq!((input.checked, input.skipped), (2, 1));
        assert!(rep.worst < 1e-8);
        assert_eq!(rep.skipped(), 1);
    }

    #[test]
    fn sampled_blocks_report_counts() {
        let mut r = rng::stream(1, &[]);
        let affine = Layer::Affine(Affine::new("a", 8, 8, &mut r));
        let mut probe = LayerProbe::new(affine, 2, 8, 8, &mut r);
        let rep = gradient_check(&mut probe, 10, 0).unwrap();
        assert_eq!(rep.blocks[0].name, "a.weight");
        assert_eq!(rep.blocks[0].checked, 10);
        assert_eq!(rep.blocks[1].checked, 8);
    }
}
