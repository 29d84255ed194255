//! Gaussian random elastic-modulus fields.
//!
//! One realization is drawn jointly over the element centroids of both meshes,
//! so the coarse and fine discretizations see the same underlying field.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseCholesky;
use crate::mesh::Mesh;

/// Material and load randomization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Mean elastic modulus E0 (Pa).
    pub mean: f64,
    /// Per-sample field std is drawn uniformly from this range, times `mean`.
    pub std_fraction: [f64; 2],
    /// Correlation lengths in x and y (m).
    pub corr_len: [f64; 2],
    pub nugget: f64,
    /// Moduli are clamped from below at `floor_fraction · mean`.
    pub floor_fraction: f64,
    /// Edge force per unit length range (N/m).
    pub load_range: [f64; 2],
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            mean: 2.0e11,
            std_fraction: [0.1, 0.5],
            corr_len: [0.25, 0.25],
            nugget: 1e-10,
            floor_fraction: 0.05,
            load_range: [1.0, 5.0e5],
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.mean > 0.0) {
            return bad(format!("material.mean must be positive, got {}", self.mean));
        }
        let [lo, hi] = self.std_fraction;
        if !(0.0 <= lo && lo <= hi) {
            return bad(format!(
                "material.std_fraction must satisfy 0 <= lo <= hi, got {lo}, {hi}"
            ));
        }
        if !(self.corr_len[0] > 0.0 && self.corr_len[1] > 0.0) {
            return bad("material.corr_len must be positive".into());
        }
        if !(self.nugget >= 0.0) || !(self.floor_fraction >= 0.0) {
            return bad("material.nugget and material.floor_fraction must be nonnegative".into());
        }
        let [a, b] = self.load_range;
        if !(a <= b) || !a.is_finite() || !b.is_finite() {
            return bad(format!(
                "material.load_range must satisfy lo <= hi, got {a}, {b}"
            ));
        }
        Ok(())
    }

    /// Separable squared-exponential correlation.
    pub fn correlation(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        let dx = (p[0] - q[0]) / self.corr_len[0];
        let dy = (p[1] - q[1]) / self.corr_len[1];
        (-(dx * dx) - dy * dy).exp()
    }
}

/// Field parameters plus the points the field is evaluated at, and which of
/// those points are the coarse and fine element centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct GrfSpec {
    pub params: MaterialParams,
    pub eval_points: Vec<[f64; 2]>,
    pub q4_sites: Range<usize>,
    pub q8_sites: Range<usize>,
}

impl GrfSpec {
    /// Evaluation sites: coarse element centroids followed by fine ones. When
    /// both meshes are the same discretization the sites are shared.
    pub fn for_meshes(params: MaterialParams, q4: &Mesh, q8: &Mesh) -> Self {
        let mut eval_points = q4.element_centroids();
        let n4 = eval_points.len();
        let fine = q8.element_centroids();
        if fine == eval_points {
            return Self::at_points(params, eval_points);
        }
        eval_points.extend(fine);
        let n = eval_points.len();
        Self {
            params,
            eval_points,
            q4_sites: 0..n4,
            q8_sites: n4..n,
        }
    }

    /// Arbitrary points, shared by both sides.
    pub fn at_points(params: MaterialParams, eval_points: Vec<[f64; 2]>) -> Self {
        let n = eval_points.len();
        Self {
            params,
            eval_points,
            q4_sites: 0..n,
            q8_sites: 0..n,
        }
    }
}

/// Lower Cholesky factor of `C + nugget·I` over a spec's evaluation points.
#[derive(Debug, Clone)]
pub struct CorrelationFactor {
    chol: DenseCholesky,
    nugget: f64,
}

impl CorrelationFactor {
    pub fn lower(&self) -> &DenseCholesky {
        &self.chol
    }

    /// Nugget actually used (raised above the requested one if the
    /// factorization needed it).
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }
}

const MAX_NUGGET: f64 = 1e-6;

pub fn build_correlation_factor(spec: &GrfSpec) -> Result<CorrelationFactor> {
    spec.params.validate()?;
    let pts = &spec.eval_points;
    if pts.is_empty() {
        return Err(Error::InvalidArgument(
            "GRF needs at least one evaluation point".into(),
        ));
    }
    let mut sorted = pts.clone();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(
            "GRF evaluation points must be distinct".into(),
        ));
    }

    let mut nugget = spec.params.nugget;
    loop {
        let entry = |i: usize, j: usize| {
            let c = spec.params.correlation(pts[i], pts[j]);
            if i == j {
                c + nugget
            } else {
                c
            }
        };
        match DenseCholesky::factor(pts.len(), entry) {
            Ok(chol) => return Ok(CorrelationFactor { chol, nugget }),
            Err(err) if nugget < MAX_NUGGET => {
                let raised = if nugget > 0.0 { nugget * 10.0 } else { 1e-12 };
                log::warn!("correlation factorization failed ({err}); raising nugget {nugget:e} -> {raised:e}");
                nugget = raised;
            }
            Err(err) => return Err(err),
        }
    }
}

/// One modulus field on both meshes plus the sampled edge load.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRealization {
    pub e_q4: Vec<f64>,
    pub e_q8: Vec<f64>,
    /// Edge force per unit length (N/m).
    pub load: f64,
    /// Field standard deviation used for this realization (Pa).
    pub std_used: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * u
    }
}

/// Draws `E = mean + std·L z` with `z` i.i.d. standard normal, floors it, and
/// draws the edge load.
pub fn sample_realization<R: Rng + ?Sized>(
    factor: &CorrelationFactor,
    spec: &GrfSpec,
    rng: &mut R,
) -> Result<MaterialRealization> {
    if factor.dim() != spec.eval_points.len() {
        return Err(Error::DimensionMismatch {
            context: "sample_realization",
            expected: spec.eval_points.len(),
            actual: factor.dim(),
        });
    }
    let p = &spec.params;
    let std_used = p.mean * uniform(rng, p.std_fraction);
    let load = uniform(rng, p.load_range);
    let z: Vec<f64> = (0..factor.dim())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let correlated = factor.lower().mul_vec(&z)?;
    let floor = p.floor_fraction * p.mean;
    let field: Vec<f64> = correlated
        .iter()
        .map(|&g| (p.mean + std_used * g).max(floor))
        .collect();
    Ok(MaterialRealization {
        e_q4: field[spec.q4_sites.clone()].to_vec(),
        e_q8: field[spec.q8_sites.clone()].to_vec(),
        load,
        std_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, ElementOrder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn single_point_factor() {
        let spec = GrfSpec::at_points(MaterialParams::default(), vec![[0.3, 0.3]]);
        let f = build_correlation_factor(&spec).unwrap();
        assert_eq!(f.lower().get(0, 0), (1.0 + 1e-10f64).sqrt());
    }

    #[test]
    fn kernel_at_one_correlation_length() {
        let p = MaterialParams::default();
        let c = p.correlation([0.5, 0.2], [0.5, 0.45]);
        assert!((c - (-1.0f64).exp()).abs() < 1e-15);
        assert!((c - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn factor_reproduces_correlation_on_mesh_centroids() {
        let q4 = build_mesh(ElementOrder::Q4, 4, 8).unwrap();
        let q8 = build_mesh(ElementOrder::Q8, 8, 16).unwrap();
        let spec = GrfSpec::for_meshes(MaterialParams::default(), &q4, &q8);
        let f = build_correlation_factor(&spec).unwrap();
        let l = f.lower();
        let n = spec.eval_points.len();
        for i in (0..n).step_by(7) {
            for j in (0..=i).step_by(3) {
                let llt: f64 = (0..=j).map(|k| l.get(i, k) * l.get(j, k)).sum();
                let mut c = spec
                    .params
                    .correlation(spec.eval_points[i], spec.eval_points[j]);
                if i == j {
                    c += f.nugget();
                }
                assert!((llt - c).abs() <= 1e-10, "({i},{j}) {llt} vs {c}");
            }
        }
    }

    #[test]
    fn duplicate_points_rejected() {
        let spec = GrfSpec::at_points(MaterialParams::default(), vec![[0.1, 0.1], [0.1, 0.1]]);
        assert!(build_correlation_factor(&spec).is_err());
    }

    #[test]
    fn zero_std_gives_exact_mean_and_determinism() {
        let params = MaterialParams {
            std_fraction: [0.0, 0.0],
            ..Default::default()
        };
        let q4 = build_mesh(ElementOrder::Q4, 2, 4).unwrap();
        let q8 = build_mesh(ElementOrder::Q8, 4, 8).unwrap();
        let spec = GrfSpec::for_meshes(params, &q4, &q8);
        let f = build_correlation_factor(&spec).unwrap();
        let r = sample_realization(&f, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.e_q4.len(), 8);
        assert_eq!(r.e_q8.len(), 32);
        assert!(r.e_q4.iter().chain(&r.e_q8).all(|&e| e == 2.0e11));
        assert!((1.0..=5e5).contains(&r.load));

        let spec = GrfSpec::for_meshes(MaterialParams::default(), &q4, &q8);
        let f = build_correlation_factor(&spec).unwrap();
        let a = sample_realization(&f, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_realization(&f, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!((0.1 * 2e11..=0.5 * 2e11).contains(&a.std_used));
    }

    #[test]
    fn floor_is_enforced() {
        let params = MaterialParams {
            std_fraction: [3.0, 3.0],
            ..Default::default()
        };
        let pts: Vec<[f64; 2]> = (0..20).map(|k| [0.05 * k as f64, 0.0]).collect();
        let spec = GrfSpec::at_points(params, pts);
        let f = build_correlation_factor(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut floored = 0;
        for _ in 0..50 {
            let r = sample_realization(&f, &spec, &mut rng).unwrap();
            for &e in &r.e_q4 {
                assert!(e >= 0.05 * 2e11);
                floored += usize::from(e == 0.05 * 2e11);
            }
        }
        assert!(floored > 0);
    }

    #[test]
    fn marginal_passes_kolmogorov_smirnov() {
        // unfloored marginal at one site is N(mean, std_used)
        let params = MaterialParams {
            std_fraction: [0.2, 0.2],
            floor_fraction: 0.0,
            ..Default::default()
        };
        let pts = vec![[0.2, 0.7], [0.5, 0.5], [0.6, 0.1]];
        let spec = GrfSpec::at_points(params, pts);
        let f = build_correlation_factor(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 6000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_realization(&f, &spec, &mut rng).unwrap().e_q4[1])
            .collect();
        draws.sort_by(f64::total_cmp);
        let dist = Normal::new(2e11, 0.2 * 2e11).unwrap();
        let d = draws
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let c = dist.cdf(x);
                (c - k as f64 / n as f64)
                    .abs()
                    .max(((k + 1) as f64 / n as f64 - c).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic critical value at alpha = 0.01
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }
}
