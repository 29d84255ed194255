//! Post-training analyses: prediction-difference histograms, per-node
//! absolute-difference maps, nodal comparisons, loss-term ablations,
//! superresolution exports and SVG heatmaps.
//!
//! Every analysis produces data first (CSV); images are rendered from that
//! data alone.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::dataset::Sample;
use crate::error::{check_len, Error, Result};
use crate::mesh::{ElementOrder, Mesh};
use crate::model::{
    train, LossFlags, ModelDims, PinnModel, TrainConfig, TrainOutcome, TrainingSet,
};
use crate::nn::{Matrix, Real};

pub const HISTOGRAM_BINS: usize = 101;
/// Half-width of the histogram range in robust standard deviations.
pub const HISTOGRAM_SPAN: f64 = 5.0;
/// MAD to standard deviation for a normal distribution.
pub const MAD_SCALE: f64 = 1.4826;
/// Epochs averaged in the ablation table.
pub const ABLATION_WINDOW: usize = 10;

/// Eval-mode predictions for a list of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub error: Vec<Vec<f64>>,
    /// Present when the super head was evaluated.
    pub superres: Option<Vec<Vec<f64>>>,
}

pub fn predict_samples<T: Real>(
    model: &PinnModel<T>,
    samples: &[Sample],
    with_super: bool,
) -> Result<Predictions> {
    use crate::model::Heads;
    let heads = if with_super {
        Heads::Both
    } else {
        Heads::ErrorOnly
    };
    let mut error = Vec::with_capacity(samples.len());
    let mut superres = with_super.then(Vec::new);
    for chunk in samples.chunks(32) {
        let rows: Vec<Vec<T>> = chunk
            .iter()
            .map(|s| s.u_r.iter().map(|&v| T::f(v)).collect())
            .collect();
        let (e, u) = model.predict(&Matrix::from_rows(&rows)?, heads)?;
        let to64 = |m: &Matrix<T>, r: usize| {
            m.row(r)
                .iter()
                .map(|v| v.to_f64().unwrap())
                .collect::<Vec<f64>>()
        };
        for r in 0..chunk.len() {
            error.push(to64(&e, r));
            if let (Some(out), Some(u)) = (superres.as_mut(), u.as_ref()) {
                out.push(to64(u, r));
            }
        }
    }
    Ok(Predictions { error, superres })
}

/// Binned signed differences with shared, zero-symmetric edges for the x
/// and y components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts_x: Vec<u64>,
    pub counts_y: Vec<u64>,
    /// Moments of the raw (unbinned) differences.
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_y: f64,
    pub std_y: f64,
}

impl Histogram {
    pub fn total_x(&self) -> u64 {
        self.counts_x.iter().sum()
    }

    pub fn total_y(&self) -> u64 {
        self.counts_y.iter().sum()
    }

    /// `|mean| ≤ factor·std` in both directions.
    pub fn is_centered(&self, factor: f64) -> bool {
        self.mean_x.abs() <= factor * self.std_x && self.mean_y.abs() <= factor * self.std_y
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,count_x,count_y")?;
        for k in 0..self.counts_x.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.edges[k],
                self.edges[k + 1],
                self.counts_x[k],
                self.counts_y[k]
            )?;
        }
        Ok(())
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile, `q ∈ [0, 1]`; NaN for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Histogram over `±HISTOGRAM_SPAN` robust standard deviations (MAD-based)
/// of all differences; out-of-range values land in the edge bins.
pub fn histogram(dx: &[f64], dy: &[f64], n_bins: usize) -> Result<Histogram> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {n_bins}"
        )));
    }
    if dx.is_empty() || dy.is_empty() {
        return Err(Error::InvalidArgument("histogram of an empty set".into()));
    }
    let all: Vec<f64> = dx.iter().chain(dy).copied().collect();
    let med = median(&all);
    let dev: Vec<f64> = all.iter().map(|v| (v - med).abs()).collect();
    let mut half = HISTOGRAM_SPAN * MAD_SCALE * median(&dev);
    if !(half > 0.0 && half.is_finite()) {
        half = all.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    if !(half > 0.0 && half.is_finite()) {
        half = 1e-12;
    }
    let edges: Vec<f64> = (0..=n_bins)
        .map(|k| -half + 2.0 * half * k as f64 / n_bins as f64)
        .collect();
    let bin = |v: f64| -> usize {
        let k = ((v + half) / (2.0 * half) * n_bins as f64).floor();
        if k.is_nan() {
            0
        } else {
            (k.max(0.0) as usize).min(n_bins - 1)
        }
    };
    let mut counts_x = vec![0u64; n_bins];
    let mut counts_y = vec![0u64; n_bins];
    for &v in dx {
        counts_x[bin(v)] += 1;
    }
    for &v in dy {
        counts_y[bin(v)] += 1;
    }
    let (mean_x, std_x) = mean_std(dx);
    let (mean_y, std_y) = mean_std(dy);
    Ok(Histogram {
        edges,
        counts_x,
        counts_y,
        mean_x,
        std_x,
        mean_y,
        std_y,
    })
}

/// Splits `pred − truth` over many samples into x and y components.
fn split_differences(pred: &[Vec<f64>], truth: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let (mut dx, mut dy) = (Vec::new(), Vec::new());
    for (p, t) in pred.iter().zip(truth) {
        for (k, (a, b)) in p.iter().zip(t.iter()).enumerate() {
            if k % 2 == 0 {
                dx.push(a - b);
            } else {
                dy.push(a - b);
            }
        }
    }
    (dx, dy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceHistograms {
    pub error: Histogram,
    pub superres: Option<Histogram>,
}

/// Histograms of `prediction − truth` over all test nodes for the error
/// head and, when predicted, the super head.
pub fn difference_histograms(
    pred: &Predictions,
    test: &[Sample],
    n_bins: usize,
) -> Result<DifferenceHistograms> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    check_len("difference_histograms", test.len(), pred.error.len())?;
    let truth: Vec<&[f64]> = test.iter().map(|s| s.e.as_slice()).collect();
    let (dx, dy) = split_differences(&pred.error, &truth);
    let error = histogram(&dx, &dy, n_bins)?;
    let superres = match &pred.superres {
        Some(sp) => {
            let truth: Vec<&[f64]> = test.iter().map(|s| s.u_h_q8.as_slice()).collect();
            let (dx, dy) = split_differences(sp, &truth);
            Some(histogram(&dx, &dy, n_bins)?)
        }
        None => None,
    };
    Ok(DifferenceHistograms { error, superres })
}

/// Per-node mean and population std of `|e_pred − e_true|` over samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeMaps {
    pub mean_x: Vec<f64>,
    pub std_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub std_y: Vec<f64>,
}

impl NodeMaps {
    pub fn num_nodes(&self) -> usize {
        self.mean_x.len()
    }

    /// CSV with node coordinates taken from `mesh`.
    pub fn write_csv<W: Write>(&self, mut w: W, mesh: &Mesh) -> Result<()> {
        check_len("NodeMaps::write_csv", mesh.num_nodes(), self.num_nodes())?;
        writeln!(w, "node,x,y,mean_x,std_x,mean_y,std_y")?;
        for (a, [x, y]) in mesh.nodes().iter().enumerate() {
            writeln!(
                w,
                "{a},{x},{y},{},{},{},{}",
                self.mean_x[a], self.std_x[a], self.mean_y[a], self.std_y[a]
            )?;
        }
        Ok(())
    }

    /// Per-node mean and std from interleaved `(x, y)` vectors.
    pub fn from_interleaved(mean: &[f64], std: &[f64]) -> Result<Self> {
        check_len("NodeMaps::from_interleaved", mean.len(), std.len())?;
        let pick = |v: &[f64], o: usize| v.iter().skip(o).step_by(2).copied().collect();
        Ok(Self {
            mean_x: pick(mean, 0),
            std_x: pick(std, 0),
            mean_y: pick(mean, 1),
            std_y: pick(std, 1),
        })
    }
}

pub fn abs_difference_maps(pred: &Predictions, test: &[Sample]) -> Result<NodeMaps> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    check_len("abs_difference_maps", test.len(), pred.error.len())?;
    let dofs = test[0].e.len();
    let n = test.len() as f64;
    let mut mean = vec![0.0; dofs];
    for (p, s) in pred.error.iter().zip(test) {
        check_len("abs_difference_maps sample", dofs, p.len())?;
        for k in 0..dofs {
            mean[k] += (p[k] - s.e[k]).abs();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dofs];
    for (p, s) in pred.error.iter().zip(test) {
        for k in 0..dofs {
            let d = (p[k] - s.e[k]).abs() - mean[k];
            var[k] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    NodeMaps::from_interleaved(&mean, &std)
}

/// Which network output a nodal comparison refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Error,
    Super,
}

/// Truth and prediction per node, ordered by node index.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalSeries {
    pub truth: Vec<f64>,
    pub prediction: Vec<f64>,
}

impl NodalSeries {
    pub fn num_nodes(&self) -> usize {
        self.truth.len() / 2
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,truth_x,pred_x,truth_y,pred_y")?;
        for a in 0..self.num_nodes() {
            writeln!(
                w,
                "{a},{},{},{},{}",
                self.truth[2 * a],
                self.prediction[2 * a],
                self.truth[2 * a + 1],
                self.prediction[2 * a + 1]
            )?;
        }
        Ok(())
    }
}

pub fn nodal_comparison<T: Real>(
    model: &PinnModel<T>,
    sample: &Sample,
    head: Head,
) -> Result<NodalSeries> {
    let pred = predict_samples(model, std::slice::from_ref(sample), head == Head::Super)?;
    Ok(match head {
        Head::Error => NodalSeries {
            truth: sample.e.clone(),
            prediction: pred.error.into_iter().next().unwrap(),
        },
        Head::Super => NodalSeries {
            truth: sample.u_h_q8.clone(),
            prediction: pred.superres.unwrap().into_iter().next().unwrap(),
        },
    })
}

/// Writes the Q8-mesh prediction next to the stored truth, if any.
/// Values use shortest round-trip formatting, so the truth columns
/// reproduce the stored values exactly.
pub fn write_superresolution_csv<W: Write>(
    mut w: W,
    mesh: &Mesh,
    prediction: &[f64],
    truth: Option<&[f64]>,
) -> Result<()> {
    check_len(
        "superresolution prediction",
        mesh.num_dofs(),
        prediction.len(),
    )?;
    if let Some(t) = truth {
        check_len("superresolution truth", mesh.num_dofs(), t.len())?;
    }
    match truth {
        Some(_) => writeln!(w, "node,x,y,pred_x,pred_y,truth_x,truth_y")?,
        None => writeln!(w, "node,x,y,pred_x,pred_y")?,
    }
    for (a, [x, y]) in mesh.nodes().iter().enumerate() {
        write!(
            w,
            "{a},{x},{y},{},{}",
            prediction[2 * a],
            prediction[2 * a + 1]
        )?;
        if let Some(t) = truth {
            write!(w, ",{},{}", t[2 * a], t[2 * a + 1])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Super-head prediction for one coarse solution.
pub fn superresolve<T: Real>(model: &PinnModel<T>, u_r: &[f64]) -> Result<Vec<f64>> {
    check_len("superresolve input", model.input_dim(), u_r.len())?;
    let row: Vec<T> = u_r.iter().map(|&v| T::f(v)).collect();
    let (_, s) = model.predict(&Matrix::from_rows(&[row])?, crate::model::Heads::Both)?;
    Ok(s.expect("both heads")
        .row(0)
        .iter()
        .map(|v| v.to_f64().unwrap())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub case: String,
    pub flags: LossFlags,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub outcomes: Vec<TrainOutcome<f32>>,
}

pub const ABLATION_CASES: [(&str, LossFlags); 3] = [
    ("case1", LossFlags::CASE1),
    ("case2", LossFlags::CASE2),
    ("case3", LossFlags::CASE3),
];

/// Mean ± std of train/test `L_error` over the last epochs of a history.
pub fn summarize_tail(case: &str, flags: LossFlags, outcome: &TrainOutcome<f32>) -> AblationRow {
    let h = &outcome.history;
    let tail = &h[h.len().saturating_sub(ABLATION_WINDOW)..];
    let (train_mean, train_std) =
        mean_std(&tail.iter().map(|r| r.l_error_train).collect::<Vec<_>>());
    let (test_mean, test_std) = mean_std(&tail.iter().map(|r| r.l_error_test).collect::<Vec<_>>());
    AblationRow {
        case: case.to_string(),
        flags,
        train_mean,
        train_std,
        test_mean,
        test_std,
    }
}

/// Trains the three loss compositions from the same initial weights.
pub fn run_ablation(
    dims: ModelDims,
    train_set: &TrainingSet<f32>,
    test_set: &TrainingSet<f32>,
    cfg: &TrainConfig,
) -> Result<AblationResult> {
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (case, flags) in ABLATION_CASES {
        log::info!("ablation {case} ({})", flags.label());
        let model = PinnModel::<f32>::new(dims, cfg.seed)?;
        let out = train(model, train_set, test_set, cfg, flags)?;
        rows.push(summarize_tail(case, flags, &out));
        outcomes.push(out);
    }
    Ok(AblationResult { rows, outcomes })
}

pub fn write_ablation_csv<W: Write>(mut w: W, rows: &[AblationRow]) -> Result<()> {
    writeln!(w, "case,flags,train_mean,train_std,test_mean,test_std")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.case,
            r.flags.label(),
            r.train_mean,
            r.train_std,
            r.test_mean,
            r.test_std
        )?;
    }
    Ok(())
}

const PALETTE: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn color(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.5
    };
    let pos = t * (PALETTE.len() - 1) as f64;
    let k = (pos.floor() as usize).min(PALETTE.len() - 2);
    let f = pos - k as f64;
    let c: Vec<u8> = (0..3)
        .map(|i| (PALETTE[k][i] + (PALETTE[k + 1][i] - PALETTE[k][i]) * f).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Filled-element heatmap of a per-node scalar over the plate, with a color
/// bar labelled by the field's bounds. Output depends only on the inputs.
pub fn render_heatmap(field: &[f64], mesh: &Mesh, title: &str) -> Result<String> {
    check_len("render_heatmap", mesh.num_nodes(), field.len())?;
    let (lo, hi) = field
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    let (size, pad) = (400.0, 30.0);
    let px = |p: [f64; 2]| (pad + p[0] * size, pad + (1.0 - p[1]) * size);

    let mut s = String::new();
    let (w, h) = (pad * 2.0 + size + 110.0, pad * 2.0 + size + 20.0);
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{pad}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    )
    .unwrap();
    let outline: &[usize] = match mesh.order() {
        ElementOrder::Q4 => &[0, 1, 2, 3],
        ElementOrder::Q8 => &[0, 4, 1, 5, 2, 6, 3, 7],
    };
    for conn in mesh.elements() {
        let v = conn.iter().map(|&a| field[a]).sum::<f64>() / conn.len() as f64;
        let pts: Vec<String> = outline
            .iter()
            .map(|&k| {
                let (x, y) = px(mesh.nodes()[conn[k]]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let c = color(scale(v));
        writeln!(
            s,
            r#"<polygon points="{}" fill="{c}" stroke="{c}" stroke-width="0.3"/>"#,
            pts.join(" ")
        )
        .unwrap();
    }
    let (bx, steps) = (pad * 2.0 + size, 40);
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let c = if hi > lo { color(t) } else { color(0.5) };
        let y = pad + size * k as f64 / steps as f64;
        writeln!(
            s,
            r#"<rect x="{bx}" y="{y:.2}" width="18" height="{:.2}" fill="{c}"/>"#,
            size / steps as f64 + 0.5
        )
        .unwrap();
    }
    for (y, v) in [(pad + 10.0, hi), (pad + size, lo)] {
        writeln!(
            s,
            r#"<text x="{}" y="{y:.2}" font-family="sans-serif" font-size="11">{v:.4e}</text>"#,
            bx + 24.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
