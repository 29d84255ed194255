//! Trains the composite-loss model on a generated dataset at desk scale and
//! reports the loss curve and the error-head difference histogram.
//!
//! ```bash
//! cargo run --release -p merr --example generate_dataset -- 2000 /tmp/desk.bin
//! cargo run --release -p merr --example train_desk -- /tmp/desk.bin 60
//! ```

use std::path::PathBuf;
use std::time::Instant;

use merr::dataset::load_dataset;
use merr::eval::{difference_histograms, predict_samples, HISTOGRAM_BINS};
use merr::model::{train, LossFlags, ModelConfig, ModelDims, PinnModel, TrainConfig, TrainingSet};

fn main() -> merr::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let path = args.next().map_or_else(
        || std::env::temp_dir().join("merr_example.bin"),
        PathBuf::from,
    );
    let epochs: usize = args
        .next()
        .map_or(Ok(60), |s| s.parse())
        .expect("epochs must be an integer");

    let ds = load_dataset(&path)?;
    let n_test = (ds.len() / 10).max(1);
    let (train_ds, test_ds) = ds.split(n_test, 0)?;
    let model_cfg = ModelConfig {
        hidden_super: 512,
        ..Default::default()
    };
    let dims = ModelDims::new(
        &model_cfg,
        train_ds.meta.coarse_dofs(),
        train_ds.meta.fine_dofs(),
    );
    let cfg = TrainConfig {
        max_epochs: epochs,
        epoch_subsample: train_ds.len().min(4096),
        ..Default::default()
    };
    let train_set = TrainingSet::<f32>::from_samples(&train_ds.samples, true)?;
    let test_set = TrainingSet::<f32>::from_samples(&test_ds.samples, false)?;
    let model = PinnModel::<f32>::new(dims, cfg.seed)?;
    println!(
        "train={} test={} params={}",
        train_set.len(),
        test_set.len(),
        model.num_parameters()
    );

    let t = Instant::now();
    let out = train(model, &train_set, &test_set, &cfg, LossFlags::CASE1)?;
    for r in &out.history {
        println!(
            "epoch={} train={:.4e} test={:.4e} beta=[{:.3},{:.3}]",
            r.epoch, r.l_error_train, r.l_error_test, r.beta1, r.beta2
        );
    }
    let first = out.history[0].l_error_test;
    let last = out.history.last().unwrap().l_error_test;
    println!(
        "seconds={:.0} best_epoch={} ratio_last_first={:.3}",
        t.elapsed().as_secs_f64(),
        out.best_epoch,
        last / first
    );

    let pred = predict_samples(&out.model, &test_ds.samples, false)?;
    let h = difference_histograms(&pred, &test_ds.samples, HISTOGRAM_BINS)?.error;
    println!(
        "hist mean_x={:.3e} std_x={:.3e} mean_y={:.3e} std_y={:.3e} centered={}",
        h.mean_x,
        h.std_x,
        h.mean_y,
        h.std_y,
        h.is_centered(0.2)
    );
    Ok(())
}
