//! Command-line driver: one subcommand per pipeline stage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use merr::config::RunConfig;
use merr::pipeline;
use merr::Error;

#[derive(Parser)]
#[command(
    name = "merr",
    version,
    about = "Model-error datasets, training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset used as the base configuration (full, desk, small).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (overrides the config and the MERR_OUTPUT_DIR variable).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Sets every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives serial execution.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the effective configuration before running.
    #[arg(long, global = true)]
    show_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mesh and print its size; `mesh export` also writes it as text.
    Mesh {
        /// Optional action: `export`.
        action: Option<String>,
        #[arg(long, default_value = "q4")]
        order: String,
        #[arg(long, default_value = "20x40")]
        grid: String,
        /// Export path (default: <output_dir>/mesh_<order>.txt).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate (or resume) the paired Q4/Q8 dataset.
    Generate {
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the train/test split indices.
    Split {
        #[arg(long)]
        n_test: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the network and write the checkpoint and loss history.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Histograms, error maps and nodal comparisons on the test set.
    Evaluate {
        #[arg(long)]
        sample: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the three loss compositions and tabulate them.
    Ablate {
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// MC-dropout mean and std for one test sample.
    Uncertainty {
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        passes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Predict the Q8 field for one test sample.
    Superresolve {
        #[arg(long)]
        sample: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient check of every layer kind and the model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

fn base_config(c: &Common) -> merr::Result<RunConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either --config or --preset, not both".into(),
            ))
        }
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(dir) = &c.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn finish(cfg: RunConfig, c: &Common) -> merr::Result<RunConfig> {
    cfg.validate()?;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    if c.show_config {
        eprintln!("{}", cfg.to_json());
    }
    Ok(cfg)
}

fn run(cmd: Command) -> merr::Result<(String, bool)> {
    let ok = |s: pipeline::Summary| Ok((s.to_string(), true));
    match cmd {
        Command::Mesh {
            action,
            order,
            grid,
            out,
            common,
        } => {
            let order = pipeline::parse_order(&order)?;
            let grid = pipeline::parse_grid(&grid)?;
            let export = match action.as_deref() {
                None => None,
                Some("export") => {
                    let cfg = base_config(&common)?;
                    Some(out.unwrap_or_else(|| {
                        cfg.output_dir
                            .join(format!("mesh_{order:?}.txt").to_lowercase())
                    }))
                }
                Some(other) => return Err(Error::Config(format!("unknown mesh action {other:?}"))),
            };
            ok(pipeline::run_mesh(order, grid, export.as_deref())?)
        }
        Command::Generate { count, common } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = count {
                cfg.dataset.count = n;
                cfg.split.n_test = cfg.split.n_test.min(n.saturating_sub(1)).max(1);
                cfg.eval.sample_index = cfg.eval.sample_index.min(cfg.split.n_test - 1);
            }
            ok(pipeline::run_generate(&finish(cfg, &common)?)?)
        }
        Command::Split { n_test, common } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = n_test {
                cfg.split.n_test = n;
            }
            ok(pipeline::run_split(&finish(cfg, &common)?)?)
        }
        Command::Train { epochs, common } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = epochs {
                cfg.train.max_epochs = n;
            }
            ok(pipeline::run_train(&finish(cfg, &common)?)?)
        }
        Command::Evaluate { sample, common } => {
            let mut cfg = base_config(&common)?;
            if let Some(k) = sample {
                cfg.eval.sample_index = k;
            }
            ok(pipeline::run_evaluate(&finish(cfg, &common)?)?)
        }
        Command::Ablate { epochs, common } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = epochs {
                cfg.train.max_epochs = n;
            }
            ok(pipeline::run_ablate(&finish(cfg, &common)?)?)
        }
        Command::Uncertainty {
            sample,
            passes,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(k) = sample {
                cfg.eval.sample_index = k;
            }
            if let Some(n) = passes {
                cfg.eval.mc_passes = n;
            }
            ok(pipeline::run_uncertainty(&finish(cfg, &common)?)?)
        }
        Command::Superresolve { sample, common } => {
            let mut cfg = base_config(&common)?;
            if let Some(k) = sample {
                cfg.eval.sample_index = k;
            }
            ok(pipeline::run_superresolve(&finish(cfg, &common)?)?)
        }
        Command::Gradcheck { common } => {
            let cfg = finish(base_config(&common)?, &common)?;
            let (s, rep) = pipeline::run_gradcheck(&cfg)?;
            Ok((s.to_string(), rep.passed()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((line, passed)) => {
            println!("{line}");
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
