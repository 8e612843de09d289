//! The `tenscorr` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenscorr_core::io::{read_matrix, read_tensor, write_matrix, write_tensor};
use tenscorr_core::{cp_als, tcca_fit, DenseTensor, Mat, Matrix, TccaOptions, ViewSet};
use tenscorr_mtcn::{
    gradcheck, load_checkpoint, predict, save_checkpoint, train, ArchitectureSpec, Batch,
    GradcheckOptions, Images, InitScheme, NetworkState, GRADCHECK_TOLERANCE,
};
use tenscorr_ntcca::{load_basis, load_head, save_basis, save_head, train_generalization_head};

use crate::config::Config;
use crate::dataset::{load_dataset, save_dataset, AttributeDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{to_csv, MetricsReport};
use crate::pipeline::{
    check_dataset, feature_tensors, predict_with_head, run_pipeline, threshold, training_subset,
};
use crate::synth::generate_synthetic;

#[derive(Debug, Parser)]
#[command(
    name = "tenscorr",
    version,
    about = "Multi-view tensor correlation and multi-task attribute networks"
)]
pub struct Cli {
    /// Base seed for every stage; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// CP decomposition of a tensor file.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        max_sweeps: Option<usize>,
    },
    /// Tensor canonical correlation analysis of two or more view matrices
    /// (`d_p × N`, samples as columns).
    Tcca {
        #[arg(long = "view", required = true, num_args = 1)]
        views: Vec<PathBuf>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Writes a synthetic correlated-attribute dataset.
    Synth {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Trains the network and writes `checkpoint/`.
    TrainMtcn {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Finite-difference gradient check; exits 1 when any tensor fails.
    Gradcheck {
        /// Checkpoint to check; a fresh toy network when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        samples: usize,
        /// Check at most this many entries per tensor.
        #[arg(long)]
        max_entries: Option<usize>,
    },
    /// Accuracy of the network's own outputs on a split.
    EvalMtcn {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Fits the correlation basis on the training subset; writes `basis/`.
    FitNtcca {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Trains the output head on the training subset; writes `head/`.
    TrainHead {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Head predictions for a split; writes `predictions.txt`.
    Predict {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        head: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// All three steps; writes metrics, checkpoint, basis and head.
    Pipeline {
        /// Dataset directory; a synthetic dataset from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut Config) {
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(r) = self.learning_rate {
            cfg.train.learning_rate = r;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(Error::Invalid(format!(
            "unknown split `{s}` (expected train, val or test)"
        ))),
    }
}

fn split_indices(ds: &AttributeDataset, split: Split) -> Result<Vec<usize>> {
    let idx = ds.indices(split);
    if idx.is_empty() {
        return Err(Error::Invalid(format!(
            "the dataset has no `{}` samples",
            split.tag()
        )));
    }
    Ok(idx)
}

fn load_network(dir: &Path, ds: &AttributeDataset) -> Result<(ArchitectureSpec, NetworkState)> {
    let (arch, state) = load_checkpoint(dir)?;
    check_dataset(ds, &arch)?;
    Ok((arch, state))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn subset(cfg: &Config, ds: &AttributeDataset) -> Result<Vec<usize>> {
    let train_idx = split_indices(ds, Split::Train)?;
    Ok(training_subset(
        &train_idx,
        cfg.ntcca.subset_fraction,
        cfg.ntcca.subset_seed,
    ))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.reseed(s);
    }
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Decompose {
            input,
            rank,
            max_sweeps,
        } => {
            if let Some(r) = rank {
                cfg.cp.rank = r;
            }
            if let Some(m) = max_sweeps {
                cfg.cp.max_sweeps = m;
            }
            cfg.validate()?;
            let x = read_tensor::<f64>(&input)?;
            let rep = cp_als(&x, &cfg.cp_options())?;
            fs::create_dir_all(out)?;
            let f = &rep.factors;
            write_tensor(
                out.join("weights"),
                &DenseTensor::new(vec![f.weights().len()], f.weights().to_vec())?,
            )?;
            for (n, a) in f.factors().iter().enumerate() {
                write_matrix(out.join(format!("factor{}", n + 1)), a)?;
            }
            println!(
                "rank {} fit {:.10} sweeps {}",
                f.weights().len(),
                rep.fit(),
                rep.sweeps
            );
            println!("weights {:?}", f.weights());
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Tcca {
            views,
            rank,
            epsilon,
        } => {
            if views.len() < 2 {
                return Err(Error::Invalid(
                    "tcca needs at least two --view files".into(),
                ));
            }
            let mats = views
                .iter()
                .map(read_matrix::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let v = ViewSet::new(mats)?;
            let mut cp = cfg.cp_options();
            cp.rank = rank.unwrap_or(cfg.cp.rank);
            let opts = TccaOptions {
                rank: cp.rank,
                epsilon: epsilon.unwrap_or(cfg.cp.epsilon),
                center: cfg.cp.center,
                cp,
            };
            let fit = tcca_fit(&v, &opts)?;
            fs::create_dir_all(out)?;
            let rho = &fit.basis.correlations;
            write_tensor(
                out.join("correlations"),
                &DenseTensor::new(vec![rho.len()], rho.clone())?,
            )?;
            for (p, h) in fit.basis.vectors.iter().enumerate() {
                write_matrix(out.join(format!("basis{}", p + 1)), h)?;
            }
            println!("correlations {rho:?}");
        }
        Command::Synth { samples } => {
            let n = samples.unwrap_or(cfg.synth.samples);
            let ds = generate_synthetic(&cfg.synth.spec, n)?;
            save_dataset(out, &ds)?;
            println!(
                "wrote {} samples ({} train, {} test) with {} attributes to {}",
                ds.len(),
                ds.indices(Split::Train).len(),
                ds.indices(Split::Test).len(),
                ds.attributes(),
                out.display()
            );
        }
        Command::TrainMtcn { data, train: t } => {
            t.apply(&mut cfg);
            cfg.validate()?;
            let arch = cfg.architecture()?;
            let ds = load_dataset(&data.data)?;
            check_dataset(&ds, &arch)?;
            let batch = ds.batch(&split_indices(&ds, Split::Train)?)?;
            let mut state = NetworkState::init(&arch, cfg.train.init, cfg.train.seed)?;
            train(
                &mut state,
                &arch,
                &batch,
                &cfg.train.to_train_config(),
                |e| {
                    println!(
                        "epoch {} loss {:.6} rate {}",
                        e.epoch + 1,
                        e.mean_loss,
                        e.learning_rate
                    )
                },
            )?;
            save_checkpoint(out.join("checkpoint"), &arch, &state)?;
            println!("checkpoint {}", out.join("checkpoint").display());
        }
        Command::Gradcheck {
            checkpoint,
            samples,
            max_entries,
        } => {
            let (arch, state) = match &checkpoint {
                Some(dir) => load_checkpoint(dir)?,
                None => {
                    // Zero biases leave dead units whose pooling windows tie
                    // exactly, where central differences are meaningless.
                    let arch = ArchitectureSpec::toy();
                    let mut state = NetworkState::init(&arch, InitScheme::He, cfg.seed)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb1a5);
                    for (_, p) in state.params_mut() {
                        for b in &mut p.b {
                            *b = rng.random_range(-0.1..0.1);
                        }
                    }
                    (arch, state)
                }
            };
            if samples == 0 {
                return Err(Error::Invalid("--samples must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (h, w, c) = (arch.input_height, arch.input_width, arch.input_channels);
            let pixels = (0..samples * h * w * c)
                .map(|_| rng.random::<f64>())
                .collect();
            let labels = Matrix::from_fn(samples, arch.subnetworks, |_, _| {
                rng.random_range(0..2) as f64
            });
            let batch = Batch::new(Images::new(samples, h, w, c, pixels)?, labels)?;
            let opts = GradcheckOptions {
                max_entries,
                ..GradcheckOptions::default()
            };
            let rep = gradcheck(&state, &arch, &batch, &opts)?;
            for t in &rep.tensors {
                println!(
                    "{:<12} entries {:>6}  max rel {:.3e}  max abs {:.3e}",
                    t.name, t.checked, t.max_rel_error, t.max_abs_error
                );
            }
            if !rep.passed() {
                let failing: Vec<&str> = rep
                    .tensors
                    .iter()
                    .filter(|t| !(t.max_rel_error < GRADCHECK_TOLERANCE))
                    .map(|t| t.name.as_str())
                    .collect();
                return Err(Error::Failed(format!(
                    "gradient check failed: worst relative error {:.3e} ≥ {GRADCHECK_TOLERANCE:e} in {}",
                    rep.worst(),
                    failing.join(", ")
                )));
            }
            println!("gradient check passed");
        }
        Command::EvalMtcn {
            data,
            checkpoint,
            split,
        } => {
            let ds = load_dataset(&data.data)?;
            let (arch, state) = load_network(&checkpoint, &ds)?;
            let idx = split_indices(&ds, parse_split(&split)?)?;
            let b = ds.batch(&idx)?;
            let p = threshold(&predict(&state, &arch, &b.images)?, cfg.predict.threshold);
            let rep = MetricsReport::from_predictions(ds.names.clone(), &p, &b.labels)?;
            print!("{}", rep.to_text("MTCN without NTCCA"));
            write_text(&out.join("eval.csv"), &to_csv(&[("without_ntcca", &rep)]))?;
        }
        Command::FitNtcca {
            data,
            checkpoint,
            rank,
            epsilon,
        } => {
            if let Some(r) = rank {
                cfg.ntcca.rank = r;
            }
            if let Some(e) = epsilon {
                cfg.ntcca.epsilon = e;
            }
            cfg.validate()?;
            let ds = load_dataset(&data.data)?;
            let (arch, state) = load_network(&checkpoint, &ds)?;
            let sub = subset(&cfg, &ds)?;
            let feats = feature_tensors(&state, &arch, &ds.images.select(&sub)?)?;
            let grouping = cfg.grouping(feats[0].subnetworks(), feats[0].maps());
            let basis = tenscorr_ntcca::fit_ntcca(&feats, &grouping, &cfg.ntcca_options())?;
            save_basis(out.join("basis"), &basis)?;
            println!(
                "correlations {:?} on {} images",
                basis.correlations(),
                sub.len()
            );
        }
        Command::TrainHead {
            data,
            checkpoint,
            basis,
            gamma,
            learning_rate,
            max_iterations,
        } => {
            if let Some(g) = gamma {
                cfg.head.gamma = g;
            }
            if let Some(r) = learning_rate {
                cfg.head.learning_rate = r;
            }
            if let Some(m) = max_iterations {
                cfg.head.max_iterations = m;
            }
            cfg.validate()?;
            let ds = load_dataset(&data.data)?;
            let (arch, state) = load_network(&checkpoint, &ds)?;
            let basis = load_basis(&basis)?;
            let sub = subset(&cfg, &ds)?;
            let feats = feature_tensors(&state, &arch, &ds.images.select(&sub)?)?;
            let z = tenscorr_ntcca::ntcca_project_all(&feats, &basis)?;
            let rep = train_generalization_head(&z, &ds.batch(&sub)?.labels, &cfg.head)?;
            save_head(out.join("head"), &rep.head)?;
            println!(
                "loss {:.6} -> {:.6} after {} iterations ({:?})",
                rep.initial_loss, rep.final_loss, rep.iterations, rep.stop
            );
        }
        Command::Predict {
            data,
            checkpoint,
            basis,
            head,
            split,
            threshold: t,
        } => {
            let t = t.unwrap_or(cfg.predict.threshold);
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Invalid(format!("threshold {t} must lie in (0, 1)")));
            }
            let ds = load_dataset(&data.data)?;
            let (arch, state) = load_network(&checkpoint, &ds)?;
            let basis = load_basis(&basis)?;
            let head = load_head(&head)?;
            let idx = split_indices(&ds, parse_split(&split)?)?;
            let b = ds.batch(&idx)?;
            let pred = predict_with_head(&state, &arch, &basis, &head, &b.images, t)?;
            write_text(
                &out.join("predictions.txt"),
                &prediction_table(&ds, &idx, &pred),
            )?;
            let rep = MetricsReport::from_predictions(ds.names.clone(), &pred, &b.labels)?;
            print!("{}", rep.to_text("MTCN with NTCCA"));
        }
        Command::Pipeline { data, train: t } => {
            t.apply(&mut cfg);
            let ds = match &data {
                Some(d) => load_dataset(d)?,
                None => generate_synthetic(&cfg.synth.spec, cfg.synth.samples)?,
            };
            let o = run_pipeline(&cfg, &ds)?;
            let mut text = o.majority.to_text("majority baseline");
            text += &o.without_ntcca.to_text("MTCN without NTCCA");
            text += &o.with_ntcca.to_text("MTCN with NTCCA");
            print!("{text}");
            write_text(&out.join("metrics.txt"), &text)?;
            write_text(
                &out.join("metrics.csv"),
                &to_csv(&[
                    ("majority", &o.majority),
                    ("without_ntcca", &o.without_ntcca),
                    ("with_ntcca", &o.with_ntcca),
                ]),
            )?;
            save_checkpoint(out.join("checkpoint"), &o.arch, &o.network)?;
            save_basis(out.join("basis"), &o.basis)?;
            save_head(out.join("head"), &o.head.head)?;
        }
    }
    Ok(())
}

fn prediction_table(ds: &AttributeDataset, idx: &[usize], pred: &Mat) -> String {
    let mut s = ds.names.join(" ");
    s.push('\n');
    for (r, &i) in idx.iter().enumerate() {
        s.push_str(&ds.ids[i]);
        for v in pred.row(r) {
            s.push_str(if *v == 1.0 { " 1" } else { " 0" });
        }
        s.push('\n');
    }
    s
}

/// Reads `TENSCORR_THREADS` and sizes the global worker pool.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("TENSCORR_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Invalid(format!("TENSCORR_THREADS=`{v}` is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(format!("cannot size the worker pool: {e}")))
}

/// Exit status for a finished run: 0, 2 for validation errors, 1 otherwise.
pub fn exit_code(r: &Result<()>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 2,
        Err(_) => 1,
    }
}
