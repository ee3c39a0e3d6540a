//! `evodg`: dataset generation, training, evaluation, decision-boundary
//! export, sequence generation and ablations for evolving domain
//! generalization.
//!
//! Exit codes: 0 on success, 2 for usage and validation errors, 3 when
//! training diverges numerically.

use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evodg::checkpoint::{load_checkpoint, save_checkpoint, TrainedModel};
use evodg::config::{TrainConfig, LSSAE_ONLY_KEYS};
use evodg::datasets::{load_dataset, meta_path, save_csv_domains, save_meta, DatasetKind, Domain, DomainSequence};
use evodg::evaluation::{
    accuracy_table, boundary_raster, generate_sequence, reconstruct_sequence, reconstruction_mse, Bounds,
    Generation,
};
use evodg::experiment::{
    ablate_prior, ablate_ts, outcomes_csv, prior_table_csv, train_algorithm, ts_table_csv, Algorithm, Splits,
    VariantResult,
};
use evodg::model::RolloutMode;
use evodg::rng::SeedTree;
use evodg::training::EpochRecord;

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Environment variable capping evaluation threads.
const THREADS_VAR: &str = "EVODG_THREADS";

#[derive(Parser)]
#[command(name = "evodg", version, about = "Evolving domain generalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark as CSV plus a metadata sidecar.
    GenData {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; the metadata goes next to it as `*.meta.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train LSSAE or the ERM baseline.
    Train {
        #[arg(long, default_value = "lssae")]
        algo: String,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the target domains.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated inference seeds.
        #[arg(long, default_value = "0")]
        seeds: String,
        #[command(flatten)]
        inference: InferenceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export decision-boundary rasters for every target stamp (2-D data).
    Boundary {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Cells per axis.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the source domains and generate every stamp with the
    /// static latent held fixed.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Source samples whose static latent is held fixed.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[command(flatten)]
        inference: InferenceArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ablation drivers.
    #[command(subcommand)]
    Ablate(Ablation),
}

#[derive(Subcommand)]
enum Ablation {
    /// Train every prior type and tabulate mean target accuracy.
    Prior(AblationArgs),
    /// Train with and without the temporal smoothness penalty and tabulate
    /// validation variance and final accuracy.
    Ts(AblationArgs),
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated training seeds.
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Domain CSV (`domain,label,f0,…`).
    #[arg(long)]
    data: PathBuf,
    /// Source,intermediate,target domain counts. Defaults to the split in
    /// the data's metadata sidecar.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args)]
struct InferenceArgs {
    /// `mean` feeds expected latents forward; `sample` draws them.
    #[arg(long, default_value = "mean")]
    mode: String,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

impl InferenceArgs {
    fn mode(&self) -> Result<RolloutMode> {
        Ok(self.mode.parse()?)
    }
}

/// Data loaded from disk, split into source, intermediate and target.
struct Loaded {
    sequence: DomainSequence,
    splits: Splits,
}

impl DataArgs {
    fn load(&self) -> Result<Loaded> {
        if !self.data.is_file() {
            bail!("data file {} does not exist", self.data.display());
        }
        let split = self.split.as_deref().map(str::parse).transpose()?;
        let (sequence, spec) = load_dataset(&self.data, split)?;
        let splits = Splits::new(&sequence, spec)?;
        Ok(Loaded { sequence, splits })
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<u64>().with_context(|| format!("bad seed {p:?} in {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

/// Worker threads for evaluation: `EVODG_THREADS` if set, else the number
/// of available cores.
fn eval_threads() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_VAR}={v:?} is not a thread count"))?;
            if n == 0 {
                bail!("{THREADS_VAR} must be at least 1");
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, NonZeroUsize::get)),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    Ok(TrainedModel::from_checkpoint(&load_checkpoint(path)?)?)
}

/// Fails unless the model was trained on data of the same shape.
fn check_compatible(model: &TrainedModel, seq: &DomainSequence) -> Result<()> {
    let (dim, classes) = model.io_dims();
    if dim != seq.dim() || classes != seq.classes() {
        bail!(
            "checkpoint expects {dim} features and {classes} classes, but the data has {} features and {} classes",
            seq.dim(),
            seq.classes()
        );
    }
    Ok(())
}

fn load_config(path: &Path, algo: Algorithm) -> Result<TrainConfig> {
    let (cfg, keys) = TrainConfig::load(path)?;
    if algo == Algorithm::Erm {
        for k in keys.iter().filter(|k| LSSAE_ONLY_KEYS.contains(&k.as_str())) {
            eprintln!("warning: {}: `{k}` only affects lssae and is ignored by erm", path.display());
        }
    }
    Ok(cfg)
}

fn epoch_logger(label: String, total: usize) -> impl FnMut(&EpochRecord) {
    move |e: &EpochRecord| {
        if e.epoch == 1 || e.epoch % 10 == 0 || e.epoch == total {
            let val = e.val_acc.map_or(String::new(), |v| format!(" val {v:.2}"));
            eprintln!("{label} epoch {}/{total} loss {:.4}{val}", e.epoch, e.terms.total);
        }
    }
}

fn gen_data(dataset: &str, seed: u64, out: &Path) -> Result<()> {
    let kind: DatasetKind = dataset.parse()?;
    let data = kind.generate(seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_csv_domains(&data.sequence, out)?;
    save_meta(&data.meta, &meta_path(out))?;
    println!(
        "wrote {} ({} domains, {} samples)",
        out.display(),
        data.sequence.len(),
        data.sequence.total_samples()
    );
    Ok(())
}

fn train(
    algo: &str,
    data: &DataArgs,
    config: &Path,
    seed: Option<u64>,
    epochs: Option<usize>,
    out: &Path,
) -> Result<()> {
    let algo: Algorithm = algo.parse()?;
    let mut cfg = load_config(config, algo)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let loaded = data.load()?;
    create_dir(out)?;
    let mut log = epoch_logger(algo.to_string(), cfg.epochs);
    let run = train_algorithm(algo, &loaded.splits, &cfg, &mut log)?;
    let epoch = run.record.best_epoch.unwrap_or(cfg.epochs);
    save_checkpoint(&run.selected().to_checkpoint(&cfg, epoch), &out.join("checkpoint.json"))?;
    save_checkpoint(&run.model.to_checkpoint(&cfg, cfg.epochs), &out.join("final.json"))?;
    write(&out.join("record.csv"), run.record.to_csv())?;
    write(&out.join("config.cfg"), cfg.to_text())?;
    let best = run
        .record
        .best_val_acc
        .map_or(String::new(), |v| format!(", best validation accuracy {v:.2} at epoch {epoch}"));
    println!("trained {algo} in {:.1}s{best}; outputs in {}", run.record.wall_clock_secs, out.display());
    Ok(())
}

fn eval(checkpoint: &Path, data: &DataArgs, seeds: &str, inference: &InferenceArgs, out: &Path) -> Result<()> {
    let seeds = parse_seeds(seeds)?;
    let mode = inference.mode()?;
    let threads = eval_threads()?;
    let model = load_model(checkpoint)?;
    let loaded = data.load()?;
    check_compatible(&model, &loaded.sequence)?;
    let splits = &loaded.splits;
    let target = splits.target_features()?;
    let opts = splits.inference_options(mode, inference.temperature);
    let predict = |seed: u64| {
        let mut rng = SeedTree::new(seed).child("inference").rng();
        model.predictor().predict(&target, opts, &mut rng)
    };
    // Seeds are independent pure evaluations; split them over the workers
    // and reassemble in seed order.
    let chunk = seeds.len().div_ceil(threads.min(seeds.len()));
    let preds = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(|&seed| predict(seed)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect::<evodg::Result<Vec<_>>>()
    })?;
    let runs: Vec<_> = seeds.iter().copied().zip(preds).collect();
    let table = accuracy_table(model.algorithm(), &runs, &splits.target)?;
    create_dir(out)?;
    write(&out.join("accuracy.csv"), table.to_csv())?;
    write(&out.join("summary.csv"), table.summary_csv())?;
    println!(
        "{} target accuracy {:.2} ± {:.2} over {} seed(s), {} domains, {mode} inference",
        model.algorithm(),
        table.mean,
        table.se,
        seeds.len(),
        table.stamps.len()
    );
    Ok(())
}

fn boundary(checkpoint: &Path, data: &DataArgs, resolution: usize, out: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let loaded = data.load()?;
    check_compatible(&model, &loaded.sequence)?;
    if loaded.sequence.dim() != 2 {
        bail!("decision boundaries need 2-D data, found {} features", loaded.sequence.dim());
    }
    let splits = &loaded.splits;
    create_dir(out)?;
    let origin = splits.source.start();
    for d in splits.target.domains() {
        let raster = boundary_raster(
            model.predictor(),
            d.t - origin,
            splits.source.len(),
            Bounds::default(),
            resolution,
            resolution,
        )?;
        write(&out.join(format!("boundary_{:03}.csv", d.t)), raster.to_csv())?;
        write(&out.join(format!("boundary_{:03}.pgm", d.t)), raster.to_pgm())?;
    }
    println!("wrote {} rasters to {}", splits.target.len(), out.display());
    Ok(())
}

fn generate(
    checkpoint: &Path,
    data: &DataArgs,
    samples: usize,
    inference: &InferenceArgs,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let TrainedModel::Lssae(model) = load_model(checkpoint)? else {
        bail!("generation needs an lssae checkpoint");
    };
    let mode = inference.mode()?;
    let loaded = data.load()?;
    check_compatible(&TrainedModel::Lssae(model.clone()), &loaded.sequence)?;
    let source = &loaded.splits.source;
    create_dir(out)?;

    let recon = reconstruct_sequence(&model, source)?;
    let mse = reconstruction_mse(source, &recon)?;
    let recon_seq = relabel(source, recon)?;
    save_csv_domains(&recon_seq, &out.join("reconstructed.csv"))?;

    // Hold the static latents of the first source samples fixed and roll
    // the dynamic prior through every stamp of the sequence.
    let first = source.domain(0);
    let n = samples.clamp(1, first.len());
    let rows: Vec<usize> = (0..n).collect();
    let z_c = model.static_means(&first.x.select_rows(&rows))?;
    let stamps = loaded.sequence.len();
    let mut rng = SeedTree::new(seed).child("generate").rng();
    let xs = generate_sequence(&model, &Generation::FixedStatic(z_c), stamps, mode, &mut rng)?;
    let labels = first.y[..n].to_vec();
    let domains = xs
        .into_iter()
        .enumerate()
        .map(|(k, x)| Domain {
            t: source.start() + k,
            x,
            y: labels.clone(),
        })
        .collect();
    let generated = DomainSequence::new(domains, source.classes())?;
    save_csv_domains(&generated, &out.join("generated.csv"))?;
    println!(
        "reconstruction mse {mse:.6} (feature variance {:.6}); generated {stamps} stamps × {n} samples in {}",
        source.feature_variance(),
        out.display()
    );
    Ok(())
}

/// The sequence's labels attached to new features.
fn relabel(seq: &DomainSequence, xs: Vec<evodg::Tensor>) -> Result<DomainSequence> {
    let domains = seq
        .domains()
        .iter()
        .zip(xs)
        .map(|(d, x)| Domain {
            t: d.t,
            x,
            y: d.y.clone(),
        })
        .collect();
    Ok(DomainSequence::new(domains, seq.classes())?)
}

fn ablate(which: &Ablation) -> Result<()> {
    let (args, name) = match which {
        Ablation::Prior(a) => (a, "prior"),
        Ablation::Ts(a) => (a, "ts"),
    };
    let seeds = parse_seeds(&args.seeds)?;
    let mut cfg = load_config(&args.config, Algorithm::Lssae)?;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    let loaded = args.data.load()?;
    create_dir(&args.out)?;
    let total = cfg.epochs;
    let mut progress = |label: &str, seed: u64, e: &EpochRecord| {
        if e.epoch == total {
            let val = e.val_acc.map_or(String::new(), |v| format!(" val {v:.2}"));
            eprintln!("{name} {label} seed {seed}: done{val}");
        }
    };
    let (rows, table): (Vec<VariantResult>, String) = match which {
        Ablation::Prior(_) => {
            let rows = ablate_prior(&loaded.splits, &cfg, &seeds, &mut progress)?;
            let t = prior_table_csv(&rows);
            (rows, t)
        }
        Ablation::Ts(_) => {
            let rows = ablate_ts(&loaded.splits, &cfg, &seeds, &mut progress)?;
            let t = ts_table_csv(&rows);
            (rows, t)
        }
    };
    write(&args.out.join(format!("{name}.csv")), &table)?;
    write(&args.out.join("runs.csv"), outcomes_csv(&rows))?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData { dataset, seed, out } => gen_data(dataset, *seed, out),
        Command::Train {
            algo,
            data,
            config,
            seed,
            epochs,
            out,
        } => train(algo, data, config, *seed, *epochs, out),
        Command::Eval {
            checkpoint,
            data,
            seeds,
            inference,
            out,
        } => eval(checkpoint, data, seeds, inference, out),
        Command::Boundary {
            checkpoint,
            data,
            resolution,
            out,
        } => boundary(checkpoint, data, *resolution, out),
        Command::Generate {
            checkpoint,
            data,
            samples,
            inference,
            seed,
            out,
        } => generate(checkpoint, data, *samples, inference, *seed, out),
        Command::Ablate(which) => ablate(which),
    }
}

/// Numerical divergence anywhere in the error chain maps to exit code 3;
/// every other failure is a usage or validation problem.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<evodg::Error>())
        .any(evodg::Error::is_numerical);
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
