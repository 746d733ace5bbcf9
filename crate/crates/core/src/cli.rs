//! Command-line front end: `train`, `sr` and `eval`.

use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::dataset::{CorpusConfig, TrainCorpus};
use crate::error::{Error, Result};
use crate::imaging::{load_image, rgb_to_y, save_image, ImagePlane};
use crate::metrics::EvalReport;
use crate::model::{Mssrnet, NetConfig};
use crate::pipeline::{evaluate, upscale_rgb};
use crate::tensor::{Precision, Scalar};
use crate::train::{train, EpochLog, TrainConfig};
use crate::weights::{load_weights, save_weights, WeightHeader};

pub const CHECKPOINT_EVERY: usize = 10;
pub const DEFAULT_HOLDOUT: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Train a network on a directory of images.
    Train,
    /// Super-resolve images with a trained network.
    Sr,
    /// Degrade HR images and score the reconstruction.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Std,
    High,
}

#[derive(Debug, Parser)]
#[command(name = "mssrnet", version, about = "Single-image super-resolution with dilated inception modules")]
pub struct Cli {
    pub command: Command,
    /// Upscaling factor (2, 3 or 4). `sr` and `eval` default to the weight file's.
    #[arg(long)]
    pub scale: Option<usize>,
    /// Feature width per branch [default: 8 for train].
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of enhancement blocks [default: 5 for train].
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Batches per epoch.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image directory (or a single image for `sr`/`eval`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Weight file to read (`sr`, `eval`) or write (`train`).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Fraction of training images held out for per-epoch PSNR.
    #[arg(long, default_value_t = DEFAULT_HOLDOUT)]
    pub holdout: f64,
    /// Skip the network and use plain bicubic interpolation.
    #[arg(long)]
    pub bicubic_only: bool,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Std)]
    pub precision: PrecisionArg,
}

/// Validated settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub scale: Option<usize>,
    /// `None` means "default" for training and "whatever the weights say"
    /// otherwise.
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub epochs: usize,
    pub iters: usize,
    pub batch: usize,
    pub seed: u64,
    pub data: PathBuf,
    pub weights: Option<PathBuf>,
    pub out: PathBuf,
    pub holdout: f64,
    pub bicubic_only: bool,
    pub precision: Precision,
}

impl RunConfig {
    pub fn new(command: Command, data: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            scale: None,
            n: None,
            m: None,
            epochs: 100,
            iters: 2000,
            batch: 64,
            seed: 0,
            data: data.into(),
            weights: None,
            out: out.into(),
            holdout: DEFAULT_HOLDOUT,
            bicubic_only: false,
            precision: Precision::Standard,
        }
    }

    pub fn from_cli(cli: Cli) -> Result<Self> {
        let data = cli.data.ok_or_else(|| Error::Argument("--data is required".into()))?;
        let cfg = RunConfig {
            command: cli.command,
            scale: cli.scale,
            n: cli.n,
            m: cli.m,
            epochs: cli.epochs,
            iters: cli.iters,
            batch: cli.batch,
            seed: cli.seed,
            data,
            weights: cli.weights,
            out: cli.out,
            holdout: cli.holdout,
            bicubic_only: cli.bicubic_only,
            precision: match cli.precision {
                PrecisionArg::Std => Precision::Standard,
                PrecisionArg::High => Precision::High,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.scale {
            if !(2..=4).contains(&s) {
                return Err(Error::Argument(format!("scale must be 2, 3 or 4, got {s}")));
            }
        }
        if self.n == Some(0) {
            return Err(Error::Argument("n must be >= 1".into()));
        }
        if self.epochs == 0 || self.iters == 0 || self.batch == 0 {
            return Err(Error::Argument("epochs, iters and batch must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::Argument(format!("holdout fraction must be in [0, 1), got {}", self.holdout)));
        }
        match self.command {
            Command::Train if self.bicubic_only => Err(Error::Argument("--bicubic-only makes no sense for train".into())),
            Command::Sr | Command::Eval if self.weights.is_none() && !self.bicubic_only => {
                Err(Error::Argument("--weights or --bicubic-only is required".into()))
            }
            _ => Ok(()),
        }
    }

    /// Network configuration for training (defaults n = 8, m = 5, Y only).
    pub fn net_config(&self) -> NetConfig {
        let d = NetConfig::default();
        NetConfig::new(self.n.unwrap_or(d.n), self.m.unwrap_or(d.m), 1, self.seed)
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "bmp")
    )
}

/// Image files under `path` sorted by file name, or `path` itself if it is
/// a file. Other directory entries are skipped with a warning.
pub fn list_images(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(path)? {
        let p = entry?.path();
        if !p.is_file() {
            continue;
        }
        if is_image(&p) {
            out.push(p);
        } else {
            log::warn!("skipping {}: not a .png or .bmp file", p.display());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Argument(format!("no .png or .bmp images in {}", path.display())));
    }
    Ok(out)
}

fn image_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn load_named(paths: &[PathBuf]) -> Result<Vec<(String, ImagePlane)>> {
    paths.iter().map(|p| Ok((image_name(p), load_image(p)?))).collect()
}

/// Indices of the `round(fraction * count)` held-out images, evenly spaced.
/// At least one image always remains for training.
pub fn holdout_indices(count: usize, fraction: f64) -> Vec<usize> {
    let k = ((fraction * count as f64).round() as usize).min(count.saturating_sub(1));
    (0..k).map(|j| ((2 * j + 1) * count) / (2 * k)).collect()
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub logs: Vec<EpochLog>,
    pub weights: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub holdout: Vec<String>,
}

pub fn checkpoint_path(out: &Path, epoch: usize) -> PathBuf {
    out.join(format!("ckpt_{epoch}.mssr"))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    match cfg.precision {
        Precision::Standard => train_with::<f32>(cfg),
        Precision::High => train_with::<f64>(cfg),
    }
}

fn train_with<T: Scalar>(cfg: &RunConfig) -> Result<TrainReport> {
    let scale = cfg.scale.unwrap_or(2);
    let images = load_named(&list_images(&cfg.data)?)?;
    let held = holdout_indices(images.len(), cfg.holdout);
    let (mut train_set, mut holdout) = (Vec::new(), Vec::new());
    for (i, (name, img)) in images.into_iter().enumerate() {
        if held.contains(&i) {
            holdout.push((name, img));
        } else {
            train_set.push(rgb_to_y(&img));
        }
    }
    let corpus = TrainCorpus::build(&train_set, CorpusConfig::new(scale))?;
    let tcfg = TrainConfig {
        iters_per_epoch: cfg.iters,
        batch: cfg.batch,
        ..TrainConfig::new(cfg.net_config(), scale).with_epochs(cfg.epochs)?
    };

    fs::create_dir_all(&cfg.out)?;
    let mut log_file = File::create(cfg.out.join("train.log"))?;
    writeln!(log_file, "epoch\tlr\ttrain_loss\tholdout_psnr")?;
    let mut checkpoints = Vec::new();
    let result = train::<T>(&corpus, &holdout, &tcfg, |log, net| {
        let line = log.line();
        println!("{line}");
        writeln!(log_file, "{line}")?;
        if log.epoch % CHECKPOINT_EVERY == 0 {
            let p = checkpoint_path(&cfg.out, log.epoch);
            save_weights(net, scale as u32, &p)?;
            checkpoints.push(p);
        }
        Ok(())
    });
    let (trainer, logs) = match result {
        Ok(r) => r,
        Err(e) => {
            if let Some(last) = checkpoints.last() {
                log::error!("training aborted; last good checkpoint is {}", last.display());
            }
            return Err(e);
        }
    };
    let weights = cfg.weights.clone().unwrap_or_else(|| cfg.out.join("final.mssr"));
    save_weights(&trainer.net, scale as u32, &weights)?;
    Ok(TrainReport { logs, weights, checkpoints, holdout: holdout.into_iter().map(|(n, _)| n).collect() })
}

/// Loads weights and checks them against the requested `n`, `m` (and the
/// single luminance channel the pipeline feeds).
fn load_checked<T: Scalar>(cfg: &RunConfig) -> Result<Option<(Mssrnet<T>, WeightHeader)>> {
    if cfg.bicubic_only {
        return Ok(None);
    }
    let path = cfg.weights.as_ref().ok_or_else(|| Error::Argument("--weights is required".into()))?;
    let (net, header) = load_weights::<T>(path)?;
    let mismatch = |what: &str, want: usize, got: u32| {
        Error::Compatibility(format!("requested {what} = {want} but {} has {what} = {got}", path.display()))
    };
    if let Some(n) = cfg.n.filter(|&n| n != header.n as usize) {
        return Err(mismatch("n", n, header.n));
    }
    if let Some(m) = cfg.m.filter(|&m| m != header.m as usize) {
        return Err(mismatch("m", m, header.m));
    }
    if header.c != 1 {
        return Err(mismatch("c", 1, header.c));
    }
    Ok(Some((net, header)))
}

pub fn cmd_sr(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match cfg.precision {
        Precision::Standard => sr_with::<f32>(cfg),
        Precision::High => sr_with::<f64>(cfg),
    }
}

fn sr_with<T: Scalar>(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let loaded = load_checked::<T>(cfg)?;
    let scale = match (cfg.scale, &loaded) {
        (Some(s), Some((_, h))) if h.scale != 0 && h.scale as usize != s => {
            return Err(Error::Compatibility(format!("weights were trained for x{}, requested x{s}", h.scale)));
        }
        (Some(s), _) => s,
        (None, Some((_, h))) if (2..=4).contains(&h.scale) => h.scale as usize,
        _ => return Err(Error::Argument("--scale is required".into())),
    };
    fs::create_dir_all(&cfg.out)?;
    let mut written = Vec::new();
    for path in list_images(&cfg.data)? {
        let img = load_image(&path)?;
        let sr = upscale_rgb(loaded.as_ref().map(|(net, _)| net), &img, scale)?;
        let stem = path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
        let dst = cfg.out.join(format!("{stem}_x{scale}.png"));
        save_image(&sr, &dst)?;
        written.push(dst);
    }
    Ok(written)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    match cfg.precision {
        Precision::Standard => eval_with::<f32>(cfg),
        Precision::High => eval_with::<f64>(cfg),
    }
}

fn eval_with<T: Scalar>(cfg: &RunConfig) -> Result<EvalReport> {
    let loaded = load_checked::<T>(cfg)?;
    let tag = loaded.as_ref().map_or(0, |(_, h)| h.scale as usize);
    let scale = cfg.scale.unwrap_or(if (2..=4).contains(&tag) { tag } else { 2 });
    if tag != 0 && tag != scale {
        log::warn!("weights were trained for x{tag}, evaluating at x{scale}");
    }
    let images = load_named(&list_images(&cfg.data)?)?;
    let report = evaluate(&images, scale, loaded.as_ref().map(|(net, _)| net))?;
    fs::create_dir_all(&cfg.out)?;
    let mut tsv = OpenOptions::new().create(true).write(true).truncate(true).open(cfg.out.join(format!("eval_x{scale}.tsv")))?;
    tsv.write_all(report.to_lines().as_bytes())?;
    Ok(report)
}

/// Parses nothing; dispatches an already-parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::from_cli(cli)?;
    match cfg.command {
        Command::Train => {
            let report = cmd_train(&cfg)?;
            log::info!("weights written to {}", report.weights.display());
        }
        Command::Sr => {
            for p in cmd_sr(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Eval => print!("{}", cmd_eval(&cfg)?.to_table()),
    }
    Ok(())
}
