//! Flat `key = value` run configuration shared by every command.
//!
//! ```text
//! # dataset
//! n_train = 64
//! beta_range = 0.4,1.6
//! loss = MSSSIM_L2
//! alpha = 0.1
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors. Values
//! are validated when the whole configuration is assembled, so a file may
//! set related keys in any order.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{CleanSource, DatasetSpec};
use crate::error::{Error, Result};
use crate::haze::DepthKind;
use crate::losses::{ColorMode, LossKind, LossSpec};
use crate::metrics::EvalSsim;
use crate::trainer::{ClipMode, FineTune, TrainConfig, FINE_TUNE_BATCH_SIZE, FINE_TUNE_LR};

pub const DEFAULT_ALPHAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_GRADCHECK_SIZE: usize = 17;

/// Every key with a one-line description, in help order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "base seed for data synthesis, initialization and shuffling"),
    ("threads", "worker threads, 0 = all cores; 1 is bit-reproducible"),
    ("out", "output directory"),
    ("clean_source", "`procedural` or a directory of clean images"),
    ("n_train", "training pairs"),
    ("n_val", "validation pairs"),
    ("n_test", "test pairs"),
    ("beta_range", "scattering coefficient range lo,hi"),
    ("a_range", "atmospheric light range lo,hi"),
    ("depth_kinds", "comma list of ramp, radial, smooth_noise"),
    ("patch_size", "side of each square patch"),
    ("d_max", "largest synthetic depth"),
    ("train_manifest", "training manifest"),
    ("val_manifest", "validation manifest"),
    ("manifest", "manifest to evaluate"),
    ("checkpoint", "network checkpoint"),
    ("input", "hazy input image"),
    ("output", "dehazed output image"),
    ("report", "evaluation CSV path, relative to out"),
    ("loss", "L2, L1, SSIM, MSSSIM, MSSSIM_L2 or MSSSIM_L1"),
    ("alpha", "MS-SSIM weight of mix losses; empty = per-loss default"),
    ("sigma_g", "SSIM loss window sigma"),
    ("sigmas", "MS-SSIM scale ladder"),
    ("c1", "loss SSIM luminance constant"),
    ("c2", "loss SSIM contrast constant"),
    ("paper_grad_scaling", "drop the 2/N and 1/N pixel-loss gradient factors"),
    ("color", "per_channel or luminance"),
    ("lr", "learning rate"),
    ("batch_size", "mini-batch size"),
    ("momentum", "momentum coefficient"),
    ("weight_decay", "weight decay on conv weights"),
    ("clip_norm", "gradient clipping bound"),
    ("clip_mode", "global_norm or value"),
    ("epochs", "training epochs"),
    ("init_std", "standard deviation of initial weights"),
    ("log_every", "training loss logging interval in iterations"),
    ("init_checkpoint", "start from this checkpoint with fine-tuning settings"),
    ("fine_tune_lr", "learning rate when fine-tuning"),
    ("fine_tune_batch_size", "mini-batch size when fine-tuning"),
    ("eval_sigma", "evaluation SSIM window sigma"),
    ("eval_c1", "evaluation SSIM luminance constant"),
    ("eval_c2", "evaluation SSIM contrast constant"),
    ("alphas", "alpha values for the sweep"),
    ("size", "gradient check image side"),
    ("verbose", "print per-epoch progress"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub train_manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: PathBuf,
    pub init_checkpoint: Option<PathBuf>,
    pub fine_tune_lr: f64,
    pub fine_tune_batch_size: usize,
    pub alphas: Vec<f64>,
    pub gradcheck_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            out: PathBuf::from(DEFAULT_OUT),
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
            train_manifest: None,
            val_manifest: None,
            manifest: None,
            checkpoint: None,
            input: None,
            output: None,
            report: PathBuf::from("eval.csv"),
            init_checkpoint: None,
            fine_tune_lr: FINE_TUNE_LR,
            fine_tune_batch_size: FINE_TUNE_BATCH_SIZE,
            alphas: DEFAULT_ALPHAS.to_vec(),
            gradcheck_size: DEFAULT_GRADCHECK_SIZE,
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.trim()
        .parse()
        .map_err(|e: T::Err| bad(key, format!("cannot parse `{v}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_range(key: &str, v: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(key, v)?.as_slice() {
        &[lo, hi] => Ok((lo, hi)),
        _ => Err(bad(key, format!("expected `lo,hi`, got `{v}`"))),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got `{v}`"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let d = &mut self.dataset;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "clean_source" => d.clean_source = parse(key, v)?,
            "n_train" => d.n_train = parse(key, v)?,
            "n_val" => d.n_val = parse(key, v)?,
            "n_test" => d.n_test = parse(key, v)?,
            "beta_range" => d.beta_range = parse_range(key, v)?,
            "a_range" => d.a_range = parse_range(key, v)?,
            "depth_kinds" => d.depth_kinds = parse_list::<DepthKind>(key, v)?,
            "patch_size" => d.patch_size = parse(key, v)?,
            "d_max" => d.d_max = parse(key, v)?,
            "train_manifest" => self.train_manifest = opt_path(v),
            "val_manifest" => self.val_manifest = opt_path(v),
            "manifest" => self.manifest = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "input" => self.input = opt_path(v),
            "output" => self.output = opt_path(v),
            "report" => self.report = PathBuf::from(v),
            "loss" => t.loss.kind = parse::<LossKind>(key, v)?,
            "alpha" => t.loss.alpha = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "sigma_g" => t.loss.sigma_g = parse(key, v)?,
            "sigmas" => t.loss.sigmas = parse_list(key, v)?,
            "c1" => t.loss.c1 = parse(key, v)?,
            "c2" => t.loss.c2 = parse(key, v)?,
            "paper_grad_scaling" => t.loss.paper_grad_scaling = parse_bool(key, v)?,
            "color" => {
                t.loss.color = match v.to_ascii_lowercase().as_str() {
                    "per_channel" | "rgb" => ColorMode::PerChannel,
                    "luminance" | "luma" => ColorMode::Luminance,
                    _ => return Err(bad(key, format!("expected per_channel or luminance, got `{v}`"))),
                }
            }
            "lr" => t.base_lr = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "momentum" => t.momentum = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "clip_norm" => t.clip_norm = parse(key, v)?,
            "clip_mode" => t.clip_mode = parse::<ClipMode>(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "init_std" => t.init_std = parse(key, v)?,
            "log_every" => t.log_every = parse(key, v)?,
            "init_checkpoint" => self.init_checkpoint = opt_path(v),
            "fine_tune_lr" => self.fine_tune_lr = parse(key, v)?,
            "fine_tune_batch_size" => self.fine_tune_batch_size = parse(key, v)?,
            "eval_sigma" => t.eval.sigma = parse(key, v)?,
            "eval_c1" => t.eval.c1 = parse(key, v)?,
            "eval_c2" => t.eval.c2 = parse(key, v)?,
            "alphas" => self.alphas = parse_list(key, v)?,
            "size" => self.gradcheck_size = parse(key, v)?,
            "verbose" => t.verbose = parse_bool(key, v)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Current value of `key` in the syntax [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let d = &self.dataset;
        let t = &self.train;
        let l = &t.loss;
        Some(match key {
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            "out" => self.out.display().to_string(),
            "clean_source" => d.clean_source.to_string(),
            "n_train" => d.n_train.to_string(),
            "n_val" => d.n_val.to_string(),
            "n_test" => d.n_test.to_string(),
            "beta_range" => format!("{},{}", d.beta_range.0, d.beta_range.1),
            "a_range" => format!("{},{}", d.a_range.0, d.a_range.1),
            "depth_kinds" => join(&d.depth_kinds),
            "patch_size" => d.patch_size.to_string(),
            "d_max" => d.d_max.to_string(),
            "train_manifest" => show_path(&self.train_manifest),
            "val_manifest" => show_path(&self.val_manifest),
            "manifest" => show_path(&self.manifest),
            "checkpoint" => show_path(&self.checkpoint),
            "input" => show_path(&self.input),
            "output" => show_path(&self.output),
            "report" => self.report.display().to_string(),
            "loss" => l.kind.to_string(),
            "alpha" => l.alpha.map_or(String::new(), |a| a.to_string()),
            "sigma_g" => l.sigma_g.to_string(),
            "sigmas" => join(&l.sigmas),
            "c1" => l.c1.to_string(),
            "c2" => l.c2.to_string(),
            "paper_grad_scaling" => l.paper_grad_scaling.to_string(),
            "color" => match l.color {
                ColorMode::PerChannel => "per_channel".into(),
                ColorMode::Luminance => "luminance".into(),
            },
            "lr" => t.base_lr.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "momentum" => t.momentum.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "clip_norm" => t.clip_norm.to_string(),
            "clip_mode" => t.clip_mode.to_string(),
            "epochs" => t.epochs.to_string(),
            "init_std" => t.init_std.to_string(),
            "log_every" => t.log_every.to_string(),
            "init_checkpoint" => show_path(&self.init_checkpoint),
            "fine_tune_lr" => self.fine_tune_lr.to_string(),
            "fine_tune_batch_size" => self.fine_tune_batch_size.to_string(),
            "eval_sigma" => t.eval.sigma.to_string(),
            "eval_c1" => t.eval.c1.to_string(),
            "eval_c2" => t.eval.c2.to_string(),
            "alphas" => join(&self.alphas),
            "size" => self.gradcheck_size.to_string(),
            "verbose" => t.verbose.to_string(),
            _ => return None,
        })
    }

    /// Applies every line of a config text. Later lines win.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                bad(line, format!("line {}: expected `key = value`", n + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse_text(&text)
    }

    /// Every key and value, one `key = value` line each; parses back to `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            seed: self.seed,
            ..self.dataset.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            threads: self.threads,
            out_dir: Some(self.out.clone()),
            fine_tune: self.init_checkpoint.as_ref().map(|p| FineTune {
                lr: self.fine_tune_lr,
                batch_size: self.fine_tune_batch_size,
                init_checkpoint: p.clone(),
            }),
            ..self.train.clone()
        }
    }

    pub fn loss_spec(&self) -> &LossSpec {
        &self.train.loss
    }

    pub fn eval_ssim(&self) -> &EvalSsim {
        &self.train.eval
    }

    /// Re-checks every constituent type, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let rename = |e: Error| match e {
            Error::InvalidParameter { name, reason } => bad(name, reason),
            other => other,
        };
        self.dataset_spec().validate().map_err(rename)?;
        self.train_config().validate().map_err(rename)?;
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(bad("alphas", format!("every alpha must lie in [0, 1], got {}", join(&self.alphas))));
        }
        if self.alphas.is_empty() {
            return Err(bad("alphas", "needs at least one value"));
        }
        if !(self.fine_tune_lr > 0.0 && self.fine_tune_lr.is_finite()) {
            return Err(bad("fine_tune_lr", format!("must be positive, got {}", self.fine_tune_lr)));
        }
        if self.fine_tune_batch_size == 0 {
            return Err(bad("fine_tune_batch_size", "must be at least 1"));
        }
        if let CleanSource::Directory(p) = &self.dataset.clean_source {
            if p.as_os_str().is_empty() {
                return Err(bad("clean_source", "empty path"));
            }
        }
        Ok(())
    }
}
