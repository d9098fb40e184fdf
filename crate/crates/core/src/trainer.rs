//! Mini-batch momentum SGD with weight decay and gradient clipping.
//!
//! One iteration:
//!
//! ```text
//! g  = mean over the batch of per-image parameter gradients
//! g' = clip(g) + weight_decay · w        (decay on weights, not biases)
//! v  = momentum · v − lr · g'
//! p  = p + v
//! ```
//!
//! Per-image work runs on a rayon pool; the batch reduction always sums in
//! batch order, so results do not depend on the thread count.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{derive_seed, Manifest, Sample};
use crate::error::{Error, Result};
use crate::losses::{self, LossKind, LossSpec};
use crate::metrics::{evaluate_samples_with, EvalReport, EvalSsim};
use crate::network::{load_checkpoint, save_checkpoint, NetworkParams, ParamGrads, DEFAULT_INIT_STD};

pub const DEFAULT_LR: f64 = 0.01;
pub const DEFAULT_BATCH_SIZE: usize = 8;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;
pub const DEFAULT_CLIP_NORM: f64 = 0.1;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_LOG_EVERY: usize = 10;
pub const FINE_TUNE_LR: f64 = 0.002;
pub const FINE_TUNE_BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipMode {
    /// Rescale the whole gradient when its Euclidean norm exceeds the bound.
    #[default]
    GlobalNorm,
    /// Clamp every component to `[−bound, bound]`.
    Value,
}

impl fmt::Display for ClipMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipMode::GlobalNorm => "global_norm",
            ClipMode::Value => "value",
        })
    }
}

impl FromStr for ClipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global_norm" | "norm" => Ok(ClipMode::GlobalNorm),
            "value" => Ok(ClipMode::Value),
            _ => Err(Error::invalid("clip_mode", format!("unknown `{s}`, expected global_norm or value"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTune {
    pub lr: f64,
    pub batch_size: usize,
    pub init_checkpoint: PathBuf,
}

impl FineTune {
    pub fn from_checkpoint(path: impl Into<PathBuf>) -> Self {
        FineTune {
            lr: FINE_TUNE_LR,
            batch_size: FINE_TUNE_BATCH_SIZE,
            init_checkpoint: path.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub clip_mode: ClipMode,
    pub epochs: usize,
    pub seed: u64,
    pub init_std: f64,
    pub loss: LossSpec,
    /// SSIM settings for validation scoring.
    pub eval: EvalSsim,
    /// Overrides `base_lr` and `batch_size` and starts from a checkpoint.
    pub fine_tune: Option<FineTune>,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub log_every: usize,
    /// Where checkpoints and CSV logs go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: DEFAULT_LR,
            batch_size: DEFAULT_BATCH_SIZE,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            clip_norm: DEFAULT_CLIP_NORM,
            clip_mode: ClipMode::GlobalNorm,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            init_std: DEFAULT_INIT_STD,
            loss: LossSpec::default(),
            eval: EvalSsim::default(),
            fine_tune: None,
            threads: 0,
            log_every: DEFAULT_LOG_EVERY,
            out_dir: None,
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn lr(&self) -> f64 {
        self.fine_tune.as_ref().map_or(self.base_lr, |f| f.lr)
    }

    pub fn effective_batch_size(&self) -> usize {
        self.fine_tune.as_ref().map_or(self.batch_size, |f| f.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be positive, got {lr}")));
        }
        if self.effective_batch_size() == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", format!("must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay", format!("must be >= 0, got {}", self.weight_decay)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip_norm", format!("must be positive, got {}", self.clip_norm)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid("init_std", format!("must be positive, got {}", self.init_std)));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log_every", "must be at least 1"));
        }
        self.eval.validate()?;
        self.loss.validate()
    }
}

/// Momentum buffers shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub velocity: ParamGrads,
    pub iteration: usize,
}

impl OptimState {
    pub fn new(params: &NetworkParams) -> Self {
        OptimState {
            velocity: ParamGrads::zeros_like(params),
            iteration: 0,
        }
    }
}

/// Clipped copy of `grads`. Errors on non-finite components.
pub fn clip_gradients(grads: &ParamGrads, bound: f64, mode: ClipMode) -> Result<ParamGrads> {
    if !(bound > 0.0) {
        return Err(Error::invalid("clip_norm", format!("must be positive, got {bound}")));
    }
    if grads.values().any(|v| !v.is_finite()) {
        return Err(Error::invalid("gradient", "contains non-finite values"));
    }
    let mut out = grads.clone();
    match mode {
        ClipMode::GlobalNorm => {
            let norm = grads.global_norm();
            if norm > bound {
                out.scale(bound / norm);
            }
        }
        ClipMode::Value => out.values_mut().for_each(|v| *v = v.clamp(-bound, bound)),
    }
    Ok(out)
}

/// One momentum step in place.
pub fn sgd_step(
    params: &mut NetworkParams,
    grads: &ParamGrads,
    state: &mut OptimState,
    config: &TrainConfig,
) -> Result<()> {
    if !grads.same_shape(params) || !state.velocity.same_shape(params) {
        return Err(Error::Dimension("gradient or velocity shape differs from parameters".into()));
    }
    if grads.values().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            iteration: state.iteration,
        });
    }
    let g = clip_gradients(grads, config.clip_norm, config.clip_mode)?;
    let (lr, m, wd) = (config.lr(), config.momentum, config.weight_decay);
    for ((layer, gl), vl) in params.layers.iter_mut().zip(&g.layers).zip(&mut state.velocity.layers) {
        for ((w, &gw), v) in layer.weights.iter_mut().zip(&gl.weights).zip(&mut vl.weights) {
            *v = m * *v - lr * (gw + wd * *w);
            *w += *v;
        }
        for ((b, &gb), v) in layer.biases.iter_mut().zip(&gl.biases).zip(&mut vl.biases) {
            *v = m * *v - lr * gb;
            *b += *v;
        }
    }
    state.iteration += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub losses: Vec<LossRecord>,
    pub validation: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn initial_loss(&self) -> Option<f64> {
        self.losses.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().map(|r| r.loss)
    }

    /// `iteration,loss`, one row per logged iteration.
    pub fn losses_csv(&self) -> String {
        let mut s = String::from("iteration,loss\n");
        for r in &self.losses {
            s.push_str(&format!("{},{}\n", r.iteration, r.loss));
        }
        s
    }

    /// `epoch,psnr_db,ssim`.
    pub fn validation_csv(&self) -> String {
        let mut s = String::from("epoch,psnr_db,ssim\n");
        let f = |v: Option<f64>| v.map_or("nan".to_string(), |v| v.to_string());
        for r in &self.validation {
            s.push_str(&format!("{},{},{}\n", r.epoch, f(r.psnr), f(r.ssim)));
        }
        s
    }
}

/// Loss value and parameter gradients of one image.
pub fn image_gradients(params: &NetworkParams, sample: &Sample, spec: &LossSpec) -> Result<(f64, ParamGrads)> {
    let cache = params.forward(&sample.hazy)?;
    let loss = losses::evaluate(cache.output(), &sample.clean, spec)?;
    let grads = params.backward(&cache, &loss.grad)?;
    Ok((loss.value, grads))
}

/// Mean loss and mean gradient over `batch`, reduced in batch order.
pub fn batch_gradients(params: &NetworkParams, batch: &[&Sample], spec: &LossSpec) -> Result<(f64, ParamGrads)> {
    let per: Vec<(f64, ParamGrads)> = batch
        .par_iter()
        .map(|s| image_gradients(params, s, spec))
        .collect::<Result<_>>()?;
    let mut total = ParamGrads::zeros_like(params);
    let mut loss = 0.0;
    for (v, g) in &per {
        loss += v;
        total.add_assign(g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn better(a: &EvalReport, best: Option<(f64, f64)>) -> Option<(f64, f64)> {
    let cand = (a.mean_ssim()?, a.mean_psnr().unwrap_or(f64::INFINITY));
    match best {
        Some(b) if (cand.0, cand.1) <= b => None,
        _ => Some(cand),
    }
}

/// Trains on preloaded samples.
pub fn train_samples(
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyManifest(PathBuf::from("<training set>")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| train_inner(train, val, config))
}

fn train_inner(train: &[Sample], val: &[Sample], config: &TrainConfig) -> Result<(NetworkParams, TrainHistory)> {
    let mut params = match &config.fine_tune {
        Some(ft) => load_checkpoint(&ft.init_checkpoint)?,
        None => NetworkParams::init(config.seed, config.init_std)?,
    };
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut state = OptimState::new(&params);
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::MAX));
    let batch = config.effective_batch_size();
    let per_epoch = train.len().div_ceil(batch);
    let last_iteration = per_epoch * config.epochs;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, f64)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let items: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradients(&params, &items, &config.loss)?;
            let it = state.iteration + 1;
            if !loss.is_finite() {
                return Err(Error::NonFinite { what: "loss", iteration: it });
            }
            sgd_step(&mut params, &grads, &mut state, config)?;
            if it == 1 || it.is_multiple_of(config.log_every) || it == last_iteration {
                history.losses.push(LossRecord { iteration: it, loss });
            }
        }

        let report = (!val.is_empty()).then(|| evaluate_samples_with(&params, val, &config.eval));
        history.validation.push(EpochRecord {
            epoch,
            psnr: report.as_ref().and_then(EvalReport::mean_psnr),
            ssim: report.as_ref().and_then(EvalReport::mean_ssim),
        });
        if config.verbose {
            let last = history.final_loss().unwrap_or(f64::NAN);
            let v = history.validation.last().expect("just pushed");
            eprintln!(
                "epoch {epoch:>3}/{}  loss {last:.6}  val psnr {}  val ssim {}",
                config.epochs,
                v.psnr.map_or("-".into(), |p| format!("{p:.3}")),
                v.ssim.map_or("-".into(), |s| format!("{s:.4}")),
            );
        }
        if let Some(dir) = &config.out_dir {
            save_checkpoint(&params, dir.join(format!("epoch_{epoch:03}.ckpt")))?;
            if let Some(b) = report.as_ref().and_then(|r| better(r, best)) {
                best = Some(b);
                save_checkpoint(&params, dir.join("best.ckpt"))?;
            }
            write_file(&dir.join("history.csv"), &history.losses_csv())?;
            write_file(&dir.join("validation.csv"), &history.validation_csv())?;
        }
    }
    if let Some(dir) = &config.out_dir {
        save_checkpoint(&params, dir.join("final.ckpt"))?;
    }
    Ok((params, history))
}

/// Loads both manifests and trains. `val` may be `None` to skip validation.
pub fn train(train: &Manifest, val: Option<&Manifest>, config: &TrainConfig) -> Result<(NetworkParams, TrainHistory)> {
    if train.is_empty() {
        return Err(Error::EmptyManifest(train.root().to_path_buf()));
    }
    let t = train.load_all()?;
    let v = match val {
        Some(m) => m.load_all()?,
        None => Vec::new(),
    };
    train_samples(&t, &v, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

/// One run per α on the same data and seed, scored on the validation set.
/// Each run writes under `out_dir/alpha_<α>` when an output directory is set.
pub fn alpha_sweep_samples(
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    if !config.loss.kind.is_mix() {
        return Err(Error::invalid(
            "loss",
            format!("alpha sweep needs {} or {}, got {}", LossKind::MsSsimL2, LossKind::MsSsimL1, config.loss.kind),
        ));
    }
    if alphas.is_empty() {
        return Err(Error::invalid("alphas", "needs at least one value"));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(sorted.len());
    for alpha in sorted {
        let mut cfg = config.clone();
        cfg.loss.alpha = Some(alpha);
        cfg.out_dir = config.out_dir.as_ref().map(|d| d.join(format!("alpha_{alpha}")));
        let (params, _) = train_samples(train, val, &cfg)?;
        let report = evaluate_samples_with(&params, val, &config.eval);
        rows.push(SweepRow {
            alpha,
            psnr: report.mean_psnr(),
            ssim: report.mean_ssim(),
        });
    }
    Ok(rows)
}

pub fn alpha_sweep(
    train: &Manifest,
    val: &Manifest,
    config: &TrainConfig,
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    alpha_sweep_samples(&train.load_all()?, &val.load_all()?, config, alphas)
}

/// `alpha,psnr_db,ssim`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let f = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
    let mut s = String::from("alpha,psnr_db,ssim\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.alpha, f(r.psnr), f(r.ssim)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::procedural_clean;
    use crate::haze::{make_depth, synthesize_haze, transmission, DepthKind};
    use rand::Rng;

    fn random_grads(params: &NetworkParams, seed: u64, scale: f64) -> ParamGrads {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = ParamGrads::zeros_like(params);
        g.values_mut().for_each(|v| *v = rng.random_range(-1.0..1.0) * scale);
        g
    }

    fn one_param_grads(params: &NetworkParams, v: f64) -> ParamGrads {
        let mut g = ParamGrads::zeros_like(params);
        g.layers[0].weights[0] = v;
        g
    }

    #[test]
    fn clip_cases() {
        let p = NetworkParams::zeros();
        let small = one_param_grads(&p, 0.05);
        assert_eq!(clip_gradients(&small, 0.1, ClipMode::GlobalNorm).unwrap(), small);
        let big = one_param_grads(&p, 0.4);
        let c = clip_gradients(&big, 0.1, ClipMode::GlobalNorm).unwrap();
        assert!((c.layers[0].weights[0] - 0.1).abs() < 1e-15);

        let mut g = random_grads(&p, 1, 1.0);
        let n = g.global_norm();
        g.scale(2.0 / n);
        let c = clip_gradients(&g, 0.1, ClipMode::GlobalNorm).unwrap();
        assert!((c.global_norm() - 0.1).abs() < 1e-9);
        let dot: f64 = c.values().zip(g.values()).map(|(a, b)| a * b).sum();
        assert!((dot / (c.global_norm() * g.global_norm()) - 1.0).abs() < 1e-12);

        let v = clip_gradients(&g, 0.01, ClipMode::Value).unwrap();
        assert!(v.values().all(|x| x.abs() <= 0.01));
        let mut bad = small;
        bad.layers[2].biases[1] = f64::NAN;
        assert!(clip_gradients(&bad, 0.1, ClipMode::GlobalNorm).is_err());
    }

    fn plain_config() -> TrainConfig {
        TrainConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            clip_norm: 1e300,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn vanilla_sgd_reduction() {
        let mut p = NetworkParams::init(1, 0.1).unwrap();
        let before = p.clone();
        let g = random_grads(&p, 2, 0.5);
        let mut st = OptimState::new(&p);
        sgd_step(&mut p, &g, &mut st, &plain_config()).unwrap();
        for (l, (b, gl)) in p.layers.iter().zip(before.layers.iter().zip(&g.layers)) {
            for ((w, w0), gw) in l.weights.iter().zip(&b.weights).zip(&gl.weights) {
                assert_eq!(*w, w0 + -(0.01 * gw));
            }
        }
        assert_eq!(st.iteration, 1);
    }

    #[test]
    fn momentum_inertia() {
        let mut p = NetworkParams::zeros();
        let mut st = OptimState::new(&p);
        st.velocity.layers[1].biases[0] = 0.5;
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let zero = ParamGrads::zeros_like(&p);
        sgd_step(&mut p, &zero, &mut st, &cfg).unwrap();
        assert!((p.layers[1].biases[0] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn decay_skips_biases() {
        let mut p = NetworkParams::zeros();
        p.layers[0].weights[0] = 2.0;
        p.layers[0].biases[0] = 5.0;
        let mut st = OptimState::new(&p);
        let cfg = TrainConfig {
            momentum: 0.0,
            weight_decay: 0.1,
            ..TrainConfig::default()
        };
        let zero = ParamGrads::zeros_like(&p);
        sgd_step(&mut p, &zero, &mut st, &cfg).unwrap();
        assert_eq!(p.layers[0].biases[0], 5.0);
        assert!((p.layers[0].weights[0] - (2.0 - 0.01 * 0.1 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn scalar_quadratic_recurrence() {
        // f(w) = (w - 3)², one active weight.
        let cfg = TrainConfig {
            base_lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.01,
            clip_norm: 1e9,
            ..TrainConfig::default()
        };
        let mut p = NetworkParams::zeros();
        p.layers[0].weights[0] = 0.5;
        let mut st = OptimState::new(&p);
        let (mut w, mut v) = (0.5f64, 0.0f64);
        for _ in 0..10 {
            let g = 2.0 * (p.layers[0].weights[0] - 3.0);
            let grads = one_param_grads(&p, g);
            sgd_step(&mut p, &grads, &mut st, &cfg).unwrap();
            let gs = 2.0 * (w - 3.0);
            v = 0.9 * v - 0.05 * (gs + 0.01 * w);
            w += v;
            assert!((p.layers[0].weights[0] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = NetworkParams::zeros();
        let mut g = ParamGrads::zeros_like(&p);
        g.layers[0].weights.pop();
        let mut st = OptimState::new(&p);
        assert!(sgd_step(&mut p, &g, &mut st, &TrainConfig::default()).is_err());
    }

    fn sample(seed: u64, size: usize) -> Sample {
        let clean = procedural_clean(seed, size).unwrap();
        let t = transmission(&make_depth(DepthKind::Radial, size, size, seed).unwrap(), 0.6).unwrap();
        Sample {
            id: format!("s{seed}"),
            hazy: synthesize_haze(&clean, &t, 0.9).unwrap(),
            clean,
        }
    }

    #[test]
    fn history_logging_and_determinism() {
        let data: Vec<Sample> = (0..6).map(|i| sample(i, 20)).collect();
        let cfg = TrainConfig {
            batch_size: 2,
            epochs: 5,
            threads: 1,
            ..TrainConfig::default()
        };
        let (p1, h1) = train_samples(&data, &data[..2], &cfg).unwrap();
        let its: Vec<usize> = h1.losses.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![1, 10, 15]);
        assert_eq!(h1.validation.len(), 5);
        let (p2, h2) = train_samples(&data, &data[..2], &TrainConfig { threads: 3, ..cfg.clone() }).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn writes_checkpoints_and_fine_tunes_warm() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<Sample> = (0..4).map(|i| sample(i + 10, 20)).collect();
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 30,
            out_dir: Some(dir.path().to_path_buf()),
            ..TrainConfig::default()
        };
        let (_, h) = train_samples(&data, &data[..1], &cfg).unwrap();
        for f in ["epoch_001.ckpt", "epoch_030.ckpt", "best.ckpt", "final.ckpt", "history.csv", "validation.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert!(csv.starts_with("iteration,loss\n"));
        let ft = TrainConfig {
            fine_tune: Some(FineTune::from_checkpoint(dir.path().join("final.ckpt"))),
            epochs: 1,
            out_dir: None,
            ..cfg
        };
        let (_, h2) = train_samples(&data, &[], &ft).unwrap();
        let (a, b) = (h.final_loss().unwrap(), h2.initial_loss().unwrap());
        assert!((b - a).abs() <= 0.05 * a, "checkpoint {a}, warm start {b}");
    }

    #[test]
    fn sweep_requires_mix_and_sorts() {
        let data: Vec<Sample> = (0..2).map(|i| sample(i, 20)).collect();
        let mut cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(alpha_sweep_samples(&data, &data, &cfg, &[0.5]).is_err());
        cfg.loss = LossSpec::new(LossKind::MsSsimL2).with_sigmas(&[0.5, 1.0]);
        let rows = alpha_sweep_samples(&data, &data, &cfg, &[0.9, 0.1, 0.5]).unwrap();
        assert_eq!(rows.iter().map(|r| r.alpha).collect::<Vec<_>>(), vec![0.1, 0.5, 0.9]);
        assert!(rows.iter().all(|r| r.psnr.unwrap().is_finite() && r.ssim.unwrap().is_finite()));
        assert!(sweep_csv(&rows).lines().count() == 4);
    }
}
