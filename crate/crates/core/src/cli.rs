//! The `hazenet` command line.
//!
//! Each subcommand starts from the default [`RunConfig`], applies `--config`
//! if given, then applies flags. Flags are the config keys with `-` for `_`;
//! the underscore spelling is accepted too.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::config::{RunConfig, KEYS};
use crate::dataset::{build_dataset, Manifest};
use crate::error::{Error, Result};
use crate::gradcheck::{check_spec, loss_check, network_check, random_pair, random_params, step_for};
use crate::image::{load_image, save_image};
use crate::losses::{LossKind, LossSpec};
use crate::metrics::evaluate_set_with;
use crate::network::load_checkpoint;
use crate::trainer::{alpha_sweep, sweep_csv, train};

const COMMON: &[&str] = &["seed", "threads", "out"];
const DATASET: &[&str] = &[
    "clean_source", "n_train", "n_val", "n_test", "beta_range", "a_range", "depth_kinds", "patch_size", "d_max",
];
const LOSS: &[&str] = &["loss", "alpha", "sigma_g", "sigmas", "c1", "c2", "paper_grad_scaling", "color"];
const OPTIM: &[&str] = &[
    "lr", "batch_size", "momentum", "weight_decay", "clip_norm", "clip_mode", "epochs", "init_std", "log_every",
    "init_checkpoint", "fine_tune_lr", "fine_tune_batch_size", "verbose",
];
const EVAL: &[&str] = &["eval_sigma", "eval_c1", "eval_c2"];
const BOOLS: &[&str] = &["paper_grad_scaling", "verbose"];

/// Side of the image the network gradient check runs on.
pub const NETWORK_CHECK_SIZE: usize = 9;
/// Finite-difference step of the network check.
pub const NETWORK_CHECK_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Synthesize,
    Train,
    Dehaze,
    Eval,
    Gradcheck,
    Sweep,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Synthesize,
        Subcommand::Train,
        Subcommand::Dehaze,
        Subcommand::Eval,
        Subcommand::Gradcheck,
        Subcommand::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Synthesize => "synthesize",
            Subcommand::Train => "train",
            Subcommand::Dehaze => "dehaze",
            Subcommand::Eval => "eval",
            Subcommand::Gradcheck => "gradcheck",
            Subcommand::Sweep => "sweep",
        }
    }

    fn about(self) -> &'static str {
        match self {
            Subcommand::Synthesize => "Generate a synthetic hazy/clean dataset with train, val and test manifests",
            Subcommand::Train => "Train the dehazing network, writing checkpoints and loss history",
            Subcommand::Dehaze => "Dehaze a single image with a trained checkpoint",
            Subcommand::Eval => "Score a checkpoint on a manifest with PSNR and SSIM",
            Subcommand::Gradcheck => "Compare analytic loss and network gradients with finite differences",
            Subcommand::Sweep => "Train once per mix weight alpha and tabulate validation scores",
        }
    }

    /// Config keys this command accepts as flags.
    pub fn keys(self) -> Vec<&'static str> {
        let extra: Vec<&[&str]> = match self {
            Subcommand::Synthesize => vec![DATASET],
            Subcommand::Train => vec![&["train_manifest", "val_manifest"], LOSS, OPTIM, EVAL],
            Subcommand::Dehaze => vec![&["checkpoint", "input", "output"]],
            Subcommand::Eval => vec![&["checkpoint", "manifest", "report"], EVAL],
            Subcommand::Gradcheck => vec![&["size", "alpha", "c1", "c2", "paper_grad_scaling", "color"]],
            Subcommand::Sweep => vec![&["train_manifest", "val_manifest", "alphas"], LOSS, OPTIM, EVAL],
        };
        COMMON.iter().copied().chain(extra.into_iter().flatten().copied()).collect()
    }

    /// Defaults this command starts from before the config file and flags.
    pub fn base_config(self) -> RunConfig {
        let mut c = RunConfig::default();
        if self == Subcommand::Sweep {
            c.train.loss = LossSpec::new(LossKind::MsSsimL2);
        }
        c
    }

    fn from_name(name: &str) -> Option<Subcommand> {
        Subcommand::ALL.into_iter().find(|s| s.name() == name)
    }
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn describe(key: &str) -> &'static str {
    KEYS.iter().find(|(k, _)| *k == key).map_or("", |(_, d)| d)
}

fn subcommand(cmd: Subcommand) -> Command {
    let base = cmd.base_config();
    let mut c = Command::new(cmd.name()).about(cmd.about()).arg(
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .help("flat key = value config file; flags override it [default: none]"),
    );
    if cmd == Subcommand::Gradcheck {
        c = c.arg(
            Arg::new("kind")
                .value_name("LOSS")
                .required(true)
                .help(format!("loss to check: {}", LossKind::valid_names())),
        );
    }
    for key in cmd.keys() {
        let default = base.get(key).filter(|v| !v.is_empty()).unwrap_or_else(|| "none".into());
        let long = flag_name(key);
        let mut arg = Arg::new(key)
            .long(long.clone())
            .help(format!("{} [default: {default}]", describe(key)))
            .action(ArgAction::Set);
        if long != key {
            arg = arg.alias(key);
        }
        if BOOLS.contains(&key) {
            arg = arg.num_args(0..=1).default_missing_value("true").value_name("BOOL");
        } else {
            arg = arg.value_name(key.to_ascii_uppercase());
        }
        c = c.arg(arg);
    }
    c
}

pub fn command() -> Command {
    let mut c = Command::new("hazenet")
        .about("Single-image dehazing: synthesize data, train, evaluate and dehaze")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for s in Subcommand::ALL {
        c = c.subcommand(subcommand(s));
    }
    c
}

/// Builds the effective configuration of one parsed subcommand.
pub fn resolve_config(cmd: Subcommand, m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = cmd.base_config();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for key in cmd.keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config {
        key: key.to_string(),
        reason: format!("required; pass --{}", flag_name(key)),
    })
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    Ok(pool.install(f))
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("nan".into(), |v| format!("{v:.digits$}"))
}

/// Parses `args` (program name first) and runs the command.
///
/// `Ok(true)` means the command met its postcondition, `Ok(false)` that it
/// ran but a check failed. Help and version requests print and return `Ok(true)`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<bool>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}").map_err(write_err(Path::new("<stdout>")))?;
            return Ok(true);
        }
        Err(e) => {
            return Err(Error::Config {
                key: "arguments".into(),
                reason: e.render().to_string().trim().to_string(),
            })
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cmd = Subcommand::from_name(name).expect("registered subcommand");
    let cfg = resolve_config(cmd, sub)?;
    let stdout = write_err(Path::new("<stdout>"));
    match cmd {
        Subcommand::Synthesize => {
            let spec = cfg.dataset_spec();
            let paths = with_pool(cfg.threads, || build_dataset(&spec, &cfg.out))??;
            for p in [&paths.train, &paths.val, &paths.test] {
                writeln!(out, "{}", p.display()).map_err(&stdout)?;
            }
            Ok(true)
        }
        Subcommand::Train => {
            let train_m = Manifest::read_non_empty(required(&cfg.train_manifest, "train_manifest")?)?;
            let val_m = cfg.val_manifest.as_ref().map(Manifest::read_non_empty).transpose()?;
            let tc = cfg.train_config();
            std::fs::create_dir_all(&cfg.out).map_err(write_err(&cfg.out))?;
            let cfg_path = cfg.out.join("config.txt");
            std::fs::write(&cfg_path, cfg.to_text()).map_err(write_err(&cfg_path))?;
            let (_, history) = train(&train_m, val_m.as_ref(), &tc)?;
            writeln!(out, "final training loss {}", fmt_opt(history.final_loss(), 6)).map_err(&stdout)?;
            match history.validation.last().filter(|_| val_m.is_some()) {
                Some(v) => writeln!(
                    out,
                    "final validation psnr_db {} ssim {}",
                    fmt_opt(v.psnr, 4),
                    fmt_opt(v.ssim, 4)
                ),
                None => writeln!(out, "no validation manifest"),
            }
            .map_err(&stdout)?;
            Ok(true)
        }
        Subcommand::Dehaze => {
            let params = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
            let hazy = load_image(required(&cfg.input, "input")?)?.to_rgb();
            let restored = with_pool(cfg.threads, || params.dehaze(&hazy))??;
            save_image(&restored.clamped(), required(&cfg.output, "output")?)?;
            Ok(true)
        }
        Subcommand::Eval => {
            let params = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
            let manifest = Manifest::read_non_empty(required(&cfg.manifest, "manifest")?)?;
            let report = with_pool(cfg.threads, || evaluate_set_with(&params, &manifest, cfg.eval_ssim()))?;
            std::fs::create_dir_all(&cfg.out).map_err(write_err(&cfg.out))?;
            let csv = cfg.out.join(&cfg.report);
            report.write_csv(&csv)?;
            write!(out, "{}", report.table()).map_err(&stdout)?;
            writeln!(out, "{}", report.summary_line()).map_err(&stdout)?;
            writeln!(out, "report {}", csv.display()).map_err(&stdout)?;
            Ok(report.failures.is_empty())
        }
        Subcommand::Gradcheck => {
            let kind: LossKind = sub.get_one::<String>("kind").expect("required").parse()?;
            let outcomes = with_pool(cfg.threads, || gradcheck(kind, &cfg))??;
            for o in &outcomes {
                writeln!(out, "{o}").map_err(&stdout)?;
            }
            Ok(outcomes.iter().all(|o| o.passed()))
        }
        Subcommand::Sweep => {
            let train_m = Manifest::read_non_empty(required(&cfg.train_manifest, "train_manifest")?)?;
            let val_m = Manifest::read_non_empty(required(&cfg.val_manifest, "val_manifest")?)?;
            let rows = alpha_sweep(&train_m, &val_m, &cfg.train_config(), &cfg.alphas)?;
            let csv = sweep_csv(&rows);
            let path = cfg.out.join("sweep.csv");
            std::fs::write(&path, &csv).map_err(write_err(&path))?;
            write!(out, "{csv}").map_err(&stdout)?;
            Ok(true)
        }
    }
}

fn gradcheck(kind: LossKind, cfg: &RunConfig) -> Result<Vec<crate::gradcheck::CheckOutcome>> {
    let configured = |side: usize| -> Result<LossSpec> {
        let base = cfg.loss_spec();
        let mut spec = check_spec(kind, side)?;
        spec.alpha = base.alpha;
        spec.c1 = base.c1;
        spec.c2 = base.c2;
        spec.paper_grad_scaling = base.paper_grad_scaling;
        spec.color = base.color;
        spec.validate()?;
        Ok(spec)
    };
    let size = cfg.gradcheck_size;
    let (x, y) = random_pair(size, size, 3, cfg.seed);
    let mut loss = loss_check(&configured(size)?, &x, &y, step_for(kind))?;
    loss.name = format!("loss/{kind} {size}x{size}");

    let n = NETWORK_CHECK_SIZE;
    let params = random_params(cfg.seed.wrapping_add(1), 1.5);
    let (hazy, clean) = random_pair(n, n, 3, cfg.seed.wrapping_add(2));
    let mut net = network_check(&params, &hazy, &clean, &configured(n)?, NETWORK_CHECK_STEP)?;
    net.name = format!("network/{kind} {n}x{n}");
    Ok(vec![loss, net])
}
