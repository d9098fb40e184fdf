//! Pre-trains with ℓ2, then fine-tunes from that checkpoint with the
//! MS-SSIM+ℓ2 mix at several α values.
//!
//! ```text
//! cargo run --release --example fine_tune_sweep
//! ```

use hazenet::dataset::{build_dataset, DatasetSpec, Manifest};
use hazenet::losses::{LossKind, LossSpec};
use hazenet::trainer::{alpha_sweep, sweep_csv, FineTune, TrainConfig};

fn main() -> hazenet::Result<()> {
    let dir = std::env::temp_dir().join("hazenet-sweep");
    let spec = DatasetSpec {
        n_train: 24,
        n_val: 4,
        n_test: 4,
        ..DatasetSpec::default()
    };
    let paths = build_dataset(&spec, dir.join("data"))?;
    let train = Manifest::read(&paths.train)?;
    let val = Manifest::read(&paths.val)?;

    let pre = TrainConfig {
        epochs: 30,
        batch_size: 2,
        out_dir: Some(dir.join("pretrain")),
        ..TrainConfig::default()
    };
    hazenet::trainer::train(&train, Some(&val), &pre)?;

    let tune = TrainConfig {
        epochs: 4,
        loss: LossSpec::new(LossKind::MsSsimL2),
        fine_tune: Some(FineTune::from_checkpoint(dir.join("pretrain/final.ckpt"))),
        out_dir: Some(dir.join("sweep")),
        ..TrainConfig::default()
    };
    let rows = alpha_sweep(&train, &val, &tune, &[0.1, 0.3, 0.5, 0.7, 0.9])?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
