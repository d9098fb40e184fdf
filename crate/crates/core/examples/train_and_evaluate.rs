//! Trains the baseline network on a small synthetic set and scores it on the
//! held-out split, writing checkpoints and CSV logs.
//!
//! ```text
//! cargo run --release --example train_and_evaluate [OUT_DIR]
//! ```

use hazenet::dataset::{build_dataset, DatasetSpec, Manifest};
use hazenet::losses::{LossKind, LossSpec};
use hazenet::metrics::evaluate_set;
use hazenet::network::load_checkpoint;
use hazenet::trainer::{train, TrainConfig};

fn main() -> hazenet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("hazenet-train"));
    let spec = DatasetSpec {
        n_train: 32,
        n_val: 4,
        n_test: 8,
        ..DatasetSpec::default()
    };
    let paths = build_dataset(&spec, out.join("data"))?;
    let config = TrainConfig {
        epochs: 30,
        batch_size: 2,
        loss: LossSpec::new(LossKind::L2),
        out_dir: Some(out.join("run")),
        verbose: true,
        ..TrainConfig::default()
    };
    let (_, history) = train(&Manifest::read(&paths.train)?, Some(&Manifest::read(&paths.val)?), &config)?;
    println!(
        "loss {:.5} -> {:.5}",
        history.initial_loss().unwrap_or(f64::NAN),
        history.final_loss().unwrap_or(f64::NAN)
    );

    let best = load_checkpoint(out.join("run/best.ckpt"))?;
    let report = evaluate_set(&best, &Manifest::read(&paths.test)?);
    print!("{}", report.table());
    println!("{}", report.summary_line());
    report.write_csv(out.join("run/test.csv"))?;
    Ok(())
}
