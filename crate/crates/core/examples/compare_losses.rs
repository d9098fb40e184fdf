//! Trains one network per loss with the same data and seed, then compares
//! test PSNR and SSIM.
//!
//! ```text
//! cargo run --release --example compare_losses [EPOCHS]
//! ```

use hazenet::dataset::{build_dataset, DatasetSpec, Manifest};
use hazenet::losses::{LossKind, LossSpec};
use hazenet::metrics::{evaluate_samples, Identity};
use hazenet::trainer::{train_samples, TrainConfig};

fn main() -> hazenet::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(25);
    let dir = std::env::temp_dir().join("hazenet-compare");
    let spec = DatasetSpec {
        n_train: 32,
        n_val: 4,
        n_test: 8,
        ..DatasetSpec::default()
    };
    let paths = build_dataset(&spec, &dir)?;
    let train = Manifest::read(&paths.train)?.load_all()?;
    let test = Manifest::read(&paths.test)?.load_all()?;

    let hazy = evaluate_samples(&Identity, &test);
    println!("{:<10} {:>9} {:>8}", "loss", "psnr_db", "ssim");
    println!("{:<10} {:>9.3} {:>8.4}", "hazy", hazy.mean_psnr().unwrap_or(f64::NAN), hazy.mean_ssim().unwrap_or(f64::NAN));
    for kind in LossKind::ALL {
        let config = TrainConfig {
            epochs,
            batch_size: 2,
            loss: LossSpec::new(kind),
            ..TrainConfig::default()
        };
        let (params, _) = train_samples(&train, &[], &config)?;
        let r = evaluate_samples(&params, &test);
        println!(
            "{:<10} {:>9.3} {:>8.4}",
            kind.to_string(),
            r.mean_psnr().unwrap_or(f64::NAN),
            r.mean_ssim().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
