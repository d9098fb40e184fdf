//! Dehazes one image file with a checkpoint. Without arguments it trains a
//! quick model, synthesizes a hazy scene and dehazes that.
//!
//! ```text
//! cargo run --release --example dehaze_image [CHECKPOINT INPUT OUTPUT]
//! ```

use std::path::PathBuf;

use hazenet::dataset::{procedural_clean, Sample};
use hazenet::haze::{make_depth, synthesize_haze, transmission, DepthKind};
use hazenet::image::{load_image, save_image};
use hazenet::metrics::psnr;
use hazenet::network::{load_checkpoint, NetworkParams};
use hazenet::trainer::{train_samples, TrainConfig};

fn demo_model() -> hazenet::Result<NetworkParams> {
    let samples: Vec<Sample> = (0..8)
        .map(|i| {
            let clean = procedural_clean(100 + i, 48)?;
            let depth = make_depth(DepthKind::ALL[i as usize % 3], 48, 48, i)?;
            let hazy = synthesize_haze(&clean, &transmission(&depth, 0.8)?, 0.9)?;
            Ok(Sample { id: format!("demo_{i}"), clean, hazy })
        })
        .collect::<hazenet::Result<_>>()?;
    let config = TrainConfig { epochs: 60, batch_size: 1, ..TrainConfig::default() };
    Ok(train_samples(&samples, &[], &config)?.0)
}

fn main() -> hazenet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [ckpt, input, output] = args.as_slice() {
        let params = load_checkpoint(ckpt)?;
        let hazy = load_image(input)?.to_rgb();
        save_image(&params.dehaze(&hazy)?.clamped(), output)?;
        return Ok(());
    }

    let dir = std::env::temp_dir().join("hazenet-dehaze");
    std::fs::create_dir_all(&dir).map_err(|e| hazenet::Error::Io { path: dir.clone(), source: e })?;
    let params = demo_model()?;
    let clean = procedural_clean(7, 64)?;
    let hazy = synthesize_haze(&clean, &transmission(&make_depth(DepthKind::Ramp, 64, 64, 1)?, 0.8)?, 0.9)?;
    let restored = params.dehaze(&hazy)?.clamped();
    let paths: Vec<PathBuf> = ["clean.png", "hazy.png", "dehazed.png"].iter().map(|n| dir.join(n)).collect();
    for (img, p) in [&clean, &hazy, &restored].into_iter().zip(&paths) {
        save_image(img, p)?;
    }
    println!("hazy    psnr {}", psnr(&hazy, &clean)?);
    println!("dehazed psnr {}", psnr(&restored, &clean)?);
    println!("images in {}", dir.display());
    Ok(())
}
