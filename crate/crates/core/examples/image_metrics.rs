//! PSNR and SSIM between a clean image and progressively hazier versions,
//! plus the effect of the SSIM window on the score.
//!
//! ```text
//! cargo run --release --example image_metrics
//! ```

use hazenet::dataset::procedural_clean;
use hazenet::haze::{make_depth, synthesize_haze, transmission, DepthKind};
use hazenet::metrics::{psnr, ssim_eval, ssim_eval_with, EVAL_C1, EVAL_C2};

fn main() -> hazenet::Result<()> {
    let clean = procedural_clean(5, 64)?;
    let depth = make_depth(DepthKind::Radial, 64, 64, 0)?;
    println!("{:>5}  {:>9}  {:>8}  {:>10}", "beta", "psnr_db", "ssim", "ssim(σ=5)");
    for beta in [0.0, 0.2, 0.4, 0.8, 1.2, 1.6] {
        let hazy = synthesize_haze(&clean, &transmission(&depth, beta)?, 0.9)?;
        println!(
            "{beta:>5.1}  {:>9}  {:>8.4}  {:>10.4}",
            psnr(&hazy, &clean)?.to_string(),
            ssim_eval(&hazy, &clean)?,
            ssim_eval_with(&hazy, &clean, 5.0, EVAL_C1, EVAL_C2)?,
        );
    }
    Ok(())
}
