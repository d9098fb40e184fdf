//! Synthesizes haze on a procedural scene, recovers K from the known
//! transmission and airlight, and reconstructs the clean image.
//!
//! ```text
//! cargo run --release --example haze_roundtrip
//! ```

use hazenet::dataset::procedural_clean;
use hazenet::haze::{analytic_k, make_depth, reconstruct, synthesize_haze, transmission, DepthKind};
use hazenet::metrics::psnr;

fn main() -> hazenet::Result<()> {
    let clean = procedural_clean(11, 64)?;
    for kind in DepthKind::ALL {
        let depth = make_depth(kind, 64, 64, 3)?;
        for (beta, a) in [(0.4, 0.7), (1.0, 0.85), (1.6, 1.0)] {
            let t = transmission(&depth, beta)?;
            let hazy = synthesize_haze(&clean, &t, a)?;
            let k = analytic_k(&hazy, &t, a, 1.0)?;
            let back = reconstruct(&k, &hazy, 1.0)?;
            let worst = back
                .data()
                .iter()
                .zip(clean.data())
                .zip(hazy.data())
                .filter(|(_, &i)| (i - 1.0).abs() > 1e-3)
                .map(|((r, c), _)| (r - c).abs())
                .fold(0.0, f64::max);
            println!(
                "{kind:<12} beta={beta:.1} A={a:.2}  hazy psnr {:>7}  max |J - clean| {worst:.2e}",
                psnr(&hazy, &clean)?.to_string(),
            );
        }
    }
    Ok(())
}
