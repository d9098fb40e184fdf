//! Parses a run configuration, applies an override and prints the result in
//! the same `key = value` syntax the CLI reads with `--config`.
//!
//! ```text
//! cargo run --example run_config
//! ```

use hazenet::config::RunConfig;

const TEXT: &str = "\
# fine-tune with the best-SSIM mix
loss = MSSSIM_L2
alpha = 0.1
epochs = 20
init_checkpoint = runs/l2/final.ckpt
threads = 1
";

fn main() -> hazenet::Result<()> {
    let mut cfg = RunConfig::parse_text(TEXT)?;
    cfg.set("seed", "7")?;
    cfg.validate()?;
    let t = cfg.train_config();
    println!("# effective lr {} batch {}", t.lr(), t.effective_batch_size());
    print!("{}", cfg.to_text());
    if let Err(e) = RunConfig::parse_text("beta_range = 1.6,0.4") {
        println!("# rejected: {e}");
    }
    Ok(())
}
