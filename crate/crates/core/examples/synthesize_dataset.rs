//! Builds a small synthetic dataset and checks its manifests.
//!
//! ```text
//! cargo run --release --example synthesize_dataset [OUT_DIR]
//! ```

use hazenet::dataset::{build_dataset, DatasetSpec, Manifest};

fn main() -> hazenet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("hazenet-synthesize"));
    let spec = DatasetSpec {
        n_train: 8,
        n_val: 4,
        n_test: 4,
        seed: 42,
        ..DatasetSpec::default()
    };
    let paths = build_dataset(&spec, &out)?;
    for (name, path) in [("train", &paths.train), ("val", &paths.val), ("test", &paths.test)] {
        let m = Manifest::read(path)?;
        println!("{name:<5} {} pairs  {}", m.len(), path.display());
        if let Some(e) = m.entries().first() {
            println!("      first: {} beta={:.3} A={:.3} depth={}", e.id(), e.beta, e.a, e.depth_kind);
        }
    }
    Ok(())
}
