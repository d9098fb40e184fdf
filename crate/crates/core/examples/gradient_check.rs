//! Finite-difference checks of every loss gradient and of the full network
//! backward pass.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use hazenet::gradcheck::{check_spec, loss_check, network_check, random_pair, random_params, step_for};
use hazenet::losses::LossKind;

fn main() -> hazenet::Result<()> {
    let mut all_ok = true;
    for kind in LossKind::ALL {
        let (x, y) = random_pair(21, 21, 3, 1);
        let loss = loss_check(&check_spec(kind, 21)?, &x, &y, step_for(kind))?;
        let (hazy, clean) = random_pair(9, 9, 3, 2);
        let net = network_check(&random_params(3, 1.5), &hazy, &clean, &check_spec(kind, 9)?, 1e-4)?;
        all_ok &= loss.passed() && net.passed();
        println!("{loss}\n{net}");
    }
    println!("{}", if all_ok { "all gradients agree" } else { "MISMATCH" });
    Ok(())
}
