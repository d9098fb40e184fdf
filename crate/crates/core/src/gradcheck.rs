//! Finite-difference verification of loss and network gradients.
//!
//! Windowed losses only exist where their widest filter fits, so checks on
//! small images use a shortened scale ladder chosen by [`check_spec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{GaussianKernel, Image};
use crate::losses::{
    compensated_sum, evaluate, finite_diff_grad_terms, loss_terms, richardson_grad_terms, LossKind,
    LossSpec,
};
use crate::network::{ForwardCache, NetworkParams};

/// Ratios below this magnitude of the analytic gradient are not compared.
pub const GRAD_FLOOR: f64 = 1e-8;
/// Residuals closer to zero than this are skipped for sign-based losses,
/// widened when the difference stencil reaches further.
pub const KINK_BAND: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < self.tolerance
    }

    /// Combines outcomes of the same check over several inputs.
    pub fn merge(name: impl Into<String>, parts: &[CheckOutcome]) -> CheckOutcome {
        CheckOutcome {
            name: name.into(),
            max_rel_err: parts.iter().map(|p| p.max_rel_err).fold(0.0, f64::max),
            tolerance: parts.iter().map(|p| p.tolerance).fold(f64::INFINITY, f64::min),
            checked: parts.iter().map(|p| p.checked).sum(),
            skipped: parts.iter().map(|p| p.skipped).sum(),
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: max_rel_err={:.3e} tol={:.0e} checked={} skipped={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel_err,
            self.tolerance,
            self.checked,
            self.skipped
        )
    }
}

pub fn tolerance_for(kind: LossKind) -> f64 {
    match kind {
        LossKind::L2 | LossKind::L1 => 1e-8,
        _ => 1e-4,
    }
}

/// Finite-difference step for prediction gradients of `kind`.
///
/// Windowed losses spread one pixel's influence over many centers, so their
/// small border gradients need a step large enough to bury roundoff; they are
/// differenced with Richardson extrapolation. Pixel losses are exactly
/// quadratic or linear per sample and take a small plain step.
pub fn step_for(kind: LossKind) -> f64 {
    match kind {
        LossKind::L2 | LossKind::L1 => 1e-5,
        _ => 1e-3,
    }
}

fn fits(sigma: f64, side: usize) -> bool {
    2 * GaussianKernel::radius_for(sigma) < side
}

/// Loss settings whose filters fit a `side`×`side` image: the dyadic ladder
/// from 0.5 truncated to fitting scales, and `sigma_g` capped the same way.
pub fn check_spec(kind: LossKind, side: usize) -> Result<LossSpec> {
    let mut sigmas = Vec::new();
    let mut s = 0.5;
    while fits(s, side) && sigmas.len() < 5 {
        sigmas.push(s);
        s *= 2.0;
    }
    let Some(&widest) = sigmas.last() else {
        return Err(Error::TooSmall {
            height: side,
            width: side,
            needed: 2 * GaussianKernel::radius_for(0.5) + 1,
        });
    };
    let sigma_g = if fits(5.0, side) { 5.0 } else { widest };
    Ok(LossSpec::new(kind).with_sigmas(&sigmas).with_sigma_g(sigma_g))
}

/// Prediction and target with independent uniform samples in `[0, 1]`.
pub fn random_pair(height: usize, width: usize, channels: usize, seed: u64) -> (Image, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Image::from_fn(height, width, channels, |_, _, _| rng.random::<f64>());
    let y = Image::from_fn(height, width, channels, |_, _, _| rng.random::<f64>());
    (x, y)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs())
}

/// Compares the analytic prediction gradient of `spec` against term-wise
/// differences with step `h` (see [`step_for`]).
pub fn loss_check(spec: &LossSpec, x: &Image, y: &Image, h: f64) -> Result<CheckOutcome> {
    let analytic = evaluate(x, y, spec)?.grad;
    let terms = |a: &Image, b: &Image| loss_terms(a, b, spec);
    // The band must also cover the widest perturbation the stencil makes.
    let (numeric, reach) = match spec.kind {
        LossKind::L2 | LossKind::L1 => (finite_diff_grad_terms(terms, x, y, h)?, h),
        _ => (richardson_grad_terms(terms, x, y, h)?, 2.0 * h),
    };
    let band = KINK_BAND.max(2.0 * reach);
    let kinked = matches!(spec.kind, LossKind::L2 | LossKind::L1 | LossKind::MsSsimL1);
    let mut out = CheckOutcome {
        name: spec.kind.to_string(),
        max_rel_err: 0.0,
        tolerance: tolerance_for(spec.kind),
        checked: 0,
        skipped: 0,
    };
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        if kinked && (x.data()[i] - y.data()[i]).abs() < band {
            out.skipped += 1;
        } else if a.abs() > GRAD_FLOOR {
            out.max_rel_err = out.max_rel_err.max(rel_err(a, n));
            out.checked += 1;
        }
    }
    Ok(out)
}

/// Random parameters with every layer active: weights uniform in
/// `±scale/√fan_in`, biases in `[0.05, 0.3)`, `b = 1`.
pub fn random_params(seed: u64, scale: f64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NetworkParams::zeros();
    for l in &mut p.layers {
        let fan_in = (l.in_channels * l.kernel_size * l.kernel_size) as f64;
        for w in &mut l.weights {
            *w = rng.random_range(-1.0..1.0) * scale / fan_in.sqrt();
        }
        for b in &mut l.biases {
            *b = rng.random_range(0.05..0.3);
        }
    }
    p
}

// Weights first, then biases.
fn param_mut(p: &mut NetworkParams, layer: usize, j: usize) -> &mut f64 {
    let l = &mut p.layers[layer];
    let nw = l.weights.len();
    if j < nw {
        &mut l.weights[j]
    } else {
        &mut l.biases[j - nw]
    }
}

// Activation pattern plus residual signs; a change means the step crossed a kink.
fn kink_pattern(cache: &ForwardCache, target: &Image, with_residual: bool) -> Vec<bool> {
    let mut v: Vec<bool> = cache
        .pre_activations()
        .iter()
        .flat_map(|z| z.data().iter().map(|&s| s > 0.0))
        .collect();
    if with_residual {
        v.extend(cache.output().data().iter().zip(target.data()).map(|(a, b)| a > b));
    }
    v
}

/// Checks `∂loss(J(params; hazy), clean)/∂params` for every weight and bias.
///
/// Steps that flip any ReLU mask (or, for sign-based losses, any residual
/// sign) are skipped and counted.
pub fn network_check(
    params: &NetworkParams,
    hazy: &Image,
    clean: &Image,
    spec: &LossSpec,
    h: f64,
) -> Result<CheckOutcome> {
    let cache = params.forward(hazy)?;
    let dj = evaluate(cache.output(), clean, spec)?.grad;
    let analytic: Vec<f64> = params.backward(&cache, &dj)?.values().copied().collect();
    let residual = spec.kind.is_l1_family();

    let eval = |p: &NetworkParams| -> Result<(Vec<f64>, Vec<bool>)> {
        let c = p.forward(hazy)?;
        let t = loss_terms(c.output(), clean, spec)?;
        Ok((t, kink_pattern(&c, clean, residual)))
    };

    let mut out = CheckOutcome {
        name: format!("network/{}", spec.kind),
        max_rel_err: 0.0,
        tolerance: 1e-4,
        checked: 0,
        skipped: 0,
    };
    let mut p = params.clone();
    let mut idx = 0;
    for l in 0..p.layers.len() {
        for j in 0..p.layers[l].num_params() {
            let orig = *param_mut(&mut p, l, j);
            *param_mut(&mut p, l, j) = orig + h;
            let up = *param_mut(&mut p, l, j);
            let (tp, mp) = eval(&p)?;
            *param_mut(&mut p, l, j) = orig - h;
            let down = *param_mut(&mut p, l, j);
            let (tm, mm) = eval(&p)?;
            *param_mut(&mut p, l, j) = orig;

            let a = analytic[idx];
            idx += 1;
            if mp != mm {
                out.skipped += 1;
                continue;
            }
            let n = compensated_sum(tp.iter().zip(&tm).map(|(u, v)| u - v)) / (up - down);
            if a.abs() > GRAD_FLOOR {
                out.max_rel_err = out.max_rel_err.max(rel_err(a, n));
                out.checked += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_shrinks_with_size() {
        assert_eq!(check_spec(LossKind::MsSsim, 9).unwrap().sigmas, vec![0.5, 1.0]);
        assert_eq!(check_spec(LossKind::MsSsim, 17).unwrap().sigmas, vec![0.5, 1.0, 2.0]);
        let s = check_spec(LossKind::Ssim, 33).unwrap();
        assert_eq!(s.sigmas, vec![0.5, 1.0, 2.0, 4.0]);
        assert_eq!(s.sigma_g, 5.0);
        assert_eq!(check_spec(LossKind::Ssim, 17).unwrap().sigma_g, 2.0);
        assert!(matches!(check_spec(LossKind::Ssim, 4), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn small_loss_check_passes() {
        for kind in LossKind::ALL {
            let spec = check_spec(kind, 17).unwrap();
            let (x, y) = random_pair(17, 17, 1, 3);
            let out = loss_check(&spec, &x, &y, step_for(kind)).unwrap();
            assert!(out.passed(), "{out}");
        }
    }

    #[test]
    fn network_check_l2() {
        let spec = check_spec(LossKind::L2, 9).unwrap();
        let p = random_params(1, 1.5);
        let (hazy, clean) = random_pair(9, 9, 3, 2);
        let good = network_check(&p, &hazy, &clean, &spec, 1e-4).unwrap();
        assert!(good.passed(), "{good}");
        assert!(good.checked > 1000);
    }

    #[test]
    fn merge_takes_worst() {
        let a = CheckOutcome { name: "a".into(), max_rel_err: 1e-6, tolerance: 1e-4, checked: 3, skipped: 1 };
        let b = CheckOutcome { max_rel_err: 2e-5, checked: 4, skipped: 0, ..a.clone() };
        let m = CheckOutcome::merge("ab", &[a, b]);
        assert_eq!((m.checked, m.skipped), (7, 1));
        assert_eq!(m.max_rel_err, 2e-5);
        assert!(m.passed());
    }
}
