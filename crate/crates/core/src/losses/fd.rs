use rayon::prelude::*;

use super::compensated_sum;
use crate::error::{Error, Result};
use crate::image::Image;

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("h", format!("step must be positive, got {h}")))
    }
}

/// Evaluates `diff(x + h·e_i, x − h·e_i)` for every sample `i`, dividing by the realized step.
fn central<D>(x: &Image, h: f64, diff: D) -> Result<Image>
where
    D: Fn(&Image, &Image) -> Result<f64> + Sync,
{
    let grad = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let step = xp.data()[i] - xm.data()[i];
            Ok(diff(&xp, &xm)? / step)
        })
        .collect::<Result<Vec<f64>>>()?;
    Image::from_vec(x.height(), x.width(), x.channels(), grad)
}

/// Central-difference gradient of `loss(x, y)` with respect to every sample of `x`.
pub fn finite_diff_grad<F>(loss: F, x: &Image, y: &Image, h: f64) -> Result<Image>
where
    F: Fn(&Image, &Image) -> Result<f64> + Sync,
{
    check_step(h)?;
    x.check_same_shape(y, "finite_diff_grad")?;
    central(x, h, |xp, xm| Ok(loss(xp, y)? - loss(xm, y)?))
}

/// Central differences of a loss given as a list of additive terms.
///
/// Terms are differenced one by one before summation, so contributions that
/// the perturbation does not touch cancel exactly instead of leaving roundoff
/// proportional to the total loss value.
pub fn finite_diff_grad_terms<F>(terms: F, x: &Image, y: &Image, h: f64) -> Result<Image>
where
    F: Fn(&Image, &Image) -> Result<Vec<f64>> + Sync,
{
    check_step(h)?;
    x.check_same_shape(y, "finite_diff_grad_terms")?;
    central(x, h, |xp, xm| term_difference(&terms, xp, xm, y))
}

fn term_difference<F>(terms: &F, xp: &Image, xm: &Image, y: &Image) -> Result<f64>
where
    F: Fn(&Image, &Image) -> Result<Vec<f64>>,
{
    let tp = terms(xp, y)?;
    let tm = terms(xm, y)?;
    if tp.len() != tm.len() {
        return Err(Error::Dimension("term count changed under perturbation".into()));
    }
    Ok(compensated_sum(tp.iter().zip(&tm).map(|(a, b)| a - b)))
}

/// Richardson-extrapolated term-wise differences, `(4·D(h) − D(2h)) / 3`.
///
/// The `h²` error term of the central difference cancels, leaving `O(h⁴)`,
/// so a step large enough to bury roundoff stays accurate.
pub fn richardson_grad_terms<F>(terms: F, x: &Image, y: &Image, h: f64) -> Result<Image>
where
    F: Fn(&Image, &Image) -> Result<Vec<f64>> + Sync,
{
    let near = finite_diff_grad_terms(&terms, x, y, h)?;
    let far = finite_diff_grad_terms(&terms, x, y, 2.0 * h)?;
    let data = near
        .data()
        .iter()
        .zip(far.data())
        .map(|(n, f)| (4.0 * n - f) / 3.0)
        .collect();
    Image::from_vec(x.height(), x.width(), x.channels(), data)
}
