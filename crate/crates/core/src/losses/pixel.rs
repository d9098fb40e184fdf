use super::{compensated_sum, LossResult, LossSpec};
use crate::error::Result;
use crate::image::Image;

/// Mean squared error, `grad = 2(x − y)/N`.
pub fn l2_loss(x: &Image, y: &Image, spec: &LossSpec) -> Result<LossResult> {
    x.check_same_shape(y, "l2_loss")?;
    let n = x.len() as f64;
    let value = compensated_sum(x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b))) / n;
    let scale = if spec.paper_grad_scaling { 1.0 } else { 2.0 / n };
    let grad = Image::from_vec(
        x.height(),
        x.width(),
        x.channels(),
        x.data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| scale * (a - b))
            .collect(),
    )?;
    Ok(LossResult { value, grad })
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error, `grad = sign(x − y)/N` with `sign(0) = 0`.
pub fn l1_loss(x: &Image, y: &Image, spec: &LossSpec) -> Result<LossResult> {
    x.check_same_shape(y, "l1_loss")?;
    let n = x.len() as f64;
    let value = compensated_sum(x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs())) / n;
    let scale = if spec.paper_grad_scaling { 1.0 } else { 1.0 / n };
    let grad = Image::from_vec(
        x.height(),
        x.width(),
        x.channels(),
        x.data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| scale * sign(a - b))
            .collect(),
    )?;
    Ok(LossResult { value, grad })
}
