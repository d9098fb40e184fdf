//! SSIM, multi-scale SSIM and Gaussian-weighted pixel penalties.
//!
//! Multi-scale SSIM runs every scale on the full-resolution image with its
//! own Gaussian width: `MS(p) = l_M(p) · Π_j cs_j(p)`, where `l_M` comes from
//! the widest filter.
//!
//! Gradients are assembled by scattering each valid center's derivative
//! back through its Gaussian window. For one scale with per-center weights
//! `w_l` (on `∂l`) and `w_cs` (on `∂cs`):
//!
//! ```text
//! ∂/∂x(q) = Σ_p G(q−p) [ w_l(p)·2(μy − μx·l)/(μx²+μy²+C1)
//!                      + w_cs(p)·2/(σx²+σy²+C2)·((y(q) − μy) − cs·(x(q) − μx)) ]
//! ```
//!
//! which splits into three zero-padded Gaussian filterings of per-center maps.

use super::pixel::sign;
use super::{compensated_sum, per_channel, LossResult, LossSpec};
use crate::error::{Error, Result};
use crate::image::{gaussian_filter, gaussian_filter_with, local_stats, Border, GaussianKernel, Image, LocalStats, Plane};

/// Per-pixel SSIM and its luminance and contrast-structure factors.
#[derive(Debug, Clone)]
pub struct SsimMaps {
    pub ssim: Plane,
    pub l: Plane,
    pub cs: Plane,
}

struct ScaleTerms {
    kernel: GaussianKernel,
    stats: LocalStats,
    l: Plane,
    cs: Plane,
    c1: f64,
    c2: f64,
}

fn check_fits(h: usize, w: usize, radius: usize) -> Result<()> {
    let needed = 2 * radius + 1;
    if h < needed || w < needed {
        Err(Error::TooSmall {
            height: h,
            width: w,
            needed,
        })
    } else {
        Ok(())
    }
}

fn scale_terms(x: &Plane, y: &Plane, sigma: f64, c1: f64, c2: f64) -> Result<ScaleTerms> {
    let kernel = GaussianKernel::new(sigma)?;
    check_fits(x.height(), x.width(), kernel.radius())?;
    let stats = local_stats(x, y, &kernel)?;
    let n = x.len();
    let mut l = vec![0.0; n];
    let mut cs = vec![0.0; n];
    let (mx, my) = (stats.mu_x.as_slice(), stats.mu_y.as_slice());
    let (vx, vy, cxy) = (
        stats.var_x.as_slice(),
        stats.var_y.as_slice(),
        stats.cov_xy.as_slice(),
    );
    for i in 0..n {
        l[i] = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
        cs[i] = (2.0 * cxy[i] + c2) / (vx[i] + vy[i] + c2);
    }
    let (h, w) = (x.height(), x.width());
    Ok(ScaleTerms {
        kernel,
        stats,
        l: Plane::from_vec(h, w, l)?,
        cs: Plane::from_vec(h, w, cs)?,
        c1,
        c2,
    })
}

/// Full-size SSIM maps using reflected borders.
pub fn ssim_map(x: &Plane, y: &Plane, sigma: f64, c1: f64, c2: f64) -> Result<SsimMaps> {
    if !x.same_shape(y) {
        return Err(Error::Dimension("ssim_map inputs differ in size".into()));
    }
    let t = scale_terms(x, y, sigma, c1, c2)?;
    let ssim = t.l.zip_map(&t.cs, |a, b| a * b);
    Ok(SsimMaps {
        ssim,
        l: t.l,
        cs: t.cs,
    })
}

/// Row-major indices of centers at least `margin` from every border.
fn valid_indices(h: usize, w: usize, margin: usize) -> impl Iterator<Item = usize> {
    (margin..h - margin).flat_map(move |y| (margin..w - margin).map(move |x| y * w + x))
}

fn valid_count(h: usize, w: usize, margin: usize) -> f64 {
    ((h - 2 * margin) * (w - 2 * margin)) as f64
}

/// Adds one scale's contribution to `grad`. `w_l`/`w_cs` must vanish outside the valid region.
fn scatter(
    t: &ScaleTerms,
    x: &Plane,
    y: &Plane,
    w_l: Option<&Plane>,
    w_cs: &Plane,
    grad: &mut Plane,
) {
    let n = x.len();
    let (h, w) = (x.height(), x.width());
    let s = &t.stats;
    let (mx, my) = (s.mu_x.as_slice(), s.mu_y.as_slice());
    let (vx, vy) = (s.var_x.as_slice(), s.var_y.as_slice());
    let (l, cs) = (t.l.as_slice(), t.cs.as_slice());
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    for i in 0..n {
        let wc = w_cs.as_slice()[i];
        let mut ai = 0.0;
        if wc != 0.0 {
            let k = 2.0 / (vx[i] + vy[i] + t.c2);
            ai += wc * k * (cs[i] * mx[i] - my[i]);
            b[i] = wc * k;
            c[i] = -wc * k * cs[i];
        }
        if let Some(wl) = w_l {
            let wl = wl.as_slice()[i];
            if wl != 0.0 {
                let den = mx[i] * mx[i] + my[i] * my[i] + t.c1;
                ai += wl * 2.0 * (my[i] - mx[i] * l[i]) / den;
            }
        }
        a[i] = ai;
    }
    let filt = |v: Vec<f64>| {
        gaussian_filter_with(&Plane::from_vec(h, w, v).expect("size"), &t.kernel, Border::Zero)
    };
    let (fa, fb, fc) = (filt(a), filt(b), filt(c));
    let (fa, fb, fc) = (fa.as_slice(), fb.as_slice(), fc.as_slice());
    for (i, g) in grad.as_mut_slice().iter_mut().enumerate() {
        *g += fa[i] + y.as_slice()[i] * fb[i] + x.as_slice()[i] * fc[i];
    }
}

/// `mean_valid(1 − l_M · Π cs_j)` and its gradient for one plane.
fn multiscale_plane(x: &Plane, y: &Plane, sigmas: &[f64], c1: f64, c2: f64) -> Result<(f64, Plane)> {
    let widest = sigmas.iter().copied().fold(0.0, f64::max);
    check_fits(x.height(), x.width(), GaussianKernel::new(widest)?.radius())?;
    let terms = sigmas
        .iter()
        .map(|&s| scale_terms(x, y, s, c1, c2))
        .collect::<Result<Vec<_>>>()?;
    let coarsest = terms.last().expect("at least one scale");
    let (h, w) = (x.height(), x.width());
    let margin = coarsest.kernel.radius();
    let nv = valid_count(h, w, margin);
    let m = terms.len();

    let mut w_l = Plane::new(h, w);
    let mut w_cs: Vec<Plane> = (0..m).map(|_| Plane::new(h, w)).collect();
    let mut prefix = vec![1.0; m + 1];
    let mut suffix = vec![1.0; m + 1];
    let mut losses = Vec::with_capacity((nv as usize).max(1));
    for i in valid_indices(h, w, margin) {
        for j in 0..m {
            prefix[j + 1] = prefix[j] * terms[j].cs.as_slice()[i];
        }
        for j in (0..m).rev() {
            suffix[j] = suffix[j + 1] * terms[j].cs.as_slice()[i];
        }
        let lm = coarsest.l.as_slice()[i];
        let prod = prefix[m];
        losses.push(1.0 - lm * prod);
        w_l.as_mut_slice()[i] = -prod / nv;
        for (j, wc) in w_cs.iter_mut().enumerate() {
            wc.as_mut_slice()[i] = -(lm * (prefix[j] * suffix[j + 1])) / nv;
        }
    }
    let value = compensated_sum(losses) / nv;

    let mut grad = Plane::new(h, w);
    for (j, t) in terms.iter().enumerate() {
        let wl = (j == m - 1).then_some(&w_l);
        scatter(t, x, y, wl, &w_cs[j], &mut grad);
    }
    Ok((value, grad))
}

/// Single-scale SSIM loss with `spec.sigma_g`.
pub fn ssim_loss(x: &Image, y: &Image, spec: &LossSpec) -> Result<LossResult> {
    let sigmas = [spec.sigma_g];
    per_channel(x, y, spec.color, |a, b| {
        multiscale_plane(a, b, &sigmas, spec.c1, spec.c2)
    })
}

/// Multi-scale SSIM loss over `spec.sigmas`.
pub fn msssim_loss(x: &Image, y: &Image, spec: &LossSpec) -> Result<LossResult> {
    if spec.sigmas.is_empty() {
        return Err(Error::invalid("sigmas", "needs at least one scale"));
    }
    per_channel(x, y, spec.color, |a, b| {
        multiscale_plane(a, b, &spec.sigmas, spec.c1, spec.c2)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelPenalty {
    Squared,
    Absolute,
}

/// Mean over valid centers of the Gaussian-weighted window average of the
/// pixel penalty, with the valid margin set by `sigma`.
pub fn gaussian_weighted_pixel_loss(
    x: &Image,
    y: &Image,
    sigma: f64,
    penalty: PixelPenalty,
    spec: &LossSpec,
) -> Result<LossResult> {
    let kernel = GaussianKernel::new(sigma)?;
    per_channel(x, y, spec.color, |a, b| {
        let (h, w) = (a.height(), a.width());
        let margin = kernel.radius();
        check_fits(h, w, margin)?;
        let nv = valid_count(h, w, margin);
        let e = a.zip_map(b, |u, v| u - v);
        let pen = match penalty {
            PixelPenalty::Squared => e.map(|v| v * v),
            PixelPenalty::Absolute => e.map(f64::abs),
        };
        let windowed = gaussian_filter(&pen, &kernel);
        let value = compensated_sum(valid_indices(h, w, margin).map(|i| windowed.as_slice()[i])) / nv;
        let mut mask = Plane::new(h, w);
        for i in valid_indices(h, w, margin) {
            mask.as_mut_slice()[i] = 1.0 / nv;
        }
        let reach = gaussian_filter_with(&mask, &kernel, Border::Zero);
        let grad = e.zip_map(&reach, |ev, r| {
            r * match penalty {
                PixelPenalty::Squared => 2.0 * ev,
                PixelPenalty::Absolute => sign(ev),
            }
        });
        Ok((value, grad))
    })
}

fn mix(x: &Image, y: &Image, spec: &LossSpec, penalty: PixelPenalty) -> Result<LossResult> {
    let alpha = spec.alpha();
    let ms = msssim_loss(x, y, spec)?;
    let sigma_m = *spec.sigmas.last().expect("validated non-empty");
    let pix = gaussian_weighted_pixel_loss(x, y, sigma_m, penalty, spec)?;
    let value = alpha * ms.value + (1.0 - alpha) * pix.value;
    let mut grad = ms.grad;
    for (g, p) in grad.data_mut().iter_mut().zip(pix.grad.data()) {
        *g = alpha * *g + (1.0 - alpha) * p;
    }
    Ok(LossResult { value, grad })
}

/// `α·MS-SSIM + (1 − α)·(Gaussian-weighted squared error)`.
pub fn mix_msssim_l2(x: &Image, y: &Image, spec: &LossSpec) -> Result<LossResult> {
    mix(x, y, spec, PixelPenalty::Squared)
}

/// `α·MS-SSIM + (1 − α)·(Gaussian-weighted absolute error)`.
pub fn mix_msssim_l1(x: &Image, y: &Image, spec: &LossSpec) -> Result<LossResult> {
    mix(x, y, spec, PixelPenalty::Absolute)
}
