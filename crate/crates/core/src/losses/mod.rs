//! Training losses and their analytic gradients with respect to the prediction.
//!
//! Every loss returns a [`LossResult`] holding the scalar value and
//! `∂loss/∂x` for each sample of the predicted image `x`. Windowed losses
//! (the SSIM family and the Gaussian-weighted pixel terms) are averaged over
//! the *valid region*: centers at least `ceil(3σ)` from every border, where
//! `σ` is the largest filter the loss uses. Color images are handled one
//! channel at a time and averaged, unless [`ColorMode::Luminance`] is set.

mod fd;
mod pixel;
mod ssim;

pub use fd::{finite_diff_grad, finite_diff_grad_terms, richardson_grad_terms};
pub use pixel::{l1_loss, l2_loss};
pub use ssim::{
    gaussian_weighted_pixel_loss, mix_msssim_l1, mix_msssim_l2, msssim_loss, ssim_loss, ssim_map,
    PixelPenalty, SsimMaps,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{gaussian_filter, GaussianKernel, Image, Plane};

pub const DEFAULT_SIGMA_G: f64 = 5.0;
pub const DEFAULT_SIGMAS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_C1: f64 = 0.01;
pub const DEFAULT_C2: f64 = 0.03;
pub const DEFAULT_ALPHA_MSSSIM_L2: f64 = 0.1;
pub const DEFAULT_ALPHA_MSSSIM_L1: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    L2,
    L1,
    Ssim,
    MsSsim,
    MsSsimL2,
    MsSsimL1,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::L2,
        LossKind::L1,
        LossKind::Ssim,
        LossKind::MsSsim,
        LossKind::MsSsimL2,
        LossKind::MsSsimL1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::L2 => "L2",
            LossKind::L1 => "L1",
            LossKind::Ssim => "SSIM",
            LossKind::MsSsim => "MSSSIM",
            LossKind::MsSsimL2 => "MSSSIM_L2",
            LossKind::MsSsimL1 => "MSSSIM_L1",
        }
    }

    pub fn is_mix(self) -> bool {
        matches!(self, LossKind::MsSsimL2 | LossKind::MsSsimL1)
    }

    /// True for losses whose gradient is a sign function of the residual.
    pub fn is_l1_family(self) -> bool {
        matches!(self, LossKind::L1 | LossKind::MsSsimL1)
    }

    pub fn valid_names() -> String {
        LossKind::ALL.map(|k| k.as_str()).join(", ")
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', '+'], "_");
        let norm = norm.replace("MS_SSIM", "MSSSIM");
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| {
                Error::invalid(
                    "loss",
                    format!("unknown loss `{s}`; valid kinds: {}", LossKind::valid_names()),
                )
            })
    }
}

/// Whether windowed statistics run on each RGB channel or on luma only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorMode {
    #[default]
    PerChannel,
    /// `Y = 0.299 R + 0.587 G + 0.114 B`; gradients flow back through the weights.
    Luminance,
}

pub(crate) const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Filter width of the single-scale SSIM loss.
    pub sigma_g: f64,
    /// Scale ladder of MS-SSIM, each entry twice the previous.
    pub sigmas: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Mix weight; `None` picks the per-kind default.
    pub alpha: Option<f64>,
    /// Drop the 2/N and 1/N factors from the ℓ2/ℓ1 gradients.
    pub paper_grad_scaling: bool,
    pub color: ColorMode,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec {
            kind,
            sigma_g: DEFAULT_SIGMA_G,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            alpha: None,
            paper_grad_scaling: false,
            color: ColorMode::PerChannel,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_sigmas(mut self, sigmas: &[f64]) -> Self {
        self.sigmas = sigmas.to_vec();
        self
    }

    pub fn with_sigma_g(mut self, sigma: f64) -> Self {
        self.sigma_g = sigma;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(match self.kind {
            LossKind::MsSsimL1 => DEFAULT_ALPHA_MSSSIM_L1,
            _ => DEFAULT_ALPHA_MSSSIM_L2,
        })
    }

    /// Largest filter width the loss uses; sets the valid-region margin.
    pub fn max_sigma(&self) -> f64 {
        match self.kind {
            LossKind::L2 | LossKind::L1 => 0.0,
            LossKind::Ssim => self.sigma_g,
            _ => self.sigmas.last().copied().unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_g > 0.0 && self.sigma_g.is_finite()) {
            return Err(Error::invalid("sigma_g", format!("must be positive, got {}", self.sigma_g)));
        }
        if self.sigmas.is_empty() {
            return Err(Error::invalid("sigmas", "needs at least one scale"));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigmas", "every scale must be positive"));
        }
        for w in self.sigmas.windows(2) {
            if (w[1] - 2.0 * w[0]).abs() > 1e-12 * w[1] {
                return Err(Error::invalid(
                    "sigmas",
                    format!("must double at each step, got {} then {}", w[0], w[1]),
                ));
            }
        }
        if !(self.c1 > 0.0) {
            return Err(Error::invalid("c1", format!("must be positive, got {}", self.c1)));
        }
        if !(self.c2 > 0.0) {
            return Err(Error::invalid("c2", format!("must be positive, got {}", self.c2)));
        }
        let a = self.alpha();
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {a}")));
        }
        Ok(())
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::new(LossKind::L2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `∂loss/∂x`, shaped like the prediction.
    pub grad: Image,
}

/// Evaluates whichever loss `spec.kind` names.
pub fn evaluate(x: &Image, y: &Image, spec: &LossSpec) -> Result<LossResult> {
    spec.validate()?;
    match spec.kind {
        LossKind::L2 => l2_loss(x, y, spec),
        LossKind::L1 => l1_loss(x, y, spec),
        LossKind::Ssim => ssim_loss(x, y, spec),
        LossKind::MsSsim => msssim_loss(x, y, spec),
        LossKind::MsSsimL2 => mix_msssim_l2(x, y, spec),
        LossKind::MsSsimL1 => mix_msssim_l1(x, y, spec),
    }
}

/// Value only; same arithmetic as [`evaluate`].
pub fn value(x: &Image, y: &Image, spec: &LossSpec) -> Result<f64> {
    Ok(evaluate(x, y, spec)?.value)
}

/// Additive contributions whose sum is the loss value: one per sample for
/// ℓ2/ℓ1, one per valid center and channel for the windowed losses.
///
/// Built from [`ssim_map`] and plain filtering rather than the gradient path,
/// so it doubles as an independent value oracle.
pub fn loss_terms(x: &Image, y: &Image, spec: &LossSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    x.check_same_shape(y, "loss_terms")?;
    let n = x.len() as f64;
    let pairs = x.data().iter().zip(y.data());
    match spec.kind {
        LossKind::L2 => return Ok(pairs.map(|(a, b)| (a - b) * (a - b) / n).collect()),
        LossKind::L1 => return Ok(pairs.map(|(a, b)| (a - b).abs() / n).collect()),
        _ => {}
    }
    let planes: Vec<(Plane, Plane, f64)> = if spec.color == ColorMode::Luminance && x.channels() == 3 {
        vec![(luma(x), luma(y), 1.0)]
    } else {
        let w = 1.0 / x.channels() as f64;
        (0..x.channels()).map(|c| (x.plane(c), y.plane(c), w)).collect()
    };
    let mut out = Vec::new();
    for (a, b, w) in &planes {
        match spec.kind {
            LossKind::Ssim => out.extend(ms_terms(a, b, &[spec.sigma_g], spec)?.into_iter().map(|t| w * t)),
            LossKind::MsSsim => out.extend(ms_terms(a, b, &spec.sigmas, spec)?.into_iter().map(|t| w * t)),
            LossKind::MsSsimL2 | LossKind::MsSsimL1 => {
                let alpha = spec.alpha();
                let square = spec.kind == LossKind::MsSsimL2;
                let sigma_m = spec.max_sigma();
                out.extend(ms_terms(a, b, &spec.sigmas, spec)?.into_iter().map(|t| w * alpha * t));
                out.extend(pixel_terms(a, b, sigma_m, square)?.into_iter().map(|t| w * (1.0 - alpha) * t));
            }
            LossKind::L2 | LossKind::L1 => unreachable!(),
        }
    }
    Ok(out)
}

fn valid_centers(h: usize, w: usize, margin: usize) -> Result<Vec<usize>> {
    if h < 2 * margin + 1 || w < 2 * margin + 1 {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            needed: 2 * margin + 1,
        });
    }
    Ok((margin..h - margin)
        .flat_map(|r| (margin..w - margin).map(move |c| r * w + c))
        .collect())
}

fn ms_terms(a: &Plane, b: &Plane, sigmas: &[f64], spec: &LossSpec) -> Result<Vec<f64>> {
    let margin = GaussianKernel::new(*sigmas.last().expect("non-empty"))?.radius();
    let centers = valid_centers(a.height(), a.width(), margin)?;
    let maps = sigmas
        .iter()
        .map(|&s| ssim_map(a, b, s, spec.c1, spec.c2))
        .collect::<Result<Vec<_>>>()?;
    let nv = centers.len() as f64;
    let lm = &maps.last().expect("non-empty").l;
    Ok(centers
        .into_iter()
        .map(|i| {
            let prod: f64 = maps.iter().map(|m| m.cs.as_slice()[i]).product();
            (1.0 - lm.as_slice()[i] * prod) / nv
        })
        .collect())
}

fn pixel_terms(a: &Plane, b: &Plane, sigma: f64, square: bool) -> Result<Vec<f64>> {
    let kernel = GaussianKernel::new(sigma)?;
    let centers = valid_centers(a.height(), a.width(), kernel.radius())?;
    let pen = a.zip_map(b, |u, v| if square { (u - v) * (u - v) } else { (u - v).abs() });
    let windowed = gaussian_filter(&pen, &kernel);
    let nv = centers.len() as f64;
    Ok(centers.into_iter().map(|i| windowed.as_slice()[i] / nv).collect())
}

/// Applies a single-plane loss per channel (or to luma) and averages.
pub(crate) fn per_channel(
    x: &Image,
    y: &Image,
    color: ColorMode,
    plane_loss: impl Fn(&Plane, &Plane) -> Result<(f64, Plane)>,
) -> Result<LossResult> {
    x.check_same_shape(y, "loss inputs")?;
    if color == ColorMode::Luminance && x.channels() == 3 {
        let lx = luma(x);
        let ly = luma(y);
        let (value, g) = plane_loss(&lx, &ly)?;
        let mut grad = Image::new(x.height(), x.width(), 3);
        for (c, w) in LUMA_WEIGHTS.iter().enumerate() {
            for (d, &s) in grad.channel_mut(c).iter_mut().zip(g.as_slice()) {
                *d = w * s;
            }
        }
        return Ok(LossResult { value, grad });
    }
    let n = x.channels() as f64;
    let mut total = 0.0;
    let mut grad = Image::new(x.height(), x.width(), x.channels());
    for c in 0..x.channels() {
        let (v, g) = plane_loss(&x.plane(c), &y.plane(c))?;
        total += v;
        for (d, &s) in grad.channel_mut(c).iter_mut().zip(g.as_slice()) {
            *d = s / n;
        }
    }
    Ok(LossResult {
        value: total / n,
        grad,
    })
}

fn luma(img: &Image) -> Plane {
    let mut data = vec![0.0; img.plane_len()];
    for (c, w) in LUMA_WEIGHTS.iter().enumerate() {
        for (d, &s) in data.iter_mut().zip(img.channel(c)) {
            *d += w * s;
        }
    }
    Plane::from_vec(img.height(), img.width(), data).expect("plane size")
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
