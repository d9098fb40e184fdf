//! Atmospheric scattering model: `I = J·t + A·(1 − t)` with `t = exp(−β·d)`,
//! and its K-reparameterization `J = K·I − K + b`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{gaussian_filter, GaussianKernel, Image, Plane};

pub const DEFAULT_D_MAX: f64 = 5.0;
/// Guard on the `I − 1` denominator of the K map.
pub const K_DENOMINATOR_EPS: f64 = 1e-6;

/// Non-negative scene distance per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap(Plane);

impl DepthMap {
    pub fn new(d: Plane) -> Result<Self> {
        if let Some(v) = d.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid("depth", format!("values must be finite and >= 0, got {v}")));
        }
        Ok(DepthMap(d))
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazeParams {
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

impl HazeParams {
    pub fn new(beta: f64, a: f64) -> Result<Self> {
        let p = HazeParams { beta, a, b: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        check_airlight(self.a)
    }
}

fn check_airlight(a: f64) -> Result<()> {
    if a > 0.0 && a <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("A", format!("must lie in (0, 1], got {a}")))
    }
}

/// Per-pixel transmission in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap(Plane);

impl TransmissionMap {
    pub fn new(t: Plane) -> Result<Self> {
        if let Some(v) = t.as_slice().iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::invalid("t", format!("values must lie in (0, 1], got {v}")));
        }
        Ok(TransmissionMap(t))
    }

    /// Uniform transmission; `t = 1` is haze free.
    pub fn uniform(height: usize, width: usize, t: f64) -> Result<Self> {
        Self::new(Plane::filled(height, width, t))
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }
}

/// The K(x) map, one value per pixel per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KMap(Image);

impl KMap {
    pub fn new(k: Image) -> Self {
        KMap(k)
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }
}

pub fn transmission(depth: &DepthMap, beta: f64) -> Result<TransmissionMap> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", format!("must be >= 0, got {beta}")));
    }
    // exp(-beta*d) underflows to 0 only for absurd depths; keep it strictly positive
    let t = depth
        .plane()
        .map(|d| (-beta * d).exp().max(f64::MIN_POSITIVE));
    Ok(TransmissionMap(t))
}

fn check_plane_matches(img: &Image, plane: &Plane, what: &str) -> Result<()> {
    if img.height() == plane.height() && img.width() == plane.width() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what}: image {}x{} vs map {}x{}",
            img.height(),
            img.width(),
            plane.height(),
            plane.width()
        )))
    }
}

/// `I(x) = J(x)·t(x) + A·(1 − t(x))` for every channel.
pub fn synthesize_haze(clean: &Image, t: &TransmissionMap, a: f64) -> Result<Image> {
    check_plane_matches(clean, t.plane(), "synthesize_haze")?;
    check_airlight(a)?;
    let tp = t.plane().as_slice();
    let mut out = clean.clone();
    for c in 0..out.channels() {
        for (v, &tv) in out.channel_mut(c).iter_mut().zip(tp) {
            *v = *v * tv + a * (1.0 - tv);
        }
    }
    Ok(out)
}

/// `K = ((I − A)/t + (A − b)) / (I − 1)` with the denominator kept at least
/// [`K_DENOMINATOR_EPS`] away from zero.
pub fn analytic_k(hazy: &Image, t: &TransmissionMap, a: f64, b: f64) -> Result<KMap> {
    check_plane_matches(hazy, t.plane(), "analytic_k")?;
    check_airlight(a)?;
    let tp = t.plane().as_slice();
    let mut k = hazy.clone();
    for c in 0..k.channels() {
        for (v, &tv) in k.channel_mut(c).iter_mut().zip(tp) {
            let i = *v;
            let mut den = i - 1.0;
            if den.abs() < K_DENOMINATOR_EPS {
                den = if den > 0.0 {
                    K_DENOMINATOR_EPS
                } else {
                    -K_DENOMINATOR_EPS
                };
            }
            *v = ((i - a) / tv + (a - b)) / den;
        }
    }
    Ok(KMap(k))
}

/// `J = K·I − K + b`, unclamped.
pub fn reconstruct(k: &KMap, hazy: &Image, b: f64) -> Result<Image> {
    k.image().check_same_shape(hazy, "reconstruct")?;
    let data = k
        .image()
        .data()
        .iter()
        .zip(hazy.data())
        .map(|(&kv, &iv)| kv * iv - kv + b)
        .collect();
    Image::from_vec(hazy.height(), hazy.width(), hazy.channels(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DepthKind {
    Ramp,
    Radial,
    SmoothNoise,
}

impl DepthKind {
    pub const ALL: [DepthKind; 3] = [DepthKind::Ramp, DepthKind::Radial, DepthKind::SmoothNoise];

    pub fn as_str(self) -> &'static str {
        match self {
            DepthKind::Ramp => "ramp",
            DepthKind::Radial => "radial",
            DepthKind::SmoothNoise => "smooth_noise",
        }
    }
}

impl fmt::Display for DepthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for DepthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DepthKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "depth_kind",
                    format!("unknown `{s}`, expected ramp, radial or smooth_noise"),
                )
            })
    }
}

/// Synthetic depth with values in `[0, DEFAULT_D_MAX]`.
pub fn make_depth(kind: DepthKind, height: usize, width: usize, seed: u64) -> Result<DepthMap> {
    make_depth_with_max(kind, height, width, seed, DEFAULT_D_MAX)
}

pub fn make_depth_with_max(
    kind: DepthKind,
    height: usize,
    width: usize,
    seed: u64,
    d_max: f64,
) -> Result<DepthMap> {
    if height == 0 || width == 0 {
        return Err(Error::Dimension("depth map needs positive dimensions".into()));
    }
    if !(d_max >= 0.0 && d_max.is_finite()) {
        return Err(Error::invalid("d_max", format!("must be >= 0, got {d_max}")));
    }
    let plane = match kind {
        DepthKind::Ramp => {
            let span = (width.max(2) - 1) as f64;
            Plane::from_fn(height, width, |_, x| d_max * x as f64 / span)
        }
        DepthKind::Radial => {
            let (cy, cx) = ((height - 1) as f64 / 2.0, (width - 1) as f64 / 2.0);
            let far = (cy * cy + cx * cx).sqrt();
            Plane::from_fn(height, width, |y, x| {
                if far == 0.0 {
                    0.0
                } else {
                    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                    d_max * (dy * dy + dx * dx).sqrt() / far
                }
            })
        }
        DepthKind::SmoothNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Plane::from_fn(height, width, |_, _| StandardNormal.sample(&mut rng));
            let sigma = (height.max(width) as f64 / 8.0).max(1.0);
            let smooth = gaussian_filter(&noise, &GaussianKernel::new(sigma)?);
            rescale(&smooth, d_max)
        }
    };
    DepthMap::new(plane)
}

fn rescale(p: &Plane, d_max: f64) -> Plane {
    let lo = p.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Plane::new(p.height(), p.width());
    }
    p.map(|v| ((v - lo) / (hi - lo) * d_max).clamp(0.0, d_max))
}
