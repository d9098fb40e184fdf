use super::Plane;
use crate::error::{Error, Result};

/// Default truncation of the kernel support, in standard deviations.
pub const DEFAULT_TRUNCATE: f64 = 3.0;

/// Normalized, symmetric 1-D sampled Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    taps: Vec<f64>,
}

impl GaussianKernel {
    /// Kernel with radius `ceil(3 * sigma)`.
    pub fn new(sigma: f64) -> Result<Self> {
        Self::with_truncation(sigma, DEFAULT_TRUNCATE)
    }

    /// Kernel with radius `ceil(truncate * sigma)`.
    pub fn with_truncation(sigma: f64, truncate: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        if !(truncate > 0.0 && truncate.is_finite()) {
            return Err(Error::invalid(
                "truncate",
                format!("must be positive, got {truncate}"),
            ));
        }
        let radius = Self::radius_with(sigma, truncate);
        let denom = 2.0 * sigma * sigma;
        let mut taps: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / denom).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= sum;
        }
        // mirror so the symmetry is exact, not just up to rounding
        for i in 0..radius {
            taps[2 * radius - i] = taps[i];
        }
        Ok(GaussianKernel {
            sigma,
            radius,
            taps,
        })
    }

    /// Radius [`GaussianKernel::new`] would give for `sigma`.
    pub fn radius_for(sigma: f64) -> usize {
        Self::radius_with(sigma, DEFAULT_TRUNCATE)
    }

    fn radius_with(sigma: f64, truncate: f64) -> usize {
        ((truncate * sigma).ceil() as usize).max(1)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Support width, `2 * radius + 1`.
    pub fn width(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Weight at signed offset `d` from the center; zero outside the support.
    #[inline]
    pub fn weight(&self, d: isize) -> f64 {
        let i = d + self.radius as isize;
        if i < 0 || i as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[i as usize]
        }
    }
}

/// How samples outside the plane are synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Border {
    /// Half-sample symmetric reflection: `... c b a | a b c ... x y z | z y x ...`.
    #[default]
    Reflect,
    /// Outside samples are zero.
    Zero,
}

#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with symmetric-reflection borders.
pub fn gaussian_filter(plane: &Plane, kernel: &GaussianKernel) -> Plane {
    gaussian_filter_with(plane, kernel, Border::Reflect)
}

/// Separable Gaussian blur: horizontal pass then vertical pass.
pub fn gaussian_filter_with(plane: &Plane, kernel: &GaussianKernel, border: Border) -> Plane {
    let (h, w) = (plane.height(), plane.width());
    assert!(h > 0 && w > 0, "gaussian_filter on an empty plane");
    let r = kernel.radius() as isize;
    let taps = kernel.taps();
    let src = plane.as_slice();

    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            let lo = x as isize - r;
            if lo >= 0 && x as isize + r < w as isize {
                for (&t, &v) in taps.iter().zip(&row[lo as usize..]) {
                    acc += t * v;
                }
                *o = acc;
                continue;
            }
            for (k, &t) in taps.iter().enumerate() {
                let xi = x as isize + k as isize - r;
                let v = if xi >= 0 && (xi as usize) < w {
                    row[xi as usize]
                } else {
                    match border {
                        Border::Reflect => row[reflect_index(xi, w)],
                        Border::Zero => continue,
                    }
                };
                acc += t * v;
            }
            *o = acc;
        }
    }

    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &t) in taps.iter().enumerate() {
            let yi = y as isize + k as isize - r;
            let src_row = if yi >= 0 && (yi as usize) < h {
                yi as usize
            } else {
                match border {
                    Border::Reflect => reflect_index(yi, h),
                    Border::Zero => continue,
                }
            };
            let row = &tmp[src_row * w..(src_row + 1) * w];
            for (d, &v) in dst.iter_mut().zip(row) {
                *d += t * v;
            }
        }
    }
    Plane::from_vec(h, w, out).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(h: usize, w: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    // Direct 2-D convolution with the outer-product kernel.
    fn brute_force(plane: &Plane, k: &GaussianKernel, border: Border) -> Plane {
        let (h, w) = (plane.height() as isize, plane.width() as isize);
        let r = k.radius() as isize;
        Plane::from_fn(plane.height(), plane.width(), |y, x| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    let inside = yy >= 0 && yy < h && xx >= 0 && xx < w;
                    let v = match (inside, border) {
                        (true, _) => plane.get(yy as usize, xx as usize),
                        (false, Border::Zero) => 0.0,
                        (false, Border::Reflect) => plane.get(
                            reflect_index(yy, plane.height()),
                            reflect_index(xx, plane.width()),
                        ),
                    };
                    acc += k.weight(dy) * k.weight(dx) * v;
                }
            }
            acc
        })
    }

    #[test]
    fn kernel_lengths() {
        assert_eq!(GaussianKernel::new(0.5).unwrap().width(), 5);
        let k5 = GaussianKernel::new(5.0).unwrap();
        assert_eq!(k5.radius(), 15);
        assert_eq!(k5.width(), 31);
        assert_eq!(GaussianKernel::new(1.5).unwrap().radius(), 5);
        assert_eq!(GaussianKernel::new(8.0).unwrap().radius(), 24);
    }

    #[test]
    fn kernel_normalized_symmetric_unimodal() {
        for sigma in [0.5, 1.0, 1.5, 2.0, 4.0, 5.0, 8.0] {
            let k = GaussianKernel::new(sigma).unwrap();
            let sum: f64 = k.taps().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sigma {sigma}: sum {sum}");
            let r = k.radius();
            for i in 0..k.width() {
                assert_eq!(k.taps()[i], k.taps()[2 * r - i]);
                assert!(k.taps()[i] <= k.taps()[r]);
            }
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(GaussianKernel::new(0.0).is_err());
        assert!(GaussianKernel::new(-1.0).is_err());
        assert!(GaussianKernel::new(f64::NAN).is_err());
    }

    #[test]
    fn reflect_index_wraps() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-1, 1), 0);
        assert_eq!(reflect_index(5, 1), 0);
    }

    #[test]
    fn constant_plane_preserved() {
        let k = GaussianKernel::new(2.0).unwrap();
        let p = Plane::filled(9, 13, 0.37);
        let out = gaussian_filter(&p, &k);
        for &v in out.as_slice() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_gaussian() {
        let k = GaussianKernel::new(1.5).unwrap();
        let n = 31;
        let mut p = Plane::new(n, n);
        p.set(15, 15, 1.0);
        let out = gaussian_filter(&p, &k);
        let sum: f64 = out.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for dy in -5..=5isize {
            for dx in -5..=5isize {
                let v = out.get((15 + dy) as usize, (15 + dx) as usize);
                assert!((v - k.weight(dy) * k.weight(dx)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn separable_matches_direct_convolution() {
        for (seed, sigma) in [(1u64, 1.0), (2, 2.0), (3, 5.0)] {
            let p = random_plane(16, 16, seed);
            let k = GaussianKernel::new(sigma).unwrap();
            for border in [Border::Reflect, Border::Zero] {
                let a = gaussian_filter_with(&p, &k, border);
                let b = brute_force(&p, &k, border);
                for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!((u - v).abs() < 1e-10, "sigma {sigma} {border:?}: {u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn filter_commutes_with_constant_shift() {
        let p = random_plane(12, 20, 9);
        let k = GaussianKernel::new(1.0).unwrap();
        let a = gaussian_filter(&p.map(|v| v + 0.25), &k);
        let b = gaussian_filter(&p, &k).map(|v| v + 0.25);
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}
