use super::{gaussian_filter, GaussianKernel, Plane};
use crate::error::{Error, Result};

/// Variances in `[-VARIANCE_SLACK, 0)` are clamped to zero; anything lower is an error.
pub const VARIANCE_SLACK: f64 = 1e-9;

/// Gaussian-windowed first and second moments of a pair of planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStat {
    pub mu_x: f64,
    pub mu_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
}

/// Per-pixel [`LocalStat`] maps, stored as one plane per moment.
#[derive(Debug, Clone)]
pub struct LocalStats {
    pub mu_x: Plane,
    pub mu_y: Plane,
    pub var_x: Plane,
    pub var_y: Plane,
    pub cov_xy: Plane,
}

impl LocalStats {
    pub fn height(&self) -> usize {
        self.mu_x.height()
    }

    pub fn width(&self) -> usize {
        self.mu_x.width()
    }

    pub fn at(&self, y: usize, x: usize) -> LocalStat {
        LocalStat {
            mu_x: self.mu_x.get(y, x),
            mu_y: self.mu_y.get(y, x),
            var_x: self.var_x.get(y, x),
            var_y: self.var_y.get(y, x),
            cov_xy: self.cov_xy.get(y, x),
        }
    }
}

fn guard_variance(v: &mut Plane) -> Result<()> {
    for s in v.as_mut_slice() {
        if *s < 0.0 {
            if *s < -VARIANCE_SLACK {
                return Err(Error::NegativeVariance { value: *s });
            }
            *s = 0.0;
        }
    }
    Ok(())
}

/// Windowed means, variances and covariance via `E[x²] - E[x]²`.
pub fn local_stats(x: &Plane, y: &Plane, kernel: &GaussianKernel) -> Result<LocalStats> {
    if !x.same_shape(y) {
        return Err(Error::Dimension(format!(
            "local_stats: {}x{} vs {}x{}",
            x.height(),
            x.width(),
            y.height(),
            y.width()
        )));
    }
    let mu_x = gaussian_filter(x, kernel);
    let mu_y = gaussian_filter(y, kernel);
    let exx = gaussian_filter(&x.map(|v| v * v), kernel);
    let eyy = gaussian_filter(&y.map(|v| v * v), kernel);
    let exy = gaussian_filter(&x.zip_map(y, |a, b| a * b), kernel);

    let mut var_x = exx.zip_map(&mu_x, |e, m| e - m * m);
    let mut var_y = eyy.zip_map(&mu_y, |e, m| e - m * m);
    guard_variance(&mut var_x)?;
    guard_variance(&mut var_y)?;
    let mut cov_xy = exy;
    for ((c, &a), &b) in cov_xy
        .as_mut_slice()
        .iter_mut()
        .zip(mu_x.as_slice())
        .zip(mu_y.as_slice())
    {
        *c -= a * b;
    }
    Ok(LocalStats {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov_xy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::gaussian::reflect_index;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Plane {
        Plane::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    // Explicit weighted sums over each reflected window, centered moments.
    fn window_oracle(x: &Plane, y: &Plane, k: &GaussianKernel, py: usize, px: usize) -> LocalStat {
        let r = k.radius() as isize;
        let mut samples = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let yy = reflect_index(py as isize + dy, x.height());
                let xx = reflect_index(px as isize + dx, x.width());
                samples.push((k.weight(dy) * k.weight(dx), x.get(yy, xx), y.get(yy, xx)));
            }
        }
        let mu_x: f64 = samples.iter().map(|s| s.0 * s.1).sum();
        let mu_y: f64 = samples.iter().map(|s| s.0 * s.2).sum();
        let var_x = samples.iter().map(|s| s.0 * (s.1 - mu_x).powi(2)).sum();
        let var_y = samples.iter().map(|s| s.0 * (s.2 - mu_y).powi(2)).sum();
        let cov_xy = samples
            .iter()
            .map(|s| s.0 * (s.1 - mu_x) * (s.2 - mu_y))
            .sum();
        LocalStat {
            mu_x,
            mu_y,
            var_x,
            var_y,
            cov_xy,
        }
    }

    #[test]
    fn self_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_plane(10, 10, &mut rng);
        let k = GaussianKernel::new(1.0).unwrap();
        let s = local_stats(&x, &x, &k).unwrap();
        for i in 0..x.len() {
            let (vx, vy, c) = (
                s.var_x.as_slice()[i],
                s.var_y.as_slice()[i],
                s.cov_xy.as_slice()[i],
            );
            assert!((vx - vy).abs() < 1e-9);
            assert!((c - vx).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_has_zero_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Plane::filled(8, 8, 0.6);
        let y = random_plane(8, 8, &mut rng);
        let s = local_stats(&x, &y, &GaussianKernel::new(1.0).unwrap()).unwrap();
        for i in 0..x.len() {
            assert!(s.var_x.as_slice()[i].abs() < 1e-12);
            assert!(s.cov_xy.as_slice()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn matches_explicit_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_plane(8, 8, &mut rng);
        let y = random_plane(8, 8, &mut rng);
        let k = GaussianKernel::new(1.0).unwrap();
        let s = local_stats(&x, &y, &k).unwrap();
        for py in 0..8 {
            for px in 0..8 {
                let o = window_oracle(&x, &y, &k, py, px);
                let a = s.at(py, px);
                assert!((a.mu_x - o.mu_x).abs() < 1e-12);
                assert!((a.mu_y - o.mu_y).abs() < 1e-12);
                assert!((a.var_x - o.var_x).abs() < 1e-12);
                assert!((a.var_y - o.var_y).abs() < 1e-12);
                assert!((a.cov_xy - o.cov_xy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cauchy_schwarz_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = GaussianKernel::new(1.5).unwrap();
        for _ in 0..100 {
            let x = random_plane(12, 12, &mut rng);
            let y = random_plane(12, 12, &mut rng);
            let s = local_stats(&x, &y, &k).unwrap();
            for i in 0..x.len() {
                let bound = (s.var_x.as_slice()[i].max(0.0) * s.var_y.as_slice()[i].max(0.0))
                    .sqrt()
                    + 1e-7;
                assert!(s.cov_xy.as_slice()[i].abs() <= bound);
                assert!(s.var_x.as_slice()[i] >= -1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let k = GaussianKernel::new(1.0).unwrap();
        assert!(local_stats(&Plane::new(4, 4), &Plane::new(4, 5), &k).is_err());
    }
}
