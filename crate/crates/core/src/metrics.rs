//! Objective image quality: PSNR and evaluation SSIM, per image and per set.
//!
//! Evaluation SSIM uses σ = 1.5 and the squared constants `(0.01)²`, `(0.03)²`
//! for unit dynamic range. These differ on purpose from the training-loss
//! defaults in [`losses`](crate::losses).

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{Manifest, Sample};
use crate::error::{Error, Result};
use crate::image::{GaussianKernel, Image};
use crate::losses::{compensated_sum, ssim_map};
use crate::network::NetworkParams;

pub const EVAL_SIGMA: f64 = 1.5;
pub const EVAL_C1: f64 = 1e-4;
pub const EVAL_C2: f64 = 9e-4;
/// Below this MSE, PSNR is reported as [`Psnr::Infinite`].
pub const PSNR_MSE_FLOOR: f64 = 1e-12;

/// Window and stabilizing constants of the evaluation SSIM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSsim {
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for EvalSsim {
    fn default() -> Self {
        EvalSsim {
            sigma: EVAL_SIGMA,
            c1: EVAL_C1,
            c2: EVAL_C2,
        }
    }
}

impl EvalSsim {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("eval_sigma", format!("must be positive, got {}", self.sigma)));
        }
        if !(self.c1 > 0.0) {
            return Err(Error::invalid("eval_c1", format!("must be positive, got {}", self.c1)));
        }
        if !(self.c2 > 0.0) {
            return Err(Error::invalid("eval_c2", format!("must be positive, got {}", self.c2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

/// `10·log10(1/MSE)` on inputs clamped to [0, 1].
pub fn psnr(x: &Image, y: &Image) -> Result<Psnr> {
    x.check_same_shape(y, "psnr")?;
    let sq = x.data().iter().zip(y.data()).map(|(a, b)| {
        let d = a.clamp(0.0, 1.0) - b.clamp(0.0, 1.0);
        d * d
    });
    let mse = compensated_sum(sq) / x.len() as f64;
    if mse < PSNR_MSE_FLOOR {
        Ok(Psnr::Infinite)
    } else {
        Ok(Psnr::Finite(-10.0 * mse.log10()))
    }
}

/// Mean SSIM over the valid region, averaged over channels.
pub fn ssim_eval(x: &Image, y: &Image) -> Result<f64> {
    ssim_eval_with(x, y, EVAL_SIGMA, EVAL_C1, EVAL_C2)
}

pub fn ssim_eval_with(x: &Image, y: &Image, sigma: f64, c1: f64, c2: f64) -> Result<f64> {
    x.check_same_shape(y, "ssim_eval")?;
    let r = GaussianKernel::new(sigma)?.radius();
    let (h, w) = (x.height(), x.width());
    let mut total = 0.0;
    for c in 0..x.channels() {
        let m = ssim_map(&x.plane(c), &y.plane(c), sigma, c1, c2)?;
        let vals = (r..h - r).flat_map(|py| (r..w - r).map(move |px| (py, px)));
        let nv = ((h - 2 * r) * (w - 2 * r)) as f64;
        total += compensated_sum(vals.map(|(py, px)| m.ssim.get(py, px))) / nv;
    }
    Ok(total / x.channels() as f64)
}

/// Anything that maps a hazy image to a restored one.
pub trait Dehazer: Sync {
    fn dehaze(&self, hazy: &Image) -> Result<Image>;
}

impl Dehazer for NetworkParams {
    fn dehaze(&self, hazy: &Image) -> Result<Image> {
        NetworkParams::dehaze(self, hazy)
    }
}

/// Returns its input unchanged; scores the hazy images themselves.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Dehazer for Identity {
    fn dehaze(&self, hazy: &Image) -> Result<Image> {
        Ok(hazy.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub id: String,
    pub psnr: Psnr,
    pub ssim: f64,
    /// Scores of the untouched hazy input against the same ground truth.
    pub hazy_psnr: Psnr,
    pub hazy_ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub settings: EvalSsim,
    pub entries: Vec<EvalEntry>,
    /// Samples that could not be loaded or processed, with the reason.
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    fn sorted(&self) -> Vec<&EvalEntry> {
        let mut v: Vec<&EvalEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    fn mean_psnr_of(&self, pick: impl Fn(&EvalEntry) -> Psnr) -> Option<f64> {
        let finite: Vec<f64> = self.sorted().into_iter().filter_map(|e| pick(e).db()).collect();
        (!finite.is_empty()).then(|| compensated_sum(finite.iter().copied()) / finite.len() as f64)
    }

    fn mean_of(&self, pick: impl Fn(&EvalEntry) -> f64) -> Option<f64> {
        let v: Vec<f64> = self.sorted().into_iter().map(pick).collect();
        (!v.is_empty()).then(|| compensated_sum(v.iter().copied()) / v.len() as f64)
    }

    /// Mean over finite PSNR entries; `None` if there are none.
    pub fn mean_psnr(&self) -> Option<f64> {
        self.mean_psnr_of(|e| e.psnr)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        self.mean_of(|e| e.ssim)
    }

    pub fn mean_hazy_psnr(&self) -> Option<f64> {
        self.mean_psnr_of(|e| e.hazy_psnr)
    }

    pub fn mean_hazy_ssim(&self) -> Option<f64> {
        self.mean_of(|e| e.hazy_ssim)
    }

    pub fn infinite_count(&self) -> usize {
        self.entries.iter().filter(|e| e.psnr.is_infinite()).count()
    }

    pub fn summary_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.4}"));
        format!(
            "# summary n={} infinite_psnr={} failed={} mean_psnr_db={} mean_ssim={} hazy_mean_psnr_db={} hazy_mean_ssim={}",
            self.entries.len(),
            self.infinite_count(),
            self.failures.len(),
            fmt(self.mean_psnr()),
            fmt(self.mean_ssim()),
            fmt(self.mean_hazy_psnr()),
            fmt(self.mean_hazy_ssim()),
        )
    }

    /// `image_id,psnr_db,ssim` rows between a parameter header and a summary line.
    pub fn to_csv(&self) -> String {
        let EvalSsim { sigma, c1, c2 } = self.settings;
        let mut s = format!("# eval_ssim sigma={sigma} c1={c1} c2={c2}\nimage_id,psnr_db,ssim\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{:.6}\n", e.id, e.psnr, e.ssim));
        }
        for (id, reason) in &self.failures {
            s.push_str(&format!("# failed {id}: {reason}\n"));
        }
        s.push_str(&self.summary_line());
        s.push('\n');
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Aligned text table with a mean row.
    pub fn table(&self) -> String {
        let idw = self.entries.iter().map(|e| e.id.len()).max().unwrap_or(0).max(8);
        let mut s = format!("{:<idw$}  {:>10}  {:>8}  {:>10}  {:>8}\n", "image_id", "psnr_db", "ssim", "hazy_psnr", "hazy_ssim");
        for e in &self.entries {
            s.push_str(&format!(
                "{:<idw$}  {:>10}  {:>8.4}  {:>10}  {:>8.4}\n",
                e.id,
                e.psnr.to_string(),
                e.ssim,
                e.hazy_psnr.to_string(),
                e.hazy_ssim
            ));
        }
        let f = |v: Option<f64>| v.map_or("nan".into(), |v| format!("{v:.4}"));
        s.push_str(&format!(
            "{:<idw$}  {:>10}  {:>8}  {:>10}  {:>8}\n",
            "mean",
            f(self.mean_psnr()),
            f(self.mean_ssim()),
            f(self.mean_hazy_psnr()),
            f(self.mean_hazy_ssim())
        ));
        s
    }
}

fn score(model: &dyn Dehazer, sample: &Sample, e: &EvalSsim) -> Result<EvalEntry> {
    let out = model.dehaze(&sample.hazy)?.clamped();
    let ssim = |x: &Image| ssim_eval_with(x, &sample.clean, e.sigma, e.c1, e.c2);
    Ok(EvalEntry {
        id: sample.id.clone(),
        psnr: psnr(&out, &sample.clean)?,
        ssim: ssim(&out)?,
        hazy_psnr: psnr(&sample.hazy, &sample.clean)?,
        hazy_ssim: ssim(&sample.hazy)?,
    })
}

/// Scores already-loaded samples, keeping their order.
pub fn evaluate_samples(model: &dyn Dehazer, samples: &[Sample]) -> EvalReport {
    evaluate_samples_with(model, samples, &EvalSsim::default())
}

pub fn evaluate_samples_with(model: &dyn Dehazer, samples: &[Sample], settings: &EvalSsim) -> EvalReport {
    let results: Vec<Result<EvalEntry>> = samples.par_iter().map(|s| score(model, s, settings)).collect();
    let mut report = EvalReport {
        settings: *settings,
        entries: Vec::new(),
        failures: Vec::new(),
    };
    for (s, r) in samples.iter().zip(results) {
        match r {
            Ok(e) => report.entries.push(e),
            Err(e) => report.failures.push((s.id.clone(), e.to_string())),
        }
    }
    report
}

/// Loads every pair in `manifest`, dehazes, and scores against ground truth.
/// Unreadable samples are recorded in [`EvalReport::failures`] and skipped.
pub fn evaluate_set(model: &dyn Dehazer, manifest: &Manifest) -> EvalReport {
    evaluate_set_with(model, manifest, &EvalSsim::default())
}

pub fn evaluate_set_with(model: &dyn Dehazer, manifest: &Manifest, settings: &EvalSsim) -> EvalReport {
    let loaded: Vec<(String, Result<Sample>)> = manifest
        .entries()
        .par_iter()
        .map(|e| (e.id(), manifest.load(e)))
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in loaded {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => failures.push((id, e.to_string())),
        }
    }
    let mut report = evaluate_samples_with(model, &samples, settings);
    report.failures.extend(failures);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, c, |_, _, _| rng.random::<f64>())
    }

    #[test]
    fn psnr_cases() {
        let x = random_image(8, 8, 3, 1);
        assert_eq!(psnr(&x, &x).unwrap(), Psnr::Infinite);
        let a = Image::filled(4, 4, 1, 0.5);
        let b = Image::filled(4, 4, 1, 0.6);
        let p = psnr(&a, &b).unwrap().db().unwrap();
        assert!((p - 20.0).abs() < 1e-9, "{p}");
        assert!(psnr(&a, &Image::new(4, 5, 1)).is_err());
    }

    #[test]
    fn psnr_matches_two_pass_oracle() {
        let x = random_image(9, 7, 3, 2);
        let y = random_image(9, 7, 3, 3);
        let diffs: Vec<f64> = x.data().iter().zip(y.data()).map(|(a, b)| a - b).collect();
        let mut mse = 0.0;
        for d in &diffs {
            mse += d * d;
        }
        mse /= diffs.len() as f64;
        let expect = 10.0 * (1.0 / mse).log10();
        let got = psnr(&x, &y).unwrap().db().unwrap();
        assert!((got - expect).abs() < 1e-9);
        assert_eq!(psnr(&y, &x).unwrap(), psnr(&x, &y).unwrap());
    }

    #[test]
    fn psnr_clamps_inputs() {
        let a = Image::filled(2, 2, 1, 1.4);
        let b = Image::filled(2, 2, 1, 1.0);
        assert_eq!(psnr(&a, &b).unwrap(), Psnr::Infinite);
    }

    #[test]
    fn ssim_eval_cases() {
        let x = random_image(16, 16, 3, 4);
        assert!((ssim_eval(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let board = Image::from_fn(16, 16, 1, |_, y, x| ((y + x) % 2) as f64);
        let inv = board.map(|v| 1.0 - v);
        assert!(ssim_eval(&board, &inv).unwrap() < 0.5);
        assert!(matches!(ssim_eval(&Image::new(10, 10, 1), &Image::new(10, 10, 1)), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn ssim_eval_matches_window_oracle() {
        // 11×11 with σ = 1.5 has a single valid center at (5, 5).
        let x = random_image(11, 11, 1, 5);
        let y = random_image(11, 11, 1, 6);
        let k = GaussianKernel::new(EVAL_SIGMA).unwrap();
        let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for dy in -5isize..=5 {
            for dx in -5isize..=5 {
                let g = k.weight(dy) * k.weight(dx);
                let a = x.get(0, (5 + dy) as usize, (5 + dx) as usize);
                let b = y.get(0, (5 + dy) as usize, (5 + dx) as usize);
                mx += g * a;
                my += g * b;
                sxx += g * a * a;
                syy += g * b * b;
                sxy += g * a * b;
            }
        }
        let (vx, vy, c) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
        let expect = (2.0 * mx * my + EVAL_C1) / (mx * mx + my * my + EVAL_C1) * (2.0 * c + EVAL_C2)
            / (vx + vy + EVAL_C2);
        assert!((ssim_eval(&x, &y).unwrap() - expect).abs() < 1e-9);
    }

    fn sample(id: &str, seed: u64) -> Sample {
        Sample {
            id: id.into(),
            clean: random_image(16, 16, 3, seed),
            hazy: random_image(16, 16, 3, seed + 100),
        }
    }

    #[test]
    fn identity_on_clean_inputs() {
        let s: Vec<Sample> = (0..3)
            .map(|i| {
                let mut s = sample(&format!("s{i}"), i);
                s.hazy = s.clean.clone();
                s
            })
            .collect();
        let r = evaluate_samples(&Identity, &s);
        assert_eq!(r.infinite_count(), 3);
        assert_eq!(r.mean_psnr(), None);
        assert!((r.mean_ssim().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn aggregates_match_hand_means_and_ignore_order() {
        let s: Vec<Sample> = (0..5).map(|i| sample(&format!("s{i}"), i)).collect();
        let r = evaluate_samples(&Identity, &s);
        let hand_p = r.entries.iter().map(|e| e.psnr.db().unwrap()).sum::<f64>() / 5.0;
        let hand_s = r.entries.iter().map(|e| e.ssim).sum::<f64>() / 5.0;
        assert!((r.mean_psnr().unwrap() - hand_p).abs() < 1e-12);
        assert!((r.mean_ssim().unwrap() - hand_s).abs() < 1e-12);
        let mut rev = s.clone();
        rev.reverse();
        let r2 = evaluate_samples(&Identity, &rev);
        assert_eq!(r.mean_psnr(), r2.mean_psnr());
        assert_eq!(r.mean_ssim(), r2.mean_ssim());
        let csv = r.to_csv();
        assert!(csv.contains("image_id,psnr_db,ssim"));
        assert_eq!(csv.lines().filter(|l| l.starts_with('s')).count(), 5);
        assert!(r.table().lines().last().unwrap().starts_with("mean"));
    }

    #[test]
    fn failing_samples_are_counted() {
        let mut bad = sample("bad", 9);
        bad.hazy = Image::new(16, 16, 1);
        let r = evaluate_samples(&Identity, &[sample("ok", 1), bad]);
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.failures.len(), 1);
        assert!(r.summary_line().contains("failed=1"));
    }
}
