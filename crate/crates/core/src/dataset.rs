//! Synthetic hazy/clean pairs and the text manifests that list them.
//!
//! A manifest has one sample per line:
//!
//! ```text
//! clean_path hazy_path beta A seed depth_kind
//! ```
//!
//! Relative paths resolve against the manifest's own directory. Blank lines
//! and lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::haze::{make_depth_with_max, synthesize_haze, transmission, DepthKind, DEFAULT_D_MAX};
use crate::image::{gaussian_filter, load_image, save_image, GaussianKernel, Image, Plane};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub clean: PathBuf,
    pub hazy: PathBuf,
    pub beta: f64,
    pub a: f64,
    pub seed: u64,
    pub depth_kind: DepthKind,
}

impl ManifestEntry {
    /// Sample id: the hazy file's stem.
    pub fn id(&self) -> String {
        self.hazy
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    fn line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.clean.display(),
            self.hazy.display(),
            self.beta,
            self.a,
            self.seed,
            self.depth_kind
        )
    }
}

/// A loaded clean/hazy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub clean: Image,
    pub hazy: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// `root` is the directory relative paths resolve against.
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        Manifest {
            root: root.into(),
            entries,
        }
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, reason: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(bad(n + 1, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |i: usize, what: &str| -> Result<f64> {
                f[i].parse::<f64>()
                    .map_err(|_| bad(n + 1, format!("{what} `{}` is not a number", f[i])))
            };
            entries.push(ManifestEntry {
                clean: PathBuf::from(f[0]),
                hazy: PathBuf::from(f[1]),
                beta: num(2, "beta")?,
                a: num(3, "A")?,
                seed: f[4]
                    .parse()
                    .map_err(|_| bad(n + 1, format!("seed `{}` is not an integer", f[4])))?,
                depth_kind: f[5].parse().map_err(|e: Error| bad(n + 1, e.to_string()))?,
            });
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { root, entries })
    }

    /// Non-empty manifest or [`Error::EmptyManifest`].
    pub fn read_non_empty(path: impl AsRef<Path>) -> Result<Manifest> {
        let m = Manifest::read(path.as_ref())?;
        if m.is_empty() {
            return Err(Error::EmptyManifest(path.as_ref().to_path_buf()));
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# clean_path hazy_path beta A seed depth_kind\n");
        for e in &self.entries {
            s.push_str(&e.line());
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        for e in &self.entries {
            for p in [&e.clean, &e.hazy] {
                if p.to_string_lossy().chars().any(char::is_whitespace) {
                    return Err(Error::invalid("manifest", format!("path `{}` contains whitespace", p.display())));
                }
            }
        }
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Loads one entry's images, converting grayscale to three channels.
    pub fn load(&self, e: &ManifestEntry) -> Result<Sample> {
        let clean = load_image(self.resolve(&e.clean))?.to_rgb();
        let hazy = load_image(self.resolve(&e.hazy))?.to_rgb();
        clean.check_same_shape(&hazy, "manifest pair")?;
        Ok(Sample {
            id: e.id(),
            clean,
            hazy,
        })
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.entries.par_iter().map(|e| self.load(e)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanSource {
    Procedural,
    Directory(PathBuf),
}

impl std::fmt::Display for CleanSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CleanSource::Procedural => f.write_str("procedural"),
            CleanSource::Directory(p) => write!(f, "{}", p.display()),
        }
    }
}

impl std::str::FromStr for CleanSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "procedural" {
            CleanSource::Procedural
        } else {
            CleanSource::Directory(PathBuf::from(s))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub clean_source: CleanSource,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub beta_range: (f64, f64),
    pub a_range: (f64, f64),
    pub depth_kinds: Vec<DepthKind>,
    pub patch_size: usize,
    pub d_max: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            clean_source: CleanSource::Procedural,
            n_train: 64,
            n_val: 16,
            n_test: 16,
            beta_range: (0.4, 1.6),
            a_range: (0.7, 1.0),
            depth_kinds: DepthKind::ALL.to_vec(),
            patch_size: 64,
            d_max: DEFAULT_D_MAX,
            seed: 0,
        }
    }
}

pub const MIN_PATCH_SIZE: usize = 16;

impl DatasetSpec {
    pub fn n_total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_train", self.n_train), ("n_val", self.n_val), ("n_test", self.n_test)] {
            if n == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        let (blo, bhi) = self.beta_range;
        if !(blo >= 0.0 && blo <= bhi && bhi.is_finite()) {
            return Err(Error::invalid("beta_range", format!("need 0 <= lo <= hi, got {blo},{bhi}")));
        }
        let (alo, ahi) = self.a_range;
        if !(alo > 0.0 && alo <= ahi && ahi <= 1.0) {
            return Err(Error::invalid("a_range", format!("need 0 < lo <= hi <= 1, got {alo},{ahi}")));
        }
        if self.depth_kinds.is_empty() {
            return Err(Error::invalid("depth_kinds", "needs at least one kind"));
        }
        if self.patch_size < MIN_PATCH_SIZE {
            return Err(Error::invalid(
                "patch_size",
                format!("must be at least {MIN_PATCH_SIZE}, got {}", self.patch_size),
            ));
        }
        if !(self.d_max >= 0.0 && self.d_max.is_finite()) {
            return Err(Error::invalid("d_max", format!("must be >= 0, got {}", self.d_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

/// SplitMix64 finalizer; decorrelates per-sample seeds from the base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rescale_to(p: &Plane, lo: f64, hi: f64) -> Plane {
    let min = p.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let max = p.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span <= 0.0 {
        return Plane::from_fn(p.height(), p.width(), |_, x| lo + (hi - lo) * x as f64 / (p.width().max(2) - 1) as f64);
    }
    p.map(|v| lo + (hi - lo) * (v - min) / span)
}

/// Random scene-like content: a tilted gradient, a few flat rectangles and
/// smoothed noise, each channel stretched to span at least [0.1, 0.9].
pub fn procedural_clean(seed: u64, size: usize) -> Result<Image> {
    if size < MIN_PATCH_SIZE {
        return Err(Error::invalid("size", format!("must be at least {MIN_PATCH_SIZE}, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let noise_sigma = (s / 16.0).max(1.0);
    let kernel = GaussianKernel::new(noise_sigma)?;
    let rects: Vec<(usize, usize, usize, usize, [f64; 3])> = (0..rng.random_range(3..7))
        .map(|_| {
            let (h, w) = (rng.random_range(size / 8..size / 2), rng.random_range(size / 8..size / 2));
            let (y0, x0) = (rng.random_range(0..size - h), rng.random_range(0..size - w));
            (y0, x0, h, w, [rng.random(), rng.random(), rng.random()])
        })
        .collect();
    let mut planes = Vec::with_capacity(3);
    for c in 0..3 {
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (gy, gx) = angle.sin_cos();
        let base: f64 = rng.random();
        let mut p = Plane::from_fn(size, size, |y, x| base + 0.5 * (gy * y as f64 + gx * x as f64) / s);
        for &(y0, x0, h, w, col) in &rects {
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    p.set(y, x, 0.4 * p.get(y, x) + 0.6 * col[c]);
                }
            }
        }
        let noise = Plane::from_fn(size, size, |_, _| StandardNormal.sample(&mut rng));
        let noise = gaussian_filter(&noise, &kernel);
        let gain = 0.15 / noise.as_slice().iter().map(|v| v.abs()).fold(1e-12, f64::max);
        let p = p.zip_map(&noise, |a, n| a + gain * n);
        let lo = rng.random_range(0.0..0.1);
        let hi = rng.random_range(0.9..1.0);
        planes.push(rescale_to(&p, lo, hi));
    }
    Image::from_planes(&planes)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "ppm" | "pgm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn crop_patch(img: &Image, size: usize, rng: &mut ChaCha8Rng, path: &Path) -> Result<Image> {
    if img.height() < size || img.width() < size {
        return Err(Error::InsufficientSources(format!(
            "{} is {}x{}, smaller than patch size {size}",
            path.display(),
            img.height(),
            img.width()
        )));
    }
    let top = rng.random_range(0..=img.height() - size);
    let left = rng.random_range(0..=img.width() - size);
    img.crop(top, left, size, size)
}

struct Generated {
    entry: ManifestEntry,
    clean: Image,
    hazy: Image,
}

fn generate(spec: &DatasetSpec, index: usize, sources: &[PathBuf]) -> Result<Generated> {
    let seed = derive_seed(spec.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = rng.random_range(spec.beta_range.0..=spec.beta_range.1);
    let a = rng.random_range(spec.a_range.0..=spec.a_range.1);
    let kind = spec.depth_kinds[rng.random_range(0..spec.depth_kinds.len())];
    let content_seed: u64 = rng.random();
    let depth_seed: u64 = rng.random();
    let clean = match &spec.clean_source {
        CleanSource::Procedural => procedural_clean(content_seed, spec.patch_size)?,
        CleanSource::Directory(_) => {
            let path = &sources[index];
            let img = load_image(path)?.to_rgb();
            let mut crop_rng = ChaCha8Rng::seed_from_u64(content_seed);
            crop_patch(&img, spec.patch_size, &mut crop_rng, path)?
        }
    }
    .quantized();
    let depth = make_depth_with_max(kind, spec.patch_size, spec.patch_size, depth_seed, spec.d_max)?;
    let t = transmission(&depth, beta)?;
    let hazy = synthesize_haze(&clean, &t, a)?;
    Ok(Generated {
        entry: ManifestEntry {
            clean: PathBuf::from(format!("clean_{index:04}.png")),
            hazy: PathBuf::from(format!("hazy_{index:04}.png")),
            beta,
            a,
            seed,
            depth_kind: kind,
        },
        clean,
        hazy,
    })
}

/// Generates `n_train + n_val + n_test` pairs into `out_dir` and writes
/// `train.txt`, `val.txt` and `test.txt`. Output depends only on `spec`.
pub fn build_dataset(spec: &DatasetSpec, out_dir: impl AsRef<Path>) -> Result<DatasetPaths> {
    spec.validate()?;
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let sources = match &spec.clean_source {
        CleanSource::Procedural => Vec::new(),
        CleanSource::Directory(dir) => {
            let found = list_images(dir)?;
            if found.len() < spec.n_total() {
                return Err(Error::InsufficientSources(format!(
                    "{} holds {} images, need {}",
                    dir.display(),
                    found.len(),
                    spec.n_total()
                )));
            }
            found
        }
    };
    let entries = (0..spec.n_total())
        .into_par_iter()
        .map(|i| {
            let g = generate(spec, i, &sources)?;
            save_image(&g.clean, out.join(&g.entry.clean))?;
            save_image(&g.hazy, out.join(&g.entry.hazy))?;
            Ok(g.entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, rest) = entries.split_at(spec.n_train);
    let (val, test) = rest.split_at(spec.n_val);
    let paths = DatasetPaths {
        train: out.join("train.txt"),
        val: out.join("val.txt"),
        test: out.join("test.txt"),
    };
    for (part, path) in [(train, &paths.train), (val, &paths.val), (test, &paths.test)] {
        Manifest::new(out, part.to_vec()).write(path)?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_train: 4,
            n_val: 2,
            n_test: 2,
            patch_size: 24,
            seed,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn procedural_content_spans_range() {
        for seed in 0..10 {
            let img = procedural_clean(seed, 64).unwrap();
            assert_eq!(img, procedural_clean(seed, 64).unwrap());
            for c in 0..3 {
                let ch = img.channel(c);
                let min = ch.iter().copied().fold(f64::INFINITY, f64::min);
                let max = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(min < 0.2 && max > 0.8, "seed {seed} c {c}: {min}..{max}");
                let mean = ch.iter().sum::<f64>() / ch.len() as f64;
                let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                assert!(var > 0.0);
            }
        }
        assert!(procedural_clean(1, 8).is_err());
    }

    #[test]
    fn builds_counts_and_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = build_dataset(&small_spec(3), a.path()).unwrap();
        build_dataset(&small_spec(3), b.path()).unwrap();
        let train = Manifest::read(&pa.train).unwrap();
        assert_eq!(train.len(), 4);
        let pngs = std::fs::read_dir(a.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
            .count();
        assert_eq!(pngs, 16);
        for name in ["train.txt", "val.txt", "test.txt", "clean_0000.png", "hazy_0007.png"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn splits_are_disjoint_and_convex() {
        let dir = tempfile::tempdir().unwrap();
        let p = build_dataset(&small_spec(5), dir.path()).unwrap();
        let ms: Vec<Manifest> = [&p.train, &p.val, &p.test].iter().map(|p| Manifest::read(p).unwrap()).collect();
        let mut ids: Vec<String> = ms.iter().flat_map(|m| m.entries().iter().map(|e| e.id())).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
        let tol = 0.5 / 255.0 + 1e-12;
        for m in &ms {
            for e in m.entries() {
                assert!((0.4..=1.6).contains(&e.beta) && (0.7..=1.0).contains(&e.a));
                let s = m.load(e).unwrap();
                for (&j, &i) in s.clean.data().iter().zip(s.hazy.data()) {
                    assert!(i >= j.min(e.a) - tol && i <= j.max(e.a) + tol);
                }
            }
        }
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::new(
            dir.path(),
            vec![ManifestEntry {
                clean: "c.png".into(),
                hazy: "h.png".into(),
                beta: 0.123456789,
                a: 0.8,
                seed: u64::MAX,
                depth_kind: DepthKind::SmoothNoise,
            }],
        );
        let path = dir.path().join("m.txt");
        m.write(&path).unwrap();
        assert_eq!(Manifest::read(&path).unwrap(), m);
        std::fs::write(&path, "a b 0.5 0.8 1\n").unwrap();
        assert!(matches!(Manifest::read(&path), Err(Error::Manifest { line: 1, .. })));
        std::fs::write(&path, "# nothing\n").unwrap();
        assert!(matches!(Manifest::read_non_empty(&path), Err(Error::EmptyManifest(_))));
    }

    #[test]
    fn directory_source_needs_enough_images() {
        let src = tempfile::tempdir().unwrap();
        for i in 0..3 {
            save_image(&procedural_clean(i, 32).unwrap(), src.path().join(format!("{i}.png"))).unwrap();
        }
        let out = tempfile::tempdir().unwrap();
        let mut spec = small_spec(1);
        spec.clean_source = CleanSource::Directory(src.path().to_path_buf());
        assert!(matches!(build_dataset(&spec, out.path()), Err(Error::InsufficientSources(_))));
        spec.n_train = 1;
        spec.n_val = 1;
        spec.n_test = 1;
        build_dataset(&spec, out.path()).unwrap();
    }

    #[test]
    fn rejects_bad_ranges() {
        let s = DatasetSpec {
            beta_range: (1.6, 0.4),
            ..DatasetSpec::default()
        };
        assert!(matches!(s.validate(), Err(Error::InvalidParameter { name: "beta_range", .. })));
    }
}
