//! Scan-robustness simulation: perturb an image the way a display-and-camera capture
//! would, then run the full locate and decode path on it.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::{decode_message, QrSpec};
use crate::raster::{GrayImage, L_MAX};
use crate::scanner::{extract_located, locate_finder};

/// Report layout version.
pub const SCHEMA_VERSION: u32 = 1;

/// Binarization strictness levels tried by [`scan_trial`], in order.
pub const SCAN_ALPHAS: [f64; 3] = [0.0, 0.1, 0.2];

/// Viewing distance for the tilt homography, in image widths.
const VIEW_DISTANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbSpec {
    /// Output size over input size, in `(0, 1]`.
    pub scale: f64,
    /// Gaussian blur standard deviation in input pixels.
    pub blur_sigma: f64,
    /// Rotation of the image plane about its vertical axis, in `[0, 60]` degrees.
    pub tilt_degrees: f64,
    pub brightness_offset: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec { scale: 1.0, blur_sigma: 0.0, tilt_degrees: 0.0, brightness_offset: 0.0, noise_sigma: 0.0, seed: 0 }
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::Parameter(format!("scale {} outside (0, 1]", self.scale)));
        }
        if !(0.0..=60.0).contains(&self.tilt_degrees) {
            return Err(Error::Parameter(format!("tilt {} outside [0, 60]", self.tilt_degrees)));
        }
        if !(self.blur_sigma >= 0.0 && self.noise_sigma >= 0.0 && self.brightness_offset.is_finite()) {
            return Err(Error::Parameter("blur and noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        PerturbSpec { seed, ..self }
    }
}

/// Scale {0.3, 0.5, 1.0} × tilt {0°, 45°} × blur {0, 0.75, 1.5}, with 2 gray levels of
/// sensor noise.
pub fn default_grid() -> Vec<PerturbSpec> {
    let mut grid = Vec::new();
    for scale in [0.3, 0.5, 1.0] {
        for tilt_degrees in [0.0, 45.0] {
            for blur_sigma in [0.0, 0.75, 1.5] {
                grid.push(PerturbSpec { scale, tilt_degrees, blur_sigma, noise_sigma: 2.0, ..Default::default() });
            }
        }
    }
    grid
}

/// Perspective view of the image plane turned by `degrees` about its vertical center
/// line, seen from `VIEW_DISTANCE` widths away; uncovered pixels are white.
fn tilt(img: &GrayImage, degrees: f64) -> GrayImage {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let d = VIEW_DISTANCE * w;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = (w / 2.0, h / 2.0);
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let u = x as f64 + 0.5 - cx;
        let v = y as f64 + 0.5 - cy;
        // inverse of u = d·X·cos / (d + X·sin), v = d·Y / (d + X·sin)
        let denom = d * cos - u * sin;
        if denom <= 0.0 {
            return L_MAX;
        }
        let px = u * d / denom;
        let py = v * (d + px * sin) / d;
        let (sx, sy) = (px + cx, py + cy);
        if sx < 0.0 || sy < 0.0 || sx > w || sy > h {
            L_MAX
        } else {
            img.sample_bilinear(sx, sy)
        }
    })
}

fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (w, h) = (img.width(), img.height());
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let pass = |src: &GrayImage, horizontal: bool| {
        GrayImage::from_fn(w, h, |x, y| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| {
                    let o = k as isize - radius;
                    if horizontal {
                        wk * src.get(clampi(x as isize + o, w), y)
                    } else {
                        wk * src.get(x, clampi(y as isize + o, h))
                    }
                })
                .sum()
        })
    };
    pass(&pass(img, true), false)
}

/// Perspective tilt, Gaussian blur, area downscale, brightness offset and additive
/// Gaussian noise, in that order. Steps at their identity setting are skipped.
pub fn perturb(image: &GrayImage, spec: &PerturbSpec) -> Result<GrayImage> {
    spec.validate()?;
    let mut img = image.clone();
    if spec.tilt_degrees > 0.0 {
        img = tilt(&img, spec.tilt_degrees);
    }
    if spec.blur_sigma > 0.0 {
        img = gaussian_blur(&img, spec.blur_sigma);
    }
    if spec.scale < 1.0 {
        let w = ((img.width() as f64 * spec.scale).round() as usize).max(1);
        let h = ((img.height() as f64 * spec.scale).round() as usize).max(1);
        img = img.resize_area(w, h);
    }
    if spec.brightness_offset != 0.0 || spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        for p in img.data_mut() {
            let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            *p = (*p + spec.brightness_offset + n).clamp(0.0, L_MAX);
        }
    }
    Ok(img)
}

/// Locate, read and decode at one binarization strictness.
fn scan_once(image: &GrayImage, spec: &QrSpec, alpha: f64) -> Option<Vec<u8>> {
    let loc = locate_finder(image, Some(spec.side())).ok()?;
    let matrix = extract_located(image, &loc, alpha, L_MAX / 2.0);
    decode_message(&matrix, spec).ok()
}

/// Whether `image` decodes to `expected`, trying each of [`SCAN_ALPHAS`] in turn.
pub fn scan_trial(image: &GrayImage, spec: &QrSpec, expected: &[u8]) -> bool {
    SCAN_ALPHAS.iter().any(|&alpha| scan_once(image, spec, alpha).as_deref() == Some(expected))
}

/// One image and the message it should decode to.
#[derive(Debug, Clone, Copy)]
pub struct ScanCase<'a> {
    pub image: &'a GrayImage,
    pub expected: &'a [u8],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: PerturbSpec,
    pub successes: usize,
    pub trials: usize,
}

impl CellResult {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub grid: Vec<PerturbSpec>,
    pub cells: Vec<CellResult>,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in cell `cell`.
pub fn trial_seed(master: u64, cell: usize, trial: usize) -> u64 {
    mix(mix(master ^ mix(cell as u64)) ^ trial as u64)
}

/// Success counts per grid cell. Trial `t` of a cell scans case `t mod cases.len()`
/// under the cell's spec with seed [`trial_seed`]; the spec's own seed is ignored.
pub fn robustness_report(
    cases: &[ScanCase],
    qr: &QrSpec,
    grid: &[PerturbSpec],
    trials: usize,
    master_seed: u64,
) -> Result<RobustnessReport> {
    if trials == 0 || cases.is_empty() {
        return Err(Error::Parameter("robustness needs at least one case and one trial".into()));
    }
    for spec in grid {
        spec.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..trials).map(move |t| (c, t))).collect();
    let outcomes: Vec<bool> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let case = &cases[t % cases.len()];
            let spec = grid[c].with_seed(trial_seed(master_seed, c, t));
            perturb(case.image, &spec).map(|img| scan_trial(&img, qr, case.expected)).unwrap_or(false)
        })
        .collect();
    let cells = grid
        .iter()
        .enumerate()
        .map(|(c, spec)| CellResult {
            spec: *spec,
            successes: outcomes[c * trials..(c + 1) * trials].iter().filter(|&&ok| ok).count(),
            trials,
        })
        .collect();
    Ok(RobustnessReport { schema_version: SCHEMA_VERSION, master_seed, grid: grid.to_vec(), cells })
}

impl RobustnessReport {
    pub fn successes(&self) -> usize {
        self.cells.iter().map(|c| c.successes).sum()
    }

    pub fn trials(&self) -> usize {
        self.cells.iter().map(|c| c.trials).sum()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.trials().max(1) as f64
    }

    /// Success rates with scale as rows and tilt as columns, other axes pooled.
    pub fn table(&self) -> String {
        let mut scales: Vec<f64> = Vec::new();
        let mut tilts: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !scales.contains(&c.spec.scale) {
                scales.push(c.spec.scale);
            }
            if !tilts.contains(&c.spec.tilt_degrees) {
                tilts.push(c.spec.tilt_degrees);
            }
        }
        scales.sort_by(f64::total_cmp);
        tilts.sort_by(f64::total_cmp);
        let mut out = String::from("scale ");
        for t in &tilts {
            let _ = write!(out, "| {:>6} ", format!("{t}°"));
        }
        out.push('\n');
        for s in &scales {
            let _ = write!(out, "{s:<5} ");
            for t in &tilts {
                let (ok, n) = self
                    .cells
                    .iter()
                    .filter(|c| c.spec.scale == *s && c.spec.tilt_degrees == *t)
                    .fold((0, 0), |(ok, n), c| (ok + c.successes, n + c.trials));
                let _ = write!(out, "| {:>5.1}% ", 100.0 * ok as f64 / n.max(1) as f64);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "overall {:.1}% ({}/{})", 100.0 * self.success_rate(), self.successes(), self.trials());
        out
    }
}
