//! Deterministic synthetic inputs: portraits, grid-aligned elliptical face masks and
//! smooth textured noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::idrs::{build_blueprint, face_mask_to_modules, reshuffle, Blueprint, RegionSets};
use crate::idse::{harmonize_markers, CodeLossPlan, LossConfig};
use crate::qr::QrSpec;
use crate::raster::{GrayImage, L_MAX};
use crate::scanner::{count_errors, extract_modules, GridGeometry};

/// Face ellipse in module coordinates (symbol space, quiet zone excluded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_row: f64,
    pub center_col: f64,
    pub radius_rows: f64,
    pub radius_cols: f64,
}

impl Ellipse {
    /// Default face placement for a version-5 grid, clear of finders and the alignment
    /// pattern.
    pub fn default_face(n: usize) -> Ellipse {
        let c = n as f64 / 2.0;
        Ellipse { center_row: c + 0.5, center_col: c, radius_rows: n as f64 * 0.23, radius_cols: n as f64 * 0.19 }
    }

    pub fn contains(&self, row: f64, col: f64) -> bool {
        let dr = (row - self.center_row) / self.radius_rows;
        let dc = (col - self.center_col) / self.radius_cols;
        dr * dr + dc * dc <= 1.0
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise in `[0, 1]`: random lattice values every `cell` pixels, smoothly
/// interpolated, summed over `octaves` halving the cell each time.
pub fn value_noise(width: usize, height: usize, cell: f64, octaves: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; width * height];
    let mut amp = 1.0;
    let mut total = 0.0;
    let mut cell = cell.max(1.0);
    for _ in 0..octaves.max(1) {
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        for y in 0..height {
            let fy = y as f64 / cell;
            let (iy, ty) = (fy.floor() as usize, smoothstep(fy.fract()));
            for x in 0..width {
                let fx = x as f64 / cell;
                let (ix, tx) = (fx.floor() as usize, smoothstep(fx.fract()));
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let top = l(ix, iy) * (1.0 - tx) + l(ix + 1, iy) * tx;
                let bottom = l(ix, iy + 1) * (1.0 - tx) + l(ix + 1, iy + 1) * tx;
                acc[y * width + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
        total += amp;
        amp *= 0.5;
        cell = (cell / 2.0).max(1.0);
    }
    acc.iter_mut().for_each(|v| *v /= total);
    acc
}

/// Textured noise image spanning roughly `[lo, hi]` gray levels, stretched so the
/// lattice extremes reach the ends of the range.
pub fn textured_noise(width: usize, height: usize, cell: f64, lo: f64, hi: f64, seed: u64) -> GrayImage {
    let raw = value_noise(width, height, cell, 3, seed);
    let (min, max) = raw.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (max - min).max(1e-12);
    GrayImage::from_vec(width, height, raw.iter().map(|v| lo + (hi - lo) * (v - min) / span).collect())
        .expect("sized buffer")
}

/// Mask image (0 / 255) covering exactly the modules whose centre lies inside `face`.
pub fn elliptical_mask(geom: &GridGeometry, face: &Ellipse) -> GrayImage {
    let side = geom.image_side();
    GrayImage::from_fn(side, side, |x, y| match geom.module_at(x, y) {
        Some(j) if face.contains((j / geom.n) as f64 + 0.5, (j % geom.n) as f64 + 0.5) => L_MAX,
        _ => 0.0,
    })
}

/// A grayscale synthetic portrait on the symbol grid.
///
/// The face is a light, softly shaded ellipse with darker-but-light features (eyes,
/// brows, mouth) so every face module reads light; hair and background are textured
/// mid-tones.
pub fn portrait(geom: &GridGeometry, face: &Ellipse, seed: u64) -> GrayImage {
    let side = geom.image_side();
    let a = geom.module_size as f64;
    let q = geom.origin_x as f64 / a;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let bg = value_noise(side, side, 4.0 * a, 2, seed);
    let (bg_lo, bg_hi) = (rng.random_range(60.0..75.0), rng.random_range(180.0..200.0));
    let skin = rng.random_range(168.0..174.0);
    let light_angle: f64 = rng.random_range(-1.0..1.0);
    let eye_dy = rng.random_range(-0.2..0.0);
    let mouth_w = rng.random_range(0.35..0.5);
    GrayImage::from_fn(side, side, |x, y| {
        // symbol-space module coordinates
        let row = y as f64 / a - q;
        let col = x as f64 / a - q;
        let dr = (row - face.center_row) / face.radius_rows;
        let dc = (col - face.center_col) / face.radius_cols;
        let r2 = dr * dr + dc * dc;
        let backdrop = bg_lo + (bg_hi - bg_lo) * bg[y * side + x];
        // skin runs a little past the mask so edge modules are not half hair
        if r2 > 1.2 * 1.2 {
            // hair cap around the upper half of the face
            let hair = dr < 0.2 && r2 < 1.5 * 1.5;
            return if hair { 58.0 + 30.0 * bg[y * side + x] } else { backdrop };
        }
        let shade = skin + 8.0 * (light_angle * dc - 0.6 * r2);
        let feature = |cr: f64, cc: f64, rr: f64, rc: f64| {
            let e = ((dr - cr) / rr).powi(2) + ((dc - cc) / rc).powi(2);
            (-2.0 * e).exp()
        };
        let eyes = feature(-0.2 + eye_dy, -0.4, 0.1, 0.18) + feature(-0.2 + eye_dy, 0.4, 0.1, 0.18);
        let brows = feature(-0.42 + eye_dy, -0.4, 0.05, 0.25) + feature(-0.42 + eye_dy, 0.4, 0.05, 0.25);
        let mouth = feature(0.45, 0.0, 0.07, mouth_w);
        let nose = feature(0.12, 0.0, 0.18, 0.06);
        (shade - 20.0 * eyes - 18.0 * brows - 18.0 * mouth - 8.0 * nose).clamp(0.0, L_MAX)
    })
}

/// `w·a + (1 − w)·b`, pixelwise.
pub fn blend(a: &GrayImage, b: &GrayImage, w: f64) -> GrayImage {
    GrayImage::from_fn(a.width(), a.height(), |x, y| w * a.get(x, y) + (1.0 - w) * b.get(x, y))
}

/// Weight of the blueprint in a corpus start image; the rest is textured noise.
pub const START_BLEND: f64 = 0.6;

/// Accepted range of simulated module errors in a corpus start image.
pub const START_ERRORS: std::ops::RangeInclusive<usize> = 15..=60;

/// One synthetic enhancement case: a portrait, its reshuffled blueprint and a start image
/// standing in for a generated picture.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub seed: u64,
    pub source: GrayImage,
    pub face_mask: GrayImage,
    pub message: Vec<u8>,
    pub blueprint: Blueprint,
    /// `START_BLEND · blueprint + (1 − START_BLEND) · noise`, markers harmonized, 8-bit.
    pub start: GrayImage,
    /// Simulated-decoder errors of `start` against the target.
    pub initial_errors: usize,
}

/// Builds corpus case `seed` on a version-5-H grid with `module_size` pixels per module.
///
/// The noise seed is redrawn (up to 32 times) until the start image has an error count in
/// [`START_ERRORS`].
pub fn corpus_item(seed: u64, module_size: usize, config: &LossConfig) -> Result<CorpusItem> {
    let spec = QrSpec::default();
    let geom = GridGeometry::for_spec(&spec, module_size)?;
    let n = spec.side();
    let face = Ellipse::default_face(n);
    let source = portrait(&geom, &face, seed);
    let face_mask = elliptical_mask(&geom, &face);
    let regions = RegionSets::new(&spec, face_mask_to_modules(&face_mask, &geom, 0.5)?)?;
    let extracted = extract_modules(&source, &geom, config.tau)?;
    let message = format!("https://example.org/p/{seed:04}").into_bytes();
    let (target, _) = reshuffle(&extracted, &message, &regions, &spec, Default::default())?;
    let blueprint = build_blueprint(&source, &target, &regions, &geom, 1.0 / 3.0)?;
    let plan = CodeLossPlan::new(&blueprint, config)?;
    let side = geom.image_side();
    let cell = 1.5 * module_size as f64;
    for attempt in 0..32u64 {
        let noise = textured_noise(side, side, cell, 0.0, L_MAX, (seed << 8) + attempt + 1000);
        let mixed = blend(&blueprint.image, &noise, START_BLEND).quantized();
        let start = harmonize_markers(&mixed, &geom, &target, &regions.markers, config.tau, config.lambda)?.quantized();
        let z: Vec<f64> = start.data().iter().map(|v| v / L_MAX).collect();
        let initial_errors = count_errors(&plan.readout(&z)?, &target, &regions, &spec)?.e;
        if START_ERRORS.contains(&initial_errors) {
            return Ok(CorpusItem { seed, source, face_mask, message, blueprint, start, initial_errors });
        }
    }
    Err(Error::Parameter(format!("corpus case {seed}: no start image within {START_ERRORS:?} errors")))
}
