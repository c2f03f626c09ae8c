//! Finder-pattern location and perspective grid recovery.
//!
//! Rows are scanned for dark/light/dark/light/dark runs in 1:1:3:1:1 proportion, each
//! hit is cross-checked along the column through its center and re-checked along the
//! row, and the surviving centers are clustered. The best right-angle triple fixes
//! orientation and an affine grid; for versions with an alignment pattern, the
//! bottom-right alignment center is searched near its predicted position and the four
//! correspondences define a homography.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::binarize::{thresholds, Ternary};
use super::geometry::GridGeometry;
use super::sampling::function_mask_for;
use crate::error::{Error, Result};
use crate::qr::layout::alignment_positions;
use crate::qr::ModuleMatrix;
use crate::raster::{GrayImage, L_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    fn dist(self, o: Point) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt()
    }
}

/// Rotation of the symbol in the image, clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    R0,
    R90,
    R180,
    R270,
}

/// Projective map from module coordinates `(col, row)` to pixel coordinates. Module
/// `(r, c)` covers `[c, c+1] × [r, r+1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn affine(origin: Point, ex: Point, ey: Point) -> Self {
        Homography(Matrix3::new(ex.x, ey.x, origin.x, ex.y, ey.y, origin.y, 0.0, 0.0, 1.0))
    }

    /// Exact fit through four correspondences.
    pub fn from_points(src: [Point; 4], dst: [Point; 4]) -> Option<Self> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (u, v) = (src[i].x, src[i].y);
            let (x, y) = (dst[i].x, dst[i].y);
            let r = 2 * i;
            a.row_mut(r).copy_from_slice(&[u, v, 1.0, 0.0, 0.0, 0.0, -u * x, -v * x]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, u, v, 1.0, -u * y, -v * y]);
            b[r] = x;
            b[r + 1] = y;
        }
        let h = a.lu().solve(&b)?;
        Some(Homography(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0)))
    }

    #[inline]
    pub fn map(&self, u: f64, v: f64) -> Point {
        let p = self.0 * Vector3::new(u, v, 1.0);
        Point { x: p.x / p.z, y: p.y / p.z }
    }
}

/// A located symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    /// Axis-aligned grid in the canonically oriented frame.
    pub geometry: GridGeometry,
    pub orientation: Orientation,
    /// Module-to-pixel map in the image as given.
    pub transform: Homography,
    /// Top-left, top-right and bottom-left finder centers, in pixels.
    pub finders: [Point; 3],
    pub alignment: Option<Point>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    center: Point,
    unit_x: f64,
    unit_y: f64,
    hits: usize,
}

struct Binary<'a> {
    img: &'a GrayImage,
    w: i32,
    h: i32,
}

impl Binary<'_> {
    #[inline]
    fn dark(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && x < self.w && y < self.h && self.img.get(x as usize, y as usize) < L_MAX / 2.0
    }
}

fn ratio_ok(counts: &[usize; 5]) -> Option<f64> {
    let total: usize = counts.iter().sum();
    if total < 7 || counts.iter().any(|&c| c == 0) {
        return None;
    }
    let unit = total as f64 / 7.0;
    let tol = unit / 2.0;
    let ok = [1.0, 1.0, 3.0, 1.0, 1.0]
        .iter()
        .zip(counts)
        .all(|(&r, &c)| (c as f64 - r * unit).abs() < r * tol);
    ok.then_some(unit)
}

/// Runs around `(x, y)` along `(dx, dy)`; returns the center coordinate along the axis
/// and the unit, when the 1:1:3:1:1 check passes.
fn cross_check(bin: &Binary, x: i32, y: i32, dx: i32, dy: i32, max_run: usize) -> Option<(f64, f64)> {
    if !bin.dark(x, y) {
        return None;
    }
    let mut counts = [0usize; 5];
    // backward: center dark, light, dark
    let (mut px, mut py) = (x, y);
    for (state, want_dark) in [(2usize, true), (1, false), (0, true)] {
        while bin.dark(px, py) == want_dark && counts[state] <= max_run {
            if px < 0 || py < 0 || px >= bin.w || py >= bin.h {
                break;
            }
            counts[state] += 1;
            px -= dx;
            py -= dy;
        }
        if counts[state] == 0 || counts[state] > max_run {
            return None;
        }
    }
    counts[2] -= 1; // the start pixel is counted again below
    let (mut px, mut py) = (x, y);
    let mut end = 0i32;
    for (state, want_dark) in [(2usize, true), (3, false), (4, true)] {
        while bin.dark(px, py) == want_dark && counts[state] <= 3 * max_run {
            if px < 0 || py < 0 || px >= bin.w || py >= bin.h {
                break;
            }
            counts[state] += 1;
            px += dx;
            py += dy;
        }
        if counts[state] == 0 {
            return None;
        }
        end = if dx != 0 { px } else { py };
    }
    let unit = ratio_ok(&counts)?;
    let center = end as f64 - counts[4] as f64 - counts[3] as f64 - counts[2] as f64 / 2.0;
    Some((center, unit))
}

fn scan_candidates(bin: &Binary) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    let max_run = (bin.w.max(bin.h) / 4).max(8) as usize;
    for y in 0..bin.h {
        // run-length encode the row
        let mut runs: Vec<(i32, usize, bool)> = Vec::new();
        let mut x = 0;
        while x < bin.w {
            let d = bin.dark(x, y);
            let start = x;
            while x < bin.w && bin.dark(x, y) == d {
                x += 1;
            }
            runs.push((start, (x - start) as usize, d));
        }
        for i in 0..runs.len().saturating_sub(4) {
            if !runs[i].2 {
                continue;
            }
            let counts = [runs[i].1, runs[i + 1].1, runs[i + 2].1, runs[i + 3].1, runs[i + 4].1];
            if ratio_ok(&counts).is_none() {
                continue;
            }
            let cx = runs[i + 2].0 + runs[i + 2].1 as i32 / 2;
            let Some((cy, unit_y)) = cross_check(bin, cx, y, 0, 1, max_run) else { continue };
            let Some((cx2, unit_x)) = cross_check(bin, cx, cy.round() as i32, 1, 0, max_run) else {
                continue;
            };
            let center = Point { x: cx2, y: cy };
            let unit = (unit_x + unit_y) / 2.0;
            if let Some(c) = out.iter_mut().find(|c| c.center.dist(center) < 2.0 * unit.max((c.unit_x + c.unit_y) / 2.0)) {
                let k = c.hits as f64;
                c.center = Point { x: (c.center.x * k + center.x) / (k + 1.0), y: (c.center.y * k + center.y) / (k + 1.0) };
                c.unit_x = (c.unit_x * k + unit_x) / (k + 1.0);
                c.unit_y = (c.unit_y * k + unit_y) / (k + 1.0);
                c.hits += 1;
            } else {
                out.push(Candidate { center, unit_x, unit_y, hits: 1 });
            }
        }
    }
    out
}

/// Module pitch along a unit direction, from a finder's horizontal/vertical units.
fn unit_along(c: &Candidate, dx: f64, dy: f64) -> f64 {
    let len = (dx * dx + dy * dy).sqrt().max(1e-9);
    let (ux, uy) = (dx / len, dy / len);
    ((ux * c.unit_x).powi(2) + (uy * c.unit_y).powi(2)).sqrt()
}

fn module_distance(a: &Candidate, b: &Candidate) -> f64 {
    let (dx, dy) = (b.center.x - a.center.x, b.center.y - a.center.y);
    let unit = (unit_along(a, dx, dy) + unit_along(b, dx, dy)) / 2.0;
    a.center.dist(b.center) / unit
}

/// Best (top-left, top-right, bottom-left) triple and its score (lower is better).
fn pick_triple(cands: &[Candidate]) -> Option<(Candidate, Candidate, Candidate)> {
    let mut best: Option<(f64, (Candidate, Candidate, Candidate))> = None;
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            for k in j + 1..cands.len() {
                let tri = [cands[i], cands[j], cands[k]];
                // corner is opposite the longest side
                let sides = [tri[1].center.dist(tri[2].center), tri[0].center.dist(tri[2].center), tri[0].center.dist(tri[1].center)];
                let corner = (0..3).max_by(|&a, &b| sides[a].total_cmp(&sides[b])).unwrap();
                let tl = tri[corner];
                let (mut a, mut b) = (tri[(corner + 1) % 3], tri[(corner + 2) % 3]);
                let cross = (a.center.x - tl.center.x) * (b.center.y - tl.center.y)
                    - (a.center.y - tl.center.y) * (b.center.x - tl.center.x);
                if cross < 0.0 {
                    std::mem::swap(&mut a, &mut b);
                }
                let la = module_distance(&tl, &a);
                let lb = module_distance(&tl, &b);
                let hyp = module_distance(&a, &b);
                let mean = (la + lb) / 2.0;
                if mean < 7.0 {
                    continue;
                }
                let score = (la - lb).abs() / mean + (hyp / mean - std::f64::consts::SQRT_2).abs()
                    - 0.01 * (tl.hits + a.hits + b.hits).min(30) as f64;
                if (la - lb).abs() / mean > 0.25 || (hyp / mean - std::f64::consts::SQRT_2).abs() > 0.3 {
                    continue;
                }
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, (tl, a, b)));
                }
            }
        }
    }
    best.map(|(_, t)| t)
}

fn nearest_side(estimate: f64) -> usize {
    let v = ((estimate - 17.0) / 4.0).round().clamp(1.0, 40.0);
    4 * v as usize + 17
}

/// Sub-pixel center of a square pattern of `2·half + 1` modules around `c`: the offset
/// within one pixel (1/8 px steps) maximizing the gray-level correlation with the ideal
/// pattern, sampled 3×3 per module on the local axes `ex`, `ey`.
fn refine_center(img: &GrayImage, c: Point, ex: Point, ey: Point, half: i32, dark: impl Fn(i32, i32) -> bool) -> Point {
    let mut taps = Vec::new();
    for j in -half..=half {
        for i in -half..=half {
            let sign = if dark(i, j) { -1.0 } else { 1.0 };
            for sj in [-1.0 / 3.0, 0.0, 1.0 / 3.0] {
                for si in [-1.0 / 3.0, 0.0, 1.0 / 3.0] {
                    let (u, v) = (i as f64 + si, j as f64 + sj);
                    taps.push((u * ex.x + v * ey.x, u * ex.y + v * ey.y, sign));
                }
            }
        }
    }
    let mut best = (f64::MIN, c);
    for oy in -8..=8 {
        for ox in -8..=8 {
            let p = Point { x: c.x + ox as f64 / 8.0, y: c.y + oy as f64 / 8.0 };
            let score: f64 = taps.iter().map(|&(dx, dy, sign)| sign * img.sample_bilinear(p.x + dx, p.y + dy)).sum();
            // ties resolve toward the unrefined center
            if score > best.0 + 1e-9 || (score >= best.0 - 1e-9 && p.dist(c) < best.1.dist(c)) {
                best = (score, p);
            }
        }
    }
    best.1
}

fn alignment_dark(i: i32, j: i32) -> bool {
    i.abs().max(j.abs()) != 1
}

/// Search for the alignment pattern centered near module coordinate `(m, m)`.
fn find_alignment(bin: &Binary, affine: &Homography, m: f64) -> Option<Point> {
    let predicted = affine.map(m, m);
    let o = affine.map(0.0, 0.0);
    let ex = affine.map(1.0, 0.0);
    let ey = affine.map(0.0, 1.0);
    let (ex, ey) = (Point { x: ex.x - o.x, y: ex.y - o.y }, Point { x: ey.x - o.x, y: ey.y - o.y });
    let pitch = ((ex.x.hypot(ex.y)) + (ey.x.hypot(ey.y))) / 2.0;
    let radius = (4.0 * pitch).ceil() as i32;
    let mut scores = Vec::new();
    for oy in -radius..=radius {
        for ox in -radius..=radius {
            let c = Point { x: predicted.x + ox as f64, y: predicted.y + oy as f64 };
            let mut score = 0;
            for dv in -2..=2i32 {
                for du in -2..=2i32 {
                    let ring = du.abs().max(dv.abs());
                    let want_dark = ring != 1;
                    let px = c.x + du as f64 * ex.x + dv as f64 * ey.x;
                    let py = c.y + du as f64 * ex.y + dv as f64 * ey.y;
                    if bin.dark(px.floor() as i32, py.floor() as i32) == want_dark {
                        score += 1;
                    }
                }
            }
            scores.push((score, c));
        }
    }
    let top = scores.iter().map(|&(s, _)| s).max()?;
    if top < 22 {
        return None;
    }
    // centroid of the best-scoring plateau nearest the prediction
    let seed = scores
        .iter()
        .filter(|&&(s, _)| s == top)
        .min_by(|a, b| a.1.dist(predicted).total_cmp(&b.1.dist(predicted)))?
        .1;
    let plateau: Vec<Point> =
        scores.iter().filter(|&&(s, c)| s == top && c.dist(seed) <= pitch).map(|&(_, c)| c).collect();
    let k = plateau.len() as f64;
    let coarse = Point { x: plateau.iter().map(|p| p.x).sum::<f64>() / k, y: plateau.iter().map(|p| p.y).sum::<f64>() / k };
    Some(refine_center(bin.img, coarse, ex, ey, 2, alignment_dark))
}

fn derotate(p: Point, orientation: Orientation, width: f64, height: f64) -> Point {
    match orientation {
        Orientation::R0 => p,
        Orientation::R90 => Point { x: p.y, y: width - p.x },
        Orientation::R180 => Point { x: width - p.x, y: height - p.y },
        Orientation::R270 => Point { x: height - p.y, y: p.x },
    }
}

/// Smallest mean module pitch, in pixels, the locator accepts.
pub const MIN_MODULE_PX: f64 = 3.0;

/// Locate a symbol in a binary (or grayscale) image; dark means below `L/2`.
///
/// `side_hint` fixes the module count per side; otherwise it is estimated from the
/// finder spacing.
pub fn locate_finder(img: &GrayImage, side_hint: Option<usize>) -> Result<Location> {
    let bin = Binary { img, w: img.width() as i32, h: img.height() as i32 };
    let mut cands = scan_candidates(&bin);
    cands.retain(|c| c.hits >= 2);
    cands.sort_by(|a, b| b.hits.cmp(&a.hits));
    cands.truncate(12);
    if cands.len() < 3 {
        return Err(Error::Location(format!("found {} finder candidates, need 3", cands.len())));
    }
    let (tl, tr, bl) = pick_triple(&cands).ok_or_else(|| Error::Location("no consistent finder triple".into()))?;

    let n = match side_hint {
        Some(n) => n,
        None => nearest_side((module_distance(&tl, &tr) + module_distance(&tl, &bl)) / 2.0 + 7.0),
    };
    let span = (n - 7) as f64;
    let ex = Point { x: (tr.center.x - tl.center.x) / span, y: (tr.center.y - tl.center.y) / span };
    let ey = Point { x: (bl.center.x - tl.center.x) / span, y: (bl.center.y - tl.center.y) / span };
    let origin = Point { x: tl.center.x - 3.5 * (ex.x + ey.x), y: tl.center.y - 3.5 * (ex.y + ey.y) };
    let affine = Homography::affine(origin, ex, ey);

    let version = ((n - 17) / 4) as u8;
    let mut transform = affine;
    let mut alignment = None;
    if alignment_positions(version).len() >= 2 {
        let m = n as f64 - 6.5;
        if let Some(ap) = find_alignment(&bin, &affine, m) {
            let src = [
                Point { x: 3.5, y: 3.5 },
                Point { x: n as f64 - 3.5, y: 3.5 },
                Point { x: 3.5, y: n as f64 - 3.5 },
                Point { x: m, y: m },
            ];
            if let Some(h) = Homography::from_points(src, [tl.center, tr.center, bl.center, ap]) {
                transform = h;
                alignment = Some(ap);
            }
        }
    }

    let orientation = {
        let (dx, dy) = (ex.x, ex.y);
        if dx.abs() >= dy.abs() {
            if dx > 0.0 { Orientation::R0 } else { Orientation::R180 }
        } else if dy > 0.0 {
            Orientation::R90
        } else {
            Orientation::R270
        }
    };
    let pitch = (ex.x.hypot(ex.y) + ey.x.hypot(ey.y)) / 2.0;
    if pitch < MIN_MODULE_PX {
        return Err(Error::Location(format!("module pitch {pitch:.2} px below the {MIN_MODULE_PX} px floor")));
    }
    let corner = derotate(transform.map(0.0, 0.0), orientation, img.width() as f64, img.height() as f64);
    let other = derotate(transform.map(n as f64, n as f64), orientation, img.width() as f64, img.height() as f64);
    let origin_x = corner.x.min(other.x).round().max(0.0) as usize;
    let origin_y = corner.y.min(other.y).round().max(0.0) as usize;
    let geometry = GridGeometry { origin_x, origin_y, module_size: pitch.round().max(1.0) as usize, n };
    Ok(Location { geometry, orientation, transform, finders: [tl.center, tr.center, bl.center], alignment })
}

/// Spread of the readout weights around each module center, in modules.
pub const READOUT_SIGMA: f64 = 1.5 / 16.0;

/// Module readout through a located transform.
///
/// Each module is sampled on a 7×7 lattice weighted by a Gaussian of
/// [`READOUT_SIGMA`] about its center. Samples are classified with the dual thresholds
/// for `alpha` and the module takes the weighted majority of its determinate samples;
/// a module with none falls back to the weighted mean against `tau`.
pub fn extract_located(gray: &GrayImage, loc: &Location, alpha: f64, tau: f64) -> ModuleMatrix {
    const K: usize = 7;
    let n = loc.geometry.n;
    let (tb, tw) = thresholds(alpha);
    let offsets: Vec<f64> = (0..K).map(|i| (i as f64 + 0.5) / K as f64).collect();
    let weight: Vec<f64> = offsets
        .iter()
        .map(|&o| (-(o - 0.5).powi(2) / (2.0 * READOUT_SIGMA * READOUT_SIGMA)).exp())
        .collect();
    let mut values = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let (mut white, mut black, mut sum, mut total) = (0.0, 0.0, 0.0, 0.0);
            for (i, &oy) in offsets.iter().enumerate() {
                for (j, &ox) in offsets.iter().enumerate() {
                    let w = weight[i] * weight[j];
                    let p = loc.transform.map(c as f64 + ox, r as f64 + oy);
                    let s = gray.sample_bilinear(p.x, p.y);
                    sum += w * s;
                    total += w;
                    let t = if alpha == 0.0 {
                        if s >= tw { Ternary::White } else { Ternary::Black }
                    } else if s > tw {
                        Ternary::White
                    } else if s < tb {
                        Ternary::Black
                    } else {
                        Ternary::Indeterminate
                    };
                    match t {
                        Ternary::White => white += w,
                        Ternary::Black => black += w,
                        Ternary::Indeterminate => {}
                    }
                }
            }
            let bit = if white != black { white > black } else { sum / total >= tau };
            values.push(bit as u8);
        }
    }
    ModuleMatrix::from_parts(n, values, function_mask_for(n)).expect("n×n values")
}
