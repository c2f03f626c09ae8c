use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::{function_pattern_map, QrSpec};
use crate::raster::GrayImage;
use crate::scanner::GridGeometry;

/// Module index sets: the face region and the function (marker) patterns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionSets {
    pub n: usize,
    pub face: BTreeSet<usize>,
    pub markers: BTreeSet<usize>,
}

impl RegionSets {
    /// Regions for `spec` with the given face set; markers are the standard function
    /// patterns.
    pub fn new(spec: &QrSpec, face: BTreeSet<usize>) -> Result<Self> {
        let n = spec.side();
        if let Some(&bad) = face.iter().find(|&&j| j >= n * n) {
            return Err(Error::Parameter(format!("face module {bad} outside {n}x{n} grid")));
        }
        Ok(RegionSets { n, face, markers: function_pattern_map(spec) })
    }

    pub fn face_flags(&self) -> Vec<bool> {
        let mut v = vec![false; self.n * self.n];
        self.face.iter().for_each(|&j| v[j] = true);
        v
    }

    pub fn marker_flags(&self) -> Vec<bool> {
        let mut v = vec![false; self.n * self.n];
        self.markers.iter().for_each(|&j| v[j] = true);
        v
    }

    pub fn is_face(&self, j: usize) -> bool {
        self.face.contains(&j)
    }
}

/// Face modules: `j` belongs to the face iff the mean of the mask over the module patch
/// is at least `coverage` (mask scaled to `[0, 1]`).
pub fn face_mask_to_modules(mask: &GrayImage, geom: &GridGeometry, coverage: f64) -> Result<BTreeSet<usize>> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Parameter(format!("coverage {coverage} outside (0, 1]")));
    }
    let side = geom.image_side();
    if mask.width() != side || mask.height() != side {
        return Err(Error::Parameter(format!(
            "mask is {}x{}, grid expects {side}x{side}",
            mask.width(),
            mask.height()
        )));
    }
    let area = (geom.module_size * geom.module_size) as f64;
    let mut face = BTreeSet::new();
    for j in 0..geom.n * geom.n {
        let mut acc = 0.0;
        geom.for_each_pixel(j, |x, y, _| acc += (mask.get(x, y) / 255.0).clamp(0.0, 1.0));
        // tolerance for 8-bit rounding of exactly-full modules
        if acc / area >= coverage - 1e-9 {
            face.insert(j);
        }
    }
    Ok(face)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridGeometry {
        GridGeometry::for_spec(&QrSpec::default(), 4).unwrap()
    }

    #[test]
    fn empty_and_full_masks() {
        let g = grid();
        let side = g.image_side();
        assert!(face_mask_to_modules(&GrayImage::new(side, side, 0.0), &g, 1.0).unwrap().is_empty());
        assert_eq!(face_mask_to_modules(&GrayImage::new(side, side, 255.0), &g, 1.0).unwrap().len(), 37 * 37);
    }

    #[test]
    fn grid_aligned_rectangle() {
        let g = grid();
        let side = g.image_side();
        let mask = GrayImage::from_fn(side, side, |x, y| match g.module_at(x, y) {
            Some(j) if (10..=20).contains(&(j / 37)) && (12..=24).contains(&(j % 37)) => 255.0,
            _ => 0.0,
        });
        let face = face_mask_to_modules(&mask, &g, 1.0).unwrap();
        let expected: BTreeSet<usize> =
            (10..=20).flat_map(|r| (12..=24).map(move |c| r * 37 + c)).collect();
        assert_eq!(face, expected);
    }

    #[test]
    fn partial_coverage_threshold() {
        let g = grid();
        let side = g.image_side();
        // left half of module (0, 5) only
        let (x0, y0) = g.module_origin(5);
        let mask = GrayImage::from_fn(side, side, |x, y| {
            if (x0..x0 + 2).contains(&x) && (y0..y0 + 4).contains(&y) { 255.0 } else { 0.0 }
        });
        assert!(face_mask_to_modules(&mask, &g, 1.0).unwrap().is_empty());
        assert_eq!(face_mask_to_modules(&mask, &g, 0.5).unwrap(), BTreeSet::from([5]));
    }

    #[test]
    fn errors() {
        let g = grid();
        assert!(face_mask_to_modules(&GrayImage::new(10, 10, 0.0), &g, 1.0).is_err());
        assert!(face_mask_to_modules(&GrayImage::new(180, 180, 0.0), &g, 0.0).is_err());
    }
}
