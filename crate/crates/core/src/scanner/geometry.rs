use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::{ModuleMatrix, QrSpec};
use crate::raster::{GrayImage, L_MAX};

/// Smallest module size the samplers accept.
pub const MIN_MODULE_PX: usize = 3;

/// Axis-aligned module grid: module `(row, col)` covers the `a×a` pixel patch starting
/// at `(origin_x + col·a, origin_y + row·a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin_x: usize,
    pub origin_y: usize,
    pub module_size: usize,
    pub n: usize,
}

impl GridGeometry {
    pub fn new(origin_x: usize, origin_y: usize, module_size: usize, n: usize) -> Result<Self> {
        if module_size < MIN_MODULE_PX {
            return Err(Error::Parameter(format!(
                "module size {module_size} px is below the {MIN_MODULE_PX} px minimum"
            )));
        }
        Ok(GridGeometry { origin_x, origin_y, module_size, n })
    }

    /// Grid of `spec` at `module_size` px, surrounded by its quiet zone.
    pub fn for_spec(spec: &QrSpec, module_size: usize) -> Result<Self> {
        let q = spec.quiet_zone * module_size;
        GridGeometry::new(q, q, module_size, spec.side())
    }

    /// Module size for an image of side `width`: `round(width / (n + 2·quiet))`.
    pub fn module_size_for_width(width: usize, spec: &QrSpec) -> usize {
        let modules = spec.side() + 2 * spec.quiet_zone;
        ((width as f64 / modules as f64).round() as usize).max(1)
    }

    /// Side length of the square image holding the symbol and its quiet zone.
    pub fn image_side(&self) -> usize {
        2 * self.origin_x.max(self.origin_y) + self.n * self.module_size
    }

    pub fn fits(&self, img: &GrayImage) -> bool {
        self.origin_x + self.n * self.module_size <= img.width()
            && self.origin_y + self.n * self.module_size <= img.height()
    }

    pub fn check(&self, img: &GrayImage) -> Result<()> {
        if self.fits(img) {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "grid of {} modules at {} px does not fit a {}x{} image",
                self.n,
                self.module_size,
                img.width(),
                img.height()
            )))
        }
    }

    /// Top-left pixel of module `index`.
    #[inline]
    pub fn module_origin(&self, index: usize) -> (usize, usize) {
        let (r, c) = (index / self.n, index % self.n);
        (self.origin_x + c * self.module_size, self.origin_y + r * self.module_size)
    }

    /// Module index containing pixel `(x, y)`, if any.
    pub fn module_at(&self, x: usize, y: usize) -> Option<usize> {
        if x < self.origin_x || y < self.origin_y {
            return None;
        }
        let c = (x - self.origin_x) / self.module_size;
        let r = (y - self.origin_y) / self.module_size;
        (c < self.n && r < self.n).then_some(r * self.n + c)
    }

    /// Visit the pixels of module `index` as `(x, y, k)` with `k` the row-major offset
    /// inside the `a×a` patch.
    #[inline]
    pub fn for_each_pixel(&self, index: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (x0, y0) = self.module_origin(index);
        let a = self.module_size;
        for dy in 0..a {
            for dx in 0..a {
                f(x0 + dx, y0 + dy, dy * a + dx);
            }
        }
    }
}

/// Hard rendering of a matrix: modules at 0 or 255, quiet zone white.
pub fn render(matrix: &ModuleMatrix, geom: &GridGeometry) -> GrayImage {
    let side = geom.image_side();
    let mut img = GrayImage::new(side, side, L_MAX);
    for j in 0..matrix.n() * matrix.n() {
        let v = matrix.at(j) as f64 * L_MAX;
        geom.for_each_pixel(j, |x, y, _| img.set(x, y, v));
    }
    img
}
