use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::qr::ModuleMatrix;
use crate::raster::{GrayImage, L_MAX};
use crate::scanner::GridGeometry;

/// Push marker modules past the margin `τ(1±λ)`: light modules to at least `τ(1+λ)`,
/// dark modules to at most `τ(1-λ)`. Other pixels are untouched.
pub fn harmonize_markers(
    image: &GrayImage,
    geom: &GridGeometry,
    matrix: &ModuleMatrix,
    markers: &BTreeSet<usize>,
    tau: f64,
    lambda: f64,
) -> Result<GrayImage> {
    geom.check(image)?;
    if matrix.n() != geom.n {
        return Err(Error::Parameter(format!("matrix side {} vs grid side {}", matrix.n(), geom.n)));
    }
    let hi = (tau * (1.0 + lambda)).clamp(0.0, L_MAX);
    let lo = (tau * (1.0 - lambda)).clamp(0.0, L_MAX);
    let mut out = image.clone();
    for &k in markers {
        let light = matrix.at(k) == 1;
        geom.for_each_pixel(k, |x, y, _| {
            let p = out.get(x, y);
            let v = if light { p.max(hi) } else { p.min(lo) };
            out.set(x, y, v.clamp(0.0, L_MAX));
        });
    }
    Ok(out)
}
