//! Module readout: hard mean-threshold extraction and Gaussian soft sampling.

use super::geometry::GridGeometry;
use crate::error::Result;
use crate::qr::{Layout, ModuleMatrix};
use crate::raster::GrayImage;

/// Module side, in pixels, at which kernel widths are specified. Kernel widths scale
/// linearly with the actual module size.
pub const SIGMA_REFERENCE_MODULE_PX: f64 = 16.0;

/// Kernel width in pixels for `sigma` on a grid of `module_size` px.
pub fn sigma_to_pixels(sigma: f64, module_size: usize) -> f64 {
    sigma * module_size as f64 / SIGMA_REFERENCE_MODULE_PX
}

/// Normalized `a×a` Gaussian centered on the module, truncated at three standard
/// deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub size: usize,
    pub weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(size: usize, sigma_px: f64) -> Self {
        assert!(sigma_px > 0.0, "kernel sigma must be positive");
        let c = (size as f64 - 1.0) / 2.0;
        let cutoff = (3.0 * sigma_px).powi(2);
        let mut weights = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
                // the innermost pixels always survive truncation
                let keep = d2 <= cutoff || d2 <= 0.5;
                weights.push(if keep { (-d2 / (2.0 * sigma_px * sigma_px)).exp() } else { 0.0 });
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        GaussianKernel { size, weights }
    }

    /// Kernel for `sigma` given in reference-module units.
    pub fn for_grid(geom: &GridGeometry, sigma: f64) -> Self {
        GaussianKernel::new(geom.module_size, sigma_to_pixels(sigma, geom.module_size))
    }

    /// Weighted sum over the patch of module `index`.
    #[inline]
    pub fn apply(&self, img: &GrayImage, geom: &GridGeometry, index: usize) -> f64 {
        let mut acc = 0.0;
        geom.for_each_pixel(index, |x, y, k| acc += self.weights[k] * img.get(x, y));
        acc
    }
}

/// Mean of the module patch.
pub fn module_mean(img: &GrayImage, geom: &GridGeometry, index: usize) -> f64 {
    let mut acc = 0.0;
    geom.for_each_pixel(index, |x, y, _| acc += img.get(x, y));
    acc / (geom.module_size * geom.module_size) as f64
}

/// Function-module annotation for a side length, empty when `n` is not a QR side.
pub(crate) fn function_mask_for(n: usize) -> Vec<bool> {
    if n >= 21 && (n - 17) % 4 == 0 && n <= 177 {
        Layout::new(((n - 17) / 4) as u8).function_mask()
    } else {
        vec![false; n * n]
    }
}

/// `E_j = 0` if the patch mean is below `tau`, else 1.
pub fn extract_modules(gray: &GrayImage, geom: &GridGeometry, tau: f64) -> Result<ModuleMatrix> {
    geom.check(gray)?;
    let n = geom.n;
    let values = (0..n * n).map(|j| (module_mean(gray, geom, j) >= tau) as u8).collect();
    ModuleMatrix::from_parts(n, values, function_mask_for(n))
}

/// Gaussian-weighted module values, row-major n×n.
pub fn gaussian_sample(gray: &GrayImage, geom: &GridGeometry, sigma: f64) -> Result<Vec<f64>> {
    geom.check(gray)?;
    let kernel = GaussianKernel::for_grid(geom, sigma);
    Ok((0..geom.n * geom.n).map(|j| kernel.apply(gray, geom, j)).collect())
}

/// Simulated decoder: module bits from Gaussian samples, with a per-module kernel.
pub fn sample_modules(
    gray: &GrayImage,
    geom: &GridGeometry,
    kernels: &[&GaussianKernel],
    tau: f64,
) -> Result<ModuleMatrix> {
    geom.check(gray)?;
    let n = geom.n;
    let values = (0..n * n).map(|j| (kernels[j].apply(gray, geom, j) >= tau) as u8).collect();
    ModuleMatrix::from_parts(n, values, function_mask_for(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::{build_matrix, QrSpec};
    use crate::scanner::geometry::render;

    fn one_module(a: usize, f: impl FnMut(usize, usize) -> f64) -> (GrayImage, GridGeometry) {
        (GrayImage::from_fn(a, a, f), GridGeometry::new(0, 0, a, 1).unwrap())
    }

    #[test]
    fn threshold_convention() {
        for (v, bit) in [(127.0, 0), (128.0, 1)] {
            let (img, g) = one_module(9, |_, _| v);
            assert_eq!(extract_modules(&img, &g, 128.0).unwrap().at(0), bit);
        }
        // half black, half white pixels: mean 127.5 < 128
        let (img, g) = one_module(8, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 255.0 });
        assert_eq!(module_mean(&img, &g, 0), 127.5);
        assert_eq!(extract_modules(&img, &g, 128.0).unwrap().at(0), 0);
    }

    #[test]
    fn clean_rendering_extracts_exactly() {
        let spec = QrSpec::default();
        let m = build_matrix(b"extract me", &spec).unwrap();
        for a in [3, 4, 7, 16] {
            let g = GridGeometry::for_spec(&spec, a).unwrap();
            assert_eq!(extract_modules(&render(&m, &g), &g, 128.0).unwrap(), m);
        }
    }

    #[test]
    fn uniform_module_samples_to_its_value() {
        for sigma in [0.3, 1.5, 3.0, 50.0] {
            let (img, g) = one_module(16, |_, _| 93.25);
            assert!((gaussian_sample(&img, &g, sigma).unwrap()[0] - 93.25).abs() < 1e-9);
        }
    }

    #[test]
    fn wide_kernel_tends_to_patch_mean() {
        let (img, g) = one_module(12, |x, y| ((x * 31 + y * 17) % 256) as f64);
        let wide = gaussian_sample(&img, &g, 1e4).unwrap()[0];
        assert!((wide - module_mean(&img, &g, 0)).abs() < 1e-3);
    }

    #[test]
    fn narrow_kernel_darker_on_dark_center() {
        // dark 6x6 center, light border
        let (img, g) = one_module(16, |x, y| if (5..11).contains(&x) && (5..11).contains(&y) { 0.0 } else { 255.0 });
        let narrow = gaussian_sample(&img, &g, 1.5).unwrap()[0];
        let wide = gaussian_sample(&img, &g, 3.0).unwrap()[0];
        assert!(narrow < wide, "{narrow} vs {wide}");
    }

    #[test]
    fn kernel_normalized_and_truncated() {
        let k = GaussianKernel::new(16, 1.5);
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.weights[0], 0.0);
        assert_eq!(GaussianKernel::new(16, 3.0).weights[0], 0.0);
        assert!(GaussianKernel::new(16, 4.0).weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn sampling_is_linear() {
        let spec = QrSpec::new(1, crate::qr::EcLevel::L).unwrap();
        let g = GridGeometry::for_spec(&spec, 5).unwrap();
        let img = GrayImage::from_fn(g.image_side(), g.image_side(), |x, y| ((x * 13 + y * 7) % 97) as f64);
        let a = gaussian_sample(&img, &g, 1.5).unwrap();
        let b = gaussian_sample(&img.map(|v| v * 2.5), &g, 1.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x * 2.5 - y).abs() < 1e-9);
        }
    }
}
