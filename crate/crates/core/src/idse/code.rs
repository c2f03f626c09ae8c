use super::LossConfig;
use crate::error::{Error, Result};
use crate::idrs::Blueprint;
use crate::qr::ModuleMatrix;
use crate::raster::{GrayImage, L_MAX};
use crate::scanner::{GaussianKernel, GridGeometry};

/// Precomputed per-module kernels, weights and targets for the code loss on pixels
/// scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CodeLossPlan {
    geom: GridGeometry,
    width: usize,
    height: usize,
    face_kernel: GaussianKernel,
    back_kernel: GaussianKernel,
    is_face: Vec<bool>,
    target: Vec<u8>,
    w_f: f64,
    w_b: f64,
    tau: f64,
    blueprint: Vec<f64>,
    function_mask: Vec<bool>,
}

impl CodeLossPlan {
    pub fn new(blueprint: &Blueprint, config: &LossConfig) -> Result<Self> {
        config.validate()?;
        let geom = blueprint.geometry;
        geom.check(&blueprint.image)?;
        Ok(CodeLossPlan {
            geom,
            width: blueprint.image.width(),
            height: blueprint.image.height(),
            face_kernel: GaussianKernel::for_grid(&geom, config.sigma_f),
            back_kernel: GaussianKernel::for_grid(&geom, config.sigma_b),
            is_face: blueprint.regions.face_flags(),
            target: blueprint.target_matrix.values().to_vec(),
            w_f: config.w_f,
            w_b: config.w_b,
            tau: config.tau / L_MAX,
            blueprint: blueprint.image.data().iter().map(|v| v / L_MAX).collect(),
            function_mask: blueprint.target_matrix.function_mask().to_vec(),
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn kernel(&self, j: usize) -> &GaussianKernel {
        if self.is_face[j] { &self.face_kernel } else { &self.back_kernel }
    }

    fn weight(&self, j: usize) -> f64 {
        if self.is_face[j] { self.w_f } else { self.w_b }
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.width * self.height {
            return Err(Error::Parameter(format!(
                "image has {} pixels, blueprint {}x{}",
                z.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    fn sample(&self, z: &[f64], j: usize) -> f64 {
        let k = self.kernel(j);
        let mut s = 0.0;
        self.geom.for_each_pixel(j, |x, y, i| s += k.weights[i] * z[y * self.width + x]);
        s
    }

    /// Whether module `j` currently reads on the wrong side of `τ`.
    pub fn misclassified(&self, z: &[f64], j: usize) -> bool {
        (self.sample(z, j) >= self.tau) != (self.target[j] == 1)
    }

    /// Loss and gradient for normalized pixels `z`; `grad` is overwritten.
    pub fn evaluate(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(z)?;
        self.check_len(grad)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for j in 0..self.geom.n * self.geom.n {
            let w = self.weight(j);
            if w == 0.0 || !self.misclassified(z, j) {
                continue;
            }
            let k = self.kernel(j);
            let mut d = 0.0;
            self.geom.for_each_pixel(j, |x, y, i| {
                let p = y * self.width + x;
                let diff = z[p] - self.blueprint[p];
                d += k.weights[i] * diff.abs();
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                grad[p] += w * k.weights[i] * sign;
            });
            total += w * d;
        }
        Ok(total)
    }

    /// Rounds normalized pixels to 8-bit levels without flipping any correctly read module:
    /// a module that nearest rounding would flip is rounded toward its target instead
    /// (kernel weights are non-negative and kernels of different modules do not overlap).
    pub fn quantize(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z)?;
        let level = |v: f64, f: fn(f64) -> f64| f(v.clamp(0.0, 1.0) * L_MAX) / L_MAX;
        let mut q: Vec<f64> = z.iter().map(|&v| level(v, f64::round)).collect();
        for j in 0..self.geom.n * self.geom.n {
            if self.misclassified(z, j) || !self.misclassified(&q, j) {
                continue;
            }
            let toward: fn(f64) -> f64 = if self.target[j] == 1 { f64::ceil } else { f64::floor };
            self.geom.for_each_pixel(j, |x, y, _| {
                let p = y * self.width + x;
                q[p] = level(z[p], toward);
            });
        }
        Ok(q)
    }

    /// Module bits read with each module's own kernel (face modules `σ_f`, others `σ_b`).
    pub fn readout(&self, z: &[f64]) -> Result<ModuleMatrix> {
        self.check_len(z)?;
        let n = self.geom.n;
        let values = (0..n * n).map(|j| (self.sample(z, j) >= self.tau) as u8).collect();
        ModuleMatrix::from_parts(n, values, self.function_mask.clone())
    }
}

fn normalized(z: &GrayImage) -> Vec<f64> {
    z.data().iter().map(|v| v / L_MAX).collect()
}

/// Spatially dynamic code loss of `z` against the blueprint.
///
/// Each module contributes `w(j) · Σ G(j) |Z − I_b|` while its Gaussian sample reads on
/// the wrong side of `τ`. Face modules use `σ_f`, `w_f`; all others `σ_b`, `w_b`. The loss is
/// computed on pixels scaled to `[0, 1]` and the gradient is with respect to those.
pub fn code_loss(z: &GrayImage, blueprint: &Blueprint, config: &LossConfig) -> Result<(f64, GrayImage)> {
    if !z.same_size(&blueprint.image) {
        return Err(Error::Parameter("image and blueprint differ in size".into()));
    }
    let plan = CodeLossPlan::new(blueprint, config)?;
    let mut grad = vec![0.0; z.data().len()];
    let loss = plan.evaluate(&normalized(z), &mut grad)?;
    Ok((loss, GrayImage::from_vec(z.width(), z.height(), grad)?))
}

/// What the simulated decoder reads from `z`.
pub fn simulated_readout(z: &GrayImage, blueprint: &Blueprint, config: &LossConfig) -> Result<ModuleMatrix> {
    if !z.same_size(&blueprint.image) {
        return Err(Error::Parameter("image and blueprint differ in size".into()));
    }
    CodeLossPlan::new(blueprint, config)?.readout(&normalized(z))
}
