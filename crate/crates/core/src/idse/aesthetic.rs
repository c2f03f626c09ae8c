use nalgebra::DMatrix;

use super::features::{backward, stats_of, FeatureStats, CHANNELS};
use super::w2::gaussian_w2;
use super::LossConfig;
use crate::error::{Error, Result};
use crate::raster::{GrayImage, L_MAX};

/// Where the aesthetic reference statistics come from.
#[derive(Debug, Clone)]
pub enum AestheticReference {
    Image(GrayImage),
    /// Precomputed statistics, e.g. loaded from an `.fstats` file. Their layout must match
    /// the built-in extractor: one level per pyramid level, nine channels each.
    Stats(FeatureStats),
}

#[derive(Debug, Clone)]
pub(crate) struct AestheticPlan {
    reference: FeatureStats,
    levels: usize,
    weight: f64,
    width: usize,
    height: usize,
}

impl AestheticPlan {
    pub fn new(reference: &AestheticReference, width: usize, height: usize, config: &LossConfig) -> Result<Self> {
        let levels = config.pyramid_levels;
        let stats = match reference {
            AestheticReference::Image(img) => {
                if img.width() != width || img.height() != height {
                    return Err(Error::Parameter("aesthetic reference differs in size".into()));
                }
                let z: Vec<f64> = img.data().iter().map(|v| v / L_MAX).collect();
                stats_of(&z, width, height, levels)?.1
            }
            AestheticReference::Stats(st) => {
                if st.levels.len() != levels || st.levels.iter().any(|l| l.channels() != CHANNELS) {
                    return Err(Error::Format(format!(
                        "reference statistics need {levels} levels of {CHANNELS} channels, got {:?}",
                        st.levels.iter().map(|l| l.channels()).collect::<Vec<_>>()
                    )));
                }
                st.clone()
            }
        };
        Ok(AestheticPlan { reference: stats, levels, weight: config.aesthetic_weight, width, height })
    }

    /// Loss and gradient for normalized pixels; `grad` is overwritten.
    pub fn evaluate(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        if z.len() != self.width * self.height || grad.len() != z.len() {
            return Err(Error::Parameter("aesthetic loss: image size mismatch".into()));
        }
        if self.weight == 0.0 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return Ok(0.0);
        }
        let (planes, stats) = stats_of(z, self.width, self.height, self.levels)?;
        let mut total = 0.0;
        let mut d_mean = Vec::with_capacity(self.levels);
        let mut d_cov = Vec::with_capacity(self.levels);
        for (lz, lr) in stats.levels.iter().zip(&self.reference.levels) {
            let cz = DMatrix::from_row_slice(CHANNELS, CHANNELS, &lz.cov);
            let cr = DMatrix::from_row_slice(CHANNELS, CHANNELS, &lr.cov);
            let (w, dm, dc) = gaussian_w2(&lz.mean, &cz, &lr.mean, &cr);
            total += self.weight * w;
            d_mean.push(dm.iter().map(|v| v * self.weight).collect());
            // row-major, matching the stats layout
            d_cov.push(dc.transpose().iter().map(|v| v * self.weight).collect());
        }
        let g = backward(&planes, &stats, &d_mean, &d_cov);
        grad.copy_from_slice(&g);
        Ok(total)
    }
}

/// Sum over pyramid levels of the Gaussian W2 distance between the feature statistics of
/// `z` and the reference, times `aesthetic_weight`. Computed on pixels scaled to `[0, 1]`;
/// the gradient is with respect to those.
pub fn aesthetic_loss(z: &GrayImage, reference: &AestheticReference, config: &LossConfig) -> Result<(f64, GrayImage)> {
    config.validate()?;
    let plan = AestheticPlan::new(reference, z.width(), z.height(), config)?;
    let zn: Vec<f64> = z.data().iter().map(|v| v / L_MAX).collect();
    let mut grad = vec![0.0; zn.len()];
    let loss = plan.evaluate(&zn, &mut grad)?;
    Ok((loss, GrayImage::from_vec(z.width(), z.height(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idse::feature_stats;

    fn img(offset: f64) -> GrayImage {
        GrayImage::from_fn(48, 48, |x, y| 90.0 + offset + 30.0 * ((x as f64 * 0.4).sin() + (y as f64 * 0.27).cos()))
    }

    #[test]
    fn identical_is_zero() {
        let cfg = LossConfig::default();
        let (l, g) = aesthetic_loss(&img(0.0), &AestheticReference::Image(img(0.0)), &cfg).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn brightness_offset_is_monotone() {
        let cfg = LossConfig::default();
        let r = AestheticReference::Image(img(0.0));
        let losses: Vec<f64> =
            [0.0, 5.0, 10.0, 20.0, 40.0].iter().map(|&o| aesthetic_loss(&img(o), &r, &cfg).unwrap().0).collect();
        assert!(losses.windows(2).all(|w| w[1] > w[0]), "{losses:?}");
    }

    #[test]
    fn external_stats_equal_image_reference() {
        let cfg = LossConfig::default();
        let st = feature_stats(&img(0.0), cfg.pyramid_levels).unwrap();
        let a = aesthetic_loss(&img(7.0), &AestheticReference::Stats(st), &cfg).unwrap().0;
        let b = aesthetic_loss(&img(7.0), &AestheticReference::Image(img(0.0)), &cfg).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn wrong_layout_is_format_error() {
        let cfg = LossConfig::default();
        let st = feature_stats(&img(0.0), 2).unwrap();
        assert!(matches!(aesthetic_loss(&img(0.0), &AestheticReference::Stats(st), &cfg), Err(Error::Format(_))));
    }
}
