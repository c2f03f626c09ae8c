//! Scannability enhancement: marker harmonization, code and aesthetic losses, and the
//! image-space optimizer.

mod aesthetic;
mod code;
mod enhance;
mod features;
mod fstats;
mod harmonize;
mod w2;

pub use aesthetic::{aesthetic_loss, AestheticReference};
pub use code::{code_loss, simulated_readout, CodeLossPlan};
pub use enhance::{enhance, EnhanceOutcome, TraceRow};
pub use features::{feature_stats, FeatureStats, LevelStats, CHANNELS, FILTER_BANK};
pub use fstats::{encode_fstats, parse_fstats, read_fstats, write_fstats, FstatsHeader};
pub use harmonize::harmonize_markers;
pub use w2::{gaussian_w2, sqrtm_psd};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::L_MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda: f64,
    pub sigma_f: f64,
    pub sigma_b: f64,
    pub w_f: f64,
    pub w_b: f64,
    pub iterations: usize,
    /// Adam step size on pixels scaled to `[0, 1]`.
    pub learning_rate: f64,
    pub aesthetic_weight: f64,
    pub pyramid_levels: usize,
    pub early_stop: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 128.0,
            lambda: 0.8,
            sigma_f: 1.5,
            sigma_b: 3.0,
            w_f: 1.0,
            w_b: 15.0,
            iterations: 300,
            learning_rate: 0.002,
            aesthetic_weight: 1.0,
            pyramid_levels: 3,
            early_stop: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(format!("loss config: {what}")));
        if !(self.tau > 0.0 && self.tau < L_MAX) {
            return bad("tau outside (0, 255)");
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad("lambda outside (0, 1)");
        }
        if !(self.sigma_f > 0.0 && self.sigma_b > 0.0) {
            return bad("sigmas must be positive");
        }
        if !(self.w_f >= 0.0 && self.w_b >= 0.0 && self.aesthetic_weight >= 0.0) {
            return bad("weights must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.pyramid_levels == 0 {
            return bad("at least one pyramid level");
        }
        Ok(())
    }
}
