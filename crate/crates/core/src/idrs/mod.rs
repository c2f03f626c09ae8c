//! Face-aware module reshuffling and blueprint synthesis.

mod blueprint;
mod padbits;
mod regions;
mod reshuffle;

pub use blueprint::{build_blueprint, sub_square_side, Blueprint};
pub use padbits::{optimize_pad_bits, PadBitOutcome};
pub use regions::{face_mask_to_modules, RegionSets};
pub use reshuffle::{reshuffle, ReshuffleOptions};

use serde::{Deserialize, Serialize};

/// Outcome of a reshuffle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReshuffleReport {
    pub feasible: bool,
    pub per_block_errors_after: Vec<usize>,
    pub block_capacity: Vec<usize>,
    /// Minimum over blocks of capacity minus errors; negative when infeasible.
    pub slack: i64,
    pub mask_pattern_chosen: u8,
    pub pad_bits_flipped: usize,
    /// Face modules whose frozen value differs from the valid code.
    pub frozen_disagreements: usize,
}
