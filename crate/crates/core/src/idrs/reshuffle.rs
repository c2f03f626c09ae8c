use rayon::prelude::*;

use super::padbits::optimize_pad_bits;
use super::{RegionSets, ReshuffleReport};
use crate::error::{Error, Result};
use crate::qr::codec::{build_from_data, data_codewords};
use crate::qr::{MaskChoice, ModuleMatrix, QrSpec};
use crate::scanner::block_errors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReshuffleOptions {
    /// Restrict the search to one mask pattern.
    pub mask: Option<u8>,
    /// Use the padding codewords as free bits to agree with the face modules.
    pub optimize_pad_bits: bool,
}

/// Face modules outside the function patterns, where `E` is frozen.
fn frozen_modules(regions: &RegionSets) -> Vec<usize> {
    regions.face.iter().copied().filter(|j| !regions.markers.contains(j)).collect()
}

fn disagreements(v: &ModuleMatrix, e: &ModuleMatrix, frozen: &[usize]) -> usize {
    frozen.iter().filter(|&&j| v.at(j) != e.at(j)).count()
}

/// Rebuild the symbol around frozen face modules.
///
/// The valid code `V` for `message` is built under every candidate mask and the mask
/// with the fewest disagreements with `E` on the face is kept (lowest index on ties).
/// The result takes `E` on face modules, the standard patterns on function modules and
/// `V` elsewhere. Frozen disagreements become byte errors that Reed–Solomon decoding
/// must absorb; [`Error::Infeasible`] is returned when any block exceeds its capacity.
pub fn reshuffle(
    e: &ModuleMatrix,
    message: &[u8],
    regions: &RegionSets,
    spec: &QrSpec,
    options: ReshuffleOptions,
) -> Result<(ModuleMatrix, ReshuffleReport)> {
    let n = spec.side();
    if e.n() != n || regions.n != n {
        return Err(Error::Parameter(format!(
            "matrix side {} / regions side {} do not match version {} ({n})",
            e.n(),
            regions.n,
            spec.version
        )));
    }
    let data = data_codewords(message, spec)?;
    let frozen = frozen_modules(regions);
    let masks: Vec<u8> = match options.mask {
        Some(m) if m < 8 => vec![m],
        Some(m) => return Err(Error::Parameter(format!("mask pattern {m} outside 0-7"))),
        None => (0..8).collect(),
    };
    let candidates: Vec<(u8, ModuleMatrix, usize)> = masks
        .par_iter()
        .map(|&mask| {
            let v = build_from_data(&data, &spec.with_mask(MaskChoice::Fixed(mask)))?;
            let d = disagreements(&v, e, &frozen);
            Ok((mask, v, d))
        })
        .collect::<Result<_>>()?;
    let (mask, mut valid, _) = candidates
        .into_iter()
        .min_by_key(|(mask, _, d)| (*d, *mask))
        .expect("at least one mask candidate");
    let fixed_spec = spec.with_mask(MaskChoice::Fixed(mask));

    let mut pad_bits_flipped = 0;
    if options.optimize_pad_bits {
        let outcome = optimize_pad_bits(e, message, &fixed_spec, regions)?;
        valid = outcome.matrix;
        pad_bits_flipped = outcome.flipped;
    }

    let mut target = valid.clone();
    for &j in &frozen {
        target.set_at(j, e.at(j));
    }
    let report = report_for(&target, &valid, &frozen, mask, pad_bits_flipped, spec);
    if report.feasible {
        Ok((target, report))
    } else {
        Err(Error::Infeasible(Box::new(report)))
    }
}

fn report_for(
    target: &ModuleMatrix,
    valid: &ModuleMatrix,
    frozen: &[usize],
    mask: u8,
    pad_bits_flipped: usize,
    spec: &QrSpec,
) -> ReshuffleReport {
    let diffs: Vec<usize> = frozen.iter().copied().filter(|&j| target.at(j) != valid.at(j)).collect();
    let per_block = block_errors(diffs.iter().copied(), spec);
    let capacity: Vec<usize> = spec.blocks().iter().map(|b| b.capacity()).collect();
    let slack = per_block.iter().zip(&capacity).map(|(&e, &t)| t as i64 - e as i64).min().unwrap_or(0);
    ReshuffleReport {
        feasible: slack >= 0,
        per_block_errors_after: per_block,
        block_capacity: capacity,
        slack,
        mask_pattern_chosen: mask,
        pad_bits_flipped,
        frozen_disagreements: diffs.len(),
    }
}
