use std::collections::BTreeMap;

use super::RegionSets;
use crate::error::{Error, Result};
use crate::qr::codec::{build_from_data, data_codewords, first_pad_codeword};
use crate::qr::{MaskChoice, ModuleMatrix, QrSpec};
use crate::scanner::block_errors;

#[derive(Debug, Clone, PartialEq)]
pub struct PadBitOutcome {
    pub matrix: ModuleMatrix,
    pub flipped: usize,
    /// Face modules agreeing with `E` before and after.
    pub agreement_before: usize,
    pub agreement_after: usize,
    /// Set when there was nothing to optimise.
    pub warning: Option<String>,
}

/// Row over the free bits with a right-hand side.
#[derive(Clone)]
struct Row {
    bits: Vec<u64>,
    rhs: bool,
}

impl Row {
    fn xor(&mut self, other: &Row) {
        self.bits.iter_mut().zip(&other.bits).for_each(|(a, b)| *a ^= b);
        self.rhs ^= other.rhs;
    }

    fn get(&self, i: usize) -> bool {
        (self.bits[i / 64] >> (i % 64)) & 1 == 1
    }

    fn lowest(&self) -> Option<usize> {
        self.bits.iter().enumerate().find(|(_, w)| **w != 0).map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
    }
}

/// Choose padding codeword bits so the valid code agrees with `E` on more face modules.
///
/// Every padding bit acts linearly (over GF(2)) on the symbol through its own module and
/// the parity of its block. Face data modules are taken as equations, cheapest codewords
/// first, and accepted greedily when consistent with those already accepted. The mask
/// must be fixed in `spec`. If the result would agree on fewer face modules, or leave more
/// byte errors, the unmodified code is returned.
pub fn optimize_pad_bits(
    e: &ModuleMatrix,
    message: &[u8],
    spec: &QrSpec,
    regions: &RegionSets,
) -> Result<PadBitOutcome> {
    if !matches!(spec.mask, MaskChoice::Fixed(_)) {
        return Err(Error::Parameter("pad-bit optimisation needs a fixed mask".into()));
    }
    let data = data_codewords(message, spec)?;
    let original = build_from_data(&data, spec)?;
    let frozen: Vec<usize> = regions.face.iter().copied().filter(|j| !regions.markers.contains(j)).collect();
    let agreement = |m: &ModuleMatrix| frozen.iter().filter(|&&j| m.at(j) == e.at(j)).count();
    let byte_errors = |m: &ModuleMatrix| -> usize {
        block_errors(frozen.iter().copied().filter(|&j| m.at(j) != e.at(j)), spec).iter().sum()
    };
    let before = agreement(&original);
    let unchanged = PadBitOutcome { matrix: original.clone(), flipped: 0, agreement_before: before, agreement_after: before, warning: None };

    let first = first_pad_codeword(message.len(), spec);
    let free: Vec<(usize, u8)> = (first..data.len()).flat_map(|i| (0..8).map(move |b| (i, 1u8 << b))).collect();
    if free.is_empty() {
        return Ok(PadBitOutcome { warning: Some("message leaves no padding bytes".into()), ..unchanged });
    }
    if frozen.is_empty() {
        return Ok(unchanged);
    }
    let words = free.len().div_ceil(64);

    // influence[j]: which free bits flip module j
    let mut influence: BTreeMap<usize, Vec<u64>> = frozen.iter().map(|&j| (j, vec![0u64; words])).collect();
    for (f, &(i, bit)) in free.iter().enumerate() {
        let mut d = data.clone();
        d[i] ^= bit;
        let flipped = build_from_data(&d, spec)?;
        for j in original.diff(&flipped)? {
            if let Some(row) = influence.get_mut(&j) {
                row[f / 64] |= 1 << (f % 64);
            }
        }
    }

    // codewords with fewer disagreeing face bits are cheaper to make whole
    let layout = crate::qr::Layout::new(spec.version);
    let n = layout.n;
    let mut codeword_of = vec![usize::MAX; n * n];
    for (k, (r, c)) in layout.placement_order().into_iter().enumerate().take(8 * spec.total_codewords()) {
        codeword_of[r * n + c] = k / 8;
    }
    let mut by_codeword: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &j in &frozen {
        by_codeword.entry(codeword_of[j]).or_default().push(j);
    }
    let mut groups: Vec<Vec<usize>> = by_codeword.into_values().collect();
    groups.sort_by_key(|g| g.iter().filter(|&&j| original.at(j) != e.at(j)).count());

    let mut pivots: Vec<(usize, Row)> = Vec::new();
    for group in groups {
        // a codeword only helps if all its equations hold together
        let mut trial = pivots.clone();
        let mut consistent = true;
        for &j in &group {
            let mut row = Row { bits: influence[&j].clone(), rhs: original.at(j) != e.at(j) };
            for (p, prow) in &trial {
                if row.get(*p) {
                    row.xor(prow);
                }
            }
            match row.lowest() {
                Some(p) => {
                    for (_, other) in trial.iter_mut() {
                        if other.get(p) {
                            other.xor(&row);
                        }
                    }
                    trial.push((p, row));
                }
                None if row.rhs => {
                    consistent = false;
                    break;
                }
                None => {}
            }
        }
        if consistent {
            pivots = trial;
        }
    }

    // fully reduced: each pivot variable equals its row's rhs, free variables stay 0
    let mut d = data.clone();
    let mut flipped = 0;
    for (p, row) in &pivots {
        if row.rhs {
            let (i, bit) = free[*p];
            d[i] ^= bit;
            flipped += 1;
        }
    }
    let matrix = build_from_data(&d, spec)?;
    let after = agreement(&matrix);
    if after < before || byte_errors(&matrix) > byte_errors(&original) {
        return Ok(unchanged);
    }
    Ok(PadBitOutcome { matrix, flipped, agreement_before: before, agreement_after: after, warning: None })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::qr::decode_symbol;

    fn random_e(seed: u64) -> ModuleMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ModuleMatrix::from_parts(37, (0..37 * 37).map(|_| rng.random_range(0..2u8)).collect(), vec![false; 37 * 37])
            .unwrap()
    }

    fn face() -> BTreeSet<usize> {
        (12..26).flat_map(|r| (12..26).map(move |c| r * 37 + c)).collect()
    }

    #[test]
    fn never_loses_agreement_and_still_decodes() {
        let spec = QrSpec::default().with_mask(MaskChoice::Fixed(2));
        let regions = RegionSets::new(&spec, face()).unwrap();
        for seed in 0..6 {
            let e = random_e(seed);
            let out = optimize_pad_bits(&e, b"hi", &spec, &regions).unwrap();
            assert!(out.agreement_after >= out.agreement_before);
            assert_eq!(decode_symbol(&out.matrix, &spec).unwrap().message, b"hi");
        }
    }

    #[test]
    fn short_messages_gain_agreement() {
        let spec = QrSpec::default().with_mask(MaskChoice::Fixed(0));
        let regions = RegionSets::new(&spec, face()).unwrap();
        let gained: usize = (0..6)
            .map(|s| {
                let out = optimize_pad_bits(&random_e(100 + s), b"hi", &spec, &regions).unwrap();
                out.agreement_after - out.agreement_before
            })
            .sum();
        assert!(gained > 0);
    }

    #[test]
    fn full_message_has_no_free_bits() {
        let spec = QrSpec::default().with_mask(MaskChoice::Fixed(0));
        let regions = RegionSets::new(&spec, face()).unwrap();
        let msg = vec![b'x'; spec.byte_capacity()];
        let out = optimize_pad_bits(&random_e(9), &msg, &spec, &regions).unwrap();
        assert_eq!(out.flipped, 0);
        assert!(out.warning.is_some());
        assert_eq!(out.matrix, build_from_data(&data_codewords(&msg, &spec).unwrap(), &spec).unwrap());
    }

    #[test]
    fn auto_mask_rejected() {
        let spec = QrSpec::default();
        let regions = RegionSets::new(&spec, face()).unwrap();
        assert!(optimize_pad_bits(&random_e(0), b"hi", &spec, &regions).is_err());
    }
}
