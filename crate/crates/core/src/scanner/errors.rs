use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idrs::RegionSets;
use crate::qr::codec::interleave_map;
use crate::qr::{Layout, ModuleMatrix, QrSpec};

/// Module and codeword error counts of an observed matrix against a reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mismatches outside finder and alignment areas.
    pub e: usize,
    /// Mismatches inside the face region (finder and alignment areas excluded).
    pub e_f: usize,
    /// Distinct erroneous bytes per RS block.
    pub per_block_errors: Vec<usize>,
    #[serde(skip)]
    pub error_map: Vec<bool>,
}

/// Byte-level errors implied by a set of mismatched modules.
pub fn block_errors(mismatched: impl IntoIterator<Item = usize>, spec: &QrSpec) -> Vec<usize> {
    let layout = Layout::new(spec.version);
    let n = layout.n;
    let mut codeword_of = vec![usize::MAX; n * n];
    let stream_bits = 8 * spec.total_codewords();
    for (i, (r, c)) in layout.placement_order().into_iter().enumerate().take(stream_bits) {
        codeword_of[r * n + c] = i / 8;
    }
    let map = interleave_map(spec);
    let mut bad: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); spec.blocks().len()];
    for j in mismatched {
        let cw = codeword_of[j];
        if cw != usize::MAX {
            let (b, o) = map[cw];
            bad[b].insert(o);
        }
    }
    bad.iter().map(BTreeSet::len).collect()
}

pub fn count_errors(
    observed: &ModuleMatrix,
    reference: &ModuleMatrix,
    regions: &RegionSets,
    spec: &QrSpec,
) -> Result<ErrorReport> {
    let n = reference.n();
    if observed.n() != n || spec.side() != n || regions.n != n {
        return Err(Error::Parameter(format!(
            "dimension mismatch: observed {}, reference {}, spec {}, regions {}",
            observed.n(),
            n,
            spec.side(),
            regions.n
        )));
    }
    let layout = Layout::new(spec.version);
    let mismatched = observed.diff(reference)?;
    let mut error_map = vec![false; n * n];
    let (mut e, mut e_f) = (0, 0);
    for &j in &mismatched {
        if layout.roles[j].is_locator() {
            continue;
        }
        error_map[j] = true;
        e += 1;
        if regions.is_face(j) {
            e_f += 1;
        }
    }
    Ok(ErrorReport { e, e_f, per_block_errors: block_errors(mismatched, spec), error_map })
}
