//! Fixed geometry of a QR symbol: function patterns, data placement order, masks and
//! the BCH-protected format/version fields.
//!
//! Coordinates are `(row, col)` with `(0, 0)` the top-left module; module index is
//! `row * n + col`.

use std::collections::BTreeSet;

use super::spec::{EcLevel, QrSpec};

/// What a module of the symbol is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleRole {
    /// Finder pattern or its separator.
    Finder,
    Alignment,
    Timing,
    Format,
    Version,
    /// The single always-dark module next to the bottom-left finder.
    DarkModule,
    Data,
}

impl ModuleRole {
    pub fn is_function(self) -> bool {
        self != ModuleRole::Data
    }

    /// Finder and alignment areas, which the error metrics skip.
    pub fn is_locator(self) -> bool {
        matches!(self, ModuleRole::Finder | ModuleRole::Alignment)
    }
}

/// Per-module roles together with the standard values of every function module.
#[derive(Debug, Clone)]
pub struct Layout {
    pub n: usize,
    pub roles: Vec<ModuleRole>,
    /// Light (1) / dark (0) values for function modules; data entries are 0 and
    /// format bits are left for [`draw_format`].
    pub base: Vec<u8>,
}

/// Centers of alignment patterns along one axis.
pub fn alignment_positions(version: u8) -> Vec<usize> {
    if version == 1 {
        return Vec::new();
    }
    let v = version as usize;
    let count = v / 7 + 2;
    let size = 4 * v + 17;
    let step = if v == 32 { 26 } else { (v * 4 + count * 2 + 1) / (count * 2 - 2) * 2 };
    let mut out: Vec<usize> = (0..count - 1).map(|i| size - 7 - i * step).collect();
    out.push(6);
    out.reverse();
    out
}

impl Layout {
    pub fn new(version: u8) -> Layout {
        let n = 4 * version as usize + 17;
        let mut layout = Layout { n, roles: vec![ModuleRole::Data; n * n], base: vec![0; n * n] };
        let mut set = |r: usize, c: usize, role: ModuleRole, light: bool| {
            layout.roles[r * n + c] = role;
            layout.base[r * n + c] = light as u8;
        };

        // Timing first; finders and alignments overwrite the overlaps.
        for i in 0..n {
            set(6, i, ModuleRole::Timing, i % 2 == 1);
            set(i, 6, ModuleRole::Timing, i % 2 == 1);
        }

        for (fr, fc) in [(3i32, 3i32), (3, n as i32 - 4), (n as i32 - 4, 3)] {
            for dr in -4..=4i32 {
                for dc in -4..=4i32 {
                    let (r, c) = (fr + dr, fc + dc);
                    if r < 0 || c < 0 || r >= n as i32 || c >= n as i32 {
                        continue;
                    }
                    let dist = dr.abs().max(dc.abs());
                    // rings: 0,1 dark; 2 light; 3 dark; 4 separator (light)
                    let light = dist == 2 || dist == 4;
                    set(r as usize, c as usize, ModuleRole::Finder, light);
                }
            }
        }

        let pos = alignment_positions(version);
        let last = pos.len().saturating_sub(1);
        for (i, &ar) in pos.iter().enumerate() {
            for (j, &ac) in pos.iter().enumerate() {
                // skip the three corners taken by finders
                if (i == 0 && j == 0) || (i == 0 && j == last) || (i == last && j == 0) {
                    continue;
                }
                for dr in -2..=2i32 {
                    for dc in -2..=2i32 {
                        let dist = dr.abs().max(dc.abs());
                        let r = (ar as i32 + dr) as usize;
                        let c = (ac as i32 + dc) as usize;
                        set(r, c, ModuleRole::Alignment, dist == 1);
                    }
                }
            }
        }

        // Format areas (values filled per mask by draw_format).
        for i in 0..9 {
            if i != 6 {
                set(8, i, ModuleRole::Format, true);
                set(i, 8, ModuleRole::Format, true);
            }
        }
        for i in 0..8 {
            set(8, n - 1 - i, ModuleRole::Format, true);
            set(n - 1 - i, 8, ModuleRole::Format, true);
        }
        set(n - 8, 8, ModuleRole::DarkModule, false);

        if version >= 7 {
            let bits = version_bits(version);
            for i in 0..18 {
                let light = (bits >> i) & 1 == 0;
                let a = n - 11 + i % 3;
                let b = i / 3;
                set(a, b, ModuleRole::Version, light);
                set(b, a, ModuleRole::Version, light);
            }
        }
        layout
    }

    pub fn role(&self, row: usize, col: usize) -> ModuleRole {
        self.roles[row * self.n + col]
    }

    pub fn function_indices(&self) -> BTreeSet<usize> {
        (0..self.n * self.n).filter(|&i| self.roles[i].is_function()).collect()
    }

    pub fn locator_indices(&self) -> BTreeSet<usize> {
        (0..self.n * self.n).filter(|&i| self.roles[i].is_locator()).collect()
    }

    pub fn function_mask(&self) -> Vec<bool> {
        self.roles.iter().map(|r| r.is_function()).collect()
    }

    /// Serpentine data placement: two-column strips from the right edge, alternating
    /// upward and downward, skipping the vertical timing column and function modules.
    pub fn placement_order(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut order = Vec::new();
        let mut right = n as i32 - 1;
        while right >= 1 {
            if right == 6 {
                right = 5;
            }
            let upward = ((right + 1) & 2) == 0;
            for vert in 0..n {
                let row = if upward { n - 1 - vert } else { vert };
                for j in 0..2 {
                    let col = (right - j) as usize;
                    if !self.role(row, col).is_function() {
                        order.push((row, col));
                    }
                }
            }
            right -= 2;
        }
        order
    }
}

/// Whether mask `pattern` flips the module at `(row, col)`.
pub fn mask_bit(pattern: u8, row: usize, col: usize) -> bool {
    let (y, x) = (row, col);
    match pattern {
        0 => (x + y) % 2 == 0,
        1 => y % 2 == 0,
        2 => x % 3 == 0,
        3 => (x + y) % 3 == 0,
        4 => (x / 3 + y / 2) % 2 == 0,
        5 => x * y % 2 + x * y % 3 == 0,
        6 => (x * y % 2 + x * y % 3) % 2 == 0,
        7 => ((x + y) % 2 + x * y % 3) % 2 == 0,
        _ => panic!("mask pattern {pattern} out of range"),
    }
}

/// 15-bit format word (BCH(15,5) with the standard XOR mask), LSB = bit 0.
pub fn format_bits(ec: EcLevel, mask: u8) -> u16 {
    let data = ((ec.format_bits() as u16) << 3) | mask as u16;
    let mut rem = data;
    for _ in 0..10 {
        rem = (rem << 1) ^ ((rem >> 9) * 0x537);
    }
    ((data << 10) | (rem & 0x3ff)) ^ 0x5412
}

/// 18-bit version word (Golay code), versions 7 and up.
pub fn version_bits(version: u8) -> u32 {
    let v = version as u32;
    let mut rem = v;
    for _ in 0..12 {
        rem = (rem << 1) ^ ((rem >> 11) * 0x1f25);
    }
    (v << 12) | (rem & 0xfff)
}

/// Module positions of the two copies of format bit `i`, as (row, col).
pub fn format_positions(n: usize) -> [[(usize, usize); 15]; 2] {
    let mut first = [(0, 0); 15];
    let mut second = [(0, 0); 15];
    for (i, p) in first.iter_mut().enumerate() {
        *p = match i {
            0..=5 => (i, 8),
            6 => (7, 8),
            7 => (8, 8),
            8 => (8, 7),
            _ => (8, 14 - i),
        };
    }
    for (i, p) in second.iter_mut().enumerate() {
        *p = if i < 8 { (8, n - 1 - i) } else { (n - 15 + i, 8) };
    }
    [first, second]
}

/// Write format information into `values` (1 = light).
pub fn draw_format(values: &mut [u8], n: usize, ec: EcLevel, mask: u8) {
    let bits = format_bits(ec, mask);
    for copy in format_positions(n) {
        for (i, (r, c)) in copy.into_iter().enumerate() {
            let dark = (bits >> i) & 1 == 1;
            values[r * n + c] = (!dark) as u8;
        }
    }
}

/// Index and error-correction level of every valid format word, for nearest-match decoding.
pub fn all_format_words() -> Vec<(u16, EcLevel, u8)> {
    let mut out = Vec::with_capacity(32);
    for ec in [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H] {
        for mask in 0..8 {
            out.push((format_bits(ec, mask), ec, mask));
        }
    }
    out
}

/// Module index set of every function module of `spec`.
pub fn function_pattern_map(spec: &QrSpec) -> BTreeSet<usize> {
    Layout::new(spec.version).function_indices()
}

pub fn placement_order(spec: &QrSpec) -> Vec<(usize, usize)> {
    Layout::new(spec.version).placement_order()
}
