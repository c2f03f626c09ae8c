use serde::{Deserialize, Serialize};

use super::layout::{mask_bit, Layout};
use crate::error::{Error, Result};

/// Square grid of module values, 0 = black (dark) and 1 = white (light), with the
/// function-pattern annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleMatrix {
    n: usize,
    values: Vec<u8>,
    function_mask: Vec<bool>,
}

impl ModuleMatrix {
    /// All-black matrix with no function annotation.
    pub fn new(n: usize) -> Self {
        ModuleMatrix { n, values: vec![0; n * n], function_mask: vec![false; n * n] }
    }

    pub fn from_parts(n: usize, values: Vec<u8>, function_mask: Vec<bool>) -> Result<Self> {
        if values.len() != n * n || function_mask.len() != n * n {
            return Err(Error::Parameter(format!("matrix parts do not match side {n}")));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::Parameter("module values must be 0 or 1".into()));
        }
        Ok(ModuleMatrix { n, values, function_mask })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn function_mask(&self) -> &[bool] {
        &self.function_mask
    }

    pub fn set_function_mask(&mut self, mask: Vec<bool>) {
        assert_eq!(mask.len(), self.n * self.n);
        self.function_mask = mask;
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.values[row * self.n + col] = value & 1;
    }

    #[inline]
    pub fn at(&self, index: usize) -> u8 {
        self.values[index]
    }

    #[inline]
    pub fn set_at(&mut self, index: usize, value: u8) {
        self.values[index] = value & 1;
    }

    #[inline]
    pub fn is_dark(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == 0
    }

    /// XOR the data modules with mask `pattern`; applying it twice is the identity.
    pub fn apply_mask(&mut self, layout: &Layout, pattern: u8) {
        for r in 0..self.n {
            for c in 0..self.n {
                if !layout.role(r, c).is_function() && mask_bit(pattern, r, c) {
                    self.values[r * self.n + c] ^= 1;
                }
            }
        }
    }

    /// Indices where the two matrices differ.
    pub fn diff(&self, other: &ModuleMatrix) -> Result<Vec<usize>> {
        if self.n != other.n {
            return Err(Error::Parameter(format!("matrix sides differ: {} vs {}", self.n, other.n)));
        }
        Ok((0..self.n * self.n).filter(|&i| self.values[i] != other.values[i]).collect())
    }

    /// Text rendering, `#` for dark, for debugging and golden files.
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity(self.n * (self.n + 1));
        for r in 0..self.n {
            for c in 0..self.n {
                s.push(if self.is_dark(r, c) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Standard mask penalty (lower is better).
pub fn penalty_score(m: &ModuleMatrix) -> u32 {
    let n = m.n();
    let dark = |r: usize, c: usize| m.is_dark(r, c);
    let mut score = 0u32;

    // Runs of five or more in rows and columns.
    for horizontal in [true, false] {
        for a in 0..n {
            let mut run = 1;
            for b in 1..n {
                let (cur, prev) = if horizontal {
                    (dark(a, b), dark(a, b - 1))
                } else {
                    (dark(b, a), dark(b - 1, a))
                };
                if cur == prev {
                    run += 1;
                } else {
                    if run >= 5 {
                        score += 3 + (run - 5);
                    }
                    run = 1;
                }
            }
            if run >= 5 {
                score += 3 + (run - 5);
            }
        }
    }

    for r in 0..n - 1 {
        for c in 0..n - 1 {
            let d = dark(r, c);
            if d == dark(r, c + 1) && d == dark(r + 1, c) && d == dark(r + 1, c + 1) {
                score += 3;
            }
        }
    }

    // Finder-like 1:1:3:1:1 with four light modules on one side; outside counts as light.
    const CORE: [bool; 7] = [true, false, true, true, true, false, true];
    for horizontal in [true, false] {
        for a in 0..n {
            let get = |b: i32| -> bool {
                if b < 0 || b >= n as i32 {
                    false
                } else if horizontal {
                    dark(a, b as usize)
                } else {
                    dark(b as usize, a)
                }
            };
            for start in -4..n as i32 {
                if !(0..7).all(|k| get(start + k) == CORE[k as usize]) {
                    continue;
                }
                let before = (1..=4).all(|k| !get(start - k));
                let after = (7..11).all(|k| !get(start + k));
                score += 40 * (before as u32 + after as u32);
            }
        }
    }

    let total = (n * n) as i64;
    let dark_count = m.values().iter().filter(|&&v| v == 0).count() as i64;
    let k = ((dark_count * 20 - total * 10).abs() + total - 1) / total - 1;
    score + 10 * k.max(0) as u32
}
