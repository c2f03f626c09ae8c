use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tables;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EcLevel {
    L,
    M,
    Q,
    H,
}

impl EcLevel {
    /// Two-bit field stored in the format information.
    pub fn format_bits(self) -> u8 {
        match self {
            EcLevel::L => 0b01,
            EcLevel::M => 0b00,
            EcLevel::Q => 0b11,
            EcLevel::H => 0b10,
        }
    }

    pub fn from_format_bits(bits: u8) -> EcLevel {
        match bits & 3 {
            0b01 => EcLevel::L,
            0b00 => EcLevel::M,
            0b11 => EcLevel::Q,
            _ => EcLevel::H,
        }
    }
}

impl FromStr for EcLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L" => Ok(EcLevel::L),
            "M" => Ok(EcLevel::M),
            "Q" => Ok(EcLevel::Q),
            "H" => Ok(EcLevel::H),
            other => Err(Error::Parameter(format!("unknown ec level {other:?}"))),
        }
    }
}

impl fmt::Display for EcLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskChoice {
    /// Lowest standard penalty score.
    #[default]
    Auto,
    Fixed(u8),
}

impl FromStr for MaskChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MaskChoice::Auto);
        }
        match s.parse::<u8>() {
            Ok(m) if m < 8 => Ok(MaskChoice::Fixed(m)),
            _ => Err(Error::Parameter(format!("mask pattern must be 0-7 or auto, got {s:?}"))),
        }
    }
}

/// One Reed–Solomon block: `total` codewords of which the first `data` carry data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockShape {
    pub total: usize,
    pub data: usize,
}

impl BlockShape {
    pub fn parity(&self) -> usize {
        self.total - self.data
    }

    /// Correctable byte errors.
    pub fn capacity(&self) -> usize {
        self.parity() / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrSpec {
    pub version: u8,
    pub ec_level: EcLevel,
    pub mask: MaskChoice,
    pub quiet_zone: usize,
}

impl Default for QrSpec {
    fn default() -> Self {
        QrSpec { version: 5, ec_level: EcLevel::H, mask: MaskChoice::Auto, quiet_zone: 4 }
    }
}

impl QrSpec {
    pub fn new(version: u8, ec_level: EcLevel) -> Result<Self> {
        let spec = QrSpec { version, ec_level, ..QrSpec::default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mask(self, mask: MaskChoice) -> Self {
        QrSpec { mask, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=40).contains(&self.version) {
            return Err(Error::Parameter(format!("version {} outside 1-40", self.version)));
        }
        if let MaskChoice::Fixed(m) = self.mask {
            if m > 7 {
                return Err(Error::Parameter(format!("mask pattern {m} outside 0-7")));
            }
        }
        Ok(())
    }

    /// Modules per side.
    pub fn side(&self) -> usize {
        4 * self.version as usize + 17
    }

    fn row(&self) -> &'static tables::BlockRow {
        tables::lookup(self.version, self.ec_level).expect("validated version has a table row")
    }

    /// Blocks in interleaving order (short blocks first).
    pub fn blocks(&self) -> Vec<BlockShape> {
        let r = self.row();
        let g1 = BlockShape { total: r.group1_data + r.ec_per_block, data: r.group1_data };
        let g2 = BlockShape { total: r.group2_data + r.ec_per_block, data: r.group2_data };
        std::iter::repeat_n(g1, r.group1_blocks).chain(std::iter::repeat_n(g2, r.group2_blocks)).collect()
    }

    pub fn total_codewords(&self) -> usize {
        self.row().total_codewords
    }

    pub fn data_codewords(&self) -> usize {
        self.blocks().iter().map(|b| b.data).sum()
    }

    pub fn remainder_bits(&self) -> usize {
        self.row().remainder_bits
    }

    /// Width of the byte-mode character count field.
    pub fn char_count_bits(&self) -> usize {
        if self.version <= 9 {
            8
        } else {
            16
        }
    }

    /// Maximum byte-mode payload length.
    pub fn byte_capacity(&self) -> usize {
        let bits = 8 * self.data_codewords() - 4 - self.char_count_bits();
        (bits / 8).min((1 << self.char_count_bits()) - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version5_geometry() {
        let spec = QrSpec::default();
        assert_eq!(spec.side(), 37);
        assert_eq!(spec.total_codewords(), 134);
        assert_eq!(spec.data_codewords(), 46);
        assert_eq!(spec.byte_capacity(), 44);
        let caps: Vec<usize> = spec.blocks().iter().map(BlockShape::capacity).collect();
        assert_eq!(caps, vec![11, 11, 11, 11]);
    }

    #[test]
    fn block_totals_sum_to_table() {
        for v in 1..=40 {
            for ec in [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H] {
                let spec = QrSpec::new(v, ec).unwrap();
                let sum: usize = spec.blocks().iter().map(|b| b.total).sum();
                assert_eq!(sum, spec.total_codewords());
            }
        }
    }

    #[test]
    fn known_byte_capacities() {
        // Byte-mode capacities from the standard's capacity table.
        let cases = [(1, EcLevel::L, 17), (1, EcLevel::H, 7), (5, EcLevel::L, 106), (5, EcLevel::M, 84), (10, EcLevel::H, 119)];
        for (v, ec, cap) in cases {
            assert_eq!(QrSpec::new(v, ec).unwrap().byte_capacity(), cap, "v{v} {ec}");
        }
    }

    #[test]
    fn rejects_bad_version() {
        assert!(QrSpec::new(0, EcLevel::L).is_err());
        assert!(QrSpec::new(41, EcLevel::L).is_err());
    }
}
