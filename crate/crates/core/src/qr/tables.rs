//! Block structure tables, parsed from the shipped `data/qr_blocks.txt`.

use std::sync::OnceLock;

use super::spec::EcLevel;

const RAW: &str = include_str!("../../data/qr_blocks.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRow {
    pub version: u8,
    pub ec_level: EcLevel,
    pub total_codewords: usize,
    pub ec_per_block: usize,
    pub group1_blocks: usize,
    pub group1_data: usize,
    pub group2_blocks: usize,
    pub group2_data: usize,
    pub remainder_bits: usize,
}

fn parse() -> Vec<BlockRow> {
    let mut rows = Vec::with_capacity(160);
    for (lineno, line) in RAW.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(f.len(), 9, "qr_blocks.txt:{}: expected 9 columns", lineno + 1);
        let num = |i: usize| -> usize {
            f[i].parse().unwrap_or_else(|_| panic!("qr_blocks.txt:{}: bad number", lineno + 1))
        };
        rows.push(BlockRow {
            version: num(0) as u8,
            ec_level: f[1].parse().expect("bad ec level in qr_blocks.txt"),
            total_codewords: num(2),
            ec_per_block: num(3),
            group1_blocks: num(4),
            group1_data: num(5),
            group2_blocks: num(6),
            group2_data: num(7),
            remainder_bits: num(8),
        });
    }
    rows
}

pub fn rows() -> &'static [BlockRow] {
    static ROWS: OnceLock<Vec<BlockRow>> = OnceLock::new();
    ROWS.get_or_init(parse)
}

pub fn lookup(version: u8, ec_level: EcLevel) -> Option<&'static BlockRow> {
    rows().iter().find(|r| r.version == version && r.ec_level == ec_level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_complete_and_consistent() {
        assert_eq!(rows().len(), 160);
        for r in rows() {
            let total = r.group1_blocks * (r.group1_data + r.ec_per_block)
                + r.group2_blocks * (r.group2_data + r.ec_per_block);
            assert_eq!(total, r.total_codewords, "{r:?}");
            if r.group2_blocks > 0 {
                assert_eq!(r.group2_data, r.group1_data + 1);
            }
        }
    }

    #[test]
    fn version5_rows() {
        let h = lookup(5, EcLevel::H).unwrap();
        assert_eq!((h.group1_blocks, h.group1_data, h.group2_blocks, h.group2_data), (2, 11, 2, 12));
        assert_eq!(h.ec_per_block, 22);
        assert_eq!(h.total_codewords, 134);
        assert_eq!(h.remainder_bits, 7);
        let l = lookup(5, EcLevel::L).unwrap();
        assert_eq!((l.group1_blocks, l.group1_data, l.ec_per_block), (1, 108, 26));
    }
}
