//! `.fstats` files: one line of JSON header, then per layer the little-endian `f32` mean
//! vector followed by the row-major covariance matrix.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureStats, LevelStats};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FstatsHeader {
    pub format_version: u32,
    pub layers: Vec<String>,
    pub channels: Vec<usize>,
    #[serde(default)]
    pub source_hash: String,
}

const SYMMETRY_TOLERANCE: f64 = 1e-5;

pub fn parse_fstats(bytes: &[u8]) -> Result<(FstatsHeader, FeatureStats)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("fstats: missing header line".into()))?;
    let header: FstatsHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Format(format!("fstats header: {e}")))?;
    if header.format_version != 1 {
        return Err(Error::Format(format!("fstats: unsupported format version {}", header.format_version)));
    }
    if header.layers.len() != header.channels.len() {
        return Err(Error::Format("fstats: layers and channels differ in length".into()));
    }
    let body = &bytes[nl + 1..];
    let expected: usize = header.channels.iter().map(|c| 4 * (c + c * c)).sum();
    if body.len() != expected {
        return Err(Error::Format(format!("fstats: body is {} bytes, header implies {expected}", body.len())));
    }
    let mut floats = body.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
    let mut levels = Vec::with_capacity(header.channels.len());
    for (&c, name) in header.channels.iter().zip(&header.layers) {
        let mean: Vec<f64> = floats.by_ref().take(c).collect();
        let cov: Vec<f64> = floats.by_ref().take(c * c).collect();
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("fstats: non-finite value in layer {name}")));
        }
        for a in 0..c {
            for b in a + 1..c {
                let (x, y) = (cov[a * c + b], cov[b * c + a]);
                if (x - y).abs() > SYMMETRY_TOLERANCE * x.abs().max(y.abs()).max(1.0) {
                    return Err(Error::Format(format!("fstats: covariance of layer {name} is not symmetric")));
                }
            }
        }
        levels.push(LevelStats { mean, cov });
    }
    Ok((header, FeatureStats { levels }))
}

pub fn read_fstats(path: impl AsRef<Path>) -> Result<(FstatsHeader, FeatureStats)> {
    parse_fstats(&fs::read(path)?)
}

pub fn encode_fstats(stats: &FeatureStats, layers: Vec<String>, source_hash: String) -> Result<Vec<u8>> {
    if layers.len() != stats.levels.len() {
        return Err(Error::Parameter("one layer name per level".into()));
    }
    let header = FstatsHeader {
        format_version: 1,
        layers,
        channels: stats.levels.iter().map(LevelStats::channels).collect(),
        source_hash,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for lv in &stats.levels {
        for v in lv.mean.iter().chain(&lv.cov) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_fstats(path: impl AsRef<Path>, stats: &FeatureStats, layers: Vec<String>, source_hash: String) -> Result<()> {
    fs::write(path, encode_fstats(stats, layers, source_hash)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureStats {
        FeatureStats {
            levels: vec![
                LevelStats { mean: vec![0.5, -0.25], cov: vec![1.0, 0.125, 0.125, 2.0] },
                LevelStats { mean: vec![3.0], cov: vec![0.0625] },
            ],
        }
    }

    fn names() -> Vec<String> {
        vec!["relu1_1".into(), "relu2_1".into()]
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let bytes = encode_fstats(&sample(), names(), "abc".into()).unwrap();
        let (h, st) = parse_fstats(&bytes).unwrap();
        assert_eq!(h.channels, vec![2, 1]);
        assert_eq!(st, sample());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.fstats");
        write_fstats(&p, &sample(), names(), String::new()).unwrap();
        assert_eq!(read_fstats(&p).unwrap().1, sample());
    }

    #[test]
    fn malformed_files() {
        let good = encode_fstats(&sample(), names(), String::new()).unwrap();
        assert!(matches!(parse_fstats(&good[..good.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(parse_fstats(b"not json\n"), Err(Error::Format(_))));
        assert!(matches!(parse_fstats(b"{}"), Err(Error::Format(_))));
        let mut asym = sample();
        asym.levels[0].cov[1] = 0.5;
        let bytes = encode_fstats(&asym, names(), String::new()).unwrap();
        assert!(matches!(parse_fstats(&bytes), Err(Error::Format(_))));
    }
}
