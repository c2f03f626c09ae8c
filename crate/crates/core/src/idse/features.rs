//! Pyramid feature statistics: per level, the low-pass intensity plus eight fixed
//! zero-sum 3×3 derivative filters, summarised by channel means and covariances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GrayImage, L_MAX};

/// Sobel x/y, two diagonal Sobels, Laplacian, second derivatives xx, yy and xy.
pub const FILTER_BANK: [[f64; 9]; 8] = [
    [-0.125, 0.0, 0.125, -0.25, 0.0, 0.25, -0.125, 0.0, 0.125],
    [-0.125, -0.25, -0.125, 0.0, 0.0, 0.0, 0.125, 0.25, 0.125],
    [0.0, 0.125, 0.25, -0.125, 0.0, 0.125, -0.25, -0.125, 0.0],
    [-0.25, -0.125, 0.0, -0.125, 0.0, 0.125, 0.0, 0.125, 0.25],
    [0.0, 0.25, 0.0, 0.25, -1.0, 0.25, 0.0, 0.25, 0.0],
    [0.125, -0.25, 0.125, 0.25, -0.5, 0.25, 0.125, -0.25, 0.125],
    [0.125, 0.25, 0.125, -0.25, -0.5, -0.25, 0.125, 0.25, 0.125],
    [0.25, 0.0, -0.25, 0.0, 0.0, 0.0, -0.25, 0.0, 0.25],
];

/// Intensity channel plus the filter bank.
pub const CHANNELS: usize = 1 + FILTER_BANK.len();

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub mean: Vec<f64>,
    /// Row-major `channels × channels`.
    pub cov: Vec<f64>,
}

impl LevelStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub levels: Vec<LevelStats>,
}

#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

fn blur_down(p: &Plane) -> Plane {
    let (w, h) = (p.w, p.h);
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in BINOMIAL.iter().enumerate() {
                acc += wk * p.data[y * w + clampi(x as isize + k as isize - 2, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let (w2, h2) = (w / 2, h / 2);
    let mut out = vec![0.0; w2 * h2];
    for y2 in 0..h2 {
        for x2 in 0..w2 {
            let (x, y) = (2 * x2, 2 * y2);
            let mut acc = 0.0;
            for (k, wk) in BINOMIAL.iter().enumerate() {
                acc += wk * tmp[clampi(y as isize + k as isize - 2, h) * w + x];
            }
            out[y2 * w2 + x2] = acc;
        }
    }
    Plane { w: w2, h: h2, data: out }
}

/// Adjoint of [`blur_down`]: scatter a gradient on the coarse plane back to the fine one.
fn blur_down_adjoint(g: &Plane, w: usize, h: usize) -> Vec<f64> {
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y2 in 0..g.h {
        for x2 in 0..g.w {
            let (x, y) = (2 * x2, 2 * y2);
            let v = g.data[y2 * g.w + x2];
            for (k, wk) in BINOMIAL.iter().enumerate() {
                tmp[clampi(y as isize + k as isize - 2, h) * w + x] += wk * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = tmp[y * w + x];
            if v == 0.0 {
                continue;
            }
            for (k, wk) in BINOMIAL.iter().enumerate() {
                out[y * w + clampi(x as isize + k as isize - 2, w)] += wk * v;
            }
        }
    }
    out
}

pub(crate) fn pyramid(img: &[f64], w: usize, h: usize, levels: usize) -> Result<Vec<Plane>> {
    if levels == 0 {
        return Err(Error::Parameter("feature pyramid needs at least one level".into()));
    }
    let need = (1usize << levels).max(3 << (levels - 1));
    if w < need || h < need {
        return Err(Error::Parameter(format!("{w}x{h} image too small for {levels} pyramid levels")));
    }
    let mut planes = vec![Plane { w, h, data: img.to_vec() }];
    for _ in 1..levels {
        let next = blur_down(planes.last().expect("non-empty"));
        planes.push(next);
    }
    Ok(planes)
}

/// Channel × tap matrix: the centre tap for the intensity channel, then the filters.
fn channel_taps() -> [[f64; 9]; CHANNELS] {
    let mut f = [[0.0; 9]; CHANNELS];
    f[0][4] = 1.0;
    f[1..].copy_from_slice(&FILTER_BANK);
    f
}

/// Window moments over the interior positions `p` of a plane: `u[t] = mean P(p+t)` and
/// `m[t][t'] = mean P(p+t)·P(p+t')` for the nine 3×3 taps.
/// Taken about the plane mean `shift` so covariances do not suffer cancellation.
#[derive(Debug, Clone)]
struct TapMoments {
    shift: f64,
    u: [f64; 9],
    m: [[f64; 9]; 9],
}

fn tap_moments(p: &Plane) -> TapMoments {
    let (w, h) = (p.w, p.h);
    let (vw, vh) = (w - 2, h - 2);
    let count = vw * vh;
    let shift = p.data.iter().sum::<f64>() / p.data.len() as f64;
    let centred: Vec<f64> = p.data.iter().map(|v| v - shift).collect();
    let mut u = [0.0; 9];
    let mut m = [[0.0; 9]; 9];
    for y in 0..vh {
        let rows: Vec<&[f64]> = (0..9).map(|t| {
            let (tx, ty) = (t % 3, t / 3);
            &centred[(y + ty) * w + tx..(y + ty) * w + tx + vw]
        }).collect();
        for a in 0..9 {
            u[a] += rows[a].iter().sum::<f64>();
            for b in a..9 {
                m[a][b] += rows[a].iter().zip(rows[b]).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    let nf = count as f64;
    for a in 0..9 {
        u[a] /= nf;
        for b in a..9 {
            m[a][b] /= nf;
            m[b][a] = m[a][b];
        }
    }
    TapMoments { shift, u, m }
}

fn level_stats(tm: &TapMoments) -> LevelStats {
    let f = channel_taps();
    let centred: Vec<f64> = f.iter().map(|row| row.iter().zip(&tm.u).map(|(a, b)| a * b).sum()).collect();
    let mut cov = vec![0.0; CHANNELS * CHANNELS];
    for a in 0..CHANNELS {
        for b in a..CHANNELS {
            let mut s = 0.0;
            for t in 0..9 {
                if f[a][t] == 0.0 {
                    continue;
                }
                for t2 in 0..9 {
                    s += f[a][t] * tm.m[t][t2] * f[b][t2];
                }
            }
            let c = s - centred[a] * centred[b];
            cov[a * CHANNELS + b] = c;
            cov[b * CHANNELS + a] = c;
        }
    }
    // only the intensity channel sees the shift; the filters are zero-sum
    let mut mean = centred;
    mean[0] += tm.shift;
    LevelStats { mean, cov }
}

pub(crate) fn stats_of(img: &[f64], w: usize, h: usize, levels: usize) -> Result<(Vec<Plane>, FeatureStats)> {
    let planes = pyramid(img, w, h, levels)?;
    let levels = planes.iter().map(|p| level_stats(&tap_moments(p))).collect();
    Ok((planes, FeatureStats { levels }))
}

/// Gradient of one level's scalar with respect to the plane, from gradients with
/// respect to the level mean and (row-major) covariance.
fn level_backward(p: &Plane, stats: &LevelStats, gm: &[f64], gc: &[f64]) -> Vec<f64> {
    let f = channel_taps();
    let (w, h) = (p.w, p.h);
    let (vw, vh) = (w - 2, h - 2);
    let nf = (vw * vh) as f64;
    // cov = F M Fᵀ − μμᵀ, μ = F u
    let mut hmat = [[0.0; 9]; 9];
    for t in 0..9 {
        for t2 in 0..9 {
            let mut s = 0.0;
            for a in 0..CHANNELS {
                if f[a][t] == 0.0 {
                    continue;
                }
                for b in 0..CHANNELS {
                    s += f[a][t] * gc[a * CHANNELS + b] * f[b][t2];
                }
            }
            hmat[t][t2] = s;
        }
    }
    let mut d_mu = [0.0; CHANNELS];
    for a in 0..CHANNELS {
        let mut s = gm[a];
        for b in 0..CHANNELS {
            s -= (gc[a * CHANNELS + b] + gc[b * CHANNELS + a]) * stats.mean[b];
        }
        d_mu[a] = s;
    }
    let mut ku = [0.0; 9];
    for t in 0..9 {
        ku[t] = (0..CHANNELS).map(|a| f[a][t] * d_mu[a]).sum();
    }
    let mut hs = [[0.0; 9]; 9];
    for t in 0..9 {
        for t2 in 0..9 {
            hs[t][t2] = hmat[t][t2] + hmat[t2][t];
        }
    }
    // interior: grad(q) = (Σ ku + Σ_δ K(δ) P(q+δ)) / N with K(δ) = Σ_{t'−t=δ} Hs[t][t']
    let mut kern = [[0.0; 5]; 5];
    for t in 0..9 {
        for t2 in 0..9 {
            let dx = (t2 % 3) as isize - (t % 3) as isize;
            let dy = (t2 / 3) as isize - (t / 3) as isize;
            kern[(dy + 2) as usize][(dx + 2) as usize] += hs[t][t2];
        }
    }
    let ku_sum: f64 = ku.iter().sum();
    let mut grad = vec![0.0; w * h];
    let inside = |x: usize, y: usize| x >= 2 && y >= 2 && x + 2 < w && y + 2 < h;
    for y in 2..h.saturating_sub(2) {
        let out = &mut grad[y * w..(y + 1) * w];
        for x in 2..w - 2 {
            out[x] = ku_sum;
        }
        for (ky, krow) in kern.iter().enumerate() {
            let src = &p.data[(y + ky - 2) * w..(y + ky - 1) * w];
            for (kx, &k) in krow.iter().enumerate() {
                if k == 0.0 {
                    continue;
                }
                for x in 2..w - 2 {
                    out[x] += k * src[x + kx - 2];
                }
            }
        }
    }
    // border pixels: only taps whose window start stays inside the valid region
    for y in 0..h {
        for x in 0..w {
            if inside(x, y) {
                continue;
            }
            let mut s = 0.0;
            for t in 0..9 {
                let (tx, ty) = (t % 3, t / 3);
                if x < tx || y < ty || x - tx >= vw || y - ty >= vh {
                    continue;
                }
                let (px, py) = (x - tx, y - ty);
                s += ku[t];
                for t2 in 0..9 {
                    s += hs[t][t2] * p.data[(py + t2 / 3) * w + px + t2 % 3];
                }
            }
            grad[y * w + x] = s;
        }
    }
    grad.iter_mut().for_each(|g| *g /= nf);
    grad
}

/// Gradient with respect to the level-0 pixels, given per-level gradients of a scalar
/// with respect to each level's mean and (row-major) covariance.
pub(crate) fn backward(planes: &[Plane], stats: &FeatureStats, d_mean: &[Vec<f64>], d_cov: &[Vec<f64>]) -> Vec<f64> {
    let mut carry: Option<Vec<f64>> = None;
    for l in (0..planes.len()).rev() {
        let p = &planes[l];
        let mut grad = level_backward(p, &stats.levels[l], &d_mean[l], &d_cov[l]);
        if let Some(c) = carry.take() {
            grad.iter_mut().zip(&c).for_each(|(g, c)| *g += c);
        }
        if l == 0 {
            return grad;
        }
        let fine = &planes[l - 1];
        carry = Some(blur_down_adjoint(&Plane { w: p.w, h: p.h, data: grad }, fine.w, fine.h));
    }
    unreachable!("at least one level")
}

/// Statistics of `image` (scaled to `[0, 1]`) over `levels` pyramid levels.
pub fn feature_stats(image: &GrayImage, levels: usize) -> Result<FeatureStats> {
    let z: Vec<f64> = image.data().iter().map(|v| v / L_MAX).collect();
    Ok(stats_of(&z, image.width(), image.height(), levels)?.1)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;

    fn texture(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<(f64, f64, f64)> =
            (0..6).map(|_| (rng.random_range(0.05..0.6), rng.random_range(0.05..0.6), rng.random_range(0.0..6.28))).collect();
        GrayImage::from_fn(w, h, |x, y| {
            let v: f64 = phases.iter().map(|(fx, fy, p)| (fx * x as f64 + fy * y as f64 + p).sin()).sum();
            128.0 + 15.0 * v
        })
    }

    /// Direct per-position responses, the straightforward definition.
    fn naive_stats(p: &Plane) -> LevelStats {
        let f = channel_taps();
        let (vw, vh) = (p.w - 2, p.h - 2);
        let n = (vw * vh) as f64;
        let mut resp = vec![vec![0.0; vw * vh]; CHANNELS];
        for y in 0..vh {
            for x in 0..vw {
                for (c, row) in f.iter().enumerate() {
                    resp[c][y * vw + x] = (0..9).map(|t| row[t] * p.data[(y + t / 3) * p.w + x + t % 3]).sum();
                }
            }
        }
        let mean: Vec<f64> = resp.iter().map(|r| r.iter().sum::<f64>() / n).collect();
        let mut cov = vec![0.0; CHANNELS * CHANNELS];
        for a in 0..CHANNELS {
            for b in 0..CHANNELS {
                cov[a * CHANNELS + b] =
                    resp[a].iter().zip(&resp[b]).map(|(x, y)| (x - mean[a]) * (y - mean[b])).sum::<f64>() / n;
            }
        }
        LevelStats { mean, cov }
    }

    #[test]
    fn moments_match_direct_responses() {
        let img = texture(37, 29, 11);
        let z: Vec<f64> = img.data().iter().map(|v| v / 255.0).collect();
        let (planes, st) = stats_of(&z, 37, 29, 3).unwrap();
        for (p, lv) in planes.iter().zip(&st.levels) {
            let direct = naive_stats(p);
            for (a, b) in lv.mean.iter().zip(&direct.mean) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in lv.cov.iter().zip(&direct.cov) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_differences() {
        // scalar: fixed linear functional of means and covariances
        let (w, h) = (23, 19);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let z: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
        let levels = 2;
        let gm: Vec<Vec<f64>> = (0..levels).map(|_| (0..CHANNELS).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let gc: Vec<Vec<f64>> =
            (0..levels).map(|_| (0..CHANNELS * CHANNELS).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let scalar = |z: &[f64]| -> f64 {
            let (_, st) = stats_of(z, w, h, levels).unwrap();
            st.levels
                .iter()
                .enumerate()
                .map(|(l, lv)| {
                    lv.mean.iter().zip(&gm[l]).map(|(a, b)| a * b).sum::<f64>()
                        + lv.cov.iter().zip(&gc[l]).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum()
        };
        let (planes, st) = stats_of(&z, w, h, levels).unwrap();
        let grad = backward(&planes, &st, &gm, &gc);
        let eps = 1e-6;
        for i in [0, 1, w + 1, 2 * w + 2, 100, 211, w * h / 2, w * h - 1] {
            let mut zp = z.clone();
            zp[i] += eps;
            let mut zm = z.clone();
            zm[i] -= eps;
            let fd = (scalar(&zp) - scalar(&zm)) / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-6 * fd.abs().max(1e-3), "pixel {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn filters_are_zero_sum() {
        for f in FILTER_BANK {
            assert!(f.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_image() {
        let st = feature_stats(&GrayImage::new(32, 32, 77.0), 3).unwrap();
        for lv in &st.levels {
            assert!((lv.mean[0] - 77.0 / 255.0).abs() < 1e-12);
            assert!(lv.mean[1..].iter().all(|m| m.abs() < 1e-12));
            assert!(lv.cov.iter().all(|c| c.abs() < 1e-20));
        }
    }

    #[test]
    fn covariance_symmetric_psd() {
        let st = feature_stats(&texture(64, 48, 1), 3).unwrap();
        for lv in &st.levels {
            let m = nalgebra::DMatrix::from_row_slice(CHANNELS, CHANNELS, &lv.cov);
            assert_eq!(m, m.transpose());
            assert!(m.symmetric_eigenvalues().iter().all(|&e| e > -1e-12));
        }
    }

    #[test]
    fn translation_invariance() {
        let big = texture(260, 200, 7);
        let crop = |dx: usize| GrayImage::from_fn(200, 200, |x, y| big.get(x + dx, y));
        let a = feature_stats(&crop(0), 3).unwrap();
        let b = feature_stats(&crop(4), 3).unwrap();
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dm: Vec<f64> = la.mean.iter().zip(&lb.mean).map(|(x, y)| x - y).collect();
            let dc: Vec<f64> = la.cov.iter().zip(&lb.cov).map(|(x, y)| x - y).collect();
            assert!(norm(&dm) < 0.01 * norm(&la.mean), "mean drift");
            assert!(norm(&dc) < 0.01 * norm(&la.cov), "cov drift {}", norm(&dc) / norm(&la.cov));
        }
    }

    #[test]
    fn deterministic() {
        let img = texture(40, 40, 3);
        assert_eq!(feature_stats(&img, 2).unwrap(), feature_stats(&img, 2).unwrap());
    }

    #[test]
    fn too_small() {
        assert!(feature_stats(&GrayImage::new(7, 7, 0.0), 3).is_err());
        assert!(feature_stats(&GrayImage::new(12, 12, 0.0), 3).is_ok());
        assert!(feature_stats(&GrayImage::new(12, 12, 0.0), 0).is_err());
    }

    #[test]
    fn blur_down_adjoint_identity() {
        // <A x, y> == <x, A^T y>
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (13, 10);
        let x: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ax = blur_down(&Plane { w, h, data: x.clone() });
        let y: Vec<f64> = (0..ax.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let aty = blur_down_adjoint(&Plane { w: ax.w, h: ax.h, data: y.clone() }, w, h);
        let lhs: f64 = ax.data.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
