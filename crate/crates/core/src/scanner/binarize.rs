//! Dual-threshold binarization: `T_b = L(1-α)/2`, `T_w = L(1+α)/2`.

use crate::raster::{GrayImage, L_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ternary {
    Black,
    White,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TernaryImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Ternary>,
}

impl TernaryImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Ternary {
        self.data[y * self.width + x]
    }

    /// Collapse to a binary image (0 / 255); indeterminate pixels take the side of the
    /// single threshold `L/2` applied to `gray`.
    pub fn resolve(&self, gray: &GrayImage) -> GrayImage {
        let half = L_MAX / 2.0;
        GrayImage::from_fn(self.width, self.height, |x, y| match self.get(x, y) {
            Ternary::Black => 0.0,
            Ternary::White => L_MAX,
            Ternary::Indeterminate => {
                if gray.get(x, y) >= half {
                    L_MAX
                } else {
                    0.0
                }
            }
        })
    }
}

/// `(T_b, T_w)` for strictness `alpha`.
pub fn thresholds(alpha: f64) -> (f64, f64) {
    (L_MAX * (1.0 - alpha) / 2.0, L_MAX * (1.0 + alpha) / 2.0)
}

/// Pixels above `T_w` are white, below `T_b` black, the closed band between is
/// indeterminate. At `α = 0` the single threshold uses `≥ T` for white. Pure black and
/// pure white pixels are never indeterminate, even at `α = 1`.
pub fn binarize(gray: &GrayImage, alpha: f64) -> TernaryImage {
    let alpha = alpha.clamp(0.0, 1.0);
    let (tb, tw) = thresholds(alpha);
    let data = gray
        .data()
        .iter()
        .map(|&p| {
            if alpha == 0.0 {
                if p >= tw {
                    Ternary::White
                } else {
                    Ternary::Black
                }
            } else if p > tw || p >= L_MAX {
                Ternary::White
            } else if p < tb || p <= 0.0 {
                Ternary::Black
            } else {
                Ternary::Indeterminate
            }
        })
        .collect();
    TernaryImage { width: gray.width(), height: gray.height(), data }
}
