//! Floating-point luminance rasters and PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Full-scale luminance value.
pub const L_MAX: f64 = 255.0;

/// H×W luminance raster, row-major, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        GrayImage { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_size(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, L_MAX);
        }
    }

    /// Round to 8-bit levels, as written to disk.
    pub fn quantized(&self) -> GrayImage {
        self.map(|v| v.clamp(0.0, L_MAX).round())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Bilinear sample at continuous coordinates (pixel centers at integer + 0.5),
    /// clamping to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Box-filter resampling: each output pixel is the exact area average of the
    /// source region it covers.
    pub fn resize_area(&self, width: usize, height: usize) -> GrayImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let wx = area_weights(self.width, width);
        let wy = area_weights(self.height, height);
        let mut tmp = vec![0.0; width * self.height];
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            for (x, taps) in wx.iter().enumerate() {
                tmp[y * width + x] = taps.iter().map(|&(i, w)| row[i] * w).sum();
            }
        }
        let mut out = vec![0.0; width * height];
        for (y, taps) in wy.iter().enumerate() {
            for x in 0..width {
                out[y * width + x] = taps.iter().map(|&(i, w)| tmp[i * width + x] * w).sum();
            }
        }
        GrayImage { width, height, data: out }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GrayImage> {
        let img = image::open(path.as_ref())?;
        Ok(match img {
            image::DynamicImage::ImageLuma8(g) => GrayImage::from_luma8(&g),
            other => luminance(&other.to_rgb8()),
        })
    }

    pub fn from_luma8(g: &image::GrayImage) -> GrayImage {
        GrayImage {
            width: g.width() as usize,
            height: g.height() as usize,
            data: g.as_raw().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        let raw: Vec<u8> = self.data.iter().map(|&v| v.clamp(0.0, L_MAX).round() as u8).collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, raw).expect("sized buffer")
    }

    /// Write as 8-bit grayscale PNG.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_luma8().save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}

fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut taps = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src {
                let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((s, overlap / scale));
                }
                s += 1;
            }
            taps
        })
        .collect()
}

/// Rec. 601 luma of an RGB image.
pub fn luminance(rgb: &image::RgbImage) -> GrayImage {
    let data = rgb
        .pixels()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).clamp(0.0, L_MAX))
        .collect();
    GrayImage { width: rgb.width() as usize, height: rgb.height() as usize, data }
}
