//! Row-major raster containers. Origin is the top-left pixel.

use serde::{Deserialize, Serialize};

/// Single-channel raster of `f64` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps `data`; returns `None` when the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

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
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Copies the `w`×`h` window whose top-left corner is `(x0, y0)`.
    ///
    /// Panics if the window leaves the plane.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Plane {
        assert!(
            x0 + w <= self.width && y0 + h <= self.height,
            "crop out of bounds"
        );
        Plane::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// Writes `src` into this plane with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, src: &Plane, x0: usize, y0: usize) {
        assert!(
            x0 + src.width <= self.width && y0 + src.height <= self.height,
            "paste out of bounds"
        );
        for y in 0..src.height {
            let row = &src.data[y * src.width..(y + 1) * src.width];
            let start = (y0 + y) * self.width + x0;
            self.data[start..start + src.width].copy_from_slice(row);
        }
    }

    /// Bilinear resampling with pixel-center alignment. Identity when the size is unchanged.
    pub fn resize(&self, width: usize, height: usize) -> Plane {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Plane::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let tx = fx - x0 as f64;
            let ty = fy - y0 as f64;
            let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
            let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
            top * (1.0 - ty) + bottom * ty
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Three-channel raster, channels interleaved per pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![color; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<[f64; 3]>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: [f64; 3]) {
        self.data[y * self.width + x] = value;
    }

    pub fn channel(&self, c: usize) -> Plane {
        Plane::from_fn(self.width, self.height, |x, y| self.get(x, y)[c])
    }

    pub fn from_channels(r: &Plane, g: &Plane, b: &Plane) -> Self {
        assert!(r.dims() == g.dims() && g.dims() == b.dims());
        Self::from_fn(r.width(), r.height(), |x, y| {
            [r.get(x, y), g.get(x, y), b.get(x, y)]
        })
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RgbImage {
        assert!(
            x0 + w <= self.width && y0 + h <= self.height,
            "crop out of bounds"
        );
        RgbImage::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    pub fn paste(&mut self, src: &RgbImage, x0: usize, y0: usize) {
        assert!(
            x0 + src.width <= self.width && y0 + src.height <= self.height,
            "paste out of bounds"
        );
        for y in 0..src.height {
            for x in 0..src.width {
                self.set(x0 + x, y0 + y, src.get(x, y));
            }
        }
    }

    pub fn resize(&self, width: usize, height: usize) -> RgbImage {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let [r, g, b] = [0, 1, 2].map(|c| self.channel(c).resize(width, height));
        RgbImage::from_channels(&r, &g, &b)
    }

    /// Box-filter downsampling by an integer factor; trailing pixels that do
    /// not fill a whole block are dropped.
    pub fn downsample(&self, factor: usize) -> RgbImage {
        let factor = factor.max(1);
        if factor == 1 {
            return self.clone();
        }
        let w = (self.width / factor).max(1);
        let h = (self.height / factor).max(1);
        let norm = 1.0 / (factor * factor) as f64;
        RgbImage::from_fn(w, h, |x, y| {
            let mut acc = [0.0; 3];
            for dy in 0..factor {
                for dx in 0..factor {
                    let p = self.get(
                        (x * factor + dx).min(self.width - 1),
                        (y * factor + dy).min(self.height - 1),
                    );
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                }
            }
            acc.map(|v| v * norm)
        })
    }
}

/// Quantizes a unit-range sample to 8 bits (round to nearest).
#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_paste_roundtrip() {
        let p = Plane::from_fn(6, 5, |x, y| (x * 10 + y) as f64);
        let c = p.crop(2, 1, 3, 2);
        assert_eq!(c.get(0, 0), 21.0);
        let mut q = Plane::zeros(6, 5);
        q.paste(&c, 2, 1);
        assert_eq!(q.get(4, 2), p.get(4, 2));
        assert_eq!(q.get(0, 0), 0.0);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let p = Plane::filled(7, 7, 0.3);
        let r = p.resize(16, 16);
        assert!(r.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn quantization_is_exact_for_u8_values() {
        for v in 0..=255u8 {
            assert_eq!(to_u8(v as f64 / 255.0), v);
        }
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = RgbImage::from_fn(4, 4, |x, _| [x as f64, 0.0, 1.0]);
        let d = img.downsample(2);
        assert_eq!(d.dims(), (2, 2));
        assert_eq!(d.get(0, 0), [0.5, 0.0, 1.0]);
        assert_eq!(d.get(1, 1), [2.5, 0.0, 1.0]);
    }
}
