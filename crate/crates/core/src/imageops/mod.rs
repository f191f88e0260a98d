//! Raster container and the pixel operations every other module builds on.
//!
//! Coordinates are `(row, col)` with pixel centres at integer positions.
//! A positive vertical translation moves content downward; every module in
//! the crate uses this convention.

mod codec;
mod resample;

pub use codec::{decode_png, encode_png, read_png, write_png};
pub use resample::{resample_plane, translate_plane, Boundary, ResizeMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel-last raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Rect {
            top,
            left,
            height,
            width,
        }
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    /// Moves the rectangle vertically; `None` if it would leave the
    /// non-negative quadrant.
    pub fn shifted_rows(&self, delta: i64) -> Option<Rect> {
        let top = self.top as i64 + delta;
        (top >= 0).then_some(Rect { top: top as usize, ..*self })
    }
}

fn check_channels(channels: usize) -> Result<()> {
    if channels == 1 || channels == 3 {
        Ok(())
    } else {
        Err(Error::Argument(format!("channels must be 1 or 3, got {channels}")))
    }
}

impl ImageBuffer {
    /// Builds an image from raw data. Values must be finite and inside `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_channels(channels)?;
        if height == 0 || width == 0 {
            return Err(Error::Argument("image dims must be positive".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::Argument(format!(
                "data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Argument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`ImageBuffer::new`] but clamps into `[0, 1]`; non-finite values become 0.
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// One channel as a row-major plane.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0.0; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        Self::from_clamped(height, width, channels, data)
    }

    pub fn crop(&self, r: Rect) -> Result<ImageBuffer> {
        if r.height == 0 || r.width == 0 || r.bottom() > self.height || r.right() > self.width {
            return Err(Error::Bounds(format!(
                "rect {r:?} outside {}x{} image",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(r.height * r.width * c);
        for y in r.top..r.bottom() {
            let start = (y * self.width + r.left) * c;
            data.extend_from_slice(&self.data[start..start + r.width * c]);
        }
        Ok(ImageBuffer {
            height: r.height,
            width: r.width,
            channels: c,
            data,
        })
    }

    /// Resizes to `out_h x out_w`. Area mode only accepts an integer
    /// downscale factor shared by both axes.
    pub fn resize(&self, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<ImageBuffer> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::Argument("output dims must be >= 1".into()));
        }
        let planes = (0..self.channels)
            .map(|c| resample_plane(&self.channel_plane(c), self.height, self.width, out_h, out_w, mode))
            .collect::<Result<Vec<_>>>()?;
        Self::from_planes(out_h, out_w, &planes)
    }

    /// Samples the input at `(y - dy, x - dx)` with bilinear interpolation.
    pub fn translate(&self, dy: f64, dx: f64, boundary: Boundary) -> Result<ImageBuffer> {
        if !(dy.abs() < self.height as f64 && dx.abs() < self.width as f64) {
            return Err(Error::Argument(format!(
                "translation ({dy}, {dx}) too large for {}x{} image",
                self.height, self.width
            )));
        }
        let planes: Vec<Vec<f64>> = (0..self.channels)
            .map(|c| translate_plane(&self.channel_plane(c), self.height, self.width, dy, dx, boundary))
            .collect();
        Self::from_planes(self.height, self.width, &planes)
    }

    /// Luma conversion with weights 0.299 / 0.587 / 0.114.
    pub fn to_grayscale(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        ImageBuffer {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Replicates a single channel into three.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }

    pub fn flip_horizontal(&self) -> ImageBuffer {
        let mut out = self.clone();
        let c = self.channels;
        for y in 0..self.height {
            for x in 0..self.width {
                for k in 0..c {
                    out.data[(y * self.width + x) * c + k] = self.get(y, self.width - 1 - x, k);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> ImageBuffer {
        let c = self.channels;
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                for k in 0..c {
                    data[(x * self.height + y) * c + k] = self.get(y, x, k);
                }
            }
        }
        ImageBuffer {
            height: self.width,
            width: self.height,
            channels: c,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::new(h, w, c, (0..h * w * c).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn ramp(h: usize, w: usize) -> ImageBuffer {
        ImageBuffer::from_fn(h, w, 1, |y, x, _| (y * w + x) as f64 / (h * w) as f64).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn crop_full_is_identity() {
        let img = random_image(7, 5, 3, 1);
        assert_eq!(img.crop(Rect::new(0, 0, 7, 5)).unwrap(), img);
    }

    #[test]
    fn crop_top_left_block() {
        let img = ramp(4, 4);
        let c = img.crop(Rect::new(0, 0, 2, 2)).unwrap();
        assert_eq!(c.data(), &[img.get(0, 0, 0), img.get(0, 1, 0), img.get(1, 0, 0), img.get(1, 1, 0)]);
    }

    #[test]
    fn crop_out_of_bounds() {
        let img = ramp(4, 4);
        assert!(matches!(img.crop(Rect::new(3, 0, 2, 2)), Err(Error::Bounds(_))));
        assert!(matches!(img.crop(Rect::new(0, 0, 0, 2)), Err(Error::Bounds(_))));
    }

    #[test]
    fn crop_composition() {
        let img = random_image(32, 32, 3, 9);
        let outer = Rect::new(3, 5, 20, 17);
        let inner = Rect::new(4, 2, 9, 11);
        let two_step = img.crop(outer).unwrap().crop(inner).unwrap();
        let one_step = img
            .crop(Rect::new(outer.top + inner.top, outer.left + inner.left, 9, 11))
            .unwrap();
        assert_eq!(two_step, one_step);
    }

    #[test]
    fn grayscale_weights() {
        let red = ImageBuffer::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((red.to_grayscale().get(0, 0, 0) - 0.299).abs() < 1e-12);
        let gray = ImageBuffer::filled(3, 3, 3, 0.37).unwrap().to_grayscale();
        assert!(gray.data().iter().all(|v| (v - 0.37).abs() < 1e-12));
        let one = random_image(4, 4, 1, 2);
        assert_eq!(one.to_grayscale(), one);
    }

    #[test]
    fn transpose_and_flip_roundtrip() {
        let img = random_image(5, 7, 3, 4);
        assert_eq!(img.transpose().transpose(), img);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.transpose().dims(), (7, 5, 3));
    }

    #[test]
    fn translate_rejects_oversized_shift() {
        let img = ramp(4, 4);
        assert!(img.translate(4.0, 0.0, Boundary::Zero).is_err());
    }

    proptest! {
        #[test]
        fn ops_stay_in_unit_range(seed in 0u64..1000, dy in -6.0f64..6.0, dx in -6.0f64..6.0) {
            let img = random_image(16, 12, 3, seed);
            for out in [
                img.translate(dy, dx, Boundary::Replicate).unwrap(),
                img.translate(dy, dx, Boundary::Zero).unwrap(),
                img.resize(23, 9, ResizeMode::Bicubic).unwrap(),
                img.resize(31, 25, ResizeMode::Bilinear).unwrap(),
                img.resize(8, 6, ResizeMode::Area).unwrap(),
            ] {
                prop_assert!(out.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn operations_are_pure(seed in 0u64..1000, dy in -3.0f64..3.0) {
            let img = random_image(10, 10, 1, seed);
            let a = img.translate(dy, 0.3, Boundary::Replicate).unwrap();
            let b = img.translate(dy, 0.3, Boundary::Replicate).unwrap();
            prop_assert_eq!(a.data(), b.data());
        }
    }
}
