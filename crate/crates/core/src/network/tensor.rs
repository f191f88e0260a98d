use super::Scalar;
use crate::error::{Error, Result};
use crate::imageops::ImageBuffer;

/// Channel-first feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMap<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> TensorMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Argument("tensor dims must be positive".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::Argument(format!(
                "tensor data length {} != {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(TensorMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        TensorMap {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Channel-first copy of an image.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let (h, w, c) = img.dims();
        let mut data = vec![T::zero(); c * h * w];
        for (i, px) in img.data().chunks_exact(c).enumerate() {
            for (k, v) in px.iter().enumerate() {
                data[k * h * w + i] = T::from_f64(*v);
            }
        }
        TensorMap {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    /// Converts a 1- or 3-channel map back to an image, clamping into `[0, 1]`.
    pub fn to_image(&self) -> Result<ImageBuffer> {
        let (c, h, w) = self.dims();
        let mut data = vec![0.0; c * h * w];
        for k in 0..c {
            for i in 0..h * w {
                data[i * c + k] = self.data[k * h * w + i].to_f64();
            }
        }
        ImageBuffer::from_clamped(h, w, c, data)
    }

    /// Stacks maps along the channel axis.
    pub fn concat(parts: &[&TensorMap<T>]) -> Result<Self> {
        let (_, h, w) = parts[0].dims();
        if parts.iter().any(|p| p.height != h || p.width != w) {
            return Err(Error::Argument("concat of maps with different spatial dims".into()));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(channels * h * w);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(TensorMap {
            channels,
            height: h,
            width: w,
            data,
        })
    }

    /// Copy of channels `start..start + count`.
    pub fn channel_slice(&self, start: usize, count: usize) -> Self {
        let n = self.plane_len();
        TensorMap {
            channels: count,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + count) * n].to_vec(),
        }
    }

    /// Mean over channels, as `f64`.
    pub fn channel_mean(&self) -> Vec<f64> {
        let n = self.plane_len();
        let mut out = vec![0.0; n];
        for c in 0..self.channels {
            for (o, v) in out.iter_mut().zip(&self.data[c * n..(c + 1) * n]) {
                *o += v.to_f64();
            }
        }
        let k = self.channels as f64;
        out.iter_mut().for_each(|v| *v /= k);
        out
    }

    pub fn add_assign(&mut self, other: &TensorMap<T>) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> TensorMap<U> {
        TensorMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }
}
