//! Multi-channel intensity images.

use crate::error::{Error, Result};
use crate::mask::KeepMask;
use crate::scalar::Scalar;

/// An `H×W×C` grid of intensities in `[0, 1]`, stored row-major with
/// channels interleaved. `C` is 1 (gray) or 3 (RGB).
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage("zero-sized image".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero() || **v > T::one())
        {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image from a per-pixel function returning one value per channel.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
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

    /// Skips range validation; callers guarantee `data` holds values in `[0,1]`.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
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

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Channel values of pixel `(y, x)`.
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        other.ensure_dims(self.dims())?;
        if other.channels != self.channels {
            return Err(Error::InvalidImage(format!(
                "channel count mismatch: {} vs {}",
                self.channels, other.channels
            )));
        }
        Ok(())
    }

    /// Element-wise product with a keep mask: pixels where `keep` is 0 become
    /// black in every channel.
    pub fn apply_mask(&self, keep: &KeepMask) -> Result<Self> {
        keep.ensure_dims(self.dims())?;
        let mut data = self.data.clone();
        for (px, chunk) in data.chunks_exact_mut(self.channels).enumerate() {
            if !keep.bit(px) {
                chunk.fill(T::zero());
            }
        }
        Ok(Self::from_raw(self.height, self.width, self.channels, data))
    }

    /// Same image with every pixel where `select` is false set to zero.
    pub(crate) fn zero_outside(&self, select: impl Fn(usize) -> bool) -> Self {
        let mut data = self.data.clone();
        for (px, chunk) in data.chunks_exact_mut(self.channels).enumerate() {
            if !select(px) {
                chunk.fill(T::zero());
            }
        }
        Self::from_raw(self.height, self.width, self.channels, data)
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image::from_raw(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        )
    }
}

/// Sum of squared differences over all channels of the pixels where
/// `select(pixel_index)` holds.
pub(crate) fn squared_error<T: Scalar>(
    a: &Image<T>,
    b: &Image<T>,
    select: impl Fn(usize) -> bool,
) -> T {
    let c = a.channels();
    a.data()
        .chunks_exact(c)
        .zip(b.data().chunks_exact(c))
        .enumerate()
        .filter(|(px, _)| select(*px))
        .map(|(_, (pa, pb))| {
            pa.iter()
                .zip(pb)
                .map(|(&u, &v)| (u - v) * (u - v))
                .sum::<T>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::KeepMask;

    #[test]
    fn rejects_out_of_range() {
        assert!(Image::new(1, 2, 1, vec![0.5f64, 1.5]).is_err());
        assert!(Image::new(1, 2, 1, vec![0.5f64, f64::NAN]).is_err());
        assert!(Image::new(1, 2, 1, vec![0.5f64]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.5f64, 0.5]).is_err());
    }

    #[test]
    fn identity_mask_leaves_image_unchanged() {
        let img = Image::from_fn(3, 4, 3, |y, x, c| ((y * 4 + x) * 3 + c) as f64 / 36.0).unwrap();
        let out = img.apply_mask(&KeepMask::ones(3, 4)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn zero_mask_blacks_out() {
        let img = Image::filled(3, 3, 3, 0.8f32).unwrap();
        let out = img.apply_mask(&KeepMask::zeros(3, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_mask_on_gray() {
        let img = Image::filled(2, 2, 1, 0.5f64).unwrap();
        let keep = KeepMask::from_bits(2, 2, vec![true, false, false, true]).unwrap();
        let out = img.apply_mask(&keep).unwrap();
        assert_eq!(out.data(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn mask_dimension_mismatch() {
        let img = Image::filled(2, 2, 1, 0.5f64).unwrap();
        assert!(matches!(
            img.apply_mask(&KeepMask::ones(2, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
