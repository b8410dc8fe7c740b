//! Binary masks with explicit polarity.
//!
//! A [`KeepMask`] marks pixels the inpainter may see (1 = keep, 0 = hole).
//! A [`HoleMask`] marks pixels belonging to a region of interest such as the
//! removal target or a candidate hole (1 = masked). The two never convert
//! implicitly; crossing polarity always goes through `complement`.

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
struct BitGrid {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BitGrid {
    fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "mask has {} bits, expected {height}x{width}",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    fn filled(height: usize, width: usize, v: bool) -> Self {
        Self {
            height,
            width,
            bits: vec![v; height * width],
        }
    }

    fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn not(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Max filter over a `(2r+1)²` square, separable. `grow=false` gives the
    /// min filter (erosion) with out-of-image pixels ignored.
    fn square_filter(&self, r: usize, grow: bool) -> Self {
        if r == 0 {
            return self.clone();
        }
        let (h, w) = (self.height, self.width);
        let pass = |src: &[bool], len: usize, stride: usize, lines: usize, lstride: usize| {
            let mut out = vec![false; src.len()];
            for l in 0..lines {
                let base = l * lstride;
                for i in 0..len {
                    let lo = i.saturating_sub(r);
                    let hi = (i + r).min(len - 1);
                    let mut acc = !grow;
                    for j in lo..=hi {
                        let b = src[base + j * stride];
                        if grow && b {
                            acc = true;
                            break;
                        }
                        if !grow && !b {
                            acc = false;
                            break;
                        }
                    }
                    out[base + i * stride] = acc;
                }
            }
            out
        };
        let rows = pass(&self.bits, w, 1, h, w);
        let bits = pass(&rows, h, w, w, 1);
        Self {
            height: h,
            width: w,
            bits,
        }
    }
}

impl std::fmt::Debug for BitGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}x{}", self.height, self.width)?;
        for row in self.bits.chunks(self.width) {
            let line: String = row.iter().map(|&b| if b { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

macro_rules! mask_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, Hash, Debug)]
        pub struct $name(BitGrid);

        impl $name {
            pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
                BitGrid::new(height, width, bits).map(Self)
            }

            pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
                let bits = (0..height * width).map(|i| f(i / width, i % width)).collect();
                Self(BitGrid { height, width, bits })
            }

            pub fn ones(height: usize, width: usize) -> Self {
                Self(BitGrid::filled(height, width, true))
            }

            pub fn zeros(height: usize, width: usize) -> Self {
                Self(BitGrid::filled(height, width, false))
            }

            pub fn height(&self) -> usize {
                self.0.height
            }

            pub fn width(&self) -> usize {
                self.0.width
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.0.height, self.0.width)
            }

            pub fn pixel_count(&self) -> usize {
                self.0.bits.len()
            }

            /// Bit at row-major pixel index.
            #[inline]
            pub fn bit(&self, index: usize) -> bool {
                self.0.bits[index]
            }

            #[inline]
            pub fn at(&self, y: usize, x: usize) -> bool {
                self.0.bits[y * self.0.width + x]
            }

            pub fn set(&mut self, y: usize, x: usize, v: bool) {
                let w = self.0.width;
                self.0.bits[y * w + x] = v;
            }

            pub fn bits(&self) -> &[bool] {
                &self.0.bits
            }

            /// Number of 1-bits.
            pub fn count_ones(&self) -> usize {
                self.0.count()
            }

            /// Row-major indices of the 1-bits.
            pub fn ones_indices(&self) -> Region {
                Region(
                    self.0
                        .bits
                        .iter()
                        .enumerate()
                        .filter_map(|(i, &b)| b.then_some(i))
                        .collect(),
                )
            }

            pub fn is_subset_of(&self, other: &Self) -> bool {
                self.dims() == other.dims()
                    && self.0.bits.iter().zip(&other.0.bits).all(|(&a, &b)| !a || b)
            }

            pub fn union(&self, other: &Self) -> Result<Self> {
                other.ensure_dims(self.dims())?;
                let bits = self.0.bits.iter().zip(&other.0.bits).map(|(&a, &b)| a || b).collect();
                Ok(Self(BitGrid { height: self.0.height, width: self.0.width, bits }))
            }

            pub fn intersection(&self, other: &Self) -> Result<Self> {
                other.ensure_dims(self.dims())?;
                let bits = self.0.bits.iter().zip(&other.0.bits).map(|(&a, &b)| a && b).collect();
                Ok(Self(BitGrid { height: self.0.height, width: self.0.width, bits }))
            }

            pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
                if self.dims() != dims {
                    return Err(Error::DimensionMismatch { expected: dims, actual: self.dims() });
                }
                Ok(())
            }
        }
    };
}

mask_type!(
    /// Keep-sense mask: 1 = pixel visible to the inpainter, 0 = hole.
    KeepMask
);

mask_type!(
    /// Hole-sense mask: 1 = pixel in the region of interest (target or hole).
    HoleMask
);

impl KeepMask {
    /// Holes of this mask as a hole-sense mask.
    pub fn complement(&self) -> HoleMask {
        HoleMask(self.0.not())
    }

    /// Number of hole (0) pixels.
    pub fn hole_count(&self) -> usize {
        self.pixel_count() - self.count_ones()
    }
}

impl HoleMask {
    /// Pixels outside this region, as a keep mask.
    pub fn complement(&self) -> KeepMask {
        KeepMask(self.0.not())
    }

    /// Number of marked pixels.
    pub fn area(&self) -> usize {
        self.count_ones()
    }

    /// Morphological dilation by a square structuring element of side
    /// `2·⌊(kernel_size+1)/2⌋ + 1`; `kernel_size = 0` is the identity.
    pub fn dilate(&self, kernel_size: usize) -> HoleMask {
        HoleMask(self.0.square_filter(kernel_size.div_ceil(2), true))
    }

    /// Erosion by a `(2·radius+1)²` square. Pixels beyond the border do not
    /// constrain the result.
    pub fn erode(&self, radius: usize) -> HoleMask {
        HoleMask(self.0.square_filter(radius, false))
    }
}

/// Set of pixel indices over `{0..H}×{0..W}`, sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Region(Vec<usize>);

impl Region {
    /// Builds a region from arbitrary indices; sorts, dedups and bounds-checks.
    pub fn new(mut indices: Vec<usize>, pixel_count: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= pixel_count {
                return Err(Error::Precondition(format!(
                    "pixel index {last} out of bounds for {pixel_count} pixels"
                )));
            }
        }
        Ok(Self(indices))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn to_hole_mask(&self, height: usize, width: usize) -> Result<HoleMask> {
        let mut bits = vec![false; height * width];
        for &i in &self.0 {
            *bits.get_mut(i).ok_or_else(|| {
                Error::Precondition(format!("pixel index {i} out of bounds"))
            })? = true;
        }
        HoleMask::from_bits(height, width, bits)
    }
}
