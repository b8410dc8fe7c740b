//! Reference-quality metrics against a ground-truth image.

use crate::error::Result;
use crate::image::Image;
use crate::mask::HoleMask;
use crate::scalar::Scalar;

/// Reported PSNR when the mean squared error is zero.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 8;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn values<T: Scalar>(img: &Image<T>) -> Vec<f64> {
    img.data().iter().map(|v| v.as_f64()).collect()
}

/// Mean squared error over all pixels and channels.
pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.data().len() as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum();
    Ok(sum / n)
}

/// Peak signal-to-noise ratio for unit dynamic range, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * m.log10()).min(PSNR_CAP_DB))
}

/// Sum of squared differences restricted to `region` (all channels).
pub fn region_energy<T: Scalar>(a: &Image<T>, b: &Image<T>, region: &HoleMask) -> Result<f64> {
    a.ensure_same_shape(b)?;
    region.ensure_dims(a.dims())?;
    let c = a.channels();
    let (da, db) = (a.data(), b.data());
    Ok(region
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .flat_map(|(i, _)| (i * c..(i + 1) * c).map(|k| (da[k].as_f64() - db[k].as_f64()).powi(2)))
        .sum())
}

/// Sum of squared differences over the whole image.
pub fn l2_energy<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    Ok(mse(a, b)? * a.data().len() as f64)
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut s = vec![0.0; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y, x);
                s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w: w + 1, s }
    }

    fn window(&self, y: usize, x: usize, k: usize) -> f64 {
        let at = |yy: usize, xx: usize| self.s[yy * self.w + xx];
        at(y + k, x + k) - at(y, x + k) - at(y + k, x) + at(y, x)
    }
}

/// Mean SSIM over all 8x8 windows (stride 1) and channels, unit dynamic
/// range, population statistics. Images smaller than the window use a single
/// window covering the whole image.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (h, w, c) = (a.height(), a.width(), a.channels());
    let k = SSIM_WINDOW.min(h).min(w);
    let (c1, c2) = ((SSIM_K1).powi(2), (SSIM_K2).powi(2));
    let (va, vb) = (values(a), values(b));
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let px = |v: &[f64], y: usize, x: usize| v[(y * w + x) * c + ch];
        let sa = Integral::new(h, w, |y, x| px(&va, y, x));
        let sb = Integral::new(h, w, |y, x| px(&vb, y, x));
        let saa = Integral::new(h, w, |y, x| px(&va, y, x).powi(2));
        let sbb = Integral::new(h, w, |y, x| px(&vb, y, x).powi(2));
        let sab = Integral::new(h, w, |y, x| px(&va, y, x) * px(&vb, y, x));
        for y in 0..=h - k {
            for x in 0..=w - k {
                let ma = sa.window(y, x, k) / n;
                let mb = sb.window(y, x, k) / n;
                let vaa = (saa.window(y, x, k) / n - ma * ma).max(0.0);
                let vbb = (sbb.window(y, x, k) / n - mb * mb).max(0.0);
                let cov = sab.window(y, x, k) / n - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
