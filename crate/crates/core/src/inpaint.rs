//! Object removers: fill the holes of a masked image.
//!
//! Every backend goes through [`complete`], which composites the original
//! image back onto keep pixels so only holes carry synthesized content.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::external::ExternalCommand;
use crate::image::Image;
use crate::io;
use crate::mask::KeepMask;
use crate::scalar::Scalar;

pub trait Inpainter<T: Scalar>: Send + Sync {
    /// Fills the holes of `masked`, which is the original image with hole
    /// pixels already zeroed. May return arbitrary values on keep pixels.
    fn fill(&self, masked: &Image<T>, keep: &KeepMask) -> Result<Image<T>>;
}

/// Inpaints `img` under `keep` and composites the original on keep pixels.
pub fn complete<T: Scalar>(
    inpainter: &(impl Inpainter<T> + ?Sized),
    img: &Image<T>,
    keep: &KeepMask,
) -> Result<Image<T>> {
    keep.ensure_dims(img.dims())?;
    if keep.count_ones() == 0 {
        return Err(Error::NoContext);
    }
    let masked = img.apply_mask(keep)?;
    let filled = inpainter.fill(&masked, keep)?;
    img.ensure_same_shape(&filled)?;
    let c = img.channels();
    let mut data = filled.into_data();
    for (px, chunk) in data.chunks_exact_mut(c).enumerate() {
        if keep.bit(px) {
            chunk.copy_from_slice(img.pixel(px / img.width(), px % img.width()));
        }
    }
    Ok(Image::from_raw(img.height(), img.width(), c, data))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InpainterSpec {
    MeanFill,
    DiffusionFill {
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_max_iterations")]
        max_iterations: usize,
    },
    External(ExternalCommand),
}

fn default_tolerance() -> f64 {
    1e-4
}

fn default_max_iterations() -> usize {
    10_000
}

impl Default for InpainterSpec {
    fn default() -> Self {
        InpainterSpec::DiffusionFill {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }
}

impl InpainterSpec {
    pub fn validate(&self) -> Result<()> {
        if let InpainterSpec::DiffusionFill {
            tolerance,
            max_iterations,
        } = self
        {
            if !(*tolerance > 0.0) || *max_iterations == 0 {
                return Err(Error::InvalidConfig(
                    "diffusion fill needs tolerance > 0 and max_iterations >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn Inpainter<T>>> {
        self.validate()?;
        Ok(match self {
            InpainterSpec::MeanFill => Box::new(MeanFill),
            InpainterSpec::DiffusionFill {
                tolerance,
                max_iterations,
            } => Box::new(DiffusionFill {
                tolerance: *tolerance,
                max_iterations: *max_iterations,
            }),
            InpainterSpec::External(cmd) => Box::new(ExternalInpainter(cmd.clone())),
        })
    }
}

/// Fills every hole pixel with the per-channel mean of the keep pixels.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanFill;

impl<T: Scalar> Inpainter<T> for MeanFill {
    fn fill(&self, masked: &Image<T>, keep: &KeepMask) -> Result<Image<T>> {
        let c = masked.channels();
        let mut sums = vec![T::zero(); c];
        let mut n = 0usize;
        for (px, chunk) in masked.data().chunks_exact(c).enumerate() {
            if keep.bit(px) {
                n += 1;
                for (s, &v) in sums.iter_mut().zip(chunk) {
                    *s = *s + v;
                }
            }
        }
        if n == 0 {
            return Err(Error::NoContext);
        }
        let means: Vec<T> = sums.into_iter().map(|s| s / T::of_usize(n)).collect();
        let mut data = masked.data().to_vec();
        for (px, chunk) in data.chunks_exact_mut(c).enumerate() {
            if !keep.bit(px) {
                chunk.copy_from_slice(&means);
            }
        }
        Ok(Image::from_raw(masked.height(), masked.width(), c, data))
    }
}

/// Harmonic fill: solves the 4-neighbour Laplace equation on the holes with
/// keep pixels as Dirichlet data, by Jacobi iteration.
///
/// Iteration starts from the mean of the hole boundary and stops once the
/// largest per-sample update drops below `tolerance` or after
/// `max_iterations` sweeps.
#[derive(Clone, Copy, Debug)]
pub struct DiffusionFill {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DiffusionFill {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }
}

impl DiffusionFill {
    /// Returns the filled image and the number of sweeps performed.
    pub fn solve<T: Scalar>(&self, masked: &Image<T>, keep: &KeepMask) -> Result<(Image<T>, usize)> {
        let (h, w) = masked.dims();
        let c = masked.channels();
        let holes: Vec<usize> = (0..h * w).filter(|&p| !keep.bit(p)).collect();
        let mut cur = masked.data().to_vec();
        if holes.is_empty() {
            return Ok((Image::from_raw(h, w, c, cur), 0));
        }
        if holes.len() == h * w {
            return Err(Error::NoContext);
        }

        // neighbour table: up to 4 in-image neighbours per hole pixel
        let mut nbr = Vec::with_capacity(holes.len() * 4);
        let mut nbr_start = Vec::with_capacity(holes.len() + 1);
        let mut boundary_sum = vec![T::zero(); c];
        let mut boundary_n = 0usize;
        let mut seen = vec![false; h * w];
        for &p in &holes {
            nbr_start.push(nbr.len());
            let (y, x) = (p / w, p % w);
            let cands = [
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
            ];
            for q in cands.into_iter().flatten() {
                nbr.push(q);
                if keep.bit(q) && !seen[q] {
                    seen[q] = true;
                    boundary_n += 1;
                    for (s, &v) in boundary_sum.iter_mut().zip(&cur[q * c..q * c + c]) {
                        *s = *s + v;
                    }
                }
            }
        }
        nbr_start.push(nbr.len());

        let init: Vec<T> = boundary_sum
            .iter()
            .map(|&s| s / T::of_usize(boundary_n.max(1)))
            .collect();
        for &p in &holes {
            cur[p * c..p * c + c].copy_from_slice(&init);
        }
        let mut next = cur.clone();
        let tol = T::of(self.tolerance);
        let mut sweeps = 0;
        while sweeps < self.max_iterations {
            sweeps += 1;
            let mut max_update = T::zero();
            for (k, &p) in holes.iter().enumerate() {
                let ns = &nbr[nbr_start[k]..nbr_start[k + 1]];
                let inv = T::one() / T::of_usize(ns.len());
                for ch in 0..c {
                    let s: T = ns.iter().map(|&q| cur[q * c + ch]).sum();
                    let v = s * inv;
                    let d = (v - cur[p * c + ch]).abs();
                    if d > max_update {
                        max_update = d;
                    }
                    next[p * c + ch] = v;
                }
            }
            std::mem::swap(&mut cur, &mut next);
            if max_update < tol {
                break;
            }
        }
        Ok((Image::from_raw(h, w, c, cur), sweeps))
    }
}

impl<T: Scalar> Inpainter<T> for DiffusionFill {
    fn fill(&self, masked: &Image<T>, keep: &KeepMask) -> Result<Image<T>> {
        self.solve(masked, keep).map(|(img, _)| img)
    }
}

/// Delegates to an external program over the scratch-directory protocol:
/// `input.png` and `keep.pgm` in, `output.png` out.
#[derive(Clone, Debug)]
pub struct ExternalInpainter(pub ExternalCommand);

impl<T: Scalar> Inpainter<T> for ExternalInpainter {
    fn fill(&self, masked: &Image<T>, keep: &KeepMask) -> Result<Image<T>> {
        let cmd = &self.0;
        let dir = cmd.scratch_dir()?;
        io::save_image(masked, dir.path().join("input.png"))?;
        io::save_keep_mask(keep, dir.path().join("keep.pgm"))?;
        cmd.run(dir.path())?;
        let out_path = dir.path().join("output.png");
        if !out_path.exists() {
            return Err(cmd.failure("no output.png produced", ""));
        }
        let out: Image<T> = io::load_image(&out_path).map_err(|e| cmd.failure(e.to_string(), ""))?;
        if out.dims() != masked.dims() {
            return Err(cmd.failure(
                format!("output.png is {:?}, expected {:?}", out.dims(), masked.dims()),
                "",
            ));
        }
        if out.channels() == masked.channels() {
            return Ok(out);
        }
        // channel-count adaptation: gray→rgb replicates, rgb→gray averages
        let (h, w) = out.dims();
        Image::from_fn(h, w, masked.channels(), |y, x, ch| {
            let px = out.pixel(y, x);
            if px.len() == 1 {
                px[0]
            } else if masked.channels() == 1 {
                px.iter().copied().sum::<T>() / T::of_usize(px.len())
            } else {
                px[ch]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::HoleMask;
    use proptest::prelude::*;

    fn diffusion() -> DiffusionFill {
        DiffusionFill::default()
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(10, 12, 3, 0.7f64).unwrap();
        let keep = HoleMask::from_fn(10, 12, |y, x| (2..7).contains(&y) && (3..11).contains(&x)).complement();
        let out = complete(&diffusion(), &img, &keep).unwrap();
        for &v in out.data() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_of_two_samples() {
        let img = Image::new(1, 3, 1, vec![0.0f64, 0.9, 1.0]).unwrap();
        let keep = KeepMask::from_bits(1, 3, vec![true, false, true]).unwrap();
        let out = complete(&diffusion(), &img, &keep).unwrap();
        assert!((out.data()[1] - 0.5).abs() <= 1e-4);
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[2], 1.0);
    }

    #[test]
    fn mean_fill_uses_context_mean() {
        let img = Image::from_fn(4, 4, 1, |y, x, _| (y * 4 + x) as f64 / 15.0).unwrap();
        let hole = HoleMask::from_fn(4, 4, |y, x| (1..3).contains(&y) && (1..3).contains(&x));
        let out = complete(&MeanFill, &img, &hole.complement()).unwrap();
        let context: Vec<f64> = (0..16)
            .filter(|&i| !hole.bit(i))
            .map(|i| i as f64 / 15.0)
            .collect();
        assert_eq!(context.len(), 12);
        let mean = context.iter().sum::<f64>() / 12.0;
        for i in hole.ones_indices().indices() {
            assert!((out.data()[*i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn no_context_is_an_error() {
        let img = Image::filled(3, 3, 1, 0.5f64).unwrap();
        let keep = KeepMask::zeros(3, 3);
        assert!(matches!(complete(&MeanFill, &img, &keep), Err(Error::NoContext)));
        assert!(matches!(complete(&diffusion(), &img, &keep), Err(Error::NoContext)));
    }

    #[test]
    fn border_hole_without_context_on_one_side() {
        // hole runs along the left border; only right-hand neighbours constrain
        let img = Image::from_fn(6, 6, 1, |_, x, _| x as f64 / 5.0).unwrap();
        let keep = KeepMask::from_fn(6, 6, |_, x| x >= 2);
        let out = complete(&diffusion(), &img, &keep).unwrap();
        for y in 0..6 {
            assert!((out.get(y, 0, 0) - 0.4).abs() < 1e-2);
            assert!((out.get(y, 1, 0) - 0.4).abs() < 1e-2);
        }
    }

    #[test]
    fn invalid_spec() {
        let bad = InpainterSpec::DiffusionFill {
            tolerance: 0.0,
            max_iterations: 10,
        };
        assert!(bad.build::<f64>().is_err());
        let spec: InpainterSpec = serde_json::from_str(r#"{"kind":"diffusion-fill"}"#).unwrap();
        assert_eq!(spec, InpainterSpec::default());
    }

    #[cfg(unix)]
    #[test]
    fn external_roundtrip_is_composited() {
        use crate::external::test_support::script;
        let bin = tempfile::tempdir().unwrap();
        // "inpainter" that returns its input unchanged, holes still black
        let prog = script(bin.path(), "echo.sh", "cp \"$1/input.png\" \"$1/output.png\"");
        let spec = InpainterSpec::External(ExternalCommand::new(prog.to_str().unwrap()));
        let inp = spec.build::<f64>().unwrap();
        let img = Image::from_fn(5, 5, 3, |y, x, _| ((y + x) % 3) as f64 / 4.0).unwrap();
        let keep = KeepMask::from_fn(5, 5, |y, _| y != 2);
        let out = complete(inp.as_ref(), &img, &keep).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                if y == 2 {
                    assert!(out.pixel(y, x).iter().all(|&v| v == 0.0));
                } else {
                    assert_eq!(out.pixel(y, x), img.pixel(y, x));
                }
            }
        }
    }

    #[cfg(unix)]
    #[test]
    fn external_errors() {
        use crate::external::test_support::script;
        let bin = tempfile::tempdir().unwrap();
        let img = Image::filled(4, 4, 1, 0.5f64).unwrap();
        let keep = KeepMask::from_fn(4, 4, |y, _| y > 0);
        let silent = script(bin.path(), "silent.sh", "exit 0");
        let inp = ExternalInpainter(ExternalCommand::new(silent.to_str().unwrap()));
        assert!(complete(&inp, &img, &keep).unwrap_err().is_oracle_failure());
        let failing = script(bin.path(), "fail.sh", "echo broken >&2; exit 1");
        let inp = ExternalInpainter(ExternalCommand::new(failing.to_str().unwrap()));
        assert!(complete(&inp, &img, &keep).unwrap_err().to_string().contains("broken"));
        let wrong = script(bin.path(), "wrong.sh", "printf 'P2\\n2 2\\n255\\n0 0 0 0\\n' > \"$1/out.pgm\" && cp \"$1/keep.pgm\" \"$1/output.png\"");
        let inp = ExternalInpainter(ExternalCommand::new(wrong.to_str().unwrap()));
        assert!(complete(&inp, &img, &keep).unwrap_err().is_oracle_failure());
    }

    fn scene_strategy() -> impl Strategy<Value = (Image<f64>, KeepMask)> {
        (2usize..8, 2usize..8).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(0.0f64..=1.0, h * w * 3),
                proptest::collection::vec(proptest::bool::weighted(0.6), h * w),
            )
                .prop_filter_map("needs context", move |(data, mut bits)| {
                    bits[0] = true;
                    Some((
                        Image::new(h, w, 3, data).unwrap(),
                        KeepMask::from_bits(h, w, bits).unwrap(),
                    ))
                })
        })
    }

    proptest! {
        #[test]
        fn compositing_and_maximum_principle((img, keep) in scene_strategy()) {
            let out = complete(&diffusion(), &img, &keep).unwrap();
            let c = img.channels();
            for ch in 0..c {
                let boundary: Vec<f64> = (0..img.pixel_count())
                    .filter(|&p| keep.bit(p))
                    .map(|p| img.data()[p * c + ch])
                    .collect();
                let lo = boundary.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = boundary.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for p in 0..img.pixel_count() {
                    let v = out.data()[p * c + ch];
                    if keep.bit(p) {
                        prop_assert_eq!(v, img.data()[p * c + ch]);
                    } else {
                        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                    }
                }
            }
            // determinism
            prop_assert_eq!(out, complete(&diffusion(), &img, &keep).unwrap());
        }

        #[test]
        fn mean_fill_equals_diffusion_on_constant_boundary(h in 3usize..8, w in 3usize..8, v in 0.0f64..=1.0) {
            let img = Image::filled(h, w, 1, v).unwrap();
            let keep = KeepMask::from_fn(h, w, |y, x| y == 0 || x == 0 || y == h - 1 || x == w - 1);
            let a = complete(&MeanFill, &img, &keep).unwrap();
            let b = complete(&diffusion(), &img, &keep).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
