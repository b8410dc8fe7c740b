//! Importance maps: expected judge score given that a pixel is masked.
//!
//! For a random keep-mask `M`, the importance of pixel `x` is
//! `Φ(x) = E[J(R(I ⊙ M)) | M(x) = 0]`. Expanding the conditional
//! probability gives the weighted sum
//! `Φ(x) = Σ_m J(m)·(1 − m(x))·P[m] / Σ_m (1 − m(x))·P[m]`,
//! which [`exact_importance`] evaluates directly over an enumerable family.
//! With i.i.d. samples the probabilities drop out and the estimate is the
//! mean score over the samples that hole `x`; this is what [`Accumulator`]
//! computes. It is the masked-pixel dual of the usual keep-conditioned
//! saliency estimate (conditioning on `M(x) = 1`).
//!
//! Sample contributions are folded with a pairwise tree whose shape depends
//! only on the number of samples, so the floating-point result is identical
//! for any thread count.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::{Judge, JudgeBreakdown};
use crate::mask::KeepMask;
use crate::sampler::MaskBatch;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"AURAIMP1";
const LEAF: usize = 16;

/// Finalized importance values plus per-pixel hole counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceMap<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
    /// Number of samples (or family members) in which the pixel was a hole.
    pub coverage: Vec<u32>,
    pub n_samples: usize,
    pub seed: u64,
}

/// A mask paired with its judge score.
#[derive(Clone, Copy, Debug)]
pub struct ScoredSample<'a, T> {
    pub mask: &'a KeepMask,
    pub score: JudgeBreakdown<T>,
}

/// Running sums for the Monte-Carlo estimate.
///
/// Tracks the total score plus each judge component so per-component maps
/// can be produced as diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator<T> {
    height: usize,
    width: usize,
    total: Vec<T>,
    total_sq: Vec<T>,
    background: Vec<T>,
    afterimage: Vec<T>,
    detect: Vec<T>,
    coverage: Vec<u32>,
    samples: usize,
}

/// Which judge term a component map is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Total,
    Background,
    Afterimage,
    Detect,
}

impl<T: Scalar> Accumulator<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            total: vec![T::zero(); n],
            total_sq: vec![T::zero(); n],
            background: vec![T::zero(); n],
            afterimage: vec![T::zero(); n],
            detect: vec![T::zero(); n],
            coverage: vec![0; n],
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn coverage(&self) -> &[u32] {
        &self.coverage
    }

    /// Adds `score` at every hole pixel of `mask`.
    pub fn accumulate(&mut self, sample: &ScoredSample<'_, T>) -> Result<()> {
        sample.mask.ensure_dims((self.height, self.width))?;
        if !sample.score.total.is_finite() {
            return Err(Error::Precondition(format!(
                "non-finite judge total {}",
                sample.score.total
            )));
        }
        let s = &sample.score;
        let sq = s.total * s.total;
        for p in 0..self.coverage.len() {
            if !sample.mask.bit(p) {
                self.total[p] = self.total[p] + s.total;
                self.total_sq[p] = self.total_sq[p] + sq;
                self.background[p] = self.background[p] + s.background;
                self.afterimage[p] = self.afterimage[p] + s.afterimage;
                self.detect[p] = self.detect[p] + s.detect;
                self.coverage[p] += 1;
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Element-wise sum of two accumulators.
    pub fn merge(mut self, other: &Self) -> Result<Self> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::DimensionMismatch {
                expected: (self.height, self.width),
                actual: (other.height, other.width),
            });
        }
        let add = |a: &mut Vec<T>, b: &Vec<T>| a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x + y);
        add(&mut self.total, &other.total);
        add(&mut self.total_sq, &other.total_sq);
        add(&mut self.background, &other.background);
        add(&mut self.afterimage, &other.afterimage);
        add(&mut self.detect, &other.detect);
        self.coverage
            .iter_mut()
            .zip(&other.coverage)
            .for_each(|(a, b)| *a += b);
        self.samples += other.samples;
        Ok(self)
    }

    /// Folds `samples` in the fixed pairwise-tree schedule: runs of up to 16
    /// consecutive samples are accumulated sequentially, then adjacent
    /// halves are merged recursively (split at the midpoint).
    pub fn fold(height: usize, width: usize, samples: &[ScoredSample<'_, T>]) -> Result<Self> {
        if samples.len() <= LEAF {
            let mut acc = Self::new(height, width);
            for s in samples {
                acc.accumulate(s)?;
            }
            return Ok(acc);
        }
        let (left, right) = samples.split_at(samples.len() / 2);
        let (a, b) = rayon::join(
            || Self::fold(height, width, left),
            || Self::fold(height, width, right),
        );
        a?.merge(&b?)
    }

    fn mean_map(&self, sums: &[T]) -> Result<Vec<T>> {
        finalize_values(sums, &self.coverage, |s, n| s / T::of(n as f64))
    }

    /// Mean score per covered pixel; never-holed pixels get the sentinel
    /// `min(covered values) − 1`.
    pub fn finalize(&self) -> Result<ImportanceMap<T>> {
        self.finalize_component(Component::Total)
    }

    pub fn finalize_component(&self, which: Component) -> Result<ImportanceMap<T>> {
        let sums = match which {
            Component::Total => &self.total,
            Component::Background => &self.background,
            Component::Afterimage => &self.afterimage,
            Component::Detect => &self.detect,
        };
        Ok(ImportanceMap {
            height: self.height,
            width: self.width,
            values: self.mean_map(sums)?,
            coverage: self.coverage.clone(),
            n_samples: self.samples,
            seed: 0,
        })
    }

    /// Estimated standard error of each pixel's mean (sample standard
    /// deviation of the scores holing it over √coverage); `None` where
    /// coverage is below 2.
    pub fn standard_errors(&self) -> Vec<Option<T>> {
        (0..self.coverage.len())
            .map(|p| {
                let n = self.coverage[p];
                if n < 2 {
                    return None;
                }
                let nf = T::of(n as f64);
                let mean = self.total[p] / nf;
                let var = ((self.total_sq[p] - mean * self.total[p]) / (nf - T::one())).max(T::zero());
                Some((var / nf).sqrt())
            })
            .collect()
    }
}

/// Divides sums by coverage and applies the never-holed sentinel.
fn finalize_values<T: Scalar>(sums: &[T], coverage: &[u32], div: impl Fn(T, u32) -> T) -> Result<Vec<T>> {
    let mut min: Option<T> = None;
    let mut values: Vec<T> = sums
        .iter()
        .zip(coverage)
        .map(|(&s, &n)| {
            if n == 0 {
                return T::zero();
            }
            let v = div(s, n);
            min = Some(match min {
                Some(m) if m <= v => m,
                _ => v,
            });
            v
        })
        .collect();
    let sentinel = min.ok_or(Error::NoCoverage)? - T::one();
    for (v, &n) in values.iter_mut().zip(coverage) {
        if n == 0 {
            *v = sentinel;
        }
    }
    Ok(values)
}

/// Anything that can score a keep-mask on a fixed image.
pub trait MaskScorer<T: Scalar>: Sync {
    fn dims(&self) -> (usize, usize);
    fn score(&self, keep: &KeepMask) -> Result<JudgeBreakdown<T>>;
}

impl<T: Scalar> MaskScorer<T> for Judge<T> {
    fn dims(&self) -> (usize, usize) {
        self.original().dims()
    }

    fn score(&self, keep: &KeepMask) -> Result<JudgeBreakdown<T>> {
        Judge::score(self, keep)
    }
}

/// Adapts a closure into a [`MaskScorer`].
pub struct FnScorer<F> {
    pub dims: (usize, usize),
    pub f: F,
}

impl<T: Scalar, F> MaskScorer<T> for FnScorer<F>
where
    F: Fn(&KeepMask) -> Result<JudgeBreakdown<T>> + Sync,
{
    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn score(&self, keep: &KeepMask) -> Result<JudgeBreakdown<T>> {
        (self.f)(keep)
    }
}

/// Monte-Carlo importance estimate with its diagnostics.
#[derive(Clone, Debug)]
pub struct ImportanceEstimate<T> {
    pub map: ImportanceMap<T>,
    /// Per-pixel standard error of the estimate (`None` below 2 samples).
    pub standard_error: Vec<Option<T>>,
    /// Judge scores in batch order.
    pub scores: Vec<JudgeBreakdown<T>>,
    pub accumulator: Accumulator<T>,
}

impl<T: Scalar> ImportanceEstimate<T> {
    /// Mean squared standard error over pixels where it is defined.
    pub fn mean_estimator_variance(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .standard_error
            .iter()
            .flatten()
            .map(|s| s.as_f64().powi(2))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Scores every mask of `batch` (in parallel) and folds the results.
pub fn estimate_importance<T: Scalar>(
    judge: &(impl MaskScorer<T> + ?Sized),
    batch: &MaskBatch,
) -> Result<ImportanceEstimate<T>> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty mask batch".into()));
    }
    let (h, w) = judge.dims();
    let done = AtomicUsize::new(0);
    let step = (batch.len() / 10).max(1);
    let scores = batch
        .masks
        .par_iter()
        .map(|m| {
            let s = judge.score(m);
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if k % step == 0 || k == batch.len() {
                log::info!("judged {k}/{} samples", batch.len());
            }
            s
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<ScoredSample<'_, T>> = batch
        .masks
        .iter()
        .zip(&scores)
        .map(|(mask, &score)| ScoredSample { mask, score })
        .collect();
    let acc = Accumulator::fold(h, w, &samples)?;
    let mut map = acc.finalize()?;
    map.seed = batch.seed;
    Ok(ImportanceEstimate {
        map,
        standard_error: acc.standard_errors(),
        scores,
        accumulator: acc,
    })
}

/// Exact conditional expectation over an enumerated mask family.
///
/// `family` pairs each mask with its probability (weights need not sum to
/// one). Pixels that no positively-weighted mask holes get the same sentinel
/// as [`Accumulator::finalize`].
pub fn exact_importance<T: Scalar>(
    judge: &(impl MaskScorer<T> + ?Sized),
    family: &[(KeepMask, f64)],
) -> Result<ImportanceMap<T>> {
    let (h, w) = judge.dims();
    let scores = family
        .par_iter()
        .map(|(m, _)| judge.score(m))
        .collect::<Result<Vec<_>>>()?;
    let n = h * w;
    let mut num = vec![T::zero(); n];
    let mut den = vec![T::zero(); n];
    let mut holes = vec![0u32; n];
    for ((m, p), s) in family.iter().zip(&scores) {
        m.ensure_dims((h, w))?;
        let p = T::of(*p);
        for x in 0..n {
            let weight = if m.bit(x) { T::zero() } else { T::one() } * p;
            num[x] = num[x] + s.total * weight;
            den[x] = den[x] + weight;
            if !m.bit(x) {
                holes[x] += 1;
            }
        }
    }
    let positive: Vec<u32> = den.iter().map(|d| u32::from(*d > T::zero())).collect();
    let ratio: Vec<T> = num
        .iter()
        .zip(&den)
        .map(|(&a, &b)| if b > T::zero() { a / b } else { T::zero() })
        .collect();
    let values = finalize_values(&ratio, &positive, |r, _| r)?;
    Ok(ImportanceMap {
        height: h,
        width: w,
        values,
        coverage: holes,
        n_samples: family.len(),
        seed: 0,
    })
}

/// Min/max of a map, as written next to its heatmap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapLegend {
    pub min: f64,
    pub max: f64,
    pub colormap: &'static str,
}

impl<T: Scalar> ImportanceMap<T> {
    pub fn value(&self, y: usize, x: usize) -> T {
        self.values[y * self.width + x]
    }

    /// Serializes as `AURAIMP1`, then little-endian `u32` height, width,
    /// sample count, `u64` seed, and `height·width` `f32` values row-major.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(28 + 4 * self.values.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n_samples as u32).to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a grid written by [`write_binary`](Self::write_binary).
    /// Coverage is not stored and comes back as zeros.
    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::Format {
            what: "importance grid",
            reason: reason.into(),
        };
        if bytes.len() < 28 || &bytes[..8] != MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (h, w, n) = (u32_at(8), u32_at(12), u32_at(16));
        let seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        if bytes.len() != 28 + 4 * h * w {
            return Err(bad("payload size does not match header"));
        }
        let values = bytes[28..]
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        Ok(Self {
            height: h,
            width: w,
            values,
            coverage: vec![0; h * w],
            n_samples: n,
            seed,
        })
    }

    /// Renders a min-max normalized "hot" heatmap: `t ∈ [0,1]` maps to
    /// `(clamp(3t), clamp(3t−1), clamp(3t−2))`, black → red → yellow → white.
    pub fn save_heatmap(&self, path: impl AsRef<Path>) -> Result<HeatmapLegend> {
        let (min, max) = self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let v = v.as_f64();
            (lo.min(v), hi.max(v))
        });
        let span = if max > min { max - min } else { 1.0 };
        let mut rgb = Vec::with_capacity(self.values.len() * 3);
        for v in &self.values {
            let t = (v.as_f64() - min) / span;
            for k in 0..3 {
                rgb.push(((3.0 * t - k as f64).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        crate::io::save_rgb8(path.as_ref(), self.height, self.width, rgb)?;
        Ok(HeatmapLegend {
            min,
            max,
            colormap: "hot",
        })
    }
}
