//! Random keep-mask sampling.
//!
//! Each sampled mask starts from the complement of the target segmentation
//! and punches a few filled disks into it. The first `anchored_patch_count`
//! disks are anchored on a random target pixel; the rest land anywhere in an
//! `r`-padded frame around the image. Every disk center is then jittered by
//! up to `r` along each axis.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`). Mask `i` of a
//! batch draws from stream `i` of the generator keyed by
//! `ChaCha8Rng::seed_from_u64(seed)`, so a batch is a pure function of
//! `(seed, config, target)` no matter how many threads produce it.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::mask::{HoleMask, KeepMask};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub patch_count_min: u32,
    pub patch_count_max: u32,
    pub anchored_patch_count: u32,
    pub radius_min: u32,
    pub radius_max: u32,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            patch_count_min: 3,
            patch_count_max: 5,
            anchored_patch_count: 3,
            radius_min: 10,
            radius_max: 40,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(format!("sampler: {m}")));
        if self.n_samples == 0 {
            return fail("n_samples must be positive");
        }
        if self.patch_count_min == 0 || self.patch_count_min > self.patch_count_max {
            return fail("need 0 < patch_count_min <= patch_count_max");
        }
        if self.radius_min == 0 || self.radius_min > self.radius_max {
            return fail("need 0 < radius_min <= radius_max");
        }
        if self.anchored_patch_count == 0 || self.anchored_patch_count > self.patch_count_min {
            return fail("need 0 < anchored_patch_count <= patch_count_min");
        }
        Ok(())
    }
}

/// Generator for mask `index` of the batch seeded with `seed`.
pub fn mask_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Sets every pixel whose center lies within `radius` of `(cx, cy)` to a hole.
fn punch_disk(mask: &mut KeepMask, cx: f64, cy: f64, radius: f64) {
    let (h, w) = mask.dims();
    let y0 = (cy - radius).ceil().max(0.0);
    let y1 = (cy + radius).floor().min(h as f64 - 1.0);
    let x0 = (cx - radius).ceil().max(0.0);
    let x1 = (cx + radius).floor().min(w as f64 - 1.0);
    if y0 > y1 || x0 > x1 {
        return;
    }
    let r2 = radius * radius;
    for y in y0 as usize..=y1 as usize {
        let dy = y as f64 - cy;
        for x in x0 as usize..=x1 as usize {
            let dx = x as f64 - cx;
            if dx * dx + dy * dy <= r2 {
                mask.set(y, x, false);
            }
        }
    }
}

/// Redraws allowed before giving up on a mask that keeps no pixel.
pub const MAX_REDRAWS: usize = 64;

/// Draws one keep-mask: the target is always a hole, plus random disks.
///
/// Draws that hole every pixel leave nothing to inpaint from and are
/// redrawn from the same generator, up to [`MAX_REDRAWS`] times.
///
/// The configuration is not validated here so tests can force degenerate
/// patch counts; [`sample_batch`] validates.
pub fn sample_mask<R: Rng + ?Sized>(
    target: &HoleMask,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<KeepMask> {
    let anchors = target.ones_indices();
    if anchors.is_empty() {
        return Err(Error::EmptyTarget);
    }
    if target.area() == target.bits().len() {
        return Err(Error::Precondition("target covers the whole image".into()));
    }
    for _ in 0..=MAX_REDRAWS {
        let mask = draw(target, anchors.indices(), cfg, rng);
        if mask.count_ones() > 0 {
            return Ok(mask);
        }
    }
    Err(Error::Precondition(format!(
        "{} consecutive sampled masks kept no pixel; lower radius_max",
        MAX_REDRAWS + 1
    )))
}

fn draw<R: Rng + ?Sized>(target: &HoleMask, anchors: &[usize], cfg: &SamplerConfig, rng: &mut R) -> KeepMask {
    let (h, w) = target.dims();
    let mut mask = target.complement();
    let patches = if cfg.patch_count_max == 0 {
        0
    } else {
        rng.gen_range(cfg.patch_count_min..=cfg.patch_count_max)
    };
    for j in 0..patches {
        let r = rng.gen_range(cfg.radius_min..=cfg.radius_max) as f64;
        let (x, y) = if j < cfg.anchored_patch_count {
            let p = anchors[rng.gen_range(0..anchors.len())];
            ((p % w) as f64, (p / w) as f64)
        } else {
            (
                rng.gen_range(-r..=w as f64 + r),
                rng.gen_range(-r..=h as f64 + r),
            )
        };
        let cx = rng.gen_range(x - r..=x + r);
        let cy = rng.gen_range(y - r..=y + r);
        punch_disk(&mut mask, cx, cy, r);
    }
    mask
}

/// An ordered set of keep-masks together with how they were produced.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskBatch {
    pub masks: Vec<KeepMask>,
    pub seed: u64,
    /// `None` for hand-assembled batches.
    pub config: Option<SamplerConfig>,
}

impl MaskBatch {
    pub fn from_masks(masks: Vec<KeepMask>) -> Self {
        Self {
            masks,
            seed: 0,
            config: None,
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Writes `mask_NNNNN.pgm` files and a `manifest.json` with seed and config.
    pub fn dump(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, m) in self.masks.iter().enumerate() {
            io::save_keep_mask(m, dir.join(format!("mask_{i:05}.pgm")))?;
        }
        let manifest = serde_json::json!({
            "seed": self.seed,
            "count": self.masks.len(),
            "config": self.config,
        });
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("json"))
            .map_err(|e| Error::io(&path, e))
    }
}

/// Samples `cfg.n_samples` masks in parallel from per-index streams.
pub fn sample_batch(target: &HoleMask, cfg: &SamplerConfig) -> Result<MaskBatch> {
    cfg.validate()?;
    if target.area() == 0 {
        return Err(Error::EmptyTarget);
    }
    let masks = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| sample_mask(target, cfg, &mut mask_rng(cfg.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskBatch {
        masks,
        seed: cfg.seed,
        config: Some(cfg.clone()),
    })
}
