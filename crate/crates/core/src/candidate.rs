//! Percentile candidates and judge-based selection.
//!
//! Candidate `j` masks the top `⌈(P_j/100 + A(L)/(H·W))·H·W⌉` pixels of a
//! ranking of the importance map. Pixels are ranked by value (descending)
//! with ties broken by row-major index, so every candidate has exactly its
//! target cardinality and candidates are nested. Under
//! [`CandidateRule::TargetFirst`] the target pixels are ranked ahead of all
//! others, which makes every candidate a superset of the target.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::{ImportanceMap, MaskScorer};
use crate::io;
use crate::judge::JudgeBreakdown;
use crate::mask::HoleMask;
use crate::scalar::Scalar;

/// Pixel indices ordered by decreasing importance, ties by increasing index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    pub fn new<T: Scalar>(map: &ImportanceMap<T>) -> Self {
        let mut order: Vec<usize> = (0..map.values.len()).collect();
        order.sort_by(|&a, &b| map.values[b].cmp_finite(&map.values[a]).then(a.cmp(&b)));
        Self(order)
    }

    /// Target pixels first (by index), then the rest as in [`Ranking::new`].
    pub fn target_first<T: Scalar>(map: &ImportanceMap<T>, target: &HoleMask) -> Self {
        let (inside, outside): (Vec<usize>, Vec<usize>) =
            Self::new(map).0.into_iter().partition(|&p| target.bit(p));
        let mut order = inside;
        order.sort_unstable();
        order.extend(outside);
        Self(order)
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    /// Value of the `count`-th ranked pixel.
    pub fn threshold<T: Scalar>(&self, map: &ImportanceMap<T>, count: usize) -> T {
        map.values[self.0[count - 1]]
    }
}

/// Number of pixels candidate `percentile` masks: `ceil(P·H·W/100) + A(L)`.
pub fn target_count(percentile: u32, target_area: usize, pixel_count: usize) -> Result<usize> {
    if percentile == 0 {
        return Err(Error::Precondition("percentile must be positive".into()));
    }
    let extra = (percentile as usize * pixel_count).div_ceil(100);
    let count = extra + target_area;
    if count > pixel_count {
        return Err(Error::Precondition(format!(
            "percentile {percentile} plus target area {target_area} exceeds the {pixel_count}-pixel image"
        )));
    }
    Ok(count)
}

/// Importance value at which the candidate for `percentile` is cut.
pub fn percentile_threshold<T: Scalar>(map: &ImportanceMap<T>, percentile: u32, target: &HoleMask) -> Result<T> {
    target.ensure_dims((map.height, map.width))?;
    let k = target_count(percentile, target.area(), map.values.len())?;
    Ok(Ranking::new(map).threshold(map, k))
}

/// Hole mask of the `count` highest-ranked pixels.
pub fn candidate_mask<T: Scalar>(map: &ImportanceMap<T>, ranking: &Ranking, count: usize) -> HoleMask {
    let mut bits = vec![false; map.values.len()];
    for &p in &ranking.0[..count] {
        bits[p] = true;
    }
    HoleMask::from_bits(map.height, map.width, bits).expect("dimensions from map")
}

/// One thresholded candidate, before scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal<T> {
    pub percentile: u32,
    pub threshold: T,
    pub mask: HoleMask,
}

/// How candidates are cut from the importance map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateRule {
    /// Plain top-k of the importance map; may leave target pixels out.
    TopK,
    /// The target plus the top-ranked pixels outside it.
    #[default]
    TargetFirst,
}

/// Top-k candidates for percentiles `1..=p_max`.
pub fn propose<T: Scalar>(map: &ImportanceMap<T>, target: &HoleMask, p_max: u32) -> Result<Vec<Proposal<T>>> {
    propose_with(map, target, p_max, CandidateRule::TopK)
}

/// Candidates for percentiles `1..=p_max` under `rule`.
pub fn propose_with<T: Scalar>(
    map: &ImportanceMap<T>,
    target: &HoleMask,
    p_max: u32,
    rule: CandidateRule,
) -> Result<Vec<Proposal<T>>> {
    target.ensure_dims((map.height, map.width))?;
    if p_max == 0 {
        return Err(Error::InvalidConfig("p_max must be at least 1".into()));
    }
    let ranking = match rule {
        CandidateRule::TopK => Ranking::new(map),
        CandidateRule::TargetFirst => Ranking::target_first(map, target),
    };
    (1..=p_max)
        .map(|pct| {
            let k = target_count(pct, target.area(), map.values.len())?;
            Ok(Proposal {
                percentile: pct,
                threshold: ranking.threshold(map, k),
                mask: candidate_mask(map, &ranking, k),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate<T> {
    pub percentile: u32,
    pub threshold: T,
    pub mask: HoleMask,
    pub score: JudgeBreakdown<T>,
    /// Whether every target pixel is inside this candidate.
    pub contains_target: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet<T> {
    pub candidates: Vec<Candidate<T>>,
    pub selected_index: usize,
}

/// First index of the maximum total.
pub fn argmax_total<T: Scalar>(scores: &[JudgeBreakdown<T>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b].total >= s.total => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Scores each proposal under the keep-mask `complement(C_j)` and picks the
/// highest total (earliest on ties).
pub fn select_best<T: Scalar>(
    scorer: &(impl MaskScorer<T> + ?Sized),
    target: &HoleMask,
    proposals: Vec<Proposal<T>>,
) -> Result<CandidateSet<T>> {
    if proposals.is_empty() {
        return Err(Error::Precondition("no candidates to select from".into()));
    }
    let scores = proposals
        .par_iter()
        .map(|p| scorer.score(&p.mask.complement()))
        .collect::<Result<Vec<_>>>()?;
    let selected_index = argmax_total(&scores).expect("non-empty");
    let candidates: Vec<Candidate<T>> = proposals
        .into_iter()
        .zip(scores)
        .map(|(p, score)| Candidate {
            contains_target: target.is_subset_of(&p.mask),
            percentile: p.percentile,
            threshold: p.threshold,
            mask: p.mask,
            score,
        })
        .collect();
    for c in candidates.iter().filter(|c| !c.contains_target) {
        log::warn!("candidate P={} does not contain the whole target", c.percentile);
    }
    Ok(CandidateSet {
        candidates,
        selected_index,
    })
}

#[derive(Serialize)]
struct ScoreRow<'a, T> {
    percentile: u32,
    threshold: f64,
    area: usize,
    contains_target: bool,
    selected: bool,
    #[serde(flatten)]
    score: &'a JudgeBreakdown<T>,
}

impl<T: Scalar> CandidateSet<T> {
    pub fn selected(&self) -> &Candidate<T> {
        &self.candidates[self.selected_index]
    }
}

impl<T: Scalar + Serialize> CandidateSet<T> {
    /// Writes `candidate_PP.pgm` per candidate, `scores.jsonl`, and the
    /// selected mask as `aura_mask.pgm`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut lines = String::new();
        for (i, c) in self.candidates.iter().enumerate() {
            io::save_hole_mask(&c.mask, dir.join(format!("candidate_{:02}.pgm", c.percentile)))?;
            let row = ScoreRow {
                percentile: c.percentile,
                threshold: c.threshold.as_f64(),
                area: c.mask.area(),
                contains_target: c.contains_target,
                selected: i == self.selected_index,
                score: &c.score,
            };
            lines.push_str(&serde_json::to_string(&row).expect("json"));
            lines.push('\n');
        }
        let path = dir.join("scores.jsonl");
        std::fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
        io::save_hole_mask(&self.selected().mask, dir.join("aura_mask.pgm"))
    }
}
