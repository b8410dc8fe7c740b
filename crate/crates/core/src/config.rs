//! Pipeline configuration, stored as a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::candidate::CandidateRule;
use crate::error::{Error, Result};
use crate::external::ExternalCommand;
use crate::inpaint::InpainterSpec;
use crate::judge::{DetectorSpec, MetricSpec, Weights};
use crate::sampler::SamplerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mask distribution; `sampler.seed` seeds the whole run.
    pub sampler: SamplerConfig,
    pub inpainter: InpainterSpec,
    pub detector: DetectorSpec,
    pub metric: MetricSpec,
    pub lambda_a: f64,
    pub lambda_d: f64,
    /// Largest candidate percentile.
    pub p_max: u32,
    pub candidate_rule: CandidateRule,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let w = Weights::default();
        Self {
            sampler: SamplerConfig::default(),
            inpainter: InpainterSpec::default(),
            detector: DetectorSpec::default(),
            metric: MetricSpec::default(),
            lambda_a: w.lambda_a,
            lambda_d: w.lambda_d,
            p_max: 20,
            candidate_rule: CandidateRule::default(),
            workers: default_workers(),
            out: None,
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl PipelineConfig {
    pub fn seed(&self) -> u64 {
        self.sampler.seed
    }

    pub fn weights(&self) -> Weights {
        Weights {
            lambda_a: self.lambda_a,
            lambda_d: self.lambda_d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.inpainter.validate()?;
        self.detector.validate()?;
        self.metric.validate()?;
        if !self.lambda_a.is_finite() || !self.lambda_d.is_finite() {
            return Err(Error::InvalidConfig("lambda weights must be finite".into()));
        }
        if self.p_max == 0 {
            return Err(Error::InvalidConfig("p_max must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Runs `f` on a dedicated pool of `self.workers` threads.
    pub fn with_pool<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn split_external(s: &str) -> Option<&str> {
    s.strip_prefix("external:").filter(|c| !c.is_empty())
}

/// Parses `mean`, `diffusion` or `external:<cmd>`.
pub fn parse_inpainter(s: &str) -> Result<InpainterSpec> {
    match s {
        "mean" | "mean-fill" => Ok(InpainterSpec::MeanFill),
        "diffusion" | "diffusion-fill" => Ok(InpainterSpec::default()),
        _ => split_external(s)
            .map(|c| InpainterSpec::External(ExternalCommand::new(c)))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown inpainter {s:?}"))),
    }
}

/// Parses `null`, `residual` or `external:<cmd>`.
pub fn parse_detector(s: &str) -> Result<DetectorSpec> {
    match s {
        "null" => Ok(DetectorSpec::Null),
        "residual" => Ok(DetectorSpec::residual()),
        _ => split_external(s)
            .map(|c| DetectorSpec::External(ExternalCommand::new(c)))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown detector {s:?}"))),
    }
}

/// Parses `l2`, `patch-stats` or `external:<cmd>`.
pub fn parse_metric(s: &str) -> Result<MetricSpec> {
    match s {
        "l2" => Ok(MetricSpec::L2),
        "patch-stats" => Ok(MetricSpec::default()),
        _ => split_external(s)
            .map(|c| MetricSpec::External(ExternalCommand::new(c)))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric {s:?}"))),
    }
}
