//! Harness-level configuration: which scenarios to run, at what scale, and
//! where the sweep grids live. A JSON config document mirrors the world
//! parameters plus this run spec; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use poser_core::config::{ConfigError, WorldConfig};
use poser_core::sim::Scheduler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Poser,
    Ans,
    LpsHps,
    Random,
}

impl SchedulerKind {
    pub fn to_scheduler(self, fixed_range_m: f64) -> Scheduler {
        match self {
            SchedulerKind::Poser => Scheduler::Poser,
            SchedulerKind::Ans => Scheduler::Ans { fixed_range_m },
            SchedulerKind::LpsHps => Scheduler::LpsHps { fixed_range_m },
            SchedulerKind::Random => Scheduler::Random { fixed_range_m },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SchedulerKind::Poser => "poser",
            SchedulerKind::Ans => "ans",
            SchedulerKind::LpsHps => "lpshps",
            SchedulerKind::Random => "random",
        }
    }
}

/// Circular dead zone placed at the target's position at a given time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    pub radius_m: f64,
    pub at_time_s: f64,
}

/// Corridor geometry for lifetime experiments; overrides the region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    pub length_m: f64,
    pub width_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub scheduler: SchedulerKind,
    /// Monte Carlo repetitions per cell.
    pub runs: u32,
    /// Run `i` derives its streams from this base and the run index.
    pub seed_base: u64,
    pub max_steps: u32,
    /// Density sweep, nodes per square meter.
    pub densities: Vec<f64>,
    pub p_sleeps: Vec<f64>,
    pub p_rands: Vec<f64>,
    /// Fixed sensing ranges for the baseline schedulers, m.
    pub fixed_ranges_m: Vec<f64>,
    /// Simultaneous-target sweep for lifetime experiments.
    pub lambdas: Vec<u32>,
    pub gap: Option<GapSpec>,
    pub tube: Option<TubeSpec>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            scheduler: SchedulerKind::Poser,
            runs: 100,
            seed_base: 0,
            max_steps: 220,
            densities: vec![0.6e-3, 0.8e-3, 1.0e-3, 1.2e-3, 1.4e-3],
            p_sleeps: vec![0.0, 0.25, 0.5, 0.75],
            p_rands: vec![0.5],
            fixed_ranges_m: vec![30.0, 40.0, 50.0, 60.0],
            lambdas: vec![0, 1, 2, 3],
            gap: Some(GapSpec {
                radius_m: 50.0,
                at_time_s: 50.0,
            }),
            tube: Some(TubeSpec {
                length_m: 600.0,
                width_m: 120.0,
            }),
        }
    }
}

impl RunSpec {
    pub fn validate(self) -> Result<Self, SpecError> {
        if self.runs == 0 {
            return Err(SpecError::Invalid("runs must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(SpecError::Invalid("max_steps must be positive".into()));
        }
        for (name, sweep) in [
            ("densities", self.densities.is_empty()),
            ("p_sleeps", self.p_sleeps.is_empty()),
            ("p_rands", self.p_rands.is_empty()),
            ("fixed_ranges_m", self.fixed_ranges_m.is_empty()),
            ("lambdas", self.lambdas.is_empty()),
        ] {
            if sweep {
                return Err(SpecError::Invalid(format!("sweep {name} is empty")));
            }
        }
        Ok(self)
    }
}

/// The full on-disk configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub world: WorldConfig,
    pub run: RunSpec,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            run: RunSpec::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("world config: {0}")]
    World(#[from] ConfigError),
    #[error("run spec: {0}")]
    Invalid(String),
}

impl HarnessConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: HarnessConfig = serde_json::from_str(&text)?;
        cfg.validate()
    }

    pub fn validate(self) -> Result<Self, SpecError> {
        let world = self.world.validate()?;
        let run = self.run.validate()?;
        Ok(Self { world, run })
    }

    /// Stable FNV-1a hash of the canonical JSON encoding; identifies the
    /// exact configuration in the output manifest (not cryptographic).
    pub fn content_hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}
