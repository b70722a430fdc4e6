//! Monte Carlo orchestration over the simulator core: scenario cells,
//! metric extraction, the selector and game validation tables, and CSV
//! serialization with a reproducibility manifest.

pub mod egdop_cmp;
pub mod game_val;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod spec;

pub use metrics::RunLog;
pub use runner::{run_cell, CellResult};
pub use spec::{GapSpec, HarnessConfig, RunSpec, SchedulerKind, TubeSpec};
