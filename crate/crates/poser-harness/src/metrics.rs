//! Metric extraction from raw run logs: missed detection, tracking error,
//! occupancy, energy split around the target, corridor lifetime, and the
//! per-step detection series used by the coverage-gap experiment.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use poser_core::energy::{network_lifetime, Lifetime, LifetimeError};
use poser_core::geom::{NodeId, Point2D};
use poser_core::sim::StepLog;

/// Gate for matching an estimate to ground truth (0.99 chi-square, 2 dof).
const MATCH_GATE: f64 = 9.21034037197618;

/// Everything retained from one simulation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunLog {
    pub steps: Vec<StepLog>,
    pub positions: Vec<Point2D>,
    pub initial_j: Vec<f64>,
    pub gap_center: Option<Point2D>,
}

/// Incremental mean/variance accumulator that merges associatively (up to
/// floating-point roundoff) so chunked and monolithic aggregation agree.
#[derive(Clone, Copy, Debug, Default)]
pub struct Aggregator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Aggregator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Aggregator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Coverage-based and track-based missed-detection rates: the fraction of
/// (step, target) pairs with the target inside the region at which no active
/// high-power disk (respectively, no confirmed track gate) contains the
/// truth.
pub fn missed_detection_rate(runs: &[RunLog]) -> (f64, f64) {
    let mut total = 0u64;
    let mut missed_cov = 0u64;
    let mut missed_trk = 0u64;
    for run in runs {
        for step in &run.steps {
            for t in &step.targets {
                total += 1;
                if !t.covered {
                    missed_cov += 1;
                }
                if !t.tracked {
                    missed_trk += 1;
                }
            }
        }
    }
    if total == 0 {
        (0.0, 0.0)
    } else {
        (missed_cov as f64 / total as f64, missed_trk as f64 / total as f64)
    }
}

/// Position and velocity RMSE over estimates matched to the nearest truth
/// within the gate. Returns `None` when nothing ever associated.
pub fn rmse(runs: &[RunLog]) -> Option<(f64, f64)> {
    let mut pos_sq = Aggregator::default();
    let mut vel_sq = Aggregator::default();
    for run in runs {
        for step in &run.steps {
            if step.targets.is_empty() {
                continue;
            }
            for est in &step.estimates {
                let mut best: Option<(f64, f64, f64)> = None;
                let inv = match est.pos_cov.try_inverse() {
                    Some(inv) => inv,
                    None => continue,
                };
                for t in &step.targets {
                    let dp = Vector2::new(est.mean[0] - t.state.x, est.mean[2] - t.state.y);
                    let d2 = (dp.transpose() * inv * dp)[(0, 0)];
                    if d2 <= MATCH_GATE {
                        let pe = dp.norm_squared();
                        let ve = (est.mean[1] - t.state.vx).powi(2)
                            + (est.mean[3] - t.state.vy).powi(2);
                        if best.map_or(true, |(bd, _, _)| d2 < bd) {
                            best = Some((d2, pe, ve));
                        }
                    }
                }
                if let Some((_, pe, ve)) = best {
                    pos_sq.push(pe);
                    vel_sq.push(ve);
                }
            }
        }
    }
    if pos_sq.n == 0 {
        None
    } else {
        Some((pos_sq.mean().sqrt(), vel_sq.mean().sqrt()))
    }
}

/// Mean high-power node count over steps where at least one target is both
/// present and held by a confirmed track, normalized per active target.
pub fn mean_hps_per_tracked_target(runs: &[RunLog]) -> f64 {
    let mut agg = Aggregator::default();
    for run in runs {
        for step in &run.steps {
            let active = step.targets.len();
            let tracked = step.targets.iter().filter(|t| t.tracked).count();
            if active > 0 && tracked > 0 {
                agg.push(step.n_hps as f64 / active as f64);
            }
        }
    }
    agg.mean()
}

/// Mean per-node per-step energy draw split by proximity to the targets:
/// nodes within `r_split` of any active target versus the rest.
pub fn energy_split(runs: &[RunLog], r_split: f64) -> (f64, f64) {
    let mut inside = Aggregator::default();
    let mut outside = Aggregator::default();
    for run in runs {
        let mut prev: Option<&Vec<f64>> = None;
        for step in &run.steps {
            if let Some(prev_j) = prev {
                for (i, pos) in run.positions.iter().enumerate() {
                    let delta = step.consumed_j[i] - prev_j[i];
                    let near = step
                        .targets
                        .iter()
                        .any(|t| pos.distance(&t.state.position()) <= r_split);
                    if near {
                        inside.push(delta);
                    } else {
                        outside.push(delta);
                    }
                }
            }
            prev = Some(&step.consumed_j);
        }
    }
    (inside.mean(), outside.mean())
}

/// Corridor lifetime of one run, in seconds; the horizon sentinel maps to
/// the run's end time.
pub fn run_lifetime(
    run: &RunLog,
    tube_nodes: &[NodeId],
    eta: f64,
    dt: f64,
) -> Result<f64, LifetimeError> {
    let consumed: Vec<Vec<f64>> = run.steps.iter().map(|s| s.consumed_j.clone()).collect();
    match network_lifetime(&consumed, &run.initial_j, tube_nodes, eta, dt)? {
        Lifetime::Seconds(s) => Ok(s),
        Lifetime::ExceedsHorizon => Ok(run.steps.len() as f64 * dt),
    }
}

/// Per-step detection probability of target 0 across runs, with the
/// step-aligned masks needed by the gap experiment: returns
/// `(p_det[k], in_gap[k], deep_in_gap[k])` where the gap masks hold when
/// every run with an active target has it within (respectively, more than
/// `r_inner` inside) the gap radius.
pub fn detection_series(
    runs: &[RunLog],
    gap_radius: f64,
    r_inner: f64,
) -> Vec<(f64, bool, bool)> {
    let horizon = runs.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let mut det = 0u32;
        let mut present = 0u32;
        let mut all_in_gap = true;
        let mut all_deep = true;
        for run in runs {
            let Some(step) = run.steps.get(k) else {
                continue;
            };
            let Some(t) = step.targets.iter().find(|t| t.index == 0) else {
                continue;
            };
            present += 1;
            if t.covered {
                det += 1;
            }
            if let Some(center) = run.gap_center {
                let d = t.state.position().distance(&center);
                if d > gap_radius {
                    all_in_gap = false;
                }
                if d > (gap_radius - r_inner).max(0.0) {
                    all_deep = false;
                }
            } else {
                all_in_gap = false;
                all_deep = false;
            }
        }
        if present == 0 {
            out.push((f64::NAN, false, false));
        } else {
            out.push((
                det as f64 / present as f64,
                all_in_gap,
                all_deep,
            ));
        }
    }
    out
}
