//! Scenario execution: one Monte Carlo cell, the density sweeps, the
//! coverage-gap experiment, and the corridor-lifetime experiment. Runs are
//! independent and parallelize across a rayon pool; results aggregate in run
//! order so thread count never changes the output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use poser_core::config::WorldConfig;
use poser_core::energy::tube_membership;
use poser_core::geom::Point2D;
use poser_core::sim::{Scheduler, World};

use crate::metrics::{
    detection_series, energy_split, mean_hps_per_tracked_target, missed_detection_rate, rmse,
    run_lifetime, Aggregator, RunLog,
};
use crate::spec::{GapSpec, SchedulerKind, TubeSpec};

/// Aggregated metrics of one scenario cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scheduler: String,
    pub density_per_m2: f64,
    pub p_sleep: f64,
    pub p_rand: f64,
    pub fixed_range_m: f64,
    pub lambda: u32,
    pub runs_ok: u32,
    pub runs_failed: u32,
    pub pm: f64,
    pub pm_track: f64,
    pub rmse_pos_m: f64,
    pub rmse_vel_mps: f64,
    pub hps_mean_count: f64,
    pub energy_in_j: f64,
    pub energy_out_j: f64,
    pub lifetime_s: f64,
    pub lifetime_se_s: f64,
    pub games_per_run: f64,
}

fn scheduler_fixed_range(s: &Scheduler) -> f64 {
    match s {
        Scheduler::Poser => 0.0,
        Scheduler::Ans { fixed_range_m }
        | Scheduler::LpsHps { fixed_range_m }
        | Scheduler::Random { fixed_range_m } => *fixed_range_m,
    }
}

/// Execute one run to the horizon; optionally injecting the dead zone at the
/// target's realized position at the configured time.
fn execute_run(
    cfg: &WorldConfig,
    scheduler: Scheduler,
    run: u64,
    max_steps: u32,
    gap: Option<GapSpec>,
    stop_when_tube_dead: Option<&[poser_core::geom::NodeId]>,
) -> RunLog {
    let mut world = World::new(cfg.clone(), scheduler, run, max_steps).expect("valid world");
    let mut gap_center = None;
    if let Some(g) = gap {
        let step = (g.at_time_s / cfg.dt_s).round() as u32;
        if let Some(traj) = world.trajectories.first() {
            let idx = step
                .saturating_sub(traj.entry_step)
                .min(traj.states.len() as u32 - 1) as usize;
            let center = traj.states[idx].position();
            world.inject_gap(center, g.radius_m);
            gap_center = Some(center);
        }
    }
    let positions = world.positions();
    let initial_j = world.initial_energies();
    let steps = match stop_when_tube_dead {
        Some(tube) => world.run_all(|log| {
            tube.iter()
                .all(|n| log.consumed_j[n.idx()] >= initial_j[n.idx()])
        }),
        None => world.run_all(|_| false),
    };
    RunLog {
        steps,
        positions,
        initial_j,
        gap_center,
    }
}

/// Run one cell: `runs` seeded repetitions, aggregated. A panicking run is
/// recorded as failed and skipped in the aggregates.
pub fn run_cell(
    cfg: &WorldConfig,
    scheduler: Scheduler,
    runs: u32,
    max_steps: u32,
    gap: Option<GapSpec>,
    tube: Option<&[poser_core::geom::NodeId]>,
) -> (CellResult, Vec<RunLog>) {
    let results: Vec<Option<RunLog>> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                execute_run(cfg, scheduler, run, max_steps, gap, tube)
            }))
            .ok()
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count() as u32;
    let logs: Vec<RunLog> = results.into_iter().flatten().collect();

    let (pm, pm_track) = missed_detection_rate(&logs);
    let (rmse_pos, rmse_vel) = rmse(&logs).unwrap_or((f64::NAN, f64::NAN));
    let hps_mean = mean_hps_per_tracked_target(&logs);
    let (e_in, e_out) = energy_split(&logs, cfg.r_max());
    let mut lifetime = Aggregator::default();
    if let Some(tube) = tube {
        for log in &logs {
            if let Ok(s) = run_lifetime(log, tube, cfg.eta_lifetime, cfg.dt_s) {
                lifetime.push(s);
            }
        }
    }
    let mut games = Aggregator::default();
    for log in &logs {
        games.push(log.steps.iter().map(|s| s.games_played as f64).sum());
    }

    (
        CellResult {
            scheduler: scheduler.label().to_string(),
            density_per_m2: cfg.density_per_m2,
            p_sleep: cfg.p_sleep,
            p_rand: cfg.p_rand,
            fixed_range_m: scheduler_fixed_range(&scheduler),
            lambda: cfg.targets.lambda,
            runs_ok: logs.len() as u32,
            runs_failed: failed,
            pm,
            pm_track,
            rmse_pos_m: rmse_pos,
            rmse_vel_mps: rmse_vel,
            hps_mean_count: hps_mean,
            energy_in_j: e_in,
            energy_out_j: e_out,
            lifetime_s: lifetime.mean(),
            lifetime_se_s: lifetime.stderr(),
            games_per_run: games.mean(),
        },
        logs,
    )
}

/// Density x scheduler sweep (the adaptive scheduler also sweeps its sleep
/// probability; baselines sweep their fixed range).
pub fn sweep(
    base: &WorldConfig,
    schedulers: &[SchedulerKind],
    densities: &[f64],
    p_sleeps: &[f64],
    fixed_ranges: &[f64],
    runs: u32,
    max_steps: u32,
) -> Vec<CellResult> {
    let mut cells = Vec::new();
    for kind in schedulers {
        match kind {
            SchedulerKind::Poser => {
                for &density in densities {
                    for &p_sleep in p_sleeps {
                        let cfg = WorldConfig {
                            density_per_m2: density,
                            p_sleep,
                            ..base.clone()
                        };
                        cells.push(run_cell(&cfg, Scheduler::Poser, runs, max_steps, None, None).0);
                    }
                }
            }
            _ => {
                for &density in densities {
                    for &range in fixed_ranges {
                        let cfg = WorldConfig {
                            density_per_m2: density,
                            ..base.clone()
                        };
                        let scheduler = kind.to_scheduler(range);
                        cells.push(run_cell(&cfg, scheduler, runs, max_steps, None, None).0);
                    }
                }
            }
        }
    }
    cells
}

/// One row of the per-step detection series emitted by the gap experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionPoint {
    pub scheduler: String,
    pub gap_radius_m: f64,
    pub t_s: f64,
    pub pdet: f64,
    pub in_gap: bool,
    pub deep_in_gap: bool,
}

/// Summary of one scheduler's behavior through the dead zone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub scheduler: String,
    pub gap_radius_m: f64,
    pub fixed_range_m: f64,
    pub runs: u32,
    /// Mean per-step detection probability while the target is inside the
    /// dead zone.
    pub pdet_in_gap: f64,
    /// Longest run of zero-detection steps while deep inside the zone.
    pub zero_window_steps: u32,
}

/// The coverage-gap experiment: kill every node around the target's position
/// at the configured time and watch the detection series.
pub fn gap_experiment(
    base: &WorldConfig,
    schedulers: &[(SchedulerKind, f64)],
    gap: GapSpec,
    runs: u32,
    max_steps: u32,
) -> (Vec<GapSummary>, Vec<DetectionPoint>) {
    let mut summaries = Vec::new();
    let mut points = Vec::new();
    for (kind, fixed_range) in schedulers {
        let scheduler = kind.to_scheduler(*fixed_range);
        let cfg = base.clone();
        let (_, logs) = run_cell(&cfg, scheduler, runs, max_steps, Some(gap), None);
        let series = detection_series(&logs, gap.radius_m, base.r1());
        let mut in_gap = Aggregator::default();
        let mut zero_window = 0u32;
        let mut current_zero = 0u32;
        for (k, (pdet, inside, deep)) in series.iter().enumerate() {
            if pdet.is_nan() {
                continue;
            }
            points.push(DetectionPoint {
                scheduler: scheduler.label().to_string(),
                gap_radius_m: gap.radius_m,
                t_s: k as f64 * base.dt_s,
                pdet: *pdet,
                in_gap: *inside,
                deep_in_gap: *deep,
            });
            if *inside {
                in_gap.push(*pdet);
            }
            if *deep && *pdet == 0.0 {
                current_zero += 1;
                zero_window = zero_window.max(current_zero);
            } else {
                current_zero = 0;
            }
        }
        summaries.push(GapSummary {
            scheduler: scheduler.label().to_string(),
            gap_radius_m: gap.radius_m,
            fixed_range_m: *fixed_range,
            runs,
            pdet_in_gap: in_gap.mean(),
            zero_window_steps: zero_window,
        });
    }
    (summaries, points)
}

/// One row of the lifetime table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRow {
    pub scheduler: String,
    pub lambda: u32,
    pub p_sleep: f64,
    pub fixed_range_m: f64,
    pub lifetime_s: f64,
    pub lifetime_norm: f64,
}

/// Corridor-lifetime experiment: a narrow region around the trajectory,
/// targets crossing in procession, run until the corridor is depleted.
/// Lifetimes are normalized by the adaptive scheduler's quiet-network cell
/// (no targets, sleep probability 0.75).
pub fn lifetime_experiment(
    base: &WorldConfig,
    tube: TubeSpec,
    schedulers: &[(SchedulerKind, f64)],
    lambdas: &[u32],
    runs: u32,
    max_steps: u32,
) -> Vec<LifetimeRow> {
    let corridor_cfg = |lambda: u32, p_sleep: f64| WorldConfig {
        region_width_m: tube.length_m,
        region_height_m: tube.width_m,
        p_sleep,
        targets: poser_core::config::TargetProfile {
            lambda,
            ..base.targets.clone()
        },
        ..base.clone()
    };

    let tube_nodes_for = |cfg: &WorldConfig, run: u64| {
        let world = World::new(cfg.clone(), Scheduler::Poser, run, 1).expect("valid world");
        let gamma = [
            Point2D::new(0.0, cfg.region_height_m / 2.0),
            Point2D::new(cfg.region_width_m, cfg.region_height_m / 2.0),
        ];
        tube_membership(&world.positions(), &gamma, cfg.r_lps_m).expect("straight corridor")
    };

    // Reference cell: quiet network, p_sleep = 0.75.
    let ref_cfg = corridor_cfg(0, 0.75);
    let ref_tube = tube_nodes_for(&ref_cfg, 0);
    let (ref_cell, _) = run_cell(&ref_cfg, Scheduler::Poser, runs, max_steps, None, Some(&ref_tube));
    let reference = ref_cell.lifetime_s;

    let mut rows = vec![LifetimeRow {
        scheduler: "poser".into(),
        lambda: 0,
        p_sleep: 0.75,
        fixed_range_m: 0.0,
        lifetime_s: reference,
        lifetime_norm: 1.0,
    }];

    for (kind, fixed_range) in schedulers {
        for &lambda in lambdas {
            if *kind == SchedulerKind::Poser && lambda == 0 && base.p_sleep == 0.75 {
                continue; // the reference row already covers it
            }
            let cfg = corridor_cfg(lambda, base.p_sleep);
            let tube_nodes = tube_nodes_for(&cfg, 0);
            let scheduler = kind.to_scheduler(*fixed_range);
            let (cell, _) = run_cell(&cfg, scheduler, runs, max_steps, None, Some(&tube_nodes));
            rows.push(LifetimeRow {
                scheduler: scheduler.label().to_string(),
                lambda,
                p_sleep: cfg.p_sleep,
                fixed_range_m: *fixed_range,
                lifetime_s: cell.lifetime_s,
                lifetime_norm: cell.lifetime_s / reference,
            });
        }
    }
    rows
}
