//! Sensor channels: binary low-power detection with false alarms, and
//! high-power range/azimuth measurements with Poisson clutter.

use nalgebra::{SMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::geom::{wrap_angle, NodeId, Point2D};
use crate::motion::{StateVector, TargetState};
use crate::rng::RngStream;

pub type MeasVector = Vector2<f64>;
pub type MeasJacobian = SMatrix<f64, 2, 5>;

/// Origin of a simulated measurement; ground truth hidden from algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruthTag {
    Target(usize),
    Clutter,
}

/// One range/azimuth return at a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub range_m: f64,
    pub azimuth_rad: f64,
    pub origin: NodeId,
    pub truth_tag: TruthTag,
}

impl Measurement {
    pub fn vector(&self) -> MeasVector {
        MeasVector::new(self.range_m, self.azimuth_rad)
    }
}

/// What caused a low-power scan to fire, if it did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpsCause {
    TrueDetection,
    FalseAlarm,
    None,
}

/// Outcome of one low-power scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpsReport {
    pub detected: bool,
    pub cause: LpsCause,
}

/// True-detection probability of the low-power device at distance `d`:
/// flat `alpha` inside the reliable radius, exponential decay out to the
/// device range, zero beyond (false alarms are a separate channel).
pub fn lps_detection_probability(d: f64, cfg: &WorldConfig) -> f64 {
    debug_assert!(d >= 0.0);
    if d < cfg.r_reliable_m {
        cfg.alpha
    } else if d <= cfg.r_lps_m {
        cfg.alpha * (-cfg.beta * (d - cfg.r_reliable_m)).exp()
    } else {
        0.0
    }
}

/// Probability that the low-power device fires this scan: any true detection,
/// else a false alarm.
pub fn lps_fire_probability(node_pos: Point2D, targets: &[TargetState], cfg: &WorldConfig) -> f64 {
    let mut p_none = 1.0;
    for t in targets {
        p_none *= 1.0 - lps_detection_probability(node_pos.distance(&t.position()), cfg);
    }
    (1.0 - p_none) + p_none * cfg.p_fa
}

/// Sample one low-power scan: per-target true detections first, then the
/// false-alarm channel if nothing fired.
pub fn sample_lps(
    node_pos: Point2D,
    targets: &[TargetState],
    cfg: &WorldConfig,
    rng: &mut RngStream,
) -> LpsReport {
    for t in targets {
        let p = lps_detection_probability(node_pos.distance(&t.position()), cfg);
        if rng.bernoulli(p) {
            return LpsReport {
                detected: true,
                cause: LpsCause::TrueDetection,
            };
        }
    }
    if rng.bernoulli(cfg.p_fa) {
        LpsReport {
            detected: true,
            cause: LpsCause::FalseAlarm,
        }
    } else {
        LpsReport {
            detected: false,
            cause: LpsCause::None,
        }
    }
}

/// Noiseless measurement model: range and azimuth of the state's position
/// as seen from `node_pos`, azimuth from global east.
pub fn measurement_model(state: &StateVector, node_pos: Point2D) -> MeasVector {
    let dx = state[0] - node_pos.x;
    let dy = state[2] - node_pos.y;
    MeasVector::new(dx.hypot(dy), dy.atan2(dx))
}

/// Analytic 2x5 Jacobian of the measurement model; velocity and turn-rate
/// columns are zero. Singular at zero range.
pub fn measurement_jacobian(state: &StateVector, node_pos: Point2D) -> MeasJacobian {
    let dx = state[0] - node_pos.x;
    let dy = state[2] - node_pos.y;
    let r2 = dx * dx + dy * dy;
    let r = r2.sqrt();
    assert!(r > 0.0, "measurement jacobian undefined at zero range");
    let mut h = MeasJacobian::zeros();
    h[(0, 0)] = dx / r;
    h[(0, 2)] = dy / r;
    h[(1, 0)] = -dy / r2;
    h[(1, 2)] = dx / r2;
    h
}

/// One high-power scan: each in-range target detected independently with
/// `p_d` plus Gaussian range/azimuth noise, then Poisson clutter uniform in
/// the coverage disk. The azimuth wrap is applied after noise addition.
pub fn hps_measure(
    node_pos: Point2D,
    hps_range: f64,
    targets: &[TargetState],
    cfg: &WorldConfig,
    rng: &mut RngStream,
) -> Vec<Measurement> {
    hps_measure_tagged(node_pos, hps_range, targets, NodeId(u32::MAX), cfg, rng)
}

pub fn hps_measure_tagged(
    node_pos: Point2D,
    hps_range: f64,
    targets: &[TargetState],
    origin: NodeId,
    cfg: &WorldConfig,
    rng: &mut RngStream,
) -> Vec<Measurement> {
    let mut out = Vec::new();
    for (ti, t) in targets.iter().enumerate() {
        let d = node_pos.distance(&t.position());
        if d <= hps_range && rng.bernoulli(cfg.p_d) {
            let truth = measurement_model(&t.to_vector(), node_pos);
            let range = (truth[0] + rng.normal(0.0, cfg.sigma_range_m)).max(0.0);
            let azimuth = wrap_angle(truth[1] + rng.normal(0.0, cfg.sigma_azimuth_rad));
            out.push(Measurement {
                range_m: range,
                azimuth_rad: azimuth,
                origin,
                truth_tag: TruthTag::Target(ti),
            });
        }
    }
    let n_clutter = rng.poisson(cfg.mu_clutter);
    for _ in 0..n_clutter {
        // Uniform in the disk: r = R sqrt(u).
        let r = hps_range * rng.uniform().sqrt();
        let theta = wrap_angle(rng.uniform_in(0.0, std::f64::consts::TAU));
        out.push(Measurement {
            range_m: r,
            azimuth_rad: theta,
            origin,
            truth_tag: TruthTag::Clutter,
        });
    }
    out
}
