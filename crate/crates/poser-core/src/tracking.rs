//! Node-local estimation: EKF prediction, JPDA measurement association and
//! update under clutter, track initialization from unassociated returns, and
//! M-of-N confirmation.

use nalgebra::{Matrix2, SMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::geom::{wrap_angle, Point2D};
use crate::motion::{predict_gaussian, symmetrize, StateMatrix, StateVector};
use crate::sensing::{measurement_jacobian, measurement_model, Measurement};

pub type GainMatrix = SMatrix<f64, 5, 2>;

/// 0.99 chi-square quantile, 2 degrees of freedom: the measurement gate.
pub const GATE_CHI2_2DOF: f64 = 9.21034037197618;
/// Probability mass inside the gate.
pub const GATE_PROBABILITY: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dropped,
}

/// One Gaussian target hypothesis held by a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub mean: StateVector,
    pub cov: StateMatrix,
    /// Filter gain from the latest update, shared with neighbors alongside
    /// the estimate.
    pub gain: GainMatrix,
    pub status: TrackStatus,
    /// Last `confirm_n` association outcomes, oldest first.
    pub hit_window: Vec<bool>,
    pub miss_streak: u32,
}

impl Track {
    fn hits_in_window(&self) -> usize {
        self.hit_window.iter().filter(|h| **h).count()
    }
}

/// Per-track association probabilities over one measurement set.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociationResult {
    /// `beta[t][j]`: probability that measurement `j` originated track `t`'s
    /// target. Rows align with the track slice passed in.
    pub beta: Vec<Vec<f64>>,
    /// Probability that no measurement originated from the track.
    pub beta_none: Vec<f64>,
    /// True when at least one measurement fell in the track's gate.
    pub any_gated: Vec<bool>,
    /// Measurements inside no gate; candidates for new tracks.
    pub unassociated: Vec<usize>,
}

/// Measurement noise covariance.
pub fn measurement_noise(cfg: &WorldConfig) -> Matrix2<f64> {
    Matrix2::new(
        cfg.sigma_range_m * cfg.sigma_range_m,
        0.0,
        0.0,
        cfg.sigma_azimuth_rad * cfg.sigma_azimuth_rad,
    )
}

/// One-step prediction of a track in place.
pub fn ekf_predict(track: &mut Track, cfg: &WorldConfig) {
    let (mean, cov) = predict_gaussian(&track.mean, &track.cov, cfg);
    track.mean = mean;
    track.cov = cov;
}

struct TrackGeometry {
    innovation_cov: Matrix2<f64>,
    innovation_inv: Matrix2<f64>,
    gain: GainMatrix,
    likelihood_norm: f64,
    innovations: Vec<Option<Vector2<f64>>>,
    ok: bool,
}

/// Joint probabilistic data association over all live tracks and one scan.
///
/// Gated likelihoods feed an exact enumeration of joint association events
/// (each measurement explains at most one track, each track at most one
/// measurement); the per-track update applies the beta-weighted combined
/// innovation with the spread-of-innovations covariance term. Uses the known
/// clutter spatial density `mu_clutter / (pi R^2)` of the uniform-in-disk
/// clutter channel.
pub fn jpda_update(
    tracks: &mut [Track],
    measurements: &[Measurement],
    node_pos: Point2D,
    hps_range: f64,
    cfg: &WorldConfig,
) -> AssociationResult {
    let r = measurement_noise(cfg);
    let clutter_density = if hps_range > 0.0 {
        cfg.mu_clutter / (std::f64::consts::PI * hps_range * hps_range)
    } else {
        0.0
    };

    let live: Vec<usize> = (0..tracks.len())
        .filter(|i| tracks[*i].status != TrackStatus::Dropped)
        .collect();

    let mut geoms: Vec<TrackGeometry> = Vec::with_capacity(live.len());
    for &ti in &live {
        let track = &tracks[ti];
        let h = measurement_jacobian(&track.mean, node_pos);
        let s = h * track.cov * h.transpose() + r;
        match s.try_inverse() {
            Some(s_inv) => {
                let gain = track.cov * h.transpose() * s_inv;
                let z_pred = measurement_model(&track.mean, node_pos);
                let det = s.determinant();
                let innovations = measurements
                    .iter()
                    .map(|m| {
                        let nu = Vector2::new(
                            m.range_m - z_pred[0],
                            wrap_angle(m.azimuth_rad - z_pred[1]),
                        );
                        let d2 = (nu.transpose() * s_inv * nu)[(0, 0)];
                        (d2 <= GATE_CHI2_2DOF).then_some(nu)
                    })
                    .collect();
                geoms.push(TrackGeometry {
                    innovation_cov: s,
                    innovation_inv: s_inv,
                    gain,
                    likelihood_norm: 1.0 / (std::f64::consts::TAU * det.sqrt()),
                    innovations,
                    ok: det > 0.0,
                });
            }
            None => {
                geoms.push(TrackGeometry {
                    innovation_cov: s,
                    innovation_inv: Matrix2::zeros(),
                    gain: GainMatrix::zeros(),
                    likelihood_norm: 0.0,
                    innovations: vec![None; measurements.len()],
                    ok: false,
                });
            }
        }
    }

    // Gaussian likelihood of each gated (track, measurement) pair.
    let mut likelihood = vec![vec![0.0f64; measurements.len()]; live.len()];
    for (t, g) in geoms.iter().enumerate() {
        for (j, nu) in g.innovations.iter().enumerate() {
            if let Some(nu) = nu {
                let d2 = (nu.transpose() * g.innovation_inv * nu)[(0, 0)];
                likelihood[t][j] = g.likelihood_norm * (-0.5 * d2).exp();
            }
        }
    }

    let (beta, beta_none) = association_probabilities(&likelihood, cfg.p_d, clutter_density);

    let mut result = AssociationResult {
        beta: vec![vec![0.0; measurements.len()]; tracks.len()],
        beta_none: vec![1.0; tracks.len()],
        any_gated: vec![false; tracks.len()],
        unassociated: Vec::new(),
    };

    for (t, &ti) in live.iter().enumerate() {
        let g = &geoms[t];
        if !g.ok {
            tracks[ti].status = TrackStatus::Dropped;
            continue;
        }
        result.beta[ti] = beta[t].clone();
        result.beta_none[ti] = beta_none[t];
        result.any_gated[ti] = g.innovations.iter().any(Option::is_some);

        let mut combined = Vector2::zeros();
        let mut spread = Matrix2::zeros();
        for (j, nu) in g.innovations.iter().enumerate() {
            if let Some(nu) = nu {
                combined += beta[t][j] * nu;
                spread += beta[t][j] * nu * nu.transpose();
            }
        }
        spread -= combined * combined.transpose();

        let track = &mut tracks[ti];
        track.mean += g.gain * combined;
        let updated = track.cov - g.gain * g.innovation_cov * g.gain.transpose();
        let cov = beta_none[t] * track.cov
            + (1.0 - beta_none[t]) * updated
            + g.gain * spread * g.gain.transpose();
        track.cov = symmetrize(&cov);
        track.gain = g.gain;
    }

    for j in 0..measurements.len() {
        let gated_somewhere = geoms
            .iter()
            .enumerate()
            .any(|(t, g)| geoms[t].ok && g.innovations[j].is_some());
        if !gated_somewhere {
            result.unassociated.push(j);
        }
    }
    result
}

/// Exact joint-event association probabilities. `likelihood[t][j]` must be
/// zero outside the gate. Events weight assigned pairs by `p_d * g`,
/// undetected tracks by `1 - p_d * P_G`, and surplus measurements by the
/// clutter density.
pub fn association_probabilities(
    likelihood: &[Vec<f64>],
    p_d: f64,
    clutter_density: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n_tracks = likelihood.len();
    let n_meas = likelihood.first().map_or(0, Vec::len);
    let mut beta = vec![vec![0.0; n_meas]; n_tracks];
    let mut beta_none = vec![0.0; n_tracks];
    if n_tracks == 0 {
        return (beta, beta_none);
    }
    // Exact zero clutter density is kept representable so that events with
    // surplus measurements vanish instead of dividing by zero.
    let lambda = if clutter_density > 0.0 {
        clutter_density
    } else {
        f64::MIN_POSITIVE
    };
    let miss_factor = 1.0 - p_d * GATE_PROBABILITY;

    let mut used = vec![false; n_meas];
    let mut assignment = vec![usize::MAX; n_tracks];
    let mut total = 0.0;

    fn recurse(
        t: usize,
        weight: f64,
        likelihood: &[Vec<f64>],
        p_d: f64,
        lambda: f64,
        miss_factor: f64,
        used: &mut [bool],
        assignment: &mut [usize],
        total: &mut f64,
        beta: &mut [Vec<f64>],
        beta_none: &mut [f64],
    ) {
        if t == likelihood.len() {
            // Surplus measurements are clutter; one lambda factor each.
            let n_assigned = assignment.iter().filter(|a| **a != usize::MAX).count();
            let surplus = used.len() - n_assigned;
            let w = weight * lambda.powi(surplus as i32);
            *total += w;
            for (tt, a) in assignment.iter().enumerate() {
                if *a == usize::MAX {
                    beta_none[tt] += w;
                } else {
                    beta[tt][*a] += w;
                }
            }
            return;
        }
        assignment[t] = usize::MAX;
        recurse(
            t + 1,
            weight * miss_factor,
            likelihood,
            p_d,
            lambda,
            miss_factor,
            used,
            assignment,
            total,
            beta,
            beta_none,
        );
        for j in 0..used.len() {
            if !used[j] && likelihood[t][j] > 0.0 {
                used[j] = true;
                assignment[t] = j;
                recurse(
                    t + 1,
                    weight * p_d * likelihood[t][j],
                    likelihood,
                    p_d,
                    lambda,
                    miss_factor,
                    used,
                    assignment,
                    total,
                    beta,
                    beta_none,
                );
                used[j] = false;
            }
        }
        assignment[t] = usize::MAX;
    }

    recurse(
        0,
        1.0,
        likelihood,
        p_d,
        lambda,
        miss_factor,
        &mut used,
        &mut assignment,
        &mut total,
        &mut beta,
        &mut beta_none,
    );

    if total > 0.0 {
        for t in 0..n_tracks {
            for j in 0..n_meas {
                beta[t][j] /= total;
            }
            beta_none[t] /= total;
        }
    } else {
        // No representable event (e.g. zero clutter with surplus returns):
        // fall back to the no-association outcome.
        for t in 0..n_tracks {
            beta_none[t] = 1.0;
        }
    }
    (beta, beta_none)
}

/// Start a tentative track from an unassociated measurement: position from
/// the inverted return, zero velocity and turn rate with conservative
/// variances, position covariance from the polar-to-Cartesian Jacobian.
pub fn initialize_track(m: &Measurement, node_pos: Point2D, cfg: &WorldConfig, id: u64) -> Track {
    let (sin_a, cos_a) = m.azimuth_rad.sin_cos();
    let mean = StateVector::from_column_slice(&[
        node_pos.x + m.range_m * cos_a,
        0.0,
        node_pos.y + m.range_m * sin_a,
        0.0,
        0.0,
    ]);
    // d(x, y)/d(r, phi)
    let jac = Matrix2::new(
        cos_a,
        -m.range_m * sin_a,
        sin_a,
        m.range_m * cos_a,
    );
    let pos_cov = jac * measurement_noise(cfg) * jac.transpose();
    let vel_var = (cfg.v_max_mps / 3.0).powi(2);
    let mut cov = StateMatrix::zeros();
    cov[(0, 0)] = pos_cov[(0, 0)];
    cov[(0, 2)] = pos_cov[(0, 1)];
    cov[(2, 0)] = pos_cov[(1, 0)];
    cov[(2, 2)] = pos_cov[(1, 1)];
    cov[(1, 1)] = vel_var;
    cov[(3, 3)] = vel_var;
    cov[(4, 4)] = cfg.sigma_proc_turn_rad * cfg.sigma_proc_turn_rad;
    Track {
        id,
        mean,
        cov,
        gain: GainMatrix::zeros(),
        status: TrackStatus::Tentative,
        hit_window: vec![true],
        miss_streak: 0,
    }
}

/// Record one association outcome and advance the confirmation state:
/// a tentative track confirms once `M` of the last `N` outcomes are hits and
/// dies when a full window holds none; a confirmed track drops after `M`
/// consecutive misses.
pub fn mofn_update(track: &mut Track, associated: bool, cfg: &WorldConfig) {
    if track.status == TrackStatus::Dropped {
        return;
    }
    track.hit_window.push(associated);
    let n = cfg.confirm_n as usize;
    if track.hit_window.len() > n {
        let drop = track.hit_window.len() - n;
        track.hit_window.drain(..drop);
    }
    if associated {
        track.miss_streak = 0;
    } else {
        track.miss_streak += 1;
    }
    match track.status {
        TrackStatus::Tentative => {
            if track.hits_in_window() >= cfg.confirm_m as usize {
                track.status = TrackStatus::Confirmed;
            } else if track.hit_window.len() >= n && track.hits_in_window() == 0 {
                track.status = TrackStatus::Dropped;
            }
        }
        TrackStatus::Confirmed => {
            if track.miss_streak >= cfg.confirm_m {
                track.status = TrackStatus::Dropped;
            }
        }
        TrackStatus::Dropped => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::NodeId;
    use crate::sensing::TruthTag;

    fn meas(range: f64, azimuth: f64) -> Measurement {
        Measurement {
            range_m: range,
            azimuth_rad: azimuth,
            origin: NodeId(0),
            truth_tag: TruthTag::Clutter,
        }
    }

    fn simple_track(x: f64, y: f64, var: f64, id: u64) -> Track {
        let mut cov = StateMatrix::identity() * var;
        cov[(4, 4)] = 1e-4;
        Track {
            id,
            mean: StateVector::from_column_slice(&[x, 0.0, y, 0.0, 0.0]),
            cov,
            gain: GainMatrix::zeros(),
            status: TrackStatus::Confirmed,
            hit_window: vec![true],
            miss_streak: 0,
        }
    }

    #[test]
    fn predict_zero_dynamics_adds_q() {
        let cfg = WorldConfig::default();
        let mut t = simple_track(10.0, 5.0, 1.0, 0);
        t.mean[1] = 0.0;
        t.mean[3] = 0.0;
        let before = t.clone();
        ekf_predict(&mut t, &cfg);
        // Position mean unchanged under zero velocity and zero turn rate.
        assert!((t.mean[0] - before.mean[0]).abs() < 1e-12);
        assert!((t.mean[2] - before.mean[2]).abs() < 1e-12);
        // Covariance grows at least by the process noise trace.
        let q = crate::motion::process_noise(&cfg);
        assert!(t.cov.trace() >= before.cov.trace() + q.trace() - 1e-9);
    }

    #[test]
    fn no_gated_measurement_records_miss() {
        let cfg = WorldConfig::default();
        let mut tracks = vec![simple_track(10.0, 0.0, 0.01, 0)];
        let before = tracks[0].mean;
        let result = jpda_update(&mut tracks, &[], Point2D::new(0.0, 0.0), 30.0, &cfg);
        assert_eq!(tracks[0].mean, before);
        assert!(!result.any_gated[0]);
        assert!((result.beta_none[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_rows_normalize() {
        let cfg = WorldConfig::default();
        let mut tracks = vec![
            simple_track(10.0, 0.0, 0.5, 0),
            simple_track(12.0, 1.0, 0.5, 1),
        ];
        let ms = vec![meas(10.0, 0.01), meas(12.1, 0.09), meas(11.0, 0.05)];
        let result = jpda_update(&mut tracks, &ms, Point2D::new(0.0, 0.0), 30.0, &cfg);
        for t in 0..2 {
            let sum: f64 = result.beta[t].iter().sum::<f64>() + result.beta_none[t];
            assert!((sum - 1.0).abs() < 1e-12, "row {t} sums to {sum}");
        }
    }

    #[test]
    fn initialize_track_geometry() {
        let cfg = WorldConfig::default();
        let t = initialize_track(&meas(30.0, 0.0), Point2D::new(0.0, 0.0), &cfg, 7);
        assert!((t.mean[0] - 30.0).abs() < 1e-12);
        assert!(t.mean[2].abs() < 1e-12);
        assert_eq!(t.status, TrackStatus::Tentative);
        // Position error trace = sigma_R^2 + r^2 sigma_phi^2.
        let trace = t.cov[(0, 0)] + t.cov[(2, 2)];
        let expected = cfg.sigma_range_m.powi(2) + 900.0 * cfg.sigma_azimuth_rad.powi(2);
        assert!((trace - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicate_initialization_matches_up_to_id() {
        let cfg = WorldConfig::default();
        let a = initialize_track(&meas(20.0, 0.4), Point2D::new(3.0, 1.0), &cfg, 1);
        let b = initialize_track(&meas(20.0, 0.4), Point2D::new(3.0, 1.0), &cfg, 2);
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.cov, b.cov);
        assert_ne!(a.id, b.id);
    }

    #[test]
    fn mofn_confirmation_and_drop() {
        let cfg = WorldConfig::default(); // M = 2, N = 3
        let mut t = initialize_track(&meas(10.0, 0.0), Point2D::new(0.0, 0.0), &cfg, 0);
        // Initialization counts as the first hit; one more confirms.
        mofn_update(&mut t, true, &cfg);
        assert_eq!(t.status, TrackStatus::Confirmed);
        mofn_update(&mut t, false, &cfg);
        assert_eq!(t.status, TrackStatus::Confirmed);
        mofn_update(&mut t, false, &cfg);
        assert_eq!(t.status, TrackStatus::Dropped);
    }

    #[test]
    fn mofn_tentative_window_exhaustion() {
        let cfg = WorldConfig::default();
        let mut t = initialize_track(&meas(10.0, 0.0), Point2D::new(0.0, 0.0), &cfg, 0);
        // hit (init), miss, miss -> still tentative; one more miss kills it.
        mofn_update(&mut t, false, &cfg);
        mofn_update(&mut t, false, &cfg);
        assert_eq!(t.status, TrackStatus::Tentative);
        mofn_update(&mut t, false, &cfg);
        assert_eq!(t.status, TrackStatus::Dropped);
    }

    #[test]
    fn status_never_leaves_dropped() {
        let cfg = WorldConfig::default();
        let mut t = initialize_track(&meas(10.0, 0.0), Point2D::new(0.0, 0.0), &cfg, 0);
        for _ in 0..5 {
            mofn_update(&mut t, false, &cfg);
        }
        assert_eq!(t.status, TrackStatus::Dropped);
        mofn_update(&mut t, true, &cfg);
        assert_eq!(t.status, TrackStatus::Dropped);
    }

    #[test]
    fn covariance_stays_psd_under_updates() {
        let cfg = WorldConfig::default();
        let mut rng = crate::rng::RngStream::new(33, crate::rng::StreamDomain::Node { run: 0, node: 0 });
        let node = Point2D::new(0.0, 0.0);
        for trial in 0..50 {
            let mut tracks = vec![simple_track(
                rng.uniform_in(5.0, 25.0),
                rng.uniform_in(-10.0, 10.0),
                rng.uniform_in(0.1, 2.0),
                trial,
            )];
            for _ in 0..10 {
                ekf_predict(&mut tracks[0], &cfg);
                let z = measurement_model(&tracks[0].mean, node);
                let ms = vec![meas(
                    z[0] + rng.normal(0.0, 0.2),
                    wrap_angle(z[1] + rng.normal(0.0, 0.01)),
                )];
                jpda_update(&mut tracks, &ms, node, 30.0, &cfg);
                let eig = nalgebra::SymmetricEigen::new(tracks[0].cov);
                let min = eig.eigenvalues.min();
                assert!(min > -1e-10, "covariance lost PSD: min eig {min}");
            }
        }
    }
}
