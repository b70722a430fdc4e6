//! The per-node probabilistic supervisor: the three operating states, the
//! transition-probability branch table, and the success-probability
//! computation that drives informed transitions.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point2D;
use crate::rng::RngStream;

/// Operating states of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfsaState {
    Sleep,
    Lps,
    Hps,
}

/// Detection-history symbol emitted at a transition; diagnostics only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symbol {
    Epsilon,
    NoDetection,
    Detection,
}

/// One stochastic-matrix row over (Sleep, LPS, HPS).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub to_sleep: f64,
    pub to_lps: f64,
    pub to_hps: f64,
}

impl TransitionRow {
    pub fn sum(&self) -> f64 {
        self.to_sleep + self.to_lps + self.to_hps
    }
}

#[derive(Debug, Error)]
pub enum PfsaError {
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

/// Everything the branch table can condition on. The informed variant
/// carries the collaboration outputs; the no-information variants carry the
/// node's own sensor value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransitionContext {
    /// Asleep; wakes with probability `1 - p_sleep`.
    Sleep { p_sleep: f64 },
    /// In LPS with no neighbor information; `p_lps` is the node's own
    /// per-scan fire probability.
    LpsNoInfo { p_lps: f64 },
    /// In HPS with no neighbor information; `p_hps` is the node's own
    /// measurement probability.
    HpsNoInfo { p_hps: f64 },
    /// Collaboration ran: selection membership, proximity to the predicted
    /// position, predicted base coverage degree, desired degree, and the
    /// success probability at the staged range.
    Informed {
        selected: bool,
        within_r1: bool,
        d_b: u32,
        n_sel: u32,
        p_hat: f64,
    },
}

fn check(p: f64) -> Result<f64, PfsaError> {
    if (0.0..=1.0).contains(&p) && p.is_finite() {
        Ok(p)
    } else {
        Err(PfsaError::BadProbability(p))
    }
}

/// The branch table. A sleeping node never jumps straight to HPS; a selected
/// node never sleeps; an unselected distant node sleeps outright when the
/// predicted base coverage suffices, and otherwise stays available in LPS.
pub fn transition_row(ctx: &TransitionContext) -> Result<TransitionRow, PfsaError> {
    let row = match *ctx {
        TransitionContext::Sleep { p_sleep } => {
            let p = check(p_sleep)?;
            TransitionRow {
                to_sleep: p,
                to_lps: 1.0 - p,
                to_hps: 0.0,
            }
        }
        TransitionContext::LpsNoInfo { p_lps } => {
            let p = check(p_lps)?;
            TransitionRow {
                to_sleep: 1.0 - p,
                to_lps: 0.0,
                to_hps: p,
            }
        }
        TransitionContext::HpsNoInfo { p_hps } => {
            let p = check(p_hps)?;
            TransitionRow {
                to_sleep: 0.0,
                to_lps: 1.0 - p,
                to_hps: p,
            }
        }
        TransitionContext::Informed {
            selected,
            within_r1,
            d_b,
            n_sel,
            p_hat,
        } => {
            let p = check(p_hat)?;
            if selected {
                TransitionRow {
                    to_sleep: 0.0,
                    to_lps: 1.0 - p,
                    to_hps: p,
                }
            } else if within_r1 {
                // Not selected but close: stay available for the next round.
                TransitionRow {
                    to_sleep: 1.0 - p,
                    to_lps: p,
                    to_hps: 0.0,
                }
            } else if d_b >= n_sel {
                TransitionRow {
                    to_sleep: 1.0,
                    to_lps: 0.0,
                    to_hps: 0.0,
                }
            } else {
                // Coverage short-handed: remain a future candidate.
                TransitionRow {
                    to_sleep: 1.0 - p,
                    to_lps: p,
                    to_hps: 0.0,
                }
            }
        }
    };
    Ok(row)
}

/// Sample the next state from a stochastic row.
pub fn step_state(row: &TransitionRow, rng: &mut RngStream) -> PfsaState {
    debug_assert!((row.sum() - 1.0).abs() < 1e-9);
    let u = rng.uniform();
    if u < row.to_sleep {
        PfsaState::Sleep
    } else if u < row.to_sleep + row.to_lps {
        PfsaState::Lps
    } else {
        PfsaState::Hps
    }
}

// 12-point Gauss-Legendre rule on [-1, 1] for the radial integral.
const GL12_NODES: [f64; 12] = [
    -0.9815606342467192,
    -0.9041172563704748,
    -0.7699026741943047,
    -0.5873179542866175,
    -0.3678314989981802,
    -0.1252334085114689,
    0.1252334085114689,
    0.3678314989981802,
    0.5873179542866175,
    0.7699026741943047,
    0.9041172563704748,
    0.9815606342467192,
];
const GL12_WEIGHTS: [f64; 12] = [
    0.04717533638651202,
    0.10693932599531888,
    0.1600783285433461,
    0.20316742672306565,
    0.23349253653835464,
    0.2491470458134027,
    0.2491470458134027,
    0.23349253653835464,
    0.20316742672306565,
    0.1600783285433461,
    0.10693932599531888,
    0.04717533638651202,
];
const ANGULAR_POINTS: usize = 24;

// Integration stops beyond this many standard deviations; the remaining
// tail is below 1e-14.
const WHITENED_TAIL: f64 = 8.0;

/// Mass of `N(mean, cov)` over the disk of radius `r` centered at `center`,
/// by polar quadrature in the whitened Gaussian frame: 24 angular rays from
/// the distribution mean, each integrating `t exp(-t^2/2)` over the exact
/// ray-disk intersection with 12 Gauss-Legendre nodes. Centering the rule on
/// the Gaussian keeps tight covariances resolved even when the mass sits on
/// the disk boundary.
pub fn gaussian_disk_mass(center: Point2D, r: f64, mean: Point2D, cov: &Matrix2<f64>) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let chol = match nalgebra::Cholesky::new(*cov) {
        Some(c) => c,
        // Degenerate covariance: all mass at the mean.
        None => return if mean.distance(&center) <= r { 1.0 } else { 0.0 },
    };
    let l = chol.l();
    // p = mean + L z, so the disk |p - center| <= r becomes |L z - d| <= r.
    let d = nalgebra::Vector2::new(center.x - mean.x, center.y - mean.y);
    let d_theta = std::f64::consts::TAU / ANGULAR_POINTS as f64;
    let mut mass = 0.0;
    for a in 0..ANGULAR_POINTS {
        let theta = (a as f64 + 0.5) * d_theta;
        let (sin_t, cos_t) = theta.sin_cos();
        let u = l * nalgebra::Vector2::new(cos_t, sin_t);
        // |u t - d|^2 <= r^2 as a quadratic in the ray parameter t >= 0.
        let qa = u.norm_squared();
        let qb = -2.0 * u.dot(&d);
        let qc = d.norm_squared() - r * r;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 || qa <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let lo = ((-qb - sq) / (2.0 * qa)).max(0.0).min(WHITENED_TAIL);
        let hi = ((-qb + sq) / (2.0 * qa)).max(0.0).min(WHITENED_TAIL);
        if hi <= lo {
            continue;
        }
        let half = (hi - lo) / 2.0;
        let mid = (hi + lo) / 2.0;
        let mut inner = 0.0;
        for (node, weight) in GL12_NODES.iter().zip(GL12_WEIGHTS) {
            let t = mid + half * node;
            inner += weight * t * (-0.5 * t * t).exp();
        }
        mass += d_theta / std::f64::consts::TAU * inner * half;
    }
    mass.clamp(0.0, 1.0)
}

/// A predicted target position in measurement space: Cartesian mean and
/// position covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionPrediction {
    pub mean: Point2D,
    pub cov: Matrix2<f64>,
}

/// Success probability of detecting any predicted target next step with the
/// staged sensing range: `p_d` times the largest disk mass over tracks.
/// Always within `[0, p_d]`.
pub fn dops_probability(
    node_pos: Point2D,
    r_next: f64,
    predictions: &[PositionPrediction],
    p_d: f64,
) -> f64 {
    let best = predictions
        .iter()
        .map(|p| gaussian_disk_mass(node_pos, r_next, p.mean, &p.cov))
        .fold(0.0, f64::max);
    (p_d * best).clamp(0.0, p_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamDomain;

    #[test]
    fn sleep_row() {
        let row = transition_row(&TransitionContext::Sleep { p_sleep: 0.75 }).unwrap();
        assert_eq!(
            row,
            TransitionRow {
                to_sleep: 0.75,
                to_lps: 0.25,
                to_hps: 0.0
            }
        );
    }

    #[test]
    fn lps_no_info_row() {
        let row = transition_row(&TransitionContext::LpsNoInfo { p_lps: 0.9 }).unwrap();
        assert!((row.to_sleep - 0.1).abs() < 1e-12);
        assert_eq!(row.to_lps, 0.0);
        assert!((row.to_hps - 0.9).abs() < 1e-12);
    }

    #[test]
    fn distant_unselected_with_full_base_sleeps() {
        let row = transition_row(&TransitionContext::Informed {
            selected: false,
            within_r1: false,
            d_b: 3,
            n_sel: 3,
            p_hat: 0.4,
        })
        .unwrap();
        assert_eq!(
            row,
            TransitionRow {
                to_sleep: 1.0,
                to_lps: 0.0,
                to_hps: 0.0
            }
        );
    }

    #[test]
    fn selected_node_never_sleeps() {
        for p in [0.0, 0.3, 1.0] {
            let row = transition_row(&TransitionContext::Informed {
                selected: true,
                within_r1: false,
                d_b: 0,
                n_sel: 3,
                p_hat: p,
            })
            .unwrap();
            assert_eq!(row.to_sleep, 0.0);
        }
    }

    #[test]
    fn bad_probability_rejected() {
        assert!(transition_row(&TransitionContext::LpsNoInfo { p_lps: 1.2 }).is_err());
        assert!(transition_row(&TransitionContext::Sleep { p_sleep: -0.1 }).is_err());
    }

    #[test]
    fn rows_always_stochastic_and_no_sleep_to_hps() {
        let mut rng = RngStream::new(2, StreamDomain::Environment { run: 0 });
        for _ in 0..100_000 {
            let p = rng.uniform();
            let ctx = match rng.index(4) {
                0 => TransitionContext::Sleep { p_sleep: p },
                1 => TransitionContext::LpsNoInfo { p_lps: p },
                2 => TransitionContext::HpsNoInfo { p_hps: p },
                _ => TransitionContext::Informed {
                    selected: rng.bernoulli(0.5),
                    within_r1: rng.bernoulli(0.5),
                    d_b: rng.index(6) as u32,
                    n_sel: 3,
                    p_hat: p,
                },
            };
            let row = transition_row(&ctx).unwrap();
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.to_sleep >= 0.0 && row.to_lps >= 0.0 && row.to_hps >= 0.0);
            if matches!(ctx, TransitionContext::Sleep { .. }) {
                assert_eq!(row.to_hps, 0.0);
            }
        }
    }

    #[test]
    fn deterministic_rows_sample_exactly() {
        let mut rng = RngStream::new(3, StreamDomain::Node { run: 0, node: 0 });
        let sleep = TransitionRow {
            to_sleep: 1.0,
            to_lps: 0.0,
            to_hps: 0.0,
        };
        let hps = TransitionRow {
            to_sleep: 0.0,
            to_lps: 0.0,
            to_hps: 1.0,
        };
        for _ in 0..100 {
            assert_eq!(step_state(&sleep, &mut rng), PfsaState::Sleep);
            assert_eq!(step_state(&hps, &mut rng), PfsaState::Hps);
        }
    }

    #[test]
    fn sampled_frequencies_match_row() {
        let mut rng = RngStream::new(4, StreamDomain::Node { run: 0, node: 1 });
        let row = TransitionRow {
            to_sleep: 0.75,
            to_lps: 0.25,
            to_hps: 0.0,
        };
        let n = 100_000;
        let mut sleeps = 0usize;
        for _ in 0..n {
            if step_state(&row, &mut rng) == PfsaState::Sleep {
                sleeps += 1;
            }
        }
        let rate = sleeps as f64 / n as f64;
        let sigma = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((rate - 0.75).abs() < 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn disk_mass_limits() {
        let cov = Matrix2::new(1.0, 0.0, 0.0, 1.0);
        // Tight prediction centered in a large disk: nearly all mass.
        let m = gaussian_disk_mass(Point2D::new(0.0, 0.0), 30.0, Point2D::new(0.0, 0.0), &cov);
        assert!(m > 0.999);
        // Prediction far outside the disk: negligible mass.
        let m = gaussian_disk_mass(Point2D::new(0.0, 0.0), 3.0, Point2D::new(30.0, 0.0), &cov);
        assert!(m < 1e-6);
    }

    #[test]
    fn dops_bounds_and_boundary_half_mass() {
        let cov = Matrix2::new(0.25, 0.0, 0.0, 0.25);
        let preds = [PositionPrediction {
            mean: Point2D::new(10.0, 0.0),
            cov,
        }];
        // Prediction centered on the disk boundary with small isotropic
        // covariance: about half the mass falls inside.
        let p = dops_probability(Point2D::new(0.0, 0.0), 10.0, &preds, 0.95);
        assert!((p - 0.95 / 2.0).abs() < 0.02, "p {p}");
        // Always within [0, p_d].
        let close = dops_probability(Point2D::new(10.0, 0.0), 10.0, &preds, 0.95);
        assert!(close <= 0.95 && close >= 0.99 * 0.95);
        assert_eq!(dops_probability(Point2D::new(0.0, 0.0), 10.0, &[], 0.95), 0.0);
    }

    #[test]
    fn disk_mass_matches_monte_carlo() {
        // Monte Carlo oracle over a correlated Gaussian.
        let cov = Matrix2::new(4.0, 1.2, 1.2, 2.0);
        let mean = Point2D::new(2.0, -1.0);
        let center = Point2D::new(0.0, 0.0);
        let r = 4.0;
        let quad = gaussian_disk_mass(center, r, mean, &cov);
        let chol = nalgebra::Cholesky::new(cov).unwrap();
        let l = chol.l();
        let mut rng = RngStream::new(10, StreamDomain::Environment { run: 0 });
        let n = 1_000_000;
        let mut inside = 0usize;
        for _ in 0..n {
            let z = nalgebra::Vector2::new(rng.gauss(), rng.gauss());
            let s = l * z;
            let p = Point2D::new(mean.x + s[0], mean.y + s[1]);
            if p.distance(&center) <= r {
                inside += 1;
            }
        }
        let mc = inside as f64 / n as f64;
        assert!(
            (quad - mc).abs() / mc.max(1e-12) < 1e-2,
            "quad {quad} vs mc {mc}"
        );
        assert!((quad - mc).abs() < 3.0 * (mc * (1.0 - mc) / n as f64).sqrt() + 1e-3 * mc);
    }
}
