//! Selector comparison: the energy-weighted geometric selector against the
//! unweighted geometric and max-energy selectors, over randomized initial
//! energy distributions in a dense candidate field. Reported per energy
//! bound: percentage energy savings, energy efficiency against max-energy,
//! and the Gaussian divergence between the achieved covariance errors.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use poser_core::baselines::{select_by_gdop, select_max_energy};
use poser_core::config::WorldConfig;
use poser_core::geom::{NodeId, Point2D};
use poser_core::rng::{RngStream, StreamDomain};
use poser_core::selection::{select_by_egdop, CandidateNode, CandidateRegion};

use crate::metrics::Aggregator;

/// One row of the selector-comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgdopRow {
    /// Lower bound of the initial-energy distribution, as a fraction of E0.
    pub bound_low: f64,
    pub runs: u32,
    pub e_savings_pct: f64,
    pub e_eff_egdop: f64,
    pub e_eff_gdop: f64,
    pub dkl_gdop_egdop: f64,
    pub dkl_gdop_me: f64,
}

/// Unweighted geometric information matrix of a subset around the region
/// center (the covariance error achieved by activating that subset).
fn geometric_covariance(
    subset: &[CandidateNode],
    region: &CandidateRegion,
    sigma_azimuth_rad: f64,
) -> Option<Matrix2<f64>> {
    let sigma_n2 = (sigma_azimuth_rad / std::f64::consts::TAU).powi(2);
    let mut info = Matrix2::<f64>::zeros();
    for node in subset {
        let phi = (node.pos.y - region.center.y).atan2(node.pos.x - region.center.x);
        let r2 = region.normalized_sq(node.pos).max(1e-9);
        let w = 1.0 / (sigma_n2 * r2);
        let (s, c) = phi.sin_cos();
        info[(0, 0)] += w * s * s;
        info[(0, 1)] -= w * s * c;
        info[(1, 0)] -= w * s * c;
        info[(1, 1)] += w * c * c;
    }
    info.try_inverse()
}

/// KL divergence between two zero-mean-difference Gaussians.
fn gaussian_kl(sigma_p: &Matrix2<f64>, sigma_q: &Matrix2<f64>) -> f64 {
    let q_inv = match sigma_q.try_inverse() {
        Some(inv) => inv,
        None => return f64::INFINITY,
    };
    let det_p = sigma_p.determinant();
    let det_q = sigma_q.determinant();
    if det_p <= 0.0 || det_q <= 0.0 {
        return f64::INFINITY;
    }
    0.5 * ((q_inv * sigma_p).trace() - 2.0 + (det_q / det_p).ln())
}

/// Predicted remaining energy after one base-range sensing step, J.
fn predicted_remaining(energy_fraction: f64, cfg: &WorldConfig) -> f64 {
    energy_fraction * cfg.e0_j - cfg.w_hps_w_per_m * cfg.r1() * cfg.dt_s
}

/// Run the comparison for each initial-energy lower bound.
pub fn egdop_comparison(
    cfg: &WorldConfig,
    bounds: &[f64],
    runs: u32,
    candidates_per_run: usize,
    seed: u64,
) -> Vec<EgdopRow> {
    let region = CandidateRegion::new(
        Point2D::new(0.0, 0.0),
        &Matrix2::new(4.0, 0.0, 0.0, 4.0),
        cfg.r1(),
    );
    let n_sel = cfg.n_sel as usize;
    let mut rows = Vec::new();
    for (bi, &bound) in bounds.iter().enumerate() {
        let mut savings = Aggregator::default();
        let mut eff_egdop = Aggregator::default();
        let mut eff_gdop = Aggregator::default();
        let mut kl_egdop = Aggregator::default();
        let mut kl_me = Aggregator::default();
        let mut rng = RngStream::new(
            seed ^ (bi as u64).wrapping_mul(0x9E3779B97F4A7C15),
            StreamDomain::Environment { run: bi as u64 },
        );
        for _ in 0..runs {
            // Dense candidate field uniform over the base candidate disk.
            let max_r = cfg.r1() - 3.0 * 2.0;
            let candidates: Vec<CandidateNode> = (0..candidates_per_run)
                .map(|i| {
                    let angle = rng.uniform_in(0.0, std::f64::consts::TAU);
                    let radius = max_r * rng.uniform().sqrt();
                    CandidateNode {
                        id: NodeId(i as u32),
                        pos: Point2D::new(radius * angle.cos(), radius * angle.sin()),
                        energy_rem: rng.uniform_in(bound, 1.0),
                    }
                })
                .collect();

            let egdop = select_by_egdop(&candidates, &region, n_sel, cfg);
            let gdop = select_by_gdop(&candidates, &region, n_sel, cfg.sigma_azimuth_rad);
            let me = select_max_energy(&candidates, n_sel);

            let sum_remaining = |subset: &[CandidateNode]| -> f64 {
                subset
                    .iter()
                    .map(|c| predicted_remaining(c.energy_rem, cfg))
                    .sum()
            };
            let (se, sg, sm) = (sum_remaining(&egdop), sum_remaining(&gdop), sum_remaining(&me));
            savings.push((se - sg) / (n_sel as f64 * cfg.e0_j) * 100.0);
            eff_egdop.push(se / sm);
            eff_gdop.push(sg / sm);

            let cov_g = geometric_covariance(&gdop, &region, cfg.sigma_azimuth_rad);
            let cov_e = geometric_covariance(&egdop, &region, cfg.sigma_azimuth_rad);
            let cov_m = geometric_covariance(&me, &region, cfg.sigma_azimuth_rad);
            if let (Some(g), Some(e), Some(m)) = (cov_g, cov_e, cov_m) {
                kl_egdop.push(gaussian_kl(&g, &e));
                kl_me.push(gaussian_kl(&g, &m));
            }
        }
        rows.push(EgdopRow {
            bound_low: bound,
            runs,
            e_savings_pct: savings.mean(),
            e_eff_egdop: eff_egdop.mean(),
            e_eff_gdop: eff_gdop.mean(),
            dkl_gdop_egdop: kl_egdop.mean(),
            dkl_gdop_me: kl_me.mean(),
        });
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_energies_collapse_the_comparison() {
        let cfg = WorldConfig::default();
        let rows = egdop_comparison(&cfg, &[1.0], 30, 12, 7);
        let row = &rows[0];
        // With every energy equal the selectors pick matching subsets.
        assert!(row.e_savings_pct.abs() < 1e-9, "{}", row.e_savings_pct);
        assert!((row.e_eff_egdop - 1.0).abs() < 1e-9);
        assert!((row.e_eff_gdop - 1.0).abs() < 1e-9);
        assert!(row.dkl_gdop_egdop.abs() < 1e-9);
    }

    #[test]
    fn divergence_ranks_selectors() {
        let cfg = WorldConfig::default();
        let rows = egdop_comparison(&cfg, &[0.5], 60, 12, 11);
        let row = &rows[0];
        assert!(row.e_savings_pct > 0.0);
        assert!(row.e_eff_egdop >= row.e_eff_gdop);
        assert!(row.dkl_gdop_egdop < row.dkl_gdop_me);
    }

    #[test]
    fn kl_identity_is_zero() {
        let s = Matrix2::new(2.0, 0.3, 0.3, 1.0);
        assert!(gaussian_kl(&s, &s).abs() < 1e-12);
        // Divergence grows when the second covariance degrades.
        let worse = Matrix2::new(8.0, 0.0, 0.0, 0.1);
        assert!(gaussian_kl(&s, &worse) > 0.1);
    }
}
