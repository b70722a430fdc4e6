//! Range-game validation: equilibrium coverage mass, efficiency against the
//! exhaustive optimum, and wall-clock comparison, over randomized geometries
//! that mirror a coverage gap (players ringed between the base and maximum
//! ranges with enough reach to cover the whole uncertainty region).

use std::time::Instant;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use poser_core::config::WorldConfig;
use poser_core::game::{
    cell_worth, exhaustive_optimum, maxlogit_solve, partition_uncertainty, GameInstance,
    JointAction,
};
use poser_core::geom::{NodeId, Point2D};
use poser_core::rng::{RngStream, StreamDomain};

use crate::metrics::Aggregator;

/// One row of the game-validation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub n_players: u32,
    pub games: u32,
    pub chi_star: f64,
    pub phi_eff: f64,
    pub t_game_s: f64,
    pub t_opt_s: f64,
}

/// A randomized gap-style instance: the target's uncertainty sits inside a
/// dead zone of roughly the base range, so every player lies between `R_1`
/// and `R_L` away; at least `n_sel` of them can cover the entire grid.
pub fn random_gap_instance(cfg: &WorldConfig, rng: &mut RngStream) -> GameInstance {
    let n_players = cfg.n_sel_prime as usize;
    random_gap_instance_with(cfg, n_players, rng)
}

pub fn random_gap_instance_with(
    cfg: &WorldConfig,
    n_players: usize,
    rng: &mut RngStream,
) -> GameInstance {
    let center = Point2D::new(0.0, 0.0);
    let sx = rng.uniform_in(1.0, 3.0);
    let sy = rng.uniform_in(1.0, 3.0);
    let mut grid = partition_uncertainty(center, sx, sy, cfg.grid_u, cfg.grid_v);
    cell_worth(&mut grid, center, &Matrix2::new(sx * sx, 0.0, 0.0, sy * sy));
    let half_diag = 3.0 * (sx * sx + sy * sy).sqrt();
    let full_cover_max = cfg.r_max() - half_diag;
    let players: Vec<(NodeId, Point2D)> = (0..n_players)
        .map(|i| {
            let angle = rng.uniform_in(0.0, std::f64::consts::TAU);
            // The first n_sel players can reach the whole region.
            let d = if i < cfg.n_sel as usize {
                rng.uniform_in(cfg.r1(), full_cover_max)
            } else {
                rng.uniform_in(cfg.r1(), cfg.r_max())
            };
            (
                NodeId(i as u32),
                Point2D::new(center.x + d * angle.cos(), center.y + d * angle.sin()),
            )
        })
        .collect();
    GameInstance::new(
        players,
        &cfg.hps_ranges_m,
        grid,
        cfg.n_sel,
        cfg.slope_b1,
        cfg.slope_b2,
        cfg.w_hps_w_per_m,
        cfg.e_lps_w,
        cfg.dt_s,
    )
}

/// Validation sweep over player counts.
pub fn game_validation(
    cfg: &WorldConfig,
    player_counts: &[u32],
    games_per_count: u32,
    seed: u64,
) -> Vec<GameRow> {
    let mut rows = Vec::new();
    for &n_players in player_counts {
        let mut chi = Aggregator::default();
        let mut eff = Aggregator::default();
        let mut t_game = 0.0f64;
        let mut t_opt = 0.0f64;
        let mut rng = RngStream::new(
            seed ^ (n_players as u64).wrapping_mul(0xD1342543DE82EF95),
            StreamDomain::Environment { run: n_players as u64 },
        );
        for _ in 0..games_per_count {
            let game = random_gap_instance_with(cfg, n_players as usize, &mut rng);

            let start = Instant::now();
            let solved = maxlogit_solve(&game, cfg.maxlogit_iterations, cfg.maxlogit_tau, &mut rng);
            t_game += start.elapsed().as_secs_f64();

            let start = Instant::now();
            let optimum = exhaustive_optimum(&game).expect("within the search guard");
            t_opt += start.elapsed().as_secs_f64();

            chi.push(game.coverage_degree_mass(&solved, cfg.n_sel));
            let phi_opt = game.potential(&optimum);
            let phi_solved = game.potential(&solved);
            if phi_opt.abs() > 1e-12 {
                eff.push(phi_solved / phi_opt);
            }
        }
        rows.push(GameRow {
            n_players,
            games: games_per_count,
            chi_star: chi.mean(),
            phi_eff: eff.mean(),
            t_game_s: t_game / games_per_count as f64,
            t_opt_s: t_opt / games_per_count as f64,
        });
    }
    rows
}

/// Mean equilibrium worth-mass covered by exactly `n_sel` players over
/// randomized compliant geometries (the slope-rule statistic).
pub fn coverage_degree_statistic(cfg: &WorldConfig, instances: u32, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, StreamDomain::Environment { run: 0 });
    let mut chi = Aggregator::default();
    for _ in 0..instances {
        let game = random_gap_instance(cfg, &mut rng);
        let solved = maxlogit_solve(&game, cfg.maxlogit_iterations, cfg.maxlogit_tau, &mut rng);
        chi.push(game.coverage_degree_mass(&solved, cfg.n_sel));
    }
    chi.mean()
}

/// An all-null action stays available as a sanity reference.
pub fn null_action(game: &GameInstance) -> JointAction {
    JointAction::all_null(game.n_players())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_satisfy_the_geometry_contract() {
        let cfg = WorldConfig::default();
        let mut rng = RngStream::new(3, StreamDomain::Environment { run: 0 });
        for _ in 0..50 {
            let game = random_gap_instance(&cfg, &mut rng);
            assert_eq!(game.n_players(), cfg.n_sel_prime as usize);
            // No player closer than the base range (gap geometry).
            for (_, pos) in &game.players {
                assert!(pos.distance(&Point2D::new(0.0, 0.0)) >= cfg.r1() - 1e-9);
            }
            // At least n_sel players can cover every cell at max range.
            let full_cover = game
                .players
                .iter()
                .filter(|(_, pos)| {
                    game.grid
                        .centers
                        .iter()
                        .all(|c| c.distance(pos) <= cfg.r_max())
                })
                .count();
            assert!(full_cover >= cfg.n_sel as usize);
        }
    }

    #[test]
    fn validation_row_sane_at_small_scale() {
        let cfg = WorldConfig::default();
        let rows = game_validation(&cfg, &[3], 20, 5);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].chi_star > 0.8, "chi {}", rows[0].chi_star);
        assert!(rows[0].phi_eff > 0.9, "eff {}", rows[0].phi_eff);
    }
}
