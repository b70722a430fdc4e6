//! Potential game for sensing-range selection around a predicted target
//! position: leader choice, uncertainty-grid partition and worth, potential
//! and marginal-contribution utilities, Maxlogit learning, the slope rule,
//! and an exhaustive oracle.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::geom::{NodeId, Point2D};
use crate::rng::RngStream;

/// Minimum admissible lower slope: below `delta_r / (n' * R_L * delta)` the
/// equilibrium may stall short of the desired coverage degree.
pub fn slope_lower_bound(delta_r: f64, n_sel_prime: u32, r_max: f64, delta: f64) -> f64 {
    assert!(delta_r > 0.0 && r_max > 0.0 && n_sel_prime > 0);
    assert!(delta > 0.0 && delta < 1.0);
    delta_r / (n_sel_prime as f64 * r_max * delta)
}

/// Leader of a player group: highest remaining energy, ties to smallest id.
pub fn select_leader(players: &[NodeId], energies: &[f64]) -> NodeId {
    assert!(!players.is_empty());
    let mut best = 0usize;
    for i in 1..players.len() {
        if energies[i] > energies[best]
            || (energies[i] == energies[best] && players[i] < players[best])
        {
            best = i;
        }
    }
    players[best]
}

/// Rectangular partition of the 6-sigma region around a predicted position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyGrid {
    pub u: u32,
    pub v: u32,
    /// Lower-left corner.
    pub origin: Point2D,
    pub cell_w: f64,
    pub cell_h: f64,
    /// Row-major cell centers, `v` varying fastest along y.
    pub centers: Vec<Point2D>,
    /// Per-cell probability mass, normalized to sum to one.
    pub worths: Vec<f64>,
}

impl UncertaintyGrid {
    pub fn cell_count(&self) -> usize {
        (self.u * self.v) as usize
    }
}

// Enforced lower bound on cell extent when the prediction collapses.
const MIN_CELL_EXTENT_M: f64 = 0.1;

/// Split `[x +- 3 sigma_x] x [y +- 3 sigma_y]` into `u x v` equal cells.
/// Worths are left unassigned (zeroed) until [`cell_worth`].
pub fn partition_uncertainty(center: Point2D, sigma_x: f64, sigma_y: f64, u: u32, v: u32) -> UncertaintyGrid {
    assert!(u > 0 && v > 0);
    let width = (6.0 * sigma_x).max(MIN_CELL_EXTENT_M * u as f64);
    let height = (6.0 * sigma_y).max(MIN_CELL_EXTENT_M * v as f64);
    let origin = Point2D::new(center.x - width / 2.0, center.y - height / 2.0);
    let cell_w = width / u as f64;
    let cell_h = height / v as f64;
    let mut centers = Vec::with_capacity((u * v) as usize);
    for g in 0..u {
        for h in 0..v {
            centers.push(Point2D::new(
                origin.x + (g as f64 + 0.5) * cell_w,
                origin.y + (h as f64 + 0.5) * cell_h,
            ));
        }
    }
    UncertaintyGrid {
        u,
        v,
        origin,
        cell_w,
        cell_h,
        centers,
        worths: vec![0.0; (u * v) as usize],
    }
}

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

/// Assign each cell the probability mass of `N(mean, cov)` over it,
/// normalized so the grid sums to one. Tensor-product Gauss-Legendre
/// quadrature handles correlated position covariance.
pub fn cell_worth(grid: &mut UncertaintyGrid, mean: Point2D, cov: &Matrix2<f64>) {
    let inv = cov
        .try_inverse()
        .unwrap_or_else(|| Matrix2::identity() * 1e12);
    let det = cov.determinant().max(1e-300);
    let norm = 1.0 / (std::f64::consts::TAU * det.sqrt());
    let half_w = grid.cell_w / 2.0;
    let half_h = grid.cell_h / 2.0;
    let mut total = 0.0;
    for (c, center) in grid.centers.iter().enumerate() {
        let mut mass = 0.0;
        for (xi, wx) in GL_NODES.iter().zip(GL_WEIGHTS) {
            for (yi, wy) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let dx = center.x + xi * half_w - mean.x;
                let dy = center.y + yi * half_h - mean.y;
                let d2 = inv[(0, 0)] * dx * dx + 2.0 * inv[(0, 1)] * dx * dy + inv[(1, 1)] * dy * dy;
                mass += wx * wy * norm * (-0.5 * d2).exp();
            }
        }
        // Jacobian of the [-1,1]^2 -> cell map.
        grid.worths[c] = mass * half_w * half_h;
        total += grid.worths[c];
    }
    if total > 0.0 {
        for w in &mut grid.worths {
            *w /= total;
        }
    } else {
        let uniform = 1.0 / grid.worths.len() as f64;
        grid.worths.fill(uniform);
    }
}

/// Piecewise-linear coverage reward: rises by `b1` per covering node up to
/// `n_sel`, falls by `b2` per surplus node beyond it.
pub fn coverage_function(j: u32, n_sel: u32, b1: f64, b2: f64) -> f64 {
    if j <= n_sel {
        b1 * j as f64
    } else {
        b1 * n_sel as f64 - b2 * (j - n_sel) as f64
    }
}

/// Predicted one-step energy of an action: ranging cost when sensing, the
/// low-power rate when idle.
pub fn energy_cost(action_range_m: f64, w_hps_w_per_m: f64, e_lps_w: f64, dt_s: f64) -> f64 {
    if action_range_m != 0.0 {
        w_hps_w_per_m * action_range_m * dt_s
    } else {
        e_lps_w * dt_s
    }
}

/// A range-selection game: players, the shared action set `{0, R_1..R_L}`,
/// the worth-weighted uncertainty grid, and the reward shape.
#[derive(Clone, Debug)]
pub struct GameInstance {
    pub players: Vec<(NodeId, Point2D)>,
    /// Shared action set; index 0 is the null action.
    pub actions: Vec<f64>,
    pub grid: UncertaintyGrid,
    pub n_sel: u32,
    pub slope_b1: f64,
    pub slope_b2: f64,
    pub w_hps_w_per_m: f64,
    pub e_lps_w: f64,
    pub dt_s: f64,
    /// covers[player][action][cell]
    covers: Vec<Vec<Vec<bool>>>,
    /// Energy term of each action divided by the `n' * E_c(R_L)` normalizer.
    energy_norm: Vec<f64>,
}

/// One action index per player.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn all_null(n_players: usize) -> Self {
        JointAction(vec![0; n_players])
    }
}

impl GameInstance {
    pub fn new(
        players: Vec<(NodeId, Point2D)>,
        ranges: &[f64],
        grid: UncertaintyGrid,
        n_sel: u32,
        slope_b1: f64,
        slope_b2: f64,
        w_hps_w_per_m: f64,
        e_lps_w: f64,
        dt_s: f64,
    ) -> Self {
        let mut actions = Vec::with_capacity(ranges.len() + 1);
        actions.push(0.0);
        actions.extend_from_slice(ranges);
        let covers = players
            .iter()
            .map(|(_, pos)| {
                actions
                    .iter()
                    .map(|a| {
                        grid.centers
                            .iter()
                            .map(|c| *a != 0.0 && c.distance(pos) <= *a)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let r_max = *ranges.last().expect("non-empty range set");
        let normalizer = players.len() as f64 * energy_cost(r_max, w_hps_w_per_m, e_lps_w, dt_s);
        let energy_norm = actions
            .iter()
            .map(|a| energy_cost(*a, w_hps_w_per_m, e_lps_w, dt_s) / normalizer)
            .collect();
        Self {
            players,
            actions,
            grid,
            n_sel,
            slope_b1,
            slope_b2,
            w_hps_w_per_m,
            e_lps_w,
            dt_s,
            covers,
            energy_norm,
        }
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    fn reward(&self, j: u32) -> f64 {
        coverage_function(j, self.n_sel, self.slope_b1, self.slope_b2)
    }

    /// Number of players covering each cell under the joint action.
    pub fn coverage_count(&self, a: &JointAction) -> Vec<u32> {
        let mut counts = vec![0u32; self.grid.cell_count()];
        for (p, &ai) in a.0.iter().enumerate() {
            for (c, covered) in self.covers[p][ai].iter().enumerate() {
                if *covered {
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    /// Global objective: worth-weighted coverage reward minus normalized
    /// predicted energy.
    pub fn potential(&self, a: &JointAction) -> f64 {
        let counts = self.coverage_count(a);
        let coverage: f64 = counts
            .iter()
            .zip(&self.grid.worths)
            .map(|(j, w)| w * self.reward(*j))
            .sum();
        let energy: f64 = a.0.iter().map(|ai| self.energy_norm[*ai]).sum();
        coverage - energy
    }

    /// Marginal-contribution utility of `player`: worth gained over taking
    /// the null action, minus the normalized energy increment. Expanded
    /// directly rather than via two potential evaluations.
    pub fn utility(&self, player: usize, a: &JointAction) -> f64 {
        let ai = a.0[player];
        let mut counts_without = vec![0u32; self.grid.cell_count()];
        for (p, &aj) in a.0.iter().enumerate() {
            if p == player {
                continue;
            }
            for (c, covered) in self.covers[p][aj].iter().enumerate() {
                if *covered {
                    counts_without[c] += 1;
                }
            }
        }
        let mut coverage_delta = 0.0;
        for (c, covered) in self.covers[player][ai].iter().enumerate() {
            if *covered {
                let j = counts_without[c];
                coverage_delta += self.grid.worths[c] * (self.reward(j + 1) - self.reward(j));
            }
        }
        coverage_delta - (self.energy_norm[ai] - self.energy_norm[0])
    }

    /// Worth mass covered by exactly `degree` players at the joint action.
    pub fn coverage_degree_mass(&self, a: &JointAction, degree: u32) -> f64 {
        self.coverage_count(a)
            .iter()
            .zip(&self.grid.worths)
            .filter(|(j, _)| **j == degree)
            .map(|(_, w)| w)
            .sum()
    }
}

/// Incremental potential evaluator: one player-action change costs one grid
/// sweep instead of a full re-evaluation.
pub struct GameEvaluator<'a> {
    game: &'a GameInstance,
    pub action: JointAction,
    counts: Vec<u32>,
    coverage_term: f64,
    energy_term: f64,
}

impl<'a> GameEvaluator<'a> {
    pub fn new(game: &'a GameInstance, action: JointAction) -> Self {
        let counts = game.coverage_count(&action);
        let coverage_term = counts
            .iter()
            .zip(&game.grid.worths)
            .map(|(j, w)| w * game.reward(*j))
            .sum();
        let energy_term = action.0.iter().map(|ai| game.energy_norm[*ai]).sum();
        Self {
            game,
            action,
            counts,
            coverage_term,
            energy_term,
        }
    }

    pub fn phi(&self) -> f64 {
        self.coverage_term - self.energy_term
    }

    /// Potential change if `player` switched to `new_action`, without
    /// committing.
    pub fn delta_phi(&self, player: usize, new_action: usize) -> f64 {
        let old_action = self.action.0[player];
        if new_action == old_action {
            return 0.0;
        }
        let old_mask = &self.game.covers[player][old_action];
        let new_mask = &self.game.covers[player][new_action];
        let mut delta_cov = 0.0;
        for c in 0..self.counts.len() {
            let change = new_mask[c] as i32 - old_mask[c] as i32;
            if change != 0 {
                let j = self.counts[c];
                let j_new = (j as i32 + change) as u32;
                delta_cov += self.game.grid.worths[c] * (self.game.reward(j_new) - self.game.reward(j));
            }
        }
        delta_cov - (self.game.energy_norm[new_action] - self.game.energy_norm[old_action])
    }

    pub fn apply(&mut self, player: usize, new_action: usize) {
        let old_action = self.action.0[player];
        if new_action == old_action {
            return;
        }
        let old_mask = &self.game.covers[player][old_action];
        let new_mask = &self.game.covers[player][new_action];
        for c in 0..self.counts.len() {
            let change = new_mask[c] as i32 - old_mask[c] as i32;
            if change != 0 {
                let j = self.counts[c];
                let j_new = (j as i32 + change) as u32;
                self.coverage_term +=
                    self.game.grid.worths[c] * (self.game.reward(j_new) - self.game.reward(j));
                self.counts[c] = j_new;
            }
        }
        self.energy_term += self.game.energy_norm[new_action] - self.game.energy_norm[old_action];
        self.action.0[player] = new_action;
    }
}

/// Log-linear learning from the all-null joint action: each iteration picks
/// a uniform player and candidate action and accepts with probability
/// `psi(new) / max(psi(old), psi(new))` where `psi = exp(U / tau)`.
/// Returns the best-potential action visited.
pub fn maxlogit_solve(game: &GameInstance, iterations: u32, tau: f64, rng: &mut RngStream) -> JointAction {
    assert!(iterations >= 1 && tau > 0.0);
    let mut eval = GameEvaluator::new(game, JointAction::all_null(game.n_players()));
    let mut best = eval.action.clone();
    let mut best_phi = eval.phi();
    for _ in 0..iterations {
        let player = rng.index(game.n_players());
        let candidate = rng.index(game.n_actions());
        // Utility differences equal potential differences, so the
        // acceptance ratio reduces to exp(min(0, delta_phi / tau)).
        let delta = eval.delta_phi(player, candidate);
        let accept = if delta >= 0.0 {
            true
        } else {
            rng.bernoulli((delta / tau).exp())
        };
        if accept {
            eval.apply(player, candidate);
            let phi = eval.phi();
            if phi > best_phi {
                best_phi = phi;
                best = eval.action.clone();
            }
        }
    }
    best
}

/// Search-space guard for [`exhaustive_optimum`].
pub const EXHAUSTIVE_GUARD: f64 = 1e7;

/// Argmax of the potential over every joint action; ties resolve to the
/// lexicographically smallest action tuple. Errs when `|A|^n` exceeds the
/// guard.
pub fn exhaustive_optimum(game: &GameInstance) -> Result<JointAction, String> {
    let space = (game.n_actions() as f64).powi(game.n_players() as i32);
    if space > EXHAUSTIVE_GUARD {
        return Err(format!(
            "joint action space {space:.3e} exceeds the exhaustive guard {EXHAUSTIVE_GUARD:.0e}"
        ));
    }
    let mut current = JointAction::all_null(game.n_players());
    let mut best = current.clone();
    let mut best_phi = game.potential(&current);
    loop {
        // Odometer increment, most-significant digit first so visiting
        // order is lexicographic and the first maximum wins ties.
        let mut pos = game.n_players();
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            current.0[pos] += 1;
            if current.0[pos] < game.n_actions() {
                break;
            }
            current.0[pos] = 0;
        }
        let phi = game.potential(&current);
        if phi > best_phi {
            best_phi = phi;
            best = current.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorldConfig;
    use crate::rng::{RngStream, StreamDomain};

    fn small_game(player_pos: &[(f64, f64)], sigma: f64, ranges: &[f64]) -> GameInstance {
        let cfg = WorldConfig::default();
        let center = Point2D::new(0.0, 0.0);
        let mut grid = partition_uncertainty(center, sigma, sigma, 10, 10);
        cell_worth(&mut grid, center, &Matrix2::new(sigma * sigma, 0.0, 0.0, sigma * sigma));
        GameInstance::new(
            player_pos
                .iter()
                .enumerate()
                .map(|(i, (x, y))| (NodeId(i as u32), Point2D::new(*x, *y)))
                .collect(),
            ranges,
            grid,
            cfg.n_sel,
            cfg.slope_b1,
            cfg.slope_b2,
            cfg.w_hps_w_per_m,
            cfg.e_lps_w,
            cfg.dt_s,
        )
    }

    #[test]
    fn leader_selection() {
        let ids = [NodeId(0), NodeId(1), NodeId(2)];
        assert_eq!(select_leader(&ids, &[0.5, 0.9, 0.7]), NodeId(1));
        assert_eq!(select_leader(&ids, &[0.5, 0.5, 0.5]), NodeId(0));
        assert_eq!(select_leader(&[NodeId(4)], &[0.1]), NodeId(4));
    }

    #[test]
    fn partition_geometry() {
        let grid = partition_uncertainty(Point2D::new(0.0, 0.0), 5.0, 5.0, 10, 10);
        assert_eq!(grid.cell_count(), 100);
        assert!((grid.cell_w - 3.0).abs() < 1e-12);
        assert!((grid.cell_h - 3.0).abs() < 1e-12);
        // Cells tile the region exactly.
        assert!((grid.origin.x + 10.0 * grid.cell_w - 15.0).abs() < 1e-12);

        let tiny = partition_uncertainty(Point2D::new(0.0, 0.0), 0.0, 0.0, 10, 10);
        assert!(tiny.cell_w >= 0.1 - 1e-12);

        let single = partition_uncertainty(Point2D::new(0.0, 0.0), 5.0, 5.0, 1, 1);
        assert_eq!(single.cell_count(), 1);
    }

    #[test]
    fn worth_normalized_symmetric_unimodal() {
        let mut grid = partition_uncertainty(Point2D::new(0.0, 0.0), 5.0, 5.0, 10, 10);
        cell_worth(&mut grid, Point2D::new(0.0, 0.0), &Matrix2::new(25.0, 0.0, 0.0, 25.0));
        let sum: f64 = grid.worths.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // 4-fold reflection symmetry.
        for g in 0..10 {
            for h in 0..10 {
                let w = grid.worths[g * 10 + h];
                for (gg, hh) in [(9 - g, h), (g, 9 - h), (9 - g, 9 - h)] {
                    assert!((w - grid.worths[gg * 10 + hh]).abs() < 1e-9);
                }
            }
        }
        // Center cells carry the maximum.
        let max = grid.worths.iter().cloned().fold(0.0, f64::max);
        assert!(grid.worths[4 * 10 + 4] >= max - 1e-12);

        let mut single = partition_uncertainty(Point2D::new(0.0, 0.0), 5.0, 5.0, 1, 1);
        cell_worth(&mut single, Point2D::new(0.0, 0.0), &Matrix2::new(25.0, 0.0, 0.0, 25.0));
        assert!((single.worths[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_counts() {
        let game = small_game(&[(0.0, 0.0)], 5.0, &[30.0, 60.0]);
        assert!(game
            .coverage_count(&JointAction(vec![0]))
            .iter()
            .all(|j| *j == 0));
        // Grid diagonal is ~21 m, so a 30 m disk at the center covers all.
        assert!(game
            .coverage_count(&JointAction(vec![1]))
            .iter()
            .all(|j| *j == 1));
    }

    #[test]
    fn coverage_boundary_inclusive() {
        let game = small_game(&[(0.0, 0.0)], 5.0, &[30.0]);
        // A player exactly at distance a from a cell center covers the cell.
        let c0 = game.grid.centers[0];
        let d = c0.distance(&Point2D::new(0.0, 0.0));
        let mut exact = game.clone();
        exact.actions[1] = d;
        let rebuilt = GameInstance::new(
            exact.players.clone(),
            &[d],
            exact.grid.clone(),
            3,
            0.5,
            0.5,
            0.2,
            0.115,
            0.5,
        );
        let counts = rebuilt.coverage_count(&JointAction(vec![1]));
        assert_eq!(counts[0], 1);
    }

    #[test]
    fn coverage_function_shape() {
        // b1 = b2 = 0.5, n_sel = 3
        assert_eq!(coverage_function(0, 3, 0.5, 0.5), 0.0);
        assert_eq!(coverage_function(2, 3, 0.5, 0.5), 1.0);
        assert_eq!(coverage_function(3, 3, 0.5, 0.5), 1.5);
        assert_eq!(coverage_function(4, 3, 0.5, 0.5), 1.0);
        // Continuity at n_sel: both formulas agree there.
        let left = 0.5 * 3.0;
        let right = 0.5 * 3.0 - 0.5 * 0.0;
        assert_eq!(left, right);
    }

    #[test]
    fn energy_cost_values() {
        let cfg = WorldConfig::default();
        let e = |r: f64| energy_cost(r, cfg.w_hps_w_per_m, cfg.e_lps_w, cfg.dt_s);
        assert!((e(60.0) - 6.0).abs() < 1e-12);
        assert!((e(0.0) - 0.0575).abs() < 1e-12);
        let mut prev = e(30.0);
        for r in [35.0, 40.0, 45.0, 50.0, 55.0, 60.0] {
            assert!(e(r) > prev);
            prev = e(r);
        }
    }

    #[test]
    fn potential_all_null_is_pure_energy() {
        let game = small_game(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (7.0, 7.0), (-8.0, 2.0)], 3.0, &[30.0, 60.0]);
        let phi = game.potential(&JointAction::all_null(5));
        // -(1 / (n' E_c(R_L))) * n' * e_LPS dt = -e_LPS dt / E_c(R_L)
        let expected = -(0.115 * 0.5) / (0.2 * 60.0 * 0.5);
        assert!((phi - expected).abs() < 1e-12);
    }

    #[test]
    fn useless_activation_decreases_potential() {
        // Player far outside the grid: taking R_L adds energy, no coverage.
        let game = small_game(&[(0.0, 0.0), (500.0, 500.0)], 3.0, &[30.0, 60.0]);
        let base = game.potential(&JointAction(vec![1, 0]));
        let with_extra = game.potential(&JointAction(vec![1, 2]));
        assert!(with_extra < base);
    }

    #[test]
    fn null_action_utility_is_zero() {
        let game = small_game(&[(0.0, 0.0), (5.0, 5.0)], 3.0, &[30.0, 60.0]);
        let a = JointAction(vec![0, 1]);
        assert_eq!(game.utility(0, &a), 0.0);
    }

    #[test]
    fn distant_player_utility_is_negative_energy() {
        let game = small_game(&[(0.0, 0.0), (500.0, 500.0)], 3.0, &[30.0, 60.0]);
        let a = JointAction(vec![0, 1]);
        let u = game.utility(1, &a);
        let e = |r: f64| energy_cost(r, 0.2, 0.115, 0.5);
        let expected = -(e(30.0) - e(0.0)) / (2.0 * e(60.0));
        assert!((u - expected).abs() < 1e-12);
        assert!(u < 0.0);
    }

    #[test]
    fn evaluator_matches_direct_potential() {
        let mut rng = RngStream::new(3, StreamDomain::Environment { run: 0 });
        let game = small_game(
            &[(0.0, 0.0), (20.0, 5.0), (-15.0, 10.0), (5.0, -25.0)],
            4.0,
            &[30.0, 45.0, 60.0],
        );
        let mut eval = GameEvaluator::new(&game, JointAction::all_null(4));
        for _ in 0..500 {
            let p = rng.index(4);
            let a = rng.index(game.n_actions());
            let predicted = eval.phi() + eval.delta_phi(p, a);
            eval.apply(p, a);
            assert!((eval.phi() - predicted).abs() < 1e-12);
            assert!((eval.phi() - game.potential(&eval.action)).abs() < 1e-12);
        }
    }

    #[test]
    fn maxlogit_two_action_convergence() {
        // One player, actions {0, R}, with a slope steep enough that
        // covering beats idling. Acceptance-ratio analysis: the improving
        // proposal is drawn with probability 1/2 per iteration and always
        // accepted, so 500 iterations find it essentially always.
        let center = Point2D::new(0.0, 0.0);
        let mut grid = partition_uncertainty(center, 3.0, 3.0, 10, 10);
        cell_worth(&mut grid, center, &Matrix2::new(9.0, 0.0, 0.0, 9.0));
        let game = GameInstance::new(
            vec![(NodeId(0), center)],
            &[30.0],
            grid,
            3,
            2.0,
            0.5,
            0.2,
            0.115,
            0.5,
        );
        let better = JointAction(vec![1]);
        assert!(game.potential(&better) > game.potential(&JointAction(vec![0])));
        let mut wins = 0;
        for seed in 0..100 {
            let mut rng = RngStream::new(seed, StreamDomain::Environment { run: 9 });
            if maxlogit_solve(&game, 500, 0.01, &mut rng) == better {
                wins += 1;
            }
        }
        assert!(wins >= 99, "wins {wins}");
    }

    #[test]
    fn maxlogit_never_below_all_null() {
        let mut rng = RngStream::new(77, StreamDomain::Environment { run: 2 });
        for trial in 0..50 {
            let game = small_game(
                &[
                    (rng.uniform_in(-40.0, 40.0), rng.uniform_in(-40.0, 40.0)),
                    (rng.uniform_in(-40.0, 40.0), rng.uniform_in(-40.0, 40.0)),
                    (rng.uniform_in(-40.0, 40.0), rng.uniform_in(-40.0, 40.0)),
                ],
                3.0,
                &[30.0, 45.0, 60.0],
            );
            let mut solver_rng = RngStream::new(trial, StreamDomain::Environment { run: 3 });
            let solved = maxlogit_solve(&game, 100, 0.01, &mut solver_rng);
            assert!(game.potential(&solved) >= game.potential(&JointAction::all_null(3)));
        }
    }

    #[test]
    fn exhaustive_prefers_cheap_dominant_action() {
        // One player covering the whole grid with R_1 at lower cost than R_2.
        let game = small_game(&[(0.0, 0.0)], 3.0, &[30.0, 60.0]);
        let best = exhaustive_optimum(&game).unwrap();
        assert_eq!(best, JointAction(vec![1]));
    }

    #[test]
    fn exhaustive_all_zero_worth_stays_null() {
        let mut game = small_game(&[(0.0, 0.0), (5.0, 0.0)], 3.0, &[30.0, 60.0]);
        game.grid.worths.fill(0.0);
        let game = GameInstance::new(
            game.players.clone(),
            &[30.0, 60.0],
            game.grid.clone(),
            3,
            0.5,
            0.5,
            0.2,
            0.115,
            0.5,
        );
        let best = exhaustive_optimum(&game).unwrap();
        assert_eq!(best, JointAction::all_null(2));
    }

    #[test]
    fn exhaustive_guard_trips() {
        let players: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 0.0)).collect();
        let game = small_game(&players, 3.0, &[30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0]);
        assert!(exhaustive_optimum(&game).is_err());
    }

    #[test]
    fn exhaustive_beats_random_sampling() {
        let mut rng = RngStream::new(13, StreamDomain::Environment { run: 4 });
        let game = small_game(
            &[(0.0, 0.0), (15.0, 0.0), (0.0, 15.0), (-12.0, -9.0)],
            4.0,
            &[30.0, 45.0, 60.0],
        );
        let best = exhaustive_optimum(&game).unwrap();
        let best_phi = game.potential(&best);
        for _ in 0..10_000 {
            let a = JointAction((0..4).map(|_| rng.index(4)).collect());
            assert!(game.potential(&a) <= best_phi + 1e-12);
        }
    }

    #[test]
    fn exhaustive_optimum_is_nash() {
        let mut rng = RngStream::new(29, StreamDomain::Environment { run: 5 });
        for _ in 0..20 {
            let game = small_game(
                &[
                    (rng.uniform_in(-30.0, 30.0), rng.uniform_in(-30.0, 30.0)),
                    (rng.uniform_in(-30.0, 30.0), rng.uniform_in(-30.0, 30.0)),
                    (rng.uniform_in(-30.0, 30.0), rng.uniform_in(-30.0, 30.0)),
                ],
                3.0,
                &[30.0, 45.0, 60.0],
            );
            let best = exhaustive_optimum(&game).unwrap();
            let u_star: Vec<f64> = (0..3).map(|p| game.utility(p, &best)).collect();
            for p in 0..3 {
                for a in 0..game.n_actions() {
                    let mut dev = best.clone();
                    dev.0[p] = a;
                    assert!(game.utility(p, &dev) <= u_star[p] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn slope_bound_values() {
        assert!((slope_lower_bound(5.0, 5, 60.0, 0.035) - 5.0 / 10.5).abs() < 1e-12);
        assert!(0.5 > slope_lower_bound(5.0, 5, 60.0, 0.035));
        assert!((slope_lower_bound(6.0, 5, 60.0, 0.1) - 0.2).abs() < 1e-12);
        // Bound shrinks toward delta_r / (n' R_L) as delta -> 1.
        assert!(slope_lower_bound(5.0, 5, 60.0, 0.9999) > 5.0 / 300.0);
        assert!(slope_lower_bound(5.0, 5, 60.0, 0.9999) < slope_lower_bound(5.0, 5, 60.0, 0.5));
    }
}
