//! Adaptive node selection around a predicted target position: candidate
//! identification from the 6-sigma region, coverage-degree cases, the
//! energy-weighted geometric score, and the flowchart that decides between
//! base-range tracking and game-based range extension.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::game::{maxlogit_solve, partition_uncertainty, cell_worth, GameInstance, JointAction};
use crate::geom::{NodeId, Point2D};
use crate::rng::RngStream;

/// Elliptical candidate region: nodes inside can cover the 6-sigma
/// uncertainty around the prediction with sensing range `r_s`. When the
/// uncertainty exceeds the range the ellipse is empty; candidacy then falls
/// back to plain distance so tracking degrades gracefully.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRegion {
    pub center: Point2D,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub r_s: f64,
}

impl CandidateRegion {
    pub fn new(center: Point2D, pos_cov: &Matrix2<f64>, r_s: f64) -> Self {
        Self {
            center,
            sigma_x: pos_cov[(0, 0)].max(0.0).sqrt(),
            sigma_y: pos_cov[(1, 1)].max(0.0).sqrt(),
            r_s,
        }
    }

    /// True when the 6-sigma region cannot fit inside the sensing range.
    pub fn degenerate(&self) -> bool {
        self.r_s <= 3.0 * self.sigma_x || self.r_s <= 3.0 * self.sigma_y
    }

    /// Ellipse-normalized squared distance of `pos` from the center.
    pub fn normalized_sq(&self, pos: Point2D) -> f64 {
        if self.degenerate() {
            let d = pos.distance(&self.center);
            (d / self.r_s).powi(2)
        } else {
            let ax = self.r_s - 3.0 * self.sigma_x;
            let ay = self.r_s - 3.0 * self.sigma_y;
            ((pos.x - self.center.x) / ax).powi(2) + ((pos.y - self.center.y) / ay).powi(2)
        }
    }

    pub fn contains(&self, pos: Point2D) -> bool {
        if self.degenerate() {
            log::debug!("degenerate candidate region: falling back to distance test");
            pos.distance(&self.center) <= self.r_s
        } else {
            self.normalized_sq(pos) <= 1.0
        }
    }
}

/// Ellipse membership test for one node.
pub fn candidate_membership(node_pos: Point2D, region: &CandidateRegion) -> bool {
    region.contains(node_pos)
}

/// An awake node eligible for selection, with its advertised energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateNode {
    pub id: NodeId,
    pub pos: Point2D,
    pub energy_rem: f64,
}

/// Awake nodes inside the candidate region, ordered by id.
pub fn candidate_set(awake: &[CandidateNode], region: &CandidateRegion) -> Vec<CandidateNode> {
    let mut out: Vec<CandidateNode> = awake
        .iter()
        .filter(|c| region.contains(c.pos))
        .copied()
        .collect();
    out.sort_by_key(|c| c.id);
    out
}

fn clamp_range_sq(r2: f64) -> f64 {
    r2.max(1e-9)
}

/// Energy-weighted geometric score `det(J)/trace(J)` of a subset, where `J`
/// sums each node's bearing information scaled by remaining energy over the
/// normalized squared range. The determinant is expanded pairwise
/// (`det(sum w_i v_i v_i') = sum_{i<j} w_i w_j sin^2(phi_i - phi_j)`), which
/// is exactly zero for a single node or a common bearing. `energies` of all
/// ones gives the unweighted geometric score.
pub fn egdop_score(
    subset: &[CandidateNode],
    energies: Option<&[f64]>,
    region: &CandidateRegion,
    sigma_azimuth_rad: f64,
) -> f64 {
    assert!(!subset.is_empty());
    let sigma_n = sigma_azimuth_rad / std::f64::consts::TAU;
    let sigma_n2 = (sigma_n * sigma_n).max(1e-300);
    let weights_and_bearings: Vec<(f64, f64)> = subset
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let e = energies.map_or(node.energy_rem, |es| es[i]);
            let phi = (node.pos.y - region.center.y).atan2(node.pos.x - region.center.x);
            let r2 = clamp_range_sq(region.normalized_sq(node.pos));
            (e / (sigma_n2 * r2), phi)
        })
        .collect();
    let trace: f64 = weights_and_bearings.iter().map(|(w, _)| w).sum();
    if trace <= 0.0 {
        return 0.0;
    }
    let mut det = 0.0;
    for i in 0..weights_and_bearings.len() {
        for j in (i + 1)..weights_and_bearings.len() {
            let (wi, pi) = weights_and_bearings[i];
            let (wj, pj) = weights_and_bearings[j];
            det += wi * wj * (pi - pj).sin().powi(2);
        }
    }
    det / trace
}

fn combinations(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut c = 1.0f64;
    for i in 0..k {
        c *= (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Combination-count threshold between exhaustive and greedy subset search.
pub const EXHAUSTIVE_SUBSET_LIMIT: f64 = 5000.0;

#[derive(Clone)]
struct ScoredSubset {
    score: f64,
    id_sum: u64,
    ids: Vec<NodeId>,
    indices: Vec<usize>,
}

impl ScoredSubset {
    fn better_than(&self, other: &ScoredSubset) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        if self.id_sum != other.id_sum {
            return self.id_sum < other.id_sum;
        }
        self.ids < other.ids
    }
}

fn score_of(indices: &[usize], candidates: &[CandidateNode], weighted: bool, region: &CandidateRegion, sigma_az: f64) -> ScoredSubset {
    let subset: Vec<CandidateNode> = indices.iter().map(|i| candidates[*i]).collect();
    let ones;
    let energies = if weighted {
        None
    } else {
        ones = vec![1.0; subset.len()];
        Some(ones.as_slice())
    };
    let score = egdop_score(&subset, energies, region, sigma_az);
    let mut ids: Vec<NodeId> = subset.iter().map(|c| c.id).collect();
    ids.sort();
    ScoredSubset {
        score,
        id_sum: ids.iter().map(|i| i.0 as u64).sum(),
        ids,
        indices: indices.to_vec(),
    }
}

/// Best subset of the given size under the (weighted or unweighted)
/// geometric score. Exhaustive when the combination count is small, else
/// greedy forward selection with one pass of pairwise swap improvement.
/// Ties resolve to the smaller id sum, then lexicographic ids. Fewer
/// candidates than requested returns all of them.
pub fn select_subset(
    candidates: &[CandidateNode],
    count: usize,
    weighted: bool,
    region: &CandidateRegion,
    sigma_azimuth_rad: f64,
) -> Vec<CandidateNode> {
    let mut sorted: Vec<CandidateNode> = candidates.to_vec();
    sorted.sort_by_key(|c| c.id);
    if sorted.len() <= count {
        return sorted;
    }
    let n = sorted.len();

    let best = if combinations(n, count) <= EXHAUSTIVE_SUBSET_LIMIT {
        let mut best: Option<ScoredSubset> = None;
        let mut indices: Vec<usize> = (0..count).collect();
        loop {
            let scored = score_of(&indices, &sorted, weighted, region, sigma_azimuth_rad);
            if best.as_ref().map_or(true, |b| scored.better_than(b)) {
                best = Some(scored);
            }
            // Next k-combination in lexicographic order.
            let mut i = count;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if indices[i] != i + n - count {
                    indices[i] += 1;
                    for jj in (i + 1)..count {
                        indices[jj] = indices[jj - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    return best
                        .unwrap()
                        .indices
                        .iter()
                        .map(|i| sorted[*i])
                        .collect();
                }
            }
            if indices[0] > n - count {
                break;
            }
        }
        best.unwrap()
    } else {
        // Greedy forward selection.
        let mut chosen: Vec<usize> = Vec::with_capacity(count);
        while chosen.len() < count {
            let mut best_step: Option<ScoredSubset> = None;
            for c in 0..n {
                if chosen.contains(&c) {
                    continue;
                }
                let mut trial = chosen.clone();
                trial.push(c);
                let scored = score_of(&trial, &sorted, weighted, region, sigma_azimuth_rad);
                if best_step.as_ref().map_or(true, |b| scored.better_than(b)) {
                    best_step = Some(scored);
                }
            }
            chosen = best_step.unwrap().indices;
        }
        // One pairwise swap-improvement pass.
        let mut current = score_of(&chosen, &sorted, weighted, region, sigma_azimuth_rad);
        for slot in 0..count {
            for c in 0..n {
                if current.indices.contains(&c) {
                    continue;
                }
                let mut trial = current.indices.clone();
                trial[slot] = c;
                let scored = score_of(&trial, &sorted, weighted, region, sigma_azimuth_rad);
                if scored.better_than(&current) {
                    current = scored;
                }
            }
        }
        current
    };
    let mut out: Vec<CandidateNode> = best.indices.iter().map(|i| sorted[*i]).collect();
    out.sort_by_key(|c| c.id);
    out
}

/// Energy-weighted subset selection of the given size.
pub fn select_by_egdop(
    candidates: &[CandidateNode],
    region: &CandidateRegion,
    count: usize,
    cfg: &WorldConfig,
) -> Vec<CandidateNode> {
    select_subset(candidates, count, true, region, cfg.sigma_azimuth_rad)
}

/// Which branch of the selection flowchart produced the outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionPath {
    /// Base candidates match the desired count exactly.
    BaseExact,
    /// Surplus base candidates, filtered by the energy-weighted score.
    BaseEgdop,
    /// Too few base candidates; every extended candidate plays the game.
    ExtendedAll,
    /// Too few base candidates; the score filters players before the game.
    ExtendedGame,
    /// No candidate can reach the target even at maximum range.
    Unprotected,
}

/// Result of one selection round: who tracks, at what range, and why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub selected: Vec<(NodeId, f64)>,
    pub path: SelectionPath,
    /// Predicted base coverage degree.
    pub d_b: u32,
    /// Predicted extended coverage degree (when the base was insufficient).
    pub d_e: Option<u32>,
}

impl SelectionOutcome {
    pub fn contains(&self, id: NodeId) -> bool {
        self.selected.iter().any(|(n, _)| *n == id)
    }

    pub fn range_for(&self, id: NodeId) -> Option<f64> {
        self.selected.iter().find(|(n, _)| *n == id).map(|(_, r)| *r)
    }
}

/// Intermediate plan: everything up to (but excluding) the range game, so a
/// caller can hand the game to the group leader.
#[derive(Clone, Debug, PartialEq)]
pub enum DansPlan {
    Resolved(SelectionOutcome),
    /// The extended path requires a game among these players.
    NeedsGame {
        players: Vec<CandidateNode>,
        path: SelectionPath,
        d_b: u32,
        d_e: u32,
    },
}

/// Flowchart up to the game decision.
pub fn dans_plan(
    prediction: Point2D,
    pos_cov: &Matrix2<f64>,
    awake: &[CandidateNode],
    cfg: &WorldConfig,
) -> DansPlan {
    let base_region = CandidateRegion::new(prediction, pos_cov, cfg.r1());
    let base = candidate_set(awake, &base_region);
    let d_b = base.len() as u32;

    if d_b == cfg.n_sel {
        return DansPlan::Resolved(SelectionOutcome {
            selected: base.iter().map(|c| (c.id, cfg.r1())).collect(),
            path: SelectionPath::BaseExact,
            d_b,
            d_e: None,
        });
    }
    if d_b > cfg.n_sel {
        let picked = select_by_egdop(&base, &base_region, cfg.n_sel as usize, cfg);
        return DansPlan::Resolved(SelectionOutcome {
            selected: picked.iter().map(|c| (c.id, cfg.r1())).collect(),
            path: SelectionPath::BaseEgdop,
            d_b,
            d_e: None,
        });
    }

    let ext_region = CandidateRegion::new(prediction, pos_cov, cfg.r_max());
    let extended = candidate_set(awake, &ext_region);
    let d_e = extended.len() as u32;
    if d_e == 0 {
        log::debug!("target unprotected: no candidates within the maximum range");
        return DansPlan::Resolved(SelectionOutcome {
            selected: Vec::new(),
            path: SelectionPath::Unprotected,
            d_b,
            d_e: Some(0),
        });
    }
    if d_e <= cfg.n_sel {
        DansPlan::NeedsGame {
            players: extended,
            path: SelectionPath::ExtendedAll,
            d_b,
            d_e,
        }
    } else {
        let players = select_by_egdop(&extended, &ext_region, cfg.n_sel_prime as usize, cfg);
        DansPlan::NeedsGame {
            players,
            path: SelectionPath::ExtendedGame,
            d_b,
            d_e,
        }
    }
}

/// Build the range-selection game for a player set around a prediction.
pub fn build_range_game(
    prediction: Point2D,
    pos_cov: &Matrix2<f64>,
    players: &[CandidateNode],
    cfg: &WorldConfig,
) -> GameInstance {
    let sigma_x = pos_cov[(0, 0)].max(0.0).sqrt();
    let sigma_y = pos_cov[(1, 1)].max(0.0).sqrt();
    let mut grid = partition_uncertainty(prediction, sigma_x, sigma_y, cfg.grid_u, cfg.grid_v);
    cell_worth(&mut grid, prediction, pos_cov);
    GameInstance::new(
        players.iter().map(|p| (p.id, p.pos)).collect(),
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

/// Translate an equilibrium joint action into selected (node, range) pairs;
/// a null action means the player was not selected.
pub fn selection_from_action(game: &GameInstance, action: &JointAction) -> Vec<(NodeId, f64)> {
    game.players
        .iter()
        .zip(&action.0)
        .filter(|(_, a)| **a != 0)
        .map(|((id, _), a)| (*id, game.actions[*a]))
        .collect()
}

/// Full selection round: the flowchart with the game solved inline by the
/// supplied stream. Deterministic given identical inputs and stream state,
/// so redundant evaluations on different nodes agree.
pub fn dans(
    prediction: Point2D,
    pos_cov: &Matrix2<f64>,
    awake: &[CandidateNode],
    cfg: &WorldConfig,
    rng: &mut RngStream,
) -> SelectionOutcome {
    match dans_plan(prediction, pos_cov, awake, cfg) {
        DansPlan::Resolved(outcome) => outcome,
        DansPlan::NeedsGame {
            players,
            path,
            d_b,
            d_e,
        } => {
            let game = build_range_game(prediction, pos_cov, &players, cfg);
            let action = maxlogit_solve(&game, cfg.maxlogit_iterations, cfg.maxlogit_tau, rng);
            SelectionOutcome {
                selected: selection_from_action(&game, &action),
                path,
                d_b,
                d_e: Some(d_e),
            }
        }
    }
}
