//! Node deployment and the static communication topology.

use thiserror::Error;

use crate::config::WorldConfig;
use crate::energy::EnergyLedger;
use crate::geom::{NodeId, Point2D};
use crate::pfsa::PfsaState;
use crate::rng::{RngStream, StreamDomain};
use crate::tracking::Track;

/// One sensor node's full mutable state.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub pos: Point2D,
    pub state: PfsaState,
    /// Active high-power range while in HPS, m.
    pub hps_range_m: f64,
    /// Range staged for the next HPS entry, m.
    pub staged_range_m: f64,
    pub ledger: EnergyLedger,
    pub tracks: Vec<Track>,
    pub next_track_id: u64,
    pub rng: RngStream,
}

impl NodeState {
    pub fn alive(&self) -> bool {
        !self.ledger.is_dead()
    }

    pub fn awake(&self) -> bool {
        self.alive() && self.state != PfsaState::Sleep
    }

    pub fn energy_remaining_fraction(&self) -> f64 {
        self.ledger.remaining_fraction()
    }
}

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("region has zero area")]
    ZeroArea,
}

/// Uniform i.i.d. deployment: `ceil(density * area)` nodes (or the explicit
/// count), ids in draw order, all starting awake in the low-power state with
/// full energy.
pub fn uniform_deployment(cfg: &WorldConfig, run: u64) -> Result<Vec<NodeState>, DeployError> {
    if cfg.area_m2() <= 0.0 {
        return Err(DeployError::ZeroArea);
    }
    let n = cfg.resolved_node_count();
    let mut deploy_rng = RngStream::new(cfg.master_seed, StreamDomain::Deployment { run });
    let mut nodes = Vec::with_capacity(n as usize);
    for i in 0..n {
        let pos = Point2D::new(
            deploy_rng.uniform_in(0.0, cfg.region_width_m),
            deploy_rng.uniform_in(0.0, cfg.region_height_m),
        );
        nodes.push(NodeState {
            id: NodeId(i),
            pos,
            state: PfsaState::Lps,
            hps_range_m: cfg.r1(),
            staged_range_m: cfg.r1(),
            ledger: EnergyLedger::new(cfg.e0_j),
            tracks: Vec::new(),
            next_track_id: 0,
            rng: RngStream::new(cfg.master_seed, StreamDomain::Node { run, node: i }),
        });
    }
    Ok(nodes)
}

/// Communication neighborhood of one node: every other node within `r_c`,
/// boundary inclusive.
pub fn neighborhood(node: NodeId, positions: &[Point2D], r_c: f64) -> Vec<NodeId> {
    let me = positions[node.idx()];
    positions
        .iter()
        .enumerate()
        .filter(|(j, p)| *j != node.idx() && p.distance(&me) <= r_c)
        .map(|(j, _)| NodeId(j as u32))
        .collect()
}

/// All neighborhoods at once.
pub fn build_neighborhoods(positions: &[Point2D], r_c: f64) -> Vec<Vec<NodeId>> {
    (0..positions.len())
        .map(|i| neighborhood(NodeId(i as u32), positions, r_c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deployment_count_from_density() {
        let cfg = WorldConfig::default();
        let nodes = uniform_deployment(&cfg, 0).unwrap();
        assert_eq!(nodes.len(), 350);
        assert!(nodes
            .iter()
            .all(|n| n.state == PfsaState::Lps && n.ledger.remaining_fraction() == 1.0));
        assert!(nodes.iter().all(|n| {
            n.pos.x >= 0.0 && n.pos.x <= 500.0 && n.pos.y >= 0.0 && n.pos.y <= 500.0
        }));
    }

    #[test]
    fn zero_density_empty_network() {
        let cfg = WorldConfig {
            density_per_m2: 0.0,
            ..WorldConfig::default()
        };
        assert!(uniform_deployment(&cfg, 0).unwrap().is_empty());
    }

    #[test]
    fn zero_area_rejected() {
        let cfg = WorldConfig {
            region_width_m: 0.0,
            ..WorldConfig::default()
        };
        assert!(uniform_deployment(&cfg, 0).is_err());
    }

    #[test]
    fn deployment_deterministic() {
        let cfg = WorldConfig::default();
        let a = uniform_deployment(&cfg, 3).unwrap();
        let b = uniform_deployment(&cfg, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pos, y.pos);
        }
        let other_run = uniform_deployment(&cfg, 4).unwrap();
        assert!(a.iter().zip(&other_run).any(|(x, y)| x.pos != y.pos));
    }

    #[test]
    fn neighborhood_boundary_and_symmetry() {
        let positions = vec![Point2D::new(0.0, 0.0), Point2D::new(120.0, 0.0)];
        let hoods = build_neighborhoods(&positions, 120.0);
        assert_eq!(hoods[0], vec![NodeId(1)]);
        assert_eq!(hoods[1], vec![NodeId(0)]);

        let positions = vec![Point2D::new(0.0, 0.0), Point2D::new(121.0, 0.0)];
        let hoods = build_neighborhoods(&positions, 120.0);
        assert!(hoods[0].is_empty() && hoods[1].is_empty());
    }

    #[test]
    fn collinear_neighborhoods() {
        let positions = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(100.0, 0.0),
            Point2D::new(200.0, 0.0),
        ];
        let hoods = build_neighborhoods(&positions, 120.0);
        assert_eq!(hoods[0], vec![NodeId(1)]);
        assert_eq!(hoods[1], vec![NodeId(0), NodeId(2)]);
        assert_eq!(hoods[2], vec![NodeId(1)]);
    }

    #[test]
    fn symmetry_on_random_deployments() {
        let cfg = WorldConfig {
            density_per_m2: 4e-4,
            ..WorldConfig::default()
        };
        let nodes = uniform_deployment(&cfg, 7).unwrap();
        let positions: Vec<Point2D> = nodes.iter().map(|n| n.pos).collect();
        let hoods = build_neighborhoods(&positions, cfg.r_comm_m);
        for (i, hood) in hoods.iter().enumerate() {
            for j in hood {
                assert!(hoods[j.idx()].contains(&NodeId(i as u32)));
            }
        }
    }
}
