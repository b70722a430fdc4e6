//! Fusion of received track ensembles: trustworthy-set filtering,
//! track-to-track association into per-target groups, information-form
//! fusion to a single Gaussian, and one-step prediction.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::geom::NodeId;
use crate::motion::{predict_gaussian, symmetrize, StateMatrix, StateVector};
use crate::tracking::GainMatrix;

/// 0.99 chi-square quantile, 5 dof: full-state association gate.
pub const T2TA_CHI2_5DOF: f64 = 15.08627246938899;
/// 0.99 chi-square quantile, 2 dof: position-only fallback gate.
pub const T2TA_CHI2_2DOF: f64 = 9.21034037197618;

/// A confirmed track shared by a neighbor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackBroadcast {
    pub sender: NodeId,
    pub track_id: u64,
    pub mean: StateVector,
    pub cov: StateMatrix,
    pub gain: GainMatrix,
    pub step: u32,
}

/// One fused per-target Gaussian with its one-step prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedEstimate {
    pub mean: StateVector,
    pub cov: StateMatrix,
    pub predicted_mean: StateVector,
    pub predicted_cov: StateMatrix,
    /// Senders whose broadcasts were fused into this group.
    pub members: Vec<NodeId>,
}

impl FusedEstimate {
    pub fn predicted_position(&self) -> crate::geom::Point2D {
        crate::geom::Point2D::new(self.predicted_mean[0], self.predicted_mean[2])
    }

    /// Predicted position covariance (the 2x2 block on x and y).
    pub fn predicted_position_cov(&self) -> nalgebra::Matrix2<f64> {
        position_block(&self.predicted_cov)
    }
}

pub fn position_block(cov: &StateMatrix) -> nalgebra::Matrix2<f64> {
    nalgebra::Matrix2::new(cov[(0, 0)], cov[(0, 2)], cov[(2, 0)], cov[(2, 2)])
}

/// Position-error trace of a broadcast: the covariance restricted to the
/// position state variables.
pub fn position_error_trace(cov: &StateMatrix) -> f64 {
    cov[(0, 0)] + cov[(2, 2)]
}

/// Keep broadcasts whose estimated position error does not exceed the
/// tolerance `xi` (inclusive). An empty result is allowed.
pub fn trustworthy_filter(ensemble: &[TrackBroadcast], xi: f64) -> Vec<TrackBroadcast> {
    ensemble
        .iter()
        .filter(|b| position_error_trace(&b.cov) <= xi)
        .cloned()
        .collect()
}

fn pair_associates(a: &TrackBroadcast, b: &TrackBroadcast) -> bool {
    let diff = a.mean - b.mean;
    let sum = a.cov + b.cov;
    if let Some(inv) = sum.try_inverse() {
        let d2 = (diff.transpose() * inv * diff)[(0, 0)];
        if d2.is_finite() {
            return d2 <= T2TA_CHI2_5DOF;
        }
    }
    // Ill-conditioned full-state test: fall back to position only.
    let dp = nalgebra::Vector2::new(diff[0], diff[2]);
    let sp = position_block(&a.cov) + position_block(&b.cov);
    match sp.try_inverse() {
        Some(inv) => (dp.transpose() * inv * dp)[(0, 0)] <= T2TA_CHI2_2DOF,
        None => false,
    }
}

/// Partition a trustworthy sub-ensemble into per-target groups: a pairwise
/// Mahalanobis test under summed covariances, then connected components.
/// Returns index groups into the input slice, each sorted; groups ordered by
/// smallest member index.
pub fn t2ta_group(ensemble: &[TrackBroadcast]) -> Vec<Vec<usize>> {
    let n = ensemble.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if pair_associates(&ensemble[i], &ensemble[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_to_group: std::collections::BTreeMap<usize, usize> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        let g = *root_to_group.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// Information-form convex fusion of one group under the independence
/// approximation. Members with singular covariance are excluded with a
/// warning; if every member is singular the first is returned unchanged.
pub fn t2tf_fuse(group: &[&TrackBroadcast]) -> (StateVector, StateMatrix) {
    assert!(!group.is_empty(), "fusing an empty group");
    let mut info = SMatrix::<f64, 5, 5>::zeros();
    let mut info_state = StateVector::zeros();
    let mut used = 0usize;
    for member in group {
        match member.cov.try_inverse() {
            Some(inv) => {
                info += inv;
                info_state += inv * member.mean;
                used += 1;
            }
            None => {
                log::warn!(
                    "excluding broadcast from {} with singular covariance",
                    member.sender
                );
            }
        }
    }
    if used == 0 {
        return (group[0].mean, group[0].cov);
    }
    match info.try_inverse() {
        Some(cov) => (cov * info_state, symmetrize(&cov)),
        None => (group[0].mean, group[0].cov),
    }
}

/// One-step prediction of a fused Gaussian; identical arithmetic to the
/// local filter prediction, so nodes fusing the same ensemble agree
/// bit-for-bit.
pub fn predict_fused(mean: &StateVector, cov: &StateMatrix, cfg: &WorldConfig) -> (StateVector, StateMatrix) {
    predict_gaussian(mean, cov, cfg)
}

/// Full pipeline over a received ensemble: filter, group, fuse, predict.
pub fn fuse_ensemble(ensemble: &[TrackBroadcast], cfg: &WorldConfig) -> Vec<FusedEstimate> {
    let trusted = trustworthy_filter(ensemble, cfg.trust_tolerance());
    let groups = t2ta_group(&trusted);
    groups
        .iter()
        .map(|idxs| {
            let members: Vec<&TrackBroadcast> = idxs.iter().map(|i| &trusted[*i]).collect();
            let (mean, cov) = t2tf_fuse(&members);
            let (pm, pc) = predict_fused(&mean, &cov, cfg);
            FusedEstimate {
                mean,
                cov,
                predicted_mean: pm,
                predicted_cov: pc,
                members: members.iter().map(|m| m.sender).collect(),
            }
        })
        .collect()
}
