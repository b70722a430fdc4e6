//! Baseline selectors: the unweighted geometric score used by the
//! autonomous-node-selection scheduler, and a pure max-energy pick. They
//! share the subset-search machinery with the adaptive selector so
//! comparisons isolate the scoring function.

use serde::{Deserialize, Serialize};

use crate::selection::{egdop_score, select_subset, CandidateNode, CandidateRegion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectorKind {
    Egdop,
    Gdop,
    MaxEnergy,
}

/// Unweighted geometric score: the energy-weighted score with every weight
/// fixed at one.
pub fn gdop_score(subset: &[CandidateNode], region: &CandidateRegion, sigma_azimuth_rad: f64) -> f64 {
    let ones = vec![1.0; subset.len()];
    egdop_score(subset, Some(&ones), region, sigma_azimuth_rad)
}

/// Best subset of the given size under the unweighted geometric score.
pub fn select_by_gdop(
    candidates: &[CandidateNode],
    region: &CandidateRegion,
    count: usize,
    sigma_azimuth_rad: f64,
) -> Vec<CandidateNode> {
    select_subset(candidates, count, false, region, sigma_azimuth_rad)
}

/// Top `count` candidates by remaining energy; ties to the smaller id.
pub fn select_max_energy(candidates: &[CandidateNode], count: usize) -> Vec<CandidateNode> {
    let mut sorted: Vec<CandidateNode> = candidates.to_vec();
    sorted.sort_by(|a, b| {
        b.energy_rem
            .partial_cmp(&a.energy_rem)
            .unwrap()
            .then(a.id.cmp(&b.id))
    });
    sorted.truncate(count);
    sorted.sort_by_key(|c| c.id);
    sorted
}
