//! Per-node energy accounting and network-lifetime evaluation over the
//! corridor that the dominant target trajectory sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::WorldConfig;
use crate::geom::{point_segment_distance, NodeId, Point2D};

/// Devices that draw power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Device {
    Lps,
    Hps,
    Dpu,
    Tx,
    Rx,
    Clock,
}

pub const DEVICES: [Device; 6] = [
    Device::Lps,
    Device::Hps,
    Device::Dpu,
    Device::Tx,
    Device::Rx,
    Device::Clock,
];

/// Which devices run during a step. The pattern is a function of the
/// supervisor state: Sleep keeps only clock and DPU alive, low-power sensing
/// runs the LPS device plus the transceiver, high-power sensing swaps the
/// LPS device for the ranging device at `hps_range_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceFlags {
    pub lps: bool,
    pub hps: bool,
    pub dpu: bool,
    pub tx: bool,
    pub rx: bool,
    pub clock: bool,
    /// Broadcasts initiated this step.
    pub n_tx: u32,
    /// Active high-power sensing range, m (meaningful when `hps`).
    pub hps_range_m: f64,
}

impl DeviceFlags {
    pub fn sleep() -> Self {
        Self {
            lps: false,
            hps: false,
            dpu: true,
            tx: false,
            rx: false,
            clock: true,
            n_tx: 0,
            hps_range_m: 0.0,
        }
    }

    pub fn lps() -> Self {
        Self {
            lps: true,
            hps: false,
            dpu: true,
            tx: true,
            rx: true,
            clock: true,
            n_tx: 0,
            hps_range_m: 0.0,
        }
    }

    pub fn hps(range_m: f64) -> Self {
        Self {
            lps: false,
            hps: true,
            dpu: true,
            tx: true,
            rx: true,
            clock: true,
            n_tx: 0,
            hps_range_m: range_m,
        }
    }

    pub fn off() -> Self {
        Self {
            lps: false,
            hps: false,
            dpu: false,
            tx: false,
            rx: false,
            clock: false,
            n_tx: 0,
            hps_range_m: 0.0,
        }
    }
}

/// Energy drawn over one step: sum of enabled device rates times `dt`.
/// The transmitter charges per broadcast, the ranging device linearly in
/// its active range.
pub fn step_energy(flags: &DeviceFlags, cfg: &WorldConfig, dt: f64) -> f64 {
    assert!(dt > 0.0);
    let mut rate = 0.0;
    if flags.lps {
        rate += cfg.e_lps_w;
    }
    if flags.hps {
        rate += cfg.w_hps_w_per_m * flags.hps_range_m;
    }
    if flags.dpu {
        rate += cfg.e_dpu_w;
    }
    if flags.tx {
        rate += flags.n_tx as f64 * cfg.e_tx_w;
    }
    if flags.rx {
        rate += cfg.e_rx_w;
    }
    if flags.clock {
        rate += cfg.e_clock_w;
    }
    rate * dt
}

/// Cumulative per-device energy account of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial_j: f64,
    pub consumed_j: f64,
    pub per_device_j: [f64; 6],
}

impl EnergyLedger {
    pub fn new(initial_j: f64) -> Self {
        Self {
            initial_j,
            consumed_j: 0.0,
            per_device_j: [0.0; 6],
        }
    }

    /// Charge one step's draw, split per device. A node is dead once its
    /// consumption reaches its initial allotment.
    pub fn charge_step(&mut self, flags: &DeviceFlags, cfg: &WorldConfig, dt: f64) {
        let device_energy = |dev: Device| -> f64 {
            let rate = match dev {
                Device::Lps => {
                    if flags.lps {
                        cfg.e_lps_w
                    } else {
                        0.0
                    }
                }
                Device::Hps => {
                    if flags.hps {
                        cfg.w_hps_w_per_m * flags.hps_range_m
                    } else {
                        0.0
                    }
                }
                Device::Dpu => {
                    if flags.dpu {
                        cfg.e_dpu_w
                    } else {
                        0.0
                    }
                }
                Device::Tx => {
                    if flags.tx {
                        flags.n_tx as f64 * cfg.e_tx_w
                    } else {
                        0.0
                    }
                }
                Device::Rx => {
                    if flags.rx {
                        cfg.e_rx_w
                    } else {
                        0.0
                    }
                }
                Device::Clock => {
                    if flags.clock {
                        cfg.e_clock_w
                    } else {
                        0.0
                    }
                }
            };
            rate * dt
        };
        for (i, dev) in DEVICES.iter().enumerate() {
            let e = device_energy(*dev);
            self.per_device_j[i] += e;
            self.consumed_j += e;
        }
    }

    /// Charge an arbitrary non-negative amount without device attribution.
    pub fn charge(&mut self, joules: f64) {
        assert!(joules >= 0.0, "negative charge");
        self.consumed_j += joules;
    }

    /// Remaining fraction, clamped to `[0, 1]`.
    pub fn remaining_fraction(&self) -> f64 {
        if self.initial_j <= 0.0 {
            return 0.0;
        }
        (1.0 - self.consumed_j / self.initial_j).clamp(0.0, 1.0)
    }

    /// Remaining energy in joules, clamped at zero.
    pub fn remaining_j(&self) -> f64 {
        (self.initial_j - self.consumed_j).max(0.0)
    }

    pub fn is_dead(&self) -> bool {
        self.consumed_j >= self.initial_j
    }
}

#[derive(Debug, Error)]
pub enum LifetimeError {
    #[error("corridor contains no nodes")]
    EmptyTube,
    #[error("degenerate trajectory polyline")]
    DegeneratePolyline,
}

/// When the depleted-fraction threshold was crossed, if ever.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Lifetime {
    Seconds(f64),
    ExceedsHorizon,
}

impl Lifetime {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            Lifetime::Seconds(s) => Some(*s),
            Lifetime::ExceedsHorizon => None,
        }
    }
}

/// Nodes within perpendicular distance `radius` of the polyline `gamma`.
pub fn tube_membership(
    positions: &[Point2D],
    gamma: &[Point2D],
    radius: f64,
) -> Result<Vec<NodeId>, LifetimeError> {
    if gamma.len() < 2 || gamma.windows(2).all(|w| w[0].distance(&w[1]) == 0.0) {
        return Err(LifetimeError::DegeneratePolyline);
    }
    Ok(positions
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            gamma
                .windows(2)
                .map(|w| point_segment_distance(**p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
                <= radius
        })
        .map(|(i, _)| NodeId(i as u32))
        .collect())
}

/// Earliest time at which the corridor's depleted-energy fraction reaches
/// `eta`. `consumed_per_step[k][i]` is cumulative consumption of node `i`
/// at the end of step `k`; initial energies are per node (gap-injected nodes
/// may start at zero, contributing zero weight).
pub fn network_lifetime(
    consumed_per_step: &[Vec<f64>],
    initial_j: &[f64],
    tube_nodes: &[NodeId],
    eta: f64,
    dt: f64,
) -> Result<Lifetime, LifetimeError> {
    if tube_nodes.is_empty() {
        return Err(LifetimeError::EmptyTube);
    }
    let total_initial: f64 = tube_nodes.iter().map(|n| initial_j[n.idx()]).sum();
    if total_initial <= 0.0 {
        // A fully dead corridor has already reached any depletion fraction.
        return Ok(Lifetime::Seconds(0.0));
    }
    for (k, row) in consumed_per_step.iter().enumerate() {
        let depleted: f64 = tube_nodes
            .iter()
            .map(|n| row[n.idx()].min(initial_j[n.idx()]))
            .sum();
        if depleted / total_initial >= eta {
            return Ok(Lifetime::Seconds((k + 1) as f64 * dt));
        }
    }
    Ok(Lifetime::ExceedsHorizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hps_step_energy_hand_sum() {
        let cfg = WorldConfig::default();
        let mut f = DeviceFlags::hps(30.0);
        f.n_tx = 1;
        // (0.2*30 + 1 + 0.63 + 0.01 + 1.26) * 0.5
        assert!((step_energy(&f, &cfg, 0.5) - 4.45).abs() < 1e-12);
    }

    #[test]
    fn sleep_step_energy_hand_sum() {
        let cfg = WorldConfig::default();
        assert!((step_energy(&DeviceFlags::sleep(), &cfg, 0.5) - 0.505).abs() < 1e-12);
    }

    #[test]
    fn all_off_draws_nothing() {
        let cfg = WorldConfig::default();
        assert_eq!(step_energy(&DeviceFlags::off(), &cfg, 0.5), 0.0);
    }

    #[test]
    fn state_cost_ordering() {
        let cfg = WorldConfig::default();
        let sleep = step_energy(&DeviceFlags::sleep(), &cfg, cfg.dt_s);
        let lps = step_energy(&DeviceFlags::lps(), &cfg, cfg.dt_s);
        let hps_r1 = step_energy(&DeviceFlags::hps(cfg.r1()), &cfg, cfg.dt_s);
        let hps_rl = step_energy(&DeviceFlags::hps(cfg.r_max()), &cfg, cfg.dt_s);
        assert!(sleep < lps && lps < hps_r1 && hps_r1 < hps_rl);
    }

    #[test]
    fn hps_cost_linear_in_range() {
        let cfg = WorldConfig::default();
        let e = |r: f64| step_energy(&DeviceFlags::hps(r), &cfg, 1.0);
        let base = e(0.0);
        assert!((e(20.0) - base + e(40.0) - base - (e(60.0) - base)).abs() < 1e-9);
    }

    #[test]
    fn ledger_death_and_clamp() {
        let mut ledger = EnergyLedger::new(137_592.0);
        ledger.charge(137_592.0);
        assert_eq!(ledger.remaining_fraction(), 0.0);
        assert!(ledger.is_dead());
        let before = ledger.clone();
        ledger.charge(0.0);
        assert_eq!(ledger, before);
        ledger.charge(10.0);
        assert_eq!(ledger.remaining_fraction(), 0.0);
        assert_eq!(ledger.remaining_j(), 0.0);
    }

    #[test]
    fn ledger_totals_match_devices() {
        let cfg = WorldConfig::default();
        let mut ledger = EnergyLedger::new(1000.0);
        let mut f = DeviceFlags::hps(45.0);
        f.n_tx = 2;
        for _ in 0..10 {
            ledger.charge_step(&f, &cfg, cfg.dt_s);
        }
        let sum: f64 = ledger.per_device_j.iter().sum();
        assert!((sum - ledger.consumed_j).abs() < 1e-9);
        assert!(ledger.consumed_j > 0.0);
    }

    #[test]
    fn tube_membership_boundaries() {
        let gamma = [Point2D::new(0.0, 0.0), Point2D::new(600.0, 0.0)];
        let positions = vec![Point2D::new(10.0, 30.0), Point2D::new(10.0, 30.1)];
        let members = tube_membership(&positions, &gamma, 30.0).unwrap();
        assert_eq!(members, vec![NodeId(0)]);
    }

    #[test]
    fn tube_rejects_degenerate_polyline() {
        let gamma = [Point2D::new(1.0, 1.0), Point2D::new(1.0, 1.0)];
        assert!(tube_membership(&[Point2D::new(0.0, 0.0)], &gamma, 30.0).is_err());
    }

    #[test]
    fn lifetime_linear_depletion() {
        // One node, constant 1 W draw, E0 = 100 J, eta = 0.5 -> 50 s.
        let dt = 1.0;
        let steps: Vec<Vec<f64>> = (0..200).map(|k| vec![(k + 1) as f64 * dt]).collect();
        let lt = network_lifetime(&steps, &[100.0], &[NodeId(0)], 0.5, dt).unwrap();
        assert_eq!(lt, Lifetime::Seconds(50.0));
    }

    #[test]
    fn lifetime_eta_one_is_slowest_node() {
        let dt = 1.0;
        // Node 0 depletes at 10 s, node 1 at 40 s.
        let steps: Vec<Vec<f64>> = (0..60)
            .map(|k| {
                let t = (k + 1) as f64;
                vec![(t * 10.0).min(100.0), (t * 2.5).min(100.0)]
            })
            .collect();
        let lt = network_lifetime(&steps, &[100.0, 100.0], &[NodeId(0), NodeId(1)], 1.0, dt).unwrap();
        assert_eq!(lt, Lifetime::Seconds(40.0));
    }

    #[test]
    fn lifetime_sentinel_when_never_reached() {
        let steps: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0]).collect();
        let lt = network_lifetime(&steps, &[100.0], &[NodeId(0)], 0.5, 1.0).unwrap();
        assert_eq!(lt, Lifetime::ExceedsHorizon);
        assert!(network_lifetime(&steps, &[100.0], &[], 0.5, 1.0).is_err());
    }

    #[test]
    fn energy_monotone_under_charging() {
        let cfg = WorldConfig::default();
        let mut ledger = EnergyLedger::new(50.0);
        let mut prev = 0.0;
        for i in 0..100 {
            let flags = if i % 3 == 0 {
                DeviceFlags::sleep()
            } else if i % 3 == 1 {
                DeviceFlags::lps()
            } else {
                DeviceFlags::hps(40.0)
            };
            ledger.charge_step(&flags, &cfg, cfg.dt_s);
            assert!(ledger.consumed_j >= prev);
            prev = ledger.consumed_j;
        }
    }
}
