//! Run configuration: every tunable of the node, sensing, energy, selection
//! and game models, plus the target traffic profile. One validated value of
//! [`WorldConfig`] is the single source of truth for a simulation run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violations found by [`WorldConfig::validate`], one message per failed
/// invariant.
#[derive(Debug, Error)]
#[error("invalid configuration: {}", .violations.join("; "))]
pub struct ConfigError {
    pub violations: Vec<String>,
}

/// Target traffic profile: straight entries from the west edge at mid height,
/// optionally staggered so `lambda` targets occupy the corridor at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetProfile {
    /// Simultaneous targets in the corridor (0 disables traffic).
    pub lambda: u32,
    /// Entry speed, m/s.
    pub speed_mps: f64,
    /// Constant commanded turn rate, rad/s.
    pub turn_rate_radps: f64,
    /// Whether ground truth is propagated with process noise.
    pub process_noise: bool,
}

impl Default for TargetProfile {
    fn default() -> Self {
        Self {
            lambda: 1,
            speed_mps: 5.0,
            turn_rate_radps: 0.0,
            process_noise: true,
        }
    }
}

/// All world and algorithm parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    // --- deployment region ---
    /// Region width (east extent), m. Anchored at the origin.
    pub region_width_m: f64,
    /// Region height (north extent), m.
    pub region_height_m: f64,
    /// Node density, nodes per square meter. Ignored when `node_count` is set.
    pub density_per_m2: f64,
    /// Explicit node count overriding the density product.
    pub node_count: Option<u32>,

    // --- sensing geometry ---
    /// Low-power device sensing range, m.
    pub r_lps_m: f64,
    /// Reliable low-power detection radius, m.
    pub r_reliable_m: f64,
    /// Communication range, m.
    pub r_comm_m: f64,
    /// Adjustable high-power sensing ranges, strictly increasing, m.
    pub hps_ranges_m: Vec<f64>,
    /// Increment between consecutive high-power ranges, m.
    pub delta_r_m: f64,

    // --- detection and measurement ---
    /// Low-power detection probability inside the reliable radius.
    pub alpha: f64,
    /// Low-power detection decay rate beyond the reliable radius, 1/m.
    pub beta: f64,
    /// False-alarm probability per low-power scan.
    pub p_fa: f64,
    /// High-power detection probability within range.
    pub p_d: f64,
    /// Range measurement noise std, m.
    pub sigma_range_m: f64,
    /// Azimuth measurement noise std, rad.
    pub sigma_azimuth_rad: f64,
    /// Process noise std on x acceleration, m (discrete white-noise model).
    pub sigma_proc_x: f64,
    /// Process noise std on y acceleration, m.
    pub sigma_proc_y: f64,
    /// Process noise std on turn rate, rad.
    pub sigma_proc_turn_rad: f64,
    /// Mean clutter count per high-power scan.
    pub mu_clutter: f64,

    // --- energy rates, watts (HPS rate is watts per meter) ---
    pub e_clock_w: f64,
    pub e_lps_w: f64,
    pub e_dpu_w: f64,
    pub e_tx_w: f64,
    pub e_rx_w: f64,
    /// High-power device proportionality constant, W/m.
    pub w_hps_w_per_m: f64,
    /// Initial node energy, J.
    pub e0_j: f64,
    /// Step duration, s.
    pub dt_s: f64,

    // --- selection and game ---
    /// Desired tracker count per target.
    pub n_sel: u32,
    /// Player cap for the range-selection game.
    pub n_sel_prime: u32,
    /// Probability of remaining asleep.
    pub p_sleep: f64,
    /// Sleep probability of the random scheduling baseline.
    pub p_rand: f64,
    /// Coverage-degree risk bound for the slope rule.
    pub delta_risk: f64,
    /// Coverage-function slope below `n_sel`.
    pub slope_b1: f64,
    /// Coverage-function slope above `n_sel`.
    pub slope_b2: f64,
    /// Trustworthy-track position-error tolerance, m^2. Defaults to
    /// `(R_1^2 sigma_phi^2 + sigma_R^2) / 2` when absent.
    pub trust_tolerance_m2: Option<f64>,
    /// Uncertainty grid cells along x.
    pub grid_u: u32,
    /// Uncertainty grid cells along y.
    pub grid_v: u32,
    /// Learning iterations for the range-selection game.
    pub maxlogit_iterations: u32,
    /// Learning temperature.
    pub maxlogit_tau: f64,

    // --- track confirmation ---
    /// Hits required out of the last `confirm_n` scans.
    pub confirm_m: u32,
    /// Confirmation window length.
    pub confirm_n: u32,
    /// Speed bound used for initial velocity variance, m/s.
    pub v_max_mps: f64,

    // --- lifetime ---
    /// Depleted-energy fraction defining network lifetime (1.0 = full
    /// depletion of the corridor).
    pub eta_lifetime: f64,

    /// Listed among the published tunables with no stated role; carried
    /// unused pending clarification.
    pub chi: f64,

    /// Master seed; run `i` derives its streams from `master_seed` and `i`.
    pub master_seed: u64,

    pub targets: TargetProfile,
}

impl Default for WorldConfig {
    /// The published simulation parameter set. The range increment is 5 m
    /// (the value under which the stated slopes satisfy the slope bound),
    /// giving ranges {30, 35, .., 60}.
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            region_width_m: 500.0,
            region_height_m: 500.0,
            density_per_m2: 1.4e-3,
            node_count: None,
            r_lps_m: 30.0,
            r_reliable_m: 15.0,
            r_comm_m: 120.0,
            hps_ranges_m: vec![30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0],
            delta_r_m: 5.0,
            alpha: 0.95,
            beta: 0.0036,
            p_fa: 0.01,
            p_d: 0.95,
            sigma_range_m: 0.075,
            sigma_azimuth_rad: 0.25 * deg,
            sigma_proc_x: 0.1,
            sigma_proc_y: 0.1,
            sigma_proc_turn_rad: 0.1 * deg,
            mu_clutter: 0.025,
            e_clock_w: 0.01,
            e_lps_w: 0.115,
            e_dpu_w: 1.0,
            e_tx_w: 1.26,
            e_rx_w: 0.63,
            w_hps_w_per_m: 0.2,
            e0_j: 137_592.0,
            dt_s: 0.5,
            n_sel: 3,
            n_sel_prime: 5,
            p_sleep: 0.5,
            p_rand: 0.5,
            delta_risk: 0.035,
            slope_b1: 0.5,
            slope_b2: 0.5,
            trust_tolerance_m2: None,
            grid_u: 10,
            grid_v: 10,
            maxlogit_iterations: 500,
            maxlogit_tau: 0.01,
            confirm_m: 2,
            confirm_n: 3,
            v_max_mps: 15.0,
            eta_lifetime: 1.0,
            chi: 0.1,
            master_seed: 0,
        targets: TargetProfile::default(),
        }
    }
}

impl WorldConfig {
    /// Region area, m^2.
    pub fn area_m2(&self) -> f64 {
        self.region_width_m * self.region_height_m
    }

    /// Node count: explicit, or `ceil(density * area)`.
    pub fn resolved_node_count(&self) -> u32 {
        match self.node_count {
            Some(n) => n,
            None => (self.density_per_m2 * self.area_m2()).ceil() as u32,
        }
    }

    /// Smallest high-power range `R_1`.
    pub fn r1(&self) -> f64 {
        self.hps_ranges_m[0]
    }

    /// Largest high-power range `R_L`.
    pub fn r_max(&self) -> f64 {
        *self.hps_ranges_m.last().unwrap()
    }

    /// Trustworthy-track tolerance: configured value or the default derived
    /// from the initialized position error at range `R_1`.
    pub fn trust_tolerance(&self) -> f64 {
        self.trust_tolerance_m2.unwrap_or_else(|| {
            (self.r1().powi(2) * self.sigma_azimuth_rad.powi(2) + self.sigma_range_m.powi(2)) / 2.0
        })
    }

    /// Minimum admissible coverage slope for the configured game shape.
    pub fn slope_lower_bound(&self) -> f64 {
        crate::game::slope_lower_bound(
            self.delta_r_m,
            self.n_sel_prime,
            self.r_max(),
            self.delta_risk,
        )
    }

    /// Check every structural invariant, reporting all failures at once.
    pub fn validate(self) -> Result<WorldConfig, ConfigError> {
        let mut v = Vec::new();
        let prob = |name: &str, p: f64, v: &mut Vec<String>| {
            if !(0.0..=1.0).contains(&p) {
                v.push(format!("{name} = {p} outside [0, 1]"));
            }
        };

        if !(self.region_width_m > 0.0 && self.region_height_m > 0.0) {
            v.push("region has zero area".into());
        }
        if self.density_per_m2 < 0.0 {
            v.push("negative density".into());
        }
        if self.hps_ranges_m.is_empty() {
            v.push("empty high-power range set".into());
        } else {
            for w in self.hps_ranges_m.windows(2) {
                if w[1] <= w[0] {
                    v.push(format!("ranges not strictly increasing at {} -> {}", w[0], w[1]));
                }
                if (w[1] - w[0] - self.delta_r_m).abs() > 1e-9 {
                    v.push(format!(
                        "range increment {} differs from delta_r = {}",
                        w[1] - w[0],
                        self.delta_r_m
                    ));
                }
            }
            if self.r_comm_m < 2.0 * self.r_max() {
                v.push(format!(
                    "R_c < 2*R_L: communication range {} cannot guarantee a connected candidate set (needs {})",
                    self.r_comm_m,
                    2.0 * self.r_max()
                ));
            }
            // Slope bound: below it an equilibrium may stall short of the
            // desired coverage degree.
            let bound = self.slope_lower_bound();
            if !(self.slope_b1 > bound) {
                v.push(format!(
                    "slope bound violated: slope_b1 = {} must exceed delta_r/(n_sel_prime*R_L*delta) = {:.6}",
                    self.slope_b1, bound
                ));
            }
            if !(self.slope_b2 > 0.0) {
                v.push(format!("slope bound violated: slope_b2 = {} must be positive", self.slope_b2));
            }
        }
        if !(self.n_sel > 1) {
            v.push(format!("n_sel = {} must exceed 1", self.n_sel));
        }
        if !(self.n_sel_prime > self.n_sel) {
            v.push(format!(
                "n_sel_prime = {} must exceed n_sel = {}",
                self.n_sel_prime, self.n_sel
            ));
        }
        prob("alpha", self.alpha, &mut v);
        prob("p_fa", self.p_fa, &mut v);
        prob("p_d", self.p_d, &mut v);
        prob("p_sleep", self.p_sleep, &mut v);
        prob("p_rand", self.p_rand, &mut v);
        if !(self.delta_risk > 0.0 && self.delta_risk < 1.0) {
            v.push(format!("delta_risk = {} outside (0, 1)", self.delta_risk));
        }
        if !(0.0..=1.0).contains(&self.eta_lifetime) {
            v.push(format!("eta_lifetime = {} outside [0, 1]", self.eta_lifetime));
        }
        if !(self.dt_s > 0.0) {
            v.push("dt must be positive".into());
        }
        if !(self.e0_j > 0.0) {
            v.push("initial energy must be positive".into());
        }
        if self.grid_u == 0 || self.grid_v == 0 {
            v.push("uncertainty grid must have at least one cell per axis".into());
        }
        if self.maxlogit_iterations == 0 {
            v.push("maxlogit_iterations must be at least 1".into());
        }
        if !(self.maxlogit_tau > 0.0) {
            v.push("maxlogit_tau must be positive".into());
        }
        if self.confirm_m == 0 || self.confirm_n < self.confirm_m {
            v.push(format!(
                "confirmation logic needs 1 <= M <= N, got M = {}, N = {}",
                self.confirm_m, self.confirm_n
            ));
        }

        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError { violations: v })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_parameter_set_is_valid() {
        let cfg = WorldConfig::default();
        // Sanity on the slope bound with the stated values: 5/(5*60*0.035).
        assert!((cfg.slope_lower_bound() - 5.0 / 10.5).abs() < 1e-12);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn zero_slope_rejected() {
        let cfg = WorldConfig {
            slope_b1: 0.0,
            ..WorldConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.violations.iter().any(|m| m.contains("slope bound violated")));
    }

    #[test]
    fn short_comm_range_rejected() {
        let cfg = WorldConfig {
            r_comm_m: 100.0,
            ..WorldConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.violations.iter().any(|m| m.contains("R_c < 2*R_L")));
    }

    #[test]
    fn all_violations_reported_together() {
        let cfg = WorldConfig {
            slope_b1: 0.0,
            r_comm_m: 10.0,
            p_fa: 1.5,
            ..WorldConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.violations.len() >= 3);
    }

    #[test]
    fn trust_tolerance_default_matches_init_error() {
        let cfg = WorldConfig::default();
        // (900 * (0.25 deg)^2 + 0.075^2) / 2
        assert!((cfg.trust_tolerance() - 0.011379).abs() < 1e-5);
    }

    #[test]
    fn density_node_count() {
        let cfg = WorldConfig::default();
        assert_eq!(cfg.resolved_node_count(), 350);
        let cfg = WorldConfig {
            density_per_m2: 0.0,
            ..WorldConfig::default()
        };
        assert_eq!(cfg.resolved_node_count(), 0);
    }
}
