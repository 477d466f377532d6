//! Duty ratio to joint torque, duty ratio to wheel speed, and board heating.

use crate::error::ActuationError;

/// Quartic duty->torque fit of the test rig, ascending powers of duty %.
pub const RIG_QUARTIC: [f64; 5] = [-0.1178, 4.7894e-2, 7.6041e-4, -1.6902e-5, -7.7385e-8];

/// Measured (duty %, torque Nm) anchor points used by the default map.
pub const TORQUE_ANCHORS: [(f64, f64); 6] =
    [(0.0, 0.0), (10.0, 0.42), (25.0, 1.32), (50.0, 2.55), (70.0, 3.0), (100.0, 3.0)];

/// Torque the gearhead saturates at, Nm.
pub const SATURATION_TORQUE_NM: f64 = 3.0;
pub const PEAK_JOINT_TORQUE_NM: f64 = 12.32;

/// Lookup grid spacing, duty %.
pub const GRID_STEP_PCT: f64 = 0.2;
const GRID_POINTS: usize = 501;
/// The polynomial's saturation point is searched for below this duty, %.
const SAT_SEARCH_LIMIT_PCT: f64 = 70.0;

pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TorqueMapMode {
    /// Piecewise-linear through the measured anchors.
    Anchors,
    /// The rig quartic, clamped at zero and monotonized, saturating at its peak.
    Poly,
}

/// Monotone duty % -> Nm map sampled on a 0.2 % grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueMap {
    coeffs: [f64; 5],
    tau_sat_nm: f64,
    sat_onset_pct: f64,
    grid: Vec<f64>,
}

fn grid_duty(i: usize) -> f64 {
    i as f64 / 5.0
}

impl TorqueMap {
    pub fn new(mode: TorqueMapMode) -> Self {
        match mode {
            TorqueMapMode::Anchors => Self::from_anchors(&TORQUE_ANCHORS),
            TorqueMapMode::Poly => Self::from_polynomial(RIG_QUARTIC, SATURATION_TORQUE_NM),
        }
    }

    /// Piecewise-linear map through `anchors`, which must start at duty 0 and
    /// be sorted by duty. Torque values are made non-decreasing.
    pub fn from_anchors(anchors: &[(f64, f64)]) -> Self {
        assert!(anchors.len() >= 2 && anchors[0].0 == 0.0, "anchors must start at duty 0");
        let interp = |r: f64| {
            let k = anchors.windows(2).position(|w| r <= w[1].0).unwrap_or(anchors.len() - 2);
            let (r0, t0) = anchors[k];
            let (r1, t1) = anchors[k + 1];
            if r1 == r0 {
                t1
            } else {
                t0 + (t1 - t0) * (r - r0) / (r1 - r0)
            }
        };
        let raw: Vec<f64> = (0..GRID_POINTS).map(|i| interp(grid_duty(i))).collect();
        Self::from_grid(RIG_QUARTIC, raw, PEAK_JOINT_TORQUE_NM)
    }

    /// Monotonized polynomial map that jumps to `tau_sat_nm` at the grid
    /// point where the polynomial peaks on [0, 70] % and stays there.
    pub fn from_polynomial(coeffs: [f64; 5], tau_sat_nm: f64) -> Self {
        let mut raw: Vec<f64> = (0..GRID_POINTS).map(|i| eval_poly(&coeffs, grid_duty(i))).collect();
        let search = (SAT_SEARCH_LIMIT_PCT * 5.0).round() as usize;
        let peak = (0..=search).fold(0, |best, i| if raw[i] >= raw[best] { i } else { best });
        for v in &mut raw[peak..] {
            *v = tau_sat_nm;
        }
        Self::from_grid(coeffs, raw, PEAK_JOINT_TORQUE_NM)
    }

    fn from_grid(coeffs: [f64; 5], raw: Vec<f64>, tau_cap_nm: f64) -> Self {
        let cap = tau_cap_nm.min(PEAK_JOINT_TORQUE_NM);
        let mut grid = Vec::with_capacity(raw.len());
        let mut running = 0.0f64;
        for v in &raw {
            running = running.max(*v).min(cap);
            grid.push(running);
        }
        let tau_sat = grid[GRID_POINTS - 1];
        // First grid point from which the map stays flat at its final value.
        let onset_idx = grid.iter().position(|&v| v >= tau_sat).unwrap_or(GRID_POINTS - 1);
        Self { coeffs, tau_sat_nm: tau_sat, sat_onset_pct: grid_duty(onset_idx), grid }
    }

    pub fn coefficients(&self) -> &[f64; 5] {
        &self.coeffs
    }

    pub fn saturation_torque(&self) -> f64 {
        self.tau_sat_nm
    }

    pub fn saturation_onset(&self) -> f64 {
        self.sat_onset_pct
    }

    /// Torque for duty `duty_pct` in [0, 100].
    pub fn duty_to_torque(&self, duty_pct: f64) -> Result<f64, ActuationError> {
        if !(0.0..=100.0).contains(&duty_pct) {
            return Err(ActuationError::DutyOutOfRange(duty_pct));
        }
        if duty_pct >= self.sat_onset_pct {
            return Ok(self.tau_sat_nm);
        }
        let pos = duty_pct * 5.0;
        let i = (pos.floor() as usize).min(GRID_POINTS - 2);
        let frac = pos - i as f64;
        Ok(self.grid[i] + frac * (self.grid[i + 1] - self.grid[i]))
    }

    /// Unclamped evaluation of the underlying quartic.
    pub fn raw_polynomial(&self, duty_pct: f64) -> f64 {
        eval_poly(&self.coeffs, duty_pct)
    }

    /// The (duty %, torque Nm) lookup table.
    pub fn table(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().enumerate().map(|(i, &t)| (grid_duty(i), t))
    }
}

impl Default for TorqueMap {
    fn default() -> Self {
        Self::new(TorqueMapMode::Anchors)
    }
}

/// Signed wheel speed for signed drive duty, m/s.
pub fn duty_to_speed(duty_pct: f64, max_speed_m_s: f64) -> f64 {
    max_speed_m_s * duty_pct.clamp(-100.0, 100.0) / 100.0
}

/// First-order board heating driven by joint duty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalConstants {
    /// Steady-state rise per duty^2, degC (heating power times thermal resistance).
    pub gain_c_per_duty2: f64,
    /// Thermal time constant R_th C_th, s.
    pub time_constant_s: f64,
    /// Temperature at which the resin case softens, degC.
    pub soft_limit_c: f64,
    pub ambient_c: f64,
}

impl Default for ThermalConstants {
    fn default() -> Self {
        Self {
            gain_c_per_duty2: 0.044,
            time_constant_s: 900.0 / std::f64::consts::LN_2,
            soft_limit_c: 80.0,
            ambient_c: 25.0,
        }
    }
}

impl ThermalConstants {
    pub fn steady_state(&self, duty_pct: f64) -> f64 {
        self.ambient_c + self.gain_c_per_duty2 * duty_pct * duty_pct
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    pub board_temp_c: f64,
    pub ambient_c: f64,
    pub time_above_soft_limit_s: f64,
    pub failed: bool,
}

impl ThermalState {
    pub fn at_ambient(consts: &ThermalConstants) -> Self {
        Self {
            board_temp_c: consts.ambient_c,
            ambient_c: consts.ambient_c,
            time_above_soft_limit_s: 0.0,
            failed: false,
        }
    }
}

pub fn thermal_step(ts: &ThermalState, duty_pct: f64, dt_s: f64, consts: &ThermalConstants) -> ThermalState {
    debug_assert!(dt_s > 0.0);
    let heating = consts.gain_c_per_duty2 * duty_pct * duty_pct;
    let temp = ts.board_temp_c + dt_s * (heating - (ts.board_temp_c - ts.ambient_c)) / consts.time_constant_s;
    let hot = temp >= consts.soft_limit_c;
    ThermalState {
        board_temp_c: temp,
        ambient_c: ts.ambient_c,
        time_above_soft_limit_s: ts.time_above_soft_limit_s + if hot { dt_s } else { 0.0 },
        failed: ts.failed || hot,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_order_oracle() {
        // Both readings of the printed constants against the measured anchors.
        let descending = |r: f64| RIG_QUARTIC.iter().fold(0.0, |acc, &c| acc * r + c);
        let ascending = |r: f64| eval_poly(&RIG_QUARTIC, r);
        assert!((ascending(10.0) - 0.42).abs() < 0.005);
        assert!((ascending(25.0) - 1.32).abs() < 0.1);
        assert!(descending(25.0) < -40_000.0);
        assert!((descending(10.0) - 0.42).abs() > 100.0);
        // Ascending reading at 50 % undershoots the 2.55 Nm anchor.
        assert!((ascending(50.0) - 1.5815).abs() < 1e-3);
    }

    #[test]
    fn anchors_mode_values() {
        let m = TorqueMap::new(TorqueMapMode::Anchors);
        assert_eq!(m.duty_to_torque(0.0).unwrap(), 0.0);
        for (r, t) in TORQUE_ANCHORS {
            assert!((m.duty_to_torque(r).unwrap() - t).abs() < 1e-12, "{r}");
        }
        assert_eq!(m.duty_to_torque(85.0).unwrap(), 3.0);
        assert_eq!(m.saturation_onset(), 70.0);
    }

    #[test]
    fn poly_mode_values() {
        let m = TorqueMap::new(TorqueMapMode::Poly);
        // operation tolerance is ±0.005 around the 0.42 Nm anchor
        assert!((m.duty_to_torque(10.0).unwrap() - 0.42).abs() < 0.005);
        assert!((m.duty_to_torque(10.0).unwrap() - 0.419_505_15).abs() < 1e-12);
        assert_eq!(m.duty_to_torque(0.0).unwrap(), 0.0);
        // the quartic peaks near 42 % (about 1.74 Nm); saturation starts there
        let onset = m.saturation_onset();
        assert!((40.0..45.0).contains(&onset), "{onset}");
        assert_eq!(m.saturation_torque(), 3.0);
        assert_eq!(m.duty_to_torque(85.0).unwrap(), 3.0);
        let below = m.duty_to_torque(onset - 0.2).unwrap();
        assert!((below - eval_poly(&RIG_QUARTIC, onset - 0.2)).abs() < 1e-12 && below < 1.8);
    }

    #[test]
    fn out_of_range_duty() {
        let m = TorqueMap::default();
        assert_eq!(m.duty_to_torque(-0.1), Err(ActuationError::DutyOutOfRange(-0.1)));
        assert!(m.duty_to_torque(100.1).is_err());
    }

    #[test]
    fn map_bounded_by_peak() {
        let m = TorqueMap::from_polynomial([0.0, 1.0, 0.0, 0.0, 0.0], 50.0);
        assert!(m.table().all(|(_, t)| t <= PEAK_JOINT_TORQUE_NM));
    }

    #[test]
    fn speed_law() {
        assert_eq!(duty_to_speed(100.0, 0.088), 0.088);
        assert_eq!(duty_to_speed(0.0, 0.088), 0.0);
        assert_eq!(duty_to_speed(-50.0, 0.088), -0.044);
    }

    fn time_to_fail(duty: f64, limit_s: f64) -> Option<f64> {
        let c = ThermalConstants::default();
        let mut ts = ThermalState::at_ambient(&c);
        let dt = 0.01;
        let mut t = 0.0;
        while t < limit_s {
            ts = thermal_step(&ts, duty, dt, &c);
            t += dt;
            if ts.failed {
                return Some(t);
            }
        }
        None
    }

    #[test]
    fn overheats_at_fifteen_minutes() {
        let t = time_to_fail(50.0, 1200.0).unwrap();
        assert!((t - 900.0).abs() < 1.0, "{t}");
    }

    #[test]
    fn quarter_duty_never_fails() {
        let c = ThermalConstants::default();
        assert!((c.steady_state(25.0) - 52.5).abs() < 1e-12);
        assert!(time_to_fail(25.0, 3600.0).is_none());
    }

    #[test]
    fn cooling_is_monotone() {
        let c = ThermalConstants::default();
        let mut ts = ThermalState { board_temp_c: 70.0, ..ThermalState::at_ambient(&c) };
        for _ in 0..10_000 {
            let next = thermal_step(&ts, 0.0, 0.1, &c);
            assert!(next.board_temp_c - c.ambient_c < ts.board_temp_c - c.ambient_c);
            assert!(next.board_temp_c > c.ambient_c);
            ts = next;
        }
    }

    #[test]
    fn failure_latches() {
        let c = ThermalConstants::default();
        let hot = ThermalState { board_temp_c: 85.0, ..ThermalState::at_ambient(&c) };
        let mut ts = thermal_step(&hot, 0.0, 0.1, &c);
        assert!(ts.failed);
        for _ in 0..100_000 {
            ts = thermal_step(&ts, 0.0, 0.1, &c);
        }
        assert!(ts.board_temp_c < 80.0 && ts.failed);
    }
}
