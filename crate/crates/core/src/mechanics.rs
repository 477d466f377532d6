//! Quasi-static traction and Coulomb slip.
//!
//! The middle-joint torque is reacted by the outer drive wheels at an axial
//! moment arm `L_j cos(phi)`, which sets the wall normal forces. Traction
//! capacity is Coulomb friction over the three drive-wheel normals, capped by
//! the gear train's traction rating. The robot advances at commanded speed
//! when capacity covers the axial load and slips in place otherwise.

use crate::actuation::duty_to_speed;
use crate::error::{ConfigError, GeometryError};
use crate::geometry::PipeNetwork;
use crate::robot::{advance_position, solve_configuration, BracingConfig, RobotParams};

/// Standard gravity, m/s^2.
pub const GRAVITY_M_S2: f64 = 9.806_65;

/// Friction of a clean PVC or cast-iron wall against the drive wheels.
pub const MU_DRY: f64 = 0.6;
/// Friction of a sewage-coated wall.
pub const MU_SEWAGE: f64 = 0.25;
/// Tether drag when nothing better is known, N.
pub const DEFAULT_CABLE_DRAG_N: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceLabel {
    Dry,
    Sewage,
    Custom,
}

impl SurfaceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceLabel::Dry => "dry",
            SurfaceLabel::Sewage => "sewage",
            SurfaceLabel::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub mu: f64,
    pub cable_drag_n: f64,
    pub label: SurfaceLabel,
}

impl Environment {
    pub fn new(mu: f64, cable_drag_n: f64, label: SurfaceLabel) -> Result<Self, ConfigError> {
        if !(mu > 0.0 && mu <= 1.5) {
            return Err(ConfigError::InvalidParam { name: "mu", value: mu, reason: "must lie in (0, 1.5]" });
        }
        if !(cable_drag_n >= 0.0 && cable_drag_n.is_finite()) {
            return Err(ConfigError::InvalidParam {
                name: "cable_drag_n",
                value: cable_drag_n,
                reason: "must be non-negative",
            });
        }
        Ok(Self { mu, cable_drag_n, label })
    }

    pub fn dry() -> Self {
        Self { mu: MU_DRY, cable_drag_n: DEFAULT_CABLE_DRAG_N, label: SurfaceLabel::Dry }
    }

    pub fn sewage() -> Self {
        Self { mu: MU_SEWAGE, cable_drag_n: DEFAULT_CABLE_DRAG_N, label: SurfaceLabel::Sewage }
    }
}

/// Environment that may change along the course.
///
/// Ranges are half-open `[from, to)`; later ranges override earlier ones and
/// anything uncovered falls back to the base environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentProfile {
    base: Environment,
    ranges: Vec<(f64, f64, Environment)>,
}

impl EnvironmentProfile {
    pub fn uniform(env: Environment) -> Self {
        Self { base: env, ranges: Vec::new() }
    }

    pub fn with_range(mut self, from_m: f64, to_m: f64, env: Environment) -> Self {
        self.ranges.push((from_m, to_m, env));
        self
    }

    pub fn base(&self) -> &Environment {
        &self.base
    }

    pub fn at(&self, s_m: f64) -> &Environment {
        self.ranges
            .iter()
            .rev()
            .find(|(from, to, _)| (*from..*to).contains(&s_m))
            .map(|(_, _, env)| env)
            .unwrap_or(&self.base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForces {
    pub n_outer_front_n: f64,
    pub n_mid_n: f64,
    pub n_outer_rear_n: f64,
    pub traction_capacity_n: f64,
    pub required_force_n: f64,
    pub slip_margin_n: f64,
}

impl ContactForces {
    pub fn total_normal_n(&self) -> f64 {
        self.n_outer_front_n + self.n_mid_n + self.n_outer_rear_n
    }
}

/// Wall normal forces produced by middle-joint torque `tau_mid_nm`.
///
/// Only the normal fields are filled; capacity, requirement and margin are 0.
pub fn contact_forces(
    config: &BracingConfig,
    tau_mid_nm: f64,
    params: &RobotParams,
) -> Result<ContactForces, ConfigError> {
    let cos_phi = config.phi_rad.cos();
    if cos_phi <= 0.0 {
        return Err(ConfigError::Unphysical { cos_phi });
    }
    let tau = tau_mid_nm.max(0.0);
    let outer = tau / (params.link_joint_to_joint_m * cos_phi);
    Ok(ContactForces {
        n_outer_front_n: outer,
        n_mid_n: 2.0 * outer,
        n_outer_rear_n: outer,
        traction_capacity_n: 0.0,
        required_force_n: 0.0,
        slip_margin_n: 0.0,
    })
}

/// Coulomb traction over the drive-wheel normals, capped by the motor rating.
pub fn traction_capacity(forces: &ContactForces, env: &Environment, params: &RobotParams, peak_mode: bool) -> f64 {
    let ceiling = if peak_mode { params.peak_traction_n } else { params.max_cont_traction_n };
    (env.mu * forces.total_normal_n()).min(ceiling)
}

/// Travel direction used when evaluating the axial load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Travel {
    Forward,
    Backward,
    Hold,
}

impl Travel {
    pub fn from_speed(v_m_s: f64) -> Self {
        if v_m_s > 0.0 {
            Travel::Forward
        } else if v_m_s < 0.0 {
            Travel::Backward
        } else {
            Travel::Hold
        }
    }
}

/// Axial force the wheels must carry at `s_m`.
///
/// Moving forward this is `m g g_axial + cable + F_bend`. Reversing lets
/// gravity assist and slackens the tether. Holding still only has to resist
/// gravity.
pub fn required_force(
    s_m: f64,
    travel: Travel,
    net: &PipeNetwork,
    env: &Environment,
    params: &RobotParams,
) -> Result<f64, GeometryError> {
    let weight_axial = params.total_mass_kg * GRAVITY_M_S2 * net.gravity_axial_at(s_m)?;
    let kappa = net.curvature_at(s_m)?;
    let bend = if kappa > 0.0 {
        let delta = 2.0 * (params.link_joint_to_joint_m * kappa / 2.0).min(1.0).asin();
        params.spring_stiffness_nm_per_rad * (2.0 * delta) / params.link_joint_to_joint_m
    } else {
        0.0
    };
    let f = match travel {
        Travel::Forward => weight_axial + env.cable_drag_n + bend,
        Travel::Backward => -weight_axial + bend,
        Travel::Hold => weight_axial.abs(),
    };
    Ok(f.max(0.0))
}

/// Motion-relevant slice of the robot state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub s_m: f64,
    /// Signed drive duty, %.
    pub drive_duty_pct: f64,
    /// Middle-joint torque applied against the walls, Nm.
    pub joint_torque_nm: f64,
    pub peak_mode: bool,
    pub slip: bool,
    pub slip_margin_n: f64,
    pub arrived: bool,
}

impl MotionState {
    pub fn at_entry() -> Self {
        Self {
            s_m: 0.0,
            drive_duty_pct: 0.0,
            joint_torque_nm: 0.0,
            peak_mode: false,
            slip: false,
            slip_margin_n: 0.0,
            arrived: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub config: BracingConfig,
    pub forces: ContactForces,
}

/// Full force balance at the current position.
pub fn evaluate(
    state: &MotionState,
    net: &PipeNetwork,
    env: &EnvironmentProfile,
    params: &RobotParams,
) -> Result<Evaluation, ConfigError> {
    let s = state.s_m;
    let d = net.diameter_at(s).map_err(geometry_to_config)?;
    let kappa = net.curvature_at(s).map_err(geometry_to_config)?;
    let config = solve_configuration(params, d, kappa)?;
    let local = env.at(s);
    let mut forces = contact_forces(&config, state.joint_torque_nm, params)?;
    forces.traction_capacity_n = traction_capacity(&forces, local, params, state.peak_mode);
    let v = duty_to_speed(state.drive_duty_pct, params.max_speed_m_s);
    forces.required_force_n =
        required_force(s, Travel::from_speed(v), net, local, params).map_err(geometry_to_config)?;
    forces.slip_margin_n = forces.traction_capacity_n - forces.required_force_n;
    Ok(Evaluation { config, forces })
}

fn geometry_to_config(e: GeometryError) -> ConfigError {
    match e {
        GeometryError::OutOfRange { s, .. } => {
            ConfigError::InvalidParam { name: "s_m", value: s, reason: "outside the course" }
        }
        _ => ConfigError::InvalidParam { name: "course", value: f64::NAN, reason: "invalid course" },
    }
}

/// Advances the robot by one quasi-static step of `dt_s` seconds.
///
/// Non-negative margin: move at the commanded speed. Negative margin: the
/// wheels spin and `s` is unchanged.
pub fn step_quasistatic(
    state: &MotionState,
    net: &PipeNetwork,
    env: &EnvironmentProfile,
    params: &RobotParams,
    dt_s: f64,
) -> Result<(MotionState, Evaluation), ConfigError> {
    let eval = evaluate(state, net, env, params)?;
    let mut next = *state;
    next.slip_margin_n = eval.forces.slip_margin_n;
    next.slip = eval.forces.slip_margin_n < 0.0;
    if !next.slip {
        let v = duty_to_speed(state.drive_duty_pct, params.max_speed_m_s);
        let adv = advance_position(state.s_m, v, dt_s, net.total_length());
        next.s_m = adv.s_m;
        next.arrived = state.arrived || adv.arrived;
    }
    Ok((next, eval))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PipeSegment;
    use std::f64::consts::FRAC_PI_2;

    fn config_with_phi_deg(phi_deg: f64) -> BracingConfig {
        let phi = phi_deg.to_radians();
        BracingConfig {
            theta_mid_rad: 2.0 * phi,
            phi_rad: phi,
            theta_front_rad: phi,
            theta_rear_rad: phi,
            bend_deflection_rad: 0.0,
            clearance_m: 0.12 * phi.sin(),
            in_contact: [true; 5],
        }
    }

    fn env(mu: f64, cable: f64) -> Environment {
        Environment::new(mu, cable, SurfaceLabel::Custom).unwrap()
    }

    fn vertical_3in() -> PipeNetwork {
        PipeNetwork::build(vec![PipeSegment::straight(1.0, 0.075, 1.0)]).unwrap()
    }

    #[test]
    fn zero_torque_zero_normals() {
        let f = contact_forces(&config_with_phi_deg(22.0), 0.0, &RobotParams::default()).unwrap();
        assert_eq!(f.total_normal_n(), 0.0);
    }

    #[test]
    fn normals_at_pass_torque() {
        let f = contact_forces(&config_with_phi_deg(22.0), 1.32, &RobotParams::default()).unwrap();
        // 1.32 / (0.12 cos 22 deg)
        assert!((f.n_outer_front_n - 11.863_882).abs() < 1e-5);
        assert!((f.n_mid_n - 23.727_764).abs() < 1e-5);
        assert_eq!(f.n_mid_n, f.n_outer_front_n + f.n_outer_rear_n);
    }

    #[test]
    fn unphysical_angle_rejected() {
        let err = contact_forces(&config_with_phi_deg(100.0), 1.0, &RobotParams::default());
        assert!(matches!(err, Err(ConfigError::Unphysical { .. })));
    }

    #[test]
    fn capacity_examples() {
        let p = RobotParams::default();
        let cfg = config_with_phi_deg(22.0);
        let f = contact_forces(&cfg, 1.32, &p).unwrap();
        let cap = traction_capacity(&f, &env(0.4, 0.0), &p, false);
        assert!((cap - 0.4 * f.total_normal_n()).abs() < 1e-12);
        assert!((cap - 18.98).abs() < 0.01);
        let big = contact_forces(&cfg, 12.0, &p).unwrap();
        assert_eq!(traction_capacity(&big, &env(1.5, 0.0), &p, false), 151.0);
        assert_eq!(traction_capacity(&big, &env(1.5, 0.0), &p, true), 1.5 * big.total_normal_n());
        let zero = contact_forces(&cfg, 0.0, &p).unwrap();
        assert_eq!(traction_capacity(&zero, &env(0.4, 0.0), &p, false), 0.0);
    }

    #[test]
    fn required_force_cases() {
        let p = RobotParams::default();
        let vertical = vertical_3in();
        let f = required_force(0.5, Travel::Forward, &vertical, &env(0.4, 0.0), &p).unwrap();
        assert!((f - 1.57 * 9.80665).abs() < 1e-12);
        assert!((f - 15.40).abs() < 0.005);
        let flat = PipeNetwork::build(vec![PipeSegment::straight(1.0, 0.075, 0.0)]).unwrap();
        assert_eq!(required_force(0.5, Travel::Forward, &flat, &env(0.4, 0.0), &p).unwrap(), 0.0);
        let bend = PipeNetwork::build(vec![PipeSegment::bend(0.1, FRAC_PI_2, 0.075, 0.0)]).unwrap();
        let fb = required_force(0.05, Travel::Forward, &bend, &env(0.4, 0.0), &p).unwrap();
        let delta = 2.0 * 0.6f64.asin();
        assert!((fb - 0.5 * 2.0 * delta / 0.12).abs() < 1e-12);
        assert!((fb - 10.7).abs() < 0.03);
    }

    #[test]
    fn holding_and_reversing_load() {
        let p = RobotParams::default();
        let down = PipeNetwork::build(vec![PipeSegment::straight(1.0, 0.075, -1.0)]).unwrap();
        let e = env(0.4, 2.0);
        assert_eq!(required_force(0.5, Travel::Forward, &down, &e, &p).unwrap(), 0.0);
        let hold = required_force(0.5, Travel::Hold, &down, &e, &p).unwrap();
        assert!((hold - 1.57 * GRAVITY_M_S2).abs() < 1e-12);
        let back = required_force(0.5, Travel::Backward, &vertical_3in(), &e, &p).unwrap();
        assert_eq!(back, 0.0);
    }

    fn step_on(net: &PipeNetwork, torque: f64, mu: f64, cable: f64) -> MotionState {
        let state = MotionState { s_m: 0.5, drive_duty_pct: 100.0, joint_torque_nm: torque, ..MotionState::at_entry() };
        let profile = EnvironmentProfile::uniform(env(mu, cable));
        step_quasistatic(&state, net, &profile, &RobotParams::default(), 0.01).unwrap().0
    }

    #[test]
    fn slip_and_pass_outcomes() {
        let net = vertical_3in();
        let low = step_on(&net, 0.42, 0.4, 0.0);
        assert!(low.slip);
        assert_eq!(low.s_m, 0.5);
        assert!((low.slip_margin_n - (6.04 - 15.40)).abs() < 0.01);
        let pass = step_on(&net, 1.32, 0.4, 0.0);
        assert!(!pass.slip);
        assert!((pass.s_m - (0.5 + 0.088 * 0.01)).abs() < 1e-15);
        assert!(step_on(&net, 1.32, 0.2, 0.0).slip);
        assert!(!step_on(&net, 2.55, 0.2, 0.0).slip);
    }

    #[test]
    fn profile_lookup() {
        let profile = EnvironmentProfile::uniform(Environment::dry()).with_range(1.0, 2.0, Environment::sewage());
        assert_eq!(profile.at(0.5).label, SurfaceLabel::Dry);
        assert_eq!(profile.at(1.0).label, SurfaceLabel::Sewage);
        assert_eq!(profile.at(2.0).label, SurfaceLabel::Dry);
    }

    #[test]
    fn environment_bounds() {
        assert!(Environment::new(0.0, 0.0, SurfaceLabel::Custom).is_err());
        assert!(Environment::new(1.6, 0.0, SurfaceLabel::Custom).is_err());
        assert!(Environment::new(0.5, -1.0, SurfaceLabel::Custom).is_err());
    }
}
