//! Physical constants of the articulated robot and its bracing geometry.
//!
//! The chain is front roll unit, three joints, four links, rear roll unit.
//! The active middle joint pushes the drive wheels against opposite walls;
//! the front and rear joints are passive, preloaded by torsion springs.
//! Bracing is planar: wheel centres alternate between two lines separated by
//! the clearance `h = D - 2 r_w`.

use crate::error::ConfigError;

/// Number of wheels in wall contact: three drive wheels and two roll units.
pub const WHEEL_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    /// Joint-to-joint link length, m.
    pub link_joint_to_joint_m: f64,
    pub end_link_m: f64,
    pub wheel_radius_m: f64,
    pub total_mass_kg: f64,
    pub total_extended_length_m: f64,
    /// Torsion spring rate of the passive front and rear joints, Nm/rad.
    pub spring_stiffness_nm_per_rad: f64,
    pub max_cont_joint_torque_nm: f64,
    pub peak_joint_torque_nm: f64,
    pub max_speed_m_s: f64,
    pub max_cont_traction_n: f64,
    pub peak_traction_n: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            link_joint_to_joint_m: 0.12,
            end_link_m: 0.12,
            wheel_radius_m: 0.015,
            total_mass_kg: 1.57,
            total_extended_length_m: 0.51,
            spring_stiffness_nm_per_rad: 0.5,
            max_cont_joint_torque_nm: 2.56,
            peak_joint_torque_nm: 12.32,
            max_speed_m_s: 0.088,
            max_cont_traction_n: 151.0,
            peak_traction_n: 728.0,
        }
    }
}

impl RobotParams {
    /// Checks the length identity and that the robot can brace in a 3 in bore.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("link_joint_to_joint_m", self.link_joint_to_joint_m),
            ("end_link_m", self.end_link_m),
            ("wheel_radius_m", self.wheel_radius_m),
            ("total_mass_kg", self.total_mass_kg),
            ("total_extended_length_m", self.total_extended_length_m),
            ("max_speed_m_s", self.max_speed_m_s),
            ("max_cont_traction_n", self.max_cont_traction_n),
            ("peak_traction_n", self.peak_traction_n),
            ("max_cont_joint_torque_nm", self.max_cont_joint_torque_nm),
            ("peak_joint_torque_nm", self.peak_joint_torque_nm),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::InvalidParam { name, value, reason: "must be positive" });
            }
        }
        if self.spring_stiffness_nm_per_rad < 0.0 {
            return Err(ConfigError::InvalidParam {
                name: "spring_stiffness_nm_per_rad",
                value: self.spring_stiffness_nm_per_rad,
                reason: "must be non-negative",
            });
        }
        let assembled = 2.0 * (self.end_link_m + self.link_joint_to_joint_m + self.wheel_radius_m);
        if (assembled - self.total_extended_length_m).abs() > 1e-6 {
            return Err(ConfigError::InvalidParam {
                name: "total_extended_length_m",
                value: self.total_extended_length_m,
                reason: "must equal 2 (end link + link + wheel radius)",
            });
        }
        let h = crate::geometry::BORE_3IN_M - 2.0 * self.wheel_radius_m;
        if h <= 0.0 || h > self.link_joint_to_joint_m {
            return Err(ConfigError::InvalidParam {
                name: "wheel_radius_m",
                value: self.wheel_radius_m,
                reason: "robot cannot brace in a 3 in bore",
            });
        }
        Ok(())
    }
}

/// Joint angles and contact geometry of the braced robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracingConfig {
    /// Middle joint deflection, rad (unsigned).
    pub theta_mid_rad: f64,
    /// Link-to-axis angle, rad.
    pub phi_rad: f64,
    pub theta_front_rad: f64,
    pub theta_rear_rad: f64,
    /// Extra deflection each joint takes to inscribe the links in a bend, rad.
    pub bend_deflection_rad: f64,
    pub clearance_m: f64,
    pub in_contact: [bool; WHEEL_COUNT],
}

/// Solves the planar zigzag bracing for a bore `diameter_m` and centreline
/// `curvature` (1/m).
pub fn solve_configuration(
    params: &RobotParams,
    diameter_m: f64,
    curvature: f64,
) -> Result<BracingConfig, ConfigError> {
    let link = params.link_joint_to_joint_m;
    let h = diameter_m - 2.0 * params.wheel_radius_m;
    if h < 0.0 {
        return Err(ConfigError::NoClearance { clearance_m: h });
    }
    if h > link {
        return Err(ConfigError::CannotSpan { clearance_m: h, link_m: link });
    }
    let half_chord = link * curvature.abs() / 2.0;
    if half_chord > 1.0 {
        return Err(ConfigError::BendTooTight { curvature, link_m: link });
    }
    let phi = (h / link).asin();
    let bend = 2.0 * half_chord.asin();
    Ok(BracingConfig {
        theta_mid_rad: 2.0 * phi + bend,
        phi_rad: phi,
        theta_front_rad: phi + bend,
        theta_rear_rad: phi + bend,
        bend_deflection_rad: bend,
        clearance_m: h,
        in_contact: [true; WHEEL_COUNT],
    })
}

/// Inverse of the straight-pipe bracing relation: bore from middle joint angle.
pub fn diameter_from_theta(params: &RobotParams, theta_mid_rad: f64) -> f64 {
    2.0 * params.wheel_radius_m + params.link_joint_to_joint_m * (theta_mid_rad / 2.0).sin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    pub s_m: f64,
    /// Set when the robot reached the exit of the course.
    pub arrived: bool,
}

pub fn advance_position(s_m: f64, v_axial_m_s: f64, dt_s: f64, total_m: f64) -> Advance {
    debug_assert!(dt_s > 0.0);
    let next = s_m + v_axial_m_s * dt_s;
    if next >= total_m {
        Advance { s_m: total_m, arrived: v_axial_m_s > 0.0 || s_m >= total_m }
    } else {
        Advance { s_m: next.max(0.0), arrived: false }
    }
}
