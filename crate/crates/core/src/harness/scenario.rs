//! Scenario files.
//!
//! Line-oriented, `#` starts a comment, four sections:
//!
//! ```text
//! [pipe]
//! straight <len_m> <D_m> <incl>
//! bend <radius_m> <angle_deg> <D_m> <incl>
//! increaser [<len_m>] <Din_m> <Dout_m> <incl>
//!
//! [robot]
//! <key> = <value>          # see `RobotOverrides::apply`
//!
//! [env]
//! env [mu=<f>] [cable=<N>] [label=dry|sewage|custom] [from=<m> to=<m>]
//!
//! [mission]
//! seed <u64>
//! max_time <s>
//! stall_window <s>
//! interactive
//! at <t_s> stop | drive <duty> | roll <duty> | set_joint_angle <deg>
//!          | set_joint_duty <pct> | estop | reset_estop
//! ```
//!
//! The first `env` line without a range sets the base environment; ranged
//! lines override it over `[from, to)`.

use std::path::Path;

use crate::actuation::{ThermalConstants, TorqueMapMode};
use crate::canbus::Command;
use crate::error::ScenarioError;
use crate::firmware::{PiGains, PotModel};
use crate::geometry::{PipeNetwork, PipeSegment, DEFAULT_INCREASER_LENGTH_M};
use crate::mechanics::{Environment, EnvironmentProfile, SurfaceLabel, MU_DRY, MU_SEWAGE};
use crate::robot::RobotParams;

/// Master clock period, s.
pub const MASTER_DT_S: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedCommand {
    pub t_s: f64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub segments: Vec<PipeSegment>,
    pub robot: RobotParams,
    pub peak_mode: bool,
    pub torque_mode: TorqueMapMode,
    pub thermal: ThermalConstants,
    pub pot: PotModel,
    pub gains: PiGains,
    /// Roll rate at full roll duty, rad/s.
    pub roll_rate_rad_s: f64,
    pub env: EnvironmentProfile,
    pub mission: Vec<TimedCommand>,
    pub interactive: bool,
    pub seed: u64,
    pub dt_s: f64,
    pub max_sim_time_s: f64,
    pub stall_window_s: f64,
    pub bus_latency_ticks: u64,
    pub bus_loss_probability: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "unnamed".into(),
            segments: Vec::new(),
            robot: RobotParams::default(),
            peak_mode: false,
            torque_mode: TorqueMapMode::Anchors,
            thermal: ThermalConstants::default(),
            pot: PotModel::default(),
            gains: PiGains::default(),
            roll_rate_rad_s: 1.0,
            env: EnvironmentProfile::uniform(Environment::dry()),
            mission: Vec::new(),
            interactive: false,
            seed: 0,
            dt_s: MASTER_DT_S,
            max_sim_time_s: 600.0,
            stall_window_s: 2.0,
            bus_latency_ticks: 1,
            bus_loss_probability: 0.0,
        }
    }
}

const SHIPPED: [(&str, &str); 5] = [
    ("vertical_3in_course", include_str!("../../scenarios/vertical_3in_course.scn")),
    ("vertical_4in_course", include_str!("../../scenarios/vertical_4in_course.scn")),
    ("increaser_course", include_str!("../../scenarios/increaser_course.scn")),
    ("field_sewage", include_str!("../../scenarios/field_sewage.scn")),
    ("field_sewage_endurance", include_str!("../../scenarios/field_sewage_endurance.scn")),
];

impl Scenario {
    pub fn shipped_names() -> impl Iterator<Item = &'static str> {
        SHIPPED.iter().map(|(n, _)| *n)
    }

    pub fn shipped(name: &str) -> Result<Self, ScenarioError> {
        let (n, text) =
            SHIPPED.iter().find(|(n, _)| *n == name).ok_or_else(|| ScenarioError::UnknownShipped(name.to_string()))?;
        Self::parse(n, text)
    }

    /// Loads a shipped scenario by name, or a file by path.
    pub fn load(name_or_path: &str) -> Result<Self, ScenarioError> {
        if let Ok(sc) = Self::shipped(name_or_path) {
            return Ok(sc);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::parse(name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, ScenarioError> {
        let mut sc = Scenario { name: name.to_string(), ..Scenario::default() };
        let mut section: Option<&str> = None;
        let mut base_env: Option<Environment> = None;
        let mut ranged: Vec<(f64, f64, Environment)> = Vec::new();
        let mut overrides = RobotOverrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError::Parse { line: line_no, message };
            if line.starts_with('[') {
                section = match line {
                    "[pipe]" => Some("pipe"),
                    "[robot]" => Some("robot"),
                    "[env]" => Some("env"),
                    "[mission]" => Some("mission"),
                    other => return Err(err(format!("unknown section {other}"))),
                };
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match section {
                None => return Err(err("content before the first section".into())),
                Some("pipe") => sc.segments.push(parse_segment(&words).map_err(err)?),
                Some("robot") => overrides.parse_line(line).map_err(err)?,
                Some("env") => {
                    let (env, range) = parse_env(&words).map_err(err)?;
                    match range {
                        Some((from, to)) => ranged.push((from, to, env)),
                        None if base_env.is_none() => base_env = Some(env),
                        None => return Err(err("second env line without a range".into())),
                    }
                }
                Some(_) => parse_mission_line(&mut sc, &words).map_err(err)?,
            }
        }
        overrides.apply(&mut sc).map_err(ScenarioError::Invalid)?;
        let mut profile = EnvironmentProfile::uniform(base_env.unwrap_or_else(Environment::dry));
        for (from, to, env) in ranged {
            profile = profile.with_range(from, to, env);
        }
        sc.env = profile;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        PipeNetwork::build(self.segments.clone())?;
        self.robot.validate()?;
        if !(self.dt_s > 0.0) {
            return Err(ScenarioError::Invalid("dt must be positive".into()));
        }
        if !(self.max_sim_time_s > 0.0) {
            return Err(ScenarioError::Invalid("max_time must be positive".into()));
        }
        if self.stall_window_s < 2.0 {
            return Err(ScenarioError::Invalid("stall window must be at least 2 s".into()));
        }
        if self.mission.windows(2).any(|w| w[1].t_s < w[0].t_s) {
            return Err(ScenarioError::Invalid("mission times must be non-decreasing".into()));
        }
        if !(0.0..=1.0).contains(&self.bus_loss_probability) {
            return Err(ScenarioError::Invalid("bus loss probability outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn network(&self) -> Result<PipeNetwork, ScenarioError> {
        Ok(PipeNetwork::build(self.segments.clone())?)
    }

    /// Replaces every scripted joint duty with `duty_pct`.
    pub fn with_joint_duty(mut self, duty_pct: u8) -> Self {
        for tc in &mut self.mission {
            if let Command::SetJointDuty(_) = tc.command {
                tc.command = Command::SetJointDuty(duty_pct);
            }
        }
        self
    }
}

fn num(word: Option<&&str>, what: &str) -> Result<f64, String> {
    let w = word.ok_or_else(|| format!("missing {what}"))?;
    let v: f64 = w.parse().map_err(|_| format!("{what}: `{w}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{what}: `{w}` is not finite"));
    }
    Ok(v)
}

fn parse_segment(words: &[&str]) -> Result<PipeSegment, String> {
    let arity = |n: usize| {
        if words.len() - 1 == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {n} values, got {}", words[0], words.len() - 1))
        }
    };
    match words[0] {
        "straight" => {
            arity(3)?;
            Ok(PipeSegment::straight(
                num(words.get(1), "length")?,
                num(words.get(2), "diameter")?,
                num(words.get(3), "inclination")?,
            ))
        }
        "bend" => {
            arity(4)?;
            Ok(PipeSegment::bend_deg(
                num(words.get(1), "radius")?,
                num(words.get(2), "angle")?,
                num(words.get(3), "diameter")?,
                num(words.get(4), "inclination")?,
            ))
        }
        "increaser" => {
            let rest = &words[1..];
            let (len, tail) = match rest.len() {
                3 => (DEFAULT_INCREASER_LENGTH_M, rest),
                4 => (num(rest.first(), "length")?, &rest[1..]),
                n => return Err(format!("`increaser` takes 3 or 4 values, got {n}")),
            };
            Ok(PipeSegment::increaser(
                len,
                num(tail.first(), "inlet diameter")?,
                num(tail.get(1), "outlet diameter")?,
                num(tail.get(2), "inclination")?,
            ))
        }
        other => Err(format!("unknown segment kind `{other}`")),
    }
}

type EnvLine = (Environment, Option<(f64, f64)>);

fn parse_env(words: &[&str]) -> Result<EnvLine, String> {
    if words[0] != "env" {
        return Err(format!("expected `env`, got `{}`", words[0]));
    }
    let mut mu = None;
    let mut cable = None;
    let mut label = None;
    let mut from = None;
    let mut to = None;
    for kv in &words[1..] {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
        match k {
            "mu" => mu = Some(num(Some(&v), "mu")?),
            "cable" => cable = Some(num(Some(&v), "cable")?),
            "from" => from = Some(num(Some(&v), "from")?),
            "to" => to = Some(num(Some(&v), "to")?),
            "label" => {
                label = Some(match v {
                    "dry" => SurfaceLabel::Dry,
                    "sewage" => SurfaceLabel::Sewage,
                    "custom" => SurfaceLabel::Custom,
                    other => return Err(format!("unknown label `{other}`")),
                })
            }
            other => return Err(format!("unknown env key `{other}`")),
        }
    }
    let label = label.unwrap_or(SurfaceLabel::Custom);
    let mu = match (mu, label) {
        (Some(m), _) => m,
        (None, SurfaceLabel::Dry) => MU_DRY,
        (None, SurfaceLabel::Sewage) => MU_SEWAGE,
        (None, SurfaceLabel::Custom) => return Err("custom environment needs mu".into()),
    };
    let env = Environment::new(mu, cable.unwrap_or(crate::mechanics::DEFAULT_CABLE_DRAG_N), label)
        .map_err(|e| e.to_string())?;
    let range = match (from, to) {
        (None, None) => None,
        (Some(f), Some(t)) if t > f => Some((f, t)),
        (Some(_), Some(_)) => return Err("env range needs to > from".into()),
        _ => return Err("env range needs both from= and to=".into()),
    };
    Ok((env, range))
}

fn parse_command(words: &[&str]) -> Result<Command, String> {
    let duty_i8 = |w: Option<&&str>| -> Result<i8, String> {
        let v = num(w, "duty")?;
        if !(-100.0..=100.0).contains(&v) || v.fract() != 0.0 {
            return Err(format!("duty {v} must be an integer in [-100, 100]"));
        }
        Ok(v as i8)
    };
    let cmd = match words[0] {
        "stop" => Command::Stop,
        "estop" => Command::Estop,
        "reset_estop" => Command::ResetEstop,
        "drive" => Command::Drive(duty_i8(words.get(1))?),
        "roll" => Command::Roll(duty_i8(words.get(1))?),
        "set_joint_duty" => {
            let v = num(words.get(1), "joint duty")?;
            if !(0.0..=100.0).contains(&v) || v.fract() != 0.0 {
                return Err(format!("joint duty {v} must be an integer in [0, 100]"));
            }
            Command::SetJointDuty(v as u8)
        }
        "set_joint_angle" => {
            let deg = num(words.get(1), "angle")?;
            let cdeg = (deg * 100.0).round();
            if !(f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&cdeg) {
                return Err(format!("angle {deg} deg does not fit in centidegrees"));
            }
            Command::SetJointAngle(cdeg as i16)
        }
        other => return Err(format!("unknown command `{other}`")),
    };
    let expected = match cmd {
        Command::Stop | Command::Estop | Command::ResetEstop => 1,
        _ => 2,
    };
    if words.len() != expected {
        return Err(format!("`{}` takes {} argument(s)", words[0], expected - 1));
    }
    Ok(cmd)
}

fn parse_mission_line(sc: &mut Scenario, words: &[&str]) -> Result<(), String> {
    match words[0] {
        "seed" => {
            let w = words.get(1).ok_or("missing seed")?;
            sc.seed = w.parse().map_err(|_| format!("seed `{w}` is not an unsigned integer"))?;
        }
        "max_time" => sc.max_sim_time_s = num(words.get(1), "max_time")?,
        "stall_window" => sc.stall_window_s = num(words.get(1), "stall_window")?,
        "bus_loss" => sc.bus_loss_probability = num(words.get(1), "bus_loss")?,
        "interactive" => sc.interactive = true,
        "at" => {
            let t_s = num(words.get(1), "time")?;
            if t_s < 0.0 {
                return Err("command time must be non-negative".into());
            }
            if words.len() < 3 {
                return Err("missing command after time".into());
            }
            let command = parse_command(&words[2..])?;
            sc.mission.push(TimedCommand { t_s, command });
        }
        other => return Err(format!("unknown mission directive `{other}`")),
    }
    Ok(())
}

/// `[robot]` section, applied on top of the defaults.
#[derive(Debug, Default)]
struct RobotOverrides {
    entries: Vec<(String, String)>,
}

impl RobotOverrides {
    fn parse_line(&mut self, line: &str) -> Result<(), String> {
        let (k, v) = line.split_once('=').ok_or_else(|| format!("expected key = value, got `{line}`"))?;
        self.entries.push((k.trim().to_string(), v.trim().to_string()));
        Ok(())
    }

    fn apply(&self, sc: &mut Scenario) -> Result<(), String> {
        for (k, v) in &self.entries {
            let f = || num(Some(&v.as_str()), k);
            let r = &mut sc.robot;
            match k.as_str() {
                "link_m" => r.link_joint_to_joint_m = f()?,
                "end_link_m" => r.end_link_m = f()?,
                "wheel_radius_m" => r.wheel_radius_m = f()?,
                "mass_kg" => r.total_mass_kg = f()?,
                "total_length_m" => r.total_extended_length_m = f()?,
                "spring_nm_per_rad" => r.spring_stiffness_nm_per_rad = f()?,
                "max_speed_m_s" => r.max_speed_m_s = f()?,
                "max_cont_traction_n" => r.max_cont_traction_n = f()?,
                "peak_traction_n" => r.peak_traction_n = f()?,
                "peak_mode" => sc.peak_mode = v.parse().map_err(|_| format!("peak_mode `{v}` is not true/false"))?,
                "torque_map" => {
                    sc.torque_mode = match v.as_str() {
                        "anchors" => TorqueMapMode::Anchors,
                        "poly" => TorqueMapMode::Poly,
                        other => return Err(format!("unknown torque_map `{other}`")),
                    }
                }
                "ambient_c" => sc.thermal.ambient_c = f()?,
                "soft_limit_c" => sc.thermal.soft_limit_c = f()?,
                "thermal_gain_c_per_duty2" => sc.thermal.gain_c_per_duty2 = f()?,
                "thermal_time_constant_s" => sc.thermal.time_constant_s = f()?,
                "pot_noise_v" => sc.pot.noise_sigma_v = f()?,
                "pot_fullscale_deg" => sc.pot.angle_fullscale_rad = f()?.to_radians(),
                "kp" => sc.gains.kp = f()?,
                "ki" => sc.gains.ki = f()?,
                "roll_rate_rad_s" => sc.roll_rate_rad_s = f()?,
                other => return Err(format!("unknown robot key `{other}`")),
            }
        }
        Ok(())
    }
}
