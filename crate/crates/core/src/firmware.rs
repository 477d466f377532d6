//! Per-board controller emulation.
//!
//! Each board runs a small mode machine fed by decoded CAN commands, reads the
//! middle joint potentiometer through a 5 V -> 3.3 V divider into a 12-bit
//! ADC, and closes a PI loop on joint angle when a target angle is set.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::canbus::{decode, CanFrame, Command, Message};

/// Joint duty cap in continuous operation, %.
pub const CONTINUOUS_DUTY_CAP_PCT: f64 = 50.0;
/// Hard duty limit, %.
pub const ABSOLUTE_DUTY_CAP_PCT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Idle,
    Drive,
    Roll,
    HoldAngle,
    Estop,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Drive => "drive",
            Mode::Roll => "roll",
            Mode::HoldAngle => "hold_angle",
            Mode::Estop => "estop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Mode::Idle, Mode::Drive, Mode::Roll, Mode::HoldAngle, Mode::Estop].into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotModel {
    pub v_supply: f64,
    /// Divider output over input.
    pub divider_ratio: f64,
    pub adc_reference_v: f64,
    pub adc_bits: u32,
    pub angle_fullscale_rad: f64,
    /// Gaussian noise at the ADC input, V.
    pub noise_sigma_v: f64,
}

impl Default for PotModel {
    fn default() -> Self {
        Self {
            v_supply: 5.0,
            divider_ratio: 3.3 / 5.0,
            adc_reference_v: 3.3,
            adc_bits: 12,
            angle_fullscale_rad: 150f64.to_radians(),
            noise_sigma_v: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PotReading {
    pub code: u16,
    /// The angle lay outside [0, fullscale] and was clamped.
    pub clamped: bool,
}

impl PotModel {
    pub fn max_code(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }

    /// Potentiometer -> divider -> ADC. Rounds half away from zero, so the
    /// exact midpoint of a 12-bit range reads 2048.
    pub fn read<R: Rng + ?Sized>(&self, theta_rad: f64, rng: &mut R) -> PotReading {
        let clamped = !(0.0..=self.angle_fullscale_rad).contains(&theta_rad);
        let frac = (theta_rad / self.angle_fullscale_rad).clamp(0.0, 1.0);
        let mut volts = frac * self.v_supply * self.divider_ratio;
        if self.noise_sigma_v > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma_v).expect("sigma is positive");
            volts += normal.sample(rng);
        }
        let max = f64::from(self.max_code());
        let code = (volts / self.adc_reference_v * max).round().clamp(0.0, max);
        PotReading { code: code as u16, clamped }
    }

    pub fn angle_from_code(&self, code: u16) -> f64 {
        f64::from(code) / f64::from(self.max_code()) * self.angle_fullscale_rad
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    /// duty % per rad
    pub kp: f64,
    /// duty % per rad s
    pub ki: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self { kp: 120.0, ki: 40.0 }
    }
}

/// PI on angle error with output clamp and conditional-integration anti-windup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleController {
    pub gains: PiGains,
    integral: f64,
}

impl AngleController {
    pub fn new(gains: PiGains) -> Self {
        Self { gains, integral: 0.0 }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Signed duty for angle error `error_rad`, clamped to `±limit_pct`.
    pub fn step(&mut self, error_rad: f64, dt_s: f64, limit_pct: f64) -> f64 {
        let p = self.gains.kp * error_rad;
        let candidate = self.integral + self.gains.ki * error_rad * dt_s;
        let unclamped = p + candidate;
        let out = unclamped.clamp(-limit_pct, limit_pct);
        // integrate only while unsaturated or when the error unwinds the clamp
        if out == unclamped || unclamped.signum() != error_rad.signum() {
            self.integral = candidate;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmwareState {
    pub node: u8,
    pub mode: Mode,
    pub drive_duty_pct: f64,
    pub roll_duty_pct: f64,
    /// Signed joint duty; positive opens the joint against the walls.
    pub joint_duty_pct: f64,
    pub target_angle_rad: Option<f64>,
    pub last_adc_code: u16,
    pub nak: bool,
    pub peak_mode: bool,
    pub controller: AngleController,
}

impl FirmwareState {
    pub fn new(node: u8, peak_mode: bool, gains: PiGains) -> Self {
        Self {
            node,
            mode: Mode::Idle,
            drive_duty_pct: 0.0,
            roll_duty_pct: 0.0,
            joint_duty_pct: 0.0,
            target_angle_rad: None,
            last_adc_code: 0,
            nak: false,
            peak_mode,
            controller: AngleController::new(gains),
        }
    }

    pub fn joint_cap(&self) -> f64 {
        if self.peak_mode {
            ABSOLUTE_DUTY_CAP_PCT
        } else {
            CONTINUOUS_DUTY_CAP_PCT
        }
    }

    fn zero_outputs(&mut self) {
        self.drive_duty_pct = 0.0;
        self.roll_duty_pct = 0.0;
        self.joint_duty_pct = 0.0;
        self.target_angle_rad = None;
        self.controller.reset();
    }
}

/// Applies one decoded command.
pub fn handle_command(fs: &FirmwareState, cmd: Command) -> FirmwareState {
    let mut next = *fs;
    if !cmd.is_valid() {
        next.nak = true;
        return next;
    }
    if fs.mode == Mode::Estop {
        if cmd == Command::ResetEstop {
            next.mode = Mode::Idle;
        }
        return next;
    }
    match cmd {
        Command::Stop => {
            next.zero_outputs();
            next.mode = Mode::Idle;
        }
        Command::Estop => return emergency_stop(fs),
        Command::ResetEstop => {}
        Command::Drive(d) => {
            next.mode = Mode::Drive;
            next.drive_duty_pct = f64::from(d);
            next.roll_duty_pct = 0.0;
        }
        Command::Roll(d) => {
            next.mode = Mode::Roll;
            next.roll_duty_pct = f64::from(d);
            next.drive_duty_pct = 0.0;
        }
        Command::SetJointAngle(cdeg) => {
            next.mode = Mode::HoldAngle;
            next.target_angle_rad = Some((f64::from(cdeg) / 100.0).to_radians());
            next.controller.reset();
        }
        Command::SetJointDuty(d) => {
            let requested = f64::from(d);
            let cap = next.joint_cap();
            if requested > CONTINUOUS_DUTY_CAP_PCT && next.peak_mode {
                warn!("node {}: joint duty {requested}% above continuous rating (peak mode)", fs.node);
            }
            next.target_angle_rad = None;
            next.joint_duty_pct = requested.min(cap);
        }
    }
    next
}

pub fn emergency_stop(fs: &FirmwareState) -> FirmwareState {
    let mut next = *fs;
    next.zero_outputs();
    next.mode = Mode::Estop;
    next
}

/// Decodes and applies a received frame; malformed frames raise the NAK flag.
pub fn handle_frame(fs: &FirmwareState, frame: &CanFrame) -> FirmwareState {
    match decode(frame) {
        Ok(Message::Command { node, command }) if node == fs.node => handle_command(fs, command),
        Ok(_) => *fs,
        Err(_) => FirmwareState { nak: true, ..*fs },
    }
}

/// One control tick of the angle loop. Returns the signed joint duty.
///
/// Without a target angle the commanded joint duty passes through.
pub fn angle_controller_step(fs: &mut FirmwareState, measured_angle_rad: f64, dt_s: f64) -> f64 {
    if fs.mode == Mode::Estop {
        fs.joint_duty_pct = 0.0;
        return 0.0;
    }
    if let Some(target) = fs.target_angle_rad {
        let cap = fs.joint_cap().min(CONTINUOUS_DUTY_CAP_PCT);
        fs.joint_duty_pct = fs.controller.step(target - measured_angle_rad, dt_s, cap);
    }
    fs.joint_duty_pct
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn idle() -> FirmwareState {
        FirmwareState::new(2, false, PiGains::default())
    }

    #[test]
    fn pot_endpoints_and_midpoint() {
        let pot = PotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pot.read(0.0, &mut rng).code, 0);
        assert_eq!(pot.read(pot.angle_fullscale_rad, &mut rng).code, 4095);
        assert_eq!(pot.read(pot.angle_fullscale_rad / 2.0, &mut rng).code, 2048);
        let r = pot.read(-0.1, &mut rng);
        assert_eq!(r, PotReading { code: 0, clamped: true });
        assert!(pot.read(4.0, &mut rng).clamped);
    }

    #[test]
    fn pot_quantization_error_bounded() {
        let pot = PotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut last = 0;
        for i in 0..=10_000 {
            let theta = pot.angle_fullscale_rad * f64::from(i) / 10_000.0;
            let code = pot.read(theta, &mut rng).code;
            assert!(code >= last);
            last = code;
            let err = (pot.angle_from_code(code) - theta).abs();
            assert!(err <= pot.angle_fullscale_rad / 4095.0);
        }
    }

    #[test]
    fn noisy_pot_stays_in_range() {
        let pot = PotModel { noise_sigma_v: 0.05, ..PotModel::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(pot.read(pot.angle_fullscale_rad, &mut rng).code <= 4095);
        }
    }

    #[test]
    fn transition_table() {
        let s = handle_command(&idle(), Command::Drive(40));
        assert_eq!(s.mode, Mode::Drive);
        assert_eq!(s.drive_duty_pct, 40.0);

        let hold = handle_command(&idle(), Command::SetJointAngle(4405));
        assert_eq!(hold.mode, Mode::HoldAngle);
        let stopped = handle_command(&hold, Command::Stop);
        assert_eq!(stopped.mode, Mode::Idle);
        assert_eq!(stopped.joint_duty_pct, 0.0);

        let e = handle_command(&s, Command::Estop);
        let e2 = handle_command(&e, Command::Drive(40));
        assert_eq!(e2.mode, Mode::Estop);
        assert_eq!((e2.drive_duty_pct, e2.roll_duty_pct, e2.joint_duty_pct), (0.0, 0.0, 0.0));
        assert_eq!(handle_command(&e2, Command::ResetEstop).mode, Mode::Idle);
    }

    #[test]
    fn joint_duty_capped() {
        let s = handle_command(&idle(), Command::SetJointDuty(80));
        assert_eq!(s.joint_duty_pct, 50.0);
        let peak = FirmwareState::new(2, true, PiGains::default());
        assert_eq!(handle_command(&peak, Command::SetJointDuty(80)).joint_duty_pct, 80.0);
    }

    #[test]
    fn malformed_frame_naks() {
        let bad = CanFrame::new(0x102, &[0x09]).unwrap();
        let s = handle_frame(&idle(), &bad);
        assert!(s.nak);
        assert_eq!(s.mode, Mode::Idle);
        let out_of_range = CanFrame::new(0x102, &[0x01, 0x7F]).unwrap();
        assert!(handle_frame(&idle(), &out_of_range).nak);
    }

    #[test]
    fn controller_at_rest() {
        let mut c = AngleController::new(PiGains::default());
        assert_eq!(c.step(0.0, 0.01, 50.0), 0.0);
        assert_eq!(c.integral(), 0.0);
    }

    #[test]
    fn controller_saturates() {
        let mut c = AngleController::new(PiGains::default());
        for _ in 0..1000 {
            assert_eq!(c.step(1.0, 0.01, 50.0), 50.0);
        }
        // anti-windup keeps the integral from growing without bound
        assert!(c.integral() <= 50.0);
        assert_eq!(c.step(-1.0, 0.01, 50.0), -50.0);
    }
}
