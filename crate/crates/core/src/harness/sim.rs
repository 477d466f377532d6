//! Fixed-step simulation loop.
//!
//! Master clock 1 ms. Every 10 ms the boards consume received frames, read
//! the potentiometer and run their control step; every 100 ms each board
//! puts a telemetry frame on the bus and a log row is written. Scripted and
//! external commands enter through the same path: encoded per target node
//! and enqueued on the bus.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::actuation::{thermal_step, ThermalConstants, ThermalState, TorqueMap};
use crate::canbus::{
    encode_command, encode_telemetry, nodes, status, CanBus, CanFrame, Command, Delivered, Telemetry, COMMAND_BASE_ID,
    TELEMETRY_BASE_ID,
};
use crate::error::{ConfigError, ScenarioError};
use crate::firmware::{angle_controller_step, handle_frame, FirmwareState, Mode, PotModel};
use crate::geometry::PipeNetwork;
use crate::mechanics::{step_quasistatic, EnvironmentProfile, Evaluation, MotionState};
use crate::robot::RobotParams;

use super::scenario::{Scenario, TimedCommand};
use super::telemetry::{classify_log, stall_detector, ClassifyLimits, MissionResult, TelemetryLog, TelemetryRow};

pub const FIRMWARE_PERIOD_TICKS: u64 = 10;
pub const TELEMETRY_PERIOD_TICKS: u64 = 100;

/// Snapshot of everything the robot knows about itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub t_s: f64,
    pub s_m: f64,
    pub diameter_m: f64,
    pub theta_mid_rad: f64,
    pub theta_front_rad: f64,
    pub theta_rear_rad: f64,
    pub joint_duty_pct: f64,
    pub drive_duty_pct: f64,
    pub roll_duty_pct: f64,
    pub joint_torque_nm: f64,
    pub slip: bool,
    pub slip_margin_n: f64,
    pub board_temp_c: f64,
    pub roll_angle_rad: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub telemetry: Option<TelemetryRow>,
    pub finished: Option<MissionResult>,
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub result: MissionResult,
    pub log: TelemetryLog,
    pub frames: Vec<Delivered>,
    pub final_state: RobotState,
}

impl MissionOutcome {
    pub fn frame_log(&self, tick_s: f64) -> String {
        self.frames.iter().map(|d| d.log_line(tick_s) + "\n").collect()
    }
}

pub struct Simulation {
    scenario: Scenario,
    net: PipeNetwork,
    params: RobotParams,
    env: EnvironmentProfile,
    map: TorqueMap,
    thermal_consts: ThermalConstants,
    pot: PotModel,
    rng: ChaCha8Rng,
    bus: CanBus,
    boards: Vec<FirmwareState>,
    inboxes: Vec<Vec<CanFrame>>,
    motion: MotionState,
    eval: Evaluation,
    thermal: ThermalState,
    roll_angle_rad: f64,
    tick: u64,
    mission: VecDeque<TimedCommand>,
    external: VecDeque<Command>,
    log: TelemetryLog,
    frames: Vec<Delivered>,
    record_frames: bool,
    result: Option<MissionResult>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let net = scenario.network()?;
        let params = scenario.robot;
        let env = scenario.env.clone();
        let motion = MotionState { peak_mode: scenario.peak_mode, ..MotionState::at_entry() };
        let eval = crate::mechanics::evaluate(&motion, &net, &env, &params)?;
        let boards = nodes::ALL.iter().map(|&n| FirmwareState::new(n, scenario.peak_mode, scenario.gains)).collect();
        Ok(Self {
            map: TorqueMap::new(scenario.torque_mode),
            thermal_consts: scenario.thermal,
            pot: scenario.pot,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            bus: CanBus::new(scenario.bus_latency_ticks, scenario.bus_loss_probability),
            boards,
            inboxes: vec![Vec::new(); nodes::ALL.len()],
            motion,
            eval,
            thermal: ThermalState::at_ambient(&scenario.thermal),
            roll_angle_rad: 0.0,
            tick: 0,
            mission: scenario.mission.iter().copied().collect(),
            external: VecDeque::new(),
            log: TelemetryLog::new(),
            frames: Vec::new(),
            record_frames: true,
            result: None,
            net,
            params,
            env,
            scenario,
        })
    }

    /// Turns off frame recording for long interactive sessions.
    pub fn record_frames(&mut self, on: bool) {
        self.record_frames = on;
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn network(&self) -> &PipeNetwork {
        &self.net
    }

    pub fn time_s(&self) -> f64 {
        self.tick as f64 * self.scenario.dt_s
    }

    pub fn result(&self) -> Option<MissionResult> {
        self.result
    }

    pub fn log(&self) -> &TelemetryLog {
        &self.log
    }

    pub fn frames(&self) -> &[Delivered] {
        &self.frames
    }

    pub fn boards(&self) -> &[FirmwareState] {
        &self.boards
    }

    pub fn classify_limits(&self) -> ClassifyLimits {
        ClassifyLimits {
            total_length_m: self.net.total_length(),
            soft_limit_c: self.thermal_consts.soft_limit_c,
            stall_window_s: self.scenario.stall_window_s,
            stall_terminates: !self.scenario.interactive,
        }
    }

    /// Queues a command from outside the script. It goes on the bus at the
    /// start of the next step, exactly like a scripted command due then.
    pub fn submit(&mut self, command: Command) {
        self.external.push_back(command);
    }

    fn joint_board(&self) -> &FirmwareState {
        &self.boards[usize::from(nodes::J2_JOINT)]
    }

    fn mean_duty(&self, which: &[u8], f: impl Fn(&FirmwareState) -> f64) -> f64 {
        which.iter().map(|&n| f(&self.boards[usize::from(n)])).sum::<f64>() / which.len() as f64
    }

    fn joint_torque(&self) -> f64 {
        let duty = self.joint_board().joint_duty_pct.clamp(0.0, 100.0);
        self.map.duty_to_torque(duty).expect("duty clamped to [0, 100]")
    }

    pub fn state(&self) -> RobotState {
        let cfg = &self.eval.config;
        let jb = self.joint_board();
        RobotState {
            t_s: self.time_s(),
            s_m: self.motion.s_m,
            diameter_m: cfg.clearance_m + 2.0 * self.params.wheel_radius_m,
            theta_mid_rad: cfg.theta_mid_rad,
            theta_front_rad: cfg.theta_front_rad,
            theta_rear_rad: cfg.theta_rear_rad,
            joint_duty_pct: jb.joint_duty_pct,
            drive_duty_pct: self.motion.drive_duty_pct,
            roll_duty_pct: self.mean_duty(&nodes::ROLL, |b| b.roll_duty_pct),
            joint_torque_nm: self.motion.joint_torque_nm,
            slip: self.motion.slip,
            slip_margin_n: self.motion.slip_margin_n,
            board_temp_c: self.thermal.board_temp_c,
            roll_angle_rad: self.roll_angle_rad,
            mode: jb.mode,
        }
    }

    fn dispatch(&mut self, command: Command) {
        for &node in command.targets() {
            match encode_command(&command, node) {
                Ok(frame) => self.bus.enqueue(frame),
                Err(e) => log::warn!("dropping unencodable command {command:?}: {e}"),
            }
        }
    }

    fn telemetry_row(&self) -> TelemetryRow {
        let st = self.state();
        let row = TelemetryRow {
            t_s: st.t_s,
            s_m: st.s_m,
            d_m: st.diameter_m,
            theta_mid_deg: st.theta_mid_rad.to_degrees(),
            joint_duty: st.joint_duty_pct,
            drive_duty: st.drive_duty_pct,
            est_torque_nm: st.joint_torque_nm,
            slip_margin_n: st.slip_margin_n,
            slip: st.slip,
            board_temp_c: st.board_temp_c,
            mode: st.mode,
        };
        // quantize to the written precision so in-memory and on-disk logs agree
        TelemetryLog::from_csv(&format!("{}\n{}", super::telemetry::CSV_HEADER, row.csv_line()))
            .expect("row formatting round-trips")
            .rows()[0]
    }

    fn emit_board_telemetry(&mut self) {
        let angle_cdeg = (self.eval.config.theta_mid_rad.to_degrees() * 100.0).round() as i16;
        let torque_mnm = (self.motion.joint_torque_nm * 1000.0).round() as i16;
        let temp = (self.thermal.board_temp_c * 10.0).round() as i16;
        for i in 0..self.boards.len() {
            let b = &self.boards[i];
            let mut flags = 0;
            if self.motion.slip {
                flags |= status::SLIP;
            }
            if b.mode == Mode::Estop {
                flags |= status::ESTOP;
            }
            if b.nak {
                flags |= status::NAK;
            }
            if b.peak_mode {
                flags |= status::PEAK_MODE;
            }
            let t = Telemetry {
                node: b.node,
                angle_centideg: angle_cdeg,
                est_torque_mnm: torque_mnm,
                board_temp_deci_c: temp,
                flags,
            };
            if let Ok(frame) = encode_telemetry(&t) {
                self.bus.enqueue(frame);
            }
            self.boards[i].nak = false;
        }
    }

    fn firmware_tick(&mut self) -> Result<(), ConfigError> {
        let dt = self.scenario.dt_s * FIRMWARE_PERIOD_TICKS as f64;
        let measured = self.eval.config.theta_mid_rad;
        for i in 0..self.boards.len() {
            let mut board = self.boards[i];
            for frame in self.inboxes[i].drain(..) {
                board = handle_frame(&board, &frame);
            }
            if board.node == nodes::J2_JOINT {
                let reading = self.pot.read(measured, &mut self.rng);
                board.last_adc_code = reading.code;
                let angle = self.pot.angle_from_code(reading.code);
                angle_controller_step(&mut board, angle, dt);
            }
            self.boards[i] = board;
        }
        let duty = self.joint_board().joint_duty_pct.abs();
        self.thermal = thermal_step(&self.thermal, duty, dt, &self.thermal_consts);
        Ok(())
    }

    fn finish(&mut self, result: MissionResult, report: &mut StepReport) {
        if self.log.last().is_none_or(|r| r.t_s < self.time_s()) {
            let row = self.telemetry_row();
            self.log.push(row);
            report.telemetry = Some(row);
        }
        self.result = Some(result);
        report.finished = Some(result);
    }

    /// Advances the simulation by one master tick.
    pub fn step(&mut self) -> Result<StepReport, ConfigError> {
        let mut report = StepReport::default();
        if let Some(r) = self.result {
            report.finished = Some(r);
            return Ok(report);
        }
        let now = self.time_s();
        while self.mission.front().is_some_and(|c| c.t_s <= now + 1e-12) {
            let tc = self.mission.pop_front().expect("front checked");
            self.dispatch(tc.command);
        }
        while let Some(cmd) = self.external.pop_front() {
            self.dispatch(cmd);
        }

        for d in self.bus.step(1, &mut self.rng) {
            if let Some(n) = node_slot(&d) {
                self.inboxes[n].push(d.frame);
            }
            if self.record_frames {
                self.frames.push(d);
            }
        }
        self.tick += 1;

        if self.tick.is_multiple_of(FIRMWARE_PERIOD_TICKS) {
            self.firmware_tick()?;
        }

        let dt = self.scenario.dt_s;
        let estop = self.joint_board().mode == Mode::Estop;
        self.motion.drive_duty_pct = if estop { 0.0 } else { self.mean_duty(&nodes::DRIVE, |b| b.drive_duty_pct) };
        self.motion.joint_torque_nm = self.joint_torque();
        let (next, eval) = step_quasistatic(&self.motion, &self.net, &self.env, &self.params, dt)?;
        self.motion = next;
        self.eval = eval;
        let roll = self.mean_duty(&nodes::ROLL, |b| b.roll_duty_pct);
        self.roll_angle_rad += self.scenario.roll_rate_rad_s * roll / 100.0 * dt;

        if self.tick.is_multiple_of(TELEMETRY_PERIOD_TICKS) {
            self.emit_board_telemetry();
            let row = self.telemetry_row();
            self.log.push(row);
            report.telemetry = Some(row);
        }

        if self.thermal.failed {
            self.finish(MissionResult::Overheated, &mut report);
        } else if self.motion.arrived {
            self.finish(MissionResult::Completed, &mut report);
        } else if !self.scenario.interactive
            && report.telemetry.is_some()
            && stall_detector(self.log.rows(), self.scenario.stall_window_s).is_some()
        {
            self.finish(MissionResult::SlippedOut, &mut report);
        } else if self.time_s() >= self.scenario.max_sim_time_s - 1e-12 {
            self.finish(MissionResult::Timeout, &mut report);
        }
        Ok(report)
    }

    /// Runs to a terminal condition.
    pub fn run(mut self) -> Result<MissionOutcome, ConfigError> {
        loop {
            if let Some(result) = self.step()?.finished {
                debug_assert_eq!(classify_log(&self.log, &self.classify_limits()), result);
                let final_state = self.state();
                return Ok(MissionOutcome { result, log: self.log, frames: self.frames, final_state });
            }
        }
    }
}

/// Inbox index for a delivered command frame, if it addresses a known board.
fn node_slot(d: &Delivered) -> Option<usize> {
    let id = d.frame.id();
    if (COMMAND_BASE_ID..TELEMETRY_BASE_ID).contains(&id) {
        let n = usize::from(id - COMMAND_BASE_ID);
        (n < nodes::ALL.len()).then_some(n)
    } else {
        None
    }
}

/// Loads, runs and classifies a scenario.
pub fn run_scenario(scenario: Scenario) -> Result<MissionOutcome, ScenarioError> {
    Ok(Simulation::new(scenario)?.run()?)
}
