use std::collections::HashSet;

use pipebot_core::canbus::{encode_command, Command};
use pipebot_core::firmware::{
    angle_controller_step, emergency_stop, handle_command, handle_frame, FirmwareState, Mode, PiGains, PotModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
enum Event {
    Cmd(Command),
    /// Control tick with the joint reading this angle, degrees.
    Tick(f64),
    Emo,
}

fn alphabet() -> Vec<Event> {
    let mut v: Vec<Event> = [
        Command::Stop,
        Command::Drive(40),
        Command::Drive(-100),
        Command::Drive(101),
        Command::Roll(50),
        Command::Roll(-128),
        Command::SetJointAngle(4405),
        Command::SetJointAngle(-500),
        Command::SetJointDuty(25),
        Command::SetJointDuty(50),
        Command::SetJointDuty(75),
        Command::SetJointDuty(100),
        Command::SetJointDuty(200),
        Command::Estop,
        Command::ResetEstop,
    ]
    .into_iter()
    .map(Event::Cmd)
    .collect();
    v.extend([Event::Tick(0.0), Event::Tick(44.0), Event::Tick(140.0), Event::Emo]);
    v
}

fn apply(fs: &FirmwareState, e: Event) -> FirmwareState {
    match e {
        Event::Cmd(c) => handle_command(fs, c),
        Event::Tick(deg) => {
            let mut next = *fs;
            angle_controller_step(&mut next, deg.to_radians(), 0.01);
            next
        }
        Event::Emo => emergency_stop(fs),
    }
}

fn check(fs: &FirmwareState) {
    if fs.mode == Mode::Estop {
        assert_eq!((fs.drive_duty_pct, fs.roll_duty_pct, fs.joint_duty_pct), (0.0, 0.0, 0.0), "{fs:?}");
    }
    assert!(fs.joint_duty_pct.abs() <= 100.0, "{fs:?}");
    if !fs.peak_mode {
        assert!(fs.joint_duty_pct.abs() <= 50.0, "{fs:?}");
    }
}

/// Every state reachable within `depth` events, explored breadth first.
fn explore(peak_mode: bool, depth: usize) -> usize {
    let events = alphabet();
    let start = FirmwareState::new(2, peak_mode, PiGains::default());
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(format!("{start:?}"));
    let mut frontier = vec![start];
    for _ in 0..depth {
        let mut next = Vec::new();
        for fs in &frontier {
            for &e in &events {
                let s = apply(fs, e);
                check(&s);
                if fs.mode == Mode::Estop && !matches!(e, Event::Cmd(Command::ResetEstop)) {
                    assert_eq!(s.mode, Mode::Estop, "estop left via {e:?}");
                }
                if seen.insert(format!("{s:?}")) {
                    next.push(s);
                }
            }
        }
        frontier = next;
    }
    seen.len()
}

#[test]
fn estop_zeroes_outputs_in_every_reachable_state() {
    let continuous = explore(false, 5);
    let peak = explore(true, 5);
    assert!(continuous > 400 && peak > continuous, "{continuous} {peak}");
}

#[test]
fn transition_examples() {
    let idle = FirmwareState::new(2, false, PiGains::default());
    let driving = handle_command(&idle, Command::Drive(40));
    assert_eq!((driving.mode, driving.drive_duty_pct), (Mode::Drive, 40.0));

    let stopped = handle_command(&emergency_stop(&driving), Command::Drive(40));
    assert_eq!((stopped.mode, stopped.drive_duty_pct), (Mode::Estop, 0.0));

    let mut holding = handle_command(&idle, Command::SetJointAngle(4405));
    angle_controller_step(&mut holding, 0.0, 0.01);
    assert!(holding.joint_duty_pct > 0.0);
    let idle_again = handle_command(&holding, Command::Stop);
    assert_eq!((idle_again.mode, idle_again.joint_duty_pct), (Mode::Idle, 0.0));
}

#[test]
fn malformed_frame_sets_nak() {
    let idle = FirmwareState::new(1, false, PiGains::default());
    let good = encode_command(&Command::Drive(10), 1).unwrap();
    let mut payload = good.payload().to_vec();
    payload.push(0);
    let bad = pipebot_core::canbus::CanFrame::new(good.id(), &payload).unwrap();
    let after = handle_frame(&idle, &bad);
    assert!(after.nak);
    assert_eq!(after.mode, Mode::Idle);
    assert_eq!(handle_frame(&idle, &good).drive_duty_pct, 10.0);
}

#[test]
fn peak_mode_lifts_cap() {
    let normal = FirmwareState::new(2, false, PiGains::default());
    let peak = FirmwareState::new(2, true, PiGains::default());
    assert_eq!(handle_command(&normal, Command::SetJointDuty(80)).joint_duty_pct, 50.0);
    assert_eq!(handle_command(&peak, Command::SetJointDuty(80)).joint_duty_pct, 80.0);
}

/// Closed loop against a test plant whose joint turns at a rate proportional
/// to duty (2 rad/s at full duty), read back through the quantizing pot.
#[test]
fn angle_loop_settles_within_three_seconds() {
    let pot = PotModel { noise_sigma_v: 0.002, ..PotModel::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (start_deg, target_cdeg) in [(44.0, 6000i16), (71.4, 4405), (30.0, 6000), (90.0, 6000), (44.0, 4405)] {
        let mut fs =
            handle_command(&FirmwareState::new(2, false, PiGains::default()), Command::SetJointAngle(target_cdeg));
        let target = (f64::from(target_cdeg) / 100.0).to_radians();
        let mut theta = f64::to_radians(start_deg);
        let dt = 0.01;
        let mut settled_at = None;
        for k in 1..=600 {
            let code = pot.read(theta, &mut rng).code;
            let duty = angle_controller_step(&mut fs, pot.angle_from_code(code), dt);
            theta += 2.0 * duty / 100.0 * dt;
            let inside = (theta - target).abs() < 2f64.to_radians();
            match (inside, settled_at) {
                (true, None) => settled_at = Some(k as f64 * dt),
                (false, Some(_)) => settled_at = None,
                _ => {}
            }
        }
        let t = settled_at.expect("loop never settled");
        assert!(t <= 3.0, "{start_deg} -> {target_cdeg}: settled at {t} s");
    }
}
