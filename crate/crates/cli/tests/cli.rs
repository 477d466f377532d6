use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_sim");
const HEADER: &str =
    "t_s,s_m,D_m,theta_mid_deg,joint_duty,drive_duty,est_torque_Nm,slip_margin_N,slip_flag,board_temp_C,mode";

fn sim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pipebot-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

#[test]
fn run_exit_codes_follow_mission_result() {
    let log = tmp("v3_25.csv");
    let frames = tmp("v3_25.frames");
    let out = sim(&[
        "run",
        "--scenario",
        "vertical_3in_course",
        "--seed",
        "1",
        "--out",
        log.to_str().unwrap(),
        "--joint-duty",
        "25",
        "--frames",
        frames.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&log).unwrap();
    assert_eq!(csv.lines().next(), Some(HEADER));
    assert!(csv.lines().count() > 10);
    assert!(std::fs::read_to_string(&frames).unwrap().lines().count() > 0);

    let out = sim(&[
        "run",
        "--scenario",
        "vertical_3in_course",
        "--out",
        tmp("v3_10.csv").to_str().unwrap(),
        "--joint-duty",
        "10",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("slipped_out"));
}

#[test]
fn overheat_exits_3() {
    let out = sim(&[
        "run",
        "--scenario",
        "field_sewage_endurance",
        "--out",
        tmp("endurance.csv").to_str().unwrap(),
        "--joint-duty",
        "50",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn scenario_file_with_short_clock_times_out() {
    let path = tmp("idle.scn");
    std::fs::write(&path, "# idle robot\n[pipe]\nstraight 1.0 0.075 1\n[mission]\nmax_time 2\n").unwrap();
    let out = sim(&["run", "--scenario", path.to_str().unwrap(), "--out", tmp("idle.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn same_seed_same_bytes() {
    let a = tmp("det_a.csv");
    let b = tmp("det_b.csv");
    for p in [&a, &b] {
        sim(&["run", "--scenario", "increaser_course", "--seed", "9", "--out", p.to_str().unwrap()]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn calibrate_writes_samples_and_ten_digit_fit() {
    let samples = tmp("samples.csv");
    let fit = tmp("fit.txt");
    let out = sim(&[
        "calibrate",
        "--seed",
        "3",
        "--out",
        samples.to_str().unwrap(),
        "--fit",
        fit.to_str().unwrap(),
        "--noiseless",
    ]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&samples).unwrap();
    assert_eq!(csv.lines().next(), Some("t_s,duty_pct,force_N,torque_Nm"));
    let report = std::fs::read_to_string(&fit).unwrap();
    let coeffs: Vec<f64> = (0..5)
        .map(|i| {
            let line = report.lines().find(|l| l.starts_with(&format!("a{i} = "))).unwrap();
            let mantissa = line[5..].split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.replace('.', "").len(), 10, "{line}");
            line[5..].parse().unwrap()
        })
        .collect();
    // noiseless sweep of the rig quartic gives the quartic back
    let truth = [-0.1178, 4.7894e-2, 7.6041e-4, -1.6902e-5, -7.7385e-8];
    for (c, t) in coeffs.iter().zip(truth) {
        assert!(((c - t) / t).abs() < 1e-9, "{c} vs {t}");
    }
}

#[test]
fn torquemap_csv() {
    let out = sim(&["torquemap", "--mode", "anchors", "--csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "duty_pct,torque_Nm");
    assert_eq!(lines.len(), 502);
    assert_eq!(lines[1 + 125], "25.0,1.320000");
    assert_eq!(lines[1 + 250], "50.0,2.550000");
}

#[test]
fn params_show() {
    let out = sim(&["params", "--show"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("link_m = 0.12\n"));
    assert!(text.contains("mass_kg = 1.57\n"));
    let out = sim(&["params", "--show", "--scenario", "no_such_course"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_errors_do_not_look_like_mission_results() {
    let out = sim(&["run", "--scenario"]);
    assert_eq!(code(&out), 64);
    let out = sim(&["torquemap", "--mode", "cubic"]);
    assert_eq!(code(&out), 64);
    assert_eq!(code(&sim(&["--help"])), 0);
}

#[test]
fn serve_reports_busy_port() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = sim(&["serve", "--scenario", "vertical_3in_course", "--port", &port]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot listen"));
}

#[cfg(unix)]
#[test]
fn serve_stops_on_interrupt() {
    let mut child = Command::new(BIN)
        .args(["serve", "--scenario", "field_sewage", "--port", "0", "--realtime"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    assert!(line.starts_with("serving on ws://127.0.0.1:"), "{line}");
    assert!(line.contains("/ws"));
    let status = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let mut rest = String::new();
    std::io::Read::read_to_string(&mut stderr, &mut rest).unwrap();
    assert_eq!(child.wait().unwrap().code(), Some(0), "{rest}");
    assert!(rest.contains("stopped"));
}
