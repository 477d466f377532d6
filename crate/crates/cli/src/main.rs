use std::fmt::Write as _;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pipebot_core::actuation::{eval_poly, TorqueMap, TorqueMapMode, RIG_QUARTIC};
use pipebot_core::calibration::{fit_quartic, simulate_rig, StepwiseNoise, SweepProtocol, DEFAULT_LEVER_M};
use pipebot_core::harness::{run_scenario, Scenario, Simulation, MASTER_DT_S};
use pipebot_gateway::{ServeOptions, WS_PATH};

/// Exit status for command-line usage errors; 2..4 are mission results.
const EXIT_USAGE: u8 = 64;
const EXIT_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "sim", version, about = "In-pipe robot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scripted mission and write the telemetry CSV.
    ///
    /// Exit status: 0 completed, 2 slipped_out, 3 overheated, 4 timeout.
    Run {
        /// Shipped scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Replaces every joint-duty command in the mission with this value, %.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=100))]
        joint_duty: Option<u8>,
        /// Also write the delivered bus frames, one per line.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Simulate the torque calibration sweep and fit the quartic.
    Calibrate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample CSV.
        #[arg(long)]
        out: PathBuf,
        /// Fit report.
        #[arg(long)]
        fit: PathBuf,
        /// Torque the rig measures.
        #[arg(long, value_enum, default_value_t = Truth::Poly)]
        truth: Truth,
        /// Disable the stepwise measurement noise.
        #[arg(long)]
        noiseless: bool,
    },
    /// Print the duty-to-torque table at 0.2 % resolution.
    Torquemap {
        #[arg(long, value_enum, default_value_t = Mode::Anchors)]
        mode: Mode,
        /// Emit CSV (default is an aligned table).
        #[arg(long)]
        csv: bool,
    },
    /// Expose a live simulation to operator clients over a websocket.
    Serve {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        seed: Option<u64>,
        /// Pace the simulation at wall-clock speed (otherwise it free-runs).
        #[arg(long)]
        realtime: bool,
        /// Pace at this multiple of wall-clock speed.
        #[arg(long, conflicts_with = "realtime")]
        speed: Option<f64>,
    },
    /// Print robot, thermal and control parameters.
    Params {
        /// Show the effective values (the only mode; kept for scripts).
        #[arg(long)]
        show: bool,
        /// Apply this scenario's overrides first.
        #[arg(long)]
        scenario: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Anchors,
    Poly,
}

impl From<Mode> for TorqueMapMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Anchors => TorqueMapMode::Anchors,
            Mode::Poly => TorqueMapMode::Poly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Truth {
    /// The rig quartic.
    Poly,
    /// The anchor-corrected map.
    Anchors,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap's own status 2 would read as "slipped_out"
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Run { scenario, seed, out, joint_duty, frames } => run(&scenario, seed, &out, joint_duty, frames),
        Cmd::Calibrate { seed, out, fit, truth, noiseless } => calibrate(seed, &out, &fit, truth, noiseless),
        Cmd::Torquemap { mode, csv } => {
            print!("{}", torquemap(mode, csv));
            Ok(0)
        }
        Cmd::Serve { scenario, port, host, seed, realtime, speed } => {
            let speed = if realtime { Some(1.0) } else { speed };
            serve(&scenario, SocketAddr::new(host, port), seed, speed)
        }
        Cmd::Params { show: _, scenario } => {
            let sc = match scenario {
                Some(s) => load(&s)?,
                None => Scenario::default(),
            };
            print!("{}", params(&sc));
            Ok(0)
        }
    }
}

fn load(name_or_path: &str) -> Result<Scenario> {
    Scenario::load(name_or_path).with_context(|| format!("loading scenario `{name_or_path}`"))
}

fn run(
    scenario: &str,
    seed: Option<u64>,
    out: &PathBuf,
    joint_duty: Option<u8>,
    frames: Option<PathBuf>,
) -> Result<u8> {
    let mut sc = load(scenario)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(d) = joint_duty {
        sc = sc.with_joint_duty(d);
    }
    if sc.interactive {
        log::info!("scenario is interactive; running its script only");
        sc.interactive = false;
    }
    let outcome = run_scenario(sc)?;
    fs::write(out, outcome.log.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = frames {
        fs::write(&path, outcome.frame_log(MASTER_DT_S)).with_context(|| format!("writing {}", path.display()))?;
    }
    let last = outcome.final_state;
    eprintln!("{} at t={:.3} s, s={:.4} m", outcome.result.as_str(), last.t_s, last.s_m);
    Ok(u8::try_from(outcome.result.exit_code()).expect("mission exit codes are small"))
}

fn calibrate(seed: u64, out: &PathBuf, fit_path: &PathBuf, truth: Truth, noiseless: bool) -> Result<u8> {
    let proto = SweepProtocol::default();
    let noise = StepwiseNoise::default();
    let noise = (!noiseless).then_some(&noise);
    let samples = match truth {
        Truth::Poly => simulate_rig(|r| eval_poly(&RIG_QUARTIC, r), &proto, noise, DEFAULT_LEVER_M, seed)?,
        Truth::Anchors => {
            let map = TorqueMap::new(TorqueMapMode::Anchors);
            simulate_rig(
                |r| map.duty_to_torque(r).expect("sweep stays in [0, 100]"),
                &proto,
                noise,
                DEFAULT_LEVER_M,
                seed,
            )?
        }
    };
    let mut csv = String::from("t_s,duty_pct,force_N,torque_Nm\n");
    for s in &samples {
        let _ = writeln!(csv, "{:.3},{:.1},{:.6},{:.6}", s.t_s, s.duty_pct, s.force_n, s.torque_nm);
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;

    let fit = fit_quartic(&samples)?;
    let mut report = String::new();
    for (i, a) in fit.coeffs.iter().enumerate() {
        let _ = writeln!(report, "a{i} = {a:.9e}");
    }
    let _ = writeln!(report, "samples = {}", fit.samples);
    let _ = writeln!(report, "distinct_duties = {}", fit.distinct_duties);
    let _ = writeln!(report, "rmse_Nm = {:.4e}", fit.rmse_nm);
    let _ = writeln!(report, "max_abs_residual_Nm = {:.4e}", fit.max_abs_residual_nm);
    let _ = writeln!(report, "condition_number = {:.3e}", fit.condition_number);
    fs::write(fit_path, &report).with_context(|| format!("writing {}", fit_path.display()))?;
    print!("{report}");
    Ok(0)
}

fn torquemap(mode: Mode, csv: bool) -> String {
    let map = TorqueMap::new(mode.into());
    let mut s = String::new();
    if csv {
        s.push_str("duty_pct,torque_Nm\n");
    } else {
        s.push_str(" duty %   torque Nm\n");
    }
    for (duty, tau) in map.table() {
        if csv {
            let _ = writeln!(s, "{duty:.1},{tau:.6}");
        } else {
            let _ = writeln!(s, "{duty:7.1}  {tau:10.6}");
        }
    }
    s
}

fn serve(scenario: &str, addr: SocketAddr, seed: Option<u64>, speed: Option<f64>) -> Result<u8> {
    let mut sc = load(scenario)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.interactive = true;
    let sim = Simulation::new(sc)?;
    let rt = tokio::runtime::Runtime::new()?;
    let result = rt.block_on(async move {
        let listener = pipebot_gateway::bind(addr).await?;
        let shutdown = interrupted()?;
        eprintln!("serving on ws://{}{WS_PATH} (Ctrl-C to stop)", listener.local_addr()?);
        pipebot_gateway::serve(listener, sim, ServeOptions { speed }, shutdown).await
    })?;
    match result {
        Some(r) => {
            eprintln!("mission ended: {}", r.as_str());
            Ok(u8::try_from(r.exit_code()).expect("mission exit codes are small"))
        }
        None => {
            eprintln!("stopped");
            Ok(0)
        }
    }
}

/// Resolves on Ctrl-C. The handler is installed before this returns, so an
/// interrupt right after the "serving" line is not lost.
#[cfg(unix)]
fn interrupted() -> std::io::Result<impl std::future::Future<Output = ()> + Send + 'static> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut int = signal(SignalKind::interrupt())?;
    let mut term = signal(SignalKind::terminate())?;
    Ok(async move {
        tokio::select! {
            _ = int.recv() => {}
            _ = term.recv() => {}
        }
    })
}

#[cfg(not(unix))]
fn interrupted() -> std::io::Result<impl std::future::Future<Output = ()> + Send + 'static> {
    Ok(async {
        let _ = tokio::signal::ctrl_c().await;
    })
}

fn params(sc: &Scenario) -> String {
    let r = &sc.robot;
    let mode = match sc.torque_mode {
        TorqueMapMode::Anchors => "anchors",
        TorqueMapMode::Poly => "poly",
    };
    let rows: [(&str, String); 23] = [
        ("link_m", r.link_joint_to_joint_m.to_string()),
        ("end_link_m", r.end_link_m.to_string()),
        ("wheel_radius_m", r.wheel_radius_m.to_string()),
        ("mass_kg", r.total_mass_kg.to_string()),
        ("total_length_m", r.total_extended_length_m.to_string()),
        ("spring_nm_per_rad", r.spring_stiffness_nm_per_rad.to_string()),
        ("max_speed_m_s", r.max_speed_m_s.to_string()),
        ("max_cont_traction_n", r.max_cont_traction_n.to_string()),
        ("peak_traction_n", r.peak_traction_n.to_string()),
        ("peak_mode", sc.peak_mode.to_string()),
        ("torque_map", mode.to_string()),
        ("ambient_c", sc.thermal.ambient_c.to_string()),
        ("soft_limit_c", sc.thermal.soft_limit_c.to_string()),
        ("thermal_gain_c_per_duty2", sc.thermal.gain_c_per_duty2.to_string()),
        ("thermal_time_constant_s", format!("{:.4}", sc.thermal.time_constant_s)),
        ("pot_noise_v", sc.pot.noise_sigma_v.to_string()),
        ("pot_fullscale_deg", format!("{:.4}", sc.pot.angle_fullscale_rad.to_degrees())),
        ("kp", sc.gains.kp.to_string()),
        ("ki", sc.gains.ki.to_string()),
        ("roll_rate_rad_s", sc.roll_rate_rad_s.to_string()),
        // fixed, not overridable
        ("# max_cont_joint_torque_nm", r.max_cont_joint_torque_nm.to_string()),
        ("# peak_joint_torque_nm", r.peak_joint_torque_nm.to_string()),
        ("# dt_s", sc.dt_s.to_string()),
    ];
    let mut s = format!("# scenario: {}\n[robot]\n", sc.name);
    for (k, v) in rows {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_output_parses_back_as_robot_section() {
        let shown = params(&Scenario::default());
        let text = format!("{shown}\n[pipe]\nstraight 1.0 0.075 1\n");
        let sc = Scenario::parse("echo", &text).unwrap();
        let d = Scenario::default();
        assert_eq!(sc.robot, d.robot);
        assert_eq!(sc.gains, d.gains);
        assert!((sc.thermal.time_constant_s - d.thermal.time_constant_s).abs() < 1e-3);
    }

    #[test]
    fn torquemap_has_501_rows() {
        let csv = torquemap(Mode::Poly, true);
        assert_eq!(csv.lines().count(), 502);
        assert_eq!(csv.lines().nth(51).unwrap(), "10.0,0.419505");
    }
}
