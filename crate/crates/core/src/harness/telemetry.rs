use std::fmt::Write as _;

use crate::firmware::Mode;

pub const CSV_HEADER: &str =
    "t_s,s_m,D_m,theta_mid_deg,joint_duty,drive_duty,est_torque_Nm,slip_margin_N,slip_flag,board_temp_C,mode";

/// Travel below which a commanded robot counts as stalled, m.
pub const STALL_DISTANCE_M: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRow {
    pub t_s: f64,
    pub s_m: f64,
    pub d_m: f64,
    pub theta_mid_deg: f64,
    pub joint_duty: f64,
    pub drive_duty: f64,
    pub est_torque_nm: f64,
    pub slip_margin_n: f64,
    pub slip: bool,
    pub board_temp_c: f64,
    pub mode: Mode,
}

impl TelemetryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.3},{:.6},{:.6},{:.3},{:.2},{:.2},{:.4},{:.4},{},{:.3},{}",
            self.t_s,
            self.s_m,
            self.d_m,
            self.theta_mid_deg,
            self.joint_duty,
            self.drive_duty,
            self.est_torque_nm,
            self.slip_margin_n,
            u8::from(self.slip),
            self.board_temp_c,
            self.mode.as_str()
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TelemetryLog {
    rows: Vec<TelemetryRow>,
}

impl TelemetryLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; rows must arrive in strictly increasing time.
    pub fn push(&mut self, row: TelemetryRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.t_s > last.t_s, "telemetry time must increase: {} after {}", row.t_s, last.t_s);
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TelemetryRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&TelemetryRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses a log written by [`TelemetryLog::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err("missing or wrong telemetry header".into());
        }
        let mut log = Self::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(format!("line {line_no}: expected 11 fields, got {}", f.len()));
            }
            let n = |k: usize| f[k].parse::<f64>().map_err(|_| format!("line {line_no}: bad number `{}`", f[k]));
            let row = TelemetryRow {
                t_s: n(0)?,
                s_m: n(1)?,
                d_m: n(2)?,
                theta_mid_deg: n(3)?,
                joint_duty: n(4)?,
                drive_duty: n(5)?,
                est_torque_nm: n(6)?,
                slip_margin_n: n(7)?,
                slip: match f[8] {
                    "0" => false,
                    "1" => true,
                    other => return Err(format!("line {line_no}: bad slip flag `{other}`")),
                },
                board_temp_c: n(9)?,
                mode: Mode::parse(f[10]).ok_or_else(|| format!("line {line_no}: bad mode `{}`", f[10]))?,
            };
            if log.last().is_some_and(|l| row.t_s <= l.t_s) {
                return Err(format!("line {line_no}: time does not increase"));
            }
            log.rows.push(row);
        }
        Ok(log)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.csv_line());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StallVerdict {
    /// Time of the row that completed the stalled window.
    pub t_s: f64,
    pub travel_m: f64,
}

/// Slip verdict over the trailing `window_s` of `rows`.
///
/// Fires when drive was commanded for every row of a fully covered window
/// and the robot moved less than 1 mm across it.
pub fn stall_detector(rows: &[TelemetryRow], window_s: f64) -> Option<StallVerdict> {
    let last = rows.last()?;
    let start_t = last.t_s - window_s;
    // newest row at or before the window start
    let first_idx = rows.iter().rposition(|r| r.t_s <= start_t + 1e-9)?;
    let window = &rows[first_idx..];
    if window.iter().any(|r| r.drive_duty == 0.0) {
        return None;
    }
    let travel = (last.s_m - window[0].s_m).abs();
    (travel < STALL_DISTANCE_M).then_some(StallVerdict { t_s: last.t_s, travel_m: travel })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MissionResult {
    Completed,
    SlippedOut,
    Overheated,
    Timeout,
}

impl MissionResult {
    pub fn exit_code(self) -> i32 {
        match self {
            MissionResult::Completed => 0,
            MissionResult::SlippedOut => 2,
            MissionResult::Overheated => 3,
            MissionResult::Timeout => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MissionResult::Completed => "completed",
            MissionResult::SlippedOut => "slipped_out",
            MissionResult::Overheated => "overheated",
            MissionResult::Timeout => "timeout",
        }
    }
}

/// What an offline checker needs besides the log itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyLimits {
    pub total_length_m: f64,
    pub soft_limit_c: f64,
    pub stall_window_s: f64,
    /// Stall verdicts end the mission (false for interactive sessions).
    pub stall_terminates: bool,
}

/// Recomputes the mission outcome from a finished log.
///
/// The simulation stops on the first terminal condition and writes a final
/// row at that instant, so only the last row and its trailing window matter.
pub fn classify_log(log: &TelemetryLog, limits: &ClassifyLimits) -> MissionResult {
    let Some(last) = log.last() else {
        return MissionResult::Timeout;
    };
    if last.board_temp_c >= limits.soft_limit_c {
        MissionResult::Overheated
    } else if last.s_m >= limits.total_length_m - 1e-6 {
        MissionResult::Completed
    } else if limits.stall_terminates && stall_detector(log.rows(), limits.stall_window_s).is_some() {
        MissionResult::SlippedOut
    } else {
        MissionResult::Timeout
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, s: f64, drive: f64) -> TelemetryRow {
        TelemetryRow {
            t_s: t,
            s_m: s,
            d_m: 0.075,
            theta_mid_deg: 44.0,
            joint_duty: 25.0,
            drive_duty: drive,
            est_torque_nm: 1.32,
            slip_margin_n: 0.0,
            slip: false,
            board_temp_c: 25.0,
            mode: Mode::Drive,
        }
    }

    fn series(n: usize, speed: f64, drive: f64) -> Vec<TelemetryRow> {
        (0..n).map(|i| row(i as f64 * 0.1, i as f64 * 0.1 * speed, drive)).collect()
    }

    #[test]
    fn advancing_robot_no_verdict() {
        assert!(stall_detector(&series(50, 0.088, 100.0), 2.0).is_none());
    }

    #[test]
    fn stalled_robot_verdict() {
        let v = stall_detector(&series(50, 0.0, 100.0), 2.0).unwrap();
        assert!((v.t_s - 4.9).abs() < 1e-12);
    }

    #[test]
    fn idle_robot_no_verdict() {
        assert!(stall_detector(&series(50, 0.0, 0.0), 2.0).is_none());
    }

    #[test]
    fn window_must_be_covered() {
        assert!(stall_detector(&series(15, 0.0, 100.0), 2.0).is_none());
        assert!(stall_detector(&series(21, 0.0, 100.0), 2.0).is_some());
    }

    #[test]
    fn csv_header_and_format() {
        let mut log = TelemetryLog::new();
        log.push(row(0.1, 0.0088, 100.0));
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "0.100,0.008800,0.075000,44.000,25.00,100.00,1.3200,0.0000,0,25.000,drive");
    }

    #[test]
    fn csv_reads_back() {
        let mut log = TelemetryLog::new();
        for r in series(5, 0.088, 100.0) {
            log.push(r);
        }
        let csv = log.to_csv();
        let back = TelemetryLog::from_csv(&csv).unwrap();
        assert_eq!(back.to_csv(), csv);
        assert!(TelemetryLog::from_csv("t,s\n").is_err());
    }

    #[test]
    #[should_panic]
    fn time_must_increase() {
        let mut log = TelemetryLog::new();
        log.push(row(0.1, 0.0, 0.0));
        log.push(row(0.1, 0.0, 0.0));
    }

    #[test]
    fn classify_priorities() {
        let limits =
            ClassifyLimits { total_length_m: 1.0, soft_limit_c: 80.0, stall_window_s: 2.0, stall_terminates: true };
        let mut log = TelemetryLog::new();
        for r in series(30, 0.0, 100.0) {
            log.push(r);
        }
        assert_eq!(classify_log(&log, &limits), MissionResult::SlippedOut);
        let no_stall = ClassifyLimits { stall_terminates: false, ..limits };
        assert_eq!(classify_log(&log, &no_stall), MissionResult::Timeout);
        let mut hot = row(3.1, 0.0, 100.0);
        hot.board_temp_c = 80.01;
        log.push(hot);
        assert_eq!(classify_log(&log, &limits), MissionResult::Overheated);
        assert_eq!(classify_log(&TelemetryLog::new(), &limits), MissionResult::Timeout);
    }
}
