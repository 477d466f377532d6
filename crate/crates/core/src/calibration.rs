//! Simulated torque-calibration rig and quartic least-squares fit.
//!
//! The rig holds the robot straight with a force sensor under a drive wheel;
//! joint torque follows from the lever relation `tau = F L / 2` with `L` the
//! distance between the outer drive wheels. Duty is swept 0 -> 100 -> 0 in
//! 0.2 % steps while the sensor is sampled every 50 ms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actuation::eval_poly;
use crate::error::CalibrationError;

/// Outer drive-wheel separation of the rig, m.
pub const DEFAULT_LEVER_M: f64 = 0.24;

pub fn tau_from_force(force_n: f64, lever_m: f64) -> Result<f64, CalibrationError> {
    if !(lever_m > 0.0) {
        return Err(CalibrationError::NonPositiveLever(lever_m));
    }
    Ok(force_n * lever_m / 2.0)
}

pub fn force_from_tau(tau_nm: f64, lever_m: f64) -> Result<f64, CalibrationError> {
    if !(lever_m > 0.0) {
        return Err(CalibrationError::NonPositiveLever(lever_m));
    }
    Ok(2.0 * tau_nm / lever_m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub t_s: f64,
    pub duty_pct: f64,
    pub force_n: f64,
    pub torque_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepProtocol {
    pub duty_step_pct: f64,
    pub repeats: usize,
    pub sample_period_s: f64,
    /// Sensor samples taken while each duty level is held.
    pub samples_per_step: usize,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self { duty_step_pct: 0.2, repeats: 2, sample_period_s: 0.05, samples_per_step: 2 }
    }
}

impl SweepProtocol {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !(self.duty_step_pct > 0.0 && self.duty_step_pct <= 100.0) {
            return Err(CalibrationError::InvalidProtocol("duty step must lie in (0, 100]"));
        }
        if self.repeats == 0 {
            return Err(CalibrationError::InvalidProtocol("at least one repeat"));
        }
        if !(self.sample_period_s > 0.0) {
            return Err(CalibrationError::InvalidProtocol("sample period must be positive"));
        }
        if self.samples_per_step == 0 {
            return Err(CalibrationError::InvalidProtocol("at least one sample per step"));
        }
        Ok(())
    }

    /// Duty levels of one up-and-down pass; 100 % is visited once.
    pub fn levels(&self) -> Vec<f64> {
        let n = (100.0 / self.duty_step_pct).round() as usize;
        let up = (0..=n).map(|i| (i as f64 * self.duty_step_pct).min(100.0));
        let down = (0..n).rev().map(|i| i as f64 * self.duty_step_pct);
        up.chain(down).collect()
    }

    pub fn samples_per_pass(&self) -> usize {
        self.levels().len() * self.samples_per_step
    }
}

/// Gear-plateau quantization plus uniform sensor noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepwiseNoise {
    pub step_height_nm: f64,
    /// Half-width of the zero-mean uniform sensor noise, Nm.
    pub sensor_amplitude_nm: f64,
}

impl Default for StepwiseNoise {
    fn default() -> Self {
        Self { step_height_nm: 0.08, sensor_amplitude_nm: 0.01 }
    }
}

impl StepwiseNoise {
    fn apply(&self, tau: f64, rng: &mut ChaCha8Rng) -> f64 {
        let plateau =
            if self.step_height_nm > 0.0 { (tau / self.step_height_nm).floor() * self.step_height_nm } else { tau };
        let jitter = if self.sensor_amplitude_nm > 0.0 {
            rng.random_range(-self.sensor_amplitude_nm..=self.sensor_amplitude_nm)
        } else {
            0.0
        };
        plateau + jitter
    }
}

/// Runs the sweep against `ground_truth` and returns the sensor log.
///
/// `noise = None` reproduces the ground truth exactly.
pub fn simulate_rig<F>(
    ground_truth: F,
    proto: &SweepProtocol,
    noise: Option<&StepwiseNoise>,
    lever_m: f64,
    seed: u64,
) -> Result<Vec<CalibrationSample>, CalibrationError>
where
    F: Fn(f64) -> f64,
{
    proto.validate()?;
    force_from_tau(0.0, lever_m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = proto.levels();
    let mut out = Vec::with_capacity(levels.len() * proto.samples_per_step * proto.repeats);
    let mut k = 0usize;
    for _ in 0..proto.repeats {
        for &duty in &levels {
            let truth = ground_truth(duty);
            for _ in 0..proto.samples_per_step {
                let tau = match noise {
                    Some(n) => n.apply(truth, &mut rng),
                    None => truth,
                };
                let force_n = force_from_tau(tau, lever_m)?;
                out.push(CalibrationSample {
                    t_s: k as f64 * proto.sample_period_s,
                    duty_pct: duty,
                    force_n,
                    torque_nm: tau_from_force(force_n, lever_m)?,
                });
                k += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuarticFit {
    /// Ascending powers of duty %.
    pub coeffs: [f64; 5],
    pub rmse_nm: f64,
    pub max_abs_residual_nm: f64,
    /// 2-norm condition number of the column-scaled design matrix.
    pub condition_number: f64,
    pub samples: usize,
    pub distinct_duties: usize,
}

impl QuarticFit {
    pub fn eval(&self, duty_pct: f64) -> f64 {
        eval_poly(&self.coeffs, duty_pct)
    }
}

fn distinct_count(samples: &[CalibrationSample]) -> usize {
    let mut duties: Vec<f64> = samples.iter().map(|s| s.duty_pct).collect();
    duties.sort_by(f64::total_cmp);
    duties.dedup();
    duties.len()
}

/// Least-squares quartic in duty % through the sample torques.
///
/// Duty is rescaled to [0, 1] and every Vandermonde column normalized before
/// a Householder QR solve; coefficients are mapped back to percent units.
pub fn fit_quartic(samples: &[CalibrationSample]) -> Result<QuarticFit, CalibrationError> {
    let distinct = distinct_count(samples);
    if distinct < 5 {
        return Err(CalibrationError::RankDeficient(distinct));
    }
    let n = samples.len();
    let mut a = DMatrix::<f64>::from_fn(n, 5, |i, j| (samples[i].duty_pct / 100.0).powi(j as i32));
    let mut norms = [0.0; 5];
    for (j, norm) in norms.iter_mut().enumerate() {
        let mut col = a.column_mut(j);
        *norm = col.norm();
        col /= *norm;
    }
    let b = DVector::from_iterator(n, samples.iter().map(|s| s.torque_nm));

    let svals = a.clone().singular_values();
    let condition_number = svals.max() / svals.min();

    let qr = a.qr();
    let qtb = qr.q().transpose() * &b;
    let r = qr.r();
    let y = r.solve_upper_triangular(&qtb).ok_or(CalibrationError::RankDeficient(distinct))?;

    let mut coeffs = [0.0; 5];
    for j in 0..5 {
        coeffs[j] = y[j] / norms[j] / 100f64.powi(j as i32);
    }
    let mut sq = 0.0;
    let mut worst = 0.0f64;
    for s in samples {
        let r = s.torque_nm - eval_poly(&coeffs, s.duty_pct);
        sq += r * r;
        worst = worst.max(r.abs());
    }
    Ok(QuarticFit {
        coeffs,
        rmse_nm: (sq / n as f64).sqrt(),
        max_abs_residual_nm: worst,
        condition_number,
        samples: n,
        distinct_duties: distinct,
    })
}
