//! Arclength-parameterized pipe courses.
//!
//! A course is modeled along its centerline only: every query takes an
//! arclength `s` (metres from the entry) and returns a local property of the
//! pipe there. Three profiles drive the mechanics: bore diameter, centerline
//! curvature and the axial component of gravity.

use crate::error::GeometryError;

/// Nominal bore of a 3 in force main, m.
pub const BORE_3IN_M: f64 = 0.075;
/// Nominal bore of a 4 in force main, m.
pub const BORE_4IN_M: f64 = 0.100;
/// Taper length used when an increaser is declared without one, m.
pub const DEFAULT_INCREASER_LENGTH_M: f64 = 0.10;

const MIN_DIAMETER_M: f64 = 0.05;
const MAX_DIAMETER_M: f64 = 0.15;
const JUNCTION_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    Straight { length_m: f64 },
    Bend { radius_m: f64, angle_rad: f64 },
    Increaser { length_m: f64 },
}

/// One typed piece of pipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeSegment {
    pub kind: SegmentKind,
    pub diameter_in_m: f64,
    pub diameter_out_m: f64,
    /// Axial component of the unit gravity vector, +1 when climbing straight up.
    pub inclination: f64,
}

impl PipeSegment {
    pub fn straight(length_m: f64, diameter_m: f64, inclination: f64) -> Self {
        Self {
            kind: SegmentKind::Straight { length_m },
            diameter_in_m: diameter_m,
            diameter_out_m: diameter_m,
            inclination,
        }
    }

    pub fn bend(radius_m: f64, angle_rad: f64, diameter_m: f64, inclination: f64) -> Self {
        Self {
            kind: SegmentKind::Bend { radius_m, angle_rad },
            diameter_in_m: diameter_m,
            diameter_out_m: diameter_m,
            inclination,
        }
    }

    /// A bend given in degrees, the way fittings are sold.
    pub fn bend_deg(radius_m: f64, angle_deg: f64, diameter_m: f64, inclination: f64) -> Self {
        Self::bend(radius_m, angle_deg.to_radians(), diameter_m, inclination)
    }

    pub fn increaser(length_m: f64, diameter_in_m: f64, diameter_out_m: f64, inclination: f64) -> Self {
        Self { kind: SegmentKind::Increaser { length_m }, diameter_in_m, diameter_out_m, inclination }
    }

    pub fn arclength(&self) -> f64 {
        match self.kind {
            SegmentKind::Straight { length_m } | SegmentKind::Increaser { length_m } => length_m,
            SegmentKind::Bend { radius_m, angle_rad } => radius_m * angle_rad,
        }
    }

    pub fn curvature(&self) -> f64 {
        match self.kind {
            SegmentKind::Bend { radius_m, .. } => 1.0 / radius_m,
            _ => 0.0,
        }
    }

    /// Diameter at local arclength `u` measured from the segment start.
    fn diameter_at_local(&self, u: f64) -> f64 {
        match self.kind {
            SegmentKind::Increaser { length_m } => {
                let frac = (u / length_m).clamp(0.0, 1.0);
                self.diameter_in_m + frac * (self.diameter_out_m - self.diameter_in_m)
            }
            _ => self.diameter_in_m,
        }
    }

    fn validate(&self, index: usize) -> Result<(), GeometryError> {
        let positive = |what: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(GeometryError::NonPositiveDimension { index, what, value })
            }
        };
        match self.kind {
            SegmentKind::Straight { length_m } => positive("length", length_m)?,
            SegmentKind::Increaser { length_m } => positive("length", length_m)?,
            SegmentKind::Bend { radius_m, angle_rad } => {
                positive("bend radius", radius_m)?;
                positive("bend angle", angle_rad)?;
            }
        }
        for d in [self.diameter_in_m, self.diameter_out_m] {
            if !(MIN_DIAMETER_M..=MAX_DIAMETER_M).contains(&d) {
                return Err(GeometryError::DiameterOutOfRange { index, diameter_m: d });
            }
        }
        let is_increaser = matches!(self.kind, SegmentKind::Increaser { .. });
        if is_increaser && self.diameter_in_m == self.diameter_out_m {
            return Err(GeometryError::FlatIncreaser { index });
        }
        if !is_increaser && self.diameter_in_m != self.diameter_out_m {
            return Err(GeometryError::TaperedNonIncreaser { index });
        }
        if !(-1.0..=1.0).contains(&self.inclination) {
            return Err(GeometryError::InclinationOutOfRange { index, inclination: self.inclination });
        }
        Ok(())
    }
}

/// A validated, immutable pipe course.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeNetwork {
    segments: Vec<PipeSegment>,
    /// Start offset of each segment; one extra trailing entry holds the total.
    offsets: Vec<f64>,
}

impl PipeNetwork {
    pub fn build(segments: Vec<PipeSegment>) -> Result<Self, GeometryError> {
        if segments.is_empty() {
            return Err(GeometryError::Empty);
        }
        for (i, seg) in segments.iter().enumerate() {
            seg.validate(i)?;
        }
        for (i, pair) in segments.windows(2).enumerate() {
            let mismatch = (pair[0].diameter_out_m - pair[1].diameter_in_m).abs();
            if mismatch > JUNCTION_TOLERANCE_M {
                return Err(GeometryError::DiameterDiscontinuity { junction: i + 1, mismatch_m: mismatch });
            }
        }
        let mut offsets = Vec::with_capacity(segments.len() + 1);
        let mut acc = 0.0;
        offsets.push(acc);
        for seg in &segments {
            acc += seg.arclength();
            offsets.push(acc);
        }
        Ok(Self { segments, offsets })
    }

    pub fn segments(&self) -> &[PipeSegment] {
        &self.segments
    }

    /// Start offset of every segment, m.
    pub fn segment_starts(&self) -> &[f64] {
        &self.offsets[..self.segments.len()]
    }

    pub fn total_length(&self) -> f64 {
        *self.offsets.last().expect("offsets never empty")
    }

    /// Index of the segment containing `s` and the local arclength inside it.
    ///
    /// Interior junctions belong to the downstream segment; the exit point
    /// belongs to the last segment.
    pub fn locate(&self, s: f64) -> Result<(usize, f64), GeometryError> {
        let total = self.total_length();
        if !(0.0..=total).contains(&s) {
            return Err(GeometryError::OutOfRange { s, total });
        }
        let idx = match self.offsets[1..].iter().position(|&end| s < end) {
            Some(i) => i,
            None => self.segments.len() - 1,
        };
        Ok((idx, s - self.offsets[idx]))
    }

    pub fn segment_at(&self, s: f64) -> Result<&PipeSegment, GeometryError> {
        self.locate(s).map(|(i, _)| &self.segments[i])
    }

    pub fn diameter_at(&self, s: f64) -> Result<f64, GeometryError> {
        let (i, u) = self.locate(s)?;
        Ok(self.segments[i].diameter_at_local(u))
    }

    pub fn curvature_at(&self, s: f64) -> Result<f64, GeometryError> {
        let (i, _) = self.locate(s)?;
        Ok(self.segments[i].curvature())
    }

    pub fn gravity_axial_at(&self, s: f64) -> Result<f64, GeometryError> {
        let (i, _) = self.locate(s)?;
        Ok(self.segments[i].inclination)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn increaser_course() -> PipeNetwork {
        PipeNetwork::build(vec![
            PipeSegment::straight(0.5, BORE_3IN_M, 0.0),
            PipeSegment::increaser(DEFAULT_INCREASER_LENGTH_M, BORE_3IN_M, BORE_4IN_M, 0.0),
            PipeSegment::straight(0.3, BORE_4IN_M, 0.0),
            PipeSegment::bend(0.128, FRAC_PI_2, BORE_4IN_M, 0.5),
            PipeSegment::straight(0.4, BORE_4IN_M, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn single_straight_length() {
        let net = PipeNetwork::build(vec![PipeSegment::straight(1.0, 0.075, 1.0)]).unwrap();
        assert_eq!(net.total_length(), 1.0);
    }

    #[test]
    fn bend_arclength_is_radius_times_angle() {
        let seg = PipeSegment::bend(0.128, FRAC_PI_2, 0.1, 0.0);
        assert!((seg.arclength() - 0.201_061_929_829_746_7).abs() < 1e-12);
    }

    #[test]
    fn empty_course_rejected() {
        assert_eq!(PipeNetwork::build(vec![]), Err(GeometryError::Empty));
    }

    #[test]
    fn junction_mismatch_rejected() {
        let err =
            PipeNetwork::build(vec![PipeSegment::straight(0.5, 0.075, 0.0), PipeSegment::straight(0.5, 0.100, 0.0)])
                .unwrap_err();
        assert!(matches!(err, GeometryError::DiameterDiscontinuity { junction: 1, .. }));
    }

    #[test]
    fn bad_dimensions_rejected() {
        let cases = [
            PipeSegment::straight(0.0, 0.075, 0.0),
            PipeSegment::straight(-1.0, 0.075, 0.0),
            PipeSegment::bend(0.0, 1.0, 0.075, 0.0),
            PipeSegment::bend(0.1, 0.0, 0.075, 0.0),
            PipeSegment::straight(1.0, 0.2, 0.0),
            PipeSegment::straight(1.0, 0.075, 1.5),
            PipeSegment::increaser(0.1, 0.075, 0.075, 0.0),
        ];
        for seg in cases {
            assert!(PipeNetwork::build(vec![seg]).is_err(), "{seg:?}");
        }
    }

    #[test]
    fn diameter_profile() {
        let net = increaser_course();
        assert_eq!(net.diameter_at(0.25).unwrap(), 0.075);
        assert!((net.diameter_at(0.55).unwrap() - 0.0875).abs() < 1e-15);
        assert_eq!(net.diameter_at(net.total_length()).unwrap(), 0.100);
        assert!(net.diameter_at(-1e-9).is_err());
        assert!(net.diameter_at(net.total_length() + 1e-9).is_err());
    }

    #[test]
    fn curvature_and_gravity() {
        let net = PipeNetwork::build(vec![
            PipeSegment::straight(0.3, 0.075, 0.0),
            PipeSegment::bend(0.1, FRAC_PI_2, 0.075, 0.5),
            PipeSegment::straight(1.0, 0.075, 1.0),
        ])
        .unwrap();
        assert_eq!(net.curvature_at(0.1).unwrap(), 0.0);
        assert_eq!(net.curvature_at(0.35).unwrap(), 10.0);
        assert_eq!(net.gravity_axial_at(1.0).unwrap(), 1.0);
        assert!(net.curvature_at(5.0).is_err());
    }

    #[test]
    fn diameter_continuous_across_junctions() {
        let net = increaser_course();
        let eps = 1e-12;
        for &s in &net.segment_starts()[1..] {
            let jump = (net.diameter_at(s + eps).unwrap() - net.diameter_at(s - eps).unwrap()).abs();
            assert!(jump < 1e-9, "jump {jump} at {s}");
        }
    }

    #[test]
    fn total_is_sum_of_declared_lengths() {
        let net = increaser_course();
        let sum: f64 = net.segments().iter().map(PipeSegment::arclength).sum();
        assert!((net.total_length() - sum).abs() <= 1e-12 * sum);
        let starts = net.segment_starts();
        assert!(starts.windows(2).all(|w| w[1] > w[0]));
    }
}
