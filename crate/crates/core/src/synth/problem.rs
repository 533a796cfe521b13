//! Problem statement and result types for stage-1 design synthesis.

use thiserror::Error;

use crate::curve::{CurveError, DiscreteCurve3};
use crate::dynamics::{DynamicsError, KeyPointSpec, LoadProfile};
use crate::geom::Vec3;
use crate::kinematics::{BennettDesign, KinematicsError};

/// Number of design parameters: 3 loop parameters, 3 coupler-point
/// coordinates, 3 mount translation coordinates, 3 mount rotation
/// exponential coordinates.
pub const PARAM_COUNT: usize = 12;

/// Default objective weights (similarity, peak-torque ratio, cycle energy).
pub const DEFAULT_WEIGHTS: (f64, f64, f64) = (10.0, 1.0, 0.1);
/// Default normalized-Hausdorff tolerance (fraction of the target's
/// bounding-box diagonal).
pub const DEFAULT_NH_TOL: f64 = 0.10;
/// Default minimum singularity measure (mm of end-effector travel per
/// radian of actuation) kept over the whole cycle.
pub const DEFAULT_SING_TOL: f64 = 0.01;

/// Errors from problem validation and synthesis.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid problem {what}: {details}")]
    InvalidProblem { what: &'static str, details: String },
    #[error("no assemblable candidate was found in the entire run")]
    NoAssemblableCandidate,
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn invalid(what: &'static str, details: impl Into<String>) -> SynthError {
    SynthError::InvalidProblem { what, details: details.into() }
}

/// Axis-aligned spatial region (mm) that must contain the whole mechanism
/// over the full cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoxRegion {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, SynthError> {
        for i in 0..3 {
            if !(min[i] < max[i]) {
                return Err(invalid(
                    "box",
                    format!("min {} must be below max {} on axis {i}", min[i], max[i]),
                ));
            }
        }
        Ok(Self { min, max })
    }

    /// Smallest box containing all `points`, grown by `margin` times the
    /// raw diagonal on every side.
    pub fn around(points: &[Vec3], margin: f64) -> Result<Self, SynthError> {
        if points.is_empty() {
            return Err(invalid("box", "no points to bound"));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let pad = (hi - lo).norm().max(1.0) * margin;
        Self::new(lo.add_scalar(-pad), hi.add_scalar(pad))
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    /// How far `p` sticks out of the box (mm); zero inside.
    pub fn violation(&self, p: &Vec3) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..3 {
            worst = worst.max(self.min[i] - p[i]).max(p[i] - self.max[i]);
        }
        worst.max(0.0)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.violation(p) == 0.0
    }
}

/// Per-parameter search interval for the flat design vector, in the layout
/// `[a, b, alpha, p0_x, p0_y, p0_z, t_x, t_y, t_z, w_x, w_y, w_z]` where
/// `t` is the mount translation and `w` the mount rotation in exponential
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBounds {
    pub lo: [f64; PARAM_COUNT],
    pub hi: [f64; PARAM_COUNT],
}

impl ParamBounds {
    pub fn new(lo: [f64; PARAM_COUNT], hi: [f64; PARAM_COUNT]) -> Result<Self, SynthError> {
        for i in 0..PARAM_COUNT {
            if !(lo[i] < hi[i]) {
                return Err(invalid(
                    "bounds",
                    format!("component {i}: {} is not below {}", lo[i], hi[i]),
                ));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Default intervals scaled to the working region: link lengths
    /// 40..200 mm, twist away from the flat degeneracies, coupler point
    /// within 1.5 box diagonals, mount translation within the box grown by
    /// half a diagonal, full rotation range.
    pub fn standard(region: &BoxRegion) -> Self {
        let d = region.diagonal();
        let pi = std::f64::consts::PI;
        let mut lo = [0.0; PARAM_COUNT];
        let mut hi = [0.0; PARAM_COUNT];
        lo[0] = 40.0;
        hi[0] = 200.0;
        lo[1] = 40.0;
        hi[1] = 200.0;
        lo[2] = 0.2;
        hi[2] = pi - 0.2;
        for i in 0..3 {
            lo[3 + i] = -1.5 * d;
            hi[3 + i] = 1.5 * d;
            lo[6 + i] = region.min[i] - 0.5 * d;
            hi[6 + i] = region.max[i] + 0.5 * d;
            lo[9 + i] = -pi;
            hi[9 + i] = pi;
        }
        Self { lo, hi }
    }

    /// Clamps a flat vector into the bounds componentwise.
    pub fn clamp(&self, v: &[f64; PARAM_COUNT]) -> [f64; PARAM_COUNT] {
        let mut out = *v;
        for i in 0..PARAM_COUNT {
            out[i] = out[i].clamp(self.lo[i], self.hi[i]);
        }
        out
    }
}

/// Everything stage-1 needs: the target curve, timing, load, working
/// region, search bounds and scalarization settings.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    /// Closed target trajectory in world coordinates (mm).
    pub target: DiscreteCurve3,
    /// Timing key points on (or near) the target.
    pub keypoints: KeyPointSpec,
    /// External load over the cycle.
    pub load: LoadProfile,
    /// Region that must contain the whole linkage at every sample.
    pub region: BoxRegion,
    /// Search intervals for the flat design vector.
    pub bounds: ParamBounds,
    /// Objective weights (similarity, torque ratio, energy).
    pub weights: (f64, f64, f64),
    /// Actuator stall torque (N·mm) normalizing the peak-torque term.
    pub stall_torque: f64,
    /// Normalized-Hausdorff acceptance threshold.
    pub nh_tol: f64,
    /// Minimum allowed cycle singularity measure.
    pub sing_tol: f64,
    /// Cycle period (s).
    pub period: f64,
}

impl DesignProblem {
    /// Builds a problem with standard bounds, weights and tolerances.
    pub fn new(
        target: DiscreteCurve3,
        keypoints: KeyPointSpec,
        load: LoadProfile,
        region: BoxRegion,
        stall_torque: f64,
        period: f64,
    ) -> Result<Self, SynthError> {
        let bounds = ParamBounds::standard(&region);
        let p = Self {
            target,
            keypoints,
            load,
            region,
            bounds,
            weights: DEFAULT_WEIGHTS,
            stall_torque,
            nh_tol: DEFAULT_NH_TOL,
            sing_tol: DEFAULT_SING_TOL,
            period,
        };
        p.validate()?;
        Ok(p)
    }

    /// Re-checks every invariant (call after editing public fields).
    pub fn validate(&self) -> Result<(), SynthError> {
        if !self.target.closed {
            return Err(invalid("target", "target curve must be closed"));
        }
        if self.target.len() < 4 {
            return Err(invalid(
                "target",
                format!("need at least 4 target points, got {}", self.target.len()),
            ));
        }
        let (w1, w2, w3) = self.weights;
        if !(w1 >= 0.0 && w2 >= 0.0 && w3 >= 0.0) {
            return Err(invalid("weights", format!("({w1}, {w2}, {w3}) must be non-negative")));
        }
        if !(self.stall_torque > 0.0) {
            return Err(invalid(
                "stall_torque",
                format!("{} must be positive", self.stall_torque),
            ));
        }
        if !(self.nh_tol > 0.0 && self.nh_tol <= 1.0) {
            return Err(invalid("nh_tol", format!("{} must be in (0, 1]", self.nh_tol)));
        }
        if !(self.sing_tol >= 0.0) {
            return Err(invalid("sing_tol", format!("{} must be non-negative", self.sing_tol)));
        }
        if !(self.period > 0.0) {
            return Err(invalid("period", format!("{} must be positive", self.period)));
        }
        ParamBounds::new(self.bounds.lo, self.bounds.hi)?;
        BoxRegion::new(self.region.min, self.region.max)?;
        Ok(())
    }
}

/// Outcome of a synthesis run.
#[derive(Debug, Clone)]
pub struct SynthResult {
    /// Best design found (best feasible if any candidate was feasible,
    /// otherwise best by penalized objective).
    pub design: BennettDesign,
    /// Raw objective terms of that design (similarity, torque ratio,
    /// energy J).
    pub objective_terms: (f64, f64, f64),
    /// Weighted objective (no penalties).
    pub objective: f64,
    /// Penalized objective actually minimized.
    pub penalized: f64,
    /// Normalized Hausdorff distance to the target.
    pub nh: f64,
    /// Whether the returned design satisfies every constraint.
    pub feasible: bool,
    /// Total generations consumed.
    pub generations: usize,
    /// Optimizer restarts performed (each doubles the population).
    pub restarts: usize,
    /// Seed the run was started with.
    pub rng_seed: u64,
    /// Best penalized objective after each generation (non-increasing).
    pub history: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_region_violation_is_exterior_distance() {
        let r = BoxRegion::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(10.0, 20.0, 30.0)).unwrap();
        assert!(r.contains(&Vec3::new(5.0, 5.0, 5.0)));
        assert_eq!(r.violation(&Vec3::new(5.0, 5.0, 5.0)), 0.0);
        assert_eq!(r.violation(&Vec3::new(-2.0, 5.0, 5.0)), 2.0);
        assert_eq!(r.violation(&Vec3::new(5.0, 23.5, 5.0)), 3.5);
        assert_eq!(r.violation(&Vec3::new(11.0, 25.0, 5.0)), 5.0);
        assert!(BoxRegion::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn box_around_covers_inputs_with_margin() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 6.0, 3.0)];
        let r = BoxRegion::around(&pts, 0.25).unwrap();
        for p in &pts {
            assert!(r.contains(p));
        }
        // All inputs share z = 3, so a zero margin leaves that axis flat.
        let tight = BoxRegion::around(&pts, 0.0);
        assert!(tight.is_err());
    }

    #[test]
    fn standard_bounds_are_ordered_and_contain_defaults() {
        let r = BoxRegion::new(Vec3::new(-100.0, -100.0, -50.0), Vec3::new(100.0, 100.0, 50.0))
            .unwrap();
        let b = ParamBounds::standard(&r);
        for i in 0..PARAM_COUNT {
            assert!(b.lo[i] < b.hi[i]);
        }
        assert_eq!(b.lo[0], 40.0);
        assert_eq!(b.hi[0], 200.0);
        let v = b.clamp(&[0.0; PARAM_COUNT]);
        assert_eq!(v[0], 40.0);
        assert_eq!(v[2], 0.2);
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn problem_validation_rejects_bad_settings() {
        let square = DiscreteCurve3::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(100.0, 0.0, 0.0),
                Vec3::new(100.0, 100.0, 0.0),
                Vec3::new(0.0, 100.0, 0.0),
            ],
            true,
        );
        let kp = KeyPointSpec::new(vec![crate::dynamics::KeyPoint {
            point: Vec3::new(0.0, 0.0, 0.0),
            fraction: 1.0,
        }])
        .unwrap();
        let region =
            BoxRegion::new(Vec3::new(-200.0, -200.0, -200.0), Vec3::new(200.0, 200.0, 200.0))
                .unwrap();
        let ok = DesignProblem::new(
            square.clone(),
            kp.clone(),
            LoadProfile::default(),
            region,
            1000.0,
            2.0,
        );
        assert!(ok.is_ok());

        let mut p = ok.unwrap();
        p.weights.1 = -1.0;
        assert!(p.validate().is_err());
        p.weights.1 = 1.0;
        p.nh_tol = 0.0;
        assert!(p.validate().is_err());
        p.nh_tol = 0.1;
        p.period = 0.0;
        assert!(p.validate().is_err());
        p.period = 2.0;
        assert!(p.validate().is_ok());

        let open = DiscreteCurve3::new(square.points.clone(), false);
        assert!(DesignProblem::new(open, kp, LoadProfile::default(), region, 1000.0, 2.0)
            .is_err());
    }
}
