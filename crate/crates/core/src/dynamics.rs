//! Quasi-static torque and energy model under applied end-effector wrenches,
//! actuation scheduling from timed key points, and cost of transport.
//!
//! The model drops inertial and Coriolis terms: at gait speeds the actuator
//! torque is dominated by the external wrench, so `tau(q) = J(q)^T F`. Forces
//! are in newtons, moments in N·mm, torques in N·mm, energies in joules.

use crate::geom::Vec3;
use crate::kinematics::{self, BennettDesign, BennettClosure, KinematicsError, MotionTrace};
use thiserror::Error;

/// Standard gravity used by [`cost_of_transport`] (m/s^2).
pub const GRAVITY: f64 = 9.81;

/// Minimum schedule density for cycle integrals (samples per cycle).
pub const MIN_CYCLE_SAMPLES: usize = 90;

/// How far a key point may sit from the traced polyline (mm).
pub const KEYPOINT_SNAP_TOL: f64 = 1e-3;

/// Errors raised by dynamics evaluation and scheduling.
#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("schedule has {got} samples; cycle integration needs at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("invalid {what}: {details}")]
    Invalid { what: &'static str, details: String },
    #[error("key point {index} is {distance:.6} mm from the trace (tolerance {tol} mm)")]
    KeyPointOffTrace { index: usize, distance: f64, tol: f64 },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

fn invalid(what: &'static str, details: impl Into<String>) -> DynamicsError {
    DynamicsError::Invalid { what, details: details.into() }
}

/// A world-frame wrench applied at the end-effector point: force in N,
/// moment in N·mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub moment: Vec3,
}

impl Wrench {
    pub fn zero() -> Self {
        Wrench { force: Vec3::zeros(), moment: Vec3::zeros() }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Wrench { force: self.force * k, moment: self.moment * k }
    }
}

/// One active interval of a load profile, over cycle-time fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPhase {
    /// Interval start, as a fraction of the cycle period in `[0, 1)`.
    pub t0: f64,
    /// Interval end in `(0, 1]`; the interval is half-open `[t0, t1)`.
    pub t1: f64,
    pub wrench: Wrench,
}

/// Piecewise-constant external wrench over one actuation cycle. Fractions
/// not covered by any phase carry zero wrench.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadProfile {
    phases: Vec<LoadPhase>,
}

impl LoadProfile {
    /// Validates that phases lie in `[0, 1]`, are ordered, and do not
    /// overlap.
    pub fn new(mut phases: Vec<LoadPhase>) -> Result<Self, DynamicsError> {
        phases.sort_by(|x, y| x.t0.total_cmp(&y.t0));
        for (i, p) in phases.iter().enumerate() {
            if !(p.t0 >= 0.0 && p.t0 < p.t1 && p.t1 <= 1.0) {
                return Err(invalid(
                    "load profile",
                    format!("phase {i} interval [{}, {}] not within [0, 1]", p.t0, p.t1),
                ));
            }
            if i > 0 && phases[i - 1].t1 > p.t0 + 1e-12 {
                return Err(invalid(
                    "load profile",
                    format!("phase {i} overlaps the previous phase"),
                ));
            }
        }
        Ok(LoadProfile { phases })
    }

    /// A single wrench active over the whole cycle.
    pub fn constant(wrench: Wrench) -> Self {
        LoadProfile { phases: vec![LoadPhase { t0: 0.0, t1: 1.0, wrench }] }
    }

    pub fn phases(&self) -> &[LoadPhase] {
        &self.phases
    }

    /// Wrench at a cycle fraction (wrapped into `[0, 1)`).
    pub fn wrench_at(&self, fraction: f64) -> Wrench {
        let f = fraction.rem_euclid(1.0);
        for p in &self.phases {
            if f >= p.t0 && f < p.t1 {
                return p.wrench;
            }
        }
        Wrench::zero()
    }

    /// Scales every phase wrench by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        LoadProfile {
            phases: self
                .phases
                .iter()
                .map(|p| LoadPhase { wrench: p.wrench.scaled(k), ..*p })
                .collect(),
        }
    }
}

/// One schedule sample: time (s), actuator angle (rad), actuator rate
/// (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSample {
    pub t: f64,
    pub q: f64,
    pub omega: f64,
}

/// An actuation cycle: `samples` hold times strictly increasing from 0,
/// all below `period`; the cycle closes periodically back to the first
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuationSchedule {
    pub period: f64,
    pub samples: Vec<ScheduleSample>,
}

impl ActuationSchedule {
    pub fn new(period: f64, samples: Vec<ScheduleSample>) -> Result<Self, DynamicsError> {
        if !(period > 0.0) {
            return Err(invalid("schedule", format!("period {period} must be positive")));
        }
        if samples.is_empty() {
            return Err(invalid("schedule", "no samples"));
        }
        if samples[0].t != 0.0 {
            return Err(invalid("schedule", "first sample must be at t = 0"));
        }
        for w in samples.windows(2) {
            if w[1].t <= w[0].t {
                return Err(invalid("schedule", "sample times must strictly increase"));
            }
        }
        if samples.last().unwrap().t >= period {
            return Err(invalid("schedule", "sample times must stay below the period"));
        }
        Ok(ActuationSchedule { period, samples })
    }

    /// Uniform constant-rate schedule: `n` samples over one period, one full
    /// actuator turn starting at `q0`.
    pub fn constant_speed(period: f64, n: usize, q0: f64) -> Result<Self, DynamicsError> {
        if n == 0 {
            return Err(invalid("schedule", "sample count must be positive"));
        }
        let omega = std::f64::consts::TAU / period;
        let samples = (0..n)
            .map(|i| {
                let f = i as f64 / n as f64;
                ScheduleSample { t: f * period, q: q0 + std::f64::consts::TAU * f, omega }
            })
            .collect();
        Self::new(period, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One timed key point: a world position the end-effector must reach at the
/// given cumulative fraction of the cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPoint {
    pub point: Vec3,
    /// Cumulative time fraction in `(0, 1]` at which the point is reached.
    pub fraction: f64,
}

/// Ordered timed key points; the last fraction must be 1, closing the cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyPointSpec {
    points: Vec<KeyPoint>,
}

impl KeyPointSpec {
    pub fn new(points: Vec<KeyPoint>) -> Result<Self, DynamicsError> {
        if points.is_empty() {
            return Err(invalid("key points", "at least one key point required"));
        }
        let mut prev = 0.0;
        for (i, k) in points.iter().enumerate() {
            if !(k.fraction > prev && k.fraction <= 1.0 + 1e-9) {
                return Err(invalid(
                    "key points",
                    format!(
                        "fraction {} of key point {i} must increase strictly within (0, 1]",
                        k.fraction
                    ),
                ));
            }
            prev = k.fraction;
        }
        if (prev - 1.0).abs() > 1e-9 {
            return Err(invalid("key points", "cumulative fractions must end at 1"));
        }
        let mut points = points;
        points.last_mut().unwrap().fraction = 1.0;
        Ok(KeyPointSpec { points })
    }

    pub fn points(&self) -> &[KeyPoint] {
        &self.points
    }
}

/// Actuator torque (N·mm) holding the linkage at `q` against a world-frame
/// wrench applied at the end-effector point.
pub fn torque(design: &BennettDesign, q: f64, wrench: &Wrench) -> Result<f64, DynamicsError> {
    let closure = design.closure_at(q, None)?;
    Ok(torque_at(design, &closure, wrench)?)
}

/// [`torque`] for an already-solved closure (warm path for cycle sweeps).
fn torque_at(
    design: &BennettDesign,
    closure: &BennettClosure,
    wrench: &Wrench,
) -> Result<f64, KinematicsError> {
    let (twist, linear) = kinematics::jacobian_at(design, closure)?;
    let omega = Vec3::new(twist[0], twist[1], twist[2]);
    Ok(wrench.force.dot(&linear) + wrench.moment.dot(&omega))
}

/// Per-sample torques and powers over one cycle, with the trapezoidal
/// energy integral and the torque peak.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDynamics {
    /// Actuator torque per schedule sample (N·mm).
    pub torques: Vec<f64>,
    /// Signed mechanical power per sample (W).
    pub powers: Vec<f64>,
    /// Integral of |power| over the period (J).
    pub energy: f64,
    /// Peak |torque| over the cycle (N·mm).
    pub max_torque: f64,
}

/// Evaluates torque and power at every schedule sample and integrates
/// `|tau * omega|` trapezoidally over the (periodic) cycle.
pub fn cycle_dynamics(
    design: &BennettDesign,
    schedule: &ActuationSchedule,
    load: &LoadProfile,
) -> Result<CycleDynamics, DynamicsError> {
    let n = schedule.samples.len();
    if n < MIN_CYCLE_SAMPLES {
        return Err(DynamicsError::TooFewSamples { got: n, need: MIN_CYCLE_SAMPLES });
    }
    let mut torques = Vec::with_capacity(n);
    let mut powers = Vec::with_capacity(n);
    let mut hint = None;
    for s in &schedule.samples {
        let closure = design.closure_at(s.q, hint)?;
        hint = Some(closure.theta[1]);
        let wrench = load.wrench_at(s.t / schedule.period);
        let tau = torque_at(design, &closure, &wrench)?;
        torques.push(tau);
        // N·mm/s to W.
        powers.push(tau * s.omega * 1e-3);
    }
    let mut energy = 0.0;
    for i in 0..n {
        let (t_next, p_next) = if i + 1 < n {
            (schedule.samples[i + 1].t, powers[i + 1].abs())
        } else {
            (schedule.period, powers[0].abs())
        };
        energy += 0.5 * (powers[i].abs() + p_next) * (t_next - schedule.samples[i].t);
    }
    let max_torque = torques.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    Ok(CycleDynamics { torques, powers, energy, max_torque })
}

/// Energy (J) spent against the load over one cycle.
pub fn cycle_energy(
    design: &BennettDesign,
    schedule: &ActuationSchedule,
    load: &LoadProfile,
) -> Result<f64, DynamicsError> {
    Ok(cycle_dynamics(design, schedule, load)?.energy)
}

/// Peak |torque| (N·mm) over one cycle.
pub fn max_torque(
    design: &BennettDesign,
    schedule: &ActuationSchedule,
    load: &LoadProfile,
) -> Result<f64, DynamicsError> {
    Ok(cycle_dynamics(design, schedule, load)?.max_torque)
}

/// Cumulative arc lengths along the closed end-effector polyline:
/// `arcs[k]` is the length up to vertex `k`, `arcs[n]` the full loop.
fn closed_polyline_arcs(points: &[Vec3]) -> Vec<f64> {
    let n = points.len();
    let mut arcs = Vec::with_capacity(n + 1);
    arcs.push(0.0);
    for k in 1..=n {
        let prev = points[k - 1];
        let next = points[k % n];
        arcs.push(arcs[k - 1] + (next - prev).norm());
    }
    arcs
}

/// Nearest point on the closed polyline: returns (distance, arc position).
fn locate_on_polyline(points: &[Vec3], arcs: &[f64], target: &Vec3) -> (f64, f64) {
    let n = points.len();
    let mut best = (f64::INFINITY, 0.0);
    for j in 0..n {
        let a = points[j];
        let d = points[(j + 1) % n] - a;
        let len2 = d.norm_squared();
        let u = if len2 > 0.0 { ((target - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let dist = (target - (a + d * u)).norm();
        if dist < best.0 {
            best = (dist, arcs[j] + u * (arcs[j + 1] - arcs[j]));
        }
    }
    best
}

/// How well a set of key points sits on a closed polyline.
#[derive(Debug, Clone)]
pub struct KeyPointFit {
    /// Distance (mm) from each key point to the polyline.
    pub distances: Vec<f64>,
    /// Whether the projected arc positions run in key-point order around
    /// the cycle (required for a monotone re-timing to exist).
    pub order_consistent: bool,
}

impl KeyPointFit {
    /// Largest key-point distance.
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().fold(0.0f64, |m, d| m.max(*d))
    }
}

/// Projects every key point onto the closed polyline `points` and checks
/// cyclic order consistency. Unlike [`keypoint_schedule`] this never fails
/// on far-away points, so it can score infeasible candidates.
pub fn keypoint_fit(points: &[Vec3], spec: &KeyPointSpec) -> Result<KeyPointFit, DynamicsError> {
    if points.len() < 2 {
        return Err(invalid("trace", "need at least 2 points to project onto"));
    }
    let arcs = closed_polyline_arcs(points);
    let total = *arcs.last().unwrap();
    if total <= 0.0 {
        return Err(invalid("trace", "polyline has zero length"));
    }
    let mut distances = Vec::with_capacity(spec.points().len());
    let mut key_arcs = Vec::with_capacity(spec.points().len());
    for k in spec.points() {
        let (dist, arc) = locate_on_polyline(points, &arcs, &k.point);
        distances.push(dist);
        key_arcs.push(arc);
    }
    // Walk from the cycle anchor (final key point) and require strictly
    // increasing arc positions.
    let m = key_arcs.len();
    let start = key_arcs[m - 1];
    let mut order_consistent = true;
    let mut prev = 0.0;
    for arc in key_arcs.iter().take(m - 1) {
        let rel = (arc - start).rem_euclid(total);
        if rel <= prev {
            order_consistent = false;
            break;
        }
        prev = rel;
    }
    Ok(KeyPointFit { distances, order_consistent })
}

/// Re-times a traced cycle so the end-effector covers arc length at a
/// constant rate between consecutive key points, reaching each key point
/// exactly at its cumulative time fraction of the period `t_total`.
///
/// The schedule keeps the trace's sample count and starts (t = 0) at the
/// final key point, whose fraction is 1.
pub fn keypoint_schedule(
    trace: &MotionTrace,
    spec: &KeyPointSpec,
    t_total: f64,
) -> Result<ActuationSchedule, DynamicsError> {
    let n = trace.q.len();
    if n < 4 {
        return Err(invalid("trace", "need at least 4 frames to re-time"));
    }
    if !(t_total > 0.0) {
        return Err(invalid("schedule", format!("period {t_total} must be positive")));
    }
    for w in trace.q.windows(2) {
        if w[1] <= w[0] {
            return Err(invalid("trace", "actuator angle must strictly increase"));
        }
    }
    let arcs = closed_polyline_arcs(&trace.ee_points);
    let total = *arcs.last().unwrap();
    if total <= 0.0 {
        return Err(invalid("trace", "end-effector path has zero length"));
    }
    // Actuator angle at each arc node; the closing node is one full turn
    // past the start.
    let mut q_nodes: Vec<f64> = trace.q.clone();
    q_nodes.push(trace.q[0] + std::f64::consts::TAU);

    // Locate the key points on the polyline.
    let mut key_arcs = Vec::with_capacity(spec.points().len());
    for (index, k) in spec.points().iter().enumerate() {
        let (dist, arc) = locate_on_polyline(&trace.ee_points, &arcs, &k.point);
        if dist > KEYPOINT_SNAP_TOL {
            return Err(DynamicsError::KeyPointOffTrace {
                index,
                distance: dist,
                tol: KEYPOINT_SNAP_TOL,
            });
        }
        key_arcs.push(arc);
    }

    // Arc covered in each inter-key-point segment, walking in trace
    // direction. The cycle starts at the final key point (fraction 1).
    let m = spec.points().len();
    let start_arc = key_arcs[m - 1];
    let mut seg_arcs = Vec::with_capacity(m);
    for k in 0..m {
        let prev = key_arcs[(k + m - 1) % m];
        let mut d = (key_arcs[k] - prev).rem_euclid(total);
        if d == 0.0 {
            if m == 1 {
                d = total;
            } else {
                return Err(invalid(
                    "key points",
                    format!("key points {} and {k} coincide on the trace", (k + m - 1) % m),
                ));
            }
        }
        seg_arcs.push(d);
    }
    let covered: f64 = seg_arcs.iter().sum();
    if (covered - total).abs() > 1e-6 * total {
        return Err(invalid(
            "key points",
            "key point order is inconsistent with the trace direction",
        ));
    }

    // Emit samples: target arc grows linearly within each segment.
    let mut fractions = Vec::with_capacity(m + 1);
    fractions.push(0.0);
    for k in spec.points() {
        fractions.push(k.fraction);
    }
    let mut samples = Vec::with_capacity(n);
    let mut seg = 0usize;
    for i in 0..n {
        let f = i as f64 / n as f64;
        while f >= fractions[seg + 1] && seg + 2 <= m {
            seg += 1;
        }
        let f_lo = fractions[seg];
        let f_len = fractions[seg + 1] - f_lo;
        let seg_start = if seg == 0 { start_arc } else { key_arcs[seg - 1] };
        let arc_rate = seg_arcs[seg] / (f_len * t_total);
        let arc = (seg_start + seg_arcs[seg] * (f - f_lo) / f_len).rem_euclid(total);
        // Map arc position to actuator angle on the trace's arc grid.
        let j = arcs.partition_point(|&s| s <= arc).saturating_sub(1).min(n - 1);
        let span = arcs[j + 1] - arcs[j];
        let (q, dq_ds) = if span > 1e-12 {
            let u = (arc - arcs[j]) / span;
            (q_nodes[j] + u * (q_nodes[j + 1] - q_nodes[j]), (q_nodes[j + 1] - q_nodes[j]) / span)
        } else {
            (q_nodes[j], 0.0)
        };
        samples.push(ScheduleSample { t: f * t_total, q, omega: arc_rate * dq_ds });
    }
    // Keep q continuous across the wrap used during interpolation.
    for i in 1..n {
        while samples[i].q < samples[i - 1].q {
            samples[i].q += std::f64::consts::TAU;
        }
    }
    ActuationSchedule::new(t_total, samples)
}

/// Cost of transport `E / (m g d)` for energy `E` (J), mass `m` (kg) and
/// distance `d` (m).
pub fn cost_of_transport(energy: f64, mass: f64, distance: f64) -> Result<f64, DynamicsError> {
    if !(mass > 0.0) {
        return Err(invalid("cost of transport", format!("mass {mass} must be positive")));
    }
    if !(distance > 0.0) {
        return Err(invalid("cost of transport", format!("distance {distance} must be positive")));
    }
    Ok(energy / (mass * GRAVITY * distance))
}
