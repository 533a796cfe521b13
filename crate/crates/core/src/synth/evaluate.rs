//! Candidate scoring: objective terms, constraint residuals and the
//! penalty-merged scalar the optimizer minimizes.

use super::problem::{DesignProblem, SynthError};
use crate::curve::{curvature_signature, normalized_hausdorff, resample_arclength,
    signature_distance, DEFAULT_METRIC_SAMPLES};
use crate::dynamics::{cycle_dynamics, keypoint_fit, keypoint_schedule, ActuationSchedule,
    KEYPOINT_SNAP_TOL};
use crate::kinematics::{singularity_measure, trace, BennettDesign};

/// Samples per cycle for torque/energy integration.
pub const DYNAMICS_SAMPLES: usize = 120;
/// Quadratic penalty coefficient per normalized constraint residual.
pub const PENALTY_COEF: f64 = 1e3;
/// Penalized objective assigned to candidates that cannot be traced at
/// all; large but finite so ranking (and the search) keeps working.
pub const UNASSEMBLABLE_PENALTY: f64 = 1e9;

/// Raw objective terms before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    /// Curvature-signature distance to the target (dimensionless).
    pub similarity: f64,
    /// Peak |torque| over the cycle divided by the stall torque.
    pub torque_ratio: f64,
    /// Energy spent against the load over one cycle (J).
    pub energy: f64,
}

/// Constraint-side measurements of one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// Smallest singularity measure over the sampled cycle.
    pub min_singularity: f64,
    /// Largest key-point distance to the traced curve (mm).
    pub keypoint_error: f64,
    /// Whether the key points appear on the traced cycle in order.
    pub keypoint_order: bool,
    /// Largest excursion of any linkage point outside the region (mm).
    pub box_violation: f64,
    /// Normalized Hausdorff distance to the target.
    pub nh: f64,
}

/// Full scoring result for one candidate design.
#[derive(Debug, Clone)]
pub struct EvalBreakdown {
    /// False when the candidate could not be traced or scored; all other
    /// fields are zeroed in that case and `penalized` is the large marker.
    pub assemblable: bool,
    pub terms: ObjectiveTerms,
    /// Weighted objective `w1*similarity + w2*torque_ratio + w3*energy`.
    pub objective: f64,
    /// Added constraint penalty.
    pub penalty: f64,
    /// `objective + penalty`; the quantity minimized.
    pub penalized: f64,
    pub constraints: ConstraintReport,
    /// All constraints within tolerance.
    pub feasible: bool,
}

impl EvalBreakdown {
    fn unassemblable() -> Self {
        Self {
            assemblable: false,
            terms: ObjectiveTerms { similarity: 0.0, torque_ratio: 0.0, energy: 0.0 },
            objective: 0.0,
            penalty: UNASSEMBLABLE_PENALTY,
            penalized: UNASSEMBLABLE_PENALTY,
            constraints: ConstraintReport {
                min_singularity: 0.0,
                keypoint_error: 0.0,
                keypoint_order: false,
                box_violation: 0.0,
                nh: 0.0,
            },
            feasible: false,
        }
    }
}

/// Scores one design against a problem.
///
/// Candidate-side failures (untraceable loop, degenerate coupler path)
/// return the unassemblable marker; only target-side defects — which
/// [`DesignProblem::validate`] should already have caught — surface as
/// errors.
pub fn evaluate(
    design: &BennettDesign,
    problem: &DesignProblem,
) -> Result<EvalBreakdown, SynthError> {
    // Target-side metric data first: errors here are problem defects.
    let metric_target = resample_arclength(&problem.target, DEFAULT_METRIC_SAMPLES)?;
    let target_sig = curvature_signature(&metric_target)?;
    let diag = problem.target.bounding_box_diagonal().max(1e-9);

    // One shared trace drives the metric, the constraints and the
    // dynamics.
    let schedule = match ActuationSchedule::constant_speed(problem.period, DYNAMICS_SAMPLES, 0.0)
    {
        Ok(s) => s,
        Err(_) => return Err(super::problem::SynthError::InvalidProblem {
            what: "period",
            details: format!("cannot build a schedule over {} s", problem.period),
        }),
    };
    let traced = match trace(design, &schedule) {
        Ok(t) => t,
        Err(_) => return Ok(EvalBreakdown::unassemblable()),
    };
    let traced_curve = traced.ee_curve();

    // Similarity term on arc-uniform resamples of both curves.
    let candidate_sig = match resample_arclength(&traced_curve, DEFAULT_METRIC_SAMPLES)
        .and_then(|c| curvature_signature(&c))
    {
        Ok(sig) => sig,
        Err(_) => return Ok(EvalBreakdown::unassemblable()),
    };
    let similarity = signature_distance(&target_sig, &candidate_sig);

    // Normalized Hausdorff against the dense traced curve.
    let nh = match normalized_hausdorff(&problem.target, &traced_curve) {
        Ok(v) => v,
        Err(_) => return Ok(EvalBreakdown::unassemblable()),
    };

    // Key points on the traced cycle.
    let fit = match keypoint_fit(&traced.ee_points, &problem.keypoints) {
        Ok(f) => f,
        Err(_) => return Ok(EvalBreakdown::unassemblable()),
    };
    let keypoint_error = fit.max_distance();
    let keypoint_order = fit.order_consistent;

    // Region containment for every joint center and the coupler point.
    let centers = design.joint_centers();
    let c1w = design.mount.apply_point(&centers[0]);
    let c4w = design.mount.apply_point(&centers[3]);
    let mut box_violation = problem.region.violation(&c1w).max(problem.region.violation(&c4w));
    for (i, poses) in traced.link_poses.iter().enumerate() {
        let c2w = design.mount.apply_point(&poses[0].apply_point(&centers[1]));
        let c3w = design.mount.apply_point(&poses[1].apply_point(&centers[2]));
        box_violation = box_violation
            .max(problem.region.violation(&c2w))
            .max(problem.region.violation(&c3w))
            .max(problem.region.violation(&traced.ee_points[i]));
    }

    // Cycle singularity floor.
    let mut min_singularity = f64::INFINITY;
    for &q in &traced.q {
        min_singularity = min_singularity.min(singularity_measure(design, q));
    }

    // Dynamics on the key-point re-timed schedule when the key points sit
    // on the trace; otherwise on the uniform schedule so infeasible
    // candidates still get comparable torque figures.
    let keypoints_ok = keypoint_order && keypoint_error <= KEYPOINT_SNAP_TOL;
    let dyn_schedule = if keypoints_ok {
        keypoint_schedule(&traced, &problem.keypoints, problem.period).unwrap_or(schedule)
    } else {
        schedule
    };
    let dynamics = match cycle_dynamics(design, &dyn_schedule, &problem.load) {
        Ok(d) => d,
        Err(_) => return Ok(EvalBreakdown::unassemblable()),
    };
    let torque_ratio = dynamics.max_torque / problem.stall_torque;
    let energy = dynamics.energy;

    let (w1, w2, w3) = problem.weights;
    let objective = w1 * similarity + w2 * torque_ratio + w3 * energy;

    // Exterior penalties on normalized residuals: zero at the tolerance,
    // O(1) when badly violated.
    let v_sing = if problem.sing_tol > 0.0 {
        ((problem.sing_tol - min_singularity) / problem.sing_tol).max(0.0)
    } else {
        0.0
    };
    let kp_effective = if keypoint_order { keypoint_error } else { keypoint_error + diag };
    let v_kp = ((kp_effective - KEYPOINT_SNAP_TOL) / diag).max(0.0);
    let v_box = box_violation / diag;
    let v_nh = ((nh - problem.nh_tol) / problem.nh_tol).max(0.0);
    let penalty = PENALTY_COEF * (v_sing * v_sing + v_kp * v_kp + v_box * v_box + v_nh * v_nh);

    let feasible = min_singularity >= problem.sing_tol
        && keypoint_order
        && keypoint_error <= KEYPOINT_SNAP_TOL
        && box_violation <= 0.0
        && nh <= problem.nh_tol;

    Ok(EvalBreakdown {
        assemblable: true,
        terms: ObjectiveTerms { similarity, torque_ratio, energy },
        objective,
        penalty,
        penalized: objective + penalty,
        constraints: ConstraintReport {
            min_singularity,
            keypoint_error,
            keypoint_order,
            box_violation,
            nh,
        },
        feasible,
    })
}
