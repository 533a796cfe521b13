//! Linkage kinematics: Bennett parameterization and closure, screw-based
//! forward kinematics, Jacobians, and a generic numeric closure solver for
//! overconstrained nR loops.
//!
//! Frame convention (the "local" or design frame): origin on the active
//! joint axis, z along that axis, x along the base-link common normal. The
//! base link is fixed; a `mount` transform places the local frame into the
//! world.

mod bennett;
mod generic;

pub use bennett::{
    closure_map, fk, jacobian, jacobian_at, singularity_measure, trace, BennettClosure,
    BennettDesign, BennettParams, MotionTrace, JOINT_COUNT,
};
pub use generic::{
    bennett as bennett_loop, generic_closure, generic_sweep, goldberg_5r, planar_four_bar,
    spherical_four_bar, GenericLoop, LoopMotion, LoopType,
};

/// Loop-closure acceptance: Frobenius deviation of the composed loop
/// transform from the identity, in mixed units (rotation entries + mm).
pub const CLOSURE_TOL: f64 = 1e-8;

/// Errors raised by closure solving and kinematic evaluation.
#[derive(Debug, thiserror::Error)]
pub enum KinematicsError {
    #[error("invalid Bennett parameters: {0}")]
    InvalidParams(String),
    #[error("Bennett ratio infeasible: |b sin(alpha)| / a = {ratio:.6} > 1, no real beta")]
    InfeasibleRatio { ratio: f64 },
    #[error("no assemblable closure at theta1 = {theta1:.6} rad (best loop residual {residual:.3e})")]
    NotAssemblable { theta1: f64, residual: f64 },
    #[error("branch singularity at q = {q:.6} rad: finite-difference d(theta2)/dq inconsistent ({d1:.6e} vs {d2:.6e})")]
    BranchSingularity { q: f64, d1: f64, d2: f64 },
    #[error("trace frame {frame} (q = {q:.6} rad) failed: {source}")]
    Frame {
        frame: usize,
        q: f64,
        #[source]
        source: Box<KinematicsError>,
    },
    #[error("actuation schedule is empty")]
    EmptySchedule,
    #[error("loop least-squares did not converge: residual {residual:.3e} after {iters} iterations")]
    LsqDiverged { residual: f64, iters: usize },
    #[error("invalid loop construction: {0}")]
    InvalidLoop(String),
}
