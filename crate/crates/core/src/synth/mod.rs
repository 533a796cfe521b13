//! Stage-1 parametric synthesis: finds a placed Bennett design whose
//! coupler point traces a target curve with the required timing, under an
//! external load, inside a working region.
//!
//! The search runs CMA-ES over a normalized 12-parameter space (loop
//! parameters, coupler point, mount placement) and merges the constraints
//! — singularity clearance, key-point accuracy, region containment and
//! normalized Hausdorff — into the objective as quadratic exterior
//! penalties.

mod codec;
mod evaluate;
mod optimize;
mod problem;

pub use codec::{decode, encode, from_unit, to_unit};
pub use evaluate::{
    evaluate, ConstraintReport, EvalBreakdown, ObjectiveTerms, DYNAMICS_SAMPLES, PENALTY_COEF,
    UNASSEMBLABLE_PENALTY,
};
pub use optimize::{optimize, optimize_with, SynthOptions};
pub use problem::{
    BoxRegion, DesignProblem, ParamBounds, SynthError, SynthResult, DEFAULT_NH_TOL,
    DEFAULT_SING_TOL, DEFAULT_WEIGHTS, PARAM_COUNT,
};
