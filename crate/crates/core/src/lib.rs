//! Synthesis toolkit for single-actuator overconstrained spatial linkages.
//!
//! The crate turns a closed 3-D target trajectory, timing key points and an
//! external load profile into (1) an optimized Bennett-type linkage whose
//! coupler point traces the target, and (2) a self-collision-free shape for
//! every link, verified over a full actuation cycle.
//!
//! Module map:
//!
//! * [`geom`] — rigid transforms, rotations, screw axes;
//! * [`curve`] — discrete curves, B-splines, curvature signatures, Hausdorff
//!   metrics;
//! * [`kinematics`] — Bennett closure, product-of-exponentials forward
//!   kinematics, Jacobians and generic n-R loops;
//! * [`dynamics`] — quasi-static torque, cycle energy, actuation schedules;
//! * [`cma`] — a self-contained CMA-ES optimizer;
//! * [`synth`] — stage-1 parametric design synthesis;
//! * [`nlp`] — augmented-Lagrangian feasibility solver with L-BFGS inner
//!   iterations;
//! * [`collision`] — particle-chain collision model, constraint system and
//!   stage-2 link-geometry optimization;
//! * [`formats`] — JSON/CSV/OBJ interchange with stable field layouts.
//!
//! Units: millimetres, radians, Newtons and seconds unless stated otherwise;
//! energies are reported in Joules.

pub mod cma;
pub mod collision;
pub mod curve;
pub mod dynamics;
pub mod geom;
pub mod kinematics;
pub mod nlp;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use curve::{
    curvature_signature, hausdorff, normalized_hausdorff, resample_arclength, sample_bspline,
    similarity, BSplineCurve, CurvatureSignature, CurveError, DiscreteCurve3,
};
pub use dynamics::{
    cost_of_transport, cycle_dynamics, cycle_energy, keypoint_fit, keypoint_schedule, max_torque,
    torque, ActuationSchedule, CycleDynamics, DynamicsError, KeyPoint, KeyPointFit, KeyPointSpec,
    LoadPhase, LoadProfile, ScheduleSample, Wrench,
};
pub use geom::{RigidTransform, ScrewAxis, Vec3};
pub use kinematics::{
    closure_map, fk, jacobian, singularity_measure, trace, BennettClosure, BennettDesign,
    BennettParams, GenericLoop, KinematicsError, LoopMotion, LoopType, MotionTrace,
};
pub use synth::{
    BoxRegion, DesignProblem, EvalBreakdown, ParamBounds, SynthError, SynthOptions, SynthResult,
};
