//! Discrete 3-D curve geometry: B-spline sampling, arc-length resampling,
//! curvature signatures and Hausdorff-type set distances.
//!
//! Target trajectories enter the pipeline either as explicit point lists or
//! as B-splines; everything downstream works on [`DiscreteCurve3`] polylines
//! resampled to uniform arc spacing.

mod bspline;
mod discrete;
mod hausdorff;
mod signature;

pub use bspline::{sample_bspline, BSplineCurve};
pub use discrete::{resample_arclength, DiscreteCurve3};
pub use hausdorff::{hausdorff, normalized_hausdorff};
pub use signature::{curvature_signature, signature_distance, similarity, CurvatureSignature};

/// Default sample count used when two curves are compared by shape metrics.
pub const DEFAULT_METRIC_SAMPLES: usize = 50;

/// Errors raised by curve construction and metric evaluation.
#[derive(Debug, thiserror::Error)]
pub enum CurveError {
    #[error("curve has {got} points but at least {need} are required")]
    TooFewPoints { got: usize, need: usize },
    #[error("curve has zero total length; cannot resample")]
    ZeroLength,
    #[error("operation requires a closed curve")]
    NotClosed,
    #[error("invalid B-spline: {0}")]
    InvalidBSpline(String),
    #[error("bounding box of the reference curve is degenerate (diagonal = {diag:.3e} mm) while the Hausdorff distance is {h:.3e} mm")]
    DegenerateBBox { diag: f64, h: f64 },
}
