//! Curvature signatures and the cyclic shape-similarity distance.
//!
//! A closed polyline is summarized per sample by two unsigned angles: the
//! turning angle between consecutive segments and the torsion-like angle
//! between the binormals of consecutive segment pairs. Both are invariant
//! under rigid motion and uniform scaling, which makes the signature distance
//! a pose-free measure of shape difference.

use crate::curve::{CurveError, DiscreteCurve3};
use crate::curve::discrete::resample_arclength;
use crate::geom::{angle_between, Vec3};

/// Cross products below this norm (between unit segment directions) are
/// treated as degenerate: the segment pair is collinear and defines no plane.
const DEGENERATE_CROSS: f64 = 1e-12;

/// Per-sample turning and binormal angles of a closed polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSignature {
    /// Turning angle at each vertex, in `[0, pi]`.
    pub gamma: Vec<f64>,
    /// Angle between the binormals of the segment pairs on either side of
    /// each segment, in `[0, pi]`.
    pub delta: Vec<f64>,
}

impl CurvatureSignature {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Computes the curvature signature of a closed curve with `n >= 4` samples.
///
/// `gamma[i]` is the angle between segments `(p[i-1], p[i])` and
/// `(p[i], p[i+1])`. `delta[i]` is the angle between the normals of the
/// planes spanned by those segments and by the next segment pair. Collinear
/// segment pairs (cross-product norm below 1e-12 on unit directions) yield
/// zero for both angles.
pub fn curvature_signature(curve: &DiscreteCurve3) -> Result<CurvatureSignature, CurveError> {
    if !curve.closed {
        return Err(CurveError::NotClosed);
    }
    let n = curve.len();
    if n < 4 {
        return Err(CurveError::TooFewPoints { got: n, need: 4 });
    }
    let dirs: Vec<Option<Vec3>> = (0..n)
        .map(|i| {
            let e = curve.points[(i + 1) % n] - curve.points[i];
            let l = e.norm();
            (l > 1e-15).then(|| e / l)
        })
        .collect();
    // Unit plane normals of consecutive segment pairs; None when degenerate.
    let normals: Vec<Option<Vec3>> = (0..n)
        .map(|i| {
            let prev = dirs[(i + n - 1) % n]?;
            let next = dirs[i]?;
            let c = prev.cross(&next);
            let l = c.norm();
            (l >= DEGENERATE_CROSS).then(|| c / l)
        })
        .collect();
    let gamma: Vec<f64> = (0..n)
        .map(|i| match (dirs[(i + n - 1) % n], dirs[i], &normals[i]) {
            (Some(prev), Some(next), Some(_)) => angle_between(&prev, &next),
            _ => 0.0,
        })
        .collect();
    let delta: Vec<f64> = (0..n)
        .map(|i| match (&normals[i], &normals[(i + 1) % n]) {
            (Some(a), Some(b)) => angle_between(a, b),
            _ => 0.0,
        })
        .collect();
    Ok(CurvatureSignature { gamma, delta })
}

/// Signature distance between two closed curves, in `[0, 1]`.
///
/// The per-sample absolute signature differences are summed under the best
/// cyclic start-offset (exhaustive search over all `n` shifts with early
/// exit) and normalized by `2 * pi * n`, the maximum attainable sum. Curves
/// with different sample counts are first made comparable by resampling the
/// coarser one to the finer count.
pub fn similarity(a: &DiscreteCurve3, b: &DiscreteCurve3) -> Result<f64, CurveError> {
    let (sa, sb);
    let (siga, sigb) = if a.len() == b.len() {
        (curvature_signature(a)?, curvature_signature(b)?)
    } else if a.len() < b.len() {
        sa = resample_arclength(a, b.len())?;
        (curvature_signature(&sa)?, curvature_signature(b)?)
    } else {
        sb = resample_arclength(b, a.len())?;
        (curvature_signature(a)?, curvature_signature(&sb)?)
    };
    Ok(signature_distance(&siga, &sigb))
}

/// Best-offset cyclic distance between two equal-length signatures,
/// normalized to `[0, 1]`.
pub fn signature_distance(a: &CurvatureSignature, b: &CurvatureSignature) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len(), "signature lengths must match");
    let mut best = f64::INFINITY;
    for k in 0..n {
        let mut sum = 0.0;
        for i in 0..n {
            let j = (k + i) % n;
            sum += (a.gamma[j] - b.gamma[i]).abs() + (a.delta[j] - b.delta[i]).abs();
            if sum >= best {
                break;
            }
        }
        best = best.min(sum);
    }
    best / (2.0 * std::f64::consts::PI * n as f64)
}
