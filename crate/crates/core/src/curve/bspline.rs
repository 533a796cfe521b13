//! B-spline curve evaluation via the de Boor recursion.

use crate::curve::{CurveError, DiscreteCurve3};
use crate::geom::Vec3;

/// A degree-`p` B-spline curve with an explicit knot vector.
///
/// The curve is defined on the knot domain `[knots[degree], knots[n_ctrl]]`.
/// For a closed curve the caller supplies a periodic construction (wrapped
/// control points) or uses [`BSplineCurve::closed_uniform`], which wraps the
/// first `degree` control points and builds a uniform knot vector; either way
/// the two domain endpoints must evaluate to the same position.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineCurve {
    pub control: Vec<Vec3>,
    pub degree: usize,
    pub knots: Vec<f64>,
    pub closed: bool,
}

impl BSplineCurve {
    pub fn new(
        control: Vec<Vec3>,
        degree: usize,
        knots: Vec<f64>,
        closed: bool,
    ) -> Result<Self, CurveError> {
        if degree < 1 {
            return Err(CurveError::InvalidBSpline("degree must be >= 1".into()));
        }
        if control.len() < degree + 1 {
            return Err(CurveError::InvalidBSpline(format!(
                "need at least degree + 1 = {} control points, got {}",
                degree + 1,
                control.len()
            )));
        }
        if knots.len() != control.len() + degree + 1 {
            return Err(CurveError::InvalidBSpline(format!(
                "knot count {} != control ({}) + degree ({}) + 1",
                knots.len(),
                control.len(),
                degree
            )));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(CurveError::InvalidBSpline("knots must be non-decreasing".into()));
        }
        if knots[degree] >= knots[control.len()] {
            return Err(CurveError::InvalidBSpline("empty parameter domain".into()));
        }
        Ok(Self { control, degree, knots, closed })
    }

    /// Periodic uniform B-spline through wrapping the first `degree` control
    /// points; the result is `C^(degree-1)` continuous across the seam.
    pub fn closed_uniform(control: Vec<Vec3>, degree: usize) -> Result<Self, CurveError> {
        if control.len() < degree + 1 {
            return Err(CurveError::InvalidBSpline(format!(
                "closed uniform spline needs at least degree + 1 = {} control points, got {}",
                degree + 1,
                control.len()
            )));
        }
        let mut wrapped = control;
        for i in 0..degree {
            let p = wrapped[i];
            wrapped.push(p);
        }
        let knots = (0..wrapped.len() + degree + 1).map(|i| i as f64).collect();
        Self::new(wrapped, degree, knots, true)
    }

    /// Parameter domain `(start, end)` of the curve.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.control.len()])
    }

    /// Evaluates the curve at knot-domain parameter `u` by de Boor recursion.
    pub fn point_at(&self, u: f64) -> Vec3 {
        let (lo, hi) = self.domain();
        let u = u.clamp(lo, hi);
        let p = self.degree;
        // Knot span index k with knots[k] <= u < knots[k+1].
        let mut k = p;
        while k + 1 < self.control.len() && self.knots[k + 1] <= u {
            k += 1;
        }
        let mut d: Vec<Vec3> = (0..=p).map(|j| self.control[j + k - p]).collect();
        for r in 1..=p {
            for j in (r..=p).rev() {
                let i = j + k - p;
                let denom = self.knots[i + p + 1 - r] - self.knots[i];
                let alpha = if denom > 0.0 { (u - self.knots[i]) / denom } else { 0.0 };
                d[j] = d[j - 1] * (1.0 - alpha) + d[j] * alpha;
            }
        }
        d[p]
    }
}

/// Samples a B-spline into a polyline of `n` points.
///
/// Closed curves are sampled at `n` uniform parameters over `[lo, hi)` so the
/// seam point appears once; open curves include both domain endpoints.
pub fn sample_bspline(curve: &BSplineCurve, n: usize) -> Result<DiscreteCurve3, CurveError> {
    if n < 2 {
        return Err(CurveError::TooFewPoints { got: n, need: 2 });
    }
    let (lo, hi) = curve.domain();
    let points = if curve.closed {
        (0..n).map(|i| curve.point_at(lo + (hi - lo) * i as f64 / n as f64)).collect()
    } else {
        (0..n).map(|i| curve.point_at(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect()
    };
    Ok(DiscreteCurve3::new(points, curve.closed))
}
