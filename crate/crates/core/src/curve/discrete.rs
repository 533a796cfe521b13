//! Polyline curves and uniform arc-length resampling.

use crate::curve::CurveError;
use crate::geom::Vec3;

/// An ordered polyline in 3-D space, optionally closed.
///
/// For a closed curve the wrap-around segment from the last point back to the
/// first is implicit; the first point is *not* repeated at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve3 {
    pub points: Vec<Vec3>,
    pub closed: bool,
}

impl DiscreteCurve3 {
    pub fn new(points: Vec<Vec3>, closed: bool) -> Self {
        Self { points, closed }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Segment count: `n` for closed curves (including the wrap segment),
    /// `n - 1` for open ones.
    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len().saturating_sub(1)
        }
    }

    /// Endpoint of segment `i` (wraps for closed curves).
    fn segment_end(&self, i: usize) -> Vec3 {
        self.points[(i + 1) % self.points.len()]
    }

    /// Total chord-integrated length of the polyline in mm.
    pub fn total_length(&self) -> f64 {
        (0..self.segment_count())
            .map(|i| (self.segment_end(i) - self.points[i]).norm())
            .sum()
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Diagonal length of the axis-aligned bounding box.
    pub fn bounding_box_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }
}

/// Resamples a polyline to `n` points spaced uniformly in chord-integrated
/// arc length, starting from the original first point.
///
/// The closed flag is preserved. For closed curves the `n` points divide the
/// full perimeter into `n` equal arcs; for open curves the endpoints are kept
/// and the interior is spaced at `L / (n - 1)`.
pub fn resample_arclength(curve: &DiscreteCurve3, n: usize) -> Result<DiscreteCurve3, CurveError> {
    let need = if curve.closed { 3 } else { 2 };
    if curve.len() < need {
        return Err(CurveError::TooFewPoints { got: curve.len(), need });
    }
    if n < 2 {
        return Err(CurveError::TooFewPoints { got: n, need: 2 });
    }
    let nseg = curve.segment_count();
    let mut cum = Vec::with_capacity(nseg + 1);
    cum.push(0.0);
    for i in 0..nseg {
        let l = (curve.segment_end(i) - curve.points[i]).norm();
        cum.push(cum[i] + l);
    }
    let total = *cum.last().unwrap();
    if total <= 1e-12 {
        return Err(CurveError::ZeroLength);
    }

    let step = if curve.closed { total / n as f64 } else { total / (n - 1) as f64 };
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for j in 0..n {
        let s = (step * j as f64).min(total);
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let seg_len = cum[seg + 1] - cum[seg];
        let t = if seg_len > 0.0 { (s - cum[seg]) / seg_len } else { 0.0 };
        let a = curve.points[seg];
        let b = curve.segment_end(seg);
        out.push(a + (b - a) * t);
    }
    Ok(DiscreteCurve3::new(out, curve.closed))
}
