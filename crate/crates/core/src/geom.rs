//! Shared geometric primitives: rigid transforms, rotation helpers and
//! zero-pitch screw axes.
//!
//! Conventions used throughout the crate:
//!
//! * lengths are millimetres, angles are radians;
//! * rotations are proper (`det R = +1`) and stored as explicit 3x3 matrices;
//! * a screw axis is the Pluecker line `(direction, moment)` of a revolute
//!   joint with `moment = point x direction` for any `point` on the axis.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Skew-symmetric cross-product matrix `[v]x` so that `hat(v) * w == v x w`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix about `axis` (unit) by `angle` via the Rodrigues formula.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let k = hat(axis);
    Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Rotation matrix from exponential coordinates `w` (axis * angle).
///
/// Falls back to a second-order Taylor expansion for very small `|w|` so the
/// map stays smooth through the identity.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    if theta < 1e-12 {
        let k = hat(w);
        return Mat3::identity() + k + k * k * 0.5;
    }
    axis_angle(&(w / theta), theta)
}

/// Exponential coordinates of a rotation matrix (inverse of [`exp_so3`]).
///
/// The returned vector has norm in `[0, pi]`. Conversion goes through a
/// unit quaternion, which keeps both the axis and the angle well
/// conditioned across the whole range — the naive `acos(trace)` route
/// loses ~8 digits of angle near a half turn.
pub fn log_so3(r: &Mat3) -> Vec3 {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    nalgebra::UnitQuaternion::from_rotation_matrix(&rot).scaled_axis()
}

/// Unsigned angle between two vectors in `[0, pi]`, computed with `atan2`
/// for full-range stability.
pub fn angle_between(u: &Vec3, v: &Vec3) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    } else if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Absolute circular distance between two angles, in `[0, pi]`.
pub fn angle_dist(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// A proper rigid-body transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rot: Mat3,
    pub trans: Vec3,
}

impl RigidTransform {
    pub fn new(rot: Mat3, trans: Vec3) -> Self {
        Self { rot, trans }
    }

    pub fn identity() -> Self {
        Self { rot: Mat3::identity(), trans: Vec3::zeros() }
    }

    /// Pure rotation about the z axis.
    pub fn rot_z(angle: f64) -> Self {
        Self::new(axis_angle(&Vec3::z(), angle), Vec3::zeros())
    }

    /// Pure rotation about the x axis.
    pub fn rot_x(angle: f64) -> Self {
        Self::new(axis_angle(&Vec3::x(), angle), Vec3::zeros())
    }

    /// Pure translation.
    pub fn translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rot * p + self.trans
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rot * v
    }

    /// Composition: `(self * other)(p) = self(other(p))`.
    pub fn compose(&self, other: &Self) -> Self {
        Self { rot: self.rot * other.rot, trans: self.rot * other.trans + self.trans }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self { rot: rt, trans: -(rt * self.trans) }
    }

    /// Frobenius norm of the difference to the identity transform, taken over
    /// the 3x4 `[R | t]` block. Used as the loop-closure residual.
    pub fn deviation_from_identity(&self) -> f64 {
        let dr = self.rot - Mat3::identity();
        (dr.norm_squared() + self.trans.norm_squared()).sqrt()
    }

    /// Frobenius distance between the `[R | t]` blocks of two transforms.
    pub fn distance(&self, other: &Self) -> f64 {
        let dr = self.rot - other.rot;
        let dt = self.trans - other.trans;
        (dr.norm_squared() + dt.norm_squared()).sqrt()
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Zero-pitch screw axis of a revolute joint: a directed line in Pluecker
/// coordinates `(direction, moment)` with `moment = point x direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScrewAxis {
    /// Unit direction of the joint axis.
    pub direction: Vec3,
    /// Line moment about the frame origin (mm).
    pub moment: Vec3,
}

impl ScrewAxis {
    /// Screw through `point` with unit `direction`.
    pub fn from_point_direction(point: &Vec3, direction: &Vec3) -> Self {
        let d = direction.normalize();
        Self { direction: d, moment: point.cross(&d) }
    }

    /// A point on the axis (the one closest to the origin).
    pub fn point_on_axis(&self) -> Vec3 {
        self.direction.cross(&self.moment)
    }

    /// Distance from `p` to the axis line.
    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        (p - self.point_on_axis()).cross(&self.direction).norm()
    }

    /// Rigid transform produced by rotating `angle` radians about this axis.
    pub fn exp(&self, angle: f64) -> RigidTransform {
        let w = self.direction;
        let k = hat(&w);
        let rot = Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
        // G(theta) v with unit omega and v = moment.
        let g = Mat3::identity() * angle
            + k * (1.0 - angle.cos())
            + k * k * (angle - angle.sin());
        RigidTransform::new(rot, g * self.moment)
    }

    /// The same axis expressed in the frame `t` maps points into, i.e. the
    /// adjoint transport of the screw line.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let d = t.rot * self.direction;
        Self { direction: d, moment: t.rot * self.moment + t.trans.cross(&d) }
    }

    /// Velocity of a point rigidly attached to a body spinning about this
    /// axis at unit rate: `v(p) = direction x p + moment`... with the line
    /// moment convention this is `moment + direction x p`.
    pub fn point_velocity(&self, p: &Vec3) -> Vec3 {
        self.direction.cross(p) + self.moment
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rotation_exp_log_roundtrip() {
        let ws = [
            Vec3::new(0.3, -0.2, 0.9),
            Vec3::new(1e-13, 0.0, 0.0),
            Vec3::new(0.0, 3.1, 0.0),
            Vec3::new(-2.0, 1.0, 0.5),
        ];
        for w in ws {
            let r = exp_so3(&w);
            let back = log_so3(&r);
            let r2 = exp_so3(&back);
            assert_relative_eq!(r, r2, epsilon = 1e-9);
        }
    }

    #[test]
    fn log_near_half_turn_is_stable() {
        let axis = Vec3::new(1.0, 2.0, -0.5).normalize();
        for eps in [0.0, 1e-9, 1e-7] {
            let r = axis_angle(&axis, std::f64::consts::PI - eps);
            let w = log_so3(&r);
            let r2 = exp_so3(&w);
            assert!((r - r2).norm() < 1e-7, "eps {eps}: {}", (r - r2).norm());
        }
    }

    #[test]
    fn transform_compose_inverse() {
        let a = RigidTransform::new(
            axis_angle(&Vec3::new(0.0, 1.0, 0.0), 0.7),
            Vec3::new(1.0, -2.0, 3.0),
        );
        let b = RigidTransform::rot_z(1.1) * RigidTransform::translation(Vec3::new(4.0, 0.0, 1.0));
        let p = Vec3::new(0.3, 0.4, 0.5);
        let lhs = (a * b).apply_point(&p);
        let rhs = a.apply_point(&b.apply_point(&p));
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        let id = a * a.inverse();
        assert!(id.deviation_from_identity() < 1e-12);
    }

    #[test]
    fn screw_exp_matches_rotation_about_offset_axis() {
        // Rotating about a z-parallel axis through (2, 0, 0) keeps that point
        // fixed and moves the origin on a circle of radius 2.
        let s = ScrewAxis::from_point_direction(&Vec3::new(2.0, 0.0, 0.0), &Vec3::z());
        let t = s.exp(std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(
            t.apply_point(&Vec3::new(2.0, 0.0, 0.0)),
            Vec3::new(2.0, 0.0, 0.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            t.apply_point(&Vec3::zeros()),
            Vec3::new(2.0, -2.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn screw_transform_consistency() {
        // Transporting the axis and then exponentiating equals conjugating the
        // original exponential: exp([T S] a) = T exp([S] a) T^-1.
        let s = ScrewAxis::from_point_direction(
            &Vec3::new(1.0, 2.0, 3.0),
            &Vec3::new(0.3, -0.4, 0.86).normalize(),
        );
        let t = RigidTransform::new(
            axis_angle(&Vec3::new(1.0, 1.0, 0.2).normalize(), 0.9),
            Vec3::new(-4.0, 2.5, 0.1),
        );
        let a = 0.77;
        let lhs = s.transformed(&t).exp(a);
        let rhs = t * s.exp(a) * t.inverse();
        assert!(lhs.distance(&rhs) < 1e-10);
    }

    #[test]
    fn point_velocity_matches_finite_difference() {
        let s = ScrewAxis::from_point_direction(
            &Vec3::new(0.5, -1.0, 2.0),
            &Vec3::new(0.0, 0.6, 0.8),
        );
        let p = Vec3::new(3.0, 1.0, -2.0);
        let h = 1e-6;
        let fd = (s.exp(h).apply_point(&p) - s.exp(-h).apply_point(&p)) / (2.0 * h);
        assert_relative_eq!(s.point_velocity(&p), fd, epsilon = 1e-6);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = 0.37 * k as f64;
            let w = wrap_angle(a);
            assert!(w > -std::f64::consts::PI - 1e-15 && w <= std::f64::consts::PI + 1e-15);
            assert!(((a - w) / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI
                - (a - w)
                < 1e-9);
        }
    }
}
