//! Flat-vector encoding of a placed Bennett design.
//!
//! The search works on a fixed-layout list of 12 numbers (see
//! [`ParamBounds`]); the codec clamps into bounds, derives the dependent
//! twist from the Bennett ratio and rebuilds the mount rotation from
//! exponential coordinates.

use super::problem::{ParamBounds, PARAM_COUNT};
use crate::geom::{exp_so3, log_so3, RigidTransform, Vec3};
use crate::kinematics::{BennettDesign, BennettParams};

/// Rebuilds a design from a flat vector, clamping every component into the
/// bounds first. Returns `None` when the clamped loop parameters admit no
/// real dependent twist (`|b sin(alpha) / a| > 1`) — the caller penalizes
/// rather than aborts, so the search can keep moving.
pub fn decode(v: &[f64; PARAM_COUNT], bounds: &ParamBounds) -> Option<BennettDesign> {
    let v = bounds.clamp(v);
    let params = BennettParams::new(v[0], v[1], v[2]).ok()?;
    let p0 = Vec3::new(v[3], v[4], v[5]);
    let trans = Vec3::new(v[6], v[7], v[8]);
    let rot = exp_so3(&Vec3::new(v[9], v[10], v[11]));
    let mount = RigidTransform::new(rot, trans);
    BennettDesign::new(params, p0, mount).ok()
}

/// Flattens a design back into the search layout. The mount rotation maps
/// to its principal exponential coordinates, so `decode(encode(d))`
/// reproduces `d` whenever `d` lies within bounds.
pub fn encode(design: &BennettDesign) -> [f64; PARAM_COUNT] {
    let w = log_so3(&design.mount.rot);
    [
        design.params.a,
        design.params.b,
        design.params.alpha,
        design.p0[0],
        design.p0[1],
        design.p0[2],
        design.mount.trans[0],
        design.mount.trans[1],
        design.mount.trans[2],
        w[0],
        w[1],
        w[2],
    ]
}

/// Maps a unit-cube point into the bounded parameter space (no clamping;
/// [`decode`] clamps).
pub fn from_unit(u: &[f64], bounds: &ParamBounds) -> [f64; PARAM_COUNT] {
    debug_assert_eq!(u.len(), PARAM_COUNT);
    let mut v = [0.0; PARAM_COUNT];
    for i in 0..PARAM_COUNT {
        v[i] = bounds.lo[i] + u[i] * (bounds.hi[i] - bounds.lo[i]);
    }
    v
}

/// Maps a bounded parameter vector back into the unit cube.
pub fn to_unit(v: &[f64; PARAM_COUNT], bounds: &ParamBounds) -> [f64; PARAM_COUNT] {
    let mut u = [0.0; PARAM_COUNT];
    for i in 0..PARAM_COUNT {
        u[i] = (v[i] - bounds.lo[i]) / (bounds.hi[i] - bounds.lo[i]);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::super::problem::BoxRegion;
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_bounds() -> ParamBounds {
        let region =
            BoxRegion::new(Vec3::new(-200.0, -200.0, -200.0), Vec3::new(200.0, 200.0, 200.0))
                .unwrap();
        ParamBounds::standard(&region)
    }

    #[test]
    fn zero_rotation_coordinates_give_identity_mount() {
        let bounds = test_bounds();
        let v = [100.0, 80.0, 1.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let d = decode(&v, &bounds).unwrap();
        assert!((d.mount.rot - nalgebra::Matrix3::identity()).norm() <= 1e-15);
        assert_eq!(d.mount.trans, Vec3::zeros());
    }

    #[test]
    fn equal_lengths_give_equal_twists() {
        let bounds = test_bounds();
        for alpha in [0.5, 1.2, std::f64::consts::PI - 0.9] {
            let v = [120.0, 120.0, alpha, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
            let d = decode(&v, &bounds).unwrap();
            assert!((d.params.beta - d.params.alpha).abs() <= 1e-12);
        }
    }

    #[test]
    fn infeasible_ratio_is_a_marker_not_a_panic() {
        let bounds = test_bounds();
        // b sin(alpha) / a = 200 * sin(pi/2) / 40 = 5.
        let v = [40.0, 200.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0];
        assert!(decode(&v, &bounds).is_none());
    }

    #[test]
    fn decode_encode_decode_is_idempotent() {
        let bounds = test_bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut tried = 0;
        while tried < 50 {
            let mut v = [0.0; PARAM_COUNT];
            for i in 0..PARAM_COUNT {
                v[i] = rng.gen_range(bounds.lo[i]..bounds.hi[i]);
            }
            let Some(d1) = decode(&v, &bounds) else {
                continue; // infeasible ratio draw; try again
            };
            tried += 1;
            let v2 = encode(&d1);
            let d2 = decode(&v2, &bounds).expect("re-decode of a valid design");
            assert!((d1.params.a - d2.params.a).abs() <= 1e-12);
            assert!((d1.params.b - d2.params.b).abs() <= 1e-12);
            assert!((d1.params.alpha - d2.params.alpha).abs() <= 1e-12);
            assert!((d1.params.beta - d2.params.beta).abs() <= 1e-12);
            assert!((d1.p0 - d2.p0).norm() <= 1e-12);
            assert!((d1.mount.trans - d2.mount.trans).norm() <= 1e-12);
            assert!((d1.mount.rot - d2.mount.rot).norm() <= 1e-12);
        }
    }

    #[test]
    fn unit_cube_round_trip() {
        let bounds = test_bounds();
        let u = [0.25; PARAM_COUNT];
        let v = from_unit(&u, &bounds);
        let back = to_unit(&v, &bounds);
        for i in 0..PARAM_COUNT {
            assert!((back[i] - 0.25).abs() <= 1e-14);
            assert!(v[i] >= bounds.lo[i] && v[i] <= bounds.hi[i]);
        }
    }
}
