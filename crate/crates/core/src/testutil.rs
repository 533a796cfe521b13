//! Shared fixtures for in-crate unit tests.

use crate::geom::{axis_angle, RigidTransform, Vec3};
use crate::kinematics::{BennettDesign, BennettParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random feasible Bennett parameters with a comfortable ratio margin.
pub(crate) fn sample_params(rng: &mut ChaCha8Rng) -> BennettParams {
    loop {
        let a = rng.gen_range(50.0..150.0);
        let alpha = rng.gen_range(0.3..std::f64::consts::PI - 0.3);
        let b = rng.gen_range(30.0..150.0);
        if (b * alpha.sin() / a).abs() <= 0.95 {
            return BennettParams::new(a, b, alpha).unwrap();
        }
    }
}

/// Random placed design with a generic mount and coupler point.
pub(crate) fn sample_design(rng: &mut ChaCha8Rng) -> BennettDesign {
    let params = sample_params(rng);
    let p0 = Vec3::new(
        rng.gen_range(-100.0..100.0),
        rng.gen_range(-100.0..100.0),
        rng.gen_range(-60.0..60.0),
    );
    let mount = RigidTransform::new(
        axis_angle(
            &Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize(),
            rng.gen_range(-3.0..3.0),
        ),
        Vec3::new(
            rng.gen_range(-200.0..200.0),
            rng.gen_range(-200.0..200.0),
            rng.gen_range(-200.0..200.0),
        ),
    );
    BennettDesign::new(params, p0, mount).unwrap()
}

/// The worked-example linkage used across modules: a = 100 mm, b = 80 mm,
/// alpha = 60 degrees, identity mount.
pub(crate) fn reference_design() -> BennettDesign {
    BennettDesign::new(
        BennettParams::new(100.0, 80.0, 60f64.to_radians()).unwrap(),
        Vec3::new(40.0, 20.0, 10.0),
        RigidTransform::identity(),
    )
    .unwrap()
}

/// Synthesis problem whose target is the reference design's own traced
/// cycle, with a box holding every moving point and a single key point.
pub(crate) fn self_problem(
    load: crate::dynamics::LoadProfile,
) -> (BennettDesign, crate::synth::DesignProblem) {
    use crate::dynamics::{ActuationSchedule, KeyPoint, KeyPointSpec};
    use crate::kinematics::trace;
    use crate::synth::{BoxRegion, DesignProblem, DYNAMICS_SAMPLES};

    let design = reference_design();
    let schedule = ActuationSchedule::constant_speed(2.0, DYNAMICS_SAMPLES, 0.0).unwrap();
    let traced = trace(&design, &schedule).unwrap();

    let centers = design.joint_centers();
    let mut pts: Vec<Vec3> = traced.ee_points.clone();
    pts.push(design.mount.apply_point(&centers[0]));
    pts.push(design.mount.apply_point(&centers[3]));
    for poses in &traced.link_poses {
        pts.push(design.mount.apply_point(&poses[0].apply_point(&centers[1])));
        pts.push(design.mount.apply_point(&poses[1].apply_point(&centers[2])));
    }
    let region = BoxRegion::around(&pts, 0.25).unwrap();

    let keypoints =
        KeyPointSpec::new(vec![KeyPoint { point: traced.ee_points[0], fraction: 1.0 }]).unwrap();
    let problem =
        DesignProblem::new(traced.ee_curve(), keypoints, load, region, 1000.0, 2.0).unwrap();
    (design, problem)
}
