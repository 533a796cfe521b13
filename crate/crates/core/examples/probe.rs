//! Scratch probe: initial collision state of straight-bar geometry on the
//! three benchmark loops, to size radii and joint spacing for tests.

use std::time::Instant;

use overlinkd_core::collision::{
    brute_force_clearance, hermite_init, optimize_geometry, total_energy, CollisionModel,
    GeomConstraintParams, GeomSolveOptions, GeometryDesign, InitConfig, MechanismScene,
    ParticleChain,
};
use overlinkd_core::kinematics::{bennett_loop, planar_four_bar, spherical_four_bar, BennettParams};

fn straight_geometry(scene: &MechanismScene, m: usize, radius: f64, d_j: f64) -> GeometryDesign {
    let n = scene.body_count();
    let mut starts = Vec::with_capacity(n);
    let mut ends = Vec::with_capacity(n);
    for j in 0..n {
        let axis = &scene.axes[j];
        let center = axis.point_on_axis();
        let dir = axis.direction;
        ends.push(center - dir * (d_j / 2.0));
        starts.push(center + dir * (d_j / 2.0));
    }
    let chains = (0..n)
        .map(|k| {
            let p0 = starts[k];
            let p1 = ends[(k + 1) % n];
            let particles = (0..m)
                .map(|i| {
                    let t = i as f64 / (m - 1) as f64;
                    p0 * (1.0 - t) + p1 * t
                })
                .collect();
            ParticleChain { particles, radius }
        })
        .collect();
    GeometryDesign { chains, d_j }
}

fn solve_bench(
    name: &str,
    scene: &MechanismScene,
    dense: &MechanismScene,
    radius: f64,
    d_j: f64,
    station_factor: f64,
    seed: u64,
    max_iterations: usize,
) {
    let model = CollisionModel::default();
    let geom = straight_geometry(scene, 20, radius, d_j);
    let e = total_energy(&geom, scene, &model);
    let cl = brute_force_clearance(&geom, scene);
    println!(
        "{name}: r={radius} d_j={d_j} seed={seed} iters_cap={max_iterations} straight E={e:.4e} clearance={:.4}",
        cl.min_clearance
    );
    let cfg = InitConfig { radius, d_j, station_factor, seed, ..InitConfig::default() };
    let init = hermite_init(scene, &model, &cfg);
    println!(
        "    hermite: best E={:.4e} median E={:.4e}",
        init.energies[init.selected],
        {
            let mut e = init.energies.clone();
            e.sort_by(f64::total_cmp);
            e[e.len() / 2]
        },
    );
    let t0 = Instant::now();
    let params = GeomConstraintParams {
        max_segment_length: Some(2.0 * radius),
        ..GeomConstraintParams::default()
    };
    let out = optimize_geometry(
        init.best(),
        scene,
        &model,
        &params,
        &GeomSolveOptions { max_iterations },
    );
    println!(
        "    solve: feasible={} iters={} t={:.1}s E={:.3e} len={:.2e} curv={:.3} axis={:.2e} gap={:.2e} cos={:.2e} seg={:.2e}",
        out.feasible,
        out.iterations,
        t0.elapsed().as_secs_f64(),
        out.report.energy,
        out.report.length_violation,
        out.report.max_curvature,
        out.report.max_axis_distance,
        out.report.max_hinge_gap_error,
        out.report.max_end_cosine,
        out.report.max_segment_excess,
    );
    let cl = brute_force_clearance(&out.design, scene);
    println!("    clearance at {} frames: {:.4} pair={:?}", scene.frame_count(), cl.min_clearance, cl.pair);
    let cl = brute_force_clearance(&out.design, dense);
    println!("    clearance at {} frames: {:.4} pair={:?}", dense.frame_count(), cl.min_clearance, cl.pair);
}

fn main() {
    let which: Vec<String> = std::env::args().skip(1).collect();
    let all = which.is_empty();
    let has = |s: &str| all || which.iter().any(|w| w == s);

    let seed: u64 = std::env::var("PROBE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(11);
    let iters: usize = std::env::var("PROBE_ITERS").ok().and_then(|s| s.parse().ok()).unwrap_or(1500);
    if has("bennett") {
        let params = BennettParams::new(100.0, 80.0, 60f64.to_radians()).unwrap();
        let lp = bennett_loop(&params).unwrap();
        let scene = MechanismScene::from_loop(&lp, 120).unwrap();
        let dense = MechanismScene::from_loop(&lp, 1200).unwrap();
        solve_bench("bennett", &scene, &dense, 4.0, 20.0, 1.5, seed, iters);
    }
    if has("planar") {
        let lp = planar_four_bar(&[30.0, 80.0, 70.0, 90.0], 0.7, 1.0).unwrap();
        let scene = MechanismScene::from_loop(&lp, 120).unwrap();
        let dense = MechanismScene::from_loop(&lp, 1200).unwrap();
        solve_bench("planar", &scene, &dense, 4.0, 20.0, 1.5, seed, iters);
    }
    if has("spherical") {
        let lp = spherical_four_bar(
            &[
                20f64.to_radians(),
                55f64.to_radians(),
                50f64.to_radians(),
                60f64.to_radians(),
            ],
            0.7,
            1.0,
        )
        .unwrap();
        let scene = MechanismScene::from_loop(&lp, 120).unwrap();
        let dense = MechanismScene::from_loop(&lp, 1200).unwrap();
        solve_bench("spherical", &scene, &dense, 4.0, 20.0, 4.0, seed, iters);
    }
}
