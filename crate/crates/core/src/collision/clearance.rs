//! Exact capsule-clearance verification, independent of the smooth energy.
//!
//! The energy model sees spheres; the certificate sweep sees the capsules
//! between consecutive sphere centres, so nothing can slip between two
//! sampled spheres.  A capsule pair is exempt only when every one of its
//! four endpoint sphere pairs is exempt, which makes the sweep strictly
//! more conservative than the energy.

use super::model::{
    frame_positions, pair_included, Assembly, GeometryDesign, MechanismScene, JOINT_PARTICLES,
};
use crate::geom::Vec3;
use rayon::prelude::*;

/// Closest-point parameters `(s, t)` of segments `[p1, q1]` and `[p2, q2]`.
pub(crate) fn segment_closest(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> (f64, f64) {
    const EPS: f64 = 1e-12;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);

    if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_c = if denom.abs() > EPS {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t_c = (b * s_c + f) / e;
            if t_c < 0.0 {
                s_c = (-c / a).clamp(0.0, 1.0);
                (s_c, 0.0)
            } else if t_c > 1.0 {
                (((b - c) / a).clamp(0.0, 1.0), 1.0)
            } else {
                (s_c, t_c)
            }
        }
    }
}

/// Exact minimum distance between segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_distance(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    let (s, t) = segment_closest(p1, q1, p2, q2);
    ((p1 + (q1 - p1) * s) - (p2 + (q2 - p2) * t)).norm()
}

/// One capsule of the swept structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CapsuleId {
    /// Segment `seg` of chain `chain` (between spheres `seg` and `seg + 1`).
    ChainSegment { chain: usize, seg: usize },
    /// The single rigid segment spanning hinge `joint`.
    Joint { joint: usize },
}

/// Worst-case result of a clearance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceReport {
    /// Smallest capsule-surface clearance over all frames (mm; negative
    /// means interpenetration).
    pub min_clearance: f64,
    /// Frame index where the minimum occurs (first hit on ties).
    pub frame: usize,
    /// The two capsules achieving the minimum.
    pub pair: (CapsuleId, CapsuleId),
}

struct Capsule {
    id: CapsuleId,
    a: usize,
    b: usize,
    radius: f64,
}

fn capsules(geom: &GeometryDesign, asm: &Assembly) -> Vec<Capsule> {
    let mut out = Vec::new();
    for (k, chain) in geom.chains.iter().enumerate() {
        for seg in 0..chain.particles.len() - 1 {
            out.push(Capsule {
                id: CapsuleId::ChainSegment { chain: k, seg },
                a: asm.layout.chain_slot(k, seg),
                b: asm.layout.chain_slot(k, seg + 1),
                radius: chain.radius,
            });
        }
    }
    for j in 0..geom.chains.len() {
        out.push(Capsule {
            id: CapsuleId::Joint { joint: j },
            a: asm.layout.joint_slot(j, 0),
            b: asm.layout.joint_slot(j, JOINT_PARTICLES - 1),
            radius: geom.joint_radius(j),
        });
    }
    out
}

/// A capsule pair is checked when any of its endpoint sphere pairs is.
fn checked_pairs(geom: &GeometryDesign, asm: &Assembly, caps: &[Capsule]) -> Vec<(usize, usize)> {
    let mut checked = Vec::new();
    for i in 0..caps.len() {
        for l in i + 1..caps.len() {
            let (ca, cb) = (&caps[i], &caps[l]);
            let any = [(ca.a, cb.a), (ca.a, cb.b), (ca.b, cb.a), (ca.b, cb.b)]
                .iter()
                .any(|&(x, y)| {
                    pair_included(geom, &asm.layout, asm.layout.site(x), asm.layout.site(y))
                });
            if any {
                checked.push((i, l));
            }
        }
    }
    checked
}

/// Sweep every admissible capsule pair over every frame of `scene` and
/// report the worst clearance.  Frames are scanned in parallel but reduced
/// in index order, so the report is deterministic.
pub fn brute_force_clearance(geom: &GeometryDesign, scene: &MechanismScene) -> ClearanceReport {
    let asm = Assembly::new(geom);
    let caps = capsules(geom, &asm);
    let checked = checked_pairs(geom, &asm, &caps);

    let per_frame: Vec<(f64, usize)> = (0..scene.frame_count())
        .into_par_iter()
        .map(|f| {
            let mut pos = vec![Vec3::zeros(); asm.layout.total()];
            frame_positions(geom, scene, &asm.layout, f, &mut pos);
            let mut best = (f64::INFINITY, 0);
            for (rank, &(i, l)) in checked.iter().enumerate() {
                let (ca, cb) = (&caps[i], &caps[l]);
                let d = segment_distance(&pos[ca.a], &pos[ca.b], &pos[cb.a], &pos[cb.b])
                    - ca.radius
                    - cb.radius;
                if d < best.0 {
                    best = (d, rank);
                }
            }
            best
        })
        .collect();

    let mut min = (f64::INFINITY, 0, 0);
    for (f, &(d, rank)) in per_frame.iter().enumerate() {
        if d < min.0 {
            min = (d, f, rank);
        }
    }
    let (i, l) = checked[min.2];
    ClearanceReport {
        min_clearance: min.0,
        frame: min.1,
        pair: (caps[i].id, caps[l].id),
    }
}

/// One near-touching capsule pair at one frame, pinned so the geometry
/// solve can hold the exact capsule distance open where the sampled
/// spheres alone would be blind.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Contact {
    /// Frame index into the scene the contact was collected on.
    pub frame: usize,
    /// Capsule endpoints as `(chain, particle)`; the world point is the
    /// chain's body motion applied to that particle.
    pub ends_a: [(usize, usize); 2],
    pub ends_b: [(usize, usize); 2],
    /// Sum of the two capsule radii (mm).
    pub radii: f64,
    /// Dedup identity across collection rounds.
    pub key: (usize, CapsuleId, CapsuleId),
}

/// Chain-particle endpoints of a capsule.  A hinge capsule spans the end
/// of the arriving chain and the start of the departing one, each carried
/// by its own body.
fn capsule_ends(geom: &GeometryDesign, id: CapsuleId) -> [(usize, usize); 2] {
    match id {
        CapsuleId::ChainSegment { chain, seg } => [(chain, seg), (chain, seg + 1)],
        CapsuleId::Joint { joint } => {
            let prev = geom.chain_ending_at(joint);
            [(prev, geom.chains[prev].particles.len() - 1), (joint, 0)]
        }
    }
}

/// Every checked capsule pair closer than `margin` (surface distance, mm)
/// at any frame of `scene`, in (frame, pair-rank) order.
pub(crate) fn collect_contacts(
    geom: &GeometryDesign,
    scene: &MechanismScene,
    margin: f64,
) -> Vec<Contact> {
    let asm = Assembly::new(geom);
    let caps = capsules(geom, &asm);
    let checked = checked_pairs(geom, &asm, &caps);

    let per_frame: Vec<Vec<Contact>> = (0..scene.frame_count())
        .into_par_iter()
        .map(|f| {
            let mut pos = vec![Vec3::zeros(); asm.layout.total()];
            frame_positions(geom, scene, &asm.layout, f, &mut pos);
            let mut hits = Vec::new();
            for &(i, l) in &checked {
                let (ca, cb) = (&caps[i], &caps[l]);
                let d = segment_distance(&pos[ca.a], &pos[ca.b], &pos[cb.a], &pos[cb.b])
                    - ca.radius
                    - cb.radius;
                if d < margin {
                    hits.push(Contact {
                        frame: f,
                        ends_a: capsule_ends(geom, ca.id),
                        ends_b: capsule_ends(geom, cb.id),
                        radii: ca.radius + cb.radius,
                        key: (f, ca.id, cb.id),
                    });
                }
            }
            hits
        })
        .collect();
    per_frame.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::super::model::{pair_energy, CollisionModel, ParticleChain};
    use super::*;
    use crate::geom::{RigidTransform, ScrewAxis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn static_scene(bodies: usize, frames: usize) -> MechanismScene {
        MechanismScene {
            axes: (0..bodies)
                .map(|j| {
                    ScrewAxis::from_point_direction(&Vec3::new(j as f64, 0.0, 0.0), &Vec3::z())
                })
                .collect(),
            motions: (0..frames)
                .map(|_| vec![RigidTransform::identity(); bodies])
                .collect(),
        }
    }

    fn straight_chain(from: Vec3, to: Vec3, m: usize, radius: f64) -> ParticleChain {
        let particles = (0..m)
            .map(|i| {
                let t = i as f64 / (m - 1) as f64;
                from + (to - from) * t
            })
            .collect();
        ParticleChain { particles, radius }
    }

    #[test]
    fn parallel_capsules_with_a_three_mm_gap_clear_by_one() {
        let d = segment_distance(
            &Vec3::new(0.0, 0.0, 0.0),
            &Vec3::new(10.0, 0.0, 0.0),
            &Vec3::new(0.0, 3.0, 0.0),
            &Vec3::new(10.0, 3.0, 0.0),
        );
        assert!((d - 3.0).abs() <= 1e-12);
        assert!((d - 1.0 - 1.0 - 1.0).abs() <= 1e-12, "unit radii leave 1.0");
    }

    #[test]
    fn crossing_perpendicular_capsules_interpenetrate_by_half() {
        // Axes cross at height 1.5; unit radii overlap by 0.5.
        let d = segment_distance(
            &Vec3::new(-5.0, 0.0, 0.0),
            &Vec3::new(5.0, 0.0, 0.0),
            &Vec3::new(0.0, -5.0, 1.5),
            &Vec3::new(0.0, 5.0, 1.5),
        );
        assert!((d - 1.5).abs() <= 1e-12);
        assert!((d - 2.0 - (-0.5)).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_segments_fall_back_to_point_distances() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let q = Vec3::new(4.0, 6.0, 3.0);
        assert!((segment_distance(&p, &p, &q, &q) - 5.0).abs() <= 1e-12);
        let d = segment_distance(&p, &p, &Vec3::new(0.0, 0.0, 0.0), &Vec3::new(8.0, 0.0, 0.0));
        let expect = (2.0_f64 * 2.0 + 9.0).sqrt(); // closest at (1, 0, 0)
        assert!((d - expect).abs() <= 1e-12);
    }

    #[test]
    fn segment_distance_matches_a_dense_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..60 {
            let mut p = || {
                Vec3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                )
            };
            let (p1, q1, p2, q2) = (p(), p(), p(), p());
            let exact = segment_distance(&p1, &q1, &p2, &q2);
            let steps = 600;
            let mut sampled = f64::INFINITY;
            for i in 0..=steps {
                let s = i as f64 / steps as f64;
                let x = p1 + (q1 - p1) * s;
                for l in 0..=steps {
                    let t = l as f64 / steps as f64;
                    let y = p2 + (q2 - p2) * t;
                    sampled = sampled.min((x - y).norm());
                }
            }
            assert!(exact <= sampled + 1e-9, "case {case}: {exact} > {sampled}");
            assert!(sampled - exact <= 0.03, "case {case}: {exact} vs {sampled}");
        }
    }

    #[test]
    fn sweep_reports_the_engineered_minimum_pair() {
        // Chains long enough that the mid-span overlap is not masked by the
        // end-neighborhood exclusions active at both hinges of a two-link loop.
        let geom = GeometryDesign {
            chains: vec![
                straight_chain(Vec3::new(0.0, 0.0, 0.0), Vec3::new(30.0, 0.0, 0.0), 8, 1.0),
                straight_chain(Vec3::new(30.0, 4.5, 0.0), Vec3::new(0.0, 4.5, 0.0), 8, 1.0),
            ],
            d_j: 3.0,
        };
        let report = brute_force_clearance(&geom, &static_scene(2, 3));
        // Parallel chains 4.5 apart with unit radii leave 2.5.
        assert!((report.min_clearance - 2.5).abs() <= 1e-9, "{report:?}");
        assert_eq!(report.frame, 0, "static scene must hit the first frame");
    }

    #[test]
    fn hinge_pileups_do_not_poison_the_sweep() {
        // Same L fixture as the energy tests: six spheres coincide at the
        // hinge, every admissible capsule pair stays far away.
        let geom = GeometryDesign {
            chains: vec![
                straight_chain(Vec3::new(-30.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.0), 4, 1.0),
                straight_chain(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 30.0, 0.0), 4, 1.0),
            ],
            d_j: 3.0,
        };
        let report = brute_force_clearance(&geom, &static_scene(2, 1));
        assert!(report.min_clearance > 5.0, "{report:?}");
    }

    #[test]
    fn positive_clearance_bounds_the_collision_energy() {
        // Monotonicity gives total_energy <= pairs * frames * f(clearance);
        // with clearance above half a millimetre a small structure stays
        // under the feasibility threshold.
        let geom = GeometryDesign {
            chains: vec![
                straight_chain(Vec3::new(0.0, 0.0, 0.0), Vec3::new(20.0, 0.0, 0.0), 4, 1.0),
                straight_chain(Vec3::new(20.0, 2.6, 0.0), Vec3::new(0.0, 2.6, 0.0), 4, 1.0),
            ],
            d_j: 3.0,
        };
        let model = CollisionModel::default();
        let scene = static_scene(2, 12);
        let report = brute_force_clearance(&geom, &scene);
        assert!(report.min_clearance > 0.5, "{report:?}");

        let asm = Assembly::new(&geom);
        let energy = super::super::model::total_energy(&geom, &scene, &model);
        let bound =
            (asm.pairs.len() * scene.frame_count()) as f64 * pair_energy(report.min_clearance, &model);
        assert!(energy <= bound + 1e-12, "{energy} vs bound {bound}");
        assert!(energy < model.energy_threshold, "{energy}");
    }
}
