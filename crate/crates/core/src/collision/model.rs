//! Particle-sphere collision energy over a mechanism cycle.
//!
//! Every link is a chain of spheres riding its body frame; every hinge adds a
//! short rigid segment of spheres spanning the axial gap between the two
//! adjoining chains.  The smooth pair energy saturates to zero at a safe
//! distance and grows without bound under deep interpenetration, so the sum
//! over all admissible pairs and all cycle frames acts as a differentiable
//! proxy for "the mechanism never touches itself".

use crate::geom::{RigidTransform, ScrewAxis, Vec3};
use crate::kinematics::{generic_sweep, GenericLoop, KinematicsError};
use rayon::prelude::*;

/// Spheres forming one hinge segment.
pub const JOINT_PARTICLES: usize = 5;

/// How many particles at each chain end are exempt from collision checks
/// against the structure sharing that hinge (they legitimately meet there).
pub const NEIGHBOR_EXCLUSION: usize = 3;

/// Parameters of the smooth pair energy and its cycle discretization.
#[derive(Debug, Clone)]
pub struct CollisionModel {
    /// Steepness of the tanh gate, per millimetre of surface distance.
    pub alpha: f64,
    /// Horizontal shift of the gate.
    pub beta: f64,
    /// Vertical shift; makes the energy vanish at large separation.
    pub offset: f64,
    /// Feasibility threshold on the total energy.
    pub energy_threshold: f64,
    /// Number of uniformly spaced cycle frames the energy sums over.
    pub frame_count: usize,
}

impl Default for CollisionModel {
    fn default() -> Self {
        CollisionModel {
            alpha: 5.0,
            beta: 2.0,
            offset: -0.5,
            energy_threshold: 0.1,
            frame_count: 120,
        }
    }
}

/// Smooth energy of one sphere pair at surface distance `d` (mm): around
/// `d = -0.4` it passes 0.5, by `d = 0` it is below 0.01, and it keeps
/// growing as the overlap deepens.
///
/// Evaluated as `(1 + e^{-2x}) / 2 + offset` with `x = alpha d + beta`,
/// which equals `[1 + tanh x]^{-1} + offset` exactly but stays finite (and
/// keeps a usable gradient) down to overlaps of tens of millimetres, where
/// the tanh form saturates to a division by zero in doubles.
pub fn pair_energy(distance: f64, model: &CollisionModel) -> f64 {
    let x = model.alpha * distance + model.beta;
    0.5 * (1.0 + (-2.0 * x).exp()) + model.offset
}

/// Exact derivative of [`pair_energy`] with respect to the distance.
pub fn pair_energy_derivative(distance: f64, model: &CollisionModel) -> f64 {
    let x = model.alpha * distance + model.beta;
    -model.alpha * (-2.0 * x).exp()
}

/// One link's collision proxy: sphere centres in reference-pose world
/// coordinates plus a common radius.  Chain `k` spans hinge `k` to hinge
/// `k + 1 (mod n)` and rides body `k`.
#[derive(Debug, Clone)]
pub struct ParticleChain {
    /// Sphere centres, ordered from the start hinge to the end hinge.
    pub particles: Vec<Vec3>,
    /// Common sphere radius (mm).
    pub radius: f64,
}

impl ParticleChain {
    /// Polyline length through the sphere centres.
    pub fn polyline_length(&self) -> f64 {
        self.particles
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    /// First sphere centre (at the start hinge).
    pub fn first(&self) -> Vec3 {
        self.particles[0]
    }

    /// Last sphere centre (at the end hinge).
    pub fn last(&self) -> Vec3 {
        *self.particles.last().expect("chain with no particles")
    }
}

/// Complete link-shape design for a closed n-R loop: one chain per body plus
/// the common axial hinge spacing.  Hinge spheres are not stored; they are
/// derived by linear interpolation between the two chain endpoints sharing
/// the hinge, so they follow those endpoints exactly during optimization.
#[derive(Debug, Clone)]
pub struct GeometryDesign {
    /// One chain per body, index-aligned with the loop's links.
    pub chains: Vec<ParticleChain>,
    /// Axial gap between the two chain endpoints at each hinge (mm).
    pub d_j: f64,
}

impl GeometryDesign {
    /// Number of chains (= bodies = hinges).
    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }

    /// Chain ending at hinge `j` (the one spanning `j - 1 -> j`).
    pub fn chain_ending_at(&self, j: usize) -> usize {
        (j + self.chains.len() - 1) % self.chains.len()
    }

    /// Radius used for the spheres of hinge `j`: the larger of the two
    /// adjoining chain radii.
    pub fn joint_radius(&self, j: usize) -> f64 {
        let prev = self.chain_ending_at(j);
        self.chains[prev].radius.max(self.chains[j].radius)
    }
}

/// Reference-pose hinge axes and per-frame body motions of a swept loop.
///
/// `motions[f][k]` maps body `k` from the reference pose to frame `f`;
/// frame 0 is the reference itself, so `motions[0]` is all identities.
#[derive(Debug, Clone)]
pub struct MechanismScene {
    /// Hinge axes at the reference pose, world frame.
    pub axes: Vec<ScrewAxis>,
    /// Frame-major, body-minor rigid motions relative to the reference.
    pub motions: Vec<Vec<RigidTransform>>,
}

impl MechanismScene {
    /// Sweep a loop through one full drive turn at `frame_count` uniform
    /// frames and record axes and relative body motions.
    pub fn from_loop(lp: &GenericLoop, frame_count: usize) -> Result<Self, KinematicsError> {
        let motion = generic_sweep(lp, frame_count)?;
        let ref_frames = lp.link_frames(lp.theta_ref());
        // A z-rotation fixes both the frame origin and its z column, so the
        // post-rotation frame of joint k still carries joint k's axis.
        let axes = ref_frames
            .iter()
            .map(|f| ScrewAxis::from_point_direction(&f.trans, &f.rot.column(2).into()))
            .collect();
        let motions = (0..frame_count)
            .map(|f| {
                (0..lp.joint_count())
                    .map(|k| motion.relative_pose(f, k))
                    .collect()
            })
            .collect();
        Ok(MechanismScene { axes, motions })
    }

    /// Number of hinges / bodies.
    pub fn body_count(&self) -> usize {
        self.axes.len()
    }

    /// Number of recorded cycle frames.
    pub fn frame_count(&self) -> usize {
        self.motions.len()
    }

    /// The same scene expressed in a rigidly displaced world frame.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let inv = t.inverse();
        MechanismScene {
            axes: self.axes.iter().map(|a| a.transformed(t)).collect(),
            motions: self
                .motions
                .iter()
                .map(|per_body| {
                    per_body
                        .iter()
                        .map(|m| t.compose(m).compose(&inv))
                        .collect()
                })
                .collect(),
        }
    }
}

/// Flat particle indexing: all chain spheres (chain-major), then all hinge
/// spheres (hinge-major).  Free optimization variables are exactly the chain
/// sphere coordinates, in this same order.
#[derive(Debug, Clone)]
pub struct ParticleLayout {
    chain_offsets: Vec<usize>,
    counts: Vec<usize>,
    joint_offset: usize,
    joints: usize,
}

impl ParticleLayout {
    pub fn of(geom: &GeometryDesign) -> Self {
        let mut chain_offsets = Vec::with_capacity(geom.chains.len());
        let mut counts = Vec::with_capacity(geom.chains.len());
        let mut off = 0;
        for c in &geom.chains {
            chain_offsets.push(off);
            counts.push(c.particles.len());
            off += c.particles.len();
        }
        ParticleLayout {
            chain_offsets,
            counts,
            joint_offset: off,
            joints: geom.chains.len(),
        }
    }

    /// Flat slot of chain sphere `(chain, idx)`.
    pub fn chain_slot(&self, chain: usize, idx: usize) -> usize {
        self.chain_offsets[chain] + idx
    }

    /// Flat slot of hinge sphere `(joint, idx)`.
    pub fn joint_slot(&self, joint: usize, idx: usize) -> usize {
        self.joint_offset + joint * JOINT_PARTICLES + idx
    }

    /// Total spheres, chains plus hinges.
    pub fn total(&self) -> usize {
        self.joint_offset + self.joints * JOINT_PARTICLES
    }

    /// Number of free scalar variables (chain sphere coordinates).
    pub fn free_dim(&self) -> usize {
        3 * self.joint_offset
    }

    /// Particles on chain `k`.
    pub fn count(&self, chain: usize) -> usize {
        self.counts[chain]
    }

    /// Decode a flat slot back into its structural site.
    pub fn site(&self, flat: usize) -> Site {
        if flat < self.joint_offset {
            // Chains are few; a linear scan is cheaper than bookkeeping.
            let chain = self
                .chain_offsets
                .iter()
                .rposition(|&off| off <= flat)
                .expect("flat index before first chain");
            Site::Chain {
                chain,
                idx: flat - self.chain_offsets[chain],
            }
        } else {
            let rel = flat - self.joint_offset;
            Site::Joint {
                joint: rel / JOINT_PARTICLES,
                idx: rel % JOINT_PARTICLES,
            }
        }
    }
}

/// Structural identity of one sphere slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    /// Sphere `idx` of chain `chain`.
    Chain { chain: usize, idx: usize },
    /// Sphere `idx` of the rigid hinge segment at joint `joint`.
    Joint { joint: usize, idx: usize },
}

/// Whether a sphere pair takes part in collision checking.
///
/// Excluded are: pairs within one chain, pairs within one hinge (both
/// rigid), the `NEIGHBOR_EXCLUSION`-deep end/start neighborhoods of two
/// chains meeting at a hinge, and a hinge against the same neighborhoods of
/// its own two chains.  Everything else counts, including distinct hinges.
pub fn pair_included(geom: &GeometryDesign, layout: &ParticleLayout, a: Site, b: Site) -> bool {
    let n = geom.chains.len();
    match (a, b) {
        (Site::Chain { chain: ca, idx: ia }, Site::Chain { chain: cb, idx: ib }) => {
            if ca == cb {
                return false;
            }
            // Chain ca flowing into cb at hinge cb means ca's tail meets
            // cb's head there; both directions can apply (n = 2 loops).
            let meets = |from: usize, i: usize, to: usize, l: usize| {
                (from + 1) % n == to
                    && i + NEIGHBOR_EXCLUSION >= layout.count(from)
                    && l < NEIGHBOR_EXCLUSION
            };
            !(meets(ca, ia, cb, ib) || meets(cb, ib, ca, ia))
        }
        (Site::Joint { joint: ja, .. }, Site::Joint { joint: jb, .. }) => ja != jb,
        (Site::Joint { joint, .. }, Site::Chain { chain, idx })
        | (Site::Chain { chain, idx }, Site::Joint { joint, .. }) => {
            let at_start = chain == joint && idx < NEIGHBOR_EXCLUSION;
            let at_end = chain == geom.chain_ending_at(joint)
                && idx + NEIGHBOR_EXCLUSION >= layout.count(chain);
            !(at_start || at_end)
        }
    }
}

/// Pair table plus per-sphere radii for one design; built once and reused
/// across frames and solver iterations.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub layout: ParticleLayout,
    /// Admissible sphere pairs as flat index pairs, in a fixed order.
    pub pairs: Vec<(u32, u32)>,
    /// Radius per flat sphere slot.
    pub radii: Vec<f64>,
}

impl Assembly {
    pub fn new(geom: &GeometryDesign) -> Self {
        let layout = ParticleLayout::of(geom);
        let n = geom.chains.len();
        let mut radii = vec![0.0; layout.total()];
        for (k, c) in geom.chains.iter().enumerate() {
            for i in 0..c.particles.len() {
                radii[layout.chain_slot(k, i)] = c.radius;
            }
        }
        for j in 0..n {
            for i in 0..JOINT_PARTICLES {
                radii[layout.joint_slot(j, i)] = geom.joint_radius(j);
            }
        }

        let total = layout.total();
        let mut pairs = Vec::new();
        for a in 0..total {
            for b in a + 1..total {
                if pair_included(geom, &layout, layout.site(a), layout.site(b)) {
                    pairs.push((a as u32, b as u32));
                }
            }
        }

        Assembly {
            layout,
            pairs,
            radii,
        }
    }
}

/// World sphere centres at one frame, written into `out` (flat layout).
pub(crate) fn frame_positions(
    geom: &GeometryDesign,
    scene: &MechanismScene,
    layout: &ParticleLayout,
    frame: usize,
    out: &mut [Vec3],
) {
    let bodies = &scene.motions[frame];
    for (k, chain) in geom.chains.iter().enumerate() {
        let m = &bodies[k];
        for (i, p) in chain.particles.iter().enumerate() {
            out[layout.chain_slot(k, i)] = m.apply_point(p);
        }
    }
    for j in 0..geom.chains.len() {
        let prev = geom.chain_ending_at(j);
        let end = bodies[prev].apply_point(&geom.chains[prev].last());
        let start = bodies[j].apply_point(&geom.chains[j].first());
        for i in 0..JOINT_PARTICLES {
            let lambda = i as f64 / (JOINT_PARTICLES - 1) as f64;
            out[layout.joint_slot(j, i)] = end * (1.0 - lambda) + start * lambda;
        }
    }
}

fn frame_energy(positions: &[Vec3], asm: &Assembly, model: &CollisionModel) -> f64 {
    let mut e = 0.0;
    for &(a, b) in &asm.pairs {
        let (a, b) = (a as usize, b as usize);
        let dist = (positions[a] - positions[b]).norm() - asm.radii[a] - asm.radii[b];
        e += pair_energy(dist, model);
    }
    e
}

/// Collision energy summed over every admissible sphere pair and every cycle
/// frame of the scene.  Deterministic: frames are reduced in index order.
pub fn total_energy(geom: &GeometryDesign, scene: &MechanismScene, model: &CollisionModel) -> f64 {
    let asm = Assembly::new(geom);
    total_energy_assembled(geom, scene, &asm, model)
}

/// [`total_energy`] with a prebuilt pair table.
pub fn total_energy_assembled(
    geom: &GeometryDesign,
    scene: &MechanismScene,
    asm: &Assembly,
    model: &CollisionModel,
) -> f64 {
    let per_frame: Vec<f64> = (0..scene.frame_count())
        .into_par_iter()
        .map(|f| {
            let mut pos = vec![Vec3::zeros(); asm.layout.total()];
            frame_positions(geom, scene, &asm.layout, f, &mut pos);
            frame_energy(&pos, asm, model)
        })
        .collect();
    per_frame.iter().sum()
}

/// Total energy plus its exact gradient with respect to the free chain
/// sphere coordinates (flat layout of [`ParticleLayout::free_dim`] scalars).
pub fn total_energy_with_grad(
    geom: &GeometryDesign,
    scene: &MechanismScene,
    asm: &Assembly,
    model: &CollisionModel,
    grad: &mut [f64],
) -> f64 {
    assert_eq!(grad.len(), asm.layout.free_dim());
    let n = geom.chains.len();
    let per_frame: Vec<(f64, Vec<f64>)> = (0..scene.frame_count())
        .into_par_iter()
        .map(|f| {
            let layout = &asm.layout;
            let mut pos = vec![Vec3::zeros(); layout.total()];
            frame_positions(geom, scene, layout, f, &mut pos);
            let bodies = &scene.motions[f];

            // Adjoint on world sphere centres first.
            let mut bar = vec![Vec3::zeros(); layout.total()];
            let mut e = 0.0;
            for &(a, b) in &asm.pairs {
                let (a, b) = (a as usize, b as usize);
                let delta = pos[a] - pos[b];
                let len = delta.norm();
                let dist = len - asm.radii[a] - asm.radii[b];
                e += pair_energy(dist, model);
                if len > 1e-12 {
                    let pull = delta * (pair_energy_derivative(dist, model) / len);
                    bar[a] += pull;
                    bar[b] -= pull;
                }
            }
            // Fold hinge adjoints back onto the chain endpoints they
            // interpolate, then map world adjoints to body-local gradients.
            for j in 0..n {
                let prev = geom.chain_ending_at(j);
                let last = layout.count(prev) - 1;
                for i in 0..JOINT_PARTICLES {
                    let lambda = i as f64 / (JOINT_PARTICLES - 1) as f64;
                    let w = bar[layout.joint_slot(j, i)];
                    bar[layout.chain_slot(prev, last)] += w * (1.0 - lambda);
                    bar[layout.chain_slot(j, 0)] += w * lambda;
                }
            }
            let mut g = vec![0.0; layout.free_dim()];
            for k in 0..n {
                let rot = &bodies[k].rot;
                for i in 0..layout.count(k) {
                    let slot = layout.chain_slot(k, i);
                    let local = rot.tr_mul(&bar[slot]);
                    let base = slot * 3;
                    g[base] = local.x;
                    g[base + 1] = local.y;
                    g[base + 2] = local.z;
                }
            }
            (e, g)
        })
        .collect();

    grad.fill(0.0);
    let mut total = 0.0;
    for (e, g) in &per_frame {
        total += e;
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    total
}
