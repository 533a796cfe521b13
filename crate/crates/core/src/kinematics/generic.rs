//! Numeric closure for general single-loop nR linkages (n = 4, 5, 6).
//!
//! A loop is a cyclic product `T(theta) = prod_i Rz(theta_i) * K_i` where
//! `K_i` is the fixed link transform carrying joint frame `i` to joint frame
//! `i+1`; the loop closes when `T` is the identity. Passive angles are
//! recovered by damped Gauss-Newton least squares on the 12 affine entries
//! of `T - I`, warm-started across sweeps for branch continuity.

use super::{BennettParams, KinematicsError, CLOSURE_TOL};
use crate::geom::{hat, wrap_angle, RigidTransform, Vec3};
use nalgebra::{DMatrix, DVector};

/// Family tag for a generic loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopType {
    /// All joint axes parallel; links are in-plane offsets.
    Planar,
    /// All joint axes concurrent; links are pure twists.
    Spherical,
    /// Bennett 4R expressed as a generic loop.
    Bennett,
    /// Two fused Bennett loops sharing a common link, common link removed.
    Goldberg5R,
}

/// A single-loop revolute linkage given by its link transforms and one
/// assembled reference configuration (which fixes the branch).
#[derive(Debug, Clone, PartialEq)]
pub struct GenericLoop {
    pub loop_type: LoopType,
    links: Vec<RigidTransform>,
    theta_ref: Vec<f64>,
}

/// Gauss-Newton iteration cap for one closure solve.
const GN_MAX_ITERS: usize = 100;
/// Residual at which iteration stops early.
const GN_TARGET: f64 = 1e-12;
/// Largest residual accepted as a valid closure.
const GN_ACCEPT: f64 = 1e-9;

impl GenericLoop {
    /// Builds a loop from link transforms and a reference assembly, which
    /// must close within [`CLOSURE_TOL`].
    pub fn new(
        loop_type: LoopType,
        links: Vec<RigidTransform>,
        theta_ref: Vec<f64>,
    ) -> Result<Self, KinematicsError> {
        let n = links.len();
        if !(4..=6).contains(&n) {
            return Err(KinematicsError::InvalidLoop(format!(
                "loop must have 4 to 6 joints, got {n}"
            )));
        }
        if theta_ref.len() != n {
            return Err(KinematicsError::InvalidLoop(format!(
                "reference has {} angles for {n} joints",
                theta_ref.len()
            )));
        }
        let lp = GenericLoop { loop_type, links, theta_ref };
        let res = lp.residual(&lp.theta_ref);
        if res > CLOSURE_TOL {
            return Err(KinematicsError::InvalidLoop(format!(
                "reference assembly does not close (residual {res:.3e})"
            )));
        }
        Ok(lp)
    }

    pub fn joint_count(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[RigidTransform] {
        &self.links
    }

    pub fn theta_ref(&self) -> &[f64] {
        &self.theta_ref
    }

    /// Full loop product for a joint-angle vector.
    pub fn loop_transform(&self, theta: &[f64]) -> RigidTransform {
        let mut t = RigidTransform::identity();
        for (th, link) in theta.iter().zip(&self.links) {
            t = t.compose(&RigidTransform::rot_z(*th)).compose(link);
        }
        t
    }

    /// Frobenius deviation of the loop product from the identity.
    pub fn residual(&self, theta: &[f64]) -> f64 {
        self.loop_transform(theta).deviation_from_identity()
    }

    /// World frame rigidly attached to link `k` (the body carrying `K_k`
    /// from joint `k` to joint `k+1`): the chain product up to and
    /// including joint `k`'s rotation.
    pub fn link_frames(&self, theta: &[f64]) -> Vec<RigidTransform> {
        let n = self.links.len();
        let mut frames = Vec::with_capacity(n);
        let mut prefix = RigidTransform::identity();
        for k in 0..n {
            let g = prefix.compose(&RigidTransform::rot_z(theta[k]));
            frames.push(g);
            prefix = g.compose(&self.links[k]);
        }
        frames
    }
}

/// 12-entry residual vector of `T - I`: rotation columns then translation.
fn residual_vec(t: &RigidTransform) -> DVector<f64> {
    let mut r = DVector::zeros(12);
    for c in 0..3 {
        for row in 0..3 {
            r[3 * c + row] = t.rot[(row, c)] - if row == c { 1.0 } else { 0.0 };
        }
    }
    for row in 0..3 {
        r[9 + row] = t.trans[row];
    }
    r
}

/// Affine (not necessarily rigid) derivative carrier for chain products.
#[derive(Clone, Copy)]
struct AffineDeriv {
    rot: nalgebra::Matrix3<f64>,
    trans: Vec3,
}

/// Analytic Jacobian of the 12-entry loop residual with respect to the
/// passive angles `theta[1..]`.
fn residual_jacobian(lp: &GenericLoop, theta: &[f64]) -> DMatrix<f64> {
    let n = theta.len();
    // Prefix products up to (exclusive) each joint, suffix products after
    // each link.
    let mut prefixes = Vec::with_capacity(n);
    let mut run = RigidTransform::identity();
    for k in 0..n {
        prefixes.push(run);
        run = run.compose(&RigidTransform::rot_z(theta[k])).compose(&lp.links[k]);
    }
    let mut suffixes = vec![RigidTransform::identity(); n];
    let mut tail = RigidTransform::identity();
    for k in (0..n).rev() {
        suffixes[k] = tail;
        tail = RigidTransform::rot_z(theta[k]).compose(&lp.links[k]).compose(&tail);
    }
    let hz = hat(&Vec3::z());
    let mut jac = DMatrix::zeros(12, n - 1);
    for k in 1..n {
        // d/dtheta_k of Rz(theta_k) * K_k.
        let x = RigidTransform::rot_z(theta[k]).compose(&lp.links[k]);
        let d = AffineDeriv { rot: hz * x.rot, trans: hz * x.trans };
        // Chain: prefix * d * suffix.
        let p = &prefixes[k];
        let left = AffineDeriv { rot: p.rot * d.rot, trans: p.rot * d.trans };
        let s = &suffixes[k];
        let full = AffineDeriv {
            rot: left.rot * s.rot,
            trans: left.rot * s.trans + left.trans,
        };
        for c in 0..3 {
            for row in 0..3 {
                jac[(3 * c + row, k - 1)] = full.rot[(row, c)];
            }
        }
        for row in 0..3 {
            jac[(9 + row, k - 1)] = full.trans[row];
        }
    }
    jac
}

/// Solves the passive angles in place (entries `1..n`) by damped
/// Gauss-Newton, leaving `theta[0]` untouched. Returns the final residual.
fn solve_passive(lp: &GenericLoop, theta: &mut [f64]) -> Result<f64, KinematicsError> {
    let n = theta.len();
    let mut lambda = 1e-8;
    let mut res = residual_vec(&lp.loop_transform(theta)).norm();
    for iter in 0..GN_MAX_ITERS {
        if res <= GN_TARGET {
            break;
        }
        let r = residual_vec(&lp.loop_transform(theta));
        let jac = residual_jacobian(lp, theta);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut stepped = false;
        for _ in 0..40 {
            let mut m = jtj.clone();
            for i in 0..n - 1 {
                m[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
            }
            let Some(chol) = m.cholesky() else {
                lambda = (lambda * 10.0).max(1e-12);
                continue;
            };
            let delta = chol.solve(&(-&jtr));
            let mut trial = theta.to_vec();
            for i in 1..n {
                trial[i] += delta[i - 1];
            }
            let tres = residual_vec(&lp.loop_transform(&trial)).norm();
            if tres < res {
                theta[1..n].copy_from_slice(&trial[1..n]);
                res = tres;
                lambda = (lambda * 0.3).max(1e-14);
                stepped = true;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !stepped {
            return if res <= GN_ACCEPT {
                Ok(res)
            } else {
                Err(KinematicsError::LsqDiverged { residual: res, iters: iter })
            };
        }
    }
    if res <= GN_ACCEPT {
        Ok(res)
    } else {
        Err(KinematicsError::LsqDiverged { residual: res, iters: GN_MAX_ITERS })
    }
}

/// Closure solve at drive angle `q` from a full-length guess vector. The
/// guess fixes the branch; its first entry is replaced by `q`.
pub fn generic_closure(
    lp: &GenericLoop,
    q: f64,
    guess: &[f64],
) -> Result<Vec<f64>, KinematicsError> {
    if guess.len() != lp.joint_count() {
        return Err(KinematicsError::InvalidLoop(format!(
            "guess has {} angles for {} joints",
            guess.len(),
            lp.joint_count()
        )));
    }
    let mut theta = guess.to_vec();
    theta[0] = q;
    solve_passive(lp, &mut theta)?;
    Ok(theta)
}

/// One full drive-joint cycle of a generic loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopMotion {
    /// Drive angle per frame.
    pub q: Vec<f64>,
    /// Full joint-angle vector per frame.
    pub angles: Vec<Vec<f64>>,
    /// Per-frame world frame of every link (see [`GenericLoop::link_frames`]).
    pub link_poses: Vec<Vec<RigidTransform>>,
}

impl LoopMotion {
    pub fn frames(&self) -> usize {
        self.q.len()
    }

    /// Motion of link `k` at `frame` relative to its pose in frame 0.
    pub fn relative_pose(&self, frame: usize, link: usize) -> RigidTransform {
        self.link_poses[frame][link].compose(&self.link_poses[0][link].inverse())
    }
}

/// Sweeps the drive joint through one full turn from the reference,
/// warm-starting each frame from the previous solution.
pub fn generic_sweep(lp: &GenericLoop, frames: usize) -> Result<LoopMotion, KinematicsError> {
    if frames == 0 {
        return Err(KinematicsError::EmptySchedule);
    }
    let mut theta = lp.theta_ref().to_vec();
    let q0 = theta[0];
    let mut out = LoopMotion {
        q: Vec::with_capacity(frames),
        angles: Vec::with_capacity(frames),
        link_poses: Vec::with_capacity(frames),
    };
    for i in 0..frames {
        let q = q0 + std::f64::consts::TAU * i as f64 / frames as f64;
        theta[0] = q;
        solve_passive(lp, &mut theta).map_err(|e| KinematicsError::Frame {
            frame: i,
            q,
            source: Box::new(e),
        })?;
        out.q.push(q);
        out.angles.push(theta.clone());
        out.link_poses.push(lp.link_frames(&theta));
    }
    Ok(out)
}

/// Analytic planar four-bar assembly: joint 0 at the origin, joint 3 at
/// `(-l3, 0)`, circle-intersection for the coupler joint. Returns the four
/// relative joint angles, or `None` when the crank position cannot close.
fn planar_assembly(lengths: &[f64; 4], crank: f64, elbow: f64) -> Option<[f64; 4]> {
    let [l0, l1, l2, l3] = *lengths;
    let p1 = nalgebra::Vector2::new(l0 * crank.cos(), l0 * crank.sin());
    let p3 = nalgebra::Vector2::new(-l3, 0.0);
    let d = (p3 - p1).norm();
    if d > l1 + l2 || d < (l1 - l2).abs() || d == 0.0 {
        return None;
    }
    let e = (p3 - p1) / d;
    let perp = nalgebra::Vector2::new(-e.y, e.x);
    let m = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let h = (l1 * l1 - m * m).max(0.0).sqrt();
    let p2 = p1 + e * m + perp * (elbow.signum() * h);
    let phi1 = (p2.y - p1.y).atan2(p2.x - p1.x);
    let phi2 = (p3.y - p2.y).atan2(p3.x - p2.x);
    Some([
        crank,
        wrap_angle(phi1 - crank),
        wrap_angle(phi2 - phi1),
        wrap_angle(-phi2),
    ])
}

/// Planar four-bar loop: all axes along z, link `i` a pure x-offset of
/// `lengths[i]` (link 3 is the fixed base). `crank`/`elbow` pick the
/// reference assembly and branch.
pub fn planar_four_bar(
    lengths: &[f64; 4],
    crank: f64,
    elbow: f64,
) -> Result<GenericLoop, KinematicsError> {
    if lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(KinematicsError::InvalidLoop("link lengths must be positive".into()));
    }
    let theta = planar_assembly(lengths, crank, elbow).ok_or_else(|| {
        KinematicsError::InvalidLoop(format!("planar loop cannot assemble at crank {crank:.4}"))
    })?;
    let links = lengths
        .iter()
        .map(|&l| RigidTransform::translation(Vec3::new(l, 0.0, 0.0)))
        .collect();
    GenericLoop::new(LoopType::Planar, links, theta.to_vec())
}

/// ZXZ extraction used by the spherical assembly: factors a rotation `Q`
/// as `Rz(t2) Rx(mid) Rz(t3)` and returns `(t2, t3)`.
fn zxz_outer_angles(q: &nalgebra::Matrix3<f64>) -> (f64, f64) {
    (q[(0, 2)].atan2(-q[(1, 2)]), q[(2, 0)].atan2(q[(2, 1)]))
}

/// Spherical four-bar loop: all axes through the origin, link `i` a pure
/// x-twist of `twists[i]` radians. The closure condition at the given
/// crank is solved in closed form; `elbow` selects among the (at most two)
/// assembly branches.
pub fn spherical_four_bar(
    twists: &[f64; 4],
    crank: f64,
    elbow: f64,
) -> Result<GenericLoop, KinematicsError> {
    if twists.iter().any(|&t| !(t > 0.0 && t < std::f64::consts::PI)) {
        return Err(KinematicsError::InvalidLoop(
            "link twists must lie strictly between 0 and pi".into(),
        ));
    }
    let [a0, a1, a2, a3] = *twists;
    let rx = |t: f64| RigidTransform::rot_x(t).rot;
    let rz = |t: f64| RigidTransform::rot_z(t).rot;
    // Residual g(t1) = (Rx(a3) Rz(crank) Rx(a0) Rz(t1) Rx(a1))_33 - cos a2
    // is harmonic in t1: A sin + B cos + D.
    let m = rx(a3) * rz(crank) * rx(a0);
    let (s1, c1) = (a1.sin(), a1.cos());
    let a_coef = m[(2, 0)] * s1;
    let b_coef = -m[(2, 1)] * s1;
    let d_coef = m[(2, 2)] * c1 - a2.cos();
    let r = a_coef.hypot(b_coef);
    if r < 1e-15 || (d_coef / r).abs() > 1.0 + 1e-12 {
        return Err(KinematicsError::InvalidLoop(format!(
            "spherical loop cannot assemble at crank {crank:.4}"
        )));
    }
    let phase = b_coef.atan2(a_coef);
    let base = (-d_coef / r).clamp(-1.0, 1.0).asin();
    let mut branches: Vec<[f64; 4]> = Vec::new();
    for t1 in [wrap_angle(base - phase), wrap_angle(std::f64::consts::PI - base - phase)] {
        let q = (m * rz(t1) * rx(a1)).transpose();
        let (t2, t3) = zxz_outer_angles(&q);
        let theta = [crank, t1, t2, t3];
        let links: Vec<RigidTransform> = twists
            .iter()
            .map(|&t| RigidTransform::rot_x(t))
            .collect();
        let probe = GenericLoop { loop_type: LoopType::Spherical, links, theta_ref: vec![] };
        if probe.residual(&theta) <= CLOSURE_TOL
            && !branches.iter().any(|b| (b[1] - t1).abs() < 1e-9)
        {
            branches.push(theta);
        }
    }
    if branches.is_empty() {
        return Err(KinematicsError::InvalidLoop(format!(
            "spherical loop cannot assemble at crank {crank:.4}"
        )));
    }
    branches.sort_by(|x, y| x[1].total_cmp(&y[1]));
    let pick = if elbow >= 0.0 { branches.len() - 1 } else { 0 };
    let links = twists.iter().map(|&t| RigidTransform::rot_x(t)).collect();
    GenericLoop::new(LoopType::Spherical, links, branches[pick].to_vec())
}

/// A Bennett linkage expressed as a generic loop, referenced at its
/// assembly configuration for drive angle 0.
pub fn bennett(params: &BennettParams) -> Result<GenericLoop, KinematicsError> {
    let t2 = super::closure_map(params, 0.0)?;
    let links = (0..4).map(|i| params.link_transform(i)).collect();
    GenericLoop::new(LoopType::Bennett, links, vec![0.0, t2, 0.0, t2])
}

/// Fuses two Bennett loops sharing their `(b, beta)` link into the movable
/// 5R loop: the loops are assembled with the common link coincident, the
/// common link is removed, and the two links adjacent to it at one shared
/// joint are rigidly joined. `a2` is the second loop's long-link length;
/// its twist follows from sharing the base loop's length/twist ratio.
pub fn goldberg_5r(base: &BennettParams, a2: f64) -> Result<GenericLoop, KinematicsError> {
    if !(a2 > 0.0) {
        return Err(KinematicsError::InvalidLoop("second loop length must be positive".into()));
    }
    let s = a2 * base.alpha.sin() / base.a;
    if s.abs() >= 1.0 {
        return Err(KinematicsError::InvalidLoop(format!(
            "no second-loop twist: required sine {s:.4} out of range"
        )));
    }
    let other = BennettParams::new(a2, base.b, s.asin())?;
    if (other.beta - base.beta).abs() > 1e-9 {
        return Err(KinematicsError::InvalidLoop(
            "loops do not share a common link twist".into(),
        ));
    }

    // Reference assemblies of both loops at drive angle 0.
    let ta = super::closure_map(base, 0.0)?;
    let tb = super::closure_map(&other, 0.0)?;
    let chain = |p: &BennettParams, th: [f64; 4]| -> [RigidTransform; 4] {
        let mut frames = [RigidTransform::identity(); 4];
        let mut run = RigidTransform::identity();
        for k in 0..4 {
            frames[k] = run;
            run = run.compose(&RigidTransform::rot_z(th[k])).compose(&p.link_transform(k));
        }
        frames
    };
    let ga = chain(base, [0.0, ta, 0.0, ta]);
    let hb = chain(&other, [0.0, tb, 0.0, tb]);
    // Place the second loop so its final (b, beta) link coincides with the
    // base loop's coupler-side (b, beta) link: the placement maps the
    // second loop's ground joint onto base joint 3.
    let w = ga[2];
    // Fused cycle: base joint 1 -> second joints 3, 2 -> base joints 3, 4.
    // The hop from base joint 1 to second joint 3 is the soldered pair of
    // links adjacent to the removed common link.
    let joints = [
        ga[0],
        w.compose(&hb[2]),
        w.compose(&hb[1]),
        ga[2],
        ga[3],
    ];
    let links = (0..5)
        .map(|i| joints[i].inverse().compose(&joints[(i + 1) % 5]))
        .collect();
    GenericLoop::new(LoopType::Goldberg5R, links, vec![0.0; 5])
}
