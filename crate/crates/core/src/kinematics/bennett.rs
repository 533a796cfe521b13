//! Bennett linkage: parameter validation, loop closure, forward kinematics
//! and Jacobians.
//!
//! The loop is modelled Denavit-Hartenberg style. Walking joint 1 -> 2 -> 3
//! -> 4 and back, the composed transform
//!
//! ```text
//! Rz(t1) X(a,alpha) Rz(t2) X(b,beta) Rz(t3) X(a,alpha) Rz(t4) X(b,beta) = I
//! ```
//!
//! must be the identity, where `X(l,t) = Trans_x(l) * Rot_x(t)`. All joint
//! offsets are zero and the twists/lengths satisfy the Bennett ratio
//! `sin(alpha)/a = sin(beta)/b`, which is what makes the spatial 4R loop
//! movable. Link bodies are indexed 0..3 as L12 (active crank), L23
//! (coupler, carries the end-effector), L34, L41 (fixed base).

use crate::dynamics::ActuationSchedule;
use crate::geom::{angle_dist, axis_angle, hat, wrap_angle, RigidTransform, ScrewAxis, Vec3};
use crate::kinematics::{KinematicsError, CLOSURE_TOL};

/// Number of revolute joints (and links) in the loop.
pub const JOINT_COUNT: usize = 4;

/// Resolution of the global bracket scan for the 1-D closure residual.
const SCAN_CELLS: usize = 720;

/// Newton polish iterations for warm-started closure solves.
const NEWTON_ITERS: usize = 24;

/// Bennett linkage parameters.
///
/// `a` is the length of links L12/L34 with twist `alpha`; `b` the length of
/// L23/L41 with twist `beta`. The public constructor derives `beta` from the
/// Bennett ratio so the movability condition holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BennettParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl BennettParams {
    /// Builds parameters with `beta` derived from `sin(beta) = b sin(alpha) / a`.
    ///
    /// The branch with `beta` in the same half-quadrant as `alpha` is chosen,
    /// so `a == b` yields `beta == alpha` (the equilateral Bennett linkage).
    pub fn new(a: f64, b: f64, alpha: f64) -> Result<Self, KinematicsError> {
        if !(a.is_finite() && b.is_finite() && alpha.is_finite()) {
            return Err(KinematicsError::InvalidParams("non-finite input".into()));
        }
        if a <= 0.0 || b <= 0.0 {
            return Err(KinematicsError::InvalidParams(format!(
                "link lengths must be positive (a = {a}, b = {b})"
            )));
        }
        let s_alpha = alpha.sin();
        if s_alpha.abs() < 1e-9 || alpha <= 0.0 || alpha >= std::f64::consts::PI {
            return Err(KinematicsError::InvalidParams(format!(
                "twist alpha = {alpha} rad is degenerate (planar); use a generic planar loop"
            )));
        }
        let s = b * s_alpha / a;
        if s.abs() > 1.0 {
            return Err(KinematicsError::InfeasibleRatio { ratio: s.abs() });
        }
        let beta = if alpha <= std::f64::consts::FRAC_PI_2 {
            s.asin()
        } else {
            std::f64::consts::PI - s.asin()
        };
        Ok(Self { a, b, alpha, beta })
    }

    /// Bennett ratio `gamma = sin(alpha) / a = sin(beta) / b`.
    pub fn ratio(&self) -> f64 {
        self.alpha.sin() / self.a
    }

    /// Residual of the Bennett condition; zero (to rounding) for any value
    /// built through [`BennettParams::new`].
    pub fn condition_residual(&self) -> f64 {
        (self.alpha.sin() / self.a - self.beta.sin() / self.b).abs()
    }

    /// DH-style link transform `Trans_x(len) * Rot_x(twist)` for link `i`
    /// (0-based, in loop order L12, L23, L34, L41).
    pub fn link_transform(&self, i: usize) -> RigidTransform {
        let (len, twist) = match i % 2 {
            0 => (self.a, self.alpha),
            _ => (self.b, self.beta),
        };
        RigidTransform::translation(Vec3::new(len, 0.0, 0.0)) * RigidTransform::rot_x(twist)
    }

    /// Composes the full loop transform at joint angles `theta`; the
    /// deviation of this from the identity is the closure residual.
    pub fn loop_transform(&self, theta: &[f64; 4]) -> RigidTransform {
        let mut t = RigidTransform::identity();
        for i in 0..4 {
            t = t * RigidTransform::rot_z(theta[i]) * self.link_transform(i);
        }
        t
    }

    /// Frobenius loop-closure residual at `theta`.
    pub fn closure_residual(&self, theta: &[f64; 4]) -> f64 {
        self.loop_transform(theta).deviation_from_identity()
    }

    /// Spherical (rotation-only) closure residual in `theta2` at fixed
    /// `theta1`: the angle condition between the forward-propagated third
    /// joint axis and the ground-fixed fourth axis. Roots of this function
    /// are candidate closures; a candidate still has to pass the full SE(3)
    /// residual check because one spherical root is spurious.
    pub fn spherical_residual(&self, theta1: f64, theta2: f64) -> f64 {
        let (sb, cb) = (self.beta.sin(), self.beta.cos());
        let w4 = Vec3::new(0.0, sb, cb);
        let m = axis_angle(&Vec3::z(), theta1)
            * axis_angle(&Vec3::x(), self.alpha)
            * axis_angle(&Vec3::z(), theta2);
        let w3 = m * Vec3::new(0.0, -sb, cb);
        w3.dot(&w4) - self.alpha.cos()
    }

    /// d/d(theta2) of [`BennettParams::spherical_residual`].
    fn spherical_residual_deriv(&self, theta1: f64, theta2: f64) -> f64 {
        let (sb, cb) = (self.beta.sin(), self.beta.cos());
        let w4 = Vec3::new(0.0, sb, cb);
        let pre = axis_angle(&Vec3::z(), theta1)
            * axis_angle(&Vec3::x(), self.alpha);
        let dz = hat(&Vec3::z()) * axis_angle(&Vec3::z(), theta2);
        let w3d = pre * (dz * Vec3::new(0.0, -sb, cb));
        w3d.dot(&w4)
    }

    /// Given a spherical root `(theta1, theta2)`, recovers `theta3, theta4`
    /// from the rotation-loop closure by a z-x-z decomposition with the
    /// middle angle pinned to `alpha`.
    fn extract_t3_t4(&self, theta1: f64, theta2: f64) -> (f64, f64) {
        let q = axis_angle(&Vec3::x(), -self.beta)
            * (axis_angle(&Vec3::z(), theta1)
                * axis_angle(&Vec3::x(), self.alpha)
                * axis_angle(&Vec3::z(), theta2))
            .transpose()
            * axis_angle(&Vec3::x(), -self.beta);
        let t3 = q[(0, 2)].atan2(-q[(1, 2)]);
        let t4 = q[(2, 0)].atan2(q[(2, 1)]);
        (t3, t4)
    }

    /// Spherical roots via the residual's exact harmonic form
    /// `A cos(t2) + B sin(t2) + D`, with the coefficients recovered from
    /// three residual evaluations. Handles grazing double roots (where the
    /// bracketed scan sees no sign change) to machine precision.
    fn harmonic_spherical_roots(&self, theta1: f64) -> Vec<f64> {
        let g0 = self.spherical_residual(theta1, 0.0);
        let gpi = self.spherical_residual(theta1, std::f64::consts::PI);
        let ghalf = self.spherical_residual(theta1, std::f64::consts::FRAC_PI_2);
        let a = 0.5 * (g0 - gpi);
        let d = 0.5 * (g0 + gpi);
        let b = ghalf - d;
        let r = a.hypot(b);
        if r < 1e-15 {
            return Vec::new();
        }
        let x = -d / r;
        if x.abs() > 1.0 + 1e-9 {
            return Vec::new();
        }
        let spread = x.clamp(-1.0, 1.0).acos();
        let phase = b.atan2(a);
        vec![phase + spread, phase - spread]
    }

    /// Spherical root candidates at `theta1`: bracketed bisection scan,
    /// always completed by the harmonic solve (which alone nails grazing
    /// double roots and root pairs inside one scan cell). Near-duplicates
    /// are harmless: every candidate is filtered by the full loop residual.
    fn spherical_roots(&self, theta1: f64) -> Vec<f64> {
        let mut roots = bracketed_roots(
            |t2| self.spherical_residual(theta1, t2),
            SCAN_CELLS,
        );
        roots.extend(self.harmonic_spherical_roots(theta1));
        roots
    }

    /// Full loop residual at `(theta1, theta2)` with the remaining angles
    /// re-extracted.
    fn completed_residual(&self, theta1: f64, theta2: f64) -> ([f64; 4], f64) {
        let (t3, t4) = self.extract_t3_t4(theta1, theta2);
        let theta = [theta1, theta2, t3, t4];
        let residual = self.closure_residual(&theta);
        (theta, residual)
    }

    /// Polishes a candidate `theta2` against the full loop residual by
    /// iterated parabolic minimization of its square. Needed because near a
    /// grazing spherical root the root location loses half the working
    /// precision, while the full residual stays a clean V shape in theta2.
    fn polish_candidate(&self, theta1: f64, start: f64) -> f64 {
        let eval = |t: f64| {
            let (_, r) = self.completed_residual(theta1, t);
            r * r
        };
        let h = 1e-7;
        let mut x = start;
        for _ in 0..8 {
            let (fm, f0, fp) = (eval(x - h), eval(x), eval(x + h));
            let denom = fp - 2.0 * f0 + fm;
            if denom <= 0.0 {
                break;
            }
            let step = -0.5 * h * (fp - fm) / denom;
            if !step.is_finite() || step.abs() > 1e-4 {
                break;
            }
            x += step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        x
    }

    /// All closure candidates at `theta1`: spherical roots completed to
    /// four angles and filtered by the full loop residual.
    fn closure_candidates(&self, theta1: f64) -> Vec<BennettClosure> {
        let roots = self.spherical_roots(theta1);
        let mut out = Vec::new();
        for t2 in roots {
            let (mut theta, mut residual) = self.completed_residual(theta1, t2);
            if residual > CLOSURE_TOL && residual < 1e-2 {
                let polished = self.polish_candidate(theta1, t2);
                let (ptheta, pres) = self.completed_residual(theta1, polished);
                if pres < residual {
                    theta = ptheta;
                    residual = pres;
                }
            }
            if residual <= CLOSURE_TOL {
                out.push(BennettClosure { theta, residual });
            }
        }
        out
    }

    /// Solves the loop closure at `theta1`, optionally warm-started with a
    /// previous `theta2` for branch continuity across sweeps.
    pub fn solve_closure(
        &self,
        theta1: f64,
        hint: Option<f64>,
    ) -> Result<BennettClosure, KinematicsError> {
        // Fast path: Newton polish from the hint, then validate.
        if let Some(h) = hint {
            if let Some(t2) = self.newton_polish(theta1, h) {
                if angle_dist(t2, h) < 1.0 {
                    let (t3, t4) = self.extract_t3_t4(theta1, t2);
                    let theta = [theta1, t2, t3, t4];
                    let residual = self.closure_residual(&theta);
                    if residual <= CLOSURE_TOL {
                        return Ok(BennettClosure { theta, residual });
                    }
                }
            }
        }
        let mut cands = self.closure_candidates(theta1);
        if cands.is_empty() {
            // Report the best full residual among spherical roots (or inf).
            let best = self
                .spherical_roots(theta1)
                .into_iter()
                .map(|t2| {
                    let (t3, t4) = self.extract_t3_t4(theta1, t2);
                    self.closure_residual(&[theta1, t2, t3, t4])
                })
                .fold(f64::INFINITY, f64::min);
            return Err(KinematicsError::NotAssemblable { theta1, residual: best });
        }
        if let Some(h) = hint {
            cands.sort_by(|x, y| {
                angle_dist(x.theta[1], h)
                    .partial_cmp(&angle_dist(y.theta[1], h))
                    .unwrap()
            });
        } else {
            cands.sort_by(|x, y| x.residual.partial_cmp(&y.residual).unwrap());
        }
        Ok(cands[0])
    }

    fn newton_polish(&self, theta1: f64, start: f64) -> Option<f64> {
        let mut t2 = start;
        for _ in 0..NEWTON_ITERS {
            let g = self.spherical_residual(theta1, t2);
            if g.abs() < 1e-14 {
                return Some(t2);
            }
            let dg = self.spherical_residual_deriv(theta1, t2);
            if dg.abs() < 1e-12 {
                return None;
            }
            let step = (g / dg).clamp(-0.5, 0.5);
            t2 -= step;
        }
        (self.spherical_residual(theta1, t2).abs() < 1e-10).then_some(t2)
    }
}

/// Roots of `f` on `[0, 2pi)` located by scanning `cells` intervals for sign
/// changes and bisecting each bracket.
fn bracketed_roots(f: impl Fn(f64) -> f64, cells: usize) -> Vec<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let xs: Vec<f64> = (0..=cells).map(|i| two_pi * i as f64 / cells as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..cells {
        let (mut lo, mut hi) = (xs[i], xs[i + 1]);
        let (mut flo, fhi) = (ys[i], ys[i + 1]);
        if flo == 0.0 {
            push_unique(&mut roots, lo);
            continue;
        }
        if flo * fhi > 0.0 {
            continue;
        }
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm == 0.0 {
                lo = mid;
                break;
            }
            if flo * fm < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        push_unique(&mut roots, 0.5 * (lo + hi));
    }
    roots
}

fn push_unique(roots: &mut Vec<f64>, r: f64) {
    let r = r.rem_euclid(2.0 * std::f64::consts::PI);
    if roots.iter().all(|&x| angle_dist(x, r) > 1e-7) {
        roots.push(r);
    }
}

/// A fully determined closure: all four joint angles and the Frobenius
/// residual of the composed loop transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BennettClosure {
    pub theta: [f64; 4],
    pub residual: f64,
}

/// The passive-joint closure map `theta2 = K(theta1)`.
///
/// The Bennett loop admits a single closure circuit per parameter set (the
/// second spherical root never closes the translational loop), so the map is
/// well defined and continuous over a full input cycle without extra branch
/// state.
pub fn closure_map(params: &BennettParams, theta1: f64) -> Result<f64, KinematicsError> {
    Ok(params.solve_closure(theta1, None)?.theta[1])
}

/// A complete placed Bennett design: loop parameters, end-effector point on
/// the coupler (local frame, reference assembly) and the mount transform
/// placing the local frame into the world.
#[derive(Debug, Clone, PartialEq)]
pub struct BennettDesign {
    pub params: BennettParams,
    /// End-effector point in local coordinates at the reference assembly.
    pub p0: Vec3,
    /// Local-to-world placement of the design frame.
    pub mount: RigidTransform,
    theta_ref: [f64; 4],
    screws: [ScrewAxis; 4],
}

impl BennettDesign {
    /// Assembles the design at the reference input angle `theta1 = 0`,
    /// fixing the closure branch and the home screw axes.
    pub fn new(
        params: BennettParams,
        p0: Vec3,
        mount: RigidTransform,
    ) -> Result<Self, KinematicsError> {
        if !(p0.iter().all(|v| v.is_finite())) {
            return Err(KinematicsError::InvalidParams("p0 must be finite".into()));
        }
        let closure = params.solve_closure(0.0, None)?;
        let theta_ref = closure.theta;
        let screws = home_screws(&params, &theta_ref);
        Ok(Self { params, p0, mount, theta_ref, screws })
    }

    /// Reference (home) assembly angles; index 0 is the actuator.
    pub fn theta_ref(&self) -> [f64; 4] {
        self.theta_ref
    }

    /// Home screw axes of joints 1..4 in the local frame.
    pub fn screws(&self) -> &[ScrewAxis; 4] {
        &self.screws
    }

    /// Home joint centers `c1..c4` in the local frame.
    pub fn joint_centers(&self) -> [Vec3; 4] {
        let c1 = Vec3::zeros();
        let f1 = RigidTransform::rot_z(self.theta_ref[0]);
        let c2 = f1.apply_point(&Vec3::new(self.params.a, 0.0, 0.0));
        let f2 = f1
            * self.params.link_transform(0)
            * RigidTransform::rot_z(self.theta_ref[1]);
        let c3 = f2.apply_point(&Vec3::new(self.params.b, 0.0, 0.0));
        let c4 = Vec3::new(-self.params.b, 0.0, 0.0);
        [c1, c2, c3, c4]
    }

    /// Solves closure at actuator angle `q` with optional warm start.
    pub fn closure_at(&self, q: f64, hint: Option<f64>) -> Result<BennettClosure, KinematicsError> {
        self.params.solve_closure(q, hint)
    }

    /// Joint displacements from the reference assembly.
    fn deltas(&self, closure: &BennettClosure) -> [f64; 4] {
        let mut d = [0.0; 4];
        for i in 0..4 {
            d[i] = wrap_angle(closure.theta[i] - self.theta_ref[i]);
        }
        d
    }

    /// Local-frame motion of every link body from home, in link order
    /// (L12, L23, L34, L41). The base link L41 never moves.
    ///
    /// Loop angles measure rotation along the traversal direction, so the
    /// chain reached backwards through joint 4 enters with a negated
    /// displacement (theta4 turns the base relative to L34).
    pub fn link_motions(&self, closure: &BennettClosure) -> [RigidTransform; 4] {
        let d = self.deltas(closure);
        let e1 = self.screws[0].exp(d[0]);
        let e2 = self.screws[1].exp(d[1]);
        let e4 = self.screws[3].exp(-d[3]);
        [e1, e1 * e2, e4, RigidTransform::identity()]
    }

    /// Coupler motion via the opposite chain R4 -> R3; equals the R1 -> R2
    /// product to closure tolerance (used as a consistency oracle). Both
    /// joints are traversed against the loop direction, hence the signs.
    pub fn coupler_motion_via_r4r3(&self, closure: &BennettClosure) -> RigidTransform {
        let d = self.deltas(closure);
        self.screws[3].exp(-d[3]) * self.screws[2].exp(-d[2])
    }

    /// World-frame end-effector point for a given coupler motion.
    pub fn ee_world(&self, coupler_motion: &RigidTransform) -> Vec3 {
        self.mount.apply_point(&coupler_motion.apply_point(&self.p0))
    }
}

/// Home screw axes from the reference assembly angles.
fn home_screws(params: &BennettParams, theta_ref: &[f64; 4]) -> [ScrewAxis; 4] {
    let f1 = RigidTransform::rot_z(theta_ref[0]);
    let c2 = f1.apply_point(&Vec3::new(params.a, 0.0, 0.0));
    let w2 = f1.rot * axis_angle(&Vec3::x(), params.alpha) * Vec3::z();
    let f2 = f1 * params.link_transform(0) * RigidTransform::rot_z(theta_ref[1]);
    let c3 = f2.apply_point(&Vec3::new(params.b, 0.0, 0.0));
    let w3 = f2.rot * axis_angle(&Vec3::x(), params.beta) * Vec3::z();
    let c4 = Vec3::new(-params.b, 0.0, 0.0);
    let w4 = axis_angle(&Vec3::x(), -params.beta) * Vec3::z();
    [
        ScrewAxis::from_point_direction(&Vec3::zeros(), &Vec3::z()),
        ScrewAxis::from_point_direction(&c2, &w2),
        ScrewAxis::from_point_direction(&c3, &w3),
        ScrewAxis::from_point_direction(&c4, &w4),
    ]
}

/// Forward kinematics at actuator angle `q`.
///
/// Returns the coupler motion transform (local frame, product of the two
/// joint exponentials along chain R1 -> R2) and the world end-effector
/// position `mount * (motion * p0)`.
pub fn fk(design: &BennettDesign, q: f64) -> Result<(RigidTransform, Vec3), KinematicsError> {
    let closure = design.closure_at(q, None)?;
    let motions = design.link_motions(&closure);
    let coupler = motions[1];
    Ok((coupler, design.ee_world(&coupler)))
}

/// A swept motion cycle: per-frame times, actuator angles, passive angle,
/// link poses (local frame) and world end-effector points.
#[derive(Debug, Clone)]
pub struct MotionTrace {
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    pub theta2: Vec<f64>,
    /// Per-frame motion transform of every link body from its home pose.
    pub link_poses: Vec<Vec<RigidTransform>>,
    pub ee_points: Vec<Vec3>,
}

impl MotionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// World end-effector polyline as a closed discrete curve.
    pub fn ee_curve(&self) -> crate::curve::DiscreteCurve3 {
        crate::curve::DiscreteCurve3::new(self.ee_points.clone(), true)
    }
}

/// Sweeps the design through an actuation schedule, warm-starting the
/// closure solve frame to frame for branch continuity.
pub fn trace(
    design: &BennettDesign,
    schedule: &ActuationSchedule,
) -> Result<MotionTrace, KinematicsError> {
    if schedule.samples.is_empty() {
        return Err(KinematicsError::EmptySchedule);
    }
    let n = schedule.samples.len();
    let mut out = MotionTrace {
        times: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        theta2: Vec::with_capacity(n),
        link_poses: Vec::with_capacity(n),
        ee_points: Vec::with_capacity(n),
    };
    let mut hint: Option<f64> = None;
    for (frame, s) in schedule.samples.iter().enumerate() {
        let closure = design.closure_at(s.q, hint).map_err(|e| KinematicsError::Frame {
            frame,
            q: s.q,
            source: Box::new(e),
        })?;
        hint = Some(closure.theta[1]);
        let motions = design.link_motions(&closure);
        let ee = design.ee_world(&motions[1]);
        out.times.push(s.t);
        out.q.push(s.q);
        out.theta2.push(closure.theta[1]);
        out.link_poses.push(motions.to_vec());
        out.ee_points.push(ee);
    }
    Ok(out)
}

/// Finite-difference step for `d(theta2)/dq` (rad).
const DTHETA_STEP: f64 = 1e-6;

/// Computes `d(theta2)/dq` by central differences at step `h` and `h/2`,
/// failing if the two estimates disagree (branch singularity).
fn dtheta2_dq(design: &BennettDesign, q: f64, t2: f64) -> Result<f64, KinematicsError> {
    let eval = |dq: f64| -> Result<f64, KinematicsError> {
        Ok(design.closure_at(q + dq, Some(t2))?.theta[1])
    };
    let h = DTHETA_STEP;
    // Closure angles come back wrapped to (-pi, pi], so difference them on
    // the circle; the true increment is far below pi for this step size.
    let d1 = wrap_angle(eval(h)? - eval(-h)?) / (2.0 * h);
    let d2 = wrap_angle(eval(0.5 * h)? - eval(-0.5 * h)?) / h;
    if (d1 - d2).abs() > 1e-3 * d1.abs().max(1.0) {
        return Err(KinematicsError::BranchSingularity { q, d1, d2 });
    }
    Ok(d2)
}

/// World-frame Jacobian column of the single actuated degree of freedom.
///
/// Returns the body-motion twist `(omega; v)` of the coupler per unit
/// actuator rate (world frame, origin moment convention) and the linear
/// world velocity of the end-effector point.
pub fn jacobian(
    design: &BennettDesign,
    q: f64,
) -> Result<(nalgebra::Vector6<f64>, Vec3), KinematicsError> {
    let closure = design.closure_at(q, None)?;
    jacobian_at(design, &closure)
}

/// [`jacobian`] for an already-solved closure, so sweeps can warm-start the
/// passive-angle solve and skip the global search.
pub fn jacobian_at(
    design: &BennettDesign,
    closure: &BennettClosure,
) -> Result<(nalgebra::Vector6<f64>, Vec3), KinematicsError> {
    let q = closure.theta[0];
    let d = design.deltas(closure);
    let k = dtheta2_dq(design, q, closure.theta[1])?;
    let s1 = design.screws()[0];
    let s2 = design.screws()[1].transformed(&s1.exp(d[0]));
    // Local-frame twist of the coupler: S1 * 1 + Ad_{exp(S1 d1)} S2 * k.
    let omega_l = s1.direction + s2.direction * k;
    let v_l = s1.moment + s2.moment * k;
    // Transport to world through the mount.
    let omega_w = design.mount.rot * omega_l;
    let v_w = design.mount.rot * v_l + design.mount.trans.cross(&omega_w);
    let coupler = design.link_motions(closure)[1];
    let ee_w = design.ee_world(&coupler);
    let linear = omega_w.cross(&ee_w) + v_w;
    Ok((
        nalgebra::Vector6::new(omega_w.x, omega_w.y, omega_w.z, v_w.x, v_w.y, v_w.z),
        linear,
    ))
}

/// Operational singularity measure `s(q) = |J_linear|` in mm/rad: the speed
/// of the end-effector point per unit actuator rate.
///
/// Never errors: non-assemblable configurations report 0 (treated as
/// singular), and a finite-difference branch inconsistency falls back to the
/// coarse-step estimate.
pub fn singularity_measure(design: &BennettDesign, q: f64) -> f64 {
    match jacobian(design, q) {
        Ok((_, lin)) => lin.norm(),
        Err(KinematicsError::BranchSingularity { d1, .. }) => {
            // Velocity estimate is unstable; use the coarse value so the
            // caller still sees a magnitude rather than a hard failure.
            match design.closure_at(q, None) {
                Ok(c) => {
                    let s1 = design.screws()[0];
                    let s2 = design.screws()[1].transformed(&s1.exp(design.deltas(&c)[0]));
                    let omega = s1.direction + s2.direction * d1;
                    let v = s1.moment + s2.moment * d1;
                    let coupler = design.link_motions(&c)[1];
                    let ee = coupler.apply_point(&design.p0);
                    (omega.cross(&ee) + v).norm()
                }
                Err(_) => 0.0,
            }
        }
        Err(_) => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ActuationSchedule;
    use crate::testutil::{sample_design, sample_params};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constructor_preserves_bennett_condition_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = sample_params(&mut rng);
            assert!(p.condition_residual() <= 1e-9, "residual {}", p.condition_residual());
        }
        // Equal lengths give the equilateral linkage beta == alpha, on both
        // sides of pi/2.
        for alpha in [0.7, 2.2] {
            let p = BennettParams::new(90.0, 90.0, alpha).unwrap();
            assert!((p.beta - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_ratio_is_reported() {
        let err = BennettParams::new(40.0, 200.0, std::f64::consts::FRAC_PI_2).unwrap_err();
        assert!(matches!(err, KinematicsError::InfeasibleRatio { .. }));
    }

    #[test]
    fn reference_assembly_closes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let params = sample_params(&mut rng);
            let d = BennettDesign::new(params, Vec3::new(10.0, 5.0, 2.0), RigidTransform::identity())
                .unwrap();
            let tr = d.theta_ref();
            assert!(params.closure_residual(&tr) <= CLOSURE_TOL);
            assert!((tr[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn closure_matches_frozen_bisection_oracle() {
        // a=100, alpha=60 deg, b=80, beta=asin(0.8 sin 60 deg), theta1=90 deg.
        // Expected theta2 frozen from an independent bisection of the
        // spherical residual with full-loop validation (see the prototype
        // notes): 3.4946676001175... rad on the closing branch.
        let p = BennettParams::new(100.0, 80.0, 60f64.to_radians()).unwrap();
        assert!((p.beta - (0.8 * 60f64.to_radians().sin()).asin()).abs() < 1e-12);
        let t2 = closure_map(&p, 90f64.to_radians()).unwrap();
        assert!(
            (t2 - 3.494_667_600_117_5).abs() < 1e-8,
            "theta2 = {t2}"
        );
        // Independent in-test oracle: bisect the spherical residual over a
        // fine grid and keep the root whose completed loop closes.
        let g = |x: f64| p.spherical_residual(90f64.to_radians(), x);
        let mut oracle = None;
        let n = 2000;
        for i in 0..n {
            let lo = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let hi = 2.0 * std::f64::consts::PI * (i + 1) as f64 / n as f64;
            if g(lo) * g(hi) > 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (lo, hi);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if g(lo) * g(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            let (t3, t4) = p.extract_t3_t4(90f64.to_radians(), root);
            if p.closure_residual(&[90f64.to_radians(), root, t3, t4]) <= 1e-8 {
                oracle = Some(root);
            }
        }
        let oracle = oracle.expect("oracle root");
        assert!((t2 - oracle).abs() < 1e-8, "{t2} vs oracle {oracle}");
    }

    #[test]
    fn closure_map_is_periodic_over_a_cycle() {
        let p = BennettParams::new(100.0, 80.0, 60f64.to_radians()).unwrap();
        let n = 360;
        let mut hint = None;
        let mut first = None;
        let mut last = None;
        for i in 0..=n {
            let t1 = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let c = p.solve_closure(t1, hint).unwrap();
            hint = Some(c.theta[1]);
            if i == 0 {
                first = Some(c.theta[1]);
            }
            if i == n {
                last = Some(c.theta[1]);
            }
        }
        assert!(angle_dist(first.unwrap(), last.unwrap()) < 1e-9);
    }

    #[test]
    fn fk_at_reference_is_mounted_p0() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = sample_design(&mut rng);
            let (coupler, ee) = fk(&d, 0.0).unwrap();
            assert!(coupler.deviation_from_identity() < 1e-7);
            assert!((ee - d.mount.apply_point(&d.p0)).norm() < 1e-7);
        }
    }

    #[test]
    fn chain_equivalence_over_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..256 {
            let d = sample_design(&mut rng);
            let q = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let c = d.closure_at(q, None).unwrap();
            let via12 = d.link_motions(&c)[1];
            let via43 = d.coupler_motion_via_r4r3(&c);
            let e1 = d.ee_world(&via12);
            let e2 = d.ee_world(&via43);
            assert!(
                (e1 - e2).norm() <= 1e-8,
                "chain mismatch {} mm at q={q}",
                (e1 - e2).norm()
            );
        }
    }

    #[test]
    fn trace_closes_and_is_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let d = sample_design(&mut rng);
            let sched = ActuationSchedule::constant_speed(2.0, 360, 0.0).unwrap();
            let tr = trace(&d, &sched).unwrap();
            assert_eq!(tr.len(), 360);
            // Loop closure residual already enforced per frame by the solver;
            // check periodicity: ee(q0) == ee(q0 + 2pi).
            let (_, e0) = fk(&d, 0.0).unwrap();
            let (_, e1) = fk(&d, 2.0 * std::f64::consts::PI).unwrap();
            assert!((e0 - e1).norm() < 1e-8);
            // First trace point equals the reference ee.
            assert!((tr.ee_points[0] - d.mount.apply_point(&d.p0)).norm() < 1e-7);
        }
    }

    #[test]
    fn empty_schedule_is_an_error() {
        let d = BennettDesign::new(
            BennettParams::new(100.0, 80.0, 1.0).unwrap(),
            Vec3::new(20.0, 0.0, 0.0),
            RigidTransform::identity(),
        )
        .unwrap();
        let sched = ActuationSchedule { period: 1.0, samples: vec![] };
        assert!(matches!(trace(&d, &sched), Err(KinematicsError::EmptySchedule)));
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let d = sample_design(&mut rng);
            let q = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let (_, lin) = jacobian(&d, q).unwrap();
            let h = 1e-5;
            let (_, ep) = fk(&d, q + h).unwrap();
            let (_, em) = fk(&d, q - h).unwrap();
            let fd = (ep - em) / (2.0 * h);
            let scale = fd.norm().max(1.0);
            assert!(
                (lin - fd).norm() / scale <= 1e-5,
                "jacobian mismatch {} at q={q}",
                (lin - fd).norm() / scale
            );
        }
    }

    #[test]
    fn jacobian_scales_with_design_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = sample_params(&mut rng);
        let p2 = BennettParams::new(2.0 * p.a, 2.0 * p.b, p.alpha).unwrap();
        let p0 = Vec3::new(30.0, -10.0, 25.0);
        let d1 = BennettDesign::new(p, p0, RigidTransform::identity()).unwrap();
        let d2 = BennettDesign::new(p2, 2.0 * p0, RigidTransform::identity()).unwrap();
        for q in [0.4, 1.3, 2.9, 4.4] {
            let (_, l1) = jacobian(&d1, q).unwrap();
            let (_, l2) = jacobian(&d2, q).unwrap();
            assert!((l2 - 2.0 * l1).norm() <= 1e-6 * l2.norm().max(1.0), "q={q}");
        }
    }

    #[test]
    fn singularity_measure_on_feasible_design_exceeds_threshold() {
        let p = BennettParams::new(100.0, 80.0, 60f64.to_radians()).unwrap();
        let d = BennettDesign::new(p, Vec3::new(40.0, 20.0, 10.0), RigidTransform::identity())
            .unwrap();
        let min_s = (0..360)
            .map(|i| singularity_measure(&d, 2.0 * std::f64::consts::PI * i as f64 / 360.0))
            .fold(f64::INFINITY, f64::min);
        assert!(min_s > 0.01, "min singularity measure {min_s}");
    }

    #[test]
    fn ee_on_active_axis_moves_perpendicular_to_it() {
        // Place p0 on joint axis 1 (the local z axis). If d(theta2)/dq were
        // zero the motion would be a pure rotation about z; in general the
        // coupler also spins about joint 2, but at the reference the linear
        // velocity of a point on axis 1 must still be perpendicular to z
        // whenever the joint-2 term vanishes. Verify the pure-rotation part:
        // the S1 contribution to the velocity of p0 is perpendicular to z.
        let p = BennettParams::new(100.0, 80.0, 1.1).unwrap();
        let d = BennettDesign::new(p, Vec3::new(0.0, 0.0, 35.0), RigidTransform::identity())
            .unwrap();
        let s1 = d.screws()[0];
        let v = s1.point_velocity(&d.p0);
        assert!(v.dot(&Vec3::z()).abs() < 1e-12);
    }
}
