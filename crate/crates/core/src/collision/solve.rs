//! Feasibility solve turning an initial chain layout into a shape that
//! clears itself over the whole cycle.
//!
//! Free variables are the chain sphere coordinates; hinge spheres follow the
//! chain endpoints automatically.  The cycle collision energy is the only
//! constraint evaluated over every frame; the geometric families (length
//! window, per-vertex curvature, endpoint-on-axis, hinge gap, end-segment
//! perpendicularity) are enforced at the reference pose, which is frame 0 of
//! the scene.  All derivatives are exact.

use std::collections::HashSet;

use super::clearance::{collect_contacts, segment_closest, Contact};
use super::model::{
    total_energy_with_grad, Assembly, CollisionModel, GeometryDesign, MechanismScene,
};
use crate::geom::Vec3;
use crate::nlp::{self, Evaluation, NlpOptions, NlpProblem};

/// Tolerances of the geometric constraint families.
#[derive(Debug, Clone)]
pub struct GeomConstraintParams {
    /// Upper length window factor: polyline length stays within
    /// `[L0, length_ratio * L0]` of the initial endpoint chord `L0`.
    pub length_ratio: f64,
    /// Per-vertex discrete curvature cap (`2 tan(bend / 2)`).
    pub curvature_max: f64,
    /// Endpoint-to-axis distance tolerance (mm).
    pub axis_tol: f64,
    /// Optional cap on each consecutive-sphere segment (mm).  The sphere
    /// proxy only sees what its samples see: a segment much longer than the
    /// bar diameter can slip between another chain's spheres without any
    /// energy trace.  Capping segments near twice the radius keeps every
    /// capsule crossing visible to the energy; `None` leaves spacing free.
    pub max_segment_length: Option<f64>,
}

impl Default for GeomConstraintParams {
    fn default() -> Self {
        GeomConstraintParams {
            length_ratio: 1.3,
            curvature_max: 0.6,
            axis_tol: 0.01,
            max_segment_length: None,
        }
    }
}

/// Relative tolerance for the equality families in feasibility verdicts.
const EQ_TOL: f64 = 1e-6;

/// A capsule pair becomes a pinned contact when its exact clearance drops
/// below this margin (mm) on the verification frames.
const CONTACT_MARGIN: f64 = 0.05;

/// Pinned contacts are pushed out to this exact clearance (mm); aiming
/// above the collection margin keeps satisfied contacts from refiring.
const CONTACT_AIM: f64 = 0.1;

/// Cap on collect-and-resolve rounds inside one geometry solve.
const CONTACT_ROUNDS: usize = 8;

/// Worst residual of every constraint family for one design.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Total cycle collision energy (feasible strictly below the threshold).
    pub energy: f64,
    /// Worst length-window violation, normalized by `L0`; nonpositive inside.
    pub length_violation: f64,
    /// Worst per-vertex discrete curvature.
    pub max_curvature: f64,
    /// Worst chain-endpoint distance to its hinge axis (mm).
    pub max_axis_distance: f64,
    /// Worst relative hinge gap error `| |end - start| - D_j | / D_j`.
    pub max_hinge_gap_error: f64,
    /// Worst `|cos|` between a terminal chain segment and its hinge axis.
    pub max_end_cosine: f64,
    /// Worst relative segment-length excess over the spacing cap;
    /// nonpositive inside, and zero when no cap is configured.
    pub max_segment_excess: f64,
}

impl ResidualReport {
    /// True when every family is inside its tolerance.
    pub fn is_feasible(&self, model: &CollisionModel, params: &GeomConstraintParams) -> bool {
        self.energy < model.energy_threshold
            && self.length_violation <= EQ_TOL
            && self.max_curvature <= params.curvature_max * (1.0 + EQ_TOL)
            && self.max_axis_distance < params.axis_tol
            && self.max_hinge_gap_error <= EQ_TOL
            && self.max_end_cosine <= EQ_TOL
            && self.max_segment_excess <= EQ_TOL
    }
}

/// Knobs for [`optimize_geometry`].
#[derive(Debug, Clone)]
pub struct GeomSolveOptions {
    /// Cap on cumulative inner solver iterations.
    pub max_iterations: usize,
}

impl Default for GeomSolveOptions {
    fn default() -> Self {
        GeomSolveOptions {
            max_iterations: 1500,
        }
    }
}

/// Result of a geometry solve, feasible or not.
#[derive(Debug, Clone)]
pub struct GeomOutcome {
    /// Final design (the input when it was already feasible).
    pub design: GeometryDesign,
    /// Whether the final design passes [`ResidualReport::is_feasible`].
    pub feasible: bool,
    /// Inner solver iterations spent.
    pub iterations: usize,
    /// Residuals of the final design.
    pub report: ResidualReport,
}

/// Straight endpoint-to-endpoint distance of every chain; the length
/// baseline `L0` is taken from the design handed to the solver.
pub fn chord_lengths(geom: &GeometryDesign) -> Vec<f64> {
    geom.chains
        .iter()
        .map(|c| (c.last() - c.first()).norm())
        .collect()
}

/// Per-vertex discrete curvature `2 |e1 x e2| / (|e1||e2| + e1.e2)`,
/// equal to `2 tan(bend / 2)` for equal-length segments.
pub(crate) fn discrete_curvature(e1: &Vec3, e2: &Vec3) -> f64 {
    let g = e1.norm() * e2.norm() + e1.dot(e2);
    2.0 * e1.cross(e2).norm() / g.max(1e-9)
}

/// Recompute every family residual from scratch.  `l0` supplies the length
/// baselines; pass `None` to measure against the design's own chords (the
/// lower bound then holds trivially).
pub fn residual_report(
    geom: &GeometryDesign,
    scene: &MechanismScene,
    model: &CollisionModel,
    params: &GeomConstraintParams,
    l0: Option<&[f64]>,
) -> ResidualReport {
    let n = geom.chains.len();
    let chords = chord_lengths(geom);
    let l0 = l0.unwrap_or(&chords);

    let energy = super::model::total_energy(geom, scene, model);

    let mut length_violation = f64::NEG_INFINITY;
    let mut max_curvature = 0.0_f64;
    let mut max_segment_excess = params.max_segment_length.map_or(0.0, |_| f64::NEG_INFINITY);
    for (k, chain) in geom.chains.iter().enumerate() {
        let len = chain.polyline_length();
        length_violation = length_violation
            .max((l0[k] - len) / l0[k])
            .max((len - params.length_ratio * l0[k]) / l0[k]);
        for w in chain.particles.windows(3) {
            let e1 = w[1] - w[0];
            let e2 = w[2] - w[1];
            max_curvature = max_curvature.max(discrete_curvature(&e1, &e2));
        }
        if let Some(cap) = params.max_segment_length {
            for w in chain.particles.windows(2) {
                max_segment_excess = max_segment_excess.max(((w[1] - w[0]).norm() - cap) / cap);
            }
        }
    }

    let mut max_axis_distance = 0.0_f64;
    let mut max_hinge_gap_error = 0.0_f64;
    let mut max_end_cosine = 0.0_f64;
    for j in 0..n {
        let prev = geom.chain_ending_at(j);
        let axis = &scene.axes[j];
        let end = geom.chains[prev].last();
        let start = geom.chains[j].first();
        max_axis_distance = max_axis_distance
            .max(axis.distance_to_point(&end))
            .max(axis.distance_to_point(&start));
        max_hinge_gap_error =
            max_hinge_gap_error.max(((end - start).norm() - geom.d_j).abs() / geom.d_j);

        let m = geom.chains[prev].particles.len();
        let e_end = geom.chains[prev].particles[m - 1] - geom.chains[prev].particles[m - 2];
        let e_start = geom.chains[j].particles[1] - geom.chains[j].particles[0];
        max_end_cosine = max_end_cosine
            .max((e_end.normalize().dot(&axis.direction)).abs())
            .max((e_start.normalize().dot(&axis.direction)).abs());
    }

    ResidualReport {
        energy,
        length_violation,
        max_curvature,
        max_axis_distance,
        max_hinge_gap_error,
        max_end_cosine,
        max_segment_excess,
    }
}

struct GeomNlp<'a> {
    base: &'a GeometryDesign,
    scene: &'a MechanismScene,
    model: &'a CollisionModel,
    params: &'a GeomConstraintParams,
    asm: Assembly,
    l0: Vec<f64>,
    /// Shrunk energy budget the solver aims for, leaving margin under the
    /// real threshold so roundoff cannot flip the verdict.
    energy_cap: f64,
    /// Lazily collected capsule contacts held open at exact distances,
    /// measured against the frames of `contact_scene`.
    contacts: &'a [Contact],
    contact_scene: &'a MechanismScene,
    ineq: usize,
    eq: usize,
}

impl<'a> GeomNlp<'a> {
    fn new(
        base: &'a GeometryDesign,
        scene: &'a MechanismScene,
        model: &'a CollisionModel,
        params: &'a GeomConstraintParams,
        contacts: &'a [Contact],
        contact_scene: &'a MechanismScene,
    ) -> Self {
        let asm = Assembly::new(base);
        let n = base.chains.len();
        let interior: usize = base.chains.iter().map(|c| c.particles.len() - 2).sum();
        let segments: usize = if params.max_segment_length.is_some() {
            base.chains.iter().map(|c| c.particles.len() - 1).sum()
        } else {
            0
        };
        GeomNlp {
            l0: chord_lengths(base),
            energy_cap: 0.9 * model.energy_threshold,
            ineq: 1 + 2 * n + interior + 2 * n + segments + contacts.len(),
            eq: n + 2 * n,
            base,
            scene,
            model,
            params,
            asm,
            contacts,
            contact_scene,
        }
    }

    fn rebuild(&self, x: &[f64]) -> GeometryDesign {
        let mut design = self.base.clone();
        let mut it = x.iter();
        for chain in &mut design.chains {
            for p in &mut chain.particles {
                p.x = *it.next().expect("x too short");
                p.y = *it.next().expect("x too short");
                p.z = *it.next().expect("x too short");
            }
        }
        design
    }

    fn flatten(design: &GeometryDesign) -> Vec<f64> {
        let mut x = Vec::new();
        for chain in &design.chains {
            for p in &chain.particles {
                x.extend_from_slice(&[p.x, p.y, p.z]);
            }
        }
        x
    }

    fn col(&self, chain: usize, idx: usize, axis: usize) -> usize {
        self.asm.layout.chain_slot(chain, idx) * 3 + axis
    }
}

/// Write `v` into row `row` of `jac` at the three columns of `(chain, idx)`.
fn add_vec(
    jac: &mut nalgebra::DMatrix<f64>,
    row: usize,
    nlp: &GeomNlp,
    chain: usize,
    idx: usize,
    v: Vec3,
) {
    for axis in 0..3 {
        jac[(row, nlp.col(chain, idx, axis))] += v[axis];
    }
}

impl NlpProblem for GeomNlp<'_> {
    fn dim(&self) -> usize {
        self.asm.layout.free_dim()
    }
    fn ineq_count(&self) -> usize {
        self.ineq
    }
    fn eq_count(&self) -> usize {
        self.eq
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let design = self.rebuild(x);
        let n = design.chains.len();
        let dim = self.dim();
        let mut ev = Evaluation::zeros(dim, self.ineq, self.eq);

        // Row 0: cycle collision energy against the shrunk budget.
        let mut ge = vec![0.0; dim];
        let energy =
            total_energy_with_grad(&design, self.scene, &self.asm, self.model, &mut ge);
        ev.ineq[0] = energy / self.energy_cap - 1.0;
        for (c, g) in ge.iter().enumerate() {
            ev.ineq_jac[(0, c)] = g / self.energy_cap;
        }
        let mut row = 1;

        // Length window per chain.
        for (k, chain) in design.chains.iter().enumerate() {
            let pts = &chain.particles;
            let len = chain.polyline_length();
            let low = row;
            let high = row + 1;
            ev.ineq[low] = 1.0 - len / self.l0[k];
            ev.ineq[high] = len / (self.params.length_ratio * self.l0[k]) - 1.0;
            for i in 0..pts.len() - 1 {
                let d = pts[i + 1] - pts[i];
                let nrm = d.norm();
                if nrm <= 1e-12 {
                    continue;
                }
                let u = d / nrm;
                // d len / d p_{i+1} = u, d len / d p_i = -u.
                add_vec(&mut ev.ineq_jac, low, self, k, i + 1, -u / self.l0[k]);
                add_vec(&mut ev.ineq_jac, low, self, k, i, u / self.l0[k]);
                let s = 1.0 / (self.params.length_ratio * self.l0[k]);
                add_vec(&mut ev.ineq_jac, high, self, k, i + 1, u * s);
                add_vec(&mut ev.ineq_jac, high, self, k, i, -u * s);
            }
            row += 2;
        }

        // Per-vertex curvature cap.
        for (k, chain) in design.chains.iter().enumerate() {
            let pts = &chain.particles;
            for v in 1..pts.len() - 1 {
                let e1 = pts[v] - pts[v - 1];
                let e2 = pts[v + 1] - pts[v];
                let c = e1.cross(&e2);
                let cn = c.norm();
                let g = (e1.norm() * e2.norm() + e1.dot(&e2)).max(1e-9);
                let kappa = 2.0 * cn / g;
                ev.ineq[row] = kappa / self.params.curvature_max - 1.0;

                let (dnc_de1, dnc_de2) = if cn > 1e-12 {
                    let ch = c / cn;
                    (e2.cross(&ch), ch.cross(&e1))
                } else {
                    (Vec3::zeros(), Vec3::zeros())
                };
                let dg_de1 = e1.normalize() * e2.norm() + e2;
                let dg_de2 = e2.normalize() * e1.norm() + e1;
                let dk_de1 = dnc_de1 * (2.0 / g) - dg_de1 * (2.0 * cn / (g * g));
                let dk_de2 = dnc_de2 * (2.0 / g) - dg_de2 * (2.0 * cn / (g * g));
                let s = 1.0 / self.params.curvature_max;
                add_vec(&mut ev.ineq_jac, row, self, k, v - 1, -dk_de1 * s);
                add_vec(&mut ev.ineq_jac, row, self, k, v, (dk_de1 - dk_de2) * s);
                add_vec(&mut ev.ineq_jac, row, self, k, v + 1, dk_de2 * s);
                row += 1;
            }
        }

        // Endpoints near their hinge axes (aiming at half the tolerance).
        for j in 0..n {
            let prev = design.chain_ending_at(j);
            let axis = &self.scene.axes[j];
            let o = axis.point_on_axis();
            let z = axis.direction;
            let last = design.chains[prev].particles.len() - 1;
            for (chain, idx) in [(prev, last), (j, 0)] {
                let p = design.chains[chain].particles[idx];
                let w = (p - o).cross(&z);
                let dist = w.norm();
                ev.ineq[row] = dist - 0.5 * self.params.axis_tol;
                if dist > 1e-12 {
                    add_vec(&mut ev.ineq_jac, row, self, chain, idx, z.cross(&(w / dist)));
                }
                row += 1;
            }
        }

        // Spacing cap keeping the sphere proxy watertight.
        if let Some(cap) = self.params.max_segment_length {
            for (k, chain) in design.chains.iter().enumerate() {
                let pts = &chain.particles;
                for i in 0..pts.len() - 1 {
                    let d = pts[i + 1] - pts[i];
                    let nrm = d.norm();
                    ev.ineq[row] = (nrm - cap) / cap;
                    if nrm > 1e-12 {
                        let u = d / (nrm * cap);
                        add_vec(&mut ev.ineq_jac, row, self, k, i + 1, u);
                        add_vec(&mut ev.ineq_jac, row, self, k, i, -u);
                    }
                    row += 1;
                }
            }
        }

        // Pinned capsule contacts: hold CONTACT_AIM of exact clearance at
        // the frame each one was collected on.  The closest-point weights
        // are treated as constants (exact for the distance gradient at a
        // minimum over the segment parameters).
        for ct in self.contacts {
            let motions = &self.contact_scene.motions[ct.frame];
            let world = |(chain, idx): (usize, usize)| {
                motions[chain].apply_point(&design.chains[chain].particles[idx])
            };
            let (a0, a1) = (world(ct.ends_a[0]), world(ct.ends_a[1]));
            let (b0, b1) = (world(ct.ends_b[0]), world(ct.ends_b[1]));
            let (s, t) = segment_closest(&a0, &a1, &b0, &b1);
            let diff = (a0 + (a1 - a0) * s) - (b0 + (b1 - b0) * t);
            let dist = diff.norm();
            ev.ineq[row] = CONTACT_AIM - (dist - ct.radii);
            if dist > 1e-9 {
                let u = diff / dist;
                for (w, &(chain, idx)) in [(1.0 - s, &ct.ends_a[0]), (s, &ct.ends_a[1])] {
                    let local = motions[chain].rot.tr_mul(&u) * -w;
                    add_vec(&mut ev.ineq_jac, row, self, chain, idx, local);
                }
                for (w, &(chain, idx)) in [(1.0 - t, &ct.ends_b[0]), (t, &ct.ends_b[1])] {
                    let local = motions[chain].rot.tr_mul(&u) * w;
                    add_vec(&mut ev.ineq_jac, row, self, chain, idx, local);
                }
            }
            row += 1;
        }
        debug_assert_eq!(row, self.ineq);

        // Equalities: hinge gap, then end-segment perpendicularity.
        let mut row = 0;
        for j in 0..n {
            let prev = design.chain_ending_at(j);
            let last = design.chains[prev].particles.len() - 1;
            let delta = design.chains[prev].particles[last] - design.chains[j].particles[0];
            let gap = delta.norm();
            ev.eq[row] = (gap - design.d_j) / design.d_j;
            if gap > 1e-12 {
                let u = delta / (gap * design.d_j);
                add_vec(&mut ev.eq_jac, row, self, prev, last, u);
                add_vec(&mut ev.eq_jac, row, self, j, 0, -u);
            }
            row += 1;
        }
        for j in 0..n {
            let prev = design.chain_ending_at(j);
            let z = self.scene.axes[j].direction;
            let m = design.chains[prev].particles.len();
            // (chain, tail sphere, head sphere) of the terminal segment.
            for (chain, tail, head) in [(prev, m - 2, m - 1), (j, 0, 1)] {
                let e = design.chains[chain].particles[head] - design.chains[chain].particles[tail];
                let nrm = e.norm();
                let unit = e / nrm.max(1e-12);
                let h = unit.dot(&z);
                ev.eq[row] = h;
                let de = (z - unit * h) / nrm.max(1e-12);
                add_vec(&mut ev.eq_jac, row, self, chain, head, de);
                add_vec(&mut ev.eq_jac, row, self, chain, tail, -de);
                row += 1;
            }
        }
        debug_assert_eq!(row, self.eq);
        ev
    }
}

/// Drive `initial` to a self-collision-free feasible shape.
///
/// The solve alternates augmented-Lagrangian rounds with exact capsule
/// sweeps over `verify` (the enforcement frames when absent): every
/// capsule pair found below [`CONTACT_MARGIN`] is pinned as an explicit
/// distance constraint before the next round, closing the gap between the
/// sampled-sphere energy and the continuous bars it stands for.
///
/// Already-feasible and contact-free inputs are returned unchanged with
/// zero iterations.  When the iteration budget runs out first, the best
/// iterate comes back with `feasible = false` and its residuals filled in.
pub fn optimize_geometry(
    initial: &GeometryDesign,
    scene: &MechanismScene,
    verify: Option<&MechanismScene>,
    model: &CollisionModel,
    params: &GeomConstraintParams,
    opts: &GeomSolveOptions,
) -> GeomOutcome {
    let check_scene = verify.unwrap_or(scene);
    let l0 = chord_lengths(initial);
    let mut design = initial.clone();
    let mut contacts: Vec<Contact> = Vec::new();
    let mut seen: HashSet<(usize, super::clearance::CapsuleId, super::clearance::CapsuleId)> =
        HashSet::new();
    let mut iterations = 0;

    for _ in 0..=CONTACT_ROUNDS {
        let report = residual_report(&design, scene, model, params, Some(&l0));
        let open = collect_contacts(&design, check_scene, CONTACT_MARGIN);
        if report.is_feasible(model, params) && open.is_empty() {
            return GeomOutcome {
                design,
                feasible: true,
                iterations,
                report,
            };
        }
        if iterations >= opts.max_iterations {
            break;
        }
        for ct in open {
            if seen.insert(ct.key) {
                contacts.push(ct);
            }
        }

        let problem = GeomNlp::new(&design, scene, model, params, &contacts, check_scene);
        let x0 = GeomNlp::flatten(&design);
        let nlp_opts = NlpOptions {
            max_total_iters: opts.max_iterations - iterations,
            ..NlpOptions::default()
        };
        let res = nlp::solve(&problem, &x0, &nlp_opts);
        iterations += res.iterations.max(1);
        design = problem.rebuild(&res.x);
    }

    let report = residual_report(&design, scene, model, params, Some(&l0));
    let feasible =
        report.is_feasible(model, params) && collect_contacts(&design, check_scene, 0.0).is_empty();
    GeomOutcome {
        design,
        feasible,
        iterations,
        report,
    }
}
