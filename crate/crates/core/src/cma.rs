//! Covariance matrix adaptation evolution strategy (CMA-ES).
//!
//! A self-contained minimizer for low-dimensional, non-smooth black-box
//! objectives. The implementation follows the standard active rank-mu
//! update with cumulative step-size adaptation, an optional separable
//! (diagonal) warm phase that learns per-axis scales quickly before the
//! full covariance takes over, and restarts with doubled population on
//! stagnation. Sampling is driven by a single seeded stream so results
//! are bit-reproducible for a fixed seed; candidate evaluations run in
//! parallel but are pure and consumed in index order, so concurrency never
//! changes the outcome.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default initial step size as a fraction of a unit-cube coordinate range.
pub const DEFAULT_SIGMA0: f64 = 0.2;

/// Tuning knobs for [`minimize`]. `Default` gives the standard settings
/// used throughout the synthesis stage.
#[derive(Debug, Clone)]
pub struct CmaOptions {
    /// Population size; `None` selects the standard `4 + 3 ln n`.
    pub population: Option<usize>,
    /// Initial step size (same units as the search coordinates).
    pub sigma0: f64,
    /// Hard cap on total generations across all restarts.
    pub max_generations: usize,
    /// Stop early once the best value drops to this level.
    pub target_value: Option<f64>,
    /// Generations without best-so-far improvement before a restart.
    pub stagnation: usize,
    /// Maximum restarts (each doubles the population).
    pub max_restarts: usize,
    /// Length of the separable warm phase at the start of each run: the
    /// covariance is kept diagonal (with the usual `(n + 2) / 3` learning
    /// rate boost) so per-axis scales adapt quickly before the full
    /// matrix takes over. Zero disables the phase.
    pub diag_generations: usize,
    /// Coordinate interval for re-seeding the mean on restart; `None`
    /// restarts from the initial guess.
    pub restart_domain: Option<(f64, f64)>,
    /// Seed for the sampling stream.
    pub seed: u64,
}

impl Default for CmaOptions {
    fn default() -> Self {
        Self {
            population: None,
            sigma0: DEFAULT_SIGMA0,
            max_generations: 300,
            target_value: None,
            stagnation: 60,
            max_restarts: 4,
            diag_generations: 0,
            restart_domain: None,
            seed: 0,
        }
    }
}

/// Outcome of a [`minimize`] run.
#[derive(Debug, Clone)]
pub struct CmaResult {
    /// Best point found across all restarts.
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub value: f64,
    /// Total generations consumed.
    pub generations: usize,
    /// Restarts performed.
    pub restarts: usize,
    /// Best-so-far value after each generation (non-increasing).
    pub history: Vec<f64>,
}

/// Strategy constants derived from the dimension and population size.
/// Uses the active (negative-weight) covariance update: the worst-ranked
/// candidates actively shrink the covariance along their directions.
struct Strategy {
    /// Recombination weights for the top half (sum 1); drive the mean and
    /// both evolution paths.
    weights_pos: Vec<f64>,
    /// Full-rank weights, one per rank; the tail is negative and scaled
    /// to keep the covariance positive definite.
    weights_all: Vec<f64>,
    /// Sum of `weights_all`.
    weight_sum: f64,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(dim: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..lambda)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();

        let pos_total: f64 = raw[..mu].iter().sum();
        let weights_pos: Vec<f64> = raw[..mu].iter().map(|w| w / pos_total).collect();
        let mu_eff = 1.0 / weights_pos.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma =
            1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff))
            .min(1.0 - c_1);

        // Scale the negative tail (standard active-CMA limits).
        let neg_raw: f64 = raw[mu..].iter().sum();
        let neg_sq: f64 = raw[mu..].iter().map(|w| w * w).sum();
        let mu_eff_neg = if neg_sq > 0.0 { neg_raw * neg_raw / neg_sq } else { 0.0 };
        let a_mu = 1.0 + c_1 / c_mu;
        let a_mu_eff = 1.0 + 2.0 * mu_eff_neg / (mu_eff + 2.0);
        let a_pos_def = (1.0 - c_1 - c_mu) / (n * c_mu);
        let neg_scale = if neg_raw < 0.0 {
            a_mu.min(a_mu_eff).min(a_pos_def) / neg_raw.abs()
        } else {
            0.0
        };
        let mut weights_all = Vec::with_capacity(lambda);
        weights_all.extend(weights_pos.iter().copied());
        weights_all.extend(raw[mu..].iter().map(|w| w * neg_scale));
        let weight_sum: f64 = weights_all.iter().sum();

        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Self {
            weights_pos,
            weights_all,
            weight_sum,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Mutable state of one strategy run (reset on restart).
struct RunState {
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    /// Eigenvectors of `cov` (columns).
    basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    scales: DVector<f64>,
    generation: usize,
}

impl RunState {
    fn fresh(mean: DVector<f64>, sigma: f64) -> Self {
        let dim = mean.len();
        Self {
            mean,
            sigma,
            cov: DMatrix::identity(dim, dim),
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            basis: DMatrix::identity(dim, dim),
            scales: DVector::from_element(dim, 1.0),
            generation: 0,
        }
    }

    /// Refreshes the eigendecomposition of the covariance (or just reads
    /// the diagonal during the separable warm phase). Returns `false` when
    /// the covariance is numerically unusable (restart signal).
    fn refresh_eigen(&mut self, diagonal: bool) -> bool {
        let dim = self.mean.len();
        if diagonal {
            let max_ev = (0..dim).map(|i| self.cov[(i, i)]).fold(f64::MIN, f64::max);
            let min_ev = (0..dim).map(|i| self.cov[(i, i)]).fold(f64::MAX, f64::min);
            if !(max_ev.is_finite() && min_ev.is_finite()) || max_ev <= 0.0 {
                return false;
            }
            if min_ev <= 0.0 || max_ev / min_ev > 1e14 {
                return false;
            }
            self.basis = DMatrix::identity(dim, dim);
            self.scales =
                DVector::from_iterator(dim, (0..dim).map(|i| self.cov[(i, i)].sqrt()));
            return true;
        }
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        self.cov = sym.clone();
        let eig = sym.symmetric_eigen();
        let max_ev = eig.eigenvalues.max();
        let min_ev = eig.eigenvalues.min();
        if !(max_ev.is_finite() && min_ev.is_finite()) || max_ev <= 0.0 {
            return false;
        }
        if min_ev <= 0.0 || max_ev / min_ev > 1e14 {
            return false;
        }
        self.basis = eig.eigenvectors;
        self.scales = DVector::from_iterator(dim, eig.eigenvalues.iter().map(|e| e.sqrt()));
        true
    }
}

/// Minimizes `f` over `R^dim` starting from `x0`.
///
/// `f` must be pure (same input, same output) and is called concurrently;
/// non-finite values are treated as "worst possible" so the search simply
/// moves away from invalid regions.
pub fn minimize<F>(f: F, x0: &[f64], opts: &CmaOptions) -> CmaResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = x0.len();
    assert!(dim >= 1, "empty search space");
    let base_lambda = opts
        .population
        .unwrap_or(4 + (3.0 * (dim as f64).ln()).floor() as usize)
        .max(4);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_x = x0.to_vec();
    let mut best_val = f(x0);
    if !best_val.is_finite() {
        best_val = f64::INFINITY;
    }
    let mut history = Vec::new();
    let mut generations_used = 0usize;
    let mut restarts = 0usize;

    'runs: loop {
        let lambda = base_lambda << restarts.min(16);
        let strat = Strategy::new(dim, lambda);
        let mu = lambda / 2;
        let mean0 = if restarts == 0 {
            DVector::from_column_slice(x0)
        } else if let Some((lo, hi)) = opts.restart_domain {
            DVector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(lo..hi)))
        } else {
            DVector::from_column_slice(x0)
        };
        let mut st = RunState::fresh(mean0, opts.sigma0);
        let mut stale = 0usize;

        loop {
            if generations_used >= opts.max_generations {
                break 'runs;
            }
            let diag_phase = st.generation < opts.diag_generations;
            if !st.refresh_eigen(diag_phase) {
                break; // degenerate covariance: restart
            }

            // Sample all candidates from the single seeded stream first so
            // the draw order never depends on evaluation scheduling.
            let zs: Vec<DVector<f64>> = (0..lambda)
                .map(|_| {
                    DVector::from_iterator(
                        dim,
                        (0..dim).map(|_| {
                            // Box-Muller keeps the dependency surface small
                            // and the stream layout explicit.
                            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                            let u2: f64 = rng.gen_range(0.0..1.0);
                            (-2.0 * u1.ln()).sqrt()
                                * (2.0 * std::f64::consts::PI * u2).cos()
                        }),
                    )
                })
                .collect();
            let ys: Vec<DVector<f64>> = zs
                .iter()
                .map(|z| &st.basis * z.component_mul(&st.scales))
                .collect();
            let xs: Vec<Vec<f64>> = ys
                .iter()
                .map(|y| (&st.mean + y * st.sigma).iter().copied().collect())
                .collect();

            let mut scored: Vec<(f64, usize)> = xs
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let v = f(x);
                    (if v.is_finite() { v } else { f64::INFINITY }, i)
                })
                .collect();
            scored.sort_by(|a, b| a.partial_cmp(b).expect("finite ordering"));
            generations_used += 1;
            st.generation += 1;

            let gen_best = scored[0].0;
            if gen_best < best_val {
                best_val = gen_best;
                best_x = xs[scored[0].1].clone();
                stale = 0;
            } else {
                stale += 1;
            }
            history.push(best_val);
            if let Some(target) = opts.target_value {
                if best_val <= target {
                    break 'runs;
                }
            }

            // Weighted recombination over the mu best.
            let mut y_w = DVector::zeros(dim);
            for (rank, &(_, idx)) in scored.iter().take(mu).enumerate() {
                y_w += &ys[idx] * strat.weights_pos[rank];
            }
            st.mean += &y_w * st.sigma;

            // Step-size path uses C^{-1/2} y_w.
            let inv_scales =
                DVector::from_iterator(dim, st.scales.iter().map(|s| 1.0 / s.max(1e-150)));
            let c_inv_half_yw = &st.basis
                * (st.basis.transpose() * &y_w).component_mul(&inv_scales);
            st.p_sigma = &st.p_sigma * (1.0 - strat.c_sigma)
                + c_inv_half_yw
                    * (strat.c_sigma * (2.0 - strat.c_sigma) * strat.mu_eff).sqrt();
            let ps_norm = st.p_sigma.norm();
            let expected = (1.0
                - (1.0 - strat.c_sigma).powi(2 * st.generation as i32))
            .sqrt()
                * strat.chi_n;
            let h_sigma = ps_norm / expected < 1.4 + 2.0 / (dim as f64 + 1.0);

            // Covariance path and rank-one / rank-mu update.
            let h = if h_sigma { 1.0 } else { 0.0 };
            st.p_c = &st.p_c * (1.0 - strat.c_c)
                + &y_w * (h * (strat.c_c * (2.0 - strat.c_c) * strat.mu_eff).sqrt());
            let delta_h = (1.0 - h) * strat.c_c * (2.0 - strat.c_c);
            if diag_phase {
                // Separable update: diagonal entries only, with the
                // standard (n + 2) / 3 learning-rate boost and positive
                // weights only (the boosted rates would defeat the
                // negative-weight safety margins).
                let boost = (dim as f64 + 2.0) / 3.0;
                let c_1 = (strat.c_1 * boost).min(0.5);
                let c_mu = (strat.c_mu * boost).min(1.0 - c_1);
                let decay = 1.0 + c_1 * delta_h - c_1 - c_mu;
                for i in 0..dim {
                    let mut rank_mu = 0.0;
                    for (rank, &(_, idx)) in scored.iter().take(mu).enumerate() {
                        rank_mu += strat.weights_pos[rank] * ys[idx][i] * ys[idx][i];
                    }
                    st.cov[(i, i)] = st.cov[(i, i)] * decay
                        + st.p_c[i] * st.p_c[i] * c_1
                        + rank_mu * c_mu;
                }
            } else {
                // Full active update: the worst-ranked candidates shrink
                // the covariance along their directions.
                let mut rank_mu = DMatrix::zeros(dim, dim);
                for (rank, &(_, idx)) in scored.iter().enumerate() {
                    let mut w = strat.weights_all[rank];
                    if w < 0.0 {
                        // Rescale so a long negative step cannot break
                        // positive definiteness: ||C^{-1/2} y|| equals
                        // ||z|| here.
                        w *= dim as f64 / zs[idx].norm_squared().max(1e-12);
                    }
                    rank_mu += &ys[idx] * ys[idx].transpose() * w;
                }
                st.cov = &st.cov
                    * (1.0 + strat.c_1 * delta_h
                        - strat.c_1
                        - strat.c_mu * strat.weight_sum)
                    + (&st.p_c * st.p_c.transpose()) * strat.c_1
                    + rank_mu * strat.c_mu;
            }

            // Step-size adaptation.
            st.sigma *=
                ((strat.c_sigma / strat.d_sigma) * (ps_norm / strat.chi_n - 1.0)).exp();
            if !st.sigma.is_finite() || st.sigma < 1e-13 || st.sigma > 1e6 {
                break; // collapsed or diverged: restart
            }
            if stale >= opts.stagnation {
                break;
            }
        }

        if restarts >= opts.max_restarts || generations_used >= opts.max_generations {
            break;
        }
        restarts += 1;
    }

    CmaResult { x: best_x, value: best_val, generations: generations_used, restarts, history }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum()
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    fn rastrigin(x: &[f64]) -> f64 {
        x.iter()
            .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0)
            .sum()
    }

    #[test]
    fn sphere_converges_to_optimum() {
        let opts = CmaOptions {
            max_generations: 400,
            target_value: Some(1e-12),
            seed: 7,
            ..CmaOptions::default()
        };
        let res = minimize(sphere, &[0.5; 12], &opts);
        assert!(res.value <= 1e-12, "value {}", res.value);
        for v in &res.x {
            assert!((v - 0.3).abs() <= 1e-6);
        }
    }

    #[test]
    fn rosenbrock_valley_is_tracked() {
        let opts = CmaOptions {
            max_generations: 1500,
            target_value: Some(1e-9),
            stagnation: 200,
            seed: 3,
            ..CmaOptions::default()
        };
        let res = minimize(rosenbrock, &[0.0; 6], &opts);
        assert!(res.value <= 1e-9, "value {}", res.value);
        for v in &res.x {
            assert!((v - 1.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn diagonal_warm_phase_handles_axis_anisotropy() {
        // A strongly axis-scaled ellipsoid: the separable phase has to
        // learn the per-axis scales and the full phase finishes the job.
        let n = 8;
        let ellipsoid = |x: &[f64]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| 10f64.powf(3.0 * i as f64 / (n as f64 - 1.0)) * v * v)
                .sum::<f64>()
        };
        let opts = CmaOptions {
            max_generations: 400,
            target_value: Some(1e-10),
            stagnation: 400,
            diag_generations: 100,
            seed: 9,
            ..CmaOptions::default()
        };
        let res = minimize(ellipsoid, &[1.0; 8], &opts);
        assert!(res.value <= 1e-10, "value {}", res.value);
    }

    #[test]
    fn history_is_monotone_non_increasing() {
        let opts = CmaOptions { max_generations: 120, seed: 11, ..CmaOptions::default() };
        let res = minimize(rastrigin, &[2.5; 5], &opts);
        assert_eq!(res.history.len(), res.generations);
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn same_seed_is_bitwise_reproducible() {
        let opts = CmaOptions { max_generations: 80, seed: 42, ..CmaOptions::default() };
        let a = minimize(rastrigin, &[1.5; 4], &opts);
        let b = minimize(rastrigin, &[1.5; 4], &opts);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.generations, b.generations);
        for (u, v) in a.x.iter().zip(&b.x) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        let c = minimize(
            rastrigin,
            &[1.5; 4],
            &CmaOptions { seed: 43, ..opts.clone() },
        );
        assert_ne!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn stagnation_triggers_restarts_with_larger_populations() {
        // A deceptive start far from the basin plus a tight stagnation
        // budget forces at least one restart.
        let opts = CmaOptions {
            max_generations: 200,
            stagnation: 8,
            max_restarts: 3,
            restart_domain: Some((-4.0, 4.0)),
            seed: 5,
            ..CmaOptions::default()
        };
        let res = minimize(rastrigin, &[3.9; 4], &opts);
        assert!(res.restarts >= 1);
        assert!(res.value <= rastrigin(&[3.9; 4]));
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn non_finite_objectives_are_quarantined() {
        // A hole of NaN around the origin must not poison the search.
        let f = |x: &[f64]| {
            let s = sphere(x);
            if x[0] < 0.0 {
                f64::NAN
            } else {
                s
            }
        };
        let opts = CmaOptions {
            max_generations: 300,
            target_value: Some(1e-10),
            seed: 9,
            ..CmaOptions::default()
        };
        let res = minimize(f, &[1.0; 3], &opts);
        assert!(res.value <= 1e-10, "value {}", res.value);
        assert!(res.value.is_finite());
    }

    #[test]
    fn early_stop_respects_target_value() {
        let opts = CmaOptions {
            max_generations: 500,
            target_value: Some(1e-3),
            seed: 1,
            ..CmaOptions::default()
        };
        let res = minimize(sphere, &[0.9; 8], &opts);
        assert!(res.value <= 1e-3);
        assert!(res.generations < 500, "stopped at the target, not the cap");
    }
}
