//! Sequential minimal optimization for the linear-kernel dual with
//! per-variable box constraints.
//!
//! Solves, in maximization form,
//!
//! ```text
//! max  sum(alpha) - 1/2 alpha' Q alpha      Q_ij = y_i y_j K(x_i, x_j)
//! s.t. sum_i y_i alpha_i = 0,   0 <= alpha_i <= U_i
//! ```
//!
//! with `K(x, z) = kernel_scale * <x, z>`. Per-variable upper bounds and
//! the kernel scale let one solver serve both the plain soft-margin
//! machine (scale 1, `U_i = C`) and the cost-constrained variant's
//! relaxations (scale 1/2, mixed bounds).

use crate::dataset::Features;
use crate::error::{Error, Result};

/// Curvature floor for numerically flat pair subproblems.
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct SmoProblem<'a> {
    pub features: &'a Features,
    /// Labels in {-1, +1}, one per row.
    pub labels: &'a [f64],
    /// Per-variable upper bounds, all nonnegative.
    pub upper: &'a [f64],
    pub kernel_scale: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SmoOptions {
    /// Stop once the maximal KKT violation drops to this value.
    pub tolerance: f64,
    pub max_iterations: u64,
    /// Abandon the solve once the dual objective exceeds this value. The
    /// objective only grows, so the final value would too; branch-and-bound
    /// uses this to cut off nodes that cannot beat an incumbent.
    pub stop_above: Option<f64>,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tolerance: 1e-3,
            max_iterations: 10_000_000,
            stop_above: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SmoOutcome {
    pub alpha: Vec<f64>,
    pub intercept: f64,
    /// Final value of the maximization objective.
    pub dual_objective: f64,
    pub iterations: u64,
    /// KKT violation at exit, `m(alpha) - M(alpha)`.
    pub kkt_violation: f64,
    pub converged: bool,
    /// True when `stop_above` triggered.
    pub stopped_early: bool,
}

/// Lazily materialized rows of the kernel matrix.
struct KernelCache<'a> {
    features: &'a Features,
    scale: f64,
    rows: Vec<Option<Box<[f64]>>>,
}

impl<'a> KernelCache<'a> {
    fn new(features: &'a Features, scale: f64) -> Self {
        KernelCache {
            features,
            scale,
            rows: vec![None; features.len()],
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            let xi = self.features.row(i);
            let row: Box<[f64]> = (0..self.features.len())
                .map(|t| {
                    let xt = self.features.row(t);
                    self.scale * xi.iter().zip(xt).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            self.rows[i] = Some(row);
        }
        self.rows[i].as_deref().unwrap()
    }
}

impl<'a> SmoProblem<'a> {
    fn validate(&self) -> Result<()> {
        let m = self.features.len();
        if m == 0 {
            return Err(Error::TooFewRows {
                context: "dual solver".into(),
                needed: 1,
                got: 0,
            });
        }
        if self.labels.len() != m || self.upper.len() != m {
            return Err(Error::SchemaMismatch(format!(
                "{m} rows, {} labels, {} bounds",
                self.labels.len(),
                self.upper.len()
            )));
        }
        if self.labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
            return Err(Error::invalid("labels", "must be -1 or +1"));
        }
        if self.upper.iter().any(|u| !u.is_finite() || *u < 0.0) {
            return Err(Error::invalid(
                "upper",
                "alpha bounds must be finite and nonnegative",
            ));
        }
        if !self.kernel_scale.is_finite() || self.kernel_scale <= 0.0 {
            return Err(Error::invalid(
                "kernel_scale",
                format!("{} is not positive", self.kernel_scale),
            ));
        }
        Ok(())
    }

    /// Direct O(m^2) evaluation of the maximization objective. Intended
    /// for tests and cross-checks, not the solver loop.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let m = self.features.len();
        let mut quad = 0.0;
        for i in 0..m {
            if alpha[i] == 0.0 {
                continue;
            }
            let xi = self.features.row(i);
            for j in 0..m {
                if alpha[j] == 0.0 {
                    continue;
                }
                let xj = self.features.row(j);
                let k: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                quad +=
                    alpha[i] * alpha[j] * self.labels[i] * self.labels[j] * self.kernel_scale * k;
            }
        }
        alpha.iter().sum::<f64>() - 0.5 * quad
    }
}

/// Maximal-violating-pair SMO.
pub fn solve(problem: &SmoProblem, options: &SmoOptions) -> Result<SmoOutcome> {
    problem.validate()?;
    let m = problem.features.len();
    let y = problem.labels;
    let upper = problem.upper;
    let mut cache = KernelCache::new(problem.features, problem.kernel_scale);

    let mut alpha = vec![0.0f64; m];
    // Gradient of the minimization form 1/2 a'Qa - sum(a); at alpha = 0
    // every component is -1.
    let mut grad = vec![-1.0f64; m];

    let mut iterations = 0u64;
    let mut converged = false;
    let mut stopped_early = false;
    let mut violation;

    loop {
        // Maximal violating pair over I_up and I_low.
        let mut i_best: Option<usize> = None;
        let mut m_up = f64::NEG_INFINITY;
        let mut j_best: Option<usize> = None;
        let mut m_low = f64::INFINITY;
        for t in 0..m {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < upper[t]) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] < 0.0 && alpha[t] < upper[t]) || (y[t] > 0.0 && alpha[t] > 0.0);
            if in_up && v > m_up {
                m_up = v;
                i_best = Some(t);
            }
            if in_low && v < m_low {
                m_low = v;
                j_best = Some(t);
            }
        }
        violation = m_up - m_low;
        let (i, j) = match (i_best, j_best) {
            (Some(i), Some(j)) => (i, j),
            // One side empty: no feasible ascent direction remains.
            _ => {
                converged = true;
                break;
            }
        };
        if violation <= options.tolerance {
            converged = true;
            break;
        }
        if iterations >= options.max_iterations {
            break;
        }
        iterations += 1;

        // Two-variable subproblem along y_i d_i + y_j d_j = 0 with
        // d_j = t, d_i = -y_i y_j t.
        let row_i = cache.row(i).to_vec();
        let kii = row_i[i];
        let kij = row_i[j];
        let row_j = cache.row(j);
        let kjj = row_j[j];
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let s = y[i] * y[j];
        let mut t_step = (s * grad[i] - grad[j]) / quad;

        // Clip to both boxes.
        let mut lo = -alpha[j];
        let mut hi = upper[j] - alpha[j];
        if s > 0.0 {
            lo = lo.max(alpha[i] - upper[i]);
            hi = hi.min(alpha[i]);
        } else {
            lo = lo.max(-alpha[i]);
            hi = hi.min(upper[i] - alpha[i]);
        }
        t_step = t_step.clamp(lo, hi);
        if t_step == 0.0 {
            // Numerically stuck pair; treat as converged at this violation.
            converged = violation <= options.tolerance;
            break;
        }
        let d_i = -s * t_step;
        let d_j = t_step;
        alpha[i] += d_i;
        alpha[j] += d_j;
        // Snap to the box to keep the index sets exact.
        alpha[i] = alpha[i].clamp(0.0, upper[i]);
        alpha[j] = alpha[j].clamp(0.0, upper[j]);

        for t in 0..m {
            grad[t] += y[t] * (y[i] * row_i[t] * d_i + y[j] * row_j[t] * d_j);
        }

        if let Some(cutoff) = options.stop_above {
            let obj = objective_from_gradient(&alpha, &grad);
            if obj > cutoff {
                stopped_early = true;
                break;
            }
        }
    }

    let dual_objective = objective_from_gradient(&alpha, &grad);
    let intercept = intercept_from_gradient(&alpha, &grad, y, upper, options.tolerance);

    Ok(SmoOutcome {
        alpha,
        intercept,
        dual_objective,
        iterations,
        kkt_violation: violation,
        converged,
        stopped_early,
    })
}

/// Maximization objective from the maintained gradient:
/// `(Q a)_i = g_i + 1`, so `a'Qa = sum a(g + 1)` and the objective is
/// `1/2 (sum(a) - sum(a g))`.
fn objective_from_gradient(alpha: &[f64], grad: &[f64]) -> f64 {
    let sum: f64 = alpha.iter().sum();
    let ag: f64 = alpha.iter().zip(grad).map(|(a, g)| a * g).sum();
    0.5 * (sum - ag)
}

/// Intercept from stationarity: free variables satisfy `-y_i g_i = beta`
/// exactly at the optimum, so their average is the estimate. With no free
/// variables any value between the bound sets is optimal; the midpoint is
/// used.
fn intercept_from_gradient(
    alpha: &[f64],
    grad: &[f64],
    y: &[f64],
    upper: &[f64],
    tolerance: f64,
) -> f64 {
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let edge = |u: f64| (u * 1e-9).max(1e-12);
    for t in 0..alpha.len() {
        if alpha[t] > edge(upper[t]) && alpha[t] < upper[t] - edge(upper[t]) {
            free_sum += -y[t] * grad[t];
            free_count += 1;
        }
    }
    if free_count > 0 {
        return free_sum / free_count as f64;
    }
    let mut m_up = f64::NEG_INFINITY;
    let mut m_low = f64::INFINITY;
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < upper[t]) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] < 0.0 && alpha[t] < upper[t]) || (y[t] > 0.0 && alpha[t] > 0.0);
        if in_up {
            m_up = m_up.max(v);
        }
        if in_low {
            m_low = m_low.min(v);
        }
    }
    if m_up.is_finite() && m_low.is_finite() {
        0.5 * (m_up + m_low)
    } else if m_up.is_finite() {
        m_up
    } else if m_low.is_finite() {
        m_low
    } else {
        let _ = tolerance;
        0.0
    }
}

/// Primal normal vector `kernel_scale * sum_i alpha_i y_i x_i`.
pub fn primal_weights(features: &Features, labels: &[f64], alpha: &[f64], scale: f64) -> Vec<f64> {
    let mut w = vec![0.0; features.n_cols()];
    for i in 0..features.len() {
        if alpha[i] == 0.0 {
            continue;
        }
        let coef = scale * alpha[i] * labels[i];
        for (wc, x) in w.iter_mut().zip(features.row(i)) {
            *wc += coef * x;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Features;
    use crate::rng::SplitMix64;
    use approx::assert_abs_diff_eq;

    fn features(rows: &[&[f64]]) -> Features {
        Features::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn two_symmetric_points_solve_analytically() {
        let f = features(&[&[-1.0], &[1.0]]);
        let labels = [-1.0, 1.0];
        let upper = [1.0, 1.0];
        let p = SmoProblem {
            features: &f,
            labels: &labels,
            upper: &upper,
            kernel_scale: 1.0,
        };
        let out = solve(&p, &SmoOptions::default()).unwrap();
        assert!(out.converged);
        assert_abs_diff_eq!(out.alpha[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(out.alpha[1], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(out.dual_objective, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(out.intercept, 0.0, epsilon = 1e-6);
        let w = primal_weights(&f, &labels, &out.alpha, 1.0);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-9);
    }

    fn random_problem(seed: u64, m: usize, d: usize) -> (Features, Vec<f64>) {
        let mut rng = SplitMix64::new(seed);
        let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| unit() * 4.0 - 2.0).collect())
            .collect();
        let mut labels: Vec<f64> = (0..m)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        // Random flips keep both classes present.
        if unit() > 0.5 {
            labels.swap(0, 1);
        }
        (Features::from_rows(rows).unwrap(), labels)
    }

    #[test]
    fn solutions_satisfy_kkt_box_and_balance() {
        for seed in 0..30u64 {
            let (f, labels) = random_problem(seed, 3 + (seed % 6) as usize, 2);
            let upper = vec![1.0 + (seed % 3) as f64; f.len()];
            let p = SmoProblem {
                features: &f,
                labels: &labels,
                upper: &upper,
                kernel_scale: 1.0,
            };
            let out = solve(&p, &SmoOptions::default()).unwrap();
            assert!(out.converged, "seed {seed}");
            assert!(out.kkt_violation <= 1e-3, "seed {seed}");
            let balance: f64 = out.alpha.iter().zip(&labels).map(|(a, y)| a * y).sum();
            assert_abs_diff_eq!(balance, 0.0, epsilon = 1e-9);
            for (a, u) in out.alpha.iter().zip(&upper) {
                assert!(*a >= 0.0 && *a <= *u);
            }
            assert_abs_diff_eq!(out.dual_objective, p.objective(&out.alpha), epsilon = 1e-8);
        }
    }

    #[test]
    fn half_scale_with_double_bound_matches_unit_scale() {
        // With K scaled by 1/2 and box C, substituting a = 2 alpha shows
        // the optimizer is twice the unit-scale box-C/2 solution and the
        // objective doubles; the primal weights coincide.
        let (f, labels) = random_problem(77, 8, 3);
        let c = 2.0;
        let scaled = SmoProblem {
            features: &f,
            labels: &labels,
            upper: &vec![c; f.len()],
            kernel_scale: 0.5,
        };
        let plain = SmoProblem {
            features: &f,
            labels: &labels,
            upper: &vec![c / 2.0; f.len()],
            kernel_scale: 1.0,
        };
        let tight = SmoOptions {
            tolerance: 1e-8,
            ..SmoOptions::default()
        };
        let a = solve(&scaled, &tight).unwrap();
        let b = solve(&plain, &tight).unwrap();
        assert_abs_diff_eq!(a.dual_objective, 2.0 * b.dual_objective, epsilon = 1e-6);
        let wa = primal_weights(&f, &labels, &a.alpha, 0.5);
        let wb = primal_weights(&f, &labels, &b.alpha, 1.0);
        for (x, y) in wa.iter().zip(&wb) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-5);
        }
        assert_abs_diff_eq!(a.intercept, b.intercept, epsilon = 1e-4);
    }

    #[test]
    fn zero_upper_bound_pins_a_variable() {
        let f = features(&[&[-1.0], &[-0.9], &[1.0]]);
        let labels = [-1.0, -1.0, 1.0];
        let upper = [1.0, 0.0, 1.0];
        let p = SmoProblem {
            features: &f,
            labels: &labels,
            upper: &upper,
            kernel_scale: 1.0,
        };
        let out = solve(&p, &SmoOptions::default()).unwrap();
        assert_eq!(out.alpha[1], 0.0);
        assert!(out.converged);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let (f, labels) = random_problem(5, 8, 2);
        let p = SmoProblem {
            features: &f,
            labels: &labels,
            upper: &vec![10.0; f.len()],
            kernel_scale: 1.0,
        };
        let out = solve(
            &p,
            &SmoOptions {
                tolerance: 1e-12,
                max_iterations: 1,
                stop_above: None,
            },
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn stop_above_halts_the_ascent() {
        let (f, labels) = random_problem(9, 10, 2);
        let p = SmoProblem {
            features: &f,
            labels: &labels,
            upper: &vec![5.0; f.len()],
            kernel_scale: 1.0,
        };
        let full = solve(&p, &SmoOptions::default()).unwrap();
        let cutoff = full.dual_objective * 0.25;
        let out = solve(
            &p,
            &SmoOptions {
                stop_above: Some(cutoff),
                ..SmoOptions::default()
            },
        )
        .unwrap();
        assert!(out.stopped_early);
        assert!(out.dual_objective > cutoff);
        assert!(out.dual_objective <= full.dual_objective + 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = features(&[&[1.0], &[2.0]]);
        let bad_labels = [1.0, 0.5];
        let upper = [1.0, 1.0];
        assert!(solve(
            &SmoProblem {
                features: &f,
                labels: &bad_labels,
                upper: &upper,
                kernel_scale: 1.0
            },
            &SmoOptions::default()
        )
        .is_err());
        let labels = [1.0, -1.0];
        assert!(solve(
            &SmoProblem {
                features: &f,
                labels: &labels,
                upper: &[1.0, -1.0],
                kernel_scale: 1.0
            },
            &SmoOptions::default()
        )
        .is_err());
        assert!(solve(
            &SmoProblem {
                features: &f,
                labels: &labels,
                upper: &upper,
                kernel_scale: 0.0
            },
            &SmoOptions::default()
        )
        .is_err());
    }
}
