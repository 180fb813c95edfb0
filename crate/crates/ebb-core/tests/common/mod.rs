//! Independent oracles and generators shared by the integration suites.
//!
//! Every oracle here solves its problem by a different route than the
//! library: projected gradient instead of working-set selection, full
//! enumeration instead of branch-and-bound, grid search instead of
//! Newton steps. Agreement between the two routes is the evidence the
//! suites are after, so nothing in this module may call the library's
//! optimizers.

#![allow(dead_code)]

use ebb_core::Features;

/// Splitmix-style generator, good enough to stamp out test instances.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// A small labeled problem with both classes present.
pub struct TinyProblem {
    pub features: Features,
    pub labels: Vec<i8>,
}

/// Random problem of `m` points in `d` dimensions: two loose clusters
/// with enough overlap to keep some margins active.
pub fn random_problem(rng: &mut TestRng, m: usize, d: usize) -> TinyProblem {
    assert!(m >= 4);
    let n_pos = 2 + rng.below(m - 3).min(m - 4);
    let mut data = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let label: i8 = if i < n_pos { 1 } else { -1 };
        let center = label as f64 * 0.8;
        for j in 0..d {
            let shift = if j == 0 { center } else { 0.0 };
            data.push(shift + rng.range(-1.0, 1.0));
        }
        labels.push(label);
    }
    TinyProblem {
        features: Features::new(d, data),
        labels,
    }
}

/// Kernel matrix K[i][j] = scale * <x_i, x_j>.
fn kernel_matrix(features: &Features, scale: f64) -> Vec<Vec<f64>> {
    let m = features.n_rows();
    let mut k = vec![vec![0.0; m]; m];
    for (i, row) in k.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let dot: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| a * b)
                .sum();
            *cell = scale * dot;
        }
    }
    k
}

/// Euclidean projection onto {0 <= a <= upper, sum(y*a) = 0} by
/// bisection on the balance multiplier. The balance residual is
/// monotone in the multiplier, so plain bisection nails it.
fn project(point: &[f64], labels: &[f64], upper: &[f64], out: &mut [f64]) {
    let reach: f64 = point
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(upper.iter().fold(0.0f64, |a, &b| a.max(b)))
        + 1.0;
    let residual = |nu: f64, out: &mut [f64]| -> f64 {
        let mut balance = 0.0;
        for i in 0..point.len() {
            let v = (point[i] - nu * labels[i]).clamp(0.0, upper[i]);
            out[i] = v;
            balance += labels[i] * v;
        }
        balance
    };
    let (mut lo, mut hi) = (-reach, reach);
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if residual(mid, out) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    residual(0.5 * (lo + hi), out);
}

/// Maximum of sum(a) - a'Qa/2 over the projected box, by accelerated
/// projected gradient on the negated objective with a conservative
/// fixed step and a monotone restart. Deliberately nothing like a
/// working-set method.
pub fn projected_gradient_dual(
    features: &Features,
    labels: &[i8],
    upper: &[f64],
    kernel_scale: f64,
    iterations: usize,
) -> f64 {
    let m = labels.len();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let k = kernel_matrix(features, kernel_scale);
    // Q = y y' .* K; 1 over the trace bounds 1 over its largest
    // eigenvalue from below, so this step is always safe.
    let trace: f64 = (0..m).map(|i| k[i][i]).sum();
    let step = 1.0 / (trace + 1.0);

    let objective = |alpha: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..m {
            let mut row = 0.0;
            for j in 0..m {
                row += alpha[j] * y[j] * k[i][j];
            }
            quad += alpha[i] * y[i] * row;
        }
        alpha.iter().sum::<f64>() - 0.5 * quad
    };

    let mut alpha = vec![0.0; m];
    let mut momentum = alpha.clone();
    let mut trial = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut t = 1.0f64;
    let mut best = 0.0f64;
    for _ in 0..iterations {
        for i in 0..m {
            let q_row: f64 = (0..m).map(|j| y[i] * y[j] * k[i][j] * momentum[j]).sum();
            trial[i] = momentum[i] - step * (q_row - 1.0);
        }
        project(&trial, &y, upper, &mut next);
        let value = objective(&next);
        if value < best - 1e-12 {
            // Momentum overshot; restart from the last good point.
            momentum.copy_from_slice(&alpha);
            t = 1.0;
            continue;
        }
        best = best.max(value);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        for i in 0..m {
            momentum[i] = next[i] + ((t - 1.0) / t_next) * (next[i] - alpha[i]);
        }
        t = t_next;
        alpha.copy_from_slice(&next);
    }
    best
}

/// Optimal value of the constrained primal by full enumeration:
/// minimum over all hard subsets of the targeted positives meeting the
/// count, each subproblem solved through its dual. With the kernel at
/// half scale and the soft box at the full unit cost, the dual maximum
/// equals the primal minimum of w'w + cost * sum(xi) directly. Pass
/// `all_subsets = true` to sweep every subset size at or above the
/// count instead of only the exact count.
pub fn enumerate_csvm_optimum(
    features: &Features,
    labels: &[i8],
    cost: f64,
    tpr_target: f64,
    iterations: usize,
    all_subsets: bool,
) -> f64 {
    let positives: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == 1)
        .map(|(i, _)| i)
        .collect();
    let m_pos = positives.len();
    let product = tpr_target * m_pos as f64;
    let rounded = product.round();
    let need = if (product - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        product.ceil() as usize
    };
    let hard = 1e7;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m_pos) {
        let size = mask.count_ones() as usize;
        let keep = if all_subsets {
            size >= need
        } else {
            size == need
        };
        if !keep {
            continue;
        }
        let mut upper = vec![cost; labels.len()];
        for (bit, &row) in positives.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                upper[row] = hard;
            }
        }
        let value = projected_gradient_dual(features, labels, &upper, 0.5, iterations);
        best = best.min(value);
    }
    best
}

/// Negative log-likelihood of the score sigmoid with the smoothed
/// targets, written the naive way.
pub fn naive_sigmoid_nll(scores: &[f64], labels: &[i8], slope: f64, offset: f64) -> f64 {
    let n_pos = labels.iter().filter(|l| **l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let mut nll = 0.0;
    for (&s, &l) in scores.iter().zip(labels) {
        let t = if l == 1 { t_pos } else { t_neg };
        let p = (1.0 + (slope * s + offset).exp()).recip();
        let p = p.clamp(1e-300, 1.0 - 1e-16);
        nll -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    nll
}

/// Best (slope, offset) on a uniform grid over [-reach, reach]^2.
pub fn grid_search_sigmoid(
    scores: &[f64],
    labels: &[i8],
    reach: f64,
    points: usize,
) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::INFINITY);
    for i in 0..points {
        let slope = -reach + 2.0 * reach * i as f64 / (points - 1) as f64;
        for j in 0..points {
            let offset = -reach + 2.0 * reach * j as f64 / (points - 1) as f64;
            let nll = naive_sigmoid_nll(scores, labels, slope, offset);
            if nll < best.2 {
                best = (slope, offset, nll);
            }
        }
    }
    best
}
