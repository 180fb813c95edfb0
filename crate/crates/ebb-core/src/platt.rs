//! Sigmoid calibration of decision scores: fits `P(+1 | s) =
//! 1 / (1 + exp(slope * s + offset))` by penalized maximum likelihood
//! with smoothed targets, so held-out scores map to probabilities.
//!
//! Positively associated scores fit a negative slope under this sign
//! convention. Targets are smoothed counts rather than hard 0/1 labels:
//! `(n_pos + 1) / (n_pos + 2)` for positives, `1 / (n_neg + 2)` for
//! negatives, which keeps the likelihood bounded on separable data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence threshold on the max-norm of the gradient.
const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Levenberg-style diagonal damping keeps the Hessian invertible when
/// the scores are degenerate.
const DAMPING: f64 = 1e-12;
const MAX_ITERATIONS: u32 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub slope: f64,
    pub offset: f64,
    pub iterations: u32,
    pub gradient_norm: f64,
    pub nll: f64,
}

impl SigmoidFit {
    /// Positive-class probability of a raw score; safe at any magnitude.
    pub fn probability(&self, score: f64) -> f64 {
        let z = self.slope * score + self.offset;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Smoothed regression targets for the two classes.
pub fn smoothed_targets(n_pos: usize, n_neg: usize) -> (f64, f64) {
    (
        (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0),
        1.0 / (n_neg as f64 + 2.0),
    )
}

fn validate(scores: &[f64], labels: &[i8]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::TooFewRows {
            context: "sigmoid fit".into(),
            needed: 2,
            got: 0,
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "sigmoid fit scores".into(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = labels.iter().filter(|l| **l == -1).count();
    if n_pos + n_neg != labels.len() {
        return Err(Error::invalid("labels", "labels must be -1 or +1"));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok(smoothed_targets(n_pos, n_neg))
}

fn target_of(label: i8, t_pos: f64, t_neg: f64) -> f64 {
    if label == 1 {
        t_pos
    } else {
        t_neg
    }
}

/// Negative log likelihood of `(slope, offset)` on the scores, with the
/// same smoothed targets the fit uses. Evaluated in the overflow-safe
/// split form.
pub fn sigmoid_nll(scores: &[f64], labels: &[i8], slope: f64, offset: f64) -> Result<f64> {
    let (t_pos, t_neg) = validate(scores, labels)?;
    let mut total = 0.0;
    for (&s, &l) in scores.iter().zip(labels) {
        let t = target_of(l, t_pos, t_neg);
        let z = slope * s + offset;
        total += if z >= 0.0 {
            t * z + (-z).exp().ln_1p()
        } else {
            (t - 1.0) * z + z.exp().ln_1p()
        };
    }
    Ok(total)
}

/// Analytic gradient of the negative log likelihood in `(slope, offset)`.
pub fn sigmoid_gradient(
    scores: &[f64],
    labels: &[i8],
    slope: f64,
    offset: f64,
) -> Result<(f64, f64)> {
    let (t_pos, t_neg) = validate(scores, labels)?;
    let mut ga = 0.0;
    let mut gb = 0.0;
    for (&s, &l) in scores.iter().zip(labels) {
        let t = target_of(l, t_pos, t_neg);
        let z = slope * s + offset;
        let p = if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        };
        // d nll / dz = t - p under this parameterization.
        let d = t - p;
        ga += d * s;
        gb += d;
    }
    Ok((ga, gb))
}

/// Fits the two sigmoid parameters by damped Newton descent with an
/// Armijo backtracking line search.
pub fn fit_sigmoid(scores: &[f64], labels: &[i8]) -> Result<SigmoidFit> {
    let (t_pos, t_neg) = validate(scores, labels)?;
    let n_pos = labels.iter().filter(|l| **l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;

    let mut a = 0.0f64;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut nll = sigmoid_nll(scores, labels, a, b)?;
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let mut ga = 0.0;
        let mut gb = 0.0;
        let mut haa = DAMPING;
        let mut hab = 0.0;
        let mut hbb = DAMPING;
        for (&s, &l) in scores.iter().zip(labels) {
            let t = target_of(l, t_pos, t_neg);
            let z = a * s + b;
            let p = if z >= 0.0 {
                let e = (-z).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + z.exp())
            };
            let d = t - p;
            let w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        grad_norm = ga.abs().max(gb.abs());
        if grad_norm <= GRADIENT_TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let det = haa * hbb - hab * hab;
        let (da, db) = if det.abs() > 0.0 {
            ((-ga * hbb + gb * hab) / det, (ga * hab - gb * haa) / det)
        } else {
            (-ga, -gb)
        };
        let descent = ga * da + gb * db;
        if descent >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            let (da, db) = (-ga, -gb);
            let mut eta = 1.0 / (1.0 + grad_norm);
            let mut moved = false;
            while eta >= 1e-12 {
                let candidate = sigmoid_nll(scores, labels, a + eta * da, b + eta * db)?;
                if candidate < nll {
                    a += eta * da;
                    b += eta * db;
                    nll = candidate;
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
            continue;
        }

        let mut eta = 1.0f64;
        let mut stepped = false;
        while eta >= 1e-10 {
            let na = a + eta * da;
            let nb = b + eta * db;
            let candidate = sigmoid_nll(scores, labels, na, nb)?;
            if candidate <= nll + 1e-4 * eta * descent {
                a = na;
                b = nb;
                nll = candidate;
                stepped = true;
                break;
            }
            eta *= 0.5;
        }
        if !stepped {
            break;
        }
    }

    Ok(SigmoidFit {
        slope: a,
        offset: b,
        iterations,
        gradient_norm: grad_norm,
        nll,
    })
}
