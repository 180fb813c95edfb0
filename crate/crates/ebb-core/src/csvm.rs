//! Constrained training: guarantee that chosen shares of each class are
//! classified correctly, with margin, on the training sample itself.
//!
//! The primal is
//!
//! ```text
//! min  w'w + cost * sum(xi)
//! s.t. y_i (w'x_i + beta) >= 1 - xi_i
//!      0 <= xi_i <= big_m * (1 - zeta_i),   zeta_i in {0, 1}
//!      sum of zeta over positives >= ceil(tpr_target * n_pos)
//!      sum of zeta over negatives >= ceil(tnr_target * n_neg)
//! ```
//!
//! A counted instance (`zeta_i = 1`) has its slack forced to zero, so it
//! sits on the correct side with full margin. For a fixed zeta pattern,
//! the remaining problem is a convex QP whose dual is the standard box
//! dual with kernel scale 1/2 and per-variable upper bounds: `cost` for
//! soft rows, effectively unbounded for counted rows. Branch-and-bound
//! over the patterns uses that dual for node bounds: relaxing a node
//! keeps every completion's value at or above the node value, and the
//! dual ascent can stop early the moment it proves a node cannot beat
//! the incumbent.

use std::time::Instant;

use crate::calibrate::required_count;
use crate::dataset::Features;
use crate::ensemble::{EnsembleBank, EnsembleSettings, Replicate, ReplicateStatus};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::smo::{self, primal_weights, SmoOptions, SmoProblem};
use crate::split::bootstrap_sample;
use crate::svm::{evaluate, Metric, SvmModel, TrainingDiagnostics};

/// Dual box stand-in for "unbounded" on counted rows. Far above any
/// multiplier a feasible pattern produces; a variable pinned here marks
/// the pattern infeasible.
const UNBOUNDED: f64 = 1e6;
/// Dual objective beyond this is treated as divergence to infinity.
const DIVERGENCE_CUTOFF: f64 = 1e9;
/// Counted rows may violate their hard constraint by at most this much.
const HARD_SLACK_TOLERANCE: f64 = 1e-6;
/// An incumbent must beat a node bound by this margin to prune it.
const PRUNE_MARGIN: f64 = 1e-9;
/// Pop the best-bound open node instead of the deepest one every this
/// many nodes, so depth-first dives cannot starve better subtrees.
const BEST_BOUND_PERIOD: u64 = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConstraintTargets {
    /// Required share of positives counted, in [0, 1].
    pub tpr: Option<f64>,
    /// Required share of negatives counted, in [0, 1].
    pub tnr: Option<f64>,
}

impl ConstraintTargets {
    pub fn none() -> Self {
        ConstraintTargets::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tpr.unwrap_or(0.0) == 0.0 && self.tnr.unwrap_or(0.0) == 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, value) in [("tpr", self.tpr), ("tnr", self.tnr)] {
            if let Some(v) = value {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::invalid(name, format!("{v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CsvmSpec {
    pub cost: f64,
    pub targets: ConstraintTargets,
    /// Slack cap that counted rows disable; also the feasibility scale
    /// the certificate's `big_m_ok` flag checks soft slacks against.
    pub big_m: f64,
    pub time_limit_secs: f64,
    /// Largest number of constrained binaries solved exactly; above it
    /// the solver switches to the rounding heuristic.
    pub exact_limit: usize,
    /// Dual convergence tolerance for pattern solves.
    pub node_tolerance: f64,
}

impl Default for CsvmSpec {
    fn default() -> Self {
        CsvmSpec {
            cost: 1.0,
            targets: ConstraintTargets::none(),
            big_m: 1000.0,
            time_limit_secs: 300.0,
            exact_limit: 200,
            node_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    Exact,
    Heuristic,
}

/// What the solver can promise about the returned solution.
#[derive(Clone, Copy, Debug)]
pub struct Certificate {
    /// Primal objective of the returned solution.
    pub objective: f64,
    /// Proven lower bound on any feasible solution's objective.
    pub lower_bound: f64,
    /// `objective - lower_bound`.
    pub gap: f64,
    pub nodes: u64,
    pub wall_seconds: f64,
    /// Gap closed within tolerance by an exhausted exact search.
    pub optimal: bool,
    /// Counts met and counted rows within `HARD_SLACK_TOLERANCE`.
    pub feasible: bool,
    /// True when every soft slack stays below `big_m`, i.e. dropping the
    /// slack cap from the dual did not change the problem.
    pub big_m_ok: bool,
    pub mode: SolveMode,
    pub time_limit_hit: bool,
}

#[derive(Clone, Debug)]
pub struct CsvmOutcome {
    pub model: SvmModel,
    /// Final zeta: which rows are counted.
    pub counted: Vec<bool>,
    pub certificate: Certificate,
}

/// A solved fixed-pattern QP.
struct PatternSolution {
    model: SvmModel,
    /// Primal objective `w'w + cost * sum(soft hinges)`.
    primal: f64,
    dual: f64,
    big_m_ok: bool,
}

struct Workspace<'a> {
    features: &'a Features,
    y: Vec<f64>,
    labels: &'a [i8],
    cost: f64,
    big_m: f64,
    tolerance: f64,
    positives: Vec<usize>,
    negatives: Vec<usize>,
    need_pos: usize,
    need_neg: usize,
}

impl Workspace<'_> {
    fn hinges(&self, model: &SvmModel) -> Vec<f64> {
        (0..self.features.len())
            .map(|i| {
                let f = model.score(self.features.row(i));
                (1.0 - self.y[i] * f).max(0.0)
            })
            .collect()
    }

    /// Solves the QP of one fixed pattern. `None` when the pattern is
    /// infeasible (dual diverges or a counted row cannot reach its hard
    /// constraint).
    fn solve_pattern(
        &self,
        hard: &[bool],
        stop_above: Option<f64>,
    ) -> Result<Option<PatternSolution>> {
        let upper: Vec<f64> = hard
            .iter()
            .map(|h| if *h { UNBOUNDED } else { self.cost })
            .collect();
        let problem = SmoProblem {
            features: self.features,
            labels: &self.y,
            upper: &upper,
            kernel_scale: 0.5,
        };
        let options = SmoOptions {
            tolerance: self.tolerance,
            max_iterations: 10_000_000,
            stop_above: Some(
                stop_above
                    .unwrap_or(DIVERGENCE_CUTOFF)
                    .min(DIVERGENCE_CUTOFF),
            ),
        };
        let out = smo::solve(&problem, &options)?;
        if out.stopped_early {
            // The ascent passed the cutoff; the true value is at least as
            // large. Callers treat this as "bound too high to matter".
            return Ok(None);
        }
        let saturated =
            (0..hard.len()).any(|i| hard[i] && out.alpha[i] >= UNBOUNDED * (1.0 - 1e-9));
        if saturated || out.dual_objective >= DIVERGENCE_CUTOFF {
            return Ok(None);
        }
        let weights = primal_weights(self.features, &self.y, &out.alpha, 0.5);
        let model = SvmModel {
            weights,
            intercept: out.intercept,
            cost: self.cost,
            diagnostics: TrainingDiagnostics {
                iterations: out.iterations,
                kkt_violation: out.kkt_violation,
                converged: out.converged,
                dual_objective: out.dual_objective,
            },
        };
        let hinges = self.hinges(&model);
        for (i, h) in hinges.iter().enumerate() {
            if hard[i] && *h > HARD_SLACK_TOLERANCE {
                return Ok(None);
            }
        }
        let w2: f64 = model.weights.iter().map(|w| w * w).sum();
        let soft_slack: f64 = hinges
            .iter()
            .enumerate()
            .filter(|(i, _)| !hard[*i])
            .map(|(_, h)| h)
            .sum();
        let big_m_ok = hinges
            .iter()
            .enumerate()
            .all(|(i, h)| hard[i] || *h < self.big_m - 1e-9);
        Ok(Some(PatternSolution {
            primal: w2 + self.cost * soft_slack,
            dual: out.dual_objective,
            model,
            big_m_ok,
        }))
    }

    fn count(&self, hard: &[bool], rows: &[usize]) -> usize {
        rows.iter().filter(|&&i| hard[i]).count()
    }

    /// Greedy completion: fill each class deficit with the free rows of
    /// smallest hinge at the given solution.
    fn complete_pattern(&self, hard: &[bool], zero: &[bool], hinges: &[f64]) -> Option<Vec<bool>> {
        let mut pattern = hard.to_vec();
        for (rows, need) in [
            (&self.positives, self.need_pos),
            (&self.negatives, self.need_neg),
        ] {
            let have = self.count(&pattern, rows);
            if have >= need {
                continue;
            }
            let mut free: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&i| !hard[i] && !zero[i])
                .collect();
            if have + free.len() < need {
                return None;
            }
            free.sort_by(|&a, &b| hinges[a].partial_cmp(&hinges[b]).unwrap().then(a.cmp(&b)));
            for &i in free.iter().take(need - have) {
                pattern[i] = true;
            }
        }
        Some(pattern)
    }
}

/// One open branch-and-bound node: rows forced counted, rows forced
/// soft, and the bound inherited from its parent's solve.
#[derive(Clone)]
struct Node {
    hard: Vec<bool>,
    zero: Vec<bool>,
    bound: f64,
}

/// Trains with counted-share constraints and returns the solution with
/// its certificate.
pub fn train_csvm(features: &Features, labels: &[i8], spec: &CsvmSpec) -> Result<CsvmOutcome> {
    let start = Instant::now();
    spec.targets.validate()?;
    if !spec.cost.is_finite() || spec.cost <= 0.0 {
        return Err(Error::invalid(
            "cost",
            format!("{} is not positive", spec.cost),
        ));
    }
    if !spec.big_m.is_finite() || spec.big_m <= 0.0 {
        return Err(Error::invalid("big_m", "must be positive"));
    }
    if labels.len() != features.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let negatives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == -1).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::SingleClass);
    }
    let need_pos = required_count(spec.targets.tpr.unwrap_or(0.0), positives.len());
    let need_neg = required_count(spec.targets.tnr.unwrap_or(0.0), negatives.len());
    let y: Vec<f64> = labels.iter().map(|l| *l as f64).collect();
    let ws = Workspace {
        features,
        y,
        labels,
        cost: spec.cost,
        big_m: spec.big_m,
        tolerance: spec.node_tolerance,
        positives,
        negatives,
        need_pos,
        need_neg,
    };

    // Unconstrained: the root pattern is the answer.
    if need_pos == 0 && need_neg == 0 {
        let all_soft = vec![false; labels.len()];
        let sol = ws
            .solve_pattern(&all_soft, None)?
            .ok_or_else(|| Error::Infeasible("unconstrained QP diverged".into()))?;
        let certificate = Certificate {
            objective: sol.primal,
            lower_bound: sol.dual,
            gap: (sol.primal - sol.dual).max(0.0),
            nodes: 1,
            wall_seconds: start.elapsed().as_secs_f64(),
            optimal: true,
            feasible: true,
            big_m_ok: sol.big_m_ok,
            mode: SolveMode::Exact,
            time_limit_hit: false,
        };
        return Ok(CsvmOutcome {
            model: sol.model,
            counted: all_soft,
            certificate,
        });
    }

    let binaries = if need_pos > 0 { ws.positives.len() } else { 0 }
        + if need_neg > 0 { ws.negatives.len() } else { 0 };
    if binaries > spec.exact_limit {
        heuristic_solve(&ws, spec, start)
    } else {
        exact_solve(&ws, spec, start)
    }
}

fn exact_solve(ws: &Workspace, spec: &CsvmSpec, start: Instant) -> Result<CsvmOutcome> {
    let m = ws.labels.len();
    let mut incumbent: Option<(Vec<bool>, PatternSolution)> = None;
    let mut nodes: u64 = 0;
    let mut time_limit_hit = false;
    let mut stack: Vec<Node> = vec![Node {
        hard: vec![false; m],
        zero: vec![false; m],
        bound: 0.0,
    }];

    while let Some(node) = pop_node(&mut stack, nodes) {
        if start.elapsed().as_secs_f64() > spec.time_limit_secs {
            stack.push(node);
            time_limit_hit = true;
            break;
        }
        nodes += 1;
        let mut hard = node.hard;
        let zero = node.zero;

        // Count feasibility, then forced promotions when the free rows
        // exactly cover a deficit.
        let mut count_infeasible = false;
        for (rows, need) in [(&ws.positives, ws.need_pos), (&ws.negatives, ws.need_neg)] {
            let have = ws.count(&hard, rows);
            let free: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&i| !hard[i] && !zero[i])
                .collect();
            if have + free.len() < need {
                count_infeasible = true;
                break;
            }
            if have + free.len() == need {
                for i in free {
                    hard[i] = true;
                }
            }
        }
        if count_infeasible {
            continue;
        }

        let cutoff = incumbent.as_ref().map(|(_, sol)| sol.primal - PRUNE_MARGIN);
        let sol = match ws.solve_pattern(&hard, cutoff)? {
            Some(sol) => sol,
            // Diverged or passed the cutoff: nothing below this node can
            // beat the incumbent (or be feasible at all).
            None => continue,
        };
        if let Some((_, best)) = &incumbent {
            if sol.dual >= best.primal - PRUNE_MARGIN {
                continue;
            }
        }

        let deficit_pos = ws.need_pos.saturating_sub(ws.count(&hard, &ws.positives));
        let deficit_neg = ws.need_neg.saturating_sub(ws.count(&hard, &ws.negatives));
        if deficit_pos == 0 && deficit_neg == 0 {
            // The node's own pattern is feasible and its QP was just
            // solved: close the node with it.
            if incumbent
                .as_ref()
                .is_none_or(|(_, b)| sol.primal < b.primal)
            {
                incumbent = Some((hard.clone(), sol));
            }
            continue;
        }

        let hinges = ws.hinges(&sol.model);
        // Incumbent attempt: cheapest completion by current hinges.
        if let Some(pattern) = ws.complete_pattern(&hard, &zero, &hinges) {
            if incumbent.as_ref().is_none_or(|(best, _)| *best != pattern) {
                if let Some(completed) = ws.solve_pattern(&pattern, cutoff)? {
                    if incumbent
                        .as_ref()
                        .is_none_or(|(_, b)| completed.primal < b.primal)
                    {
                        incumbent = Some((pattern, completed));
                    }
                }
            }
        }

        // Branch in the class with the larger deficit, on the free row
        // that is currently hardest to count.
        let rows = if deficit_pos >= deficit_neg && deficit_pos > 0 {
            &ws.positives
        } else {
            &ws.negatives
        };
        let branch = rows
            .iter()
            .copied()
            .filter(|&i| !hard[i] && !zero[i])
            .max_by(|&a, &b| hinges[a].partial_cmp(&hinges[b]).unwrap().then(b.cmp(&a)));
        let branch = match branch {
            Some(i) => i,
            None => continue,
        };
        let mut soft_child = Node {
            hard: hard.clone(),
            zero: zero.clone(),
            bound: sol.dual,
        };
        soft_child.zero[branch] = true;
        let mut hard_child = Node {
            hard,
            zero,
            bound: sol.dual,
        };
        hard_child.hard[branch] = true;
        // Depth-first pops the counted child first, reaching feasible
        // patterns (and incumbents) sooner.
        stack.push(soft_child);
        stack.push(hard_child);
    }

    let (counted, best) = match incumbent {
        Some(pair) => pair,
        None if time_limit_hit => return Err(Error::NoIncumbent),
        None => {
            return Err(Error::Infeasible(
                "no counted pattern satisfies the targets".into(),
            ))
        }
    };
    let open_bound = stack.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let lower_bound = if time_limit_hit {
        open_bound.min(best.primal)
    } else {
        best.primal
    };
    let gap = (best.primal - lower_bound).max(0.0);
    let feasible = ws.count(&counted, &ws.positives) >= ws.need_pos
        && ws.count(&counted, &ws.negatives) >= ws.need_neg;
    let certificate = Certificate {
        objective: best.primal,
        lower_bound,
        gap,
        nodes,
        wall_seconds: start.elapsed().as_secs_f64(),
        optimal: !time_limit_hit,
        feasible,
        big_m_ok: best.big_m_ok,
        mode: SolveMode::Exact,
        time_limit_hit,
    };
    Ok(CsvmOutcome {
        model: best.model,
        counted,
        certificate,
    })
}

/// Deepest-first with a periodic best-bound pop.
fn pop_node(stack: &mut Vec<Node>, nodes_done: u64) -> Option<Node> {
    if stack.is_empty() {
        return None;
    }
    if nodes_done > 0 && nodes_done.is_multiple_of(BEST_BOUND_PERIOD) {
        let (idx, _) = stack
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.bound.partial_cmp(&b.bound).unwrap())?;
        return Some(stack.remove(idx));
    }
    stack.pop()
}

/// Root relaxation, greedy rounding by hinge, then bounded improvement
/// passes swapping counted rows for cheaper ones.
fn heuristic_solve(ws: &Workspace, spec: &CsvmSpec, start: Instant) -> Result<CsvmOutcome> {
    let m = ws.labels.len();
    let all_soft = vec![false; m];
    let root = ws
        .solve_pattern(&all_soft, None)?
        .ok_or_else(|| Error::Infeasible("root relaxation diverged".into()))?;
    let root_bound = root.dual;
    let hinges = ws.hinges(&root.model);
    let zero = vec![false; m];
    let pattern = ws
        .complete_pattern(&all_soft, &zero, &hinges)
        .ok_or_else(|| Error::Infeasible("targets exceed class sizes".into()))?;
    let mut best = match ws.solve_pattern(&pattern, None)? {
        Some(sol) => (pattern, sol),
        None => return Err(Error::Infeasible("rounded pattern is infeasible".into())),
    };

    // Improvement passes: swap the costliest counted row for the
    // cheapest soft row of the same class, keep strict improvements.
    let mut resolves = 0;
    'passes: for _ in 0..2 {
        for rows in [&ws.positives, &ws.negatives] {
            if start.elapsed().as_secs_f64() > spec.time_limit_secs || resolves >= 20 {
                break 'passes;
            }
            let hinges = ws.hinges(&best.1.model);
            let worst_in = rows
                .iter()
                .copied()
                .filter(|&i| best.0[i])
                .max_by(|&a, &b| hinges[a].partial_cmp(&hinges[b]).unwrap());
            let best_out = rows
                .iter()
                .copied()
                .filter(|&i| !best.0[i])
                .min_by(|&a, &b| hinges[a].partial_cmp(&hinges[b]).unwrap());
            if let (Some(out_row), Some(in_row)) = (worst_in, best_out) {
                if hinges[in_row] >= hinges[out_row] {
                    continue;
                }
                let mut candidate = best.0.clone();
                candidate[out_row] = false;
                candidate[in_row] = true;
                resolves += 1;
                if let Some(sol) = ws.solve_pattern(&candidate, None)? {
                    if sol.primal < best.1.primal - 1e-12 {
                        best = (candidate, sol);
                    }
                }
            }
        }
    }

    let (counted, sol) = best;
    let feasible = ws.count(&counted, &ws.positives) >= ws.need_pos
        && ws.count(&counted, &ws.negatives) >= ws.need_neg;
    let gap = (sol.primal - root_bound).max(0.0);
    let certificate = Certificate {
        objective: sol.primal,
        lower_bound: root_bound,
        gap,
        nodes: 1 + resolves as u64,
        wall_seconds: start.elapsed().as_secs_f64(),
        optimal: false,
        feasible,
        big_m_ok: sol.big_m_ok,
        mode: SolveMode::Heuristic,
        time_limit_hit: start.elapsed().as_secs_f64() > spec.time_limit_secs,
    };
    Ok(CsvmOutcome {
        model: sol.model,
        counted,
        certificate,
    })
}

/// Trains a bootstrap bank with the constrained trainer. Grid values map
/// to twice the cost, which makes the unconstrained special case agree
/// with the plain ensemble's hyperplanes exactly; with no targets the
/// plain path is taken verbatim.
pub fn train_cebb2_ensemble(
    features: &Features,
    labels: &[i8],
    settings: &EnsembleSettings,
    targets: &ConstraintTargets,
    base: &CsvmSpec,
) -> Result<EnsembleBank> {
    if targets.is_empty() {
        return crate::ensemble::train_ensemble(features, labels, settings);
    }
    targets.validate()?;
    if settings.n_replicates == 0 {
        return Err(Error::invalid("n_replicates", "must be at least 1"));
    }
    use rayon::prelude::*;
    let pairs: Vec<(usize, usize)> = (0..settings.grid.len())
        .flat_map(|j| (0..settings.n_replicates).map(move |b| (j, b)))
        .collect();
    let trained: Vec<Replicate> = pairs
        .par_iter()
        .map(|&(j, b)| constrained_replicate(features, labels, settings, targets, base, j, b))
        .collect();
    let mut replicates: Vec<Vec<Replicate>> = Vec::with_capacity(settings.grid.len());
    let mut it = trained.into_iter();
    for _ in 0..settings.grid.len() {
        replicates.push(it.by_ref().take(settings.n_replicates).collect());
    }
    Ok(EnsembleBank {
        grid: settings.grid.clone(),
        replicates,
        seed: settings.seed,
    })
}

fn constrained_replicate(
    features: &Features,
    labels: &[i8],
    settings: &EnsembleSettings,
    targets: &ConstraintTargets,
    base: &CsvmSpec,
    grid_index: usize,
    replicate: usize,
) -> Replicate {
    let m = features.len();
    let mut seed = 0;
    for attempt in 0..settings.redraw_attempts.max(1) {
        seed = derive_seed(
            settings.seed,
            &[grid_index as u64, replicate as u64, attempt as u64],
        );
        let draw = bootstrap_sample(m, seed);
        let rows: Vec<Vec<f64>> = draw
            .in_bag
            .iter()
            .map(|&r| features.row(r).to_vec())
            .collect();
        let draw_labels: Vec<i8> = draw.in_bag.iter().map(|&r| labels[r]).collect();
        let sub = match Features::from_rows(rows) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let spec = CsvmSpec {
            cost: 2.0 * settings.grid.values()[grid_index],
            targets: *targets,
            ..*base
        };
        let outcome = match train_csvm(&sub, &draw_labels, &spec) {
            Ok(o) => o,
            Err(_) => continue,
        };
        let (status, oob_accuracy) = if draw.out_of_bag.is_empty() {
            (ReplicateStatus::EmptyOob, None)
        } else {
            let preds: Vec<i8> = draw
                .out_of_bag
                .iter()
                .map(|&r| outcome.model.predict(features.row(r)))
                .collect();
            let truth: Vec<i8> = draw.out_of_bag.iter().map(|&r| labels[r]).collect();
            (
                ReplicateStatus::Trained,
                evaluate(&preds, &truth, Metric::Accuracy).ok(),
            )
        };
        return Replicate {
            seed,
            attempts: attempt + 1,
            model: Some(outcome.model),
            oob_rows: draw.out_of_bag,
            oob_accuracy,
            status,
        };
    }
    Replicate {
        seed,
        attempts: settings.redraw_attempts.max(1),
        model: None,
        oob_rows: Vec::new(),
        oob_accuracy: None,
        status: ReplicateStatus::Failed,
    }
}
