//! Chance-constrained covariance steering: LQ weights parameterized by
//! non-negative multipliers on the constraint directions and on piecewise
//! constant control-weight segments, chosen by a penalized outer search.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gains::chance::chance_bound;
use crate::gains::lqg::{riccati_scaled, state_scales, LqWeights};
use crate::lincov::{propagate_covariance, CovarianceTrajectory, DiscreteLinearModel};
use crate::linalg::{Mat5, Row5, Vec5};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Two-sided bound `P(|d^T x_N| > limit) <= probability` on the final state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateConstraint {
    pub name: String,
    pub direction: Vec5,
    pub limit: f64,
    pub probability: f64,
}

/// Two-sided bound `P(|u_k| > limit) <= probability` on one control correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlConstraint {
    pub limit: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConstraintSet {
    pub state: Vec<StateConstraint>,
    /// One entry per step, or empty for no control constraints.
    pub control: Vec<ControlConstraint>,
}

/// `a_f^T P_N a_f + sum_k R_k Var(u_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeCost {
    pub final_weight: Vec5,
    pub control_weight: Vec<f64>,
}

impl RangeCost {
    pub fn evaluate(&self, cov: &CovarianceTrajectory) -> f64 {
        let terminal = (self.final_weight.transpose() * cov.final_covariance() * self.final_weight)[(0, 0)];
        terminal
            + self
                .control_weight
                .iter()
                .zip(&cov.control_variance)
                .map(|(r, v)| r * v)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    /// Number of piecewise-constant control multiplier segments over the
    /// steps where control acts.
    pub control_segments: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub penalty_rounds: usize,
    /// Simplex restarts from the current best point within one penalty round.
    pub restarts: usize,
    pub search: NelderMeadOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            control_segments: 8,
            initial_penalty: 1e2,
            penalty_growth: 10.0,
            penalty_rounds: 3,
            restarts: 2,
            search: NelderMeadOptions {
                initial_step: 1.0,
                max_evaluations: 3000,
                f_tol: 1e-10,
                x_tol: 1e-5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintMargin {
    pub name: String,
    /// Predicted standard deviation of the constrained quantity.
    pub std_dev: f64,
    /// Largest admissible standard deviation.
    pub bound: f64,
    /// `1 - std_dev / bound`; non-negative when satisfied.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub state_multipliers: Vec<f64>,
    pub control_multipliers: Vec<f64>,
    /// Segment of each step.
    pub segment_of_step: Vec<usize>,
    pub cost: f64,
    pub evaluations: usize,
    pub penalty_rounds: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub state_margins: Vec<ConstraintMargin>,
    /// Smallest control margin over all steps.
    pub min_control_margin: f64,
    /// Best penalized objective after each outer-search iteration, per
    /// penalty round.
    pub history: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub gains: Vec<Row5>,
    pub weights: LqWeights,
    pub covariance: CovarianceTrajectory,
    pub report: SynthesisReport,
}

struct Problem<'a> {
    model: &'a DiscreteLinearModel,
    p0: &'a Mat5,
    cost: &'a RangeCost,
    /// Constrained state directions with finite bounds, and their bounds.
    state: Vec<(usize, f64)>,
    constraints: &'a ConstraintSet,
    control_bounds: Vec<f64>,
    segment_of_step: Vec<usize>,
    segments: usize,
    state_scale: Vec<f64>,
    control_scale: f64,
    coordinates: Vec<Vec5>,
}

struct Evaluation {
    gains: Vec<Row5>,
    weights: LqWeights,
    covariance: CovarianceTrajectory,
    cost: f64,
    violation: f64,
}

impl Problem<'_> {
    fn dimension(&self) -> usize {
        self.state.len() + self.segments
    }

    fn multipliers(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (ys, yu) = y.split_at(self.state.len());
        let xs = ys
            .iter()
            .zip(&self.state_scale)
            .map(|(v, s)| s * 10f64.powf(*v))
            .collect();
        let xu = yu.iter().map(|v| self.control_scale * 10f64.powf(*v)).collect();
        (xs, xu)
    }

    fn weights(&self, xs: &[f64], xu: &[f64]) -> LqWeights {
        let a = self.cost.final_weight;
        let mut q = a * a.transpose();
        for ((i, _), xi) in self.state.iter().zip(xs) {
            let d = self.constraints.state[*i].direction;
            q += d * d.transpose() * *xi;
        }
        let r = self
            .cost
            .control_weight
            .iter()
            .zip(&self.segment_of_step)
            .map(|(rk, seg)| rk + xu.get(*seg).copied().unwrap_or(0.0))
            .collect();
        LqWeights { q, r }
    }

    fn evaluate_weights(&self, weights: LqWeights) -> Result<Evaluation> {
        let (gains, _) = riccati_scaled(self.model, &weights, &self.coordinates)?;
        let covariance = propagate_covariance(self.p0, self.model, &gains)?;
        let cost = self.cost.evaluate(&covariance);
        let pn = covariance.final_covariance();
        let mut violation = 0.0;
        for (i, bound) in &self.state {
            let d = self.constraints.state[*i].direction;
            let var = (d.transpose() * pn * d)[(0, 0)];
            violation += (var / (bound * bound) - 1.0).max(0.0);
        }
        for (var, bound) in covariance.control_variance.iter().zip(&self.control_bounds) {
            if bound.is_finite() {
                violation += (var / (bound * bound) - 1.0).max(0.0);
            }
        }
        Ok(Evaluation {
            gains,
            weights,
            covariance,
            cost,
            violation,
        })
    }

    fn evaluate(&self, y: &[f64]) -> Result<Evaluation> {
        let (xs, xu) = self.multipliers(y);
        self.evaluate_weights(self.weights(&xs, &xu))
    }

    fn margins(&self, cov: &CovarianceTrajectory) -> (Vec<ConstraintMargin>, f64) {
        let pn = cov.final_covariance();
        let state = self
            .constraints
            .state
            .iter()
            .map(|c| {
                let bound = chance_bound(c.limit, c.probability).unwrap_or(f64::INFINITY);
                let std_dev = (c.direction.transpose() * pn * c.direction)[(0, 0)].max(0.0).sqrt();
                ConstraintMargin {
                    name: c.name.clone(),
                    std_dev,
                    bound,
                    margin: 1.0 - std_dev / bound,
                }
            })
            .collect();
        let control = cov
            .control_variance
            .iter()
            .zip(&self.control_bounds)
            .map(|(v, b)| 1.0 - v.max(0.0).sqrt() / b)
            .fold(f64::INFINITY, f64::min);
        (state, control)
    }
}

/// Common multiplier levels (log10) tried before the simplex search.
const START_LEVELS: [f64; 9] = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];

/// Penalized objective with a record of the best points seen.
struct Search<'a, 'b> {
    problem: &'a Problem<'b>,
    reference_cost: f64,
    penalty: f64,
    best_feasible: Option<(Vec<f64>, f64)>,
    best_any: Option<(Vec<f64>, f64, f64)>,
}

impl Search<'_, '_> {
    fn objective(&mut self, y: &[f64]) -> f64 {
        let Ok(e) = self.problem.evaluate(y) else {
            return f64::INFINITY;
        };
        if e.violation == 0.0 && self.best_feasible.as_ref().is_none_or(|(_, c)| e.cost < *c) {
            self.best_feasible = Some((y.to_vec(), e.cost));
        }
        if self.best_any.as_ref().is_none_or(|(_, _, v)| e.violation < *v) {
            self.best_any = Some((y.to_vec(), e.cost, e.violation));
        }
        e.cost / self.reference_cost + self.penalty * e.violation
    }
}

/// Splits the steps where control acts into `segments` contiguous groups of
/// nearly equal length; steps without control effect join the nearest group.
fn control_segments(model: &DiscreteLinearModel, segments: usize) -> Vec<usize> {
    let active: Vec<usize> = (0..model.len())
        .filter(|&k| model.steps[k].b.norm() > 0.0)
        .collect();
    let mut seg = vec![0usize; model.len()];
    if active.is_empty() {
        return seg;
    }
    let n = active.len();
    for (j, &k) in active.iter().enumerate() {
        seg[k] = (j * segments / n).min(segments - 1);
    }
    let last = *active.last().unwrap();
    for k in 0..model.len() {
        if model.steps[k].b.norm() == 0.0 {
            seg[k] = if k > last { seg[last] } else { 0 };
        }
    }
    seg
}

/// Gains minimizing the range cost subject to the chance constraints.
pub fn synthesize_stochastic_gains(
    model: &DiscreteLinearModel,
    p0: &Mat5,
    cost: &RangeCost,
    constraints: &ConstraintSet,
    options: &SynthesisOptions,
) -> Result<Synthesis> {
    let n = model.len();
    if cost.control_weight.len() != n {
        return Err(Error::Argument(format!(
            "{} control weights for {n} steps",
            cost.control_weight.len()
        )));
    }
    if !constraints.control.is_empty() && constraints.control.len() != n {
        return Err(Error::Argument(format!(
            "{} control constraints for {n} steps",
            constraints.control.len()
        )));
    }
    if options.control_segments == 0 {
        return Err(Error::Argument("at least one control segment is required".into()));
    }

    let mut state = Vec::new();
    for (i, c) in constraints.state.iter().enumerate() {
        let bound = chance_bound(c.limit, c.probability)?;
        if bound.is_finite() {
            state.push((i, bound));
        }
    }
    let control_bounds = if constraints.control.is_empty() {
        vec![f64::INFINITY; n]
    } else {
        constraints
            .control
            .iter()
            .map(|c| chance_bound(c.limit, c.probability))
            .collect::<Result<Vec<_>>>()?
    };
    let segments = if control_bounds.iter().any(|b| b.is_finite()) {
        options.control_segments
    } else {
        0
    };
    let segment_of_step = control_segments(model, options.control_segments);

    let mut problem = Problem {
        model,
        p0,
        cost,
        state,
        constraints,
        control_bounds,
        segment_of_step: segment_of_step.clone(),
        segments,
        state_scale: Vec::new(),
        control_scale: 1.0,
        coordinates: state_scales(model),
    };

    // Open-loop curvature of the terminal cost with respect to each control
    // step, `(B_k^T v_{k+1})^2` with `v_k = A_k^T v_{k+1}` from the final weight.
    let mut v = cost.final_weight;
    let mut curvature = Vec::new();
    for k in (0..n).rev() {
        let step = &model.steps[k];
        if step.b.norm() > 0.0 {
            let c = step.b.dot(&v).powi(2);
            if c > 0.0 && c.is_finite() {
                curvature.push(c);
            }
        }
        v = step.a.transpose() * v;
    }
    curvature.sort_by(f64::total_cmp);
    if let Some(mid) = curvature.get(curvature.len() / 2) {
        problem.control_scale = *mid;
    }
    // Unconstrained LQ solution. Each state multiplier is scaled so that a
    // constraint sitting at its bound weighs as much as this terminal cost.
    let base = problem.evaluate_weights(problem.weights(&[], &[]))?;
    let base_terminal = (cost.final_weight.transpose() * base.covariance.final_covariance() * cost.final_weight)[(0, 0)];
    let unit_cost = if base_terminal > 0.0 && base_terminal.is_finite() { base_terminal } else { 1.0 };
    problem.state_scale = problem.state.iter().map(|(_, bound)| unit_cost / (bound * bound)).collect();

    let dim = problem.dimension();
    if dim == 0 {
        let eval = base;
        let (state_margins, min_control_margin) = problem.margins(&eval.covariance);
        return Ok(Synthesis {
            gains: eval.gains,
            weights: eval.weights,
            covariance: eval.covariance,
            report: SynthesisReport {
                state_multipliers: vec![0.0; problem.state.len()],
                control_multipliers: Vec::new(),
                segment_of_step,
                cost: eval.cost,
                evaluations: 1,
                penalty_rounds: 0,
                converged: true,
                warnings: Vec::new(),
                state_margins,
                min_control_margin,
                history: vec![vec![eval.cost]],
            },
        });
    }

    let mut search = Search {
        problem: &problem,
        reference_cost: if base.cost > 0.0 && base.cost.is_finite() { base.cost } else { 1.0 },
        penalty: options.initial_penalty,
        best_feasible: None,
        best_any: None,
    };

    // Start from the best point of a coarse grid of common state and
    // control multiplier levels.
    let mut y = vec![0.0; dim];
    let mut f_start = search.objective(&y);
    for ys in START_LEVELS {
        for yu in START_LEVELS {
            let trial: Vec<f64> = (0..dim)
                .map(|i| if i < problem.state.len() { ys } else { yu })
                .collect();
            let f = search.objective(&trial);
            if f < f_start {
                f_start = f;
                y = trial;
            }
        }
    }
    let mut evaluations = 1 + START_LEVELS.len() * START_LEVELS.len();

    let mut history = Vec::new();
    let mut rounds = 0;
    let mut converged = true;
    for round in 0..options.penalty_rounds.max(1) {
        rounds = round + 1;
        let mut round_history = Vec::new();
        for _ in 0..=options.restarts {
            let result = nelder_mead(|yy| search.objective(yy), &y, &options.search);
            evaluations += result.evaluations;
            converged = result.converged;
            let start = round_history.last().copied().unwrap_or(f64::INFINITY);
            let improved = start - result.f > options.search.f_tol * (1.0 + result.f.abs());
            round_history.extend(result.history);
            y = result.x;
            if !improved {
                break;
            }
        }
        history.push(round_history);
        if problem.evaluate(&y)?.violation == 0.0 {
            break;
        }
        search.penalty *= options.penalty_growth;
    }
    let (best_feasible, best_any) = (search.best_feasible, search.best_any);

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "outer search stopped at its evaluation limit after {evaluations} evaluations"
        ));
    }
    let Some((y_best, _)) = best_feasible else {
        let (y_close, _, _) = best_any.ok_or_else(|| {
            Error::Synthesis("no outer-search point could be evaluated".into())
        })?;
        let eval = problem.evaluate(&y_close)?;
        let (margins, min_control) = problem.margins(&eval.covariance);
        let mut text = String::new();
        for m in &margins {
            text.push_str(&format!(
                "  {}: predicted sigma {:.6e}, bound {:.6e}, margin {:+.4}\n",
                m.name, m.std_dev, m.bound, m.margin
            ));
        }
        text.push_str(&format!("  control: smallest margin {min_control:+.4}\n"));
        return Err(Error::Infeasible(text));
    };
    let eval = problem.evaluate(&y_best)?;
    let (xs, xu) = problem.multipliers(&y_best);
    let (state_margins, min_control_margin) = problem.margins(&eval.covariance);
    Ok(Synthesis {
        gains: eval.gains,
        weights: eval.weights,
        covariance: eval.covariance,
        report: SynthesisReport {
            state_multipliers: xs,
            control_multipliers: xu,
            segment_of_step,
            cost: eval.cost,
            evaluations,
            penalty_rounds: rounds,
            converged,
            warnings,
            state_margins,
            min_control_margin,
            history,
        },
    })
}
