//! Adaptive gradient ascent over estimator parameters with a squared
//! rectified constraint penalty.
//!
//! Each epoch performs one mini-batch ascent step on
//! `L = o - 0.5 * beta * max(0, b)^2`, evaluates the forward selection,
//! tracks the best feasible snapshot, and re-selects the penalty weight
//! `beta`: zero while the forward selection is feasible, otherwise a
//! closed-form weight that drives the cost down without sacrificing the
//! objective when both are achievable. Feasibility tests, early stopping,
//! and snapshots all read the rounded forward selection; the penalty
//! machinery (the `b` inside the weight selection and the ascent
//! direction) reads the differentiable relaxation, which is the object
//! the weight-selection guarantees are about. Early stopping fires after
//! `patience` consecutive epochs that are infeasible or fail to improve
//! the best feasible objective.
//!
//! The returned solution is always the best feasible snapshot seen, never
//! the final parameters' selection; a knapsack run therefore never
//! reports a cost overrun (the empty selection is its unconditional
//! fallback).

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{EstimatorConfig, EstimatorKind, EstimatorState};
use crate::kernels;
use crate::problem::ConstrainedProblem;

/// Sums are recomputed from scratch this often to stop incremental
/// floating-point drift on non-integer instances.
const REFRESH_INTERVAL: usize = 1024;

/// Consecutive stagnant infeasible epochs tolerated before the beta
/// selection escalates to the exactness branch.
const STAGNATION_STREAK: u32 = 4;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("beta selection requires a positive constraint value, got {0}")]
    ConstraintNotPositive(f64),
    #[error("degenerate constraint gradient: b' . b' = 0")]
    DegenerateGradient,
}

/// How the estimator parameters are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Zero,
    Constant(f64),
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian(f64),
}

/// Solver hyper-parameters. The defaults are the benchmark knapsack
/// settings: `gamma = 0.1`, `xi = 0.1`, `patience = 100`, STE with
/// `s = 50` and `r = 1.01`, zero initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Learning rate gamma > 0.
    pub learning_rate: f64,
    /// Mini-batch fraction xi in (0, 1]: portion of coordinates updated
    /// per epoch.
    pub minibatch_fraction: f64,
    /// Consecutive non-improving or infeasible epochs tolerated before
    /// stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub init: InitScheme,
    pub estimator: EstimatorConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            minibatch_fraction: 0.1,
            patience: 100,
            max_epochs: 100_000,
            seed: 7,
            init: InitScheme::Zero,
            estimator: EstimatorConfig::ste_default(),
        }
    }
}

impl SolverConfig {
    fn assert_valid(&self) {
        assert!(self.learning_rate > 0.0, "learning rate must be positive");
        assert!(
            self.minibatch_fraction > 0.0 && self.minibatch_fraction <= 1.0,
            "minibatch fraction must be in (0, 1]"
        );
        assert!(self.patience >= 1, "patience must be at least 1");
        assert!(self.max_epochs >= 1, "max_epochs must be at least 1");
    }
}

/// One epoch of the run: the evaluated objective and constraint, the
/// penalty weight selected from this epoch's evaluation (used by the next
/// update), and the slope in effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub objective: f64,
    pub constraint: f64,
    pub beta: f64,
    pub tau: f64,
    pub feasible: bool,
}

/// Result of a solver run: the best feasible point observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// For estimator-backed problems, the selection as 0/1 reals; for
    /// raw-parameter problems, the parameter vector.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Total selected cost for knapsack problems; the raw constraint value
    /// for custom problems.
    pub cost: f64,
    pub feasible: bool,
    pub epochs_run: usize,
    /// Wall-clock seconds; reported, never used for control flow.
    pub wall_time: f64,
    /// Degenerate-gradient stalls handled during the run.
    pub stall_events: u64,
    /// Stagnant infeasible epochs escalated to the exactness branch.
    pub escalations: u64,
}

impl Solution {
    /// The selection bits, for estimator-backed problems.
    pub fn selection(&self) -> Vec<bool> {
        self.x.iter().map(|&v| v == 1.0).collect()
    }
}

/// Closed-form minimizer of `-lambda * b + delta * lambda^2` over
/// `lambda >= 0`, namely `max(0, b / (2 delta))`.
pub fn optimal_lambda(b_value: f64, delta: f64) -> Result<f64, SolverError> {
    if !(delta > 0.0) {
        return Err(SolverError::NonPositiveDelta(delta));
    }
    Ok((b_value / (2.0 * delta)).max(0.0))
}

/// Penalized objective `L = o(x) - 0.5 * beta * max(0, b(x))^2`.
pub fn lagrangian(problem: &ConstrainedProblem, x: &[f64], beta: f64) -> f64 {
    assert!(beta >= 0.0, "beta must be non-negative");
    let overrun = problem.constraint_value(x).max(0.0);
    problem.objective_value(x) - 0.5 * beta * overrun * overrun
}

/// Selects the penalty weight from the gradient geometry at a point with
/// constraint overrun `b_value > 0`.
///
/// With `lower = (b'.o') / (b b'.b')` and `upper = (o'.o') / (b b'.o')`:
/// if `b'.o' < 0` the ascent direction already reduces the cost and beta
/// is 0; if `b'.o' > 0` and `lower < upper`, the midpoint of the two
/// bounds both reduces the cost and keeps the objective from falling;
/// otherwise beta is `lower + 1 / (gamma b'.b')`, whose excess over the
/// cost-reduction bound cancels the overrun exactly in one update when
/// the constraint is linear. (`b'.o' = 0` lands in the last branch with
/// `lower = 0`.)
pub fn compute_beta(
    o_grad: &[f64],
    b_grad: &[f64],
    b_value: f64,
    learning_rate: f64,
) -> Result<f64, SolverError> {
    let bo = kernels::dot(b_grad, o_grad);
    let bb = kernels::dot(b_grad, b_grad);
    let oo = kernels::dot(o_grad, o_grad);
    beta_from_products(bo, bb, oo, b_value, learning_rate)
}

/// [`compute_beta`] on pre-reduced dot products `b'.o'`, `b'.b'`, `o'.o'`.
fn beta_from_products(
    bo: f64,
    bb: f64,
    oo: f64,
    b_value: f64,
    learning_rate: f64,
) -> Result<f64, SolverError> {
    assert!(learning_rate > 0.0, "learning rate must be positive");
    if !(b_value > 0.0) {
        return Err(SolverError::ConstraintNotPositive(b_value));
    }
    if bb == 0.0 {
        return Err(SolverError::DegenerateGradient);
    }
    if bo < 0.0 {
        return Ok(0.0);
    }
    let lower = bo / (b_value * bb);
    if bo > 0.0 {
        let upper = oo / (b_value * bo);
        // `lower == upper` exactly when the gradients are parallel, where
        // the midpoint would cancel the ascent direction entirely; the
        // relative margin keeps rounding noise from selecting it there.
        if upper > lower * (1.0 + 1e-9) {
            return Ok(0.5 * lower + 0.5 * upper);
        }
    }
    Ok(lower + 1.0 / (learning_rate * bb))
}

/// Reusable per-epoch buffers.
#[derive(Debug, Default)]
struct Scratch {
    minibatch: Vec<usize>,
    delta: Vec<f64>,
    dxde: Vec<f64>,
    o_chained: Vec<f64>,
    b_chained: Vec<f64>,
    full_relaxed: Vec<f64>,
    full_o_grad: Vec<f64>,
    full_b_grad: Vec<f64>,
    point: Vec<f64>,
}

/// Partial sums of one relaxation sweep: the relaxed constraint total and
/// the three gradient products feeding the beta selection.
#[derive(Clone, Copy, Default)]
struct PenaltyMoments {
    relaxed_cost: f64,
    bo: f64,
    bb: f64,
    oo: f64,
}

impl PenaltyMoments {
    fn merge(a: Self, b: Self) -> Self {
        PenaltyMoments {
            relaxed_cost: a.relaxed_cost + b.relaxed_cost,
            bo: a.bo + b.bo,
            bb: a.bb + b.bb,
            oo: a.oo + b.oo,
        }
    }
}

/// Mutable state of one solver run.
#[derive(Debug)]
pub struct SolverState {
    /// Learnable parameters and the epoch counter driving annealing.
    pub estimator: EstimatorState,
    /// Current penalty weight; zero whenever the last evaluation was
    /// feasible.
    pub beta: f64,
    /// Remaining patience.
    pub tolerance: usize,
    /// Best feasible objective seen so far (0 until one is seen).
    pub best_objective: f64,
    /// Number of degenerate-gradient stall events handled.
    pub stall_events: u64,
    /// Number of stagnant infeasible epochs escalated to the exactness
    /// branch of the beta selection.
    pub escalations: u64,
    best_bits: Option<Vec<bool>>,
    best_point: Option<Vec<f64>>,
    bits: Vec<bool>,
    objective_cur: f64,
    constraint_cur: f64,
    /// Relaxed constraint value cached by the last beta selection; the
    /// penalty term in the update is `beta * max(0, relaxed)`, keeping the
    /// push consistent with the value beta was derived from.
    relaxed_constraint: f64,
    /// True when the forward cutoff in parameter space is the same at
    /// every epoch, enabling incremental bit maintenance.
    stable_cutoff: bool,
    rng: ChaCha8Rng,
    scratch: Scratch,
}

impl SolverState {
    /// Initializes parameters per the config and evaluates the starting
    /// point. The RNG is consumed first by initialization (if Gaussian),
    /// then by one mini-batch draw per epoch.
    pub fn new(problem: &ConstrainedProblem, config: &SolverConfig) -> Self {
        config.assert_valid();
        let n = problem.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let e: Vec<f64> = match config.init {
            InitScheme::Zero => vec![0.0; n],
            InitScheme::Constant(v) => vec![v; n],
            InitScheme::Gaussian(std) => {
                use rand::Rng;
                let normal = rand_distr::Normal::new(0.0, std).expect("valid std");
                (0..n).map(|_| rng.sample(normal)).collect()
            }
        };
        let est = &config.estimator;
        let stable_cutoff = est.kind == EstimatorKind::Pte
            || kernels::logit(est.round_threshold) == 0.0;
        let mut state = Self {
            estimator: EstimatorState::new(e),
            beta: 0.0,
            tolerance: config.patience,
            best_objective: 0.0,
            stall_events: 0,
            escalations: 0,
            best_bits: None,
            best_point: None,
            bits: vec![false; if problem.uses_estimator() { n } else { 0 }],
            objective_cur: 0.0,
            constraint_cur: 0.0,
            relaxed_constraint: 0.0,
            stable_cutoff,
            rng,
            scratch: Scratch::default(),
        };
        state.refresh_evaluation(problem, config);
        state
    }

    /// Objective of the current forward point.
    pub fn current_objective(&self) -> f64 {
        self.objective_cur
    }

    /// Constraint of the current forward point.
    pub fn current_constraint(&self) -> f64 {
        self.constraint_cur
    }

    /// Current forward selection (estimator-backed problems).
    pub fn current_bits(&self) -> &[bool] {
        &self.bits
    }

    /// Recomputes the forward point and its objective/constraint from
    /// scratch.
    fn refresh_evaluation(&mut self, problem: &ConstrainedProblem, config: &SolverConfig) {
        if problem.uses_estimator() {
            let cutoff = config.estimator.forward_cutoff(self.estimator.epoch);
            kernels::map_into(&self.estimator.e, &mut self.bits, |_, &e| e >= cutoff);
            if let Some(inst) = problem.instance() {
                self.objective_cur = kernels::masked_sum(inst.values(), &self.bits);
                self.constraint_cur = kernels::masked_sum(inst.costs(), &self.bits) - inst.budget();
            } else {
                let bits = &self.bits;
                kernels::map_into(bits, &mut self.scratch.point, |_, &b| b as u8 as f64);
                self.objective_cur = problem.objective_value(&self.scratch.point);
                self.constraint_cur = problem.constraint_value(&self.scratch.point);
            }
        } else {
            self.objective_cur = problem.objective_value(&self.estimator.e);
            self.constraint_cur = problem.constraint_value(&self.estimator.e);
        }
    }

    fn draw_minibatch(&mut self, n: usize, config: &SolverConfig) {
        let batch = ((config.minibatch_fraction * n as f64).ceil() as usize).clamp(1, n);
        self.scratch.minibatch.clear();
        self.scratch
            .minibatch
            .extend(rand::seq::index::sample(&mut self.rng, n, batch).iter());
    }

    /// One mini-batch gradient ascent update followed by re-evaluation of
    /// the forward point: draws `ceil(xi * n)` distinct coordinates,
    /// computes the restricted gradients, and moves each selected
    /// coordinate by `gamma * (o'_i - beta * max(0, b) * b'_i)`. The `b`
    /// entering the penalty is the relaxed constraint value beta was
    /// selected against (for raw-parameter problems that is the constraint
    /// at theta itself).
    pub fn step(&mut self, problem: &ConstrainedProblem, config: &SolverConfig) {
        let n = problem.dim();
        self.draw_minibatch(n, config);
        let gamma = config.learning_rate;
        let push = self.beta * self.relaxed_constraint.max(0.0);

        if !problem.uses_estimator() {
            // Raw-parameter problem: gradients of o and b at theta itself.
            let theta = &self.estimator.e;
            self.scratch.full_o_grad.resize(n, 0.0);
            self.scratch.full_b_grad.resize(n, 0.0);
            problem.objective_grad_into(theta, &mut self.scratch.full_o_grad);
            problem.constraint_grad_into(theta, &mut self.scratch.full_b_grad);
            for &i in &self.scratch.minibatch {
                let dir = self.scratch.full_o_grad[i] - push * self.scratch.full_b_grad[i];
                self.estimator.e[i] += gamma * dir;
            }
            self.refresh_evaluation(problem, config);
            return;
        }

        let slope = config.estimator.slope(self.estimator.epoch);
        if let Some(inst) = problem.instance() {
            // Knapsack fast path: constant coefficient gradients, chained
            // through the per-coordinate relaxation derivative.
            let (values, costs) = (inst.values(), inst.costs());
            let est = &config.estimator;
            let e = &self.estimator.e;
            kernels::map_into(&self.scratch.minibatch, &mut self.scratch.delta, |_, &i| {
                let (_, d) = est.relaxation_at(e[i], slope);
                gamma * d * (values[i] - push * costs[i])
            });
            let cutoff = est.forward_cutoff(self.estimator.epoch);
            let mut d_objective = 0.0;
            let mut d_constraint = 0.0;
            for (j, &i) in self.scratch.minibatch.iter().enumerate() {
                self.estimator.e[i] += self.scratch.delta[j];
                if self.stable_cutoff {
                    let bit = self.estimator.e[i] >= cutoff;
                    if bit != self.bits[i] {
                        self.bits[i] = bit;
                        let sign = if bit { 1.0 } else { -1.0 };
                        d_objective += sign * values[i];
                        d_constraint += sign * costs[i];
                    }
                }
            }
            if self.stable_cutoff {
                self.objective_cur += d_objective;
                self.constraint_cur += d_constraint;
            } else {
                self.refresh_evaluation(problem, config);
            }
        } else {
            // Custom estimator-backed problem: gradients need the full
            // relaxed point.
            self.chain_full_gradients(problem, config, slope);
            for &i in &self.scratch.minibatch {
                let dir = self.scratch.full_o_grad[i] - push * self.scratch.full_b_grad[i];
                self.estimator.e[i] += gamma * self.scratch.dxde[i] * dir;
            }
            self.refresh_evaluation(problem, config);
        }
    }

    /// Fills `full_relaxed`, `dxde`, and the point-space gradients for a
    /// custom estimator problem.
    fn chain_full_gradients(
        &mut self,
        problem: &ConstrainedProblem,
        config: &SolverConfig,
        slope: f64,
    ) {
        let n = problem.dim();
        let est = &config.estimator;
        let e = &self.estimator.e;
        let relaxed = &mut self.scratch.full_relaxed;
        let dxde = &mut self.scratch.dxde;
        relaxed.resize(n, 0.0);
        dxde.resize(n, 0.0);
        for i in 0..n {
            let (x, d) = est.relaxation_at(e[i], slope);
            relaxed[i] = x;
            dxde[i] = d;
        }
        self.scratch.full_o_grad.resize(n, 0.0);
        self.scratch.full_b_grad.resize(n, 0.0);
        problem.objective_grad_into(relaxed, &mut self.scratch.full_o_grad);
        problem.constraint_grad_into(relaxed, &mut self.scratch.full_b_grad);
    }

    /// One sweep over the relaxation collecting the relaxed constraint
    /// value and the gradient products for the beta selection.
    fn penalty_moments(&mut self, problem: &ConstrainedProblem, config: &SolverConfig) -> PenaltyMoments {
        let slope = config.estimator.slope(self.estimator.epoch);
        if !problem.uses_estimator() {
            let theta = &self.estimator.e;
            let n = problem.dim();
            self.scratch.full_o_grad.resize(n, 0.0);
            self.scratch.full_b_grad.resize(n, 0.0);
            problem.objective_grad_into(theta, &mut self.scratch.full_o_grad);
            problem.constraint_grad_into(theta, &mut self.scratch.full_b_grad);
            let (og, bg) = (&self.scratch.full_o_grad, &self.scratch.full_b_grad);
            PenaltyMoments {
                relaxed_cost: self.constraint_cur,
                bo: kernels::dot(bg, og),
                bb: kernels::dot(bg, bg),
                oo: kernels::dot(og, og),
            }
        } else if let Some(inst) = problem.instance() {
            let (values, costs) = (inst.values(), inst.costs());
            let est = config.estimator;
            let e = &self.estimator.e;
            let budget = inst.budget();
            let mut moments = kernels::reduce_chunks(
                e.len(),
                |lo, hi| {
                    let mut m = PenaltyMoments::default();
                    for i in lo..hi {
                        let (x, d) = est.relaxation_at(e[i], slope);
                        m.relaxed_cost += costs[i] * x;
                        let vd = values[i] * d;
                        let cd = costs[i] * d;
                        m.bo += cd * vd;
                        m.bb += cd * cd;
                        m.oo += vd * vd;
                    }
                    m
                },
                PenaltyMoments::default(),
                PenaltyMoments::merge,
            );
            moments.relaxed_cost -= budget;
            moments
        } else {
            self.chain_full_gradients(problem, config, slope);
            let relaxed_b = problem.constraint_value(&self.scratch.full_relaxed);
            let (og, bg, dxde) = (
                &self.scratch.full_o_grad,
                &self.scratch.full_b_grad,
                &self.scratch.dxde,
            );
            kernels::map_into(&self.estimator.e, &mut self.scratch.o_chained, |i, _| {
                og[i] * dxde[i]
            });
            kernels::map_into(&self.estimator.e, &mut self.scratch.b_chained, |i, _| {
                bg[i] * dxde[i]
            });
            let (oc, bc) = (&self.scratch.o_chained, &self.scratch.b_chained);
            PenaltyMoments {
                relaxed_cost: relaxed_b,
                bo: kernels::dot(bc, oc),
                bb: kernels::dot(bc, bc),
                oo: kernels::dot(oc, oc),
            }
        }
    }

    /// Re-selects beta from the current evaluation. The forward selection
    /// decides whether a penalty is needed at all (feasible bits mean
    /// beta = 0); the weight itself comes from the relaxation, whose
    /// gradients the selection theory is about.
    ///
    /// `stagnant` marks an infeasible epoch whose update left the forward
    /// evaluation unchanged: the midpoint weight is scale-free in the
    /// overrun, so a saturated selection can sit still above the budget
    /// indefinitely. Stagnation escalates to the exactness branch
    /// `lower + 1/(gamma b'.b')` evaluated on the gradients of the last
    /// mini-batch against the forward overrun itself; its excess term
    /// grows with both the overrun and the degree of saturation, so the
    /// resulting cut pierces saturated coordinates and restores progress.
    ///
    /// A fully degenerate constraint gradient (every coordinate saturated
    /// to zero derivative) is treated as a stall: saturated coordinates
    /// are nudged toward zero by one gamma step and beta is left
    /// unchanged.
    fn reselect_beta(
        &mut self,
        problem: &ConstrainedProblem,
        config: &SolverConfig,
        stagnant: bool,
    ) {
        if self.constraint_cur <= 0.0 {
            self.beta = 0.0;
            if stagnant {
                // Feasible but frozen: buried parameters regrow too slowly
                // to change anything. Pull everything toward the active
                // band so plain ascent can keep exploring.
                self.escalations += 1;
                self.nudge_toward_zero(problem, config);
            }
            return;
        }
        if stagnant && self.escalate(problem, config) {
            return;
        }
        let moments = self.penalty_moments(problem, config);
        self.relaxed_constraint = moments.relaxed_cost;
        if moments.relaxed_cost <= 0.0 {
            // The rounded selection overruns but the relaxation does not;
            // plain ascent will raise the relaxed cost until the penalty
            // engages.
            self.beta = 0.0;
            return;
        }
        match beta_from_products(
            moments.bo,
            moments.bb,
            moments.oo,
            moments.relaxed_cost,
            config.learning_rate,
        ) {
            Ok(beta) => self.beta = beta,
            Err(SolverError::DegenerateGradient) => {
                self.stall_events += 1;
                self.nudge_toward_zero(problem, config);
            }
            Err(other) => unreachable!("beta reselection: {other}"),
        }
    }

    /// Escalated beta for a stagnant infeasible run of epochs: the
    /// exactness branch on the last mini-batch's gradients. The overrun it
    /// is asked to remove is capped at the relaxed constraint mass the
    /// batch itself carries, so the resulting cut flips saturated bits
    /// without burying them beyond recovery. Returns false when the batch
    /// carries no constraint gradient at all.
    fn escalate(&mut self, problem: &ConstrainedProblem, config: &SolverConfig) -> bool {
        let slope = config.estimator.slope(self.estimator.epoch);
        let (mut bo, mut bb) = (0.0, 0.0);
        let mut batch_mass = 0.0;
        if !problem.uses_estimator() {
            let theta = &self.estimator.e;
            let n = problem.dim();
            self.scratch.full_o_grad.resize(n, 0.0);
            self.scratch.full_b_grad.resize(n, 0.0);
            problem.objective_grad_into(theta, &mut self.scratch.full_o_grad);
            problem.constraint_grad_into(theta, &mut self.scratch.full_b_grad);
            for &i in &self.scratch.minibatch {
                let (og, bg) = (self.scratch.full_o_grad[i], self.scratch.full_b_grad[i]);
                bo += bg * og;
                bb += bg * bg;
            }
            batch_mass = self.constraint_cur;
        } else if let Some(inst) = problem.instance() {
            let (values, costs) = (inst.values(), inst.costs());
            let est = &config.estimator;
            for &i in &self.scratch.minibatch {
                let (x, d) = est.relaxation_at(self.estimator.e[i], slope);
                let vd = values[i] * d;
                let cd = costs[i] * d;
                bo += cd * vd;
                bb += cd * cd;
                batch_mass += costs[i] * x;
            }
        } else {
            self.chain_full_gradients(problem, config, slope);
            for &i in &self.scratch.minibatch {
                let d = self.scratch.dxde[i];
                let x = self.scratch.full_relaxed[i];
                let bg_point = self.scratch.full_b_grad[i];
                bo += bg_point * d * self.scratch.full_o_grad[i] * d;
                bb += bg_point * d * bg_point * d;
                batch_mass += (x * bg_point).max(0.0);
            }
        }
        if bb == 0.0 {
            return false;
        }
        let b_kick = self.constraint_cur.min(batch_mass.max(f64::MIN_POSITIVE));
        self.escalations += 1;
        self.beta = (bo / (b_kick * bb)).max(0.0) + 1.0 / (config.learning_rate * bb);
        self.relaxed_constraint = b_kick;
        true
    }

    /// Pulls every parameter toward zero by one gamma step (without
    /// crossing it) and re-evaluates. Saturated coordinates re-enter the
    /// band where the relaxation has usable gradients.
    fn nudge_toward_zero(&mut self, problem: &ConstrainedProblem, config: &SolverConfig) {
        let gamma = config.learning_rate;
        kernels::for_each_mut(&mut self.estimator.e, |e| {
            if *e != 0.0 {
                let nudged = *e - gamma * e.signum();
                *e = if nudged.signum() == e.signum() {
                    nudged
                } else {
                    0.0
                };
            }
        });
        self.refresh_evaluation(problem, config);
    }

    fn snapshot_best(&mut self, problem: &ConstrainedProblem) {
        if problem.uses_estimator() {
            self.best_bits = Some(self.bits.clone());
        } else {
            self.best_point = Some(self.estimator.e.clone());
        }
    }
}

fn run(
    problem: &ConstrainedProblem,
    config: &SolverConfig,
    record_trace: bool,
) -> (Solution, Vec<TraceRecord>) {
    let start = Instant::now();
    let mut state = SolverState::new(problem, config);
    let mut trace = Vec::new();
    let mut prev_objective = state.objective_cur;
    let mut prev_constraint = state.constraint_cur;
    let mut stagnant_streak = 0u32;

    loop {
        let epoch = state.estimator.epoch;
        if epoch >= config.max_epochs {
            break;
        }
        state.step(problem, config);
        let objective = state.objective_cur;
        let constraint = state.constraint_cur;
        if objective == prev_objective && constraint == prev_constraint {
            stagnant_streak += 1;
        } else {
            stagnant_streak = 0;
        }
        let stagnant = stagnant_streak >= STAGNATION_STREAK;
        if stagnant && constraint <= 0.0 {
            // The feasible-side remedy gets room to act before firing
            // again; the infeasible-side kick retries every epoch, since a
            // batch without selected mass cannot carry it.
            stagnant_streak = 0;
        }
        prev_objective = objective;
        prev_constraint = constraint;

        if constraint > 0.0 || objective <= state.best_objective {
            state.tolerance -= 1;
        } else {
            state.tolerance = config.patience;
            state.best_objective = objective;
            state.snapshot_best(problem);
        }

        state.reselect_beta(problem, config, stagnant);

        if record_trace {
            trace.push(TraceRecord {
                epoch,
                objective,
                constraint,
                beta: state.beta,
                tau: config.estimator.slope(epoch),
                feasible: constraint <= 0.0,
            });
        }

        state.estimator.epoch += 1;
        if state.tolerance == 0 {
            break;
        }
        if state.estimator.epoch % REFRESH_INTERVAL == 0 {
            state.refresh_evaluation(problem, config);
        }
    }

    let epochs_run = state.estimator.epoch;
    let solution = finish(problem, state, epochs_run, start);
    (solution, trace)
}

fn finish(
    problem: &ConstrainedProblem,
    state: SolverState,
    epochs_run: usize,
    start: Instant,
) -> Solution {
    let n = problem.dim();
    let (x, objective, cost, feasible) = if problem.uses_estimator() {
        let bits = match state.best_bits {
            Some(bits) => bits,
            // No feasible point was ever seen: fall back to the empty
            // selection, which is always feasible for knapsack problems.
            None => vec![false; n],
        };
        let x: Vec<f64> = bits.iter().map(|&b| b as u8 as f64).collect();
        if let Some(inst) = problem.instance() {
            let objective = kernels::masked_sum(inst.values(), &bits);
            let cost = kernels::masked_sum(inst.costs(), &bits);
            (x, objective, cost, cost <= inst.budget())
        } else {
            let objective = problem.objective_value(&x);
            let b = problem.constraint_value(&x);
            (x, objective, b, b <= 0.0)
        }
    } else {
        let point = state.best_point.unwrap_or_else(|| state.estimator.e.clone());
        let objective = problem.objective_value(&point);
        let b = problem.constraint_value(&point);
        (point, objective, b, b <= 0.0)
    };
    Solution {
        x,
        objective,
        cost,
        feasible,
        epochs_run,
        wall_time: start.elapsed().as_secs_f64(),
        stall_events: state.stall_events,
        escalations: state.escalations,
    }
}

/// Runs the adaptive gradient ascent and returns the best feasible
/// snapshot.
pub fn solve(problem: &ConstrainedProblem, config: &SolverConfig) -> Solution {
    run(problem, config, false).0
}

/// Like [`solve`], also returning the per-epoch trace.
pub fn solve_traced(
    problem: &ConstrainedProblem,
    config: &SolverConfig,
) -> (Solution, Vec<TraceRecord>) {
    run(problem, config, true)
}

/// Writes a trace as JSON lines, one object per epoch.
pub fn write_trace_jsonl(trace: &[TraceRecord], path: &Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in trace {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::KnapsackInstance;
    use crate::problem::{TOY_OPTIMAL_POINT, TOY_OPTIMUM};

    fn small() -> KnapsackInstance {
        KnapsackInstance::new(vec![6.0, 10.0, 12.0], vec![1.0, 2.0, 3.0], 5.0).unwrap()
    }

    fn pte_config() -> SolverConfig {
        SolverConfig {
            minibatch_fraction: 1.0,
            estimator: EstimatorConfig::pte(),
            ..SolverConfig::default()
        }
    }

    #[test]
    fn optimal_lambda_examples() {
        assert_eq!(optimal_lambda(4.0, 2.0).unwrap(), 1.0);
        assert_eq!(optimal_lambda(-3.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            optimal_lambda(1.0, 0.0),
            Err(SolverError::NonPositiveDelta(_))
        ));
    }

    #[test]
    fn optimal_lambda_matches_grid_search() {
        // Independent oracle: scan -lambda*b + delta*lambda^2 on a grid.
        let (b, delta) = (4.0, 2.0);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=100_000 {
            let lambda = k as f64 * 1e-4;
            let value = -lambda * b + delta * lambda * lambda;
            if value < best.0 {
                best = (value, lambda);
            }
        }
        let closed = optimal_lambda(b, delta).unwrap();
        assert!((closed - best.1).abs() <= 1e-4 + 1e-12);
    }

    #[test]
    fn lagrangian_examples() {
        let problem = ConstrainedProblem::knapsack(small());
        // b = 0: the rectifier kills the penalty.
        assert_eq!(lagrangian(&problem, &[0.0, 1.0, 1.0], 5.0), 22.0);
        // o = 28, b = 1, beta = 4 -> 28 - 0.5*4 = 26.
        assert_eq!(lagrangian(&problem, &[1.0, 1.0, 1.0], 4.0), 26.0);
        // beta = 0 -> plain objective.
        assert_eq!(lagrangian(&problem, &[1.0, 1.0, 1.0], 0.0), 28.0);
    }

    #[test]
    fn compute_beta_opposed_gradients() {
        assert_eq!(
            compute_beta(&[1.0, 0.0], &[-1.0, 0.0], 1.0, 0.1).unwrap(),
            0.0
        );
    }

    #[test]
    fn compute_beta_midpoint_branch() {
        let beta = compute_beta(&[1.0, 1.0], &[1.0, 0.0], 1.0, 0.1).unwrap();
        assert_eq!(beta, 1.5); // lower = 1, upper = 2
    }

    #[test]
    fn compute_beta_parallel_gradients_use_epsilon() {
        // o' parallel to b': lower == upper, so the last branch fires with
        // epsilon = 1 / (gamma * b'.b').
        let beta = compute_beta(&[2.0, 0.0], &[1.0, 0.0], 1.0, 0.1).unwrap();
        assert_eq!(beta, 12.0); // 2 + 1/(0.1 * 1)
    }

    #[test]
    fn compute_beta_orthogonal_gradients_positive() {
        // b'.o' = 0 must still produce beta > 0.
        let beta = compute_beta(&[1.0, 0.0], &[0.0, 1.0], 2.0, 0.5).unwrap();
        assert_eq!(beta, 2.0); // lower = 0, epsilon = 1/(0.5*1)
    }

    #[test]
    fn compute_beta_errors() {
        assert!(matches!(
            compute_beta(&[1.0], &[1.0], 0.0, 0.1),
            Err(SolverError::ConstraintNotPositive(_))
        ));
        assert!(matches!(
            compute_beta(&[1.0], &[0.0], 1.0, 0.1),
            Err(SolverError::DegenerateGradient)
        ));
    }

    #[test]
    fn step_full_batch_pte_feasible_push() {
        let problem = ConstrainedProblem::knapsack(small());
        let config = pte_config();
        let mut state = SolverState::new(&problem, &config);
        assert_eq!(state.current_constraint(), 1.0); // all selected, cost 6
        state.beta = 0.0;
        state.step(&problem, &config);
        let e = &state.estimator.e;
        assert!((e[0] - 0.6).abs() < 1e-15);
        assert!((e[1] - 1.0).abs() < 1e-15);
        assert!((e[2] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn step_full_batch_pte_with_selected_beta() {
        // At e = (1,1,1) the forward selection is everything and the PTE
        // relaxed constraint is c.e - B = 1 > 0 with gradients (v, c). The
        // midpoint branch gives beta = (62/14 + 280/62) / 2; one step then
        // moves each e_i by gamma * (v_i - beta * 1 * c_i).
        let problem = ConstrainedProblem::knapsack(small());
        let config = pte_config();
        let mut state = SolverState::new(&problem, &config);
        state.estimator.e = vec![1.0, 1.0, 1.0];
        state.refresh_evaluation(&problem, &config);
        assert_eq!(state.current_constraint(), 1.0);
        state.reselect_beta(&problem, &config, false);
        let expected_beta = 0.5 * (62.0 / 14.0) + 0.5 * (280.0 / 62.0);
        assert!((state.beta - expected_beta).abs() < 1e-12);
        assert_eq!(state.relaxed_constraint, 1.0);
        state.step(&problem, &config);
        for (i, (&v, &c)) in [6.0, 10.0, 12.0].iter().zip(&[1.0, 2.0, 3.0]).enumerate() {
            let expected = 1.0 + 0.1 * (v - expected_beta * c);
            assert!(
                (state.estimator.e[i] - expected).abs() < 1e-12,
                "coordinate {i}"
            );
        }
    }

    #[test]
    fn compute_beta_matches_fused_products() {
        let o = [6.0, 10.0, 12.0];
        let b = [1.0, 2.0, 3.0];
        let direct = compute_beta(&o, &b, 1.0, 0.1).unwrap();
        let expected = 0.5 * (62.0 / 14.0) + 0.5 * (280.0 / 62.0);
        assert_eq!(direct, expected);
    }

    #[test]
    fn step_minibatch_updates_exactly_one_of_ten() {
        let inst = KnapsackInstance::new(vec![1.0; 10], vec![1.0; 10], 5.0).unwrap();
        let problem = ConstrainedProblem::knapsack(inst);
        let config = SolverConfig {
            estimator: EstimatorConfig::pte(),
            ..SolverConfig::default()
        };
        let mut state = SolverState::new(&problem, &config);
        state.step(&problem, &config);
        let moved = state.estimator.e.iter().filter(|&&e| e != 0.0).count();
        assert_eq!(moved, 1);
    }

    #[test]
    fn solve_all_items_fit() {
        let inst = KnapsackInstance::new(vec![6.0, 10.0, 12.0], vec![1.0, 2.0, 3.0], 7.0).unwrap();
        let problem = ConstrainedProblem::knapsack(inst);
        let solution = solve(&problem, &SolverConfig::default());
        assert_eq!(solution.objective, 28.0);
        assert_eq!(solution.cost, 6.0);
        assert!(solution.feasible);
        assert_eq!(solution.selection(), vec![true, true, true]);
    }

    #[test]
    fn solve_small_instance_reaches_optimum() {
        let problem = ConstrainedProblem::knapsack(small());
        let solution = solve(&problem, &SolverConfig::default());
        assert!(solution.feasible);
        assert!(solution.cost <= 5.0);
        assert_eq!(solution.objective, 22.0);
        assert_eq!(solution.selection(), vec![false, true, true]);
    }

    #[test]
    fn solve_is_deterministic() {
        let spec = crate::instance::GeneratorSpec::new(
            crate::instance::Family::Uncorrelated,
            200,
            1000,
            3,
        );
        let inst = crate::instance::generate(&spec).unwrap();
        let problem = ConstrainedProblem::knapsack(inst);
        let config = SolverConfig {
            seed: 17,
            max_epochs: 2000,
            ..SolverConfig::default()
        };
        let (s1, t1) = solve_traced(&problem, &config);
        let (s2, t2) = solve_traced(&problem, &config);
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.objective, s2.objective);
        assert_eq!(s1.epochs_run, s2.epochs_run);
        assert_eq!(t1, t2);
    }

    #[test]
    fn trace_invariants() {
        let problem = ConstrainedProblem::knapsack(small());
        let (_, trace) = solve_traced(&problem, &SolverConfig::default());
        assert!(!trace.is_empty());
        let mut best = 0.0f64;
        let mut prev_tau = 0.0f64;
        for (i, rec) in trace.iter().enumerate() {
            assert_eq!(rec.epoch, i);
            assert_eq!(rec.feasible, rec.constraint <= 0.0);
            // Beta selected from a feasible evaluation is always zero.
            if rec.feasible {
                assert_eq!(rec.beta, 0.0);
            }
            assert!(rec.tau >= prev_tau);
            prev_tau = rec.tau;
            if rec.feasible && rec.objective > best {
                best = rec.objective;
            }
        }
    }

    #[test]
    fn solve_never_overruns_budget() {
        for seed in 0..5 {
            let spec = crate::instance::GeneratorSpec::new(
                crate::instance::Family::StronglyCorrelated,
                100,
                100,
                seed,
            );
            let inst = crate::instance::generate(&spec).unwrap();
            let budget = inst.budget();
            let problem = ConstrainedProblem::knapsack(inst);
            let config = SolverConfig {
                seed,
                max_epochs: 1500,
                ..SolverConfig::default()
            };
            let solution = solve(&problem, &config);
            assert!(solution.feasible);
            assert!(solution.cost <= budget);
        }
    }

    #[test]
    fn solve_toy_converges_to_disk_boundary_optimum() {
        let toy = ConstrainedProblem::toy();
        let config = SolverConfig {
            learning_rate: 0.01,
            minibatch_fraction: 1.0,
            init: InitScheme::Constant(0.3),
            ..SolverConfig::default()
        };
        let solution = solve(&toy, &config);
        assert!(solution.feasible);
        assert!((solution.x[0] - TOY_OPTIMAL_POINT[0]).abs() < 1e-2);
        assert!((solution.x[1] - TOY_OPTIMAL_POINT[1]).abs() < 1e-2);
        assert!((solution.objective - TOY_OPTIMUM).abs() < 1e-2);
        assert!(solution.cost <= 1e-6); // constraint value at the snapshot
    }

    #[test]
    fn stall_reset_nudges_saturated_coordinates() {
        // A single saturated coordinate under STE: the relaxation
        // derivative underflows to zero, so beta selection degenerates and
        // the stall path must pull e toward zero instead.
        let inst = KnapsackInstance::new(vec![2.0], vec![1.0], 0.5).unwrap();
        let problem = ConstrainedProblem::knapsack(inst);
        let config = SolverConfig {
            minibatch_fraction: 1.0,
            ..SolverConfig::default()
        };
        let mut state = SolverState::new(&problem, &config);
        state.estimator.e[0] = 800.0; // sigmoid' underflows, bit stays 1
        state.refresh_evaluation(&problem, &config);
        assert!(state.current_constraint() > 0.0);
        state.step(&problem, &config);
        state.reselect_beta(&problem, &config, false);
        assert_eq!(state.stall_events, 1);
        assert!(state.estimator.e[0] < 800.0);
    }

    #[test]
    fn trace_jsonl_round_trips(){
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let problem = ConstrainedProblem::knapsack(small());
        let (_, trace) = solve_traced(&problem, &SolverConfig::default());
        write_trace_jsonl(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), trace.len());
        let first: TraceRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first, trace[0]);
    }
}
