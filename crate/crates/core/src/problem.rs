//! The abstract constrained maximization problem the solver operates on:
//! an objective `o` and a single inequality constraint `b <= 0`, with
//! values evaluated on forward (rounded) bits and gradients flowing
//! through the backward relaxation.
//!
//! Values and gradients are deliberately split: the solver tests
//! feasibility on the actual rounded selection, while the penalty-weight
//! theory and the ascent direction use the relaxed gradients. Points are
//! passed as `&[f64]` everywhere; for estimator-backed problems the
//! forward point is the 0/1 bit vector, for raw-parameter problems (the
//! toy) it is the parameter vector itself.

use crate::estimator::{backward_relaxation, EstimatorConfig, EstimatorState};
use crate::instance::KnapsackInstance;
use crate::kernels;

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

enum Inner {
    Knapsack(KnapsackInstance),
    Custom {
        objective_value: ValueFn,
        objective_grad: GradFn,
        constraint_value: ValueFn,
        constraint_grad: GradFn,
    },
}

/// A maximization problem `max o(x)` subject to `b(x) <= 0`.
pub struct ConstrainedProblem {
    dim: usize,
    uses_estimator: bool,
    inner: Inner,
}

/// Objective value of the toy problem's constrained maximum, `3 + 2*sqrt(2)`.
pub const TOY_OPTIMUM: f64 = 5.82842712474619;

/// The toy problem's unique constrained maximizer, `(1 + 1/sqrt(2), 1 + 1/sqrt(2))`.
pub const TOY_OPTIMAL_POINT: [f64; 2] = [1.7071067811865475, 1.7071067811865475];

impl ConstrainedProblem {
    /// Binds a knapsack instance: `o(x) = v . x`, `b(x) = c . x - B`, with
    /// constant gradients `v` and `c`.
    pub fn knapsack(instance: KnapsackInstance) -> Self {
        Self {
            dim: instance.n(),
            uses_estimator: true,
            inner: Inner::Knapsack(instance),
        }
    }

    /// The two-variable toy: maximize `x1^2 + x2^2` inside the unit disk
    /// centered at (1, 1). Operates on raw parameters, no estimator.
    pub fn toy() -> Self {
        Self::custom(
            2,
            false,
            |x| x[0] * x[0] + x[1] * x[1],
            |x, g| {
                g[0] = 2.0 * x[0];
                g[1] = 2.0 * x[1];
            },
            |x| (x[0] - 1.0) * (x[0] - 1.0) + (x[1] - 1.0) * (x[1] - 1.0) - 1.0,
            |x, g| {
                g[0] = 2.0 * (x[0] - 1.0);
                g[1] = 2.0 * (x[1] - 1.0);
            },
        )
    }

    /// A problem defined by user-supplied value and gradient callbacks.
    /// Gradient callbacks write into a slice of length `dim`.
    pub fn custom(
        dim: usize,
        uses_estimator: bool,
        objective_value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        objective_grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        constraint_value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        constraint_grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        assert!(dim >= 1, "problem dimension must be at least 1");
        Self {
            dim,
            uses_estimator,
            inner: Inner::Custom {
                objective_value: Box::new(objective_value),
                objective_grad: Box::new(objective_grad),
                constraint_value: Box::new(constraint_value),
                constraint_grad: Box::new(constraint_grad),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// False for raw-parameter problems whose objective and constraint are
    /// evaluated on the parameters directly.
    pub fn uses_estimator(&self) -> bool {
        self.uses_estimator
    }

    /// The bound knapsack instance, when this is a knapsack problem.
    pub fn instance(&self) -> Option<&KnapsackInstance> {
        match &self.inner {
            Inner::Knapsack(inst) => Some(inst),
            Inner::Custom { .. } => None,
        }
    }

    /// Objective at a point (forward bits as 0/1 reals, or raw parameters).
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        match &self.inner {
            Inner::Knapsack(inst) => kernels::dot(inst.values(), x),
            Inner::Custom {
                objective_value, ..
            } => objective_value(x),
        }
    }

    /// Constraint at a point; feasible means `<= 0`.
    pub fn constraint_value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        match &self.inner {
            Inner::Knapsack(inst) => kernels::dot(inst.costs(), x) - inst.budget(),
            Inner::Custom {
                constraint_value, ..
            } => constraint_value(x),
        }
    }

    /// Objective gradient with respect to the (relaxed) point.
    pub fn objective_grad_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        match &self.inner {
            Inner::Knapsack(inst) => out.copy_from_slice(inst.values()),
            Inner::Custom { objective_grad, .. } => objective_grad(x, out),
        }
    }

    /// Constraint gradient with respect to the (relaxed) point.
    pub fn constraint_grad_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        match &self.inner {
            Inner::Knapsack(inst) => out.copy_from_slice(inst.costs()),
            Inner::Custom {
                constraint_grad, ..
            } => constraint_grad(x, out),
        }
    }

    /// Gradients of objective and constraint with respect to the estimator
    /// parameters, chained through the backward relaxation:
    /// `o'_i = (do/dx~)_i * (dx~/de)_i` and likewise for `b'`. For a
    /// PTE-bound knapsack this is exactly `(v, c)`.
    ///
    /// Panics if the problem does not use an estimator.
    pub fn chain_gradients(
        &self,
        state: &EstimatorState,
        config: &EstimatorConfig,
    ) -> (Vec<f64>, Vec<f64>) {
        assert!(
            self.uses_estimator,
            "chain_gradients requires an estimator-backed problem"
        );
        assert_eq!(state.len(), self.dim);
        let (relaxed, dxde) = backward_relaxation(state, config);
        let mut o_grad = vec![0.0; self.dim];
        let mut b_grad = vec![0.0; self.dim];
        self.objective_grad_into(&relaxed, &mut o_grad);
        self.constraint_grad_into(&relaxed, &mut b_grad);
        for i in 0..self.dim {
            o_grad[i] *= dxde[i];
            b_grad[i] *= dxde[i];
        }
        (o_grad, b_grad)
    }
}

impl std::fmt::Debug for ConstrainedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.inner {
            Inner::Knapsack(_) => "knapsack",
            Inner::Custom { .. } => "custom",
        };
        f.debug_struct("ConstrainedProblem")
            .field("dim", &self.dim)
            .field("uses_estimator", &self.uses_estimator)
            .field("kind", &kind)
            .finish()
    }
}
