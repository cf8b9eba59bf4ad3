//! Ground-truth and baseline knapsack solvers for verification: exhaustive
//! search, exact dynamic programming, the ratio greedy, and the fractional
//! (Dantzig) upper bound.
//!
//! All tie-breaking is fully specified so results are deterministic:
//! exhaustive search prefers higher value, then lower cost, then the
//! lexicographically smallest selection; the ratio orderings break ties by
//! lower item index.

use serde::Serialize;
use thiserror::Error;

use crate::instance::KnapsackInstance;

/// Default limit on `n * (floor(B) + 1)` dynamic-programming cells
/// (one backtracking bit each): 2^31 cells = 256 MiB.
pub const DEFAULT_DP_CELL_CAP: u64 = 1 << 31;

/// Largest item count [`brute_force`] accepts.
pub const BRUTE_FORCE_MAX_ITEMS: usize = 25;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("brute force refuses n = {n} items (limit {limit})")]
    TooManyItems { n: usize, limit: usize },
    #[error("dynamic programming requires integer costs; item {index} has cost {cost}")]
    NonIntegerCost { index: usize, cost: f64 },
    #[error("dynamic programming table needs {required} cells, cap is {cap}")]
    CapExceeded { required: u64, cap: u64 },
}

/// Which oracle produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BruteForce,
    DpExact,
    Greedy,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BruteForce => "brute_force",
            Method::DpExact => "dp_exact",
            Method::Greedy => "greedy",
        }
    }
}

/// A selection found by an oracle, with its objective and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub selection: Vec<bool>,
    pub objective: f64,
    pub cost: f64,
    pub method: Method,
}

impl OracleResult {
    fn from_mask(instance: &KnapsackInstance, mask: u64, method: Method) -> Self {
        let selection: Vec<bool> = (0..instance.n()).map(|i| mask >> i & 1 == 1).collect();
        let (objective, cost) = instance.evaluate(&selection);
        OracleResult {
            selection,
            objective,
            cost,
            method,
        }
    }
}

/// True when candidate `a` beats `b`: higher value, then lower cost, then
/// lexicographically smaller selection (first differing item unselected).
fn mask_beats(a: (f64, f64, u64), b: (f64, f64, u64), n: usize) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if a.1 != b.1 {
        return a.1 < b.1;
    }
    for i in 0..n {
        let (ai, bi) = (a.2 >> i & 1, b.2 >> i & 1);
        if ai != bi {
            return ai < bi;
        }
    }
    false
}

fn best_mask_in_range(
    instance: &KnapsackInstance,
    range: std::ops::Range<u64>,
) -> (f64, f64, u64) {
    let values = instance.values();
    let costs = instance.costs();
    let budget = instance.budget();
    let n = instance.n();
    // The empty selection is always feasible; start from a sentinel that
    // anything feasible (including the real empty mask) beats.
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, u64::MAX);
    for mask in range {
        let mut value = 0.0;
        let mut cost = 0.0;
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            value += values[i];
            cost += costs[i];
            bits &= bits - 1;
        }
        if cost <= budget && mask_beats((value, cost, mask), best, n) {
            best = (value, cost, mask);
        }
    }
    best
}

/// Exhaustive maximization over all `2^n` subsets. Refuses instances with
/// more than [`BRUTE_FORCE_MAX_ITEMS`] items.
pub fn brute_force(instance: &KnapsackInstance) -> Result<OracleResult, OracleError> {
    let n = instance.n();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(OracleError::TooManyItems {
            n,
            limit: BRUTE_FORCE_MAX_ITEMS,
        });
    }
    let total: u64 = 1 << n;

    #[cfg(feature = "parallel")]
    let best = {
        use rayon::prelude::*;
        const SPAN: u64 = 1 << 16;
        let ranges: Vec<std::ops::Range<u64>> = (0..total.div_ceil(SPAN))
            .map(|k| k * SPAN..total.min((k + 1) * SPAN))
            .collect();
        ranges
            .into_par_iter()
            .map(|r| best_mask_in_range(instance, r))
            .reduce(
                || (f64::NEG_INFINITY, f64::INFINITY, u64::MAX),
                |a, b| if mask_beats(b, a, n) { b } else { a },
            )
    };
    #[cfg(not(feature = "parallel"))]
    let best = best_mask_in_range(instance, 0..total);

    Ok(OracleResult::from_mask(instance, best.2, Method::BruteForce))
}

/// Exact optimum by dynamic programming over integer costs, `O(n * B)`
/// with backtracking for the selection. Uses [`DEFAULT_DP_CELL_CAP`].
pub fn dp_exact(instance: &KnapsackInstance) -> Result<OracleResult, OracleError> {
    dp_exact_with_cap(instance, DEFAULT_DP_CELL_CAP)
}

/// [`dp_exact`] with an explicit cell cap.
pub fn dp_exact_with_cap(
    instance: &KnapsackInstance,
    cell_cap: u64,
) -> Result<OracleResult, OracleError> {
    let n = instance.n();
    let costs = instance.costs();
    let values = instance.values();
    for (i, &c) in costs.iter().enumerate() {
        if c.fract() != 0.0 {
            return Err(OracleError::NonIntegerCost { index: i, cost: c });
        }
    }
    let capacity = instance.budget().floor() as usize;
    let width = capacity + 1;
    let required = n as u64 * width as u64;
    if required > cell_cap {
        return Err(OracleError::CapExceeded {
            required,
            cap: cell_cap,
        });
    }

    let mut best = vec![0.0f64; width];
    let mut keep = vec![false; n * width];
    for i in 0..n {
        let c = costs[i] as usize;
        if c > capacity {
            continue;
        }
        let v = values[i];
        let row = i * width;
        for cap in (c..width).rev() {
            let candidate = best[cap - c] + v;
            if candidate > best[cap] {
                best[cap] = candidate;
                keep[row + cap] = true;
            }
        }
    }

    let mut selection = vec![false; n];
    let mut cap = capacity;
    for i in (0..n).rev() {
        if keep[i * width + cap] {
            selection[i] = true;
            cap -= costs[i] as usize;
        }
    }
    let (objective, cost) = instance.evaluate(&selection);
    debug_assert_eq!(objective, best[capacity]);
    Ok(OracleResult {
        selection,
        objective,
        cost,
        method: Method::DpExact,
    })
}

/// How the greedy treats an item that no longer fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyMode {
    /// Keep scanning lower-ranked items that still fit (the default; never
    /// worse than stopping).
    SkipAndContinue,
    /// Stop at the first item that does not fit.
    StopAtFirstMisfit,
}

/// Item indices sorted by descending value/cost ratio, ties by lower index.
/// Ratios are compared by cross-multiplication, so no division is involved.
fn ratio_order(instance: &KnapsackInstance) -> Vec<usize> {
    let values = instance.values();
    let costs = instance.costs();
    let mut order: Vec<usize> = (0..instance.n()).collect();
    order.sort_by(|&i, &j| {
        let left = values[i] * costs[j];
        let right = values[j] * costs[i];
        right
            .partial_cmp(&left)
            .unwrap()
            .then_with(|| i.cmp(&j))
    });
    order
}

/// Ratio greedy with the given misfit mode.
pub fn greedy_with_mode(instance: &KnapsackInstance, mode: GreedyMode) -> OracleResult {
    let costs = instance.costs();
    let mut selection = vec![false; instance.n()];
    let mut remaining = instance.budget();
    for i in ratio_order(instance) {
        if costs[i] <= remaining {
            selection[i] = true;
            remaining -= costs[i];
        } else if mode == GreedyMode::StopAtFirstMisfit {
            break;
        }
    }
    let (objective, cost) = instance.evaluate(&selection);
    OracleResult {
        selection,
        objective,
        cost,
        method: Method::Greedy,
    }
}

/// Ratio greedy: scan items by descending value/cost, take whatever still
/// fits the remaining budget.
pub fn greedy(instance: &KnapsackInstance) -> OracleResult {
    greedy_with_mode(instance, GreedyMode::SkipAndContinue)
}

/// Fractional-relaxation upper bound: the ratio-greedy prefix plus the
/// fractional share of the first item that does not fit. Upper-bounds every
/// feasible 0-1 objective.
pub fn dantzig_bound(instance: &KnapsackInstance) -> f64 {
    let values = instance.values();
    let costs = instance.costs();
    let mut remaining = instance.budget();
    let mut bound = 0.0;
    for i in ratio_order(instance) {
        if costs[i] <= remaining {
            bound += values[i];
            remaining -= costs[i];
        } else {
            bound += values[i] * remaining / costs[i];
            break;
        }
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> KnapsackInstance {
        KnapsackInstance::new(vec![6.0, 10.0, 12.0], vec![1.0, 2.0, 3.0], 5.0).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, r: u64) -> KnapsackInstance {
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=r) as f64).collect();
        let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=r) as f64).collect();
        let total: f64 = costs.iter().sum();
        let budget = (0.5 * total).ceil().max(1.0);
        KnapsackInstance::new(values, costs, budget).unwrap()
    }

    #[test]
    fn brute_force_small_instance() {
        let res = brute_force(&small()).unwrap();
        assert_eq!(res.objective, 22.0);
        assert_eq!(res.selection, vec![false, true, true]);
        assert_eq!(res.cost, 5.0);
    }

    #[test]
    fn brute_force_all_fit() {
        let inst = KnapsackInstance::new(vec![1.0, 2.0], vec![3.0, 4.0], 100.0).unwrap();
        let res = brute_force(&inst).unwrap();
        assert_eq!(res.objective, 3.0);
        assert_eq!(res.selection, vec![true, true]);
    }

    #[test]
    fn brute_force_nothing_fits() {
        let inst = KnapsackInstance::new(vec![5.0], vec![10.0], 1.0).unwrap();
        let res = brute_force(&inst).unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.selection, vec![false]);
        assert_eq!(res.cost, 0.0);
    }

    #[test]
    fn brute_force_tie_prefers_lower_cost() {
        // Items 0 and 1 have equal value; item 1 is cheaper.
        let inst = KnapsackInstance::new(vec![5.0, 5.0], vec![3.0, 2.0], 3.0).unwrap();
        let res = brute_force(&inst).unwrap();
        assert_eq!(res.objective, 5.0);
        assert_eq!(res.selection, vec![false, true]);
    }

    #[test]
    fn brute_force_tie_prefers_lex_smallest() {
        // Two identical items, budget fits exactly one: equal value, equal
        // cost; [0,1] is lexicographically smaller than [1,0].
        let inst = KnapsackInstance::new(vec![5.0, 5.0], vec![2.0, 2.0], 3.0).unwrap();
        let res = brute_force(&inst).unwrap();
        assert_eq!(res.selection, vec![false, true]);
    }

    #[test]
    fn brute_force_refuses_large_n() {
        let n = 26;
        let inst =
            KnapsackInstance::new(vec![1.0; n], vec![1.0; n], 5.0).unwrap();
        assert!(matches!(
            brute_force(&inst).unwrap_err(),
            OracleError::TooManyItems { n: 26, .. }
        ));
    }

    #[test]
    fn dp_small_instance() {
        let res = dp_exact(&small()).unwrap();
        assert_eq!(res.objective, 22.0);
        assert_eq!(res.cost, 5.0);
    }

    #[test]
    fn dp_rejects_fractional_costs() {
        let inst = KnapsackInstance::new(vec![1.0], vec![1.5], 2.0).unwrap();
        assert!(matches!(
            dp_exact(&inst).unwrap_err(),
            OracleError::NonIntegerCost { index: 0, .. }
        ));
    }

    #[test]
    fn dp_respects_cap() {
        let inst = small();
        assert!(matches!(
            dp_exact_with_cap(&inst, 10).unwrap_err(),
            OracleError::CapExceeded { .. }
        ));
    }

    #[test]
    fn dp_budget_below_all_costs() {
        let inst = KnapsackInstance::new(vec![4.0, 7.0], vec![2.0, 3.0], 1.0).unwrap();
        let res = dp_exact(&inst).unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.selection, vec![false, false]);
    }

    #[test]
    fn dp_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..100 {
            let n = rng.gen_range(1..=20);
            let inst = random_instance(&mut rng, n, 50);
            let bf = brute_force(&inst).unwrap();
            let dp = dp_exact(&inst).unwrap();
            assert_eq!(bf.objective, dp.objective, "trial {trial}: {inst:?}");
            assert!(dp.cost <= inst.budget());
        }
    }

    #[test]
    fn greedy_small_instance() {
        // Ratios 6, 5, 4: takes items 0 and 1 (cost 3), item 2 does not fit.
        let res = greedy(&small());
        assert_eq!(res.objective, 16.0);
        assert_eq!(res.cost, 3.0);
        assert_eq!(res.selection, vec![true, true, false]);
    }

    #[test]
    fn greedy_takes_everything_under_large_budget() {
        let inst = KnapsackInstance::new(vec![6.0, 10.0, 12.0], vec![1.0, 2.0, 3.0], 6.0).unwrap();
        let res = greedy(&inst);
        assert_eq!(res.objective, 28.0);
    }

    #[test]
    fn greedy_tie_takes_lower_index() {
        let inst = KnapsackInstance::new(vec![5.0, 5.0], vec![2.0, 2.0], 3.0).unwrap();
        let res = greedy(&inst);
        assert_eq!(res.selection, vec![true, false]);
    }

    #[test]
    fn greedy_skip_beats_stop() {
        // After the big item misses, the skip variant still takes item 2.
        let inst =
            KnapsackInstance::new(vec![10.0, 9.0, 3.0], vec![2.0, 5.0, 3.0], 5.0).unwrap();
        let skip = greedy_with_mode(&inst, GreedyMode::SkipAndContinue);
        let stop = greedy_with_mode(&inst, GreedyMode::StopAtFirstMisfit);
        assert_eq!(skip.objective, 13.0);
        assert_eq!(stop.objective, 10.0);
        assert!(skip.objective >= stop.objective);
    }

    #[test]
    fn dantzig_small_instance() {
        // Prefix items 0,1 then 2/3 of item 2: 16 + 8 = 24.
        assert_eq!(dantzig_bound(&small()), 24.0);
    }

    #[test]
    fn dantzig_all_fit() {
        let inst = KnapsackInstance::new(vec![6.0, 10.0, 12.0], vec![1.0, 2.0, 3.0], 6.0).unwrap();
        assert_eq!(dantzig_bound(&inst), 28.0);
    }

    #[test]
    fn oracle_chain_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n = rng.gen_range(1..=20);
            let inst = random_instance(&mut rng, n, 30);
            let g = greedy(&inst).objective;
            let d = dp_exact(&inst).unwrap().objective;
            let bound = dantzig_bound(&inst);
            let bf = brute_force(&inst).unwrap().objective;
            assert!(g <= d);
            assert!(d <= bound + 1e-9);
            assert!(bf <= bound + 1e-9);
            assert!(g <= bf);
        }
    }
}
