//! Knapsack instances: representation, validation, benchmark-family
//! generation, and CSV file I/O.
//!
//! Generation is fully deterministic: each [`GeneratorSpec`] carries a
//! 64-bit seed feeding a ChaCha8 stream (`rand_chacha::ChaCha8Rng`), and
//! the draw order per item is fixed, so the same spec reproduces the same
//! instance bit for bit on every platform.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Validation and I/O errors for knapsack instances.
#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("values and costs have different lengths ({values} vs {costs})")]
    LengthMismatch { values: usize, costs: usize },
    #[error("instance has no items")]
    NoItems,
    #[error("non-positive value {value} at item {index}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("non-positive cost {cost} at item {index}")]
    NonPositiveCost { index: usize, cost: f64 },
    #[error("non-positive budget {0}")]
    NonPositiveBudget(f64),
    #[error("coefficient range R must be at least 10, got {0}")]
    RangeTooSmall(u64),
    #[error("budget fraction must be in (0, 1], got {0}")]
    BadBudgetFraction(f64),
    #[error("spanner parameters must be at least 1, got span({size},{multiplier})")]
    BadSpanner { size: u64, multiplier: u64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A validated 0-1 knapsack instance: item values, item costs, and a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    values: Vec<f64>,
    costs: Vec<f64>,
    budget: f64,
}

impl KnapsackInstance {
    /// Builds an instance, rejecting empty or mismatched arrays and
    /// non-positive entries or budget.
    pub fn new(values: Vec<f64>, costs: Vec<f64>, budget: f64) -> Result<Self, InstanceError> {
        if values.len() != costs.len() {
            return Err(InstanceError::LengthMismatch {
                values: values.len(),
                costs: costs.len(),
            });
        }
        if values.is_empty() {
            return Err(InstanceError::NoItems);
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(InstanceError::NonPositiveValue { index: i, value: v });
            }
        }
        for (i, &c) in costs.iter().enumerate() {
            if !(c > 0.0) || !c.is_finite() {
                return Err(InstanceError::NonPositiveCost { index: i, cost: c });
            }
        }
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(InstanceError::NonPositiveBudget(budget));
        }
        Ok(Self {
            values,
            costs,
            budget,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Sum of all item costs.
    pub fn cost_sum(&self) -> f64 {
        crate::kernels::sum(&self.costs)
    }

    /// Sum of all item values.
    pub fn value_sum(&self) -> f64 {
        crate::kernels::sum(&self.values)
    }

    /// True when every value and cost is an integer-valued real, as all
    /// generated benchmark instances are. The DP oracle requires this for
    /// costs.
    pub fn is_integer_valued(&self) -> bool {
        self.values
            .iter()
            .chain(self.costs.iter())
            .all(|x| x.fract() == 0.0)
    }

    /// Total value and total cost of a selection.
    pub fn evaluate(&self, selection: &[bool]) -> (f64, f64) {
        assert_eq!(selection.len(), self.n());
        let mut value = 0.0;
        let mut cost = 0.0;
        for (i, &take) in selection.iter().enumerate() {
            if take {
                value += self.values[i];
                cost += self.costs[i];
            }
        }
        (value, cost)
    }
}

/// The four benchmark correlation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Values and costs drawn independently and uniformly from `[1, R]`.
    Uncorrelated,
    /// Value drawn uniformly within `R/10` of the cost.
    WeaklyCorrelated,
    /// Value is exactly cost plus `R/10`.
    StronglyCorrelated,
    /// Value drawn uniformly from `[1, R]`, cost is value plus `R/10`.
    InverseStronglyCorrelated,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Uncorrelated,
        Family::WeaklyCorrelated,
        Family::StronglyCorrelated,
        Family::InverseStronglyCorrelated,
    ];

    /// Kebab-case name used by the CLI and reports.
    pub fn name(self) -> &'static str {
        match self {
            Family::Uncorrelated => "uncorrelated",
            Family::WeaklyCorrelated => "weakly-correlated",
            Family::StronglyCorrelated => "strongly-correlated",
            Family::InverseStronglyCorrelated => "inverse-strongly-correlated",
        }
    }

    pub fn parse(name: &str) -> Option<Family> {
        match name {
            "uncorrelated" => Some(Family::Uncorrelated),
            "weakly-correlated" | "weakly_correlated" => Some(Family::WeaklyCorrelated),
            "strongly-correlated" | "strongly_correlated" => Some(Family::StronglyCorrelated),
            "inverse-strongly-correlated" | "inverse_strongly_correlated" => {
                Some(Family::InverseStronglyCorrelated)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Spanner variant parameters: all emitted items are integer multiples of
/// a small base set of `size` (value, cost) pairs, with multipliers drawn
/// from `[1, multiplier]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpannerSpec {
    pub size: u64,
    pub multiplier: u64,
}

/// Full description of a benchmark instance to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub spanner: Option<SpannerSpec>,
    pub n: usize,
    /// Coefficient range R; costs and values are drawn from `[1, R]`.
    pub coeff_range: u64,
    /// Budget as a fraction of the total cost, in `(0, 1]`.
    pub budget_fraction: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize, coeff_range: u64, seed: u64) -> Self {
        Self {
            family,
            spanner: None,
            n,
            coeff_range,
            budget_fraction: 0.5,
            seed,
        }
    }

    pub fn with_spanner(mut self, size: u64, multiplier: u64) -> Self {
        self.spanner = Some(SpannerSpec { size, multiplier });
        self
    }

    pub fn with_budget_fraction(mut self, fraction: f64) -> Self {
        self.budget_fraction = fraction;
        self
    }

    fn validate(&self) -> Result<(), InstanceError> {
        if self.n == 0 {
            return Err(InstanceError::NoItems);
        }
        if self.coeff_range < 10 {
            return Err(InstanceError::RangeTooSmall(self.coeff_range));
        }
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return Err(InstanceError::BadBudgetFraction(self.budget_fraction));
        }
        if let Some(sp) = self.spanner {
            if sp.size < 1 || sp.multiplier < 1 {
                return Err(InstanceError::BadSpanner {
                    size: sp.size,
                    multiplier: sp.multiplier,
                });
            }
        }
        Ok(())
    }

    /// Short label such as `strongly-correlated-span(2,10)` for reports.
    pub fn label(&self) -> String {
        match self.spanner {
            Some(sp) => format!("{}-span({},{})", self.family.name(), sp.size, sp.multiplier),
            None => self.family.name().to_string(),
        }
    }
}

/// Draws one (value, cost) pair for the given family. The correlation band
/// is the integer `R / 10`.
fn draw_pair(family: Family, r: u64, rng: &mut ChaCha8Rng) -> (u64, u64) {
    let band = r / 10;
    match family {
        Family::Uncorrelated => {
            let c = rng.gen_range(1..=r);
            let v = rng.gen_range(1..=r);
            (v, c)
        }
        Family::WeaklyCorrelated => {
            let c = rng.gen_range(1..=r);
            let lo = c.saturating_sub(band).max(1);
            let hi = c + band;
            let v = rng.gen_range(lo..=hi);
            (v, c)
        }
        Family::StronglyCorrelated => {
            let c = rng.gen_range(1..=r);
            (c + band, c)
        }
        Family::InverseStronglyCorrelated => {
            let v = rng.gen_range(1..=r);
            (v, v + band)
        }
    }
}

/// Generates a benchmark instance from a spec.
///
/// Costs are uniform integers in `[1, R]` and values follow the family
/// rule. With a spanner variant, `size` base pairs are drawn by the family
/// rule, scaled down by `multiplier + 1` (floored, minimum 1), and every
/// emitted item is a random base pair times a random multiplier in
/// `[1, multiplier]` (the multiplier is drawn first, then the pair index).
/// The budget is `ceil(budget_fraction * total_cost)`.
pub fn generate(spec: &GeneratorSpec) -> Result<KnapsackInstance, InstanceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = spec.coeff_range;

    let mut values = Vec::with_capacity(spec.n);
    let mut costs = Vec::with_capacity(spec.n);

    match spec.spanner {
        None => {
            for _ in 0..spec.n {
                let (v, c) = draw_pair(spec.family, r, &mut rng);
                values.push(v as f64);
                costs.push(c as f64);
            }
        }
        Some(sp) => {
            let scale = sp.multiplier + 1;
            let base: Vec<(u64, u64)> = (0..sp.size)
                .map(|_| {
                    let (v, c) = draw_pair(spec.family, r, &mut rng);
                    ((v / scale).max(1), (c / scale).max(1))
                })
                .collect();
            for _ in 0..spec.n {
                let a = rng.gen_range(1..=sp.multiplier);
                let k = rng.gen_range(0..base.len());
                let (v, c) = base[k];
                values.push((a * v) as f64);
                costs.push((a * c) as f64);
            }
        }
    }

    let total_cost: f64 = crate::kernels::sum(&costs);
    let budget = (spec.budget_fraction * total_cost).ceil();
    KnapsackInstance::new(values, costs, budget)
}

/// The six-family benchmark suite: the three spanner variants followed by
/// the three plain families.
pub fn benchmark_suite(n: usize, coeff_range: u64, budget_fraction: f64, seed: u64) -> Vec<GeneratorSpec> {
    let span = |f: Family| {
        GeneratorSpec::new(f, n, coeff_range, seed)
            .with_spanner(2, 10)
            .with_budget_fraction(budget_fraction)
    };
    let plain = |f: Family| {
        GeneratorSpec::new(f, n, coeff_range, seed).with_budget_fraction(budget_fraction)
    };
    vec![
        span(Family::Uncorrelated),
        span(Family::WeaklyCorrelated),
        span(Family::StronglyCorrelated),
        plain(Family::StronglyCorrelated),
        plain(Family::InverseStronglyCorrelated),
        plain(Family::Uncorrelated),
    ]
}

/// Writes an instance in the CSV format: a `n,<n>,budget,<B>` header, then
/// one `<index>,<value>,<cost>` line per item with 1-based indices. Numbers
/// are serialized as shortest round-trippable decimal text; line endings
/// are LF.
pub fn write_instance(instance: &KnapsackInstance, path: &Path) -> Result<(), InstanceError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "n,{},budget,{}\n", instance.n(), instance.budget())?;
    for i in 0..instance.n() {
        write!(w, "{},{},{}\n", i + 1, instance.values[i], instance.costs[i])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an instance written by [`write_instance`]; `read(write(x)) == x`.
pub fn read_instance(path: &Path) -> Result<KnapsackInstance, InstanceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected header"))??;
    let fields: Vec<&str> = header.trim_end().split(',').collect();
    if fields.len() != 4 || fields[0] != "n" || fields[2] != "budget" {
        return Err(parse_err(1, "expected header `n,<n>,budget,<B>`"));
    }
    let n: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(1, "item count is not an integer"))?;
    let budget: f64 = fields[3]
        .parse()
        .map_err(|_| parse_err(1, "budget is not a number"))?;
    if n == 0 {
        return Err(InstanceError::NoItems);
    }

    let mut values = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 2;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno, "expected `<index>,<value>,<cost>`"));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, "index is not an integer"))?;
        if index != values.len() + 1 {
            return Err(parse_err(
                lineno,
                &format!("expected index {}, got {}", values.len() + 1, index),
            ));
        }
        let value: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, "value is not a number"))?;
        let cost: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, "cost is not a number"))?;
        if !(value > 0.0) {
            return Err(parse_err(lineno, &format!("non-positive value {value}")));
        }
        if !(cost > 0.0) {
            return Err(parse_err(lineno, &format!("non-positive cost {cost}")));
        }
        values.push(value);
        costs.push(cost);
    }

    if values.is_empty() {
        return Err(InstanceError::NoItems);
    }
    if values.len() != n {
        return Err(parse_err(
            values.len() + 2,
            &format!("header declares {} items, found {}", n, values.len()),
        ));
    }
    KnapsackInstance::new(values, costs, budget)
}

fn parse_err(line: usize, message: &str) -> InstanceError {
    InstanceError::Parse {
        line,
        message: message.to_string(),
    }
}
