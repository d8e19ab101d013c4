//! Minimal intervention plans.
//!
//! A plan moves samples between cells of a contingency table by rewriting
//! their feature value (and, for coupled features, their answer). The
//! planner picks integer move amounts `x[m] >= 0` that
//!
//! - minimize the number of rewrites `Σ x[m]`,
//! - never draw more samples out of a cell than it can supply, and
//! - leave every balance group with a count spread of at most `ε`.
//!
//! For independent features a move keeps the answer class and changes the
//! feature value, `(y, b) -> (y, b')`, and each column is a balance group
//! over answer classes. For coupled features a move takes `(y(b), b)` to
//! `(y(b'), b')` and the group is the set of column totals.
//!
//! Among plans of minimal cost the solver prefers the one whose projected
//! table has the smallest total spread; remaining ties go to the first plan
//! found when moves are ordered by (value from, value to, class from).

mod ilp;

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Task;
use crate::features::{Coupling, FeatureSpec};
use crate::infogain::{goal_check, max_imbalance, ContingencyTable, InfoGainError};

use ilp::{branch_and_bound, Constraint, IntegerProgram};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no rewrite plan balances `{feature}` within ε = {epsilon}; minimum feasible ε is {min_epsilon}")]
    Infeasible {
        feature: String,
        epsilon: u64,
        min_epsilon: u64,
    },
    #[error("feature `{0}` has a single value; there is nothing to intervene on")]
    Degenerate(String),
    #[error("table is for feature `{table}` but the spec is `{spec}`")]
    FeatureMismatch { table: String, spec: String },
    #[error(transparent)]
    Table(#[from] InfoGainError),
}

/// Move `amount` samples from cell `(answer_class_from, value_from)` to
/// `(answer_class_to, value_to)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub answer_class_from: String,
    pub answer_class_to: String,
    pub value_from: String,
    pub value_to: String,
    pub amount: u64,
    /// Samples chosen for rewriting, drawn from the source cell.
    #[serde(default)]
    pub sample_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub task: Task,
    pub feature: String,
    pub coupling: Coupling,
    /// Requested tolerance.
    pub epsilon: u64,
    /// Tolerance the projected table actually meets; larger than
    /// `epsilon` only for best-effort plans.
    pub effective_epsilon: u64,
    pub best_effort: bool,
    pub seed: u64,
    pub cost: u64,
    pub flows: Vec<Flow>,
    pub source_table: ContingencyTable,
    pub projected_table: ContingencyTable,
}

impl InterventionPlan {
    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn selected_ids(&self) -> impl Iterator<Item = &str> {
        self.flows.iter().flat_map(|f| f.sample_ids.iter().map(String::as_str))
    }

    /// True when every flow has its full complement of sample ids.
    pub fn is_fully_selected(&self) -> bool {
        self.flows.iter().all(|f| f.sample_ids.len() as u64 == f.amount)
    }
}

type Cell = (usize, usize);

/// Table indices sorted by their position in the spec; names the spec
/// does not declare keep their table order after the declared ones.
fn declared_order(names: &[String], rank: impl Fn(&str) -> Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..names.len()).collect();
    idx.sort_by_key(|&i| (rank(&names[i]).unwrap_or(usize::MAX), i));
    idx
}

#[derive(Debug, Clone, Copy)]
struct Move {
    from: Cell,
    to: Cell,
}

/// The integer program's structure for one table.
struct BalanceModel {
    moves: Vec<Move>,
    // each group is a list of aggregates; each aggregate a list of cells
    groups: Vec<Vec<Vec<Cell>>>,
    counts: Vec<Vec<u64>>,
    capacity: Vec<Vec<u64>>,
}

impl BalanceModel {
    /// Moves are listed in the spec's declared value and class order, so
    /// ties between equal-cost plans do not depend on the table layout.
    fn new(t: &ContingencyTable, spec: &FeatureSpec, capacity: Vec<Vec<u64>>) -> Self {
        let (ys, bs) = (t.rows(), t.cols());
        let values = declared_order(t.feature_values(), |v| spec.value_index(v));
        let classes = declared_order(t.answer_classes(), |c| spec.class_index(c));
        let mut moves = Vec::new();
        let groups = match t.coupling() {
            Coupling::Independent => {
                for &b in &values {
                    for &b2 in values.iter().filter(|&&b2| b2 != b) {
                        for &y in &classes {
                            moves.push(Move {
                                from: (y, b),
                                to: (y, b2),
                            });
                        }
                    }
                }
                (0..bs).map(|b| (0..ys).map(|y| vec![(y, b)]).collect()).collect()
            }
            Coupling::AnswerEqualsFeature => {
                for &b in &values {
                    for &b2 in values.iter().filter(|&&b2| b2 != b) {
                        moves.push(Move {
                            from: (b, b),
                            to: (b2, b2),
                        });
                    }
                }
                vec![(0..bs).map(|b| (0..ys).map(|y| (y, b)).collect()).collect()]
            }
        };
        Self {
            moves,
            groups,
            counts: t.counts().to_vec(),
            capacity,
        }
    }

    fn aggregate_base(&self, agg: &[Cell]) -> f64 {
        agg.iter().map(|&(y, b)| self.counts[y][b] as f64).sum()
    }

    fn aggregate_coeffs(&self, agg: &[Cell]) -> Vec<f64> {
        self.moves
            .iter()
            .map(|m| {
                let mut c = 0.0;
                if agg.contains(&m.to) {
                    c += 1.0;
                }
                if agg.contains(&m.from) {
                    c -= 1.0;
                }
                c
            })
            .collect()
    }

    /// Capacity rows and pairwise spread rows over the first `width`
    /// variables (the moves), padded with zeros to `width`.
    fn base_constraints(&self, epsilon: u64, width: usize) -> Vec<Constraint> {
        let nm = self.moves.len();
        let mut rows = Vec::new();
        let mut sources: Vec<Cell> = self.moves.iter().map(|m| m.from).collect();
        sources.sort_unstable();
        sources.dedup();
        for src in sources {
            let mut coeffs = vec![0.0; width];
            for (i, m) in self.moves.iter().enumerate() {
                if m.from == src {
                    coeffs[i] = 1.0;
                }
            }
            rows.push(Constraint::new(coeffs, self.capacity[src.0][src.1] as f64));
        }
        for group in &self.groups {
            let bases: Vec<f64> = group.iter().map(|a| self.aggregate_base(a)).collect();
            let coeffs: Vec<Vec<f64>> = group.iter().map(|a| self.aggregate_coeffs(a)).collect();
            for i in 0..group.len() {
                for j in (0..group.len()).filter(|&j| j != i) {
                    let mut row = vec![0.0; width];
                    for k in 0..nm {
                        row[k] = coeffs[i][k] - coeffs[j][k];
                    }
                    if row.iter().all(|&v| v == 0.0) && bases[i] - bases[j] <= epsilon as f64 {
                        continue;
                    }
                    rows.push(Constraint::new(row, epsilon as f64 - bases[i] + bases[j]));
                }
            }
        }
        rows
    }

    fn upper_bounds(&self) -> Vec<f64> {
        self.moves
            .iter()
            .map(|m| self.capacity[m.from.0][m.from.1] as f64)
            .collect()
    }

    /// Minimal-cost move amounts, or `None` when no integer plan exists.
    fn solve(&self, epsilon: u64) -> Option<Vec<u64>> {
        let nm = self.moves.len();
        let stage1 = IntegerProgram {
            objective: vec![1.0; nm],
            constraints: self.base_constraints(epsilon, nm),
            integer_vars: nm,
            upper: self.upper_bounds(),
            integral_objective: true,
        };
        let first = branch_and_bound(&stage1)?;
        let cost = first.value.round();
        if cost == 0.0 || epsilon == 0 {
            return Some(to_amounts(&first.x[..nm]));
        }

        // among minimal-cost plans, minimize Σ_g (hi_g - lo_g)
        let ng = self.groups.len();
        let width = nm + 2 * ng;
        let mut constraints = self.base_constraints(epsilon, width);
        let mut budget = vec![0.0; width];
        budget[..nm].iter_mut().for_each(|v| *v = 1.0);
        constraints.push(Constraint::new(budget, cost));
        let mut objective = vec![0.0; width];
        for (g, group) in self.groups.iter().enumerate() {
            let (hi, lo) = (nm + 2 * g, nm + 2 * g + 1);
            objective[hi] = 1.0;
            objective[lo] = -1.0;
            for agg in group {
                let base = self.aggregate_base(agg);
                let coeffs = self.aggregate_coeffs(agg);
                // agg <= hi
                let mut row = vec![0.0; width];
                row[..nm].copy_from_slice(&coeffs);
                row[hi] = -1.0;
                constraints.push(Constraint::new(row, -base));
                // lo <= agg
                let mut row = vec![0.0; width];
                row[..nm].iter_mut().zip(&coeffs).for_each(|(r, c)| *r = -c);
                row[lo] = 1.0;
                constraints.push(Constraint::new(row, base));
            }
        }
        let stage2 = IntegerProgram {
            objective,
            constraints,
            integer_vars: nm,
            upper: self.upper_bounds(),
            integral_objective: true,
        };
        let second = branch_and_bound(&stage2).unwrap_or(first);
        Some(to_amounts(&second.x[..nm]))
    }
}

fn to_amounts(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.round().max(0.0) as u64).collect()
}

fn check_inputs(t: &ContingencyTable, spec: &FeatureSpec) -> Result<(), PlanError> {
    if t.feature() != spec.name {
        return Err(PlanError::FeatureMismatch {
            table: t.feature().to_string(),
            spec: spec.name.clone(),
        });
    }
    if t.total() == 0 {
        return Err(InfoGainError::EmptyTable.into());
    }
    Ok(())
}

/// Per-cell counts minus frozen members, when membership is known.
fn capacities(t: &ContingencyTable, frozen: &HashSet<String>) -> Vec<Vec<u64>> {
    match t.members() {
        Some(members) if !frozen.is_empty() => members
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| cell.iter().filter(|id| !frozen.contains(*id)).count() as u64)
                    .collect()
            })
            .collect(),
        _ => t.counts().to_vec(),
    }
}

/// Smallest ε at which an independent table can be balanced at all.
///
/// Rewrites preserve row totals, and balanced columns force the row totals
/// to differ by at most `|B|·ε`; spreading each row as evenly as possible
/// shows that bound is also achievable.
fn independent_min_epsilon(t: &ContingencyTable) -> u64 {
    let rows = t.row_totals();
    let gap = rows.iter().max().unwrap_or(&0) - rows.iter().min().unwrap_or(&0);
    gap.div_ceil(t.cols() as u64)
}

fn search_min_epsilon(model: &BalanceModel, from: u64, upto: u64) -> u64 {
    (from..=upto).find(|&e| model.solve(e).is_some()).unwrap_or(upto)
}

/// Computes a minimal rewrite plan for `t` that meets `goal_check(ε)`.
///
/// Sample ids are drawn uniformly at random from each source cell under
/// `seed` when `t` carries cell membership (tables built by
/// [`tabulate`](crate::infogain::tabulate) do).
pub fn plan(t: &ContingencyTable, spec: &FeatureSpec, epsilon: u64, seed: u64) -> Result<InterventionPlan, PlanError> {
    check_inputs(t, spec)?;
    if t.cols() < 2 {
        return Err(PlanError::Degenerate(spec.name.clone()));
    }
    let current = max_imbalance(t);
    if current <= epsilon {
        return Ok(empty_plan(t, spec, epsilon, epsilon, false, seed));
    }
    let infeasible = |min_epsilon| PlanError::Infeasible {
        feature: spec.name.clone(),
        epsilon,
        min_epsilon,
    };
    let model = BalanceModel::new(t, spec, t.counts().to_vec());
    if t.coupling() == Coupling::Independent {
        let min_eps = independent_min_epsilon(t);
        if epsilon < min_eps {
            return Err(infeasible(min_eps));
        }
    }
    match model.solve(epsilon) {
        Some(amounts) => build_plan(
            t,
            spec,
            &model,
            &amounts,
            epsilon,
            epsilon,
            false,
            seed,
            &HashSet::new(),
        ),
        None => Err(infeasible(search_min_epsilon(&model, epsilon + 1, current))),
    }
}

/// Plans over what is left after a rewrite pass, never selecting frozen
/// samples. When the residual cannot be balanced within ε under freezing,
/// the result is the cheapest plan at the smallest reachable tolerance and
/// is flagged `best_effort`.
pub fn replan_residual(
    t_actual: &ContingencyTable,
    spec: &FeatureSpec,
    epsilon: u64,
    frozen: &HashSet<String>,
    seed: u64,
) -> InterventionPlan {
    let current = max_imbalance(t_actual);
    if current <= epsilon {
        return empty_plan(t_actual, spec, epsilon, epsilon, false, seed);
    }
    if check_inputs(t_actual, spec).is_err() || t_actual.cols() < 2 {
        return empty_plan(t_actual, spec, epsilon, current, true, seed);
    }
    let model = BalanceModel::new(t_actual, spec, capacities(t_actual, frozen));
    let (effective, amounts) = match model.solve(epsilon) {
        Some(a) => (epsilon, a),
        None => {
            let e = search_min_epsilon(&model, epsilon + 1, current);
            (e, model.solve(e).unwrap_or_else(|| vec![0; model.moves.len()]))
        }
    };
    build_plan(
        t_actual,
        spec,
        &model,
        &amounts,
        epsilon,
        effective,
        effective > epsilon,
        seed,
        frozen,
    )
    .unwrap_or_else(|_| empty_plan(t_actual, spec, epsilon, current, true, seed))
}

fn empty_plan(
    t: &ContingencyTable,
    spec: &FeatureSpec,
    epsilon: u64,
    effective: u64,
    best_effort: bool,
    seed: u64,
) -> InterventionPlan {
    InterventionPlan {
        task: spec.task,
        feature: spec.name.clone(),
        coupling: t.coupling(),
        epsilon,
        effective_epsilon: effective,
        best_effort,
        seed,
        cost: 0,
        flows: Vec::new(),
        source_table: t.clone(),
        projected_table: t.clone(),
    }
}

#[allow(clippy::too_many_arguments)]
fn build_plan(
    t: &ContingencyTable,
    spec: &FeatureSpec,
    model: &BalanceModel,
    amounts: &[u64],
    epsilon: u64,
    effective: u64,
    best_effort: bool,
    seed: u64,
    frozen: &HashSet<String>,
) -> Result<InterventionPlan, PlanError> {
    let classes = t.answer_classes();
    let values = t.feature_values();
    let mut flows: Vec<Flow> = model
        .moves
        .iter()
        .zip(amounts)
        .filter(|(_, &a)| a > 0)
        .map(|(m, &amount)| Flow {
            answer_class_from: classes[m.from.0].clone(),
            answer_class_to: classes[m.to.0].clone(),
            value_from: values[m.from.1].clone(),
            value_to: values[m.to.1].clone(),
            amount,
            sample_ids: Vec::new(),
        })
        .collect();
    select_samples(t, &mut flows, seed, frozen);
    let projected_table = apply_flows(t, &flows)?;
    Ok(InterventionPlan {
        task: spec.task,
        feature: spec.name.clone(),
        coupling: t.coupling(),
        epsilon,
        effective_epsilon: effective,
        best_effort,
        seed,
        cost: flows.iter().map(|f| f.amount).sum(),
        flows,
        source_table: t.clone(),
        projected_table,
    })
}

fn select_samples(t: &ContingencyTable, flows: &mut [Flow], seed: u64, frozen: &HashSet<String>) {
    let Some(members) = t.members() else {
        return;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: HashSet<String> = HashSet::new();
    for flow in flows.iter_mut() {
        let (Some(y), Some(b)) = (t.class_index(&flow.answer_class_from), t.value_index(&flow.value_from)) else {
            continue;
        };
        let pool: Vec<&String> = members[y][b]
            .iter()
            .filter(|id| !frozen.contains(*id) && !taken.contains(*id))
            .collect();
        let amount = (flow.amount as usize).min(pool.len());
        let mut picks: Vec<usize> = index::sample(&mut rng, pool.len(), amount).into_vec();
        picks.sort_unstable();
        flow.sample_ids = picks.into_iter().map(|i| pool[i].clone()).collect();
        taken.extend(flow.sample_ids.iter().cloned());
    }
}

/// Applies flows to a table's counts, failing on unknown labels or when a
/// cell would go negative.
pub fn apply_flows(t: &ContingencyTable, flows: &[Flow]) -> Result<ContingencyTable, PlanError> {
    let mut counts = t.counts().to_vec();
    let shape = |msg: String| PlanError::Table(InfoGainError::Shape(msg));
    for f in flows {
        let lookup = |class: &str, value: &str| {
            t.class_index(class)
                .zip(t.value_index(value))
                .ok_or_else(|| shape(format!("unknown cell ({class}, {value})")))
        };
        let (y, b) = lookup(&f.answer_class_from, &f.value_from)?;
        let (y2, b2) = lookup(&f.answer_class_to, &f.value_to)?;
        counts[y][b] = counts[y][b]
            .checked_sub(f.amount)
            .ok_or_else(|| shape(format!("flow drains cell ({y}, {b}) below zero")))?;
        counts[y2][b2] += f.amount;
    }
    Ok(t.with_counts(counts)?)
}

/// Recomputes a plan from scratch against `t` and reports whether it is
/// internally consistent and meets `goal_check(ε)`.
pub fn verify_plan(t: &ContingencyTable, p: &InterventionPlan, epsilon: u64) -> bool {
    if p.feature != t.feature() || p.coupling != t.coupling() {
        return false;
    }
    let mut outflow = vec![vec![0u64; t.cols()]; t.rows()];
    let mut seen_ids = BTreeSet::new();
    for f in &p.flows {
        if f.amount == 0 {
            return false;
        }
        let (Some(y), Some(b), Some(y2), Some(b2)) = (
            t.class_index(&f.answer_class_from),
            t.value_index(&f.value_from),
            t.class_index(&f.answer_class_to),
            t.value_index(&f.value_to),
        ) else {
            return false;
        };
        let direction_ok = match t.coupling() {
            Coupling::Independent => y == y2 && b != b2,
            Coupling::AnswerEqualsFeature => y == b && y2 == b2 && b != b2,
        };
        if !direction_ok {
            return false;
        }
        outflow[y][b] += f.amount;
        if outflow[y][b] > t.count(y, b) {
            return false;
        }
        if !f.sample_ids.is_empty() {
            if f.sample_ids.len() as u64 != f.amount {
                return false;
            }
            for id in &f.sample_ids {
                if !seen_ids.insert(id.as_str()) {
                    return false;
                }
                if let Some(members) = t.members() {
                    if !members[y][b].contains(id) {
                        return false;
                    }
                }
            }
        }
    }
    if p.cost != p.flows.iter().map(|f| f.amount).sum::<u64>() {
        return false;
    }
    let Ok(projected) = apply_flows(t, &p.flows) else {
        return false;
    };
    if projected != p.projected_table {
        return false;
    }
    goal_check(&projected, epsilon).is_ok_and(|r| r.goal_met)
}
