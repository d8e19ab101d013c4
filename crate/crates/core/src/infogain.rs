//! Contingency tables over (answer class, feature value) and the
//! entropy-based dependence measures computed from them.
//!
//! Probabilities are empirical frequencies: `P(y) = N(y)/N`,
//! `P(y|b) = N(y,b)/N(b)`. All logarithms are base 2 and `0·log 0 = 0`.
//!
//! - `H(Y)   = -Σ_y P(y) log2 P(y)`
//! - `H(Y|B) = -Σ_b P(b) Σ_y P(y|b) log2 P(y|b)`
//! - `IG     = H(Y) - H(Y|B)`
//!
//! IG is zero exactly when every row of the table is proportional to every
//! other, and the count-balance condition `N(y_i, b) = N(y_j, b)` for every
//! column `b` is a sufficient way to get there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Task};
use crate::features::{Coupling, FeatureError, FeatureSpec};

/// Tolerance used when comparing information quantities.
pub const IG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InfoGainError {
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("sample `{0}` has no value for the feature")]
    MissingFeatureValue(String),
    #[error("sample `{id}` has value `{value}` outside the feature's value space")]
    UnknownFeatureValue { id: String, value: String },
    #[error(transparent)]
    AnswerClass(#[from] FeatureError),
    #[error("invalid contingency table: {0}")]
    Shape(String),
}

/// Counts `N(y, b)`: rows are answer classes, columns are feature values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct ContingencyTable {
    feature: String,
    coupling: Coupling,
    answer_classes: Vec<String>,
    feature_values: Vec<String>,
    counts: Vec<Vec<u64>>,
    total: u64,
    // sample ids per cell, present when tabulated from a dataset
    members: Option<Vec<Vec<Vec<String>>>>,
}

impl PartialEq for ContingencyTable {
    fn eq(&self, other: &Self) -> bool {
        self.feature == other.feature
            && self.coupling == other.coupling
            && self.answer_classes == other.answer_classes
            && self.feature_values == other.feature_values
            && self.counts == other.counts
    }
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    feature: String,
    #[serde(default)]
    coupling: Coupling,
    answer_classes: Vec<String>,
    feature_values: Vec<String>,
    counts: Vec<Vec<u64>>,
    total: u64,
}

impl TryFrom<TableRepr> for ContingencyTable {
    type Error = InfoGainError;

    fn try_from(r: TableRepr) -> Result<Self, Self::Error> {
        let t = ContingencyTable::new(r.feature, r.answer_classes, r.feature_values, r.counts)?
            .with_coupling(r.coupling)?;
        if t.total != r.total {
            return Err(InfoGainError::Shape(format!(
                "total {} does not match the counts ({})",
                r.total, t.total
            )));
        }
        Ok(t)
    }
}

impl From<ContingencyTable> for TableRepr {
    fn from(t: ContingencyTable) -> Self {
        TableRepr {
            feature: t.feature,
            coupling: t.coupling,
            answer_classes: t.answer_classes,
            feature_values: t.feature_values,
            counts: t.counts,
            total: t.total,
        }
    }
}

impl ContingencyTable {
    pub fn new(
        feature: impl Into<String>,
        answer_classes: Vec<String>,
        feature_values: Vec<String>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self, InfoGainError> {
        if answer_classes.is_empty() || feature_values.is_empty() {
            return Err(InfoGainError::Shape("table needs at least one row and column".into()));
        }
        if counts.len() != answer_classes.len() || counts.iter().any(|row| row.len() != feature_values.len()) {
            return Err(InfoGainError::Shape(format!(
                "counts must be {}x{}",
                answer_classes.len(),
                feature_values.len()
            )));
        }
        let total = counts.iter().flatten().sum();
        Ok(Self {
            feature: feature.into(),
            coupling: Coupling::Independent,
            answer_classes,
            feature_values,
            counts,
            total,
            members: None,
        })
    }

    /// Table with generated labels `y0..`, `b0..`; handy for numeric work.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, InfoGainError> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        Self::new(
            "feature",
            (0..rows).map(|i| format!("y{i}")).collect(),
            (0..cols).map(|j| format!("b{j}")).collect(),
            counts,
        )
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Result<Self, InfoGainError> {
        if coupling == Coupling::AnswerEqualsFeature && self.answer_classes.len() != self.feature_values.len() {
            return Err(InfoGainError::Shape(
                "coupled tables need as many answer classes as feature values".into(),
            ));
        }
        self.coupling = coupling;
        Ok(self)
    }

    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn answer_classes(&self) -> &[String] {
        &self.answer_classes
    }

    pub fn feature_values(&self) -> &[String] {
        &self.feature_values
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn count(&self, y: usize, b: usize) -> u64 {
        self.counts[y][b]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn rows(&self) -> usize {
        self.answer_classes.len()
    }

    pub fn cols(&self) -> usize {
        self.feature_values.len()
    }

    pub fn members(&self) -> Option<&[Vec<Vec<String>>]> {
        self.members.as_deref()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.cols())
            .map(|b| self.counts.iter().map(|r| r[b]).sum())
            .collect()
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.answer_classes.iter().position(|c| c == class)
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.feature_values.iter().position(|v| v == value)
    }

    /// Same labels and coupling, new counts, no membership.
    pub fn with_counts(&self, counts: Vec<Vec<u64>>) -> Result<Self, InfoGainError> {
        Self::new(
            self.feature.clone(),
            self.answer_classes.clone(),
            self.feature_values.clone(),
            counts,
        )?
        .with_coupling(self.coupling)
    }
}

/// Counts the samples of `spec.task` by (answer class, feature value).
pub fn tabulate(ds: &Dataset, spec: &FeatureSpec) -> Result<ContingencyTable, InfoGainError> {
    let rows = spec.answer_classes.len();
    let cols = spec.value_space.len();
    let mut counts = vec![vec![0u64; cols]; rows];
    let mut members = vec![vec![Vec::new(); cols]; rows];
    for sample in ds.samples_for(spec.task) {
        let value = sample
            .feature_value(&spec.name)
            .ok_or_else(|| InfoGainError::MissingFeatureValue(sample.id.clone()))?;
        let b = spec
            .value_index(value)
            .ok_or_else(|| InfoGainError::UnknownFeatureValue {
                id: sample.id.clone(),
                value: value.to_string(),
            })?;
        let class = spec.answer_class(sample, value)?;
        let y = spec.class_index(&class).expect("answer_class returns a declared class");
        counts[y][b] += 1;
        members[y][b].push(sample.id.clone());
    }
    let mut table = ContingencyTable::new(
        spec.name.clone(),
        spec.answer_classes.clone(),
        spec.value_space.clone(),
        counts,
    )?
    .with_coupling(spec.coupling)?;
    table.members = Some(members);
    Ok(table)
}

fn plogp(count: u64, total: u64) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let p = count as f64 / total as f64;
    p * p.log2()
}

fn nonempty(t: &ContingencyTable) -> Result<(), InfoGainError> {
    if t.total == 0 {
        Err(InfoGainError::EmptyTable)
    } else {
        Ok(())
    }
}

/// `H(Y)` in bits from the row marginals.
pub fn entropy_y(t: &ContingencyTable) -> Result<f64, InfoGainError> {
    nonempty(t)?;
    Ok(-t.row_totals().iter().map(|&n| plogp(n, t.total)).sum::<f64>())
}

/// `H(Y|B)` in bits; empty columns contribute nothing.
pub fn conditional_entropy(t: &ContingencyTable) -> Result<f64, InfoGainError> {
    nonempty(t)?;
    let mut h = 0.0;
    for (b, &col_total) in t.col_totals().iter().enumerate() {
        if col_total == 0 {
            continue;
        }
        let p_b = col_total as f64 / t.total as f64;
        let h_col: f64 = -(0..t.rows()).map(|y| plogp(t.counts[y][b], col_total)).sum::<f64>();
        h += p_b * h_col;
    }
    Ok(h)
}

/// `IG = H(Y) - H(Y|B)`, clamped to 0 when rounding pushes it just below.
pub fn information_gain(t: &ContingencyTable) -> Result<f64, InfoGainError> {
    let ig = entropy_y(t)? - conditional_entropy(t)?;
    Ok(if ig < 0.0 && ig > -IG_TOLERANCE { 0.0 } else { ig })
}

/// Largest count spread inside a balance group.
///
/// Independent features balance each column across answer classes. A
/// coupled feature has all its mass on the class tied to each value, so the
/// balanced state is equal column totals.
pub fn max_imbalance(t: &ContingencyTable) -> u64 {
    match t.coupling {
        Coupling::Independent => (0..t.cols())
            .map(|b| {
                let col = t.counts.iter().map(|r| r[b]);
                col.clone().max().unwrap_or(0) - col.min().unwrap_or(0)
            })
            .max()
            .unwrap_or(0),
        Coupling::AnswerEqualsFeature => {
            let totals = t.col_totals();
            totals.iter().max().unwrap_or(&0) - totals.iter().min().unwrap_or(&0)
        }
    }
}

/// Default tolerance: 2% of the average column size, at least one sample.
///
/// Uses the grand total, which rewrites never change, so the same ε comes
/// out before and after intervention.
pub fn default_epsilon(t: &ContingencyTable) -> u64 {
    // ceil(0.02 * total / cols) in integers
    let denom = 100 * t.cols().max(1) as u64;
    (2 * t.total).div_ceil(denom).max(1)
}

/// Dependence diagnostics for one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub table: ContingencyTable,
    /// `H(Y)` in bits.
    pub h_y: f64,
    /// `H(Y|B)` in bits.
    pub h_y_given_b: f64,
    /// Information gain in bits.
    pub ig: f64,
    pub max_imbalance: u64,
    pub epsilon: u64,
    pub goal_met: bool,
}

pub fn goal_check(t: &ContingencyTable, epsilon: u64) -> Result<BiasReport, InfoGainError> {
    let h_y = entropy_y(t)?;
    let h_y_given_b = conditional_entropy(t)?;
    let ig = information_gain(t)?;
    let max_imbalance = max_imbalance(t);
    Ok(BiasReport {
        table: t.clone(),
        h_y,
        h_y_given_b,
        ig,
        max_imbalance,
        epsilon,
        goal_met: max_imbalance <= epsilon,
    })
}

/// Labels the (task, feature) pair a report belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub task: Task,
    pub feature: String,
    #[serde(flatten)]
    pub report: BiasReport,
}
