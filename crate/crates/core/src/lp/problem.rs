//! Problem and solution types for the bounded-variable LP solver.

use crate::linalg::SparseMat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// A linear program over bounded variables:
/// optimize cost'x subject to row constraints and `lower <= x <= upper`
/// (entries of the bound vectors may be -inf/+inf).
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub sense: Sense,
    pub cost: Vec<f64>,
    pub mat: SparseMat,
    pub row_senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let m = self.mat.nrows();
        let n = self.mat.ncols();
        if self.rhs.len() != m || self.row_senses.len() != m {
            return Err(LpError::MalformedProblem(format!(
                "row data mismatch: matrix has {m} rows, rhs {} entries, senses {}",
                self.rhs.len(),
                self.row_senses.len()
            )));
        }
        if self.cost.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::MalformedProblem(format!(
                "column data mismatch: matrix has {n} cols, cost {}, lower {}, upper {}",
                self.cost.len(),
                self.lower.len(),
                self.upper.len()
            )));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] {
                return Err(LpError::MalformedProblem(format!(
                    "bounds crossed on column {j}: [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.cost[j].is_nan() {
                return Err(LpError::MalformedProblem(format!(
                    "NaN in column {j} data"
                )));
            }
        }
        for i in 0..m {
            if self.rhs[i].is_nan() || !self.rhs[i].is_finite() {
                return Err(LpError::MalformedProblem(format!(
                    "rhs of row {i} must be finite"
                )));
            }
        }
        Ok(())
    }
}

/// Result of one LP solve. `duals` carries one multiplier per row with the
/// usual sign convention for the declared sense (min: >= rows give
/// nonnegative duals; max: <= rows give nonnegative duals; equalities free).
/// `reduced_costs` has one entry per column. `zero_reduced_costs` counts
/// nonbasic columns with a vanishing reduced cost, a cheap degeneracy signal
/// for sensitivity consumers.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub zero_reduced_costs: usize,
}

impl LpSolution {
    pub fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            primal: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            objective: f64::NAN,
            zero_reduced_costs: 0,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            status: LpStatus::Unbounded,
            primal: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            objective: f64::NAN,
            zero_reduced_costs: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Incremental builder used by the model layers to assemble stage and
/// deterministic-equivalent LPs column-by-column and row-by-row.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, RowSense, f64)>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_cols(&mut self, count: usize, cost: f64, lower: f64, upper: f64) -> usize {
        let start = self.cost.len();
        for _ in 0..count {
            self.add_col(cost, lower, upper);
        }
        start
    }

    pub fn set_cost(&mut self, col: usize, cost: f64) {
        self.cost[col] = cost;
    }

    pub fn add_row(&mut self, entries: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push((entries, sense, rhs));
        self.rows.len() - 1
    }

    pub fn build(self, sense: Sense) -> LpProblem {
        let n = self.cost.len();
        let m = self.rows.len();
        let mut trips = Vec::new();
        let mut senses = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for (i, (entries, s, b)) in self.rows.into_iter().enumerate() {
            for (j, v) in entries {
                trips.push((i, j, v));
            }
            senses.push(s);
            rhs.push(b);
        }
        LpProblem {
            sense,
            cost: self.cost,
            mat: SparseMat::from_triplets(m, n, &trips),
            row_senses: senses,
            rhs,
            lower: self.lower,
            upper: self.upper,
        }
    }
}
