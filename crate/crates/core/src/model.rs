//! Data model for stagewise-independent multistage stochastic linear
//! programs, their deterministic equivalent, and valid dual variable boxes.
//!
//! An instance is a per-stage list of realizations of (A, B, c, b, p) for the
//! constraint system `B_t x_{t-1} + A_t x_t = b_t`, `x_t >= 0`, with a
//! probability-weighted linear objective. Stage 1 is deterministic.

use crate::linalg::{self, SparseMat};
use crate::lp::{solve_lp, LpBuilder, LpError, LpProblem, LpSolution, LpStatus, RowSense, Sense};
use thiserror::Error;

pub const DEFAULT_NODE_CAP: usize = 1_000_000;
/// Tree size up to which dual boxes are cross-checked against the
/// deterministic equivalent before being declared valid.
pub const BOX_CHECK_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("scenario tree has {nodes} nodes, above the cap of {cap}; use SDDP instead")]
    TreeTooLarge { nodes: usize, cap: usize },
    #[error("instance invalid: {0}")]
    InvalidInstance(String),
    #[error("no strictly feasible point with components >= {required} (best min-component {achieved})")]
    NotStrictlyFeasible { required: f64, achieved: f64 },
    #[error("no finite lower bound available: {0}")]
    NoLowerBound(String),
    #[error("dual box check failed: {0}")]
    BoxCheckFailed(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// One realization of the stage-t data.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRealization {
    /// A_t: m_t x n_t
    pub mat_a: SparseMat,
    /// B_t: m_t x n_{t-1} (zero columns at stage 1)
    pub mat_b: SparseMat,
    /// c_t: n_t
    pub cost: Vec<f64>,
    /// b_t: m_t
    pub rhs: Vec<f64>,
    pub prob: f64,
}

/// Which data blocks vary across realizations within a stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RandomnessFlags {
    pub mat_a: bool,
    pub mat_b: bool,
    pub cost: bool,
    pub rhs: bool,
}

#[derive(Debug, Clone)]
pub struct MslpInstance {
    /// stages[t] holds the realizations of stage t+1; stages[0] has length 1.
    pub stages: Vec<Vec<StageRealization>>,
    /// (n_t, m_t) per stage.
    pub dims: Vec<(usize, usize)>,
    pub flags: Vec<RandomnessFlags>,
}

/// A named invariant violation found by [`MslpInstance::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// 1-based stage number.
    pub stage: usize,
    pub realization: Option<usize>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.realization {
            Some(j) => write!(f, "stage {} realization {}: {}", self.stage, j, self.rule),
            None => write!(f, "stage {}: {}", self.stage, self.rule),
        }
    }
}

impl MslpInstance {
    /// Builds an instance from per-stage realization lists, deriving dims and
    /// randomness flags from the data.
    pub fn new(stages: Vec<Vec<StageRealization>>) -> Self {
        let dims = stages
            .iter()
            .map(|reals| {
                let r = reals.first().expect("stage with no realizations");
                (r.cost.len(), r.rhs.len())
            })
            .collect();
        let flags = stages
            .iter()
            .map(|reals| {
                let first = &reals[0];
                let mut f = RandomnessFlags::default();
                for r in &reals[1..] {
                    f.mat_a |= r.mat_a != first.mat_a;
                    f.mat_b |= r.mat_b != first.mat_b;
                    f.cost |= r.cost != first.cost;
                    f.rhs |= r.rhs != first.rhs;
                }
                f
            })
            .collect();
        Self {
            stages,
            dims,
            flags,
        }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn num_vars(&self, stage: usize) -> usize {
        self.dims[stage].0
    }

    pub fn num_rows(&self, stage: usize) -> usize {
        self.dims[stage].1
    }

    pub fn realizations(&self, stage: usize) -> &[StageRealization] {
        &self.stages[stage]
    }

    /// Number of nodes of the full scenario tree.
    pub fn tree_nodes(&self) -> usize {
        let mut total = 0usize;
        let mut level = 1usize;
        for reals in &self.stages {
            level = match level.checked_mul(reals.len()) {
                Some(v) if v <= 100 * DEFAULT_NODE_CAP => v,
                _ => return usize::MAX,
            };
            total = total.saturating_add(level);
        }
        total
    }

    /// Diagnostic check of all instance invariants. Empty result means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.stages.is_empty() {
            out.push(Violation {
                stage: 1,
                realization: None,
                rule: "instance has no stages".into(),
            });
            return out;
        }
        if self.stages[0].len() != 1 {
            out.push(Violation {
                stage: 1,
                realization: None,
                rule: format!(
                    "stage 1 must have exactly one realization, found {}",
                    self.stages[0].len()
                ),
            });
        } else if (self.stages[0][0].prob - 1.0).abs() > 1e-12 {
            out.push(Violation {
                stage: 1,
                realization: Some(0),
                rule: format!("stage-1 probability must be 1, found {}", self.stages[0][0].prob),
            });
        }
        for (s, reals) in self.stages.iter().enumerate() {
            let stage = s + 1;
            if reals.is_empty() {
                out.push(Violation {
                    stage,
                    realization: None,
                    rule: "stage has no realizations".into(),
                });
                continue;
            }
            let psum: f64 = reals.iter().map(|r| r.prob).sum();
            if (psum - 1.0).abs() > 1e-12 {
                out.push(Violation {
                    stage,
                    realization: None,
                    rule: format!("probabilities sum to {psum}, expected 1"),
                });
            }
            let (n, m) = self.dims[s];
            let n_prev = if s == 0 { 0 } else { self.dims[s - 1].0 };
            for (j, r) in reals.iter().enumerate() {
                if r.prob <= 0.0 || r.prob > 1.0 {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: format!("probability {} outside (0, 1]", r.prob),
                    });
                }
                if r.mat_a.nrows() != m || r.mat_a.ncols() != n {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: format!(
                            "A is {}x{}, expected {}x{}",
                            r.mat_a.nrows(),
                            r.mat_a.ncols(),
                            m,
                            n
                        ),
                    });
                }
                if r.mat_b.nrows() != m || r.mat_b.ncols() != n_prev {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: format!(
                            "B is {}x{}, expected {}x{}",
                            r.mat_b.nrows(),
                            r.mat_b.ncols(),
                            m,
                            n_prev
                        ),
                    });
                }
                if r.cost.len() != n {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: format!("c has {} entries, expected {n}", r.cost.len()),
                    });
                }
                if r.rhs.len() != m {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: format!("b has {} entries, expected {m}", r.rhs.len()),
                    });
                }
            }
            // Flag consistency: blocks declared deterministic must not vary.
            let first = &reals[0];
            for (j, r) in reals.iter().enumerate().skip(1) {
                if !self.flags[s].mat_a && r.mat_a != first.mat_a {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: "A varies but randomness flags declare it fixed".into(),
                    });
                }
                if !self.flags[s].mat_b && r.mat_b != first.mat_b {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: "B varies but randomness flags declare it fixed".into(),
                    });
                }
                if !self.flags[s].cost && r.cost != first.cost {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: "c varies but randomness flags declare it fixed".into(),
                    });
                }
                if !self.flags[s].rhs && r.rhs != first.rhs {
                    out.push(Violation {
                        stage,
                        realization: Some(j),
                        rule: "b varies but randomness flags declare it fixed".into(),
                    });
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidInstance(
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }
}

/// One node of the unrolled scenario tree.
#[derive(Debug, Clone)]
pub struct TreeNode {
    /// 0-based stage index.
    pub stage: usize,
    /// Realization index within the stage.
    pub realization: usize,
    pub parent: Option<usize>,
    pub path_prob: f64,
    pub col_start: usize,
    pub row_start: usize,
}

/// Maps (tree node, local variable/row) to global LP column/row indices.
#[derive(Debug, Clone)]
pub struct TreeIndexMap {
    pub nodes: Vec<TreeNode>,
    /// Node ids per stage.
    pub stage_nodes: Vec<Vec<usize>>,
    pub dims: Vec<(usize, usize)>,
}

impl TreeIndexMap {
    pub fn node_cols(&self, node: usize) -> std::ops::Range<usize> {
        let n = self.dims[self.nodes[node].stage].0;
        self.nodes[node].col_start..self.nodes[node].col_start + n
    }

    pub fn node_rows(&self, node: usize) -> std::ops::Range<usize> {
        let m = self.dims[self.nodes[node].stage].1;
        self.nodes[node].row_start..self.nodes[node].row_start + m
    }

    /// Per-node primal values from a deterministic-equivalent solution.
    pub fn node_primal(&self, sol: &LpSolution, node: usize) -> Vec<f64> {
        sol.primal[self.node_cols(node)].to_vec()
    }

    /// Per-node dual multipliers in dynamic-programming normalization
    /// (deterministic-equivalent row duals divided by the node path probability).
    pub fn node_duals(&self, sol: &LpSolution, node: usize) -> Vec<f64> {
        let p = self.nodes[node].path_prob;
        sol.duals[self.node_rows(node)]
            .iter()
            .map(|&y| y / p)
            .collect()
    }
}

#[derive(Debug)]
pub struct DetEquiv {
    pub lp: LpProblem,
    pub map: TreeIndexMap,
}

/// Unrolls the instance into one large LP over the full scenario tree with a
/// probability-weighted objective.
pub fn build_deterministic_equivalent(
    instance: &MslpInstance,
    node_cap: usize,
) -> Result<DetEquiv, ModelError> {
    instance.ensure_valid()?;
    let nodes_est = instance.tree_nodes();
    if nodes_est > node_cap {
        return Err(ModelError::TreeTooLarge {
            nodes: nodes_est,
            cap: node_cap,
        });
    }

    let horizon = instance.horizon();
    let mut nodes: Vec<TreeNode> = Vec::with_capacity(nodes_est);
    let mut stage_nodes: Vec<Vec<usize>> = vec![Vec::new(); horizon];
    let mut builder = LpBuilder::new();

    for s in 0..horizon {
        let parents: Vec<Option<usize>> = if s == 0 {
            vec![None]
        } else {
            stage_nodes[s - 1].iter().map(|&id| Some(id)).collect()
        };
        for parent in parents {
            for (j, real) in instance.realizations(s).iter().enumerate() {
                let path_prob = match parent {
                    Some(p) => nodes[p].path_prob * real.prob,
                    None => real.prob,
                };
                let (n, m) = instance.dims[s];
                let col_start = builder.num_cols();
                for v in 0..n {
                    builder.add_col(path_prob * real.cost[v], 0.0, f64::INFINITY);
                }
                let row_start = builder.num_rows();
                for r in 0..m {
                    builder.add_row(Vec::new(), RowSense::Eq, real.rhs[r]);
                }
                let id = nodes.len();
                nodes.push(TreeNode {
                    stage: s,
                    realization: j,
                    parent,
                    path_prob,
                    col_start,
                    row_start,
                });
                stage_nodes[s].push(id);
            }
        }
    }

    // Fill row entries now that all columns exist.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); builder.num_rows()];
    for node in &nodes {
        let real = &instance.stages[node.stage][node.realization];
        let (n, _m) = instance.dims[node.stage];
        for v in 0..n {
            for &(r, a) in real.mat_a.col(v) {
                rows[node.row_start + r].push((node.col_start + v, a));
            }
        }
        if let Some(p) = node.parent {
            let pnode = &nodes[p];
            let n_prev = instance.dims[pnode.stage].0;
            for v in 0..n_prev {
                for &(r, b) in real.mat_b.col(v) {
                    rows[node.row_start + r].push((pnode.col_start + v, b));
                }
            }
        }
    }

    let mut lp = builder.build(Sense::Min);
    let nrows = lp.rhs.len();
    let ncols = lp.cost.len();
    let mut trips = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row {
            trips.push((i, j, v));
        }
    }
    lp.mat = SparseMat::from_triplets(nrows, ncols, &trips);

    Ok(DetEquiv {
        lp,
        map: TreeIndexMap {
            nodes,
            stage_nodes,
            dims: instance.dims.clone(),
        },
    })
}

/// Per-stage bounds on dual multipliers that preserve the dual optimal value.
#[derive(Debug, Clone)]
pub struct DualBox {
    /// lower[t] has length m_{t+1} (0-based stage t).
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// True when optimal node duals of a small instance were checked to lie inside.
    pub validated: bool,
}

impl DualBox {
    pub fn radius(&self, stage: usize) -> f64 {
        self.lower[stage]
            .iter()
            .chain(self.upper[stage].iter())
            .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
    }

    pub fn inflate(&self, factor: f64) -> DualBox {
        DualBox {
            lower: self
                .lower
                .iter()
                .map(|v| v.iter().map(|x| x * factor).collect())
                .collect(),
            upper: self
                .upper
                .iter()
                .map(|v| v.iter().map(|x| x * factor).collect())
                .collect(),
            validated: false,
        }
    }

    pub fn contains(&self, stage: usize, pi: &[f64], tol: f64) -> bool {
        pi.iter().enumerate().all(|(i, &v)| {
            v >= self.lower[stage][i] - tol && v <= self.upper[stage][i] + tol
        })
    }
}

/// Certificate data for a strictly feasible primal policy: its expected cost
/// and the smallest component across all nodes.
#[derive(Debug, Clone, Copy)]
pub struct FeasibleStats {
    pub expected_cost: f64,
    pub min_component: f64,
}

/// Searches a strictly feasible point with all components >= r over the
/// deterministic equivalent, minimizing expected cost among such points
/// (cheap certificates keep the dual-box half-widths tight). When no point
/// clears r, the achievable interiority radius is reported in the error.
pub fn find_strictly_feasible(
    instance: &MslpInstance,
    node_cap: usize,
    r: f64,
) -> Result<FeasibleStats, ModelError> {
    if !(r > 0.0) {
        return Err(ModelError::InvalidInstance(
            "interiority radius r must be positive".into(),
        ));
    }
    let det = build_deterministic_equivalent(instance, node_cap)?;
    let n = det.lp.ncols();
    let mut lp = det.lp.clone();
    for l in lp.lower.iter_mut() {
        *l = r;
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {
            let expected_cost = linalg::dot(&det.lp.cost, &sol.primal);
            let min_component = sol.primal.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(FeasibleStats {
                expected_cost,
                min_component,
            })
        }
        LpStatus::Unbounded => Err(LpError::NumericalFailure(
            "cost-minimal interior search reported unbounded".into(),
        )
        .into()),
        LpStatus::Infeasible => {
            // Report how much interiority is actually achievable:
            // maximize rho subject to x = z + rho * 1 feasible.
            let mut builder = LpBuilder::new();
            builder.add_cols(n, 0.0, 0.0, f64::INFINITY);
            let rho = builder.add_col(-1.0, 0.0, 1e3);
            for &b in &det.lp.rhs {
                builder.add_row(Vec::new(), RowSense::Eq, b);
            }
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); det.lp.nrows()];
            let mut row_ones = vec![0.0; det.lp.nrows()];
            for j in 0..n {
                for &(i, v) in det.lp.mat.col(j) {
                    rows[i].push((j, v));
                    row_ones[i] += v;
                }
            }
            for (i, row) in rows.iter_mut().enumerate() {
                if row_ones[i] != 0.0 {
                    row.push((rho, row_ones[i]));
                }
            }
            let mut aux = builder.build(Sense::Min);
            let nrows = aux.rhs.len();
            let ncols = aux.cost.len();
            let mut trips = Vec::new();
            for (i, row) in rows.into_iter().enumerate() {
                for (j, v) in row {
                    trips.push((i, j, v));
                }
            }
            aux.mat = SparseMat::from_triplets(nrows, ncols, &trips);
            let aux_sol = solve_lp(&aux)?;
            let achieved = if aux_sol.status == LpStatus::Optimal {
                aux_sol.primal[rho]
            } else {
                0.0
            };
            Err(ModelError::NotStrictlyFeasible {
                required: r,
                achieved,
            })
        }
    }
}

/// Lower bound from the expected-value problem (all stage data replaced by
/// its probability mean) minus a slack. Exact Jensen bound when costs are
/// deterministic per stage; the slack covers the general case heuristically.
pub fn expected_value_lower_bound(instance: &MslpInstance) -> Result<f64, ModelError> {
    let mean_stages: Vec<Vec<StageRealization>> = instance
        .stages
        .iter()
        .enumerate()
        .map(|(s, reals)| {
            let (n, m) = instance.dims[s];
            let n_prev = if s == 0 { 0 } else { instance.dims[s - 1].0 };
            let mut cost = vec![0.0; n];
            let mut rhs = vec![0.0; m];
            let mut a_dense = vec![vec![0.0; n]; m];
            let mut b_dense = vec![vec![0.0; n_prev]; m];
            for r in reals {
                for (j, c) in r.cost.iter().enumerate() {
                    cost[j] += r.prob * c;
                }
                for (i, b) in r.rhs.iter().enumerate() {
                    rhs[i] += r.prob * b;
                }
                for j in 0..n {
                    for &(i, v) in r.mat_a.col(j) {
                        a_dense[i][j] += r.prob * v;
                    }
                }
                for j in 0..n_prev {
                    for &(i, v) in r.mat_b.col(j) {
                        b_dense[i][j] += r.prob * v;
                    }
                }
            }
            vec![StageRealization {
                mat_a: SparseMat::from_dense(&a_dense),
                mat_b: if m == 0 || n_prev == 0 {
                    SparseMat::zeros(m, n_prev)
                } else {
                    SparseMat::from_dense(&b_dense)
                },
                cost,
                rhs,
                prob: 1.0,
            }]
        })
        .collect();
    let mean_instance = MslpInstance::new(mean_stages);
    let det = build_deterministic_equivalent(&mean_instance, DEFAULT_NODE_CAP)?;
    let sol = solve_lp(&det.lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        LpStatus::Unbounded => Err(ModelError::NoLowerBound(
            "expected-value problem unbounded".into(),
        )),
        LpStatus::Infeasible => Err(ModelError::NoLowerBound(
            "expected-value problem infeasible".into(),
        )),
    }
}

/// Computes per-stage symmetric dual boxes with half-width
/// `(E[c'x] - Lb0 + r * sum_t E||c_t||) / rho_t`, where `rho_t` is a
/// conservative interiority radius from the smallest nonzero singular value
/// of the stacked stage constraint blocks, floored at 1e-6.
///
/// On instances small enough to solve exactly, the box is cross-checked
/// against the node duals of the deterministic equivalent before being
/// declared valid.
pub fn compute_dual_boxes(
    instance: &MslpInstance,
    feas: &FeasibleStats,
    r: f64,
    lb0: Option<f64>,
) -> Result<DualBox, ModelError> {
    instance.ensure_valid()?;
    if !(r > 0.0) {
        return Err(ModelError::InvalidInstance("radius r must be positive".into()));
    }
    if feas.min_component < r - 1e-9 {
        return Err(ModelError::NotStrictlyFeasible {
            required: r,
            achieved: feas.min_component,
        });
    }
    let lb0 = match lb0 {
        Some(v) => v,
        None => {
            let ev = expected_value_lower_bound(instance)?;
            ev - (1.0 + 0.1 * ev.abs())
        }
    };

    let expected_cost_norms: f64 = instance
        .stages
        .iter()
        .map(|reals| {
            reals
                .iter()
                .map(|real| real.prob * linalg::norm2(&real.cost))
                .sum::<f64>()
        })
        .sum();
    let numerator = (feas.expected_cost - lb0 + r * expected_cost_norms).max(1e-12);

    let mut lower = Vec::with_capacity(instance.horizon());
    let mut upper = Vec::with_capacity(instance.horizon());
    for (s, reals) in instance.stages.iter().enumerate() {
        let m = instance.dims[s].1;
        let mut sigma_min = f64::INFINITY;
        for real in reals {
            let a_dense = real.mat_a.to_dense();
            let b_dense = real.mat_b.to_dense();
            let stacked: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let mut row = b_dense.get(i).cloned().unwrap_or_default();
                    row.extend_from_slice(&a_dense[i]);
                    row
                })
                .collect();
            let s_min = linalg::smallest_nonzero_singular_value(&stacked, 1e-10);
            sigma_min = sigma_min.min(s_min);
        }
        let rho = (r * sigma_min).max(1e-6);
        let half_width = numerator / rho;
        lower.push(vec![-half_width; m]);
        upper.push(vec![half_width; m]);
    }

    let mut dual_box = DualBox {
        lower,
        upper,
        validated: false,
    };

    if instance.tree_nodes() <= BOX_CHECK_CAP {
        let det = build_deterministic_equivalent(instance, BOX_CHECK_CAP)?;
        let sol = solve_lp(&det.lp)?;
        if sol.status == LpStatus::Optimal {
            for (id, node) in det.map.nodes.iter().enumerate() {
                let pi = det.map.node_duals(&sol, id);
                if !dual_box.contains(node.stage, &pi, 1e-6) {
                    return Err(ModelError::BoxCheckFailed(format!(
                        "node {id} (stage {}) duals escape the box",
                        node.stage + 1
                    )));
                }
            }
            dual_box.validated = true;
        }
    }

    Ok(dual_box)
}
