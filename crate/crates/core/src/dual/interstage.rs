//! Dual SDDP for cost coefficients that depend affinely on their past
//! through a multiplicative vector autoregression
//! `c_t = eps_t o (sum_l Phi_{t,l} c_{t-l} + mu_t)` with `(b_t, eps_t)`
//! stagewise independent.
//!
//! The primal cost-to-go functions of such problems are not convex, but the
//! dual value functions remain concave in the augmented state
//! `(pi_{t-1}, c_{t-1}, ..., c_{t-p})`, so the penalized dual recursion
//! applies unchanged with cuts carrying one gradient block per state part.

use super::stage_lp::{keep_solution, solve_first_stage, solve_stage_block};
use super::{penalty_value, DualConfig, DualError, FirstStage, FirstStageOutcome, PenaltySchedule, StageBlock};
use crate::cuts::Cut;
use crate::linalg::{self, SparseMat};
use crate::lp::{solve_lp, LpBuilder, LpProblem, LpStatus, RowSense, Sense};
use crate::model::{DualBox, ModelError, MslpInstance};
use crate::sim::{sample_index, stream_rng};
use crate::trace::{DualTrace, DualTraceRow};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterstageError {
    #[error("invalid cost process: {0}")]
    InvalidProcess(String),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Multiplicative autoregressive cost process. All stages must share the
/// same decision dimension n; lag matrices are n x n.
#[derive(Debug, Clone)]
pub struct CostProcessSpec {
    pub lag: usize,
    /// phi[s-1][l-1]: matrix applied to c_{s-l} in the stage-s recursion.
    pub phi: Vec<Vec<SparseMat>>,
    /// mu[s-1]: intercept of the stage-s recursion (s = 1..T-1, 0-based).
    pub mu: Vec<Vec<f64>>,
    /// initial_costs[l]: cost vector l stages before stage 1 (entry 0 is the
    /// stage-0 cost itself).
    pub initial_costs: Vec<Vec<f64>>,
    /// eps[s-1][j]: noise vector of realization j at stage s, aligned with
    /// the base instance realizations; strictly positive.
    pub eps: Vec<Vec<Vec<f64>>>,
}

/// Augmented-state model ready for the penalized dual recursion.
#[derive(Debug, Clone)]
pub struct InterstageDualModel {
    pub base: MslpInstance,
    pub process: CostProcessSpec,
    pub n: usize,
}

/// Cut over the augmented state: `intercept + grad_pi . pi + sum_l grad_c[l] . c_{t-1-l}`.
#[derive(Debug, Clone)]
pub struct AugCut {
    pub intercept: f64,
    pub grad_pi: Vec<f64>,
    pub grad_c: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl AugCut {
    pub fn value_at(&self, pi: &[f64], history: &[Vec<f64>]) -> f64 {
        let mut v = self.intercept + linalg::dot(&self.grad_pi, pi);
        for (g, h) in self.grad_c.iter().zip(history) {
            v += linalg::dot(g, h);
        }
        v
    }

    /// Folds the history blocks into a plain cut over pi.
    fn at_history(&self, history: &[Vec<f64>], stage: usize) -> Cut {
        let mut intercept = self.intercept;
        for (g, h) in self.grad_c.iter().zip(history) {
            intercept += linalg::dot(g, h);
        }
        Cut {
            stage,
            intercept,
            gradient: self.grad_pi.clone(),
            iteration: self.iteration,
        }
    }
}

/// Validates the process against the base instance and packages the
/// augmented dual model.
pub fn build_interstage_cost_dual(
    base: &MslpInstance,
    process: &CostProcessSpec,
) -> Result<InterstageDualModel, InterstageError> {
    base.ensure_valid().map_err(DualError::from)?;
    let horizon = base.horizon();
    if horizon < 2 {
        return Err(InterstageError::InvalidProcess(
            "need at least two stages".into(),
        ));
    }
    let n = base.num_vars(0);
    for s in 0..horizon {
        if base.num_vars(s) != n {
            return Err(InterstageError::InvalidProcess(format!(
                "stage {} has {} variables; the cost recursion needs a constant dimension {n}",
                s + 1,
                base.num_vars(s)
            )));
        }
        if s > 0 && s + 1 < horizon && (base.flags[s].mat_a || base.flags[s].mat_b) {
            return Err(InterstageError::InvalidProcess(format!(
                "stage {} has random technology; only (b, eps) may be random",
                s + 1
            )));
        }
    }
    if process.lag == 0 {
        return Err(InterstageError::InvalidProcess("lag must be >= 1".into()));
    }
    if process.initial_costs.len() != process.lag {
        return Err(InterstageError::InvalidProcess(format!(
            "need {} initial cost vectors, found {}",
            process.lag,
            process.initial_costs.len()
        )));
    }
    for (l, c) in process.initial_costs.iter().enumerate() {
        if c.len() != n {
            return Err(InterstageError::InvalidProcess(format!(
                "initial cost {l} has length {}, expected {n}",
                c.len()
            )));
        }
        if c.iter().any(|&v| v < 0.0) {
            return Err(InterstageError::InvalidProcess(format!(
                "initial cost {l} has negative entries"
            )));
        }
    }
    if process.phi.len() != horizon - 1
        || process.mu.len() != horizon - 1
        || process.eps.len() != horizon - 1
    {
        return Err(InterstageError::InvalidProcess(format!(
            "phi/mu/eps must cover stages 2..{horizon} ({} entries), found ({}, {}, {})",
            horizon - 1,
            process.phi.len(),
            process.mu.len(),
            process.eps.len()
        )));
    }
    for s in 1..horizon {
        let e = &process.eps[s - 1];
        if e.len() != base.realizations(s).len() {
            return Err(InterstageError::InvalidProcess(format!(
                "stage {}: {} eps realizations but {} instance realizations",
                s + 1,
                e.len(),
                base.realizations(s).len()
            )));
        }
        for (j, eps) in e.iter().enumerate() {
            if eps.len() != n || eps.iter().any(|&v| !(v > 0.0)) {
                return Err(InterstageError::InvalidProcess(format!(
                    "stage {} realization {j}: eps must be strictly positive of length {n}",
                    s + 1
                )));
            }
        }
        if process.mu[s - 1].len() != n || process.mu[s - 1].iter().any(|&v| v < 0.0) {
            return Err(InterstageError::InvalidProcess(format!(
                "stage {}: mu must be nonnegative of length {n}",
                s + 1
            )));
        }
        if process.phi[s - 1].len() != process.lag {
            return Err(InterstageError::InvalidProcess(format!(
                "stage {}: expected {} lag matrices, found {}",
                s + 1,
                process.lag,
                process.phi[s - 1].len()
            )));
        }
        for (l, m) in process.phi[s - 1].iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(InterstageError::InvalidProcess(format!(
                    "stage {} lag {}: Phi is {}x{}, expected {n}x{n}",
                    s + 1,
                    l + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
    }
    Ok(InterstageDualModel {
        base: base.clone(),
        process: process.clone(),
        n,
    })
}

impl InterstageDualModel {
    /// Realized stage-s cost for realization j given history
    /// (c_{s-1}, ..., c_{s-p}).
    pub fn realized_cost(&self, s: usize, j: usize, history: &[Vec<f64>]) -> Vec<f64> {
        debug_assert!(s >= 1);
        let mut base = self.process.mu[s - 1].clone();
        for (l, phi) in self.process.phi[s - 1].iter().enumerate() {
            let contrib = phi.times(&history[l]);
            for (b, c) in base.iter_mut().zip(&contrib) {
                *b += c;
            }
        }
        base.iter_mut()
            .zip(&self.process.eps[s - 1][j])
            .for_each(|(b, e)| *b *= e);
        base
    }

    fn shift_history(&self, history: &[Vec<f64>], newest: Vec<f64>) -> Vec<Vec<f64>> {
        let mut h = Vec::with_capacity(self.process.lag);
        h.push(newest);
        for old in history.iter().take(self.process.lag.saturating_sub(1)) {
            h.push(old.clone());
        }
        h
    }
}

#[derive(Debug)]
pub struct InterstageRun {
    /// aug_pools[s]: cuts bounding the stage block s..T-1 over
    /// (pi_{s-1}, history).
    pub pools: Vec<Vec<AugCut>>,
    pub trace: DualTrace,
    pub final_ub: f64,
}

/// Penalized Dual SDDP on the augmented dual recursion.
pub fn run_interstage_dual_sddp(
    model: &InterstageDualModel,
    boxes: &DualBox,
    schedule: &PenaltySchedule,
    config: &DualConfig,
) -> Result<InterstageRun, InterstageError> {
    schedule.validate()?;
    let instance = &model.base;
    let horizon = instance.horizon();
    let p = model.process.lag;
    let n = model.n;

    // Initial upper bound: box-bounded b' pi terms, zero gradients.
    let mut pools: Vec<Vec<AugCut>> = vec![Vec::new(); horizon];
    for s in 1..horizon {
        let mut theta = 0.0;
        for tau in s..horizon {
            let worst_b = instance
                .realizations(tau)
                .iter()
                .map(|r| linalg::norm1(&r.rhs))
                .fold(0.0_f64, f64::max);
            theta += worst_b * boxes.radius(tau);
        }
        pools[s].push(AugCut {
            intercept: theta,
            grad_pi: vec![0.0; instance.num_rows(s - 1)],
            grad_c: vec![vec![0.0; n]; p],
            iteration: 0,
        });
    }

    let h1: Vec<Vec<f64>> = model.process.initial_costs.clone();
    let mut trace = DualTrace::default();
    let mut final_ub = f64::INFINITY;

    for k in 1..=config.max_iters {
        let v_k = penalty_value(schedule, k);
        let mut rng = stream_rng(config.seed, k as u64);

        // Forward: trial (pi_s, history) for s = 0..T-2.
        let mut pis: Vec<Vec<f64>> = Vec::new();
        let mut histories: Vec<Vec<Vec<f64>>> = vec![h1.clone()];
        let mut conds: Vec<usize> = vec![0];
        {
            let first_cuts: Vec<Cut> =
                pools[1].iter().map(|c| c.at_history(&h1, 1)).collect();
            let first = solve_first_stage(&FirstStage {
                rhs: &instance.stages[0][0].rhs,
                cuts: &first_cuts,
                box_lo: &boxes.lower[0],
                box_hi: &boxes.upper[0],
                feas_cuts: &[],
            })
            .map_err(DualError::from)?;
            match first {
                FirstStageOutcome::Solved { pi, .. } => pis.push(pi),
                FirstStageOutcome::Infeasible => {
                    return Err(InterstageError::Dual(DualError::RootInfeasible))
                }
            }
        }
        for s in 1..horizon - 1 {
            let h = histories[s - 1].clone();
            let costs: Vec<Vec<f64>> = (0..instance.realizations(s).len())
                .map(|j| model.realized_cost(s, j, &h))
                .collect();
            // Fold each child's next history into plain cuts.
            let eff_cuts: Vec<Vec<Cut>> = (0..instance.realizations(s).len())
                .map(|j| {
                    let h_next = model.shift_history(&h, costs[j].clone());
                    pools[s + 1]
                        .iter()
                        .map(|c| c.at_history(&h_next, s + 1))
                        .collect()
                })
                .collect();
            let cut_refs: Vec<&[Cut]> = eff_cuts.iter().map(|v| v.as_slice()).collect();
            let prev_cost = &h[0];
            let prev_mat_a = &instance.stages[s - 1][0].mat_a;
            let outcome = solve_stage_block(&StageBlock {
                reals: instance.realizations(s),
                prev_cost,
                prev_mat_a,
                pi_prev: &pis[s - 1],
                box_lo: &boxes.lower[s],
                box_hi: &boxes.upper[s],
                delta_ub: Some(v_k),
                next_cuts: Some(cut_refs),
                feas_cuts: &[],
                cost_override: None,
            })
            .map_err(DualError::from)?;
            let sol = keep_solution(outcome, "interstage forward").map_err(DualError::from)?;
            let probs: Vec<f64> = instance.realizations(s).iter().map(|r| r.prob).collect();
            let j = sample_index(&probs, &mut rng);
            pis.push(sol.pis[j].clone());
            conds.push(j);
            histories.push(model.shift_history(&h, costs[j].clone()));
        }

        // Backward: augmented cuts at the trial states.
        for s in (1..horizon).rev() {
            let h = &histories[s - 1];
            let pi_prev = &pis[s - 1];
            let prev_mat_a = &instance.stages[s - 1][0].mat_a;
            let n_real = instance.realizations(s).len();
            let costs: Vec<Vec<f64>> = (0..n_real)
                .map(|j| model.realized_cost(s, j, h))
                .collect();
            let terminal = s + 1 == horizon;

            let eff_cuts: Vec<Vec<Cut>>;
            let next_cuts = if terminal {
                None
            } else {
                eff_cuts = (0..n_real)
                    .map(|j| {
                        let h_next = model.shift_history(h, costs[j].clone());
                        pools[s + 1]
                            .iter()
                            .map(|c| c.at_history(&h_next, s + 1))
                            .collect()
                    })
                    .collect();
                Some(eff_cuts.iter().map(|v| v.as_slice()).collect::<Vec<_>>())
            };
            let outcome = solve_stage_block(&StageBlock {
                reals: instance.realizations(s),
                prev_cost: &h[0],
                prev_mat_a,
                pi_prev,
                box_lo: &boxes.lower[s],
                box_hi: &boxes.upper[s],
                delta_ub: Some(v_k),
                next_cuts,
                feas_cuts: &[],
                cost_override: if terminal { Some(&costs) } else { None },
            })
            .map_err(DualError::from)?;
            let sol = keep_solution(outcome, "interstage backward").map_err(DualError::from)?;

            // Gradient blocks of the new augmented cut.
            let grad_pi: Vec<f64> = prev_mat_a
                .times(&sol.delta)
                .iter()
                .map(|v| -v)
                .collect();
            // w accumulates the sensitivity of realized costs: terminal uses
            // alpha weights, inner stages the nu-weighted first c-block of the
            // next-stage cuts.
            let mut w = vec![0.0; n];
            let mut grad_c: Vec<Vec<f64>> = vec![vec![0.0; n]; p];
            if terminal {
                let alphas = sol.alphas.as_ref().expect("terminal stage has alphas");
                for (j, alpha) in alphas.iter().enumerate() {
                    for v in 0..n {
                        w[v] += alpha[v] * model.process.eps[s - 1][j][v];
                    }
                }
            } else {
                let nus = sol.nus.as_ref().expect("inner stage has nus");
                for (j, nu) in nus.iter().enumerate() {
                    for (i, aug) in pools[s + 1].iter().enumerate() {
                        let weight = nu[i];
                        if weight == 0.0 {
                            continue;
                        }
                        for v in 0..n {
                            w[v] += weight * aug.grad_c[0][v] * model.process.eps[s - 1][j][v];
                        }
                        // Shifted blocks: next-state h'[m] = h[m-1].
                        for m in 1..p {
                            for v in 0..n {
                                grad_c[m - 1][v] += weight * aug.grad_c[m][v];
                            }
                        }
                    }
                }
            }
            for m in 1..=p {
                let phi_m = &model.process.phi[s - 1][m - 1];
                let contrib = phi_m.transpose_times(&w);
                for v in 0..n {
                    grad_c[m - 1][v] += contrib[v];
                }
            }
            for v in 0..n {
                grad_c[0][v] += sol.delta.get(v).copied().unwrap_or(0.0);
            }

            let mut intercept = sol.value - linalg::dot(&grad_pi, pi_prev);
            for (g, hv) in grad_c.iter().zip(h.iter()) {
                intercept -= linalg::dot(g, hv);
            }
            pools[s].push(AugCut {
                intercept,
                grad_pi,
                grad_c,
                iteration: k,
            });
        }

        // Fresh first-stage value with the updated pools.
        let first_cuts: Vec<Cut> = pools[1].iter().map(|c| c.at_history(&h1, 1)).collect();
        let ub = match solve_first_stage(&FirstStage {
            rhs: &instance.stages[0][0].rhs,
            cuts: &first_cuts,
            box_lo: &boxes.lower[0],
            box_hi: &boxes.upper[0],
            feas_cuts: &[],
        })
        .map_err(DualError::from)?
        {
            FirstStageOutcome::Solved { value, .. } => value,
            FirstStageOutcome::Infeasible => {
                return Err(InterstageError::Dual(DualError::RootInfeasible))
            }
        };
        trace.rows.push(DualTraceRow {
            iter: k,
            ub_dual: ub,
            penalty_scalar: v_k,
            max_zeta: 0.0,
        });
        final_ub = ub;
    }

    Ok(InterstageRun {
        pools,
        trace,
        final_ub,
    })
}

/// Extensive-form LP of the interstage-cost problem: node costs follow the
/// recursion along each path. Ground truth for small trees.
pub fn interstage_extensive_form(
    model: &InterstageDualModel,
    node_cap: usize,
) -> Result<LpProblem, InterstageError> {
    let instance = &model.base;
    let horizon = instance.horizon();
    let nodes_est = instance.tree_nodes();
    if nodes_est > node_cap {
        return Err(InterstageError::Model(ModelError::TreeTooLarge {
            nodes: nodes_est,
            cap: node_cap,
        }));
    }

    struct Node {
        stage: usize,
        real: usize,
        parent: Option<usize>,
        path_prob: f64,
        history: Vec<Vec<f64>>,
        col_start: usize,
        row_start: usize,
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut builder = LpBuilder::new();
    let mut frontier: Vec<usize> = Vec::new();
    for s in 0..horizon {
        let parents: Vec<Option<usize>> = if s == 0 {
            vec![None]
        } else {
            frontier.iter().map(|&i| Some(i)).collect()
        };
        let mut next_frontier = Vec::new();
        for parent in parents {
            for (j, real) in instance.realizations(s).iter().enumerate() {
                let (path_prob, history, cost) = match parent {
                    None => (
                        real.prob,
                        model.process.initial_costs.clone(),
                        model.process.initial_costs[0].clone(),
                    ),
                    Some(pid) => {
                        let ph = nodes[pid].history.clone();
                        let c = model.realized_cost(s, j, &ph);
                        (
                            nodes[pid].path_prob * real.prob,
                            model.shift_history(&ph, c.clone()),
                            c,
                        )
                    }
                };
                let (n, m) = instance.dims[s];
                let col_start = builder.num_cols();
                for v in 0..n {
                    builder.add_col(path_prob * cost[v], 0.0, f64::INFINITY);
                }
                let row_start = builder.num_rows();
                for r in 0..m {
                    builder.add_row(Vec::new(), RowSense::Eq, real.rhs[r]);
                }
                let id = nodes.len();
                nodes.push(Node {
                    stage: s,
                    real: j,
                    parent,
                    path_prob,
                    history,
                    col_start,
                    row_start,
                });
                next_frontier.push(id);
            }
        }
        frontier = next_frontier;
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); builder.num_rows()];
    for node in &nodes {
        let real = &instance.stages[node.stage][node.real];
        let n = instance.dims[node.stage].0;
        for v in 0..n {
            for &(r, a) in real.mat_a.col(v) {
                rows[node.row_start + r].push((node.col_start + v, a));
            }
        }
        if let Some(pid) = node.parent {
            let pnode = &nodes[pid];
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
        for (jc, v) in row {
            trips.push((i, jc, v));
        }
    }
    lp.mat = SparseMat::from_triplets(nrows, ncols, &trips);
    Ok(lp)
}

/// Optimal value of the extensive form.
pub fn interstage_extensive_optimum(
    model: &InterstageDualModel,
    node_cap: usize,
) -> Result<f64, InterstageError> {
    let lp = interstage_extensive_form(model, node_cap)?;
    let sol = solve_lp(&lp).map_err(DualError::from)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective),
        other => Err(InterstageError::InvalidProcess(format!(
            "extensive form returned {other:?}"
        ))),
    }
}
