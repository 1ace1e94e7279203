//! Stage subproblems of the dual dynamic programming recursion, assembled in
//! their linear-programming dual (minimization) form.
//!
//! The block maximization over (pi_{t,1..N}, zeta) does not decompose by
//! realization and its epigraph form grows one row per cut per realization.
//! Its LP dual stays small: one equality row per (realization, dual-state
//! component) plus one convexity row per realization, with cuts entering as
//! columns. Solving that form yields the stage value, the maximizing pi's
//! (as equality-row duals), and the cut data (delta) in one solve; both the
//! forward and backward passes of every Dual SDDP variant go through here.

use crate::cuts::Cut;
use crate::linalg::SparseMat;
use crate::lp::{solve_lp, LpBuilder, LpError, LpStatus, RowSense, Sense};
use crate::model::StageRealization;

/// Linear inequality `normal . pi_t <= offset` excluding dual states without
/// feasible continuation.
#[derive(Debug, Clone)]
pub struct FeasibilityCut {
    /// 0-based index of the stage whose pi it constrains.
    pub stage: usize,
    pub normal: Vec<f64>,
    pub offset: f64,
    pub iteration: usize,
}

/// Data defining one dual stage block problem.
pub(crate) struct StageBlock<'a> {
    /// Realizations of the current stage t.
    pub reals: &'a [StageRealization],
    /// Conditioning data from stage t-1: cost vector and technology matrix.
    pub prev_cost: &'a [f64],
    pub prev_mat_a: &'a SparseMat,
    /// Trial dual state pi_{t-1}.
    pub pi_prev: &'a [f64],
    /// Box bounds on the stage-t dual variables.
    pub box_lo: &'a [f64],
    pub box_hi: &'a [f64],
    /// Upper bound on the coupling multiplier delta: the penalty vector value
    /// (componentwise scalar), or None for the hard-constrained variants.
    pub delta_ub: Option<f64>,
    /// Cut model of the next-stage value function, one slice per realization
    /// (they may alias). None marks the terminal stage, which carries its own
    /// dual-feasibility columns instead.
    pub next_cuts: Option<Vec<&'a [Cut]>>,
    /// Feasibility cuts accumulated for stage-t dual states.
    pub feas_cuts: &'a [FeasibilityCut],
    /// Per-realization override of the stage cost vectors (interstage cost
    /// processes realize costs from the history); None uses realization data.
    pub cost_override: Option<&'a [Vec<f64>]>,
}

/// Decoded solution of one stage block.
pub(crate) struct StageBlockSolution {
    /// Optimal value of the stage block problem.
    pub value: f64,
    /// Maximizing pi_{t j} per realization.
    pub pis: Vec<Vec<f64>>,
    /// Coupling multiplier delta (drives cut gradients).
    pub delta: Vec<f64>,
    /// Terminal only: alpha_j columns per realization.
    pub alphas: Option<Vec<Vec<f64>>>,
    /// Inner only: nu weights per realization (aligned with the cut slices).
    pub nus: Option<Vec<Vec<f64>>>,
    /// Slack vector of the coupling constraint implied by the pis.
    pub zeta: Vec<f64>,
}

pub(crate) enum StageOutcome {
    Solved(StageBlockSolution),
    /// The (hard) stage maximization is infeasible.
    Infeasible,
}

pub(crate) fn solve_stage_block(block: &StageBlock) -> Result<StageOutcome, LpError> {
    let n_real = block.reals.len();
    let m_t = block.reals[0].rhs.len();
    let n_t = block.reals[0].cost.len();
    let n_prev = block.prev_cost.len();

    let mut b = LpBuilder::new();

    // delta columns: objective (c_{t-1} - A_{t-1}' pi_{t-1}).
    let at_pi = block.prev_mat_a.transpose_times(block.pi_prev);
    let delta_ub = block.delta_ub.unwrap_or(f64::INFINITY);
    let delta0 = b.add_cols(n_prev, 0.0, 0.0, delta_ub);
    for l in 0..n_prev {
        b.set_cost(delta0 + l, block.prev_cost[l] - at_pi[l]);
    }

    let mut alpha_starts = Vec::new();
    let mut nu_starts = Vec::new();
    let mut psi_up_starts = Vec::new();
    let mut psi_lo_starts = Vec::new();
    let mut lambda_starts = Vec::new();

    for (j, real) in block.reals.iter().enumerate() {
        if block.next_cuts.is_none() {
            let cost_j: &[f64] = match block.cost_override {
                Some(cs) => &cs[j],
                None => &real.cost,
            };
            let a0 = b.add_cols(n_t, 0.0, 0.0, f64::INFINITY);
            for v in 0..n_t {
                b.set_cost(a0 + v, cost_j[v]);
            }
            alpha_starts.push(a0);
        } else {
            let cuts = block.next_cuts.as_ref().unwrap()[j];
            assert!(!cuts.is_empty(), "empty next-stage cut pool");
            let nu0 = b.add_cols(cuts.len(), 0.0, 0.0, f64::INFINITY);
            for (i, cut) in cuts.iter().enumerate() {
                b.set_cost(nu0 + i, cut.intercept);
            }
            nu_starts.push(nu0);
        }
        let up0 = b.add_cols(m_t, 0.0, 0.0, f64::INFINITY);
        let lo0 = b.add_cols(m_t, 0.0, 0.0, f64::INFINITY);
        for r in 0..m_t {
            b.set_cost(up0 + r, block.box_hi[r]);
            b.set_cost(lo0 + r, -block.box_lo[r]);
        }
        psi_up_starts.push(up0);
        psi_lo_starts.push(lo0);
        let l0 = b.add_cols(block.feas_cuts.len(), 0.0, 0.0, f64::INFINITY);
        for (s, fc) in block.feas_cuts.iter().enumerate() {
            b.set_cost(l0 + s, fc.offset);
        }
        lambda_starts.push(l0);
    }

    // Equality rows per realization block, then convexity rows (inner).
    let mut eq_row_starts = Vec::with_capacity(n_real);
    for (j, real) in block.reals.iter().enumerate() {
        let row0 = b.num_rows();
        eq_row_starts.push(row0);
        let b_dense = real.mat_b.to_dense();
        let a_dense = real.mat_a.to_dense();
        for r in 0..m_t {
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for l in 0..n_prev {
                let v = real.prob * b_dense[r][l];
                if v != 0.0 {
                    entries.push((delta0 + l, v));
                }
            }
            match &block.next_cuts {
                None => {
                    for v in 0..n_t {
                        let a = a_dense[r][v];
                        if a != 0.0 {
                            entries.push((alpha_starts[j] + v, a));
                        }
                    }
                }
                Some(cut_sets) => {
                    for (i, cut) in cut_sets[j].iter().enumerate() {
                        let g = cut.gradient[r];
                        if g != 0.0 {
                            entries.push((nu_starts[j] + i, -g));
                        }
                    }
                }
            }
            entries.push((psi_up_starts[j] + r, 1.0));
            entries.push((psi_lo_starts[j] + r, -1.0));
            for (s, fc) in block.feas_cuts.iter().enumerate() {
                let w = fc.normal[r];
                if w != 0.0 {
                    entries.push((lambda_starts[j] + s, w));
                }
            }
            b.add_row(entries, RowSense::Eq, real.prob * real.rhs[r]);
        }
    }
    let mut conv_rows = Vec::new();
    if let Some(cut_sets) = &block.next_cuts {
        for (j, real) in block.reals.iter().enumerate() {
            let entries: Vec<(usize, f64)> = (0..cut_sets[j].len())
                .map(|i| (nu_starts[j] + i, 1.0))
                .collect();
            conv_rows.push(b.add_row(entries, RowSense::Eq, real.prob));
        }
    }

    let lp = b.build(Sense::Min);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        // The min form is feasible by construction (psi pair plus convexity
        // weights), so unboundedness certifies an infeasible stage block.
        LpStatus::Unbounded => return Ok(StageOutcome::Infeasible),
        LpStatus::Infeasible => {
            return Err(LpError::NumericalFailure(
                "stage block dual reported infeasible".into(),
            ))
        }
    }

    let pis: Vec<Vec<f64>> = (0..n_real)
        .map(|j| sol.duals[eq_row_starts[j]..eq_row_starts[j] + m_t].to_vec())
        .collect();
    let delta: Vec<f64> = sol.primal[delta0..delta0 + n_prev].to_vec();
    let alphas = if block.next_cuts.is_none() {
        Some(
            (0..n_real)
                .map(|j| sol.primal[alpha_starts[j]..alpha_starts[j] + n_t].to_vec())
                .collect(),
        )
    } else {
        None
    };
    let nus = block.next_cuts.as_ref().map(|cut_sets| {
        (0..n_real)
            .map(|j| sol.primal[nu_starts[j]..nu_starts[j] + cut_sets[j].len()].to_vec())
            .collect()
    });

    // zeta = (A_{t-1}' pi_{t-1} + sum_j p_j B_j' pi_j - c_{t-1})_+
    let mut coupling = at_pi.clone();
    for (j, real) in block.reals.iter().enumerate() {
        let bt = real.mat_b.transpose_times(&pis[j]);
        for l in 0..n_prev {
            coupling[l] += real.prob * bt[l];
        }
    }
    let zeta: Vec<f64> = (0..n_prev)
        .map(|l| (coupling[l] - block.prev_cost[l]).max(0.0))
        .collect();

    Ok(StageOutcome::Solved(StageBlockSolution {
        value: sol.objective,
        pis,
        delta,
        alphas,
        nus,
        zeta,
    }))
}

/// First-stage problem: maximize b_1' pi_1 + V_2(pi_1) over the stage-1 box
/// and accumulated feasibility cuts, again solved in its LP dual form so the
/// maximizing pi_1 reads off the equality-row duals.
pub(crate) struct FirstStage<'a> {
    pub rhs: &'a [f64],
    pub cuts: &'a [Cut],
    pub box_lo: &'a [f64],
    pub box_hi: &'a [f64],
    pub feas_cuts: &'a [FeasibilityCut],
}

pub(crate) enum FirstStageOutcome {
    Solved { value: f64, pi: Vec<f64> },
    /// Box and feasibility cuts have empty intersection.
    Infeasible,
}

pub(crate) fn solve_first_stage(fs: &FirstStage) -> Result<FirstStageOutcome, LpError> {
    let m = fs.rhs.len();
    assert!(!fs.cuts.is_empty(), "first stage requires at least one cut");
    let mut b = LpBuilder::new();
    let nu0 = b.add_cols(fs.cuts.len(), 0.0, 0.0, f64::INFINITY);
    for (i, cut) in fs.cuts.iter().enumerate() {
        b.set_cost(nu0 + i, cut.intercept);
    }
    let up0 = b.add_cols(m, 0.0, 0.0, f64::INFINITY);
    let lo0 = b.add_cols(m, 0.0, 0.0, f64::INFINITY);
    for r in 0..m {
        b.set_cost(up0 + r, fs.box_hi[r]);
        b.set_cost(lo0 + r, -fs.box_lo[r]);
    }
    let l0 = b.add_cols(fs.feas_cuts.len(), 0.0, 0.0, f64::INFINITY);
    for (s, fc) in fs.feas_cuts.iter().enumerate() {
        b.set_cost(l0 + s, fc.offset);
    }
    for r in 0..m {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (i, cut) in fs.cuts.iter().enumerate() {
            let g = cut.gradient[r];
            if g != 0.0 {
                entries.push((nu0 + i, -g));
            }
        }
        entries.push((up0 + r, 1.0));
        entries.push((lo0 + r, -1.0));
        for (s, fc) in fs.feas_cuts.iter().enumerate() {
            if fc.normal[r] != 0.0 {
                entries.push((l0 + s, fc.normal[r]));
            }
        }
        b.add_row(entries, RowSense::Eq, fs.rhs[r]);
    }
    let conv: Vec<(usize, f64)> = (0..fs.cuts.len()).map(|i| (nu0 + i, 1.0)).collect();
    b.add_row(conv, RowSense::Eq, 1.0);

    let lp = b.build(Sense::Min);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(FirstStageOutcome::Solved {
            value: sol.objective,
            pi: sol.duals[..m].to_vec(),
        }),
        LpStatus::Unbounded => Ok(FirstStageOutcome::Infeasible),
        LpStatus::Infeasible => Err(LpError::NumericalFailure(
            "first-stage dual reported infeasible".into(),
        )),
    }
}

pub(crate) fn keep_solution(outcome: StageOutcome, context: &str) -> Result<StageBlockSolution, LpError> {
    match outcome {
        StageOutcome::Solved(s) => Ok(s),
        StageOutcome::Infeasible => Err(LpError::NumericalFailure(format!(
            "{context}: stage block unexpectedly infeasible"
        ))),
    }
}
