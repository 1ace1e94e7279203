//! Dual SDDP: cutting planes on the dynamic programming equations of the
//! dual problem, yielding a deterministic nonincreasing sequence of upper
//! bounds on the primal optimum.
//!
//! The dual recursion may lack relatively complete recourse even when the
//! primal has it, so two variants are provided: penalization (slack on the
//! coupling constraint, charged v_k per unit, exact for large v) and
//! feasibility cuts (states without feasible continuation are excluded by
//! linear cuts generated from an l1 violation test). A per-realization pool
//! mode handles instances whose technology or cost data is random, and an
//! interstage-dependent cost extension lives in [`interstage`].

pub mod interstage;
mod stage_lp;

pub use stage_lp::FeasibilityCut;
pub(crate) use stage_lp::{
    keep_solution, solve_first_stage, solve_stage_block, FirstStage, FirstStageOutcome,
    StageBlock, StageOutcome,
};

use crate::cuts::{Cut, CutPool, Orientation};
use crate::linalg;
use crate::lp::{LpBuilder, LpError, LpStatus, RowSense, Sense};
use crate::model::{DualBox, ModelError, MslpInstance};
use crate::sim::{sample_index, stream_rng};
use crate::trace::{DualTrace, DualTraceRow};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Violations above this threshold trigger a feasibility cut.
const FEAS_CUT_TOL: f64 = 1e-8;
/// Penalty used when a hard stage block must be relaxed to keep going.
const FALLBACK_PENALTY: f64 = 1e9;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("feasibility cuts emptied the first-stage box; dual model is infeasible")]
    RootInfeasible,
    #[error("instance not usable here: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Penalty sequence v_k = min(cap, gamma0 * growth^(k-1)).
#[derive(Debug, Clone, Copy)]
pub struct PenaltySchedule {
    pub gamma0: f64,
    pub growth: f64,
    pub cap: f64,
}

impl PenaltySchedule {
    pub fn constant(v: f64) -> Self {
        Self {
            gamma0: v,
            growth: 1.0,
            cap: f64::INFINITY,
        }
    }

    pub fn geometric(gamma0: f64, growth: f64, cap: f64) -> Self {
        Self {
            gamma0,
            growth,
            cap,
        }
    }

    pub fn validate(&self) -> Result<(), DualError> {
        if !(self.gamma0 > 0.0) || !(self.growth >= 1.0) || !(self.cap > 0.0) {
            return Err(DualError::InvalidInstance(format!(
                "penalty schedule needs gamma0 > 0, growth >= 1, cap > 0; got ({}, {}, {})",
                self.gamma0, self.growth, self.cap
            )));
        }
        Ok(())
    }
}

/// Scalar penalty coefficient at iteration k (k >= 1), broadcast by the
/// stage solver to the coupling dimension.
pub fn penalty_value(schedule: &PenaltySchedule, k: usize) -> f64 {
    assert!(k >= 1, "iterations are 1-based");
    (schedule.gamma0 * schedule.growth.powi(k as i32 - 1)).min(schedule.cap)
}

#[derive(Debug, Clone)]
pub struct DualConfig {
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PoolMode {
    /// One value-function model per stage (technology and cost deterministic
    /// on conditioning stages).
    Single,
    /// One model per (stage, previous-stage realization).
    PerRealization,
}

/// Upper cut pools of one dual run: `pools[s][cond]` models the value of the
/// stage block s..T-1 as a function of pi_{s-1}, conditioned on realization
/// `cond` of stage s-1 (a single entry when conditioning data is fixed).
#[derive(Debug, Clone)]
pub struct DualPolicy {
    pub pools: Vec<Vec<CutPool>>,
    /// True when pools are conditioned per previous-stage realization.
    pub per_realization: bool,
}

impl DualPolicy {
    /// Pointwise-minimum value of the stage-s model at pi.
    pub fn value(&self, s: usize, cond: usize, pi: &[f64]) -> f64 {
        self.pools[s][cond].evaluate(pi)
    }
}

#[derive(Debug)]
pub struct DualRun {
    pub policy: DualPolicy,
    pub trace: DualTrace,
    pub final_ub: f64,
    /// Max coupling violation observed per forward stage, per iteration.
    pub zeta_by_stage: Vec<Vec<f64>>,
    /// Accumulated feasibility cuts per stage (empty for penalized runs).
    pub feasibility_cuts: Vec<Vec<FeasibilityCut>>,
    /// Count of hard stage blocks that needed the penalized fallback.
    pub fallback_solves: usize,
}

fn check_horizon(instance: &MslpInstance) -> Result<(), DualError> {
    if instance.horizon() < 2 {
        return Err(DualError::InvalidInstance(
            "dual SDDP needs at least two stages".into(),
        ));
    }
    Ok(())
}

fn check_boxes(instance: &MslpInstance, boxes: &DualBox) -> Result<(), DualError> {
    if boxes.lower.len() != instance.horizon() || boxes.upper.len() != instance.horizon() {
        return Err(DualError::InvalidInstance(
            "dual box stage count does not match the instance".into(),
        ));
    }
    for s in 0..instance.horizon() {
        if boxes.lower[s].len() != instance.num_rows(s) {
            return Err(DualError::InvalidInstance(format!(
                "dual box at stage {} has {} components, expected {}",
                s + 1,
                boxes.lower[s].len(),
                instance.num_rows(s)
            )));
        }
    }
    Ok(())
}

/// Single-pool mode requires deterministic A and c on every conditioning
/// stage (all but the last).
fn check_single_pool(instance: &MslpInstance) -> Result<(), DualError> {
    for s in 1..instance.horizon().saturating_sub(1) {
        if instance.flags[s].mat_a || instance.flags[s].cost {
            return Err(DualError::InvalidInstance(format!(
                "stage {} has random technology or cost; use the all-random variant",
                s + 1
            )));
        }
    }
    Ok(())
}

fn pool_count(instance: &MslpInstance, s: usize, mode: PoolMode) -> usize {
    match mode {
        PoolMode::Single => 1,
        PoolMode::PerRealization => instance.realizations(s - 1).len(),
    }
}

fn cond_index(j: usize, mode: PoolMode) -> usize {
    match mode {
        PoolMode::Single => 0,
        PoolMode::PerRealization => j,
    }
}

/// Valid initial upper bound on the stage block s..T-1: box-bounded pi makes
/// each b' pi term at most ||b||_1 times the box radius, and slack penalties
/// only subtract.
fn initial_dual_policy(instance: &MslpInstance, boxes: &DualBox, mode: PoolMode) -> DualPolicy {
    let horizon = instance.horizon();
    let mut pools: Vec<Vec<CutPool>> = vec![Vec::new(); horizon];
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
        let m_prev = instance.num_rows(s - 1);
        let count = pool_count(instance, s, mode);
        pools[s] = (0..count)
            .map(|_| {
                let mut pool = CutPool::new(s, Orientation::UpperBounding);
                pool.push(Cut {
                    stage: s,
                    intercept: theta,
                    gradient: vec![0.0; m_prev],
                    iteration: 0,
                });
                pool
            })
            .collect();
    }
    DualPolicy {
        pools,
        per_realization: mode == PoolMode::PerRealization,
    }
}

struct DualForward {
    /// pi_s for s = 0..T-2 (trial points for the backward pass).
    pis: Vec<Vec<f64>>,
    /// Sampled realization index per stage s = 0..T-2.
    conds: Vec<usize>,
    /// V^{k-1}: first-stage value under the pools entering this iteration.
    #[allow(dead_code)]
    first_value: f64,
    /// Max coupling violation per inner stage s = 1..T-2.
    zetas: Vec<f64>,
}

fn next_cut_refs<'a>(
    instance: &MslpInstance,
    policy: &'a DualPolicy,
    s: usize,
    mode: PoolMode,
) -> Vec<&'a [Cut]> {
    (0..instance.realizations(s).len())
        .map(|j| policy.pools[s + 1][cond_index(j, mode)].cuts.as_slice())
        .collect()
}

fn forward_penalized(
    instance: &MslpInstance,
    policy: &DualPolicy,
    boxes: &DualBox,
    v_k: f64,
    mode: PoolMode,
    rng: &mut ChaCha12Rng,
) -> Result<DualForward, DualError> {
    let horizon = instance.horizon();
    let first = solve_first_stage(&FirstStage {
        rhs: &instance.stages[0][0].rhs,
        cuts: &policy.pools[1][0].cuts,
        box_lo: &boxes.lower[0],
        box_hi: &boxes.upper[0],
        feas_cuts: &[],
    })?;
    let (first_value, pi0) = match first {
        FirstStageOutcome::Solved { value, pi } => (value, pi),
        FirstStageOutcome::Infeasible => return Err(DualError::RootInfeasible),
    };
    let mut pis = vec![pi0];
    let mut conds = vec![0usize];
    let mut zetas = Vec::new();
    for s in 1..horizon.saturating_sub(1) {
        let prev = &instance.stages[s - 1][conds[s - 1]];
        let cut_refs = next_cut_refs(instance, policy, s, mode);
        let outcome = solve_stage_block(&StageBlock {
            reals: instance.realizations(s),
            prev_cost: &prev.cost,
            prev_mat_a: &prev.mat_a,
            pi_prev: &pis[s - 1],
            box_lo: &boxes.lower[s],
            box_hi: &boxes.upper[s],
            delta_ub: Some(v_k),
            next_cuts: Some(cut_refs),
            feas_cuts: &[],
            cost_override: None,
        })?;
        let sol = keep_solution(outcome, "penalized forward")?;
        let probs: Vec<f64> = instance.realizations(s).iter().map(|r| r.prob).collect();
        let j = sample_index(&probs, rng);
        zetas.push(sol.zeta.iter().cloned().fold(0.0_f64, f64::max));
        pis.push(sol.pis[j].clone());
        conds.push(j);
    }
    Ok(DualForward {
        pis,
        conds,
        first_value,
        zetas,
    })
}

/// Adds one cut per stage s = T-1..1 at the forward trial points. `v_k` of
/// None runs the hard-constrained (feasibility-cut) backward problems.
fn backward_pass(
    instance: &MslpInstance,
    forward: &DualForward,
    policy: &mut DualPolicy,
    boxes: &DualBox,
    v_k: Option<f64>,
    feas: &[Vec<FeasibilityCut>],
    mode: PoolMode,
    iteration: usize,
    fallback_solves: &mut usize,
) -> Result<(), DualError> {
    let horizon = instance.horizon();
    for s in (1..horizon).rev() {
        let cond_prev = forward.conds[s - 1];
        let prev = &instance.stages[s - 1][cond_prev];
        let pi_prev = &forward.pis[s - 1];
        let cut_refs;
        let next_cuts = if s + 1 < horizon {
            cut_refs = next_cut_refs(instance, policy, s, mode);
            Some(cut_refs)
        } else {
            None
        };
        let stage_feas: &[FeasibilityCut] = feas.get(s).map(|v| v.as_slice()).unwrap_or(&[]);
        let block = StageBlock {
            reals: instance.realizations(s),
            prev_cost: &prev.cost,
            prev_mat_a: &prev.mat_a,
            pi_prev,
            box_lo: &boxes.lower[s],
            box_hi: &boxes.upper[s],
            delta_ub: v_k,
            next_cuts,
            feas_cuts: stage_feas,
            cost_override: None,
        };
        let sol = match solve_stage_block(&block)? {
            StageOutcome::Solved(sol) => sol,
            StageOutcome::Infeasible => {
                // Hard block infeasible at a trial point (box interplay).
                // Re-solving with a large penalty still yields a valid upper
                // bounding cut, since penalization only relaxes.
                *fallback_solves += 1;
                let relaxed = StageBlock {
                    delta_ub: Some(FALLBACK_PENALTY),
                    reals: block.reals,
                    prev_cost: block.prev_cost,
                    prev_mat_a: block.prev_mat_a,
                    pi_prev: block.pi_prev,
                    box_lo: block.box_lo,
                    box_hi: block.box_hi,
                    next_cuts: block.next_cuts.clone(),
                    feas_cuts: block.feas_cuts,
                    cost_override: None,
                };
                keep_solution(solve_stage_block(&relaxed)?, "backward fallback")?
            }
        };
        let a_delta = prev.mat_a.times(&sol.delta);
        let gradient: Vec<f64> = a_delta.iter().map(|v| -v).collect();
        let intercept = sol.value - linalg::dot(&gradient, pi_prev);
        policy.pools[s][cond_index(cond_prev, mode)].push(Cut {
            stage: s,
            intercept,
            gradient,
            iteration,
        });
    }
    Ok(())
}

fn first_stage_ub(
    instance: &MslpInstance,
    policy: &DualPolicy,
    boxes: &DualBox,
    feas: &[Vec<FeasibilityCut>],
) -> Result<f64, DualError> {
    let first = solve_first_stage(&FirstStage {
        rhs: &instance.stages[0][0].rhs,
        cuts: &policy.pools[1][0].cuts,
        box_lo: &boxes.lower[0],
        box_hi: &boxes.upper[0],
        feas_cuts: feas.first().map(|v| v.as_slice()).unwrap_or(&[]),
    })?;
    match first {
        FirstStageOutcome::Solved { value, .. } => Ok(value),
        FirstStageOutcome::Infeasible => Err(DualError::RootInfeasible),
    }
}

fn run_penalized_mode(
    instance: &MslpInstance,
    boxes: &DualBox,
    schedule: &PenaltySchedule,
    config: &DualConfig,
    mode: PoolMode,
) -> Result<DualRun, DualError> {
    instance.ensure_valid()?;
    check_horizon(instance)?;
    check_boxes(instance, boxes)?;
    schedule.validate()?;
    if mode == PoolMode::Single {
        check_single_pool(instance)?;
    }
    let horizon = instance.horizon();
    let mut policy = initial_dual_policy(instance, boxes, mode);
    let mut trace = DualTrace::default();
    let mut zeta_by_stage: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut fallback_solves = 0;
    let mut final_ub = f64::INFINITY;
    for k in 1..=config.max_iters {
        let v_k = penalty_value(schedule, k);
        let mut rng = stream_rng(config.seed, k as u64);
        let fwd = forward_penalized(instance, &policy, boxes, v_k, mode, &mut rng)?;
        backward_pass(
            instance,
            &fwd,
            &mut policy,
            boxes,
            Some(v_k),
            &[],
            mode,
            k,
            &mut fallback_solves,
        )?;
        let ub = first_stage_ub(instance, &policy, boxes, &[])?;
        for (s, z) in fwd.zetas.iter().enumerate() {
            zeta_by_stage[s + 1].push(*z);
        }
        trace.rows.push(DualTraceRow {
            iter: k,
            ub_dual: ub,
            penalty_scalar: v_k,
            max_zeta: fwd.zetas.iter().cloned().fold(0.0_f64, f64::max),
        });
        final_ub = ub;
    }
    Ok(DualRun {
        policy,
        trace,
        final_ub,
        zeta_by_stage,
        feasibility_cuts: Vec::new(),
        fallback_solves,
    })
}

/// Dual SDDP with penalized coupling slacks. Requires deterministic A and c
/// on conditioning stages (single value-function model per stage).
pub fn run_dual_sddp_penalized(
    instance: &MslpInstance,
    boxes: &DualBox,
    schedule: &PenaltySchedule,
    config: &DualConfig,
) -> Result<DualRun, DualError> {
    run_penalized_mode(instance, boxes, schedule, config, PoolMode::Single)
}

/// Penalized Dual SDDP for instances with any data random: one value model
/// per (stage, conditioning realization). When technology and costs are in
/// fact deterministic the per-realization models coincide, so the run
/// collapses to the single-pool recursion and both entry points produce
/// identical results.
pub fn run_dual_sddp_all_random(
    instance: &MslpInstance,
    boxes: &DualBox,
    schedule: &PenaltySchedule,
    config: &DualConfig,
) -> Result<DualRun, DualError> {
    let mode = if check_single_pool(instance).is_ok() {
        PoolMode::Single
    } else {
        PoolMode::PerRealization
    };
    run_penalized_mode(instance, boxes, schedule, config, mode)
}

struct FeasTest {
    violation: f64,
    cut: FeasibilityCut,
}

/// l1 violation test of the stage-s block at pi_{s-1}: minimizes the total
/// coupling slack subject to the stage's own hard constraints (terminal dual
/// feasibility, or accumulated feasibility cuts on inner stages). A positive
/// optimum certifies infeasibility and its dual yields a valid cut for
/// stage s-1.
fn l1_feasibility_test(
    instance: &MslpInstance,
    s: usize,
    cond_prev: usize,
    pi_prev: &[f64],
    stage_feas: &[FeasibilityCut],
    iteration: usize,
) -> Result<FeasTest, DualError> {
    let horizon = instance.horizon();
    let terminal = s + 1 == horizon;
    let prev = &instance.stages[s - 1][cond_prev];
    let reals = instance.realizations(s);
    let m_t = instance.num_rows(s);
    let n_t = instance.num_vars(s);
    let n_prev = instance.num_vars(s - 1);

    let mut b = LpBuilder::new();
    let pi0 = b.add_cols(reals.len() * m_t, 0.0, f64::NEG_INFINITY, f64::INFINITY);
    let zeta0 = b.add_cols(n_prev, 1.0, 0.0, f64::INFINITY);

    // Coupling rows: A_{s-1}' pi_prev + sum_j p_j B_j' pi_j <= c_{s-1} + zeta
    let at_pi = prev.mat_a.transpose_times(pi_prev);
    let coupling0 = b.num_rows();
    for l in 0..n_prev {
        let mut entries = vec![(zeta0 + l, -1.0)];
        for (j, real) in reals.iter().enumerate() {
            // column l of B'^ = row l of B' = column over pi components
            for &(r, v) in real.mat_b.col(l) {
                entries.push((pi0 + j * m_t + r, real.prob * v));
            }
        }
        b.add_row(entries, RowSense::Le, prev.cost[l] - at_pi[l]);
    }
    if terminal {
        for (j, real) in reals.iter().enumerate() {
            let a_dense = real.mat_a.to_dense();
            for v in 0..n_t {
                let entries: Vec<(usize, f64)> = (0..m_t)
                    .filter(|&r| a_dense[r][v] != 0.0)
                    .map(|r| (pi0 + j * m_t + r, a_dense[r][v]))
                    .collect();
                b.add_row(entries, RowSense::Le, real.cost[v]);
            }
        }
    } else {
        for j in 0..reals.len() {
            for fc in stage_feas {
                let entries: Vec<(usize, f64)> = (0..m_t)
                    .filter(|&r| fc.normal[r] != 0.0)
                    .map(|r| (pi0 + j * m_t + r, fc.normal[r]))
                    .collect();
                b.add_row(entries, RowSense::Le, fc.offset);
            }
        }
    }

    let lp = b.build(Sense::Min);
    let sol = crate::lp::solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(DualError::Lp(LpError::NumericalFailure(format!(
            "l1 feasibility test at stage {} returned {:?}",
            s + 1,
            sol.status
        ))));
    }
    let violation = sol.objective;
    // delta = -(coupling duals), in [0, 1] by construction.
    let delta: Vec<f64> = (0..n_prev).map(|l| -sol.duals[coupling0 + l]).collect();
    let normal = prev.mat_a.times(&delta);
    let offset = linalg::dot(&normal, pi_prev) - violation;
    Ok(FeasTest {
        violation,
        cut: FeasibilityCut {
            stage: s - 1,
            normal,
            offset,
            iteration,
        },
    })
}

/// Dual SDDP with feasibility cuts: no slack variables anywhere. Forward
/// passes test each stage for feasible continuation, appending a cut and
/// backtracking one stage on failure; backward passes solve the
/// hard-constrained stage blocks.
pub fn run_dual_sddp_feasibility_cuts(
    instance: &MslpInstance,
    boxes: &DualBox,
    config: &DualConfig,
) -> Result<DualRun, DualError> {
    instance.ensure_valid()?;
    check_horizon(instance)?;
    check_boxes(instance, boxes)?;
    check_single_pool(instance)?;
    let mode = PoolMode::Single;
    let horizon = instance.horizon();
    let mut policy = initial_dual_policy(instance, boxes, mode);
    let mut feas: Vec<Vec<FeasibilityCut>> = vec![Vec::new(); horizon];
    let mut trace = DualTrace::default();
    let mut zeta_by_stage: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut fallback_solves = 0;
    let mut final_ub = f64::INFINITY;

    for k in 1..=config.max_iters {
        let mut rng = stream_rng(config.seed, k as u64);
        // Forward pass with backtracking.
        let mut pis: Vec<Vec<f64>> = Vec::new();
        let mut conds: Vec<usize> = Vec::new();
        let mut max_violation = 0.0_f64;
        let mut s = 0usize;
        let mut guard = 0usize;
        loop {
            guard += 1;
            if guard > 400 * horizon {
                let cut_counts: Vec<usize> = feas.iter().map(|v| v.len()).collect();
                return Err(DualError::Lp(LpError::NumericalFailure(format!(
                    "feasibility-cut forward pass failed to progress at stage {} \
                     (iteration {k}, cuts per stage {:?})",
                    s + 1,
                    cut_counts
                ))));
            }
            if s == 0 {
                let first = solve_first_stage(&FirstStage {
                    rhs: &instance.stages[0][0].rhs,
                    cuts: &policy.pools[1][0].cuts,
                    box_lo: &boxes.lower[0],
                    box_hi: &boxes.upper[0],
                    feas_cuts: &feas[0],
                })?;
                match first {
                    FirstStageOutcome::Solved { pi, .. } => {
                        pis.clear();
                        conds.clear();
                        pis.push(pi);
                        conds.push(0);
                        s = 1;
                    }
                    FirstStageOutcome::Infeasible => return Err(DualError::RootInfeasible),
                }
                if horizon == 1 {
                    break;
                }
                continue;
            }
            let test = l1_feasibility_test(instance, s, conds[s - 1], &pis[s - 1], &feas[s], k)?;
            if test.violation > FEAS_CUT_TOL {
                if std::env::var("MSPDUALS_TRACE_FEAS").is_ok() {
                    eprintln!(
                        "iter {k} stage {s}: violation {:.3e} at pi {:?}, cut n={:?} o={}",
                        test.violation,
                        &pis[s - 1],
                        test.cut.normal,
                        test.cut.offset
                    );
                }
                max_violation = max_violation.max(test.violation);
                feas[s - 1].push(test.cut);
                // Drop the now-excluded trial point; stage s-1 will push a
                // fresh one.
                pis.truncate(s - 1);
                conds.truncate(s - 1);
                s -= 1;
                continue;
            }
            if s + 1 == horizon {
                break; // all trial points feasible
            }
            // Hard stage block to generate the next trial point.
            let prev = &instance.stages[s - 1][conds[s - 1]];
            let cut_refs = next_cut_refs(instance, &policy, s, mode);
            let outcome = solve_stage_block(&StageBlock {
                reals: instance.realizations(s),
                prev_cost: &prev.cost,
                prev_mat_a: &prev.mat_a,
                pi_prev: &pis[s - 1],
                box_lo: &boxes.lower[s],
                box_hi: &boxes.upper[s],
                delta_ub: None,
                next_cuts: Some(cut_refs.clone()),
                feas_cuts: &feas[s],
                cost_override: None,
            })?;
            let sol = match outcome {
                StageOutcome::Solved(sol) => sol,
                StageOutcome::Infeasible => {
                    // Continuation exists but not inside the box: fall back to
                    // a penalized solve for the trial point only.
                    fallback_solves += 1;
                    let relaxed = StageBlock {
                        reals: instance.realizations(s),
                        prev_cost: &prev.cost,
                        prev_mat_a: &prev.mat_a,
                        pi_prev: &pis[s - 1],
                        box_lo: &boxes.lower[s],
                        box_hi: &boxes.upper[s],
                        delta_ub: Some(FALLBACK_PENALTY),
                        next_cuts: Some(cut_refs),
                        feas_cuts: &feas[s],
                        cost_override: None,
                    };
                    keep_solution(solve_stage_block(&relaxed)?, "feasibility forward fallback")?
                }
            };
            let probs: Vec<f64> = instance.realizations(s).iter().map(|r| r.prob).collect();
            let j = sample_index(&probs, &mut rng);
            pis.push(sol.pis[j].clone());
            conds.push(j);
            s += 1;
        }

        let fwd = DualForward {
            pis,
            conds,
            first_value: 0.0,
            zetas: Vec::new(),
        };
        backward_pass(
            instance,
            &fwd,
            &mut policy,
            boxes,
            None,
            &feas,
            mode,
            k,
            &mut fallback_solves,
        )?;
        let ub = first_stage_ub(instance, &policy, boxes, &feas)?;
        trace.rows.push(DualTraceRow {
            iter: k,
            ub_dual: ub,
            penalty_scalar: 0.0,
            max_zeta: max_violation,
        });
        for z in zeta_by_stage.iter_mut() {
            z.push(0.0);
        }
        final_ub = ub;
    }

    Ok(DualRun {
        policy,
        trace,
        final_ub,
        zeta_by_stage,
        feasibility_cuts: feas,
        fallback_solves,
    })
}

/// One simulated dual trajectory: pi_s for every stage, with the sampled
/// realization indices.
#[derive(Debug, Clone)]
pub struct DualSimPath {
    pub pis: Vec<Vec<f64>>,
    pub scenario: Vec<usize>,
}

/// Simulates the converged dual policy forward through all stages (including
/// the terminal block) with a large constant penalty, recording the dual
/// trajectories. These are the optimal stage multipliers seen from the dual
/// side.
pub fn simulate_dual_multipliers(
    instance: &MslpInstance,
    policy: &DualPolicy,
    boxes: &DualBox,
    penalty: f64,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<DualSimPath>, DualError> {
    instance.ensure_valid()?;
    check_horizon(instance)?;
    let horizon = instance.horizon();
    let mode = if policy.per_realization {
        PoolMode::PerRealization
    } else {
        PoolMode::Single
    };
    let sims: Vec<Result<DualSimPath, DualError>> = crate::sim::parallel_map(n_sims, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let first = solve_first_stage(&FirstStage {
            rhs: &instance.stages[0][0].rhs,
            cuts: &policy.pools[1][0].cuts,
            box_lo: &boxes.lower[0],
            box_hi: &boxes.upper[0],
            feas_cuts: &[],
        })?;
        let pi0 = match first {
            FirstStageOutcome::Solved { pi, .. } => pi,
            FirstStageOutcome::Infeasible => return Err(DualError::RootInfeasible),
        };
        let mut pis = vec![pi0];
        let mut scenario = vec![0usize];
        for s in 1..horizon {
            let prev = &instance.stages[s - 1][*scenario.last().unwrap()];
            let cut_refs;
            let next_cuts = if s + 1 < horizon {
                cut_refs = next_cut_refs(instance, policy, s, mode);
                Some(cut_refs)
            } else {
                None
            };
            let outcome = solve_stage_block(&StageBlock {
                reals: instance.realizations(s),
                prev_cost: &prev.cost,
                prev_mat_a: &prev.mat_a,
                pi_prev: pis.last().unwrap(),
                box_lo: &boxes.lower[s],
                box_hi: &boxes.upper[s],
                delta_ub: Some(penalty),
                next_cuts,
                feas_cuts: &[],
                cost_override: None,
            })?;
            let sol = keep_solution(outcome, "dual simulation")?;
            let probs: Vec<f64> = instance.realizations(s).iter().map(|r| r.prob).collect();
            let j = sample_index(&probs, &mut rng);
            pis.push(sol.pis[j].clone());
            scenario.push(j);
        }
        Ok(DualSimPath { pis, scenario })
    });
    sims.into_iter().collect()
}

/// Uniform per-stage boxes (used when Lemma-style boxes are not available,
/// e.g. for augmented-state models).
pub fn uniform_boxes(instance: &MslpInstance, half_width: f64) -> DualBox {
    DualBox {
        lower: (0..instance.horizon())
            .map(|s| vec![-half_width; instance.num_rows(s)])
            .collect(),
        upper: (0..instance.horizon())
            .map(|s| vec![half_width; instance.num_rows(s)])
            .collect(),
        validated: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_schedule_values() {
        let s = PenaltySchedule::geometric(1e4, 1.3, 1e10);
        assert_eq!(penalty_value(&s, 1), 1e4);
        assert!((penalty_value(&s, 2) - 1.3e4).abs() < 1e-9);
        let constant = PenaltySchedule::geometric(1e9, 1.0, f64::INFINITY);
        assert_eq!(penalty_value(&constant, 1), 1e9);
        assert_eq!(penalty_value(&constant, 77), 1e9);
        // cap kicks in
        let capped = PenaltySchedule::geometric(8.0, 2.0, 20.0);
        assert_eq!(penalty_value(&capped, 1), 8.0);
        assert_eq!(penalty_value(&capped, 2), 16.0);
        assert_eq!(penalty_value(&capped, 3), 20.0);
    }

    #[test]
    fn schedule_must_be_nondecreasing() {
        assert!(PenaltySchedule::geometric(1.0, 0.5, 10.0).validate().is_err());
        assert!(PenaltySchedule::geometric(-1.0, 1.5, 10.0).validate().is_err());
        assert!(PenaltySchedule::geometric(1.0, 1.5, 10.0).validate().is_ok());
    }
}
