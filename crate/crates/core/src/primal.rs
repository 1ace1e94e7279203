//! Primal SDDP: sampled forward passes generate trial states and a
//! statistical upper bound, backward passes add lower-bounding cuts to the
//! expected cost-to-go models, and converged policies expose the optimal
//! dual trajectories used by the sensitivity layer.

use crate::cuts::{Cut, Orientation, PolicyApprox};
use crate::linalg::{self, normal_quantile};
use crate::lp::{solve_lp, LpBuilder, LpError, LpSolution, LpStatus, RowSense, Sense};
use crate::model::{ModelError, MslpInstance};
use crate::sim::{mean_and_se, sample_index, stream_rng};
use crate::trace::{BoundsTrace, PrimalTraceRow};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrimalError {
    #[error("stage {stage} subproblem infeasible at incoming state {state:?}; primal recourse assumption violated")]
    StageInfeasible { stage: usize, state: Vec<f64> },
    #[error("stage {stage} subproblem unbounded below; instance has no finite optimum")]
    StageUnbounded { stage: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct PrimalConfig {
    pub max_iters: usize,
    /// Relative gap (Ub - Lb)/Ub at which to stop.
    pub gap_tol: f64,
    /// One-sided confidence level of the statistical upper bound.
    pub confidence: f64,
    pub seed: u64,
    /// Forward paths per iteration.
    pub forward_batch: usize,
    /// L1 bound on feasible stage decisions, used only to seed valid initial
    /// lower cuts when some cost coefficients are negative.
    pub state_l1_bound: f64,
}

impl Default for PrimalConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            gap_tol: 0.01,
            confidence: 0.975,
            seed: 0,
            forward_batch: 1,
            state_l1_bound: 1e6,
        }
    }
}

/// One sampled trajectory of the forward process.
#[derive(Debug, Clone)]
pub struct ForwardPath {
    /// x_t per stage (0-based).
    pub states: Vec<Vec<f64>>,
    /// Sampled realization index per stage (stage 0 is always 0).
    pub scenario: Vec<usize>,
    /// Immediate cost along the path.
    pub cost: f64,
}

/// Forward trajectory with the stage multipliers needed for sensitivities.
#[derive(Debug, Clone)]
pub struct MultiplierPath {
    pub path: ForwardPath,
    /// Equality-row duals of each stage subproblem along the trajectory.
    pub multipliers: Vec<Vec<f64>>,
    /// Count of vanishing nonbasic reduced costs per stage (degeneracy signal).
    pub degenerate_stages: Vec<usize>,
}

/// Fresh lower-bounding pools: pools[s] models the expected cost-to-go after
/// stage s (s = 0..T-2), initialized with a valid affine lower bound.
pub fn initial_primal_policy(instance: &MslpInstance, state_l1_bound: f64) -> PolicyApprox {
    let horizon = instance.horizon();
    let mut policy = PolicyApprox::new(Orientation::LowerBounding, horizon.saturating_sub(1));
    for s in 0..horizon.saturating_sub(1) {
        let mut theta = 0.0;
        for tau in (s + 1)..horizon {
            let worst = instance
                .realizations(tau)
                .iter()
                .flat_map(|r| r.cost.iter().cloned())
                .fold(0.0_f64, f64::min);
            theta += worst.min(0.0) * state_l1_bound;
        }
        policy.pools[s].push(Cut {
            stage: s,
            intercept: theta,
            gradient: vec![0.0; instance.num_vars(s)],
            iteration: 0,
        });
    }
    policy
}

/// Solves the stage-s subproblem for realization j at incoming state
/// `x_prev`, with the cost-to-go replaced by the cut-pool model.
fn solve_stage(
    instance: &MslpInstance,
    policy: &PolicyApprox,
    s: usize,
    j: usize,
    x_prev: &[f64],
) -> Result<LpSolution, PrimalError> {
    let real = &instance.stages[s][j];
    let (n, m) = instance.dims[s];
    let mut b = LpBuilder::new();
    for v in 0..n {
        b.add_col(real.cost[v], 0.0, f64::INFINITY);
    }
    let theta = if s + 1 < instance.horizon() {
        Some(b.add_col(1.0, f64::NEG_INFINITY, f64::INFINITY))
    } else {
        None
    };
    let coupling = real.mat_b.times(x_prev);
    let a_dense = real.mat_a.to_dense();
    for r in 0..m {
        let entries: Vec<(usize, f64)> = (0..n)
            .filter(|&v| a_dense[r][v] != 0.0)
            .map(|v| (v, a_dense[r][v]))
            .collect();
        b.add_row(entries, RowSense::Eq, real.rhs[r] - coupling[r]);
    }
    if let Some(th) = theta {
        for cut in &policy.pools[s].cuts {
            let mut entries = vec![(th, 1.0)];
            for (v, g) in cut.gradient.iter().enumerate() {
                if *g != 0.0 {
                    entries.push((v, -*g));
                }
            }
            b.add_row(entries, RowSense::Ge, cut.intercept);
        }
    }
    let lp = b.build(Sense::Min);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(PrimalError::StageInfeasible {
            stage: s + 1,
            state: x_prev.to_vec(),
        }),
        LpStatus::Unbounded => Err(PrimalError::StageUnbounded { stage: s + 1 }),
    }
}

/// Samples one forward trajectory under the current policy.
pub fn primal_forward_pass(
    instance: &MslpInstance,
    policy: &PolicyApprox,
    rng: &mut ChaCha12Rng,
) -> Result<ForwardPath, PrimalError> {
    forward_with_duals(instance, policy, rng, false).map(|(p, _, _)| p)
}

fn forward_with_duals(
    instance: &MslpInstance,
    policy: &PolicyApprox,
    rng: &mut ChaCha12Rng,
    keep_duals: bool,
) -> Result<(ForwardPath, Vec<Vec<f64>>, Vec<usize>), PrimalError> {
    let horizon = instance.horizon();
    let mut states = Vec::with_capacity(horizon);
    let mut scenario = Vec::with_capacity(horizon);
    let mut duals = Vec::new();
    let mut degen = Vec::new();
    let mut cost = 0.0;
    let mut x_prev: Vec<f64> = Vec::new();
    for s in 0..horizon {
        let j = if s == 0 {
            0
        } else {
            let probs: Vec<f64> = instance.realizations(s).iter().map(|r| r.prob).collect();
            sample_index(&probs, rng)
        };
        let sol = solve_stage(instance, policy, s, j, &x_prev)?;
        let n = instance.num_vars(s);
        let m = instance.num_rows(s);
        let x: Vec<f64> = sol.primal[..n].to_vec();
        cost += linalg::dot(&instance.stages[s][j].cost, &x);
        if keep_duals {
            duals.push(sol.duals[..m].to_vec());
            degen.push(sol.zero_reduced_costs);
        }
        scenario.push(j);
        states.push(x.clone());
        x_prev = x;
    }
    Ok((
        ForwardPath {
            states,
            scenario,
            cost,
        },
        duals,
        degen,
    ))
}

/// Adds one cut per stage t = 2..T (in reverse) from the trial trajectory.
/// Returns the new cuts; they are already pushed into `policy`.
pub fn primal_backward_pass(
    instance: &MslpInstance,
    states: &[Vec<f64>],
    policy: &mut PolicyApprox,
    iteration: usize,
) -> Result<Vec<Cut>, PrimalError> {
    let horizon = instance.horizon();
    let mut new_cuts = Vec::new();
    for s in (1..horizon).rev() {
        let x_trial = &states[s - 1];
        let n_prev = instance.num_vars(s - 1);
        let mut value = 0.0;
        let mut grad = vec![0.0; n_prev];
        let m = instance.num_rows(s);
        for (j, real) in instance.realizations(s).iter().enumerate() {
            let sol = solve_stage(instance, policy, s, j, x_trial)?;
            value += real.prob * sol.objective;
            let bt_lambda = real.mat_b.transpose_times(&sol.duals[..m]);
            for v in 0..n_prev {
                grad[v] -= real.prob * bt_lambda[v];
            }
        }
        let intercept = value - linalg::dot(&grad, x_trial);
        let cut = Cut {
            stage: s - 1,
            intercept,
            gradient: grad,
            iteration,
        };
        policy.pools[s - 1].push(cut.clone());
        new_cuts.push(cut);
    }
    Ok(new_cuts)
}

/// First-stage optimal value under the current policy (the lower bound).
pub fn first_stage_value(
    instance: &MslpInstance,
    policy: &PolicyApprox,
) -> Result<f64, PrimalError> {
    Ok(solve_stage(instance, policy, 0, 0, &[])?.objective)
}

#[derive(Debug)]
pub struct PrimalRun {
    pub policy: PolicyApprox,
    pub trace: BoundsTrace,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub iterations: usize,
}

/// Runs primal SDDP until the relative gap between the statistical upper
/// bound (over all accumulated forward costs) and the lower bound drops
/// below `gap_tol`, or `max_iters` is reached.
pub fn run_primal_sddp(
    instance: &MslpInstance,
    config: &PrimalConfig,
) -> Result<PrimalRun, PrimalError> {
    instance.ensure_valid()?;
    let mut policy = initial_primal_policy(instance, config.state_l1_bound);
    let mut trace = BoundsTrace::default();
    let mut all_costs: Vec<f64> = Vec::new();
    let z = normal_quantile(config.confidence);
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut iterations = 0;

    for k in 1..=config.max_iters {
        iterations = k;
        for b in 0..config.forward_batch.max(1) {
            let stream = (k as u64) * config.forward_batch.max(1) as u64 + b as u64;
            let mut rng = stream_rng(config.seed, stream);
            let path = primal_forward_pass(instance, &policy, &mut rng)?;
            all_costs.push(path.cost);
            primal_backward_pass(instance, &path.states, &mut policy, k)?;
        }
        lb = first_stage_value(instance, &policy)?;
        let (mean, se) = mean_and_se(&all_costs);
        ub = mean + z * se;
        trace.rows.push(PrimalTraceRow {
            iter: k,
            lb,
            ub_stat: ub,
            seed: config.seed,
        });
        if ub.abs() > 1e-300 {
            let gap = (ub - lb) / ub;
            if gap.abs() < config.gap_tol && ub >= lb - 1e-9 * (1.0 + ub.abs()) {
                break;
            }
        }
    }

    Ok(PrimalRun {
        policy,
        trace,
        lower_bound: lb,
        upper_bound: ub,
        iterations,
    })
}

/// Simulates `n_sims` forward trajectories under a converged policy and
/// records the stage multipliers (equality-row duals) along each one.
pub fn extract_multiplier_trajectories(
    instance: &MslpInstance,
    policy: &PolicyApprox,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<MultiplierPath>, PrimalError> {
    let results: Vec<Result<MultiplierPath, PrimalError>> =
        crate::sim::parallel_map(n_sims, |i| {
            let mut rng = stream_rng(seed, i as u64);
            forward_with_duals(instance, policy, &mut rng, true).map(|(path, duals, degen)| {
                MultiplierPath {
                    path,
                    multipliers: duals,
                    degenerate_stages: degen,
                }
            })
        });
    results.into_iter().collect()
}
