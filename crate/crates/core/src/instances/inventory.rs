//! Backlog inventory model as an MSLP.
//!
//! Stage variables are (order o_t, on-hand e_t, backlog s_t) with the single
//! balance row `e_t - s_t - o_t = e_{t-1} - s_{t-1} - D_t`, so the net
//! inventory x_t = e_t - s_t may go negative while all variables stay
//! nonnegative. Costs are a_t o_t + h_t e_t + g_t s_t, which is exactly the
//! order/holding/back-order cost of the textbook model once (.)+ parts are
//! split. The one-row form keeps the dual state scalar, which the grid
//! oracle requires.
//!
//! With autoregressive demand the level D_t becomes a fourth state variable
//! d_t with its own defining row `d_t = eps_t (phi d_{t-1} + mu)`, making the
//! noise enter both b and B.

use crate::linalg::SparseMat;
use crate::model::{MslpInstance, StageRealization};
use crate::sensitivity::{DemandProcessSpec, InventoryArMeta};
use crate::sim::stream_rng;
use crate::linalg::normal_quantile;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Row index of the demand-definition constraint in the AR model.
pub const INVENTORY_AR_DEMAND_ROW: usize = 1;
/// Stage variable count of the AR model: (o, e, s, d).
pub const INVENTORY_AR_STAGE_VARS: usize = 4;
/// Index of the demand-state variable d_t.
pub const INVENTORY_AR_DEMAND_VAR: usize = 3;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("invalid cost curves: {0}")]
    InvalidCosts(String),
}

#[derive(Debug, Clone)]
pub enum DemandMode {
    /// Stagewise-independent demands xi_tj = (5 + 0.5 t)(1.5 + 0.1 z_tj)
    /// with standard normal draws under the instance seed (stage 1 takes
    /// z = 0). Only b is random.
    SampledIid,
    /// Multiplicative AR demand with the level as a state variable; the
    /// noise enters both b and B. Stage 1 is deterministic (eps = 1).
    Ar(DemandProcessSpec),
}

#[derive(Debug, Clone)]
pub struct InventoryConfig {
    pub horizon: usize,
    pub branching: usize,
    /// a_t per stage (1-based formulas evaluated at construction).
    pub order_costs: Vec<f64>,
    pub backorder_costs: Vec<f64>,
    pub holding_costs: Vec<f64>,
    pub x0: f64,
    pub demand: DemandMode,
    pub seed: u64,
}

impl InventoryConfig {
    /// Benchmark parameters: a_t = 1.5 + cos(pi t / 6), g = 2.8, h = 0.2,
    /// x0 = 10, stagewise-independent sampled demand.
    pub fn benchmark(horizon: usize, branching: usize, seed: u64) -> Self {
        Self {
            horizon,
            branching,
            order_costs: (1..=horizon)
                .map(|t| 1.5 + (std::f64::consts::PI * t as f64 / 6.0).cos())
                .collect(),
            backorder_costs: vec![2.8; horizon],
            holding_costs: vec![0.2; horizon],
            x0: 10.0,
            demand: DemandMode::SampledIid,
            seed,
        }
    }

    /// Benchmark cost curves with AR demand.
    pub fn benchmark_ar(
        horizon: usize,
        branching: usize,
        spec: DemandProcessSpec,
        seed: u64,
    ) -> Self {
        let mut cfg = Self::benchmark(horizon, branching, seed);
        cfg.demand = DemandMode::Ar(spec);
        cfg
    }

    fn validate(&self) -> Result<(), InventoryError> {
        if self.horizon == 0 || self.branching == 0 {
            return Err(InventoryError::InvalidCosts(
                "horizon and branching must be positive".into(),
            ));
        }
        if self.order_costs.len() != self.horizon
            || self.backorder_costs.len() != self.horizon
            || self.holding_costs.len() != self.horizon
        {
            return Err(InventoryError::InvalidCosts(format!(
                "cost curves must have {} entries",
                self.horizon
            )));
        }
        for t in 0..self.horizon {
            let (a, g, h) = (
                self.order_costs[t],
                self.backorder_costs[t],
                self.holding_costs[t],
            );
            if !(g > a && a >= 0.0) {
                return Err(InventoryError::InvalidCosts(format!(
                    "stage {}: need g > a >= 0, got a = {a}, g = {g}",
                    t + 1
                )));
            }
            if !(h > 0.0) {
                return Err(InventoryError::InvalidCosts(format!(
                    "stage {}: need h > 0, got {h}",
                    t + 1
                )));
            }
        }
        if self.x0 < 0.0 {
            return Err(InventoryError::InvalidCosts(format!(
                "x0 must be nonnegative, got {}",
                self.x0
            )));
        }
        Ok(())
    }
}

/// Per-instance realization metadata for downstream consumers.
#[derive(Debug, Clone)]
pub enum InventoryMeta {
    /// demands[s][j]: sampled demand per stage and realization.
    Iid { demands: Vec<Vec<f64>> },
    Ar(InventoryArMeta),
}

/// Builds the MSLP encoding of the inventory model.
pub fn make_inventory_instance(
    config: &InventoryConfig,
) -> Result<(MslpInstance, InventoryMeta), InventoryError> {
    config.validate()?;
    match &config.demand {
        DemandMode::SampledIid => Ok(build_iid(config)),
        DemandMode::Ar(spec) => Ok(build_ar(config, *spec)),
    }
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u: f64 = rng.random();
    normal_quantile(u.clamp(1e-16, 1.0 - 1e-16))
}

fn build_iid(config: &InventoryConfig) -> (MslpInstance, InventoryMeta) {
    let mut rng = stream_rng(config.seed, 0);
    let mut stages = Vec::with_capacity(config.horizon);
    let mut demands = Vec::with_capacity(config.horizon);
    let mut clamped = 0usize;
    for s in 0..config.horizon {
        let t = (s + 1) as f64;
        let scale = 5.0 + 0.5 * t;
        let n_real = if s == 0 { 1 } else { config.branching };
        let mut stage_demands = Vec::with_capacity(n_real);
        for _ in 0..n_real {
            let z = if s == 0 { 0.0 } else { standard_normal(&mut rng) };
            let mut d = scale * (1.5 + 0.1 * z);
            if d < 1e-6 {
                d = 1e-6;
                clamped += 1;
            }
            stage_demands.push(d);
        }
        let reals = stage_demands
            .iter()
            .map(|&d| StageRealization {
                // columns (o, e, s): e - s - o = e_prev - s_prev - D
                mat_a: SparseMat::from_dense(&[vec![-1.0, 1.0, -1.0]]),
                mat_b: if s == 0 {
                    SparseMat::zeros(1, 0)
                } else {
                    SparseMat::from_dense(&[vec![0.0, -1.0, 1.0]])
                },
                cost: vec![
                    config.order_costs[s],
                    config.holding_costs[s],
                    config.backorder_costs[s],
                ],
                rhs: vec![if s == 0 { config.x0 - d } else { -d }],
                prob: 1.0 / n_real as f64,
            })
            .collect();
        stages.push(reals);
        demands.push(stage_demands);
    }
    if clamped > 0 {
        eprintln!("inventory generator: clamped {clamped} non-positive demand draws to 1e-6");
    }
    (
        MslpInstance::new(stages),
        InventoryMeta::Iid { demands },
    )
}

fn build_ar(config: &InventoryConfig, spec: DemandProcessSpec) -> (MslpInstance, InventoryMeta) {
    let mut rng = stream_rng(config.seed, 0);
    let mut stages = Vec::with_capacity(config.horizon);
    let mut eps_all: Vec<Vec<f64>> = Vec::with_capacity(config.horizon);
    for s in 0..config.horizon {
        let n_real = if s == 0 { 1 } else { config.branching };
        let eps_stage: Vec<f64> = if s == 0 {
            vec![1.0]
        } else {
            (0..n_real).map(|_| spec.sample_eps(&mut rng)).collect()
        };
        let reals = eps_stage
            .iter()
            .map(|&eps| {
                // columns (o, e, s, d); rows (balance, demand definition)
                let mat_a = SparseMat::from_dense(&[
                    vec![-1.0, 1.0, -1.0, 1.0],
                    vec![0.0, 0.0, 0.0, 1.0],
                ]);
                let (mat_b, rhs) = if s == 0 {
                    (
                        SparseMat::zeros(2, 0),
                        vec![config.x0, spec.phi * spec.d0 + spec.mu],
                    )
                } else {
                    (
                        SparseMat::from_dense(&[
                            vec![0.0, -1.0, 1.0, 0.0],
                            vec![0.0, 0.0, 0.0, -eps * spec.phi],
                        ]),
                        vec![0.0, eps * spec.mu],
                    )
                };
                StageRealization {
                    mat_a,
                    mat_b,
                    cost: vec![
                        config.order_costs[s],
                        config.holding_costs[s],
                        config.backorder_costs[s],
                        0.0,
                    ],
                    rhs,
                    prob: 1.0 / n_real as f64,
                }
            })
            .collect();
        stages.push(reals);
        eps_all.push(eps_stage);
    }
    let meta = InventoryArMeta {
        spec,
        eps: eps_all,
        demand_row: INVENTORY_AR_DEMAND_ROW,
        demand_var: INVENTORY_AR_DEMAND_VAR,
    };
    (MslpInstance::new(stages), InventoryMeta::Ar(meta))
}

/// Samples one demand path D_t = eps_t (phi D_{t-1} + mu), t = 1..horizon,
/// returning (D_t, eps_t) pairs. Positive by construction.
pub fn sample_demand_path(spec: &DemandProcessSpec, rng: &mut ChaCha12Rng) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(spec.horizon);
    let mut d_prev = spec.d0;
    for _ in 0..spec.horizon {
        let eps = spec.sample_eps(rng);
        let d = eps * (spec.phi * d_prev + spec.mu);
        out.push((d, eps));
        d_prev = d;
    }
    out
}
