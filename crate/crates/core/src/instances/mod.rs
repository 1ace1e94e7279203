//! Generators and serializers for the test problems: a backlog inventory
//! model (stagewise-independent demand or multiplicative AR demand with the
//! demand level as a state variable), a small hydro-thermal system, and the
//! packaging of multiplicative cost processes.

mod inventory;
mod io;

pub use inventory::{
    make_inventory_instance, sample_demand_path, DemandMode, InventoryConfig, InventoryError,
    InventoryMeta, INVENTORY_AR_DEMAND_ROW, INVENTORY_AR_DEMAND_VAR, INVENTORY_AR_STAGE_VARS,
};
pub use io::{load_instance, save_instance, ParseError};

use crate::dual::interstage::{build_interstage_cost_dual, CostProcessSpec, InterstageDualModel, InterstageError};
use crate::linalg::SparseMat;
use crate::model::{MslpInstance, StageRealization};
use crate::sim::stream_rng;
use rand::prelude::*;

/// Packages a base instance with a multiplicative cost process, validating
/// the joint (b, eps) support alignment.
pub fn make_cost_ar_instance(
    base: &MslpInstance,
    spec: &CostProcessSpec,
) -> Result<InterstageDualModel, InterstageError> {
    build_interstage_cost_dual(base, spec)
}

/// Small hydro-thermal scheduling instance: `reservoirs` coupled reservoirs
/// with random inflows, two thermal units, and an unserved-energy variable
/// that guarantees recourse. Stage variables (per stage):
/// storage[r], turbine[r], spill[r], thermal[2], deficit.
pub fn make_hydro_instance(
    reservoirs: usize,
    horizon: usize,
    branching: usize,
    seed: u64,
) -> MslpInstance {
    assert!(reservoirs >= 1 && horizon >= 1 && branching >= 1);
    let mut rng = stream_rng(seed, 0);
    let n = 3 * reservoirs + 3;
    let m = reservoirs + 1;
    let initial_storage: Vec<f64> = (0..reservoirs)
        .map(|_| 40.0 + 20.0 * rng.random::<f64>())
        .collect();
    let efficiency: Vec<f64> = (0..reservoirs)
        .map(|_| 0.8 + 0.4 * rng.random::<f64>())
        .collect();
    let thermal_cost = [25.0, 60.0];
    let deficit_cost = 500.0;
    let spill_cost = 0.01;

    let mut stages: Vec<Vec<StageRealization>> = Vec::new();
    for s in 0..horizon {
        let n_real = if s == 0 { 1 } else { branching };
        let season = 1.0 + 0.35 * ((s as f64) * std::f64::consts::PI / 6.0).sin();
        let demand = 30.0 * reservoirs as f64 * season / 2.0 + 20.0;
        let mut reals = Vec::with_capacity(n_real);
        for _ in 0..n_real {
            // columns: v[r], q[r], w[r] (spill), g[0..2], deficit
            let mut trips: Vec<(usize, usize, f64)> = Vec::new();
            for r in 0..reservoirs {
                // balance row r: v_r + q_r + w_r = v_r(parent) + inflow
                trips.push((r, r, 1.0));
                trips.push((r, reservoirs + r, 1.0));
                trips.push((r, 2 * reservoirs + r, 1.0));
            }
            // demand row: sum eff_r q_r + g0 + g1 + deficit = load
            for r in 0..reservoirs {
                trips.push((reservoirs, reservoirs + r, efficiency[r]));
            }
            trips.push((reservoirs, 3 * reservoirs, 1.0));
            trips.push((reservoirs, 3 * reservoirs + 1, 1.0));
            trips.push((reservoirs, 3 * reservoirs + 2, 1.0));
            let mat_a = SparseMat::from_triplets(m, n, &trips);

            let mat_b = if s == 0 {
                SparseMat::zeros(m, 0)
            } else {
                let b_trips: Vec<(usize, usize, f64)> =
                    (0..reservoirs).map(|r| (r, r, -1.0)).collect();
                SparseMat::from_triplets(m, n, &b_trips)
            };

            let mut cost = vec![0.0; n];
            for r in 0..reservoirs {
                cost[2 * reservoirs + r] = spill_cost;
            }
            cost[3 * reservoirs] = thermal_cost[0];
            cost[3 * reservoirs + 1] = thermal_cost[1];
            cost[3 * reservoirs + 2] = deficit_cost;

            let mut rhs = vec![0.0; m];
            for r in 0..reservoirs {
                let inflow = if s == 0 {
                    10.0 * season
                } else {
                    // log-normal-ish positive inflows
                    let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    10.0 * season * (0.4 + 1.2 * (0.8 * z).exp() / (0.8_f64).exp())
                };
                rhs[r] = inflow + if s == 0 { initial_storage[r] } else { 0.0 };
            }
            rhs[reservoirs] = demand;

            reals.push(StageRealization {
                mat_a,
                mat_b,
                cost,
                rhs,
                prob: 1.0 / n_real as f64,
            });
        }
        stages.push(reals);
    }
    MslpInstance::new(stages)
}

/// Random small instances with guaranteed primal recourse: technology is
/// [G | I | -I] with positive costs on the identity blocks, so any state
/// admits a continuation and the optimum stays finite.
pub fn make_random_rcr_instance(
    horizon: usize,
    branching: usize,
    state_dim: usize,
    seed: u64,
) -> MslpInstance {
    let mut rng = stream_rng(seed, 1);
    let m = state_dim;
    let n = state_dim + 2 * m; // free block + slack pair
    let mut stages = Vec::new();
    for s in 0..horizon {
        let n_real = if s == 0 { 1 } else { branching };
        // A and c fixed within a stage (keeps single-pool dual admissible);
        // B and b random across realizations.
        let mut trips = Vec::new();
        for r in 0..m {
            for v in 0..state_dim {
                if rng.random_bool(0.7) {
                    let val = (rng.random_range(-4..=4) as f64).max(-4.0);
                    if val != 0.0 {
                        trips.push((r, v, val));
                    }
                }
            }
            trips.push((r, state_dim + r, 1.0));
            trips.push((r, state_dim + m + r, -1.0));
        }
        let mat_a = SparseMat::from_triplets(m, n, &trips);
        let mut cost = vec![0.0; n];
        for c in cost.iter_mut().take(state_dim) {
            *c = rng.random_range(0..=5) as f64;
        }
        for v in 0..m {
            cost[state_dim + v] = rng.random_range(2..=6) as f64;
            cost[state_dim + m + v] = rng.random_range(2..=6) as f64;
        }
        let mut reals = Vec::with_capacity(n_real);
        for _ in 0..n_real {
            let mat_b = if s == 0 {
                SparseMat::zeros(m, 0)
            } else {
                let mut b_trips = Vec::new();
                for r in 0..m {
                    for v in 0..state_dim {
                        if rng.random_bool(0.5) {
                            let val = rng.random_range(-3..=3) as f64;
                            if val != 0.0 {
                                b_trips.push((r, v, val));
                            }
                        }
                    }
                }
                SparseMat::from_triplets(m, n, &b_trips)
            };
            let rhs: Vec<f64> = (0..m).map(|_| rng.random_range(-5..=5) as f64).collect();
            reals.push(StageRealization {
                mat_a: mat_a.clone(),
                mat_b,
                cost: cost.clone(),
                rhs,
                prob: 1.0 / n_real as f64,
            });
        }
        stages.push(reals);
    }
    MslpInstance::new(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, LpStatus};
    use crate::model::build_deterministic_equivalent;

    #[test]
    fn hydro_instance_validates_and_solves() {
        let inst = make_hydro_instance(4, 3, 2, 11);
        assert!(inst.validate().is_empty());
        let det = build_deterministic_equivalent(&inst, 1000).unwrap();
        let sol = solve_lp(&det.lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective.is_finite());
    }

    #[test]
    fn random_rcr_instances_are_well_formed() {
        for seed in 0..5 {
            let inst = make_random_rcr_instance(3, 3, 2, seed);
            assert!(inst.validate().is_empty(), "seed {seed}");
            let det = build_deterministic_equivalent(&inst, 1000).unwrap();
            let sol = solve_lp(&det.lp).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal, "seed {seed}");
        }
    }

    #[test]
    fn shipped_hydro_fixture_loads_and_primal_runs() {
        use crate::primal::{run_primal_sddp, PrimalConfig};
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures/hydro_small.json");
        let inst = load_instance(&path).unwrap();
        assert!(inst.validate().is_empty());
        assert_eq!(inst.horizon(), 12);
        assert_eq!(inst.num_rows(0), 5);
        // far beyond the deterministic-equivalent cap; SDDP is the only path
        assert!(build_deterministic_equivalent(&inst, 10_000).is_err());
        let run = run_primal_sddp(
            &inst,
            &PrimalConfig {
                max_iters: 15,
                gap_tol: 0.0,
                seed: 8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(run.lower_bound.is_finite());
        for pair in run.trace.rows.windows(2) {
            assert!(pair[1].lb >= pair[0].lb - 1e-9);
        }
    }
}
