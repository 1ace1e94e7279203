//! Shared fixtures for the benchmark targets.

use mspduals::instances::{make_inventory_instance, InventoryConfig};
use mspduals::model::{build_deterministic_equivalent, MslpInstance};
use mspduals::lp::LpProblem;

pub fn inventory(horizon: usize, branching: usize) -> MslpInstance {
    make_inventory_instance(&InventoryConfig::benchmark(horizon, branching, 7))
        .unwrap()
        .0
}

pub fn det_equiv_lp(horizon: usize, branching: usize) -> LpProblem {
    build_deterministic_equivalent(&inventory(horizon, branching), 100_000)
        .unwrap()
        .lp
}
