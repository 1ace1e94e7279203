//! Integration tests of the Dual SDDP variants against the deterministic
//! equivalent and the grid DP oracle.

use mspduals::dual::{
    penalty_value, run_dual_sddp_all_random, run_dual_sddp_feasibility_cuts,
    run_dual_sddp_penalized, simulate_dual_multipliers, uniform_boxes, DualConfig, DualError,
    PenaltySchedule,
};
use mspduals::instances::{
    make_inventory_instance, make_random_rcr_instance, InventoryConfig,
};
use mspduals::linalg::SparseMat;
use mspduals::lp::{solve_lp, LpStatus};
use mspduals::model::{
    build_deterministic_equivalent, compute_dual_boxes, find_strictly_feasible, DualBox,
    MslpInstance, StageRealization,
};
use mspduals::oracle::{solve_dual_dp, GridSpec};

fn det_optimum(instance: &MslpInstance) -> f64 {
    let det = build_deterministic_equivalent(instance, 100_000).unwrap();
    let sol = solve_lp(&det.lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    sol.objective
}

fn assert_monotone_and_above(trace: &[f64], optimum: f64, label: &str) {
    for (i, pair) in trace.windows(2).enumerate() {
        assert!(
            pair[1] <= pair[0] + 1e-9,
            "{label}: ub increased at iter {}: {} -> {}",
            i + 1,
            pair[0],
            pair[1]
        );
    }
    for (i, &ub) in trace.iter().enumerate() {
        assert!(
            ub >= optimum - 1e-7 * (1.0 + optimum.abs()),
            "{label}: ub {ub} below optimum {optimum} at iter {}",
            i + 1
        );
    }
}

fn deterministic_two_stage() -> MslpInstance {
    // Stage 1: min x, x = 2. Stage 2: min y, y = x + 1.
    MslpInstance::new(vec![
        vec![StageRealization {
            mat_a: SparseMat::from_dense(&[vec![1.0]]),
            mat_b: SparseMat::zeros(1, 0),
            cost: vec![1.0],
            rhs: vec![2.0],
            prob: 1.0,
        }],
        vec![StageRealization {
            mat_a: SparseMat::from_dense(&[vec![1.0]]),
            mat_b: SparseMat::from_dense(&[vec![-1.0]]),
            cost: vec![1.0],
            rhs: vec![1.0],
            prob: 1.0,
        }],
    ])
}

#[test]
fn deterministic_instance_hits_optimum_by_iteration_two() {
    let inst = deterministic_two_stage();
    let boxes = uniform_boxes(&inst, 50.0);
    let run = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &PenaltySchedule::constant(1e6),
        &DualConfig {
            max_iters: 5,
            seed: 0,
        },
    )
    .unwrap();
    let opt = det_optimum(&inst);
    assert!((opt - 5.0).abs() < 1e-9);
    let ubs: Vec<f64> = run.trace.rows.iter().map(|r| r.ub_dual).collect();
    assert_monotone_and_above(&ubs, opt, "deterministic");
    for &ub in &ubs[1..] {
        assert!((ub - opt).abs() <= 1e-7, "ub {ub} vs opt {opt}");
    }
}

#[test]
fn inventory_penalized_converges_to_det_equiv() {
    let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 3, 21)).unwrap();
    let opt = det_optimum(&inst);
    let feas = find_strictly_feasible(&inst, 1000, 0.25).unwrap();
    let boxes = compute_dual_boxes(&inst, &feas, 0.25, None).unwrap();
    assert!(boxes.validated);
    let run = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &PenaltySchedule::constant(1e3),
        &DualConfig {
            max_iters: 120,
            seed: 4,
        },
    )
    .unwrap();
    let ubs: Vec<f64> = run.trace.rows.iter().map(|r| r.ub_dual).collect();
    assert_monotone_and_above(&ubs, opt, "inventory penalized");
    assert!(
        (run.final_ub - opt).abs() <= 1e-4 * (1.0 + opt.abs()),
        "final ub {} vs opt {opt}",
        run.final_ub
    );
    // Large penalty: converged passes have no coupling violation.
    let late_zeta = run.trace.rows.last().unwrap().max_zeta;
    assert!(late_zeta < 1e-6, "late zeta {late_zeta}");
}

#[test]
fn small_penalty_stalls_above_optimum_with_positive_slack() {
    let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 3, 21)).unwrap();
    let opt = det_optimum(&inst);
    let boxes = uniform_boxes(&inst, 100.0);
    let weak = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &PenaltySchedule::constant(1e-3),
        &DualConfig {
            max_iters: 80,
            seed: 4,
        },
    )
    .unwrap();
    // The relaxation is far too loose: the bound stays strictly above.
    assert!(
        weak.final_ub > opt + 0.1 * opt.abs(),
        "weak penalty ub {} vs opt {opt}",
        weak.final_ub
    );
    let some_slack = weak
        .trace
        .rows
        .iter()
        .any(|r| r.max_zeta > 1e-6);
    assert!(some_slack, "expected positive slack under tiny penalty");

    // Larger penalties never produce worse bounds under the same seed.
    let strong = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &PenaltySchedule::constant(1e3),
        &DualConfig {
            max_iters: 80,
            seed: 4,
        },
    )
    .unwrap();
    assert!(strong.final_ub <= weak.final_ub + 1e-9);
    assert!((strong.final_ub - opt).abs() <= 1e-4 * (1.0 + opt.abs()));
}

#[test]
fn increasing_schedule_converges() {
    let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 2, 33)).unwrap();
    let opt = det_optimum(&inst);
    let boxes = uniform_boxes(&inst, 100.0);
    let run = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &PenaltySchedule::geometric(1.0, 1.3, 1e10),
        &DualConfig {
            max_iters: 120,
            seed: 9,
        },
    )
    .unwrap();
    let ubs: Vec<f64> = run.trace.rows.iter().map(|r| r.ub_dual).collect();
    assert_monotone_and_above(&ubs, opt, "increasing schedule");
    assert!((run.final_ub - opt).abs() <= 1e-4 * (1.0 + opt.abs()));
    // the schedule itself is nondecreasing
    let s = PenaltySchedule::geometric(1.0, 1.3, 1e10);
    for k in 1..60 {
        assert!(penalty_value(&s, k + 1) >= penalty_value(&s, k));
    }
}

#[test]
fn feasibility_cuts_converge_and_are_sound() {
    let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 3, 21)).unwrap();
    let opt = det_optimum(&inst);
    let feas = find_strictly_feasible(&inst, 1000, 0.25).unwrap();
    let boxes = compute_dual_boxes(&inst, &feas, 0.25, None).unwrap();
    let run = run_dual_sddp_feasibility_cuts(
        &inst,
        &boxes,
        &DualConfig {
            max_iters: 120,
            seed: 4,
        },
    )
    .unwrap();
    let ubs: Vec<f64> = run.trace.rows.iter().map(|r| r.ub_dual).collect();
    assert_monotone_and_above(&ubs, opt, "feasibility cuts");
    assert!(
        (run.final_ub - opt).abs() <= 1e-4 * (1.0 + opt.abs()),
        "final ub {} vs opt {opt}",
        run.final_ub
    );
    // The inventory dual lacks relatively complete recourse: cuts appear.
    let n_cuts: usize = run.feasibility_cuts.iter().map(|v| v.len()).sum();
    assert!(n_cuts > 0, "expected at least one feasibility cut");

    // Soundness: every dual-feasible point satisfies every cut. Node duals of
    // the deterministic equivalent are dual-feasible, and stay so under rhs
    // perturbations (dual feasibility does not involve b).
    let mut checked = 0usize;
    for trial in 0..6 {
        let mut perturbed = inst.clone();
        if trial > 0 {
            for stage in perturbed.stages.iter_mut() {
                for real in stage.iter_mut() {
                    for b in real.rhs.iter_mut() {
                        *b += (trial as f64) * 0.37 - 1.0;
                    }
                }
            }
        }
        let det = build_deterministic_equivalent(&perturbed, 1000).unwrap();
        let sol = solve_lp(&det.lp).unwrap();
        if sol.status != LpStatus::Optimal {
            continue;
        }
        for (id, node) in det.map.nodes.iter().enumerate() {
            let pi = det.map.node_duals(&sol, id);
            for cut in &run.feasibility_cuts[node.stage] {
                let lhs: f64 = cut
                    .normal
                    .iter()
                    .zip(&pi)
                    .map(|(w, p)| w * p)
                    .sum();
                assert!(
                    lhs <= cut.offset + 1e-6 * (1.0 + cut.offset.abs()),
                    "cut at stage {} violated by dual-feasible point: {lhs} > {}",
                    node.stage + 1,
                    cut.offset
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 0, "no cut checks happened");
}

#[test]
fn feasibility_variant_matches_penalized_on_rcr_dual_instance() {
    // Over the box [-1.5, 1.5] every pi_1 admits a feasible continuation
    // (second-stage duals absorb the coupling), so the dual has relatively
    // complete recourse on the region the algorithm visits and the two
    // variants follow identical trajectories.
    let inst = MslpInstance::new(vec![
        vec![StageRealization {
            mat_a: SparseMat::from_dense(&[vec![1.0, -1.0]]),
            mat_b: SparseMat::zeros(1, 0),
            cost: vec![1.0, 2.0],
            rhs: vec![2.0],
            prob: 1.0,
        }],
        vec![
            StageRealization {
                mat_a: SparseMat::from_dense(&[vec![1.0, -1.0]]),
                mat_b: SparseMat::from_dense(&[vec![-1.0, 0.0]]),
                cost: vec![1.0, 1.0],
                rhs: vec![1.0],
                prob: 0.5,
            },
            StageRealization {
                mat_a: SparseMat::from_dense(&[vec![1.0, -1.0]]),
                mat_b: SparseMat::from_dense(&[vec![-1.0, 0.0]]),
                cost: vec![1.0, 1.0],
                rhs: vec![3.0],
                prob: 0.5,
            },
        ],
    ]);
    let boxes = uniform_boxes(&inst, 1.5);
    let cfg = DualConfig {
        max_iters: 40,
        seed: 7,
    };
    let pen = run_dual_sddp_penalized(&inst, &boxes, &PenaltySchedule::constant(1e8), &cfg).unwrap();
    let fc = run_dual_sddp_feasibility_cuts(&inst, &boxes, &cfg).unwrap();
    assert_eq!(fc.feasibility_cuts.iter().map(|v| v.len()).sum::<usize>(), 0);
    for (a, b) in pen.trace.rows.iter().zip(&fc.trace.rows) {
        assert!(
            (a.ub_dual - b.ub_dual).abs() <= 1e-6 * (1.0 + a.ub_dual.abs()),
            "iter {}: {} vs {}",
            a.iter,
            a.ub_dual,
            b.ub_dual
        );
    }
}

#[test]
fn all_random_handles_random_costs() {
    // Random cost (the conditioning data of the stage-3 value function) at
    // stage 2: the dual value function of stage 3 depends on the stage-2
    // realization and needs one model per realization.
    let chain = |cost2: Vec<f64>, d2: f64, p: f64| StageRealization {
        mat_a: SparseMat::from_dense(&[vec![1.0, -1.0]]),
        mat_b: SparseMat::from_dense(&[vec![-1.0, 0.0]]),
        cost: cost2,
        rhs: vec![d2],
        prob: p,
    };
    let inst = MslpInstance::new(vec![
        vec![StageRealization {
            mat_a: SparseMat::from_dense(&[vec![1.0, -1.0]]),
            mat_b: SparseMat::zeros(1, 0),
            cost: vec![1.0, 2.0],
            rhs: vec![2.0],
            prob: 1.0,
        }],
        vec![
            chain(vec![1.0, 1.5], 1.0, 0.5),
            chain(vec![2.0, 2.5], 3.0, 0.5),
        ],
        vec![
            chain(vec![1.0, 1.0], 1.0, 0.5),
            chain(vec![1.0, 1.0], 2.0, 0.5),
        ],
    ]);
    let opt = det_optimum(&inst);
    let boxes = uniform_boxes(&inst, 30.0);
    let run = run_dual_sddp_all_random(
        &inst,
        &boxes,
        &PenaltySchedule::constant(1e6),
        &DualConfig {
            max_iters: 80,
            seed: 3,
        },
    )
    .unwrap();
    assert!(run.policy.per_realization);
    assert_eq!(run.policy.pools[2].len(), 2);
    let ubs: Vec<f64> = run.trace.rows.iter().map(|r| r.ub_dual).collect();
    assert_monotone_and_above(&ubs, opt, "all random");
    assert!(
        (run.final_ub - opt).abs() <= 1e-4 * (1.0 + opt.abs()),
        "final {} vs {opt}",
        run.final_ub
    );
    // The single-pool variant must reject a random conditioning stage.
    assert!(matches!(
        run_dual_sddp_penalized(
            &inst,
            &boxes,
            &PenaltySchedule::constant(1e6),
            &DualConfig::default()
        ),
        Err(DualError::InvalidInstance(_))
    ));
    // Deterministic A and c everywhere: the all-random entry point collapses
    // to the single-pool recursion and accepts the instance.
    let (plain, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 2, 40)).unwrap();
    let plain_boxes = uniform_boxes(&plain, 50.0);
    let a = run_dual_sddp_all_random(
        &plain,
        &plain_boxes,
        &PenaltySchedule::constant(1e4),
        &DualConfig {
            max_iters: 30,
            seed: 6,
        },
    )
    .unwrap();
    let b = run_dual_sddp_penalized(
        &plain,
        &plain_boxes,
        &PenaltySchedule::constant(1e4),
        &DualConfig {
            max_iters: 30,
            seed: 6,
        },
    )
    .unwrap();
    for (x, y) in a.trace.rows.iter().zip(&b.trace.rows) {
        assert!(
            (x.ub_dual - y.ub_dual).abs() <= 1e-9 * (1.0 + y.ub_dual.abs()),
            "iter {}: {} vs {}",
            x.iter,
            x.ub_dual,
            y.ub_dual
        );
    }
}

#[test]
fn unbounded_primal_surfaces_as_root_infeasible() {
    // Stage-1 objective -2x with x = s free to grow: primal unbounded below,
    // dual infeasible. Feasibility cuts must empty the first-stage region.
    let inst = MslpInstance::new(vec![
        vec![StageRealization {
            mat_a: SparseMat::from_dense(&[vec![1.0, -1.0]]),
            mat_b: SparseMat::zeros(1, 0),
            cost: vec![-2.0, 0.0],
            rhs: vec![0.0],
            prob: 1.0,
        }],
        vec![StageRealization {
            mat_a: SparseMat::from_dense(&[vec![1.0]]),
            mat_b: SparseMat::from_dense(&[vec![-1.0, 0.0]]),
            cost: vec![1.0],
            rhs: vec![1.0],
            prob: 1.0,
        }],
    ]);
    let boxes = uniform_boxes(&inst, 10.0);
    let err = run_dual_sddp_feasibility_cuts(
        &inst,
        &boxes,
        &DualConfig {
            max_iters: 30,
            seed: 0,
        },
    )
    .unwrap_err();
    assert!(matches!(err, DualError::RootInfeasible));
}

#[test]
fn identical_seeds_reproduce_traces_bit_exactly() {
    let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 3, 5)).unwrap();
    let boxes = uniform_boxes(&inst, 50.0);
    let cfg = DualConfig {
        max_iters: 25,
        seed: 123,
    };
    let a = run_dual_sddp_penalized(&inst, &boxes, &PenaltySchedule::constant(1e3), &cfg).unwrap();
    let b = run_dual_sddp_penalized(&inst, &boxes, &PenaltySchedule::constant(1e3), &cfg).unwrap();
    for (x, y) in a.trace.rows.iter().zip(&b.trace.rows) {
        assert_eq!(x.ub_dual.to_bits(), y.ub_dual.to_bits());
        assert_eq!(x.max_zeta.to_bits(), y.max_zeta.to_bits());
    }
}

#[test]
fn inflated_boxes_do_not_change_the_limit() {
    let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 3, 17)).unwrap();
    let feas = find_strictly_feasible(&inst, 1000, 0.25).unwrap();
    let boxes = compute_dual_boxes(&inst, &feas, 0.25, None).unwrap();
    let cfg = DualConfig {
        max_iters: 140,
        seed: 2,
    };
    let sched = PenaltySchedule::constant(1e3);
    let tight = run_dual_sddp_penalized(&inst, &boxes, &sched, &cfg).unwrap();
    let loose = run_dual_sddp_penalized(&inst, &boxes.inflate(10.0), &sched, &cfg).unwrap();
    assert!(
        (tight.final_ub - loose.final_ub).abs()
            <= 1e-6 * (1.0 + tight.final_ub.abs()),
        "{} vs {}",
        tight.final_ub,
        loose.final_ub
    );
}

#[test]
fn dual_cuts_dominate_oracle_tabulation() {
    let (inst, _) = make_inventory_instance(&InventoryConfig::benchmark(3, 2, 29)).unwrap();
    let boxes = uniform_boxes(&inst, 8.0);
    let run = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &PenaltySchedule::constant(1e3),
        &DualConfig {
            max_iters: 60,
            seed: 11,
        },
    )
    .unwrap();
    let tabs = solve_dual_dp(&inst, &boxes, &GridSpec { nodes: 201 }, None).unwrap();
    // Pool minimum over-estimates the true value function everywhere; the
    // tabulation under-estimates it (interpolation of a concave function).
    for tab in &tabs {
        let pool = &run.policy.pools[tab.stage][0];
        for (g, v) in tab.grid.iter().zip(&tab.values) {
            if !v.is_finite() {
                continue;
            }
            let pv = pool.evaluate(&[*g]);
            assert!(
                pv >= v - 1e-7 * (1.0 + v.abs()),
                "stage {} at pi={g}: pool {pv} below oracle {v}",
                tab.stage + 1
            );
        }
    }
}

#[test]
fn dual_simulation_recovers_terminal_multipliers() {
    let inst = deterministic_two_stage();
    let boxes = uniform_boxes(&inst, 50.0);
    let run = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &PenaltySchedule::constant(1e6),
        &DualConfig {
            max_iters: 10,
            seed: 0,
        },
    )
    .unwrap();
    let sims = simulate_dual_multipliers(&inst, &run.policy, &boxes, 1e6, 4, 9).unwrap();
    // Unique duals: stage-1 multiplier 2 (cost 1 + passthrough 1), stage-2
    // multiplier 1.
    for sim in &sims {
        assert_eq!(sim.pis.len(), 2);
        assert!((sim.pis[0][0] - 2.0).abs() < 1e-7, "pi0 {:?}", sim.pis[0]);
        assert!((sim.pis[1][0] - 1.0).abs() < 1e-7, "pi1 {:?}", sim.pis[1]);
    }
}

#[test]
fn random_rcr_instances_bracket_correctly() {
    for seed in [1u64, 2, 3] {
        let inst = make_random_rcr_instance(3, 3, 2, seed);
        let opt = det_optimum(&inst);
        let boxes = uniform_boxes(&inst, 60.0);
        let run = run_dual_sddp_penalized(
            &inst,
            &boxes,
            &PenaltySchedule::constant(1e5),
            &DualConfig {
                max_iters: 80,
                seed,
            },
        )
        .unwrap();
        let ubs: Vec<f64> = run.trace.rows.iter().map(|r| r.ub_dual).collect();
        assert_monotone_and_above(&ubs, opt, "random rcr");
        assert!(
            (run.final_ub - opt).abs() <= 1e-4 * (1.0 + opt.abs()),
            "seed {seed}: {} vs {opt}",
            run.final_ub
        );
    }
}
