//! Batch front-end: runs the solvers on instance files and writes CSV
//! artifacts for plotting. Every run writes a manifest echoing the resolved
//! configuration, so any experiment can be replayed from its output
//! directory. Exit codes: 0 success, 2 usage error, 3 solver error.
//! `MSPDUALS_THREADS` caps simulation worker threads.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{load_inventory_config, InventoryFileConfig};
use mspduals::dual::{
    run_dual_sddp_feasibility_cuts, run_dual_sddp_penalized, uniform_boxes, DualConfig,
    PenaltySchedule,
};
use mspduals::instances::{load_instance, make_inventory_instance, save_instance, InventoryMeta};
use mspduals::lp::{solve_lp, LpStatus};
use mspduals::model::{
    build_deterministic_equivalent, compute_dual_boxes, find_strictly_feasible, DualBox,
    MslpInstance, DEFAULT_NODE_CAP,
};
use mspduals::oracle::{solve_dual_dp, GridSpec};
use mspduals::primal::{extract_multiplier_trajectories, run_primal_sddp, PrimalConfig};
use mspduals::sensitivity::{
    finite_difference_derivative, inventory_parameter_derivatives, SensitivityReport,
    SensitivityRow,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mspduals",
    about = "Multistage stochastic LP toolkit: primal SDDP lower bounds, dual SDDP deterministic upper bounds, sensitivities",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an inventory instance file.
    GenInventory(GenInventoryArgs),
    /// Solve the deterministic equivalent and print its optimal value.
    DetEquiv(DetEquivArgs),
    /// Run primal SDDP; writes primal_trace.csv and manifest.json.
    SolvePrimal(SolvePrimalArgs),
    /// Run dual SDDP with penalizations; writes dual_trace.csv and manifest.json.
    SolveDualPen(SolveDualPenArgs),
    /// Run dual SDDP with feasibility cuts; also exports the cuts for audit.
    SolveDualFeas(SolveDualFeasArgs),
    /// Tabulate the dual value functions on a grid (scalar dual state only).
    Oracle(OracleArgs),
    /// Estimate derivatives of the optimal value for an AR-demand inventory
    /// configuration and benchmark them against finite differences.
    Sensitivity(SensitivityArgs),
}

#[derive(Args, Serialize)]
pub struct GenInventoryArgs {
    /// Number of stages.
    #[arg(short = 'T', long, default_value_t = 3)]
    pub horizon: usize,
    /// Realizations per stage.
    #[arg(short = 'N', long, default_value_t = 3)]
    pub branching: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial inventory level.
    #[arg(long, default_value_t = 10.0)]
    x0: f64,
    /// Demand mode: iid (sampled stagewise-independent) or ar.
    #[arg(long, default_value = "iid")]
    pub demand: String,
    /// AR demand parameters (used with --demand ar).
    #[arg(long, default_value_t = 0.5)]
    phi: f64,
    #[arg(long, default_value_t = 3.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.25)]
    sigma2: f64,
    #[arg(long, default_value_t = 10.0)]
    d0: f64,
    /// Inventory config file overriding all flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output instance path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct DetEquivArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    node_cap: usize,
}

#[derive(Args, Serialize)]
struct SolvePrimalArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Relative gap (Ub - Lb)/Ub at which to stop.
    #[arg(long, default_value_t = 0.01)]
    gap: f64,
    #[arg(long, default_value_t = 0.975)]
    confidence: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Forward paths per iteration.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SolveDualPenArgs {
    instance: PathBuf,
    /// Penalty sequence v_k = min(cap, gamma0 * alpha^(k-1)).
    #[arg(long, default_value_t = 1e3)]
    gamma0: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e10)]
    cap: f64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dual box source: "computed[:r]" (from the deterministic equivalent),
    /// "uniform:W" (symmetric half-width W), or a path to a box JSON file.
    #[arg(long, default_value = "computed:0.25")]
    boxes: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SolveDualFeasArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "computed:0.25")]
    boxes: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct OracleArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 401)]
    nodes: usize,
    /// Penalty level; repeat for several, omit for the exact recursion.
    #[arg(long)]
    gamma: Vec<f64>,
    #[arg(long, default_value = "uniform:8")]
    boxes: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SensitivityArgs {
    /// Inventory config file with AR demand.
    config: PathBuf,
    /// Parameter to differentiate: phi, mu, or both.
    #[arg(long, default_value = "both")]
    param: String,
    #[arg(long, default_value_t = 10_000)]
    sims: usize,
    /// Finite-difference step; default 1e-4 * max(1, |u0|).
    #[arg(long)]
    delta: Option<f64>,
    /// SDDP iterations for the base and perturbed solves.
    #[arg(long, default_value_t = 120)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

pub enum CliError {
    Usage(String),
    Solver(String),
}

impl CliError {
    fn solver<E: std::fmt::Display>(e: E) -> Self {
        CliError::Solver(e.to_string())
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Solver(m) => m.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenInventory(a) => gen_inventory(a),
        Command::DetEquiv(a) => det_equiv(a),
        Command::SolvePrimal(a) => solve_primal(a),
        Command::SolveDualPen(a) => solve_dual_pen(a),
        Command::SolveDualFeas(a) => solve_dual_feas(a),
        Command::Oracle(a) => oracle(a),
        Command::Sensitivity(a) => sensitivity(a),
    }
}

fn load(path: &Path) -> Result<MslpInstance, CliError> {
    let inst = load_instance(path).map_err(CliError::solver)?;
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(CliError::Solver(format!(
            "instance invalid: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(inst)
}

fn resolve_boxes(spec: &str, instance: &MslpInstance) -> Result<DualBox, CliError> {
    if let Some(rest) = spec.strip_prefix("uniform:") {
        let w: f64 = rest
            .parse()
            .map_err(|_| CliError::Usage(format!("bad uniform box width: {rest}")))?;
        if !(w > 0.0) {
            return Err(CliError::Usage("box half-width must be positive".into()));
        }
        return Ok(uniform_boxes(instance, w));
    }
    if spec == "computed" || spec.starts_with("computed:") {
        let r: f64 = match spec.strip_prefix("computed:") {
            Some(rest) => rest
                .parse()
                .map_err(|_| CliError::Usage(format!("bad interiority radius: {rest}")))?,
            None => 0.25,
        };
        let feas = find_strictly_feasible(instance, DEFAULT_NODE_CAP, r).map_err(CliError::solver)?;
        return compute_dual_boxes(instance, &feas, r, None).map_err(CliError::solver);
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| CliError::Usage(format!("cannot read box file {spec}: {e}")))?;
    #[derive(serde::Deserialize)]
    struct BoxFile {
        lower: Vec<Vec<f64>>,
        upper: Vec<Vec<f64>>,
    }
    let parsed: BoxFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad box file {spec}: {e}")))?;
    Ok(DualBox {
        lower: parsed.lower,
        upper: parsed.upper,
        validated: false,
    })
}

fn write_manifest<A: Serialize>(dir: &Path, command: &str, args: &A) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Manifest<'a, A: Serialize> {
        command: &'a str,
        #[serde(flatten)]
        args: &'a A,
    }
    let text = serde_json::to_string_pretty(&Manifest { command, args })
        .map_err(CliError::solver)?;
    std::fs::write(dir.join("manifest.json"), text + "\n").map_err(CliError::solver)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Usage(format!("cannot create output directory {}: {e}", dir.display()))
    })
}

fn gen_inventory(args: GenInventoryArgs) -> Result<(), CliError> {
    let cfg: InventoryFileConfig = match &args.config {
        Some(path) => load_inventory_config(path)?,
        None => InventoryFileConfig::from_args(&args)?,
    };
    let inv = cfg.to_inventory_config()?;
    let (instance, _meta) = make_inventory_instance(&inv).map_err(CliError::solver)?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    save_instance(&instance, &args.output).map_err(CliError::solver)?;
    Ok(())
}

fn det_equiv(args: DetEquivArgs) -> Result<(), CliError> {
    let inst = load(&args.instance)?;
    let det = build_deterministic_equivalent(&inst, args.node_cap).map_err(CliError::solver)?;
    let sol = solve_lp(&det.lp).map_err(CliError::solver)?;
    match sol.status {
        LpStatus::Optimal => {
            println!("{}", sol.objective);
            Ok(())
        }
        other => Err(CliError::Solver(format!(
            "deterministic equivalent is {other:?}"
        ))),
    }
}

fn solve_primal(args: SolvePrimalArgs) -> Result<(), CliError> {
    let inst = load(&args.instance)?;
    if !(args.gap >= 0.0) || !(args.confidence > 0.5 && args.confidence < 1.0) {
        return Err(CliError::Usage(
            "need gap >= 0 and confidence in (0.5, 1)".into(),
        ));
    }
    let cfg = PrimalConfig {
        max_iters: args.iters,
        gap_tol: args.gap,
        confidence: args.confidence,
        seed: args.seed,
        forward_batch: args.batch.max(1),
        ..Default::default()
    };
    let run = run_primal_sddp(&inst, &cfg).map_err(CliError::solver)?;
    ensure_dir(&args.output)?;
    let mut buf = Vec::new();
    run.trace.write_csv(&mut buf).map_err(CliError::solver)?;
    std::fs::write(args.output.join("primal_trace.csv"), buf).map_err(CliError::solver)?;
    write_manifest(&args.output, "solve-primal", &args)?;
    eprintln!(
        "primal: {} iterations, lb {}, statistical ub {}",
        run.iterations, run.lower_bound, run.upper_bound
    );
    Ok(())
}

fn solve_dual_pen(args: SolveDualPenArgs) -> Result<(), CliError> {
    let inst = load(&args.instance)?;
    let boxes = resolve_boxes(&args.boxes, &inst)?;
    let schedule = PenaltySchedule::geometric(args.gamma0, args.alpha, args.cap);
    schedule.validate().map_err(CliError::solver)?;
    let run = run_dual_sddp_penalized(
        &inst,
        &boxes,
        &schedule,
        &DualConfig {
            max_iters: args.iters,
            seed: args.seed,
        },
    )
    .map_err(CliError::solver)?;
    ensure_dir(&args.output)?;
    let mut buf = Vec::new();
    run.trace.write_csv(&mut buf).map_err(CliError::solver)?;
    std::fs::write(args.output.join("dual_trace.csv"), buf).map_err(CliError::solver)?;
    write_manifest(&args.output, "solve-dual-pen", &args)?;
    eprintln!("dual (penalized): final upper bound {}", run.final_ub);
    Ok(())
}

fn solve_dual_feas(args: SolveDualFeasArgs) -> Result<(), CliError> {
    let inst = load(&args.instance)?;
    let boxes = resolve_boxes(&args.boxes, &inst)?;
    let run = run_dual_sddp_feasibility_cuts(
        &inst,
        &boxes,
        &DualConfig {
            max_iters: args.iters,
            seed: args.seed,
        },
    )
    .map_err(CliError::solver)?;
    ensure_dir(&args.output)?;
    let mut buf = Vec::new();
    run.trace.write_csv(&mut buf).map_err(CliError::solver)?;
    std::fs::write(args.output.join("dual_trace.csv"), buf).map_err(CliError::solver)?;
    #[derive(Serialize)]
    struct CutOut {
        stage: usize,
        normal: Vec<f64>,
        offset: f64,
        iteration: usize,
    }
    let cuts: Vec<CutOut> = run
        .feasibility_cuts
        .iter()
        .enumerate()
        .flat_map(|(s, cuts)| {
            cuts.iter().map(move |c| CutOut {
                stage: s + 1,
                normal: c.normal.clone(),
                offset: c.offset,
                iteration: c.iteration,
            })
        })
        .collect();
    let text = serde_json::to_string_pretty(&cuts).map_err(CliError::solver)?;
    std::fs::write(args.output.join("feasibility_cuts.json"), text + "\n")
        .map_err(CliError::solver)?;
    write_manifest(&args.output, "solve-dual-feas", &args)?;
    eprintln!(
        "dual (feasibility cuts): final upper bound {}, {} cuts",
        run.final_ub,
        cuts.len()
    );
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<(), CliError> {
    let inst = load(&args.instance)?;
    if args.nodes < 2 {
        return Err(CliError::Usage("grid needs at least two nodes".into()));
    }
    let boxes = resolve_boxes(&args.boxes, &inst)?;
    let grid = GridSpec { nodes: args.nodes };
    let mut runs: Vec<(Option<f64>, Vec<mspduals::oracle::TabulatedValueFunction>)> = Vec::new();
    runs.push((
        None,
        solve_dual_dp(&inst, &boxes, &grid, None).map_err(CliError::solver)?,
    ));
    for &g in &args.gamma {
        runs.push((
            Some(g),
            solve_dual_dp(&inst, &boxes, &grid, Some(g)).map_err(CliError::solver)?,
        ));
    }
    ensure_dir(&args.output)?;
    for (gamma, tabs) in &runs {
        for tab in tabs {
            let name = match gamma {
                None => format!("oracle_stage{}.csv", tab.stage + 1),
                Some(g) => format!("oracle_stage{}_gamma{}.csv", tab.stage + 1, g),
            };
            let mut buf = Vec::new();
            tab.write_csv(&mut buf).map_err(CliError::solver)?;
            std::fs::write(args.output.join(name), buf).map_err(CliError::solver)?;
        }
    }
    write_manifest(&args.output, "oracle", &args)?;
    Ok(())
}

fn sensitivity(args: SensitivityArgs) -> Result<(), CliError> {
    if !matches!(args.param.as_str(), "phi" | "mu" | "both") {
        return Err(CliError::Usage(format!(
            "--param must be phi, mu, or both; got {}",
            args.param
        )));
    }
    if args.sims == 0 {
        return Err(CliError::Usage("--sims must be positive".into()));
    }
    let cfg = load_inventory_config(&args.config)?;
    let spec = cfg.ar_spec().ok_or_else(|| {
        CliError::Usage("sensitivity needs an inventory config with AR demand".into())
    })?;
    let inv = cfg.to_inventory_config()?;

    let solve_lb = |inv_cfg: &mspduals::instances::InventoryConfig| -> Result<f64, String> {
        let (inst, _) = make_inventory_instance(inv_cfg).map_err(|e| e.to_string())?;
        let run = run_primal_sddp(
            &inst,
            &PrimalConfig {
                max_iters: args.iters,
                gap_tol: 0.0,
                seed: args.seed,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        Ok(run.lower_bound)
    };

    let (inst, meta) = make_inventory_instance(&inv).map_err(CliError::solver)?;
    let meta = match meta {
        InventoryMeta::Ar(m) => m,
        InventoryMeta::Iid { .. } => unreachable!("ar_spec checked above"),
    };
    let base = run_primal_sddp(
        &inst,
        &PrimalConfig {
            max_iters: args.iters,
            gap_tol: 0.0,
            seed: args.seed,
            ..Default::default()
        },
    )
    .map_err(CliError::solver)?;
    let paths = extract_multiplier_trajectories(&inst, &base.policy, args.sims, args.seed ^ 0x5eed)
        .map_err(CliError::solver)?;
    let ((dphi, se_phi), (dmu, se_mu)) =
        inventory_parameter_derivatives(&meta, &paths).map_err(CliError::solver)?;

    let mut report = SensitivityReport::default();
    if args.param == "phi" || args.param == "both" {
        let delta = args
            .delta
            .unwrap_or_else(|| mspduals::sensitivity::default_fd_step(spec.phi));
        let fd = finite_difference_derivative(
            |u| {
                let pert = cfg
                    .with_phi(u)
                    .to_inventory_config()
                    .map_err(|e| e.message())?;
                solve_lb(&pert)
            },
            spec.phi,
            delta,
        )
        .map_err(CliError::solver)?;
        report.rows.push(SensitivityRow {
            param: "phi".into(),
            fd,
            estimate: dphi,
            std_error: se_phi,
            n_sims: args.sims,
            delta,
        });
    }
    if args.param == "mu" || args.param == "both" {
        let delta = args
            .delta
            .unwrap_or_else(|| mspduals::sensitivity::default_fd_step(spec.mu));
        let fd = finite_difference_derivative(
            |u| {
                let pert = cfg
                    .with_mu(u)
                    .to_inventory_config()
                    .map_err(|e| e.message())?;
                solve_lb(&pert)
            },
            spec.mu,
            delta,
        )
        .map_err(CliError::solver)?;
        report.rows.push(SensitivityRow {
            param: "mu".into(),
            fd,
            estimate: dmu,
            std_error: se_mu,
            n_sims: args.sims,
            delta,
        });
    }

    ensure_dir(&args.output)?;
    std::fs::write(args.output.join("report.csv"), report.to_csv_string())
        .map_err(CliError::solver)?;
    write_manifest(&args.output, "sensitivity", &args)?;
    for row in &report.rows {
        eprintln!(
            "{}: estimate {} (se {}), fd {}, gap {:.4}%",
            row.param,
            row.estimate,
            row.std_error,
            row.fd,
            row.gap_percent()
        );
    }
    Ok(())
}
