//! Command-line front end: index tables, exact solves, simulation races,
//! sampled studies, figure data, and input validation.
//!
//! Output files are pure functions of the inputs and seeds; anything
//! wall-clock related goes to stderr so reruns stay byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wmaint::experiment::{run_study, OpCostShape, RunReport, ScenarioConfig, Study};
use wmaint::index::{build_auxiliary, b_policy_cost, h_function, w_index, IndexTable};
use wmaint::mdp::{evaluate_policy, solve_joint, MdpError};
use wmaint::model::{FleetSpec, MachineSpec, Mode};
use wmaint::policy::{enumerate_thresholds, Policy};
use wmaint::sim::simulate_batch;

#[derive(Parser)]
#[command(name = "wmaint", version, about = "Fair-charge maintenance scheduling: indices, exact solves, simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-machine index tables from a machine or fleet spec.
    Index(IndexArgs),
    /// Solve the joint fleet problem exactly and score the index policy.
    Solve(SolveArgs),
    /// Race policies on one fleet under common random numbers.
    Simulate(SimulateArgs),
    /// Run a sampled study over its case grid.
    Study(StudyArgs),
    /// Emit index and commitment-cost curve samples for plotting.
    PlotData(PlotDataArgs),
    /// Check a machine or fleet spec against the model invariants.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// Machine or fleet spec (JSON).
    #[arg(long)]
    input: PathBuf,
    /// JSON output path; a fleet also gets a CSV next to it. Stdout if absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override every machine's discount factor.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Fleet spec (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Relative stopping tolerance for value iteration.
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    /// Tie-break seed for the index policy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyChoice {
    Index,
    Naive,
    Myopic,
    Thresholds,
}

#[derive(Args)]
struct SimulateArgs {
    /// Fleet spec (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Policies to race; repeatable.
    #[arg(long = "policy", value_enum, default_values_t = [PolicyChoice::Index, PolicyChoice::Naive, PolicyChoice::Thresholds])]
    policies: Vec<PolicyChoice>,
    /// Evenly spaced trigger levels when racing thresholds.
    #[arg(long, default_value_t = 8)]
    threshold_count: usize,
    #[arg(long, default_value_t = 520)]
    horizon: usize,
    #[arg(long, default_value_t = 25)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyChoice {
    Suboptimality,
    LargeSystem,
    Myopic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeChoice {
    Failures,
    Pure,
}

#[derive(Args)]
struct StudyArgs {
    /// Full ScenarioConfig JSON; set to run exactly one cell, skipping the grid.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path for the JSON report list; CSV lands next to it.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StudyChoice::Suboptimality)]
    study: StudyChoice,
    #[arg(long, value_enum, default_value_t = ModeChoice::Failures)]
    mode: ModeChoice,
    /// Instances per cell (0 keeps the study default).
    #[arg(long, default_value_t = 0)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    threshold_count: Option<usize>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Machine or fleet spec (JSON); fleets plot their first machine.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Charge grid points per level for the commitment-cost curves.
    #[arg(long, default_value_t = 41)]
    grid: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Machine or fleet spec (JSON).
    #[arg(long)]
    input: PathBuf,
}

/// Failures carry the exit code the spec assigns them: 1 for bad inputs,
/// 2 for solver/budget trouble.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Failure {
        Failure { code: 1, message: message.into() }
    }
    fn solver(err: MdpError) -> Failure {
        Failure { code: 2, message: err.to_string() }
    }
}

impl<E: std::fmt::Display> From<E> for Failure
where
    E: Into<anyhow::Error>,
{
    fn from(err: E) -> Failure {
        Failure::input(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Clap distinguishes help/version (success) from usage errors.
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(64);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    let started = Instant::now();
    let result = match cli.command {
        Command::Index(args) => cmd_index(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Study(args) => cmd_study(args),
        Command::PlotData(args) => cmd_plot_data(args),
        Command::Validate(args) => cmd_validate(args),
    };
    eprintln!("elapsed: {:.3}s", started.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// A fleet document has a `machines` array; a bare machine spec does not.
fn read_fleet(path: &Path, beta: Option<f64>) -> Result<FleetSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut fleet: FleetSpec = if value.get("machines").is_some() {
        serde_json::from_value(value).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
    } else {
        let machine: MachineSpec =
            serde_json::from_value(value).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        FleetSpec { machines: vec![machine], n_repairmen: 1, allow_idle: true }
    };
    if let Some(beta) = beta {
        for m in &mut fleet.machines {
            m.beta = beta;
        }
    }
    let mut violations = Vec::new();
    for (i, m) in fleet.machines.iter().enumerate() {
        for v in m.validate() {
            violations.push(format!("machine {i}: {v}"));
        }
    }
    if !violations.is_empty() {
        return Err(Failure::input(violations.join("\n")));
    }
    if fleet.machines.is_empty() {
        return Err(Failure::input("fleet has no machines"));
    }
    Ok(fleet)
}

fn write_or_print(output: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn sibling_csv(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

fn cmd_index(args: IndexArgs) -> Result<(), Failure> {
    let fleet = read_fleet(&args.input, args.beta)?;
    let mut tables: Vec<IndexTable> = Vec::with_capacity(fleet.machines.len());
    for (i, machine) in fleet.machines.iter().enumerate() {
        let mut table = w_index(machine)?;
        table.machine_id = i;
        tables.push(table);
    }
    let json = serde_json::to_string_pretty(&tables).expect("index tables serialize");
    write_or_print(&args.output, &json)?;
    if let Some(path) = &args.output {
        if fleet.machines.len() > 1 {
            let n_states = fleet.machines.iter().map(|m| m.n_states).max().unwrap_or(0);
            let mut csv = String::from("state");
            for i in 0..tables.len() {
                write!(csv, ",machine_{i}").unwrap();
            }
            csv.push('\n');
            for x in 0..n_states {
                write!(csv, "{x}").unwrap();
                for table in &tables {
                    match table.w.get(x) {
                        Some(w) => write!(csv, ",{w}").unwrap(),
                        None => csv.push(','),
                    }
                }
                csv.push('\n');
            }
            let csv_path = sibling_csv(path);
            std::fs::write(&csv_path, csv).map_err(|e| Failure::input(format!("{}: {e}", csv_path.display())))?;
        }
    }
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let fleet = read_fleet(&args.input, args.beta)?;
    let policy = Policy::index(&fleet, args.seed).map_err(|e| Failure::input(e.to_string()))?;
    let joint = solve_joint(&fleet, args.epsilon).map_err(Failure::solver)?;
    let eval = evaluate_policy(&fleet, &policy, args.epsilon).map_err(Failure::solver)?;
    let suboptimality = if joint.value_at_origin != 0.0 {
        (100.0 * (eval.value_at_origin - joint.value_at_origin) / joint.value_at_origin).max(0.0)
    } else {
        0.0
    };
    let report = serde_json::json!({
        "optimal_value": joint.value_at_origin,
        "index_policy_value": eval.value_at_origin,
        "suboptimality_pct": suboptimality,
        "joint_states": joint.n_joint_states,
        "solver_iterations": joint.iterations,
        "evaluation_iterations": eval.iterations,
        "epsilon": args.epsilon,
        "seed": args.seed,
    });
    write_or_print(&args.output, &serde_json::to_string_pretty(&report).expect("report serializes"))
}

fn build_policies(fleet: &FleetSpec, choices: &[PolicyChoice], threshold_count: usize, seed: u64) -> Result<Vec<Policy>, Failure> {
    let mut policies = Vec::new();
    for (slot, choice) in choices.iter().enumerate() {
        let policy_seed = seed.wrapping_add(slot as u64);
        match choice {
            PolicyChoice::Index => policies.push(Policy::index(fleet, policy_seed).map_err(|e| Failure::input(e.to_string()))?),
            PolicyChoice::Naive => policies.push(Policy::naive(policy_seed)),
            PolicyChoice::Myopic => policies.push(Policy::myopic(fleet, policy_seed).map_err(|e| Failure::input(e.to_string()))?),
            PolicyChoice::Thresholds => {
                policies.extend(enumerate_thresholds(fleet, threshold_count).map_err(|e| Failure::input(e.to_string()))?)
            }
        }
    }
    Ok(policies)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let fleet = read_fleet(&args.input, args.beta)?;
    let policies = build_policies(&fleet, &args.policies, args.threshold_count, args.seed)?;
    let batch = simulate_batch(&fleet, &policies, args.horizon, args.replicates, args.seed);
    let json = serde_json::to_string_pretty(&batch.aggregates).expect("aggregates serialize");
    write_or_print(&args.output, &json)?;
    if let Some(path) = &args.output {
        let mut csv = String::from("policy,mean_cost,mean_interventions,mean_failures\n");
        for a in &batch.aggregates {
            writeln!(csv, "{},{},{},{}", a.policy, a.mean_cost, a.mean_interventions, a.mean_failures).unwrap();
        }
        let csv_path = sibling_csv(path);
        std::fs::write(&csv_path, csv).map_err(|e| Failure::input(format!("{}: {e}", csv_path.display())))?;
    }
    Ok(())
}

fn study_grid(args: &StudyArgs) -> Result<Vec<ScenarioConfig>, Failure> {
    if let Some(path) = &args.input {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let config: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        return Ok(vec![config]);
    }
    let study = match args.study {
        StudyChoice::Suboptimality => Study::Suboptimality,
        StudyChoice::LargeSystem => Study::LargeSystem,
        StudyChoice::Myopic => Study::MyopicComparison,
    };
    let mut base = ScenarioConfig::defaults(study);
    base.sampler_seed = args.seed;
    base.mode = match args.mode {
        ModeChoice::Failures => Mode::WithFailures,
        ModeChoice::Pure => Mode::PureDeterioration,
    };
    if args.instances > 0 {
        base.n_instances = args.instances;
    }
    if let Some(beta) = args.beta {
        base.beta = beta;
    }
    if let Some(horizon) = args.horizon {
        base.horizon = horizon;
    }
    if let Some(replicates) = args.replicates {
        base.n_replicates = replicates;
    }
    if let Some(epsilon) = args.epsilon {
        base.epsilon = epsilon;
    }
    if let Some(count) = args.threshold_count {
        base.threshold_count = count;
    }
    let (shapes, cases, bands): (Vec<OpCostShape>, usize, usize) = match study {
        // Tables 3-4 shape: every maintenance case, both cost shapes, the
        // single small-scale failure band.
        Study::Suboptimality => (vec![OpCostShape::Linear, OpCostShape::Quadratic], 5, 1),
        // Tables 5-7 shape: four maintenance cases by three failure bands.
        Study::LargeSystem | Study::MyopicComparison => (vec![OpCostShape::Linear], 4, 3),
    };
    let mut grid = Vec::new();
    for &shape in &shapes {
        for band in 1..=bands {
            for case in 1..=cases {
                let mut config = base;
                config.op_shape = shape;
                config.maint_case = case;
                config.failure_band = band;
                grid.push(config);
            }
        }
    }
    Ok(grid)
}

fn shape_name(shape: OpCostShape) -> &'static str {
    match shape {
        OpCostShape::Linear => "linear",
        OpCostShape::Quadratic => "quadratic",
    }
}

fn study_csv(reports: &[RunReport]) -> String {
    let mut csv = String::new();
    let any_stats = reports.iter().any(|r| r.suboptimality_stats.is_some());
    if any_stats {
        csv.push_str("shape,case,band,min,q1,median,q3,max,n,clamped,discarded\n");
        for r in reports {
            if let Some(s) = &r.suboptimality_stats {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    shape_name(r.config.op_shape),
                    r.config.maint_case,
                    r.config.failure_band,
                    s.min,
                    s.q1,
                    s.median,
                    s.q3,
                    s.max,
                    s.n,
                    s.n_clamped,
                    r.n_discarded_nonindexable
                )
                .unwrap();
            }
        }
    } else {
        csv.push_str("band,case,policy,mean_cost,mean_interventions,mean_failures\n");
        for r in reports {
            for row in &r.policy_comparison {
                writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.config.failure_band, r.config.maint_case, row.policy, row.mean_cost, row.mean_interventions, row.mean_failures
                )
                .unwrap();
            }
            if let Some(ratios) = &r.ratios {
                writeln!(
                    csv,
                    "{},{},ratio_index_vs_naive,{},,",
                    r.config.failure_band, r.config.maint_case, ratios.index_vs_naive
                )
                .unwrap();
                writeln!(
                    csv,
                    "{},{},ratio_index_vs_best_threshold,{},,",
                    r.config.failure_band, r.config.maint_case, ratios.index_vs_best_threshold
                )
                .unwrap();
                writeln!(
                    csv,
                    "{},{},ratio_index_vs_average_threshold,{},,",
                    r.config.failure_band, r.config.maint_case, ratios.index_vs_average_threshold
                )
                .unwrap();
                if let Some(m) = ratios.index_vs_myopic {
                    writeln!(csv, "{},{},ratio_index_vs_myopic,{},,", r.config.failure_band, r.config.maint_case, m).unwrap();
                }
            }
        }
    }
    csv
}

fn cmd_study(args: StudyArgs) -> Result<(), Failure> {
    let grid = study_grid(&args)?;
    let mut reports = Vec::with_capacity(grid.len());
    for config in &grid {
        eprintln!(
            "running {:?} shape={} case={} band={} instances={}",
            config.study,
            shape_name(config.op_shape),
            config.maint_case,
            config.failure_band,
            config.n_instances
        );
        let report = run_study(config).map_err(|e| Failure { code: 2, message: e.to_string() })?;
        for failure in &report.instance_failures {
            eprintln!("  instance failure: {failure}");
        }
        reports.push(report);
    }
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_or_print(&args.output, &json)?;
    if let Some(path) = &args.output {
        let csv_path = sibling_csv(path);
        std::fs::write(&csv_path, study_csv(&reports)).map_err(|e| Failure::input(format!("{}: {e}", csv_path.display())))?;
    }
    Ok(())
}

fn cmd_plot_data(args: PlotDataArgs) -> Result<(), Failure> {
    let fleet = read_fleet(&args.input, args.beta)?;
    let machine = &fleet.machines[0];
    let aux = build_auxiliary(machine)?;
    let h = h_function(machine, &aux);
    let table = w_index(machine)?;
    if !table.indexable {
        return Err(Failure::input("machine is not indexable; no index curve to plot"));
    }
    let grid = args.grid.max(2);
    let (lo, hi) = table.w[1..]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
    let span = (hi - lo).max(1.0);
    let (lo, hi) = (lo - 0.25 * span, hi + 0.25 * span);
    let mut curves = Vec::new();
    for x in 1..machine.n_states {
        let samples: Vec<serde_json::Value> = (0..grid)
            .map(|k| {
                let w = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
                serde_json::json!({"w": w, "commitment_cost": b_policy_cost(machine, &aux, x, w)})
            })
            .collect();
        curves.push(serde_json::json!({
            "level": x,
            "h": h[x],
            "index": table.w[x],
            "samples": samples,
        }));
    }
    let doc = serde_json::json!({
        "beta": machine.beta,
        "n_states": machine.n_states,
        "index_curve": table.w,
        "h_curve": h,
        "commitment_curves": curves,
    });
    write_or_print(&args.output, &serde_json::to_string_pretty(&doc).expect("plot data serializes"))?;
    if let Some(path) = &args.output {
        let mut csv = String::from("kind,level,w,value\n");
        for (x, w) in table.w.iter().enumerate() {
            writeln!(csv, "index,{x},,{w}").unwrap();
        }
        for (x, v) in h.iter().enumerate() {
            writeln!(csv, "h,{x},,{v}").unwrap();
        }
        for x in 1..machine.n_states {
            for k in 0..grid {
                let w = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
                writeln!(csv, "commitment,{x},{w},{}", b_policy_cost(machine, &aux, x, w)).unwrap();
            }
        }
        let csv_path = sibling_csv(path);
        std::fs::write(&csv_path, csv).map_err(|e| Failure::input(format!("{}: {e}", csv_path.display())))?;
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Failure::input(format!("{}: {e}", args.input.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", args.input.display())))?;
    let machines: Vec<MachineSpec> = if value.get("machines").is_some() {
        let fleet: FleetSpec =
            serde_json::from_value(value).map_err(|e| Failure::input(format!("{}: {e}", args.input.display())))?;
        fleet.machines
    } else {
        let machine: MachineSpec =
            serde_json::from_value(value).map_err(|e| Failure::input(format!("{}: {e}", args.input.display())))?;
        vec![machine]
    };
    let mut violations = Vec::new();
    for (i, m) in machines.iter().enumerate() {
        for v in m.validate() {
            violations.push(format!("machine {i}: {v}"));
        }
    }
    if violations.is_empty() {
        println!("ok: {} machine(s) valid", machines.len());
        Ok(())
    } else {
        Err(Failure::input(violations.join("\n")))
    }
}
