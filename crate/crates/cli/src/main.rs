use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use netrepair::dp::{policy_iteration, DpOptions};
use netrepair::experiments::{
    records_from_csv, records_to_csv, run_benchmark, summarize, summary_csv, summary_text,
    ExperimentConfig, DESK_STEPS, PAPER_STEPS,
};
use netrepair::fixtures::{
    verify_suboptimal_cases, verify_two_machine_policy, SUBOPTIMAL_CASE_TOL,
};
use netrepair::index_policy::IndexPolicy;
use netrepair::instance::{generate_instance, GenerateOptions};
use netrepair::mdp::{default_initial_state, simulate, PassivePolicy};
use netrepair::opi::{online_run, run_opi, BudgetMode, OnlineStream, OpiBudget, ValueStore};
use netrepair::polling::{best_polling_report, MAX_TOUR_MACHINES};
use netrepair::rng::crn_list;
use netrepair::{CostKind, InstanceParameters, NodeId, SimulationReport, SystemState};

#[derive(Parser)]
#[command(name = "netrepair", version, about = "Repair scheduling on networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance and write it as JSON.
    Generate(GenerateArgs),
    /// Solve an instance exactly by policy iteration.
    SolveDp(SolveArgs),
    /// Simulate a heuristic on an instance.
    Simulate(SimulateArgs),
    /// Run offline estimation and the online rollout policy.
    Opi(OpiArgs),
    /// Run every heuristic on a batch of generated instances.
    Benchmark(BenchmarkArgs),
    /// Summarize a benchmark CSV into bucketed tables.
    Report(ReportArgs),
    /// Check the built-in reference instances.
    Verify,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long)]
    cap: Option<u32>,
    /// linear, quadratic or piecewise_linear.
    #[arg(long)]
    cost: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    instance: PathBuf,
    /// Largest state space accepted.
    #[arg(long, default_value_t = netrepair::mdp::DEFAULT_STATE_BOUND)]
    state_bound: u64,
    /// Writes the optimal policy table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Index,
    ModifiedIndex,
    Polling,
    Passive,
}

#[derive(Args)]
struct SimulateArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyKind::Index)]
    policy: PolicyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DESK_STEPS)]
    steps: u64,
    /// Prints every index at the given state, e.g. `1:0,2,1` for node 1
    /// with conditions (0,2,1), and exits.
    #[arg(long)]
    index_table: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    StepCount,
    WallClock,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, value_enum)]
    budget_mode: Option<ModeArg>,
    /// Full-size budgets and run lengths.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    r_off: Option<u64>,
    #[arg(long)]
    r2: Option<u64>,
}

impl BudgetArgs {
    fn budget(&self) -> OpiBudget {
        let mut b = if self.paper_scale {
            OpiBudget::paper_scale()
        } else {
            OpiBudget::desk()
        };
        if let Some(m) = self.budget_mode {
            b.mode = match m {
                ModeArg::StepCount => BudgetMode::StepCount,
                ModeArg::WallClock => BudgetMode::WallClock,
            };
        }
        if let Some(v) = self.r_off {
            b.r_off = v;
        }
        if let Some(v) = self.r2 {
            b.r2 = v;
        }
        b
    }

    fn steps(&self, steps: Option<u64>) -> u64 {
        steps.unwrap_or(if self.paper_scale {
            PAPER_STEPS
        } else {
            DESK_STEPS
        })
    }
}

#[derive(Args)]
struct OpiArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Online steps.
    #[arg(long)]
    steps: Option<u64>,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Skips the offline phase and starts from a saved store.
    #[arg(long)]
    store_in: Option<PathBuf>,
    /// Saves the value store after the run.
    #[arg(long)]
    store_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// First instance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    count: u64,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long)]
    cap: Option<u32>,
    #[arg(long)]
    cost: Option<String>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    no_opi: bool,
    #[arg(long, default_value_t = netrepair::experiments::DEFAULT_DP_STATE_LIMIT)]
    dp_state_limit: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Per-instance CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Benchmark CSV.
    input: PathBuf,
    /// Writes the summary as CSV; the text tables go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_cost(s: Option<&str>) -> Result<Option<CostKind>> {
    s.map(|s| CostKind::parse(s).ok_or_else(|| anyhow!("unknown cost kind `{s}`")))
        .transpose()
}

fn load(path: &Path) -> Result<InstanceParameters> {
    InstanceParameters::load(path).with_context(|| format!("loading {}", path.display()))
}

/// Parses `node:c1,c2,...` with a 1-based node label.
fn parse_state(inst: &InstanceParameters, s: &str) -> Result<SystemState> {
    let (node, conds) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("state must look like `node:c1,c2,...`"))?;
    let node = NodeId::from_label(node.trim().parse()?)
        .ok_or_else(|| anyhow!("node labels start at 1"))?;
    let conds: Vec<u8> = conds
        .split(',')
        .map(|c| c.trim().parse::<u8>())
        .collect::<std::result::Result<_, _>>()?;
    let x = SystemState::new(node, &conds);
    if !x.is_valid(inst) {
        bail!("state {x} is not valid for this instance");
    }
    Ok(x)
}

fn report_json(r: &SimulationReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)? + "\n")
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let opts = GenerateOptions {
        machines: a.machines,
        cap: a.cap,
        cost_kind: parse_cost(a.cost.as_deref())?,
    };
    let inst = generate_instance(a.seed, &opts)?;
    write_or_print(a.out.as_deref(), &(inst.to_json() + "\n"))
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    let opts = DpOptions {
        state_bound: a.state_bound,
        ..Default::default()
    };
    let sol = policy_iteration(&inst, None, &opts)?;
    println!(
        "g* = {:.10}\nu* = {:.10}\nstates = {}\niterations = {}",
        sol.g_star,
        sol.u_star(&inst),
        inst.state_count(),
        sol.iterations
    );
    if let Some(p) = &a.out {
        fs::write(p, sol.policy_json())?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    if let Some(s) = &a.index_table {
        let x = parse_state(&inst, s)?;
        print!("{}", IndexPolicy::new(&inst).describe(&x));
        return Ok(());
    }
    let crn = crn_list(a.seed, a.steps as usize);
    let x0 = default_initial_state(&inst);
    let report = match a.policy {
        PolicyKind::Index => simulate(&inst, &mut IndexPolicy::new(&inst), &x0, a.steps, &crn)?,
        PolicyKind::ModifiedIndex => {
            simulate(&inst, &mut IndexPolicy::modified(&inst), &x0, a.steps, &crn)?
        }
        PolicyKind::Passive => simulate(&inst, &mut PassivePolicy, &x0, a.steps, &crn)?,
        PolicyKind::Polling => {
            let r = best_polling_report(&inst, &x0, a.steps, &crn, MAX_TOUR_MACHINES)?;
            eprintln!("best tour {}", r.best_tour.label());
            r.best
        }
    };
    write_or_print(a.out.as_deref(), &report_json(&report)?)
}

fn cmd_opi(a: &OpiArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    let steps = a.budget.steps(a.steps);
    let budget = OpiBudget {
        r_on: steps,
        ..a.budget.budget()
    };
    let (report, store) = match &a.store_in {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut store = ValueStore::from_json(&inst, &text)?;
            let base = IndexPolicy::modified(&inst);
            let x0 = default_initial_state(&inst);
            let report = online_run(
                &inst,
                &base,
                &mut store,
                &x0,
                &budget,
                OnlineStream::Seeded(a.seed),
                a.seed,
            )?;
            (report, store)
        }
        None => {
            let out = run_opi(&inst, &budget, OnlineStream::Seeded(a.seed), a.seed)?;
            eprintln!(
                "base gain {:.6}, {} start states, {} stored",
                out.preparation.g_base,
                out.preparation.z.len(),
                out.store.len()
            );
            (out.report, out.store)
        }
    };
    if let Some(p) = &a.store_out {
        fs::write(p, store.to_json())?;
    }
    write_or_print(a.out.as_deref(), &report_json(&report)?)
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<bool> {
    let seeds: Vec<u64> = (a.seed..a.seed + a.count).collect();
    let mut cfg = if a.budget.paper_scale {
        ExperimentConfig::paper_scale(seeds)
    } else {
        ExperimentConfig::desk(seeds)
    };
    cfg.generate = GenerateOptions {
        machines: a.machines,
        cap: a.cap,
        cost_kind: parse_cost(a.cost.as_deref())?,
    };
    cfg.steps = a.budget.steps(a.steps);
    cfg.budget = a.budget.budget();
    cfg.run_opi = !a.no_opi;
    cfg.dp_state_limit = a.dp_state_limit;
    cfg.threads = a.threads;
    let out = run_benchmark(&cfg)?;
    write_or_print(a.out.as_deref(), &records_to_csv(&out.records)?)?;
    for f in &out.failures {
        eprintln!("instance {} failed: {}", f.seed, f.message);
    }
    Ok(out.failures.is_empty())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rows = summarize(&records_from_csv(&text)?)?;
    print!("{}", summary_text(&rows));
    if let Some(p) = &a.out {
        fs::write(p, summary_csv(&rows))?;
    }
    Ok(())
}

fn cmd_verify() -> Result<bool> {
    let mut ok = true;
    let bad = verify_two_machine_policy()?;
    println!(
        "two-machine optimal actions: {}",
        if bad.is_empty() { "ok" } else { "MISMATCH" }
    );
    for m in &bad {
        println!("  {m}");
    }
    ok &= bad.is_empty();
    for o in verify_suboptimal_cases()? {
        let pass = o.passes(SUBOPTIMAL_CASE_TOL);
        println!("{o}: {}", if pass { "ok" } else { "MISMATCH" });
        ok &= pass;
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a).map(|_| true),
        Command::SolveDp(a) => cmd_solve(&a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| true),
        Command::Opi(a) => cmd_opi(&a).map(|_| true),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Report(a) => cmd_report(&a).map(|_| true),
        Command::Verify => cmd_verify(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
