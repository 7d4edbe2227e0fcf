mod problem;
mod repl;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use actclass::ams::{solve_ams, AmsConfig};
use actclass::exact::{solve_exact, UnfoldOptions, DEFAULT_NODE_BUDGET};
use actclass::export::write_explicit;
use actclass::models::io::{problem_hash, PolicyFile};
use actclass::sim::{simulate_many, EvalReport};
use actclass::{Error, Policy, Problem};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use problem::{parse_model, parse_threshold_sets, parse_usize_list, ProblemArgs};

#[derive(Parser)]
#[command(
    name = "actclass",
    version,
    about = "Cost-bounded active classification planner"
)]
struct Cli {
    /// Worker threads for sweeps and simulations (default: all cores).
    #[arg(long, global = true, env = "ACTCLASS_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the maximal decision probability and a policy.
    Solve(SolveArgs),
    /// Run a saved policy against simulated true models.
    Simulate(SimulateArgs),
    /// Solve a grid of configurations and print one CSV row each.
    Sweep(SweepArgs),
    /// Write the unfolded belief MDP as explicit-state files.
    Export(ExportArgs),
    /// Follow a saved policy interactively, entering observed states by hand.
    Advise(AdviseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Ams,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Ams => "ams",
        }
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Samples per stage for the sampling solver: one count for every stage,
    /// or H+1 comma-separated counts.
    #[arg(long, default_value = "2000", value_name = "N")]
    samples: String,

    /// Random seed for the sampling solver.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Disable memoisation of sampled node estimates.
    #[arg(long)]
    no_memo: bool,

    /// Largest belief MDP the exact solver may build.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
}

impl SolverArgs {
    fn ams_config(&self) -> anyhow::Result<AmsConfig> {
        Ok(AmsConfig {
            samples_per_stage: parse_usize_list(&self.samples)?,
            seed: self.seed,
            memoize: !self.no_memo,
        })
    }

    fn unfold_options(&self) -> UnfoldOptions {
        UnfoldOptions {
            node_budget: self.node_budget,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    #[arg(long, value_enum, default_value_t = Method::Exact)]
    method: Method,

    #[command(flatten)]
    solver: SolverArgs,

    /// Policy output file.
    #[arg(long, default_value = "policy.json")]
    out: PathBuf,

    /// Also write per-node sampling statistics as JSON lines (sampling solver only).
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Policy file written by `solve`.
    #[arg(long)]
    policy: PathBuf,

    /// Optional model to check the policy against.
    #[command(flatten)]
    problem: ProblemArgs,

    #[arg(long, default_value_t = 1000)]
    runs: u64,

    /// Fix the true model (label or index) instead of drawing it from the prior.
    #[arg(long)]
    true_model: Option<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Directory for one JSON trace file per episode.
    #[arg(long, value_name = "DIR")]
    traces: Option<PathBuf>,

    /// CSV output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    /// Horizons, e.g. `1-5` or `1,2,4`.
    #[arg(long, default_value = "1-5")]
    horizons: String,

    /// Threshold sets: `a,b,c`, or numeric sets separated by `;`
    /// (default: the model's own thresholds).
    #[arg(long, value_name = "LIST")]
    threshold_sets: Option<String>,

    /// Solvers to run, comma-separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "exact")]
    methods: Vec<Method>,

    #[command(flatten)]
    solver: SolverArgs,

    /// CSV output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    /// Output stem; `.sta`, `.tra` and `.lab` are appended.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
}

#[derive(Args)]
pub struct AdviseArgs {
    /// Policy file written by `solve`.
    #[arg(long)]
    policy: PathBuf,

    /// Optional model to check the policy against.
    #[command(flatten)]
    problem: ProblemArgs,

    /// Where to save the session transcript.
    #[arg(long, default_value = "transcript.json")]
    transcript: PathBuf,

    /// Re-run the observations of a saved transcript instead of reading input.
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Export(args) => cmd_export(args),
        Command::Advise(args) => repl::cmd_advise(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let resource = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<Error>(),
                    Some(Error::NodeBudgetExceeded { .. })
                )
            });
            ExitCode::from(if resource { 3 } else { 2 })
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Loads a policy file and, when a model is also given on the command line,
/// checks that the policy was computed for it.
pub fn load_policy(path: &Path, check: &ProblemArgs) -> anyhow::Result<(Problem, Policy)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (problem, policy) =
        PolicyFile::load(&text).with_context(|| format!("loading {}", path.display()))?;
    if check.is_given() {
        let expected = check.build()?;
        if problem_hash(&expected) != problem_hash(&problem) {
            bail!(
                "policy/model mismatch: {} was computed for a different problem than the one given",
                path.display()
            );
        }
    }
    Ok((problem, policy))
}

struct Solved {
    probability: f64,
    policy: Policy,
    /// Nodes in the unfolded MDP, or samples drawn.
    work: u64,
    seconds: f64,
}

fn solve(
    problem: &Problem,
    method: Method,
    solver: &SolverArgs,
    stats: Option<&Path>,
) -> anyhow::Result<(Solved, String)> {
    match method {
        Method::Exact => {
            let start = Instant::now();
            let sol = solve_exact(problem, solver.unfold_options())?;
            let seconds = start.elapsed().as_secs_f64();
            let details = format!(
                "nodes: {}\ntransitions: {}\ngoal nodes: {}",
                sol.mdp.len(),
                sol.mdp.num_edges(),
                sol.mdp.num_goal()
            );
            Ok((
                Solved {
                    probability: sol.probability,
                    policy: sol.policy,
                    work: sol.mdp.len() as u64,
                    seconds,
                },
                details,
            ))
        }
        Method::Ams => {
            let config = solver.ams_config()?;
            let start = Instant::now();
            let sol = solve_ams(problem, &config)?;
            let seconds = start.elapsed().as_secs_f64();
            if let Some(path) = stats {
                fs::write(path, sol.stats.dump_json_lines())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let details = format!(
                "samples drawn: {}\nnodes sampled: {}",
                sol.samples_drawn,
                sol.stats.nodes.len()
            );
            Ok((
                Solved {
                    probability: sol.estimate,
                    policy: sol.policy,
                    work: sol.samples_drawn,
                    seconds,
                },
                details,
            ))
        }
    }
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<()> {
    let problem = args.problem.build()?;
    if args.stats.is_some() && args.method != Method::Ams {
        bail!("--stats needs --method ams");
    }
    let (solved, details) = solve(&problem, args.method, &args.solver, args.stats.as_deref())?;
    println!("method: {}", args.method.name());
    println!("probability: {}", solved.probability);
    println!("{details}");
    println!("policy entries: {}", solved.policy.len());
    println!("wall time: {:.6} s", solved.seconds);
    let file = PolicyFile::new(&problem, solved.policy);
    fs::write(&args.out, file.to_json())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("policy: {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let (problem, policy) = load_policy(&args.policy, &args.problem)?;
    if args.runs == 0 {
        bail!("--runs must be positive");
    }
    let true_model = args
        .true_model
        .as_deref()
        .map(|m| parse_model(&problem.family, m))
        .transpose()?;
    let traces = simulate_many(&problem, &policy, args.runs, args.seed, true_model)?;
    if let Some(dir) = &args.traces {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, t) in traces.iter().enumerate() {
            let path = dir.join(format!("episode_{k:06}.json"));
            fs::write(&path, t.to_json_line() + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let report = EvalReport::from_traces(problem.family.num_models(), &traces);
    write_output(args.out.as_deref(), &report.to_csv(&problem_hash(&problem)))
}

struct SweepRow {
    thresholds: String,
    horizon: usize,
    method: Method,
    solved: Solved,
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let base = args.problem.build()?;
    let horizons = parse_usize_list(&args.horizons)?;
    let sets = match &args.threshold_sets {
        Some(text) => parse_threshold_sets(text)?,
        None => vec![(
            base.spec
                .thresholds
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" "),
            base.spec.thresholds.clone(),
        )],
    };
    let mut configs = Vec::new();
    for (name, thresholds) in &sets {
        for &h in &horizons {
            for &method in &args.methods {
                let mut p = base.clone();
                p.spec.thresholds = thresholds.clone();
                p.budget.horizon = h;
                p.ensure_valid()?;
                configs.push((name.clone(), p, method));
            }
        }
    }
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .map(|(name, p, method)| {
            let (solved, _) = solve(p, *method, &args.solver, None)?;
            Ok(SweepRow {
                thresholds: name.clone(),
                horizon: p.budget.horizon,
                method: *method,
                solved,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let mut csv = String::from(
        "index,thresholds,horizon,cost_bound,method,safe,probability,runtime_s,work\n",
    );
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{:.6},{}\n",
            r.thresholds,
            r.horizon,
            base.budget.cost_bound,
            r.method.name(),
            base.spec.reach_avoid(),
            r.solved.probability,
            r.solved.seconds,
            r.solved.work
        ));
    }
    write_output(args.out.as_deref(), &csv)
}

fn cmd_export(args: ExportArgs) -> anyhow::Result<()> {
    let problem = args.problem.build()?;
    let sol = solve_exact(
        &problem,
        UnfoldOptions {
            node_budget: args.node_budget,
        },
    )?;
    let paths = write_explicit(&sol.mdp, &args.out)?;
    println!("states: {}", sol.mdp.len());
    println!("transitions: {}", sol.mdp.num_edges());
    println!("goal nodes: {}", sol.mdp.num_goal());
    println!("probability: {}", sol.probability);
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}
