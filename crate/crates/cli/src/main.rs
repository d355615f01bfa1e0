use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use maxq::decomp::solve_recursively_optimal;
use maxq::envs::{build_env, Env, ENV_NAMES};
use maxq::exec::root_values;
use maxq::harness::{emit_report, run_experiment, Bundle, ExperimentConfig, Method};
use maxq::mdp::{bellman_residual, value_iteration};
use maxq::taskgraph::{check_abstraction_safety, flat_q_count, storage_count, validate_graph, KeyMode};

#[derive(Parser)]
#[command(name = "maxq", version, about = "Hierarchical value-function decomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write learning curves. Without --config or --method, runs all four methods.
    Run(RunArgs),
    /// Print table sizes for the flat and hierarchical learners.
    Account(EnvArgs),
    /// Solve the environment exactly, flat and hierarchically.
    Solve(EnvArgs),
    /// Validate the task graph and test every state abstraction.
    Check(EnvArgs),
}

#[derive(Args)]
struct EnvArgs {
    /// One of taxi, taxi-fickle, taxi-fuel, hdg, two-rooms.
    #[arg(long)]
    env: Option<String>,
    /// Experiment config file (TOML); its env and env_overrides are used.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    FlatQ,
    Maxq,
    MaxqAbstract,
    MaxqGreedy,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::FlatQ => Method::FlatQ,
            MethodArg::Maxq => Method::Maxq,
            MethodArg::MaxqAbstract => Method::MaxqAbstract,
            MethodArg::MaxqGreedy => Method::MaxqGreedy,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Run a single method with its preset settings.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// First seed; with --trials, seeds run from here upward.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent seeded runs.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long, env = "MAXQ_OUT")]
    out: Option<PathBuf>,
}

impl EnvArgs {
    fn config(&self) -> Result<Option<ExperimentConfig>> {
        self.config
            .as_ref()
            .map(|p| ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())))
            .transpose()
    }

    fn build(&self) -> Result<Env> {
        let cfg = self.config()?;
        let name = match (&self.env, &cfg) {
            (Some(e), _) => e.clone(),
            (None, Some(c)) => c.env.clone(),
            (None, None) => "taxi".into(),
        };
        let overrides = cfg.map(|c| c.env_overrides.to_string()).unwrap_or_default();
        build_env(&name, &overrides).with_context(|| format!("building `{name}` (known: {})", ENV_NAMES.join(", ")))
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let loaded = args.env.config()?;
    let env = args.env.env.clone().or_else(|| loaded.as_ref().map(|c| c.env.clone())).unwrap_or_else(|| "taxi".into());
    let mut base = match (&loaded, args.method) {
        (Some(c), _) => c.clone(),
        (None, Some(m)) => ExperimentConfig::preset(&env, m.into()),
        (None, None) => ExperimentConfig { name: env.clone(), ..ExperimentConfig::preset(&env, Method::FlatQ) },
    };
    base.env = env;
    if let Some(m) = args.method {
        if loaded.is_some() {
            base.method = m.into();
        }
    }
    if let Some(n) = args.episodes {
        base.episodes = n;
    }
    match (args.seed, args.trials) {
        (None, None) => {}
        (seed, trials) => {
            let first = seed.unwrap_or_else(|| base.seeds.first().copied().unwrap_or(0));
            let n = trials.unwrap_or(1);
            base.seeds = (first..first + n).collect();
        }
    }
    let out = args.out.clone().or_else(|| base.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let configs = if loaded.is_none() && args.method.is_none() { base.comparison() } else { vec![base] };
    for cfg in &configs {
        cfg.validate()?;
        let bundle = run_experiment(cfg)?;
        let files = emit_report(&bundle, &out)?;
        summarize(&bundle);
        for f in files {
            println!("  wrote {}", f.display());
        }
    }
    Ok(())
}

fn summarize(bundle: &Bundle) {
    let tail: Vec<f64> = bundle
        .runs
        .iter()
        .flat_map(|r| {
            let n = r.episodes.len();
            r.episodes[n.saturating_sub(100)..].iter().map(|e| e.episode_return)
        })
        .collect();
    let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    let steps: usize = bundle.runs.iter().map(|r| r.episodes.last().map_or(0, |e| e.primitive_step)).sum();
    println!(
        "{}: {} seeds, {} primitive steps, mean return over the last 100 episodes {mean:.3}",
        bundle.config.name,
        bundle.runs.len(),
        steps
    );
    for r in &bundle.runs {
        if let Some(e) = &r.error {
            println!("  seed {} stopped: {e}", r.seed);
        }
    }
}

fn account(args: &EnvArgs) -> Result<()> {
    let env = args.build()?;
    println!("{}: flat Q entries {}", env.name, flat_q_count(&env.model));
    for mode in [KeyMode::Full, KeyMode::Abstract] {
        let r = storage_count(&env.graph, &env.model, mode);
        println!("\nhierarchical entries ({mode:?} keys): {}\n{r}", r.total());
    }
    Ok(())
}

fn solve(args: &EnvArgs) -> Result<()> {
    let env = args.build()?;
    let (m, g) = (&env.model, &env.graph);
    let vstar = value_iteration(m, 1e-12)?;
    let sol = solve_recursively_optimal(g, m, 1e-11)?;
    let hier = root_values(&sol.store, g, m)?;
    println!("{}: {} states, {} actions", env.name, m.num_states(), m.num_actions());
    println!("optimal mean start value       {:.6}", vstar.mean_over(m.start()));
    println!("recursively optimal mean value {:.6}", hier.mean_over(m.start()));
    println!("Bellman residual               {:.3e}", bellman_residual(m, &vstar));
    let worse = (0..m.num_states()).filter(|&s| vstar.get(s) - hier.get(s) > 1e-9).count();
    println!("states where the hierarchy loses value: {worse}");
    Ok(())
}

fn check(args: &EnvArgs) -> Result<bool> {
    let env = args.build()?;
    let v = validate_graph(&env.graph, &env.model);
    println!("{v}");
    let safety = check_abstraction_safety(&env.graph, &env.model);
    println!("{safety}");
    Ok(v.passed() && safety.is_safe())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) => run(a)?,
        Command::Account(a) => account(a)?,
        Command::Solve(a) => solve(a)?,
        Command::Check(a) => {
            if !check(a)? {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
