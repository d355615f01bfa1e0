//! Experiment runner: seeded multi-run training of the compared learners,
//! greedy-policy checkpoints, averaged curves and report files.

mod config;
mod report;

pub use config::{ExperimentConfig, InterruptSchedule, Method, Reports};
pub use report::{averaged_curve, emit_report, read_episode_csv, write_episode_csv, CurvePoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{GreedyPolicy, ValueStore};
use crate::envs::{build_env, Env, EnvError};
use crate::exec::{run_flat_policy, run_hg_episode, run_hierarchical_episode, ExecError};
use crate::learn::{flat_q_episode, maxqq_episode, Episode, FlatLearner, LearnError, MaxqLearner, Variant};
use crate::mdp::{PolicyMap, TabularQ};
use crate::taskgraph::{flat_q_count, storage_count, KeyMode, StorageReport};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One row of the per-episode curve file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Primitive steps taken by this seed up to the end of the episode.
    #[serde(rename = "primitive-step")]
    pub primitive_step: usize,
    /// Episode index within the seed's run.
    pub trial: usize,
    pub seed: u64,
    /// Reward collected by this seed up to the end of the episode.
    #[serde(rename = "cumulative-reward")]
    pub cumulative_reward: f64,
    #[serde(rename = "episode-return")]
    pub episode_return: f64,
}

/// Value of the current greedy policy, measured by rollouts from every start
/// state. `None` when some rollout hit the evaluation step cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub trial: usize,
    #[serde(rename = "primitive-step")]
    pub primitive_step: usize,
    pub seed: u64,
    pub value: Option<f64>,
}

/// What a run learned.
#[derive(Debug, Clone, PartialEq)]
pub enum Learned {
    Flat(TabularQ),
    Maxq(ValueStore),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub learned: Learned,
    /// Why the run stopped early, if it did.
    pub error: Option<String>,
}

/// Table sizes of the experiment's representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accounting {
    pub flat_q: usize,
    /// Per-table counts; absent for flat learners.
    pub report: Option<StorageReport>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: ExperimentConfig,
    pub env: Env,
    /// Sorted by seed.
    pub runs: Vec<SeedRun>,
    pub accounting: Accounting,
}

fn key_mode(method: Method) -> KeyMode {
    if method == Method::Maxq {
        KeyMode::Full
    } else {
        KeyMode::Abstract
    }
}

/// Trains every seed of `cfg` (in parallel) and collects the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Bundle, HarnessError> {
    cfg.validate()?;
    let overrides = toml::to_string(&cfg.env_overrides).map_err(|e| HarnessError::Config(e.to_string()))?;
    let env = build_env(&cfg.env, &overrides)?;
    if cfg.method != Method::FlatQ {
        cfg.learner.validate(Some(&env.graph))?;
    }
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let runs = seeds.par_iter().map(|&seed| run_seed(cfg, &env, seed)).collect::<Result<Vec<_>, _>>()?;
    let accounting = Accounting {
        flat_q: flat_q_count(&env.model),
        report: (cfg.method != Method::FlatQ).then(|| storage_count(&env.graph, &env.model, key_mode(cfg.method))),
    };
    Ok(Bundle { config: cfg.clone(), env, runs, accounting })
}

enum Agent {
    Flat(FlatLearner),
    Maxq(MaxqLearner, ValueStore),
}

fn run_seed(cfg: &ExperimentConfig, env: &Env, seed: u64) -> Result<SeedRun, HarnessError> {
    let (model, graph) = (&env.model, &env.graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = match cfg.method {
        Method::FlatQ => Agent::Flat(FlatLearner::new(model, &cfg.learner)?),
        m => {
            let learner = MaxqLearner::new(graph, &cfg.learner, Variant::Q)?;
            let store = learner.new_store(graph, key_mode(m));
            Agent::Maxq(learner, store)
        }
    };
    let (mut episodes, mut checkpoints) = (Vec::new(), Vec::new());
    let (mut steps, mut reward) = (0usize, 0.0);
    let mut error = None;
    for trial in 0..cfg.episodes {
        if cfg.step_budget.is_some_and(|b| steps >= b) {
            break;
        }
        let outcome: Result<Episode, LearnError> = match &mut agent {
            Agent::Flat(l) => flat_q_episode(l, model, &mut rng),
            Agent::Maxq(l, store) => {
                if cfg.method == Method::MaxqGreedy {
                    l.set_interruption(Some(cfg.interrupt.budget(trial)));
                }
                let s0 = model.sample_start(&mut rng);
                maxqq_episode(l, graph, model, store, &mut rng, s0)
            }
        };
        let ep = match outcome {
            Ok(ep) => ep,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        steps += ep.steps;
        reward += ep.total_reward;
        episodes.push(EpisodeRecord {
            primitive_step: steps,
            trial,
            seed,
            cumulative_reward: reward,
            episode_return: ep.total_reward,
        });
        if cfg.eval_every.is_some_and(|k| (trial + 1) % k == 0) {
            // A separate stream keeps evaluation from perturbing training.
            let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let value = evaluate_agent(cfg, env, &agent, &mut eval_rng)?;
            checkpoints.push(Checkpoint { trial, primitive_step: steps, seed, value });
        }
    }
    let learned = match agent {
        Agent::Flat(l) => Learned::Flat(l.q),
        Agent::Maxq(_, store) => Learned::Maxq(store),
    };
    Ok(SeedRun { seed, episodes, checkpoints, learned, error })
}

fn evaluate_agent<R: Rng>(cfg: &ExperimentConfig, env: &Env, agent: &Agent, rng: &mut R) -> Result<Option<f64>, HarnessError> {
    match agent {
        Agent::Flat(l) => evaluate_flat(env, &l.greedy_policy(), cfg.eval_rollouts, cfg.eval_step_cap, rng),
        Agent::Maxq(_, store) => {
            let l = (cfg.method == Method::MaxqGreedy).then_some(1);
            evaluate_store(env, store, l, cfg.eval_rollouts, cfg.eval_step_cap, rng)
        }
    }
}

/// Mean return of `pi` over the start distribution, `rollouts` episodes per
/// start state; `None` if any episode reaches `step_cap`.
pub fn evaluate_flat<R: Rng + ?Sized>(
    env: &Env,
    pi: &PolicyMap,
    rollouts: usize,
    step_cap: usize,
    rng: &mut R,
) -> Result<Option<f64>, HarnessError> {
    let mut total = 0.0;
    for &(s0, p) in env.model.start() {
        for _ in 0..rollouts {
            let t = run_flat_policy(&env.model, pi, s0, rng, step_cap)?;
            if t.truncated {
                return Ok(None);
            }
            total += p * t.total_reward() / rollouts as f64;
        }
    }
    Ok(Some(total))
}

/// As [`evaluate_flat`] for the greedy hierarchical policy of `store`, run
/// purely hierarchically (`l = None`) or with an interruption budget.
pub fn evaluate_store<R: Rng + ?Sized>(
    env: &Env,
    store: &ValueStore,
    l: Option<usize>,
    rollouts: usize,
    step_cap: usize,
    rng: &mut R,
) -> Result<Option<f64>, HarnessError> {
    let (m, g) = (&env.model, &env.graph);
    let mut total = 0.0;
    for &(s0, p) in m.start() {
        for _ in 0..rollouts {
            let t = match l {
                None => run_hierarchical_episode(g, m, &GreedyPolicy(store), s0, rng, step_cap),
                Some(_) => run_hg_episode(g, m, store, s0, rng, l, step_cap),
            };
            match t {
                Ok(t) => total += p * t.total_reward() / rollouts as f64,
                Err(ExecError::StepCap { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(Some(total))
}

/// Centered moving average that keeps the series length. Each window holds
/// `window` points (or the whole series if shorter), reaching `window / 2`
/// back, so an even window leans to the past; near the ends the window is
/// shifted inward instead of shrunk.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let n = series.len();
    let w = window.max(1).min(n.max(1));
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for x in series {
        prefix.push(prefix.last().unwrap() + x);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(w / 2).min(n - w);
            (prefix[lo + w] - prefix[lo]) / w as f64
        })
        .collect()
}
