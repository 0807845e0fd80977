//! Experiment configuration: a small `[section]` / `key = value` file format
//! with CLI overrides layered on top and per-environment defaults filled in
//! for anything omitted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::envs::EnvKind;
use crate::error::{PilotError, Result};
use crate::replay::{RelabelSpec, RelabelStrategy};
use crate::udpo::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    PretrainUdpo,
    PretrainHer,
    Distill,
    TransferBonus,
    TransferPlanner,
    Zeroshot,
    Eval,
    Gradcheck,
    Ablation,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::PretrainUdpo,
        Stage::PretrainHer,
        Stage::Distill,
        Stage::TransferBonus,
        Stage::TransferPlanner,
        Stage::Zeroshot,
        Stage::Eval,
        Stage::Gradcheck,
        Stage::Ablation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::PretrainUdpo => "pretrain_udpo",
            Stage::PretrainHer => "pretrain_her",
            Stage::Distill => "distill",
            Stage::TransferBonus => "transfer_bonus",
            Stage::TransferPlanner => "transfer_planner",
            Stage::Zeroshot => "zeroshot",
            Stage::Eval => "eval",
            Stage::Gradcheck => "gradcheck",
            Stage::Ablation => "ablation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                PilotError::Config(format!(
                    "unknown stage '{s}', expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully resolved description of one experiment invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub stage: Stage,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,

    pub gamma: f64,
    pub lambda: f64,
    pub delta: u64,
    pub beta: f64,
    pub beta_grid: Vec<f64>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub q_lr: f64,
    pub pi_lr: f64,
    pub i_lr: f64,
    pub total_env_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub updates_per_episode: usize,
    pub exploration_noise: f64,
    pub future_fraction: f64,
    pub relabel_strategy: RelabelStrategy,
    pub replan_every: usize,
    pub distill_steps: usize,
    pub distill_lr: f64,

    pub policy_ckpt: Option<PathBuf>,
    pub goal_planner_ckpt: Option<PathBuf>,
    pub controller_ckpt: Option<PathBuf>,
    pub buffer_path: Option<PathBuf>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "env",
    "stage",
    "seeds",
    "seed",
    "out_dir",
    "gamma",
    "lambda",
    "delta",
    "beta",
    "beta_grid",
    "buffer_capacity",
    "batch_size",
    "q_lr",
    "pi_lr",
    "i_lr",
    "total_env_steps",
    "eval_interval",
    "eval_episodes",
    "updates_per_episode",
    "exploration_noise",
    "future_fraction",
    "relabel_strategy",
    "replan_every",
    "distill_steps",
    "distill_lr",
    "policy_ckpt",
    "goal_planner_ckpt",
    "controller_ckpt",
    "buffer_path",
];

/// Defaults for a given environment and stage before any file or CLI value
/// is applied.
pub fn defaults_for(env: EnvKind, stage: Stage) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        env,
        stage,
        seeds: vec![0],
        out_dir: PathBuf::from("pilot_out"),
        gamma: 0.99,
        lambda: 1e-2,
        delta: 1500,
        beta: 1.0,
        beta_grid: vec![0.1, 1.0, 5.0],
        buffer_capacity: 100_000,
        batch_size: 128,
        q_lr: 3e-4,
        pi_lr: 3e-4,
        i_lr: 1e-4,
        total_env_steps: 200_000,
        eval_interval: 5_000,
        eval_episodes: 50,
        updates_per_episode: 10,
        exploration_noise: 0.2,
        future_fraction: 0.8,
        relabel_strategy: RelabelStrategy::Future,
        replan_every: 1,
        distill_steps: 6_000,
        distill_lr: 1e-3,
        policy_ckpt: None,
        goal_planner_ckpt: None,
        controller_ckpt: None,
        buffer_path: None,
    };
    match env {
        EnvKind::Maze2d | EnvKind::Maze2dLiftedObs => {
            cfg.lambda = 1e-1;
            cfg.buffer_capacity = 100_000;
            cfg.batch_size = 128;
            cfg.total_env_steps = 200_000;
        }
        EnvKind::PointMass | EnvKind::PointMassLiftedAction | EnvKind::PointMassLiftedObs => {
            cfg.lambda = 5e-3;
            cfg.buffer_capacity = 1_000_000;
            cfg.batch_size = 256;
            cfg.total_env_steps = 150_000;
        }
    }
    match stage {
        Stage::TransferPlanner => {
            // Only the inverse dynamics learns here; refit it often.
            cfg.delta = 200;
        }
        Stage::Zeroshot => {
            cfg.eval_episodes = 100;
        }
        _ => {}
    }
    cfg
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| PilotError::Config(format!("key '{key}': '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| PilotError::Config(format!("key '{key}': '{v}' is not a non-negative integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| PilotError::Config(format!("key '{key}': '{v}' is not a non-negative integer")))
}

/// Read a config file into ordered key/value pairs. Sections group keys
/// visually; keys are validated globally.
fn read_file_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(PilotError::Config(format!(
                    "{}:{}: malformed section header '{line}'",
                    path.display(),
                    lineno + 1
                )));
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(PilotError::Config(format!(
                "{}:{}: expected 'key = value', got '{line}'",
                path.display(),
                lineno + 1
            )));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parse a config file (optional) and CLI overrides into a validated
/// configuration. Later values win: defaults, then file, then overrides;
/// the `PILOT_OUT_DIR` environment variable overrides the file's `out_dir`
/// but not an explicit CLI `out_dir`.
pub fn parse_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(p) = path {
        pairs.extend(read_file_pairs(p)?);
    }
    if let Ok(dir) = std::env::var("PILOT_OUT_DIR") {
        if !dir.is_empty() {
            pairs.push(("out_dir".into(), dir));
        }
    }
    pairs.extend(overrides.iter().cloned());

    for (k, _) in &pairs {
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(PilotError::Config(format!("unknown key '{k}'")));
        }
    }

    // env and stage decide the defaults, so resolve them first.
    let mut merged: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in &pairs {
        merged.insert(k.as_str(), v.as_str());
    }
    let env = EnvKind::parse(
        merged
            .get("env")
            .ok_or_else(|| PilotError::Config("missing required key 'env'".into()))?,
    )?;
    let stage = Stage::parse(
        merged
            .get("stage")
            .ok_or_else(|| PilotError::Config("missing required key 'stage'".into()))?,
    )?;
    let mut cfg = defaults_for(env, stage);

    for (key, value) in &pairs {
        apply_key(&mut cfg, key, value)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "env" | "stage" => {} // consumed during default resolution
        "seeds" => {
            let mut seeds = Vec::new();
            for part in value.split(',') {
                seeds.push(parse_u64("seeds", part.trim())?);
            }
            if seeds.is_empty() {
                return Err(PilotError::Config("key 'seeds': empty list".into()));
            }
            cfg.seeds = seeds;
        }
        "seed" => cfg.seeds = vec![parse_u64("seed", value)?],
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        "gamma" => cfg.gamma = parse_f64(key, value)?,
        "lambda" => cfg.lambda = parse_f64(key, value)?,
        "delta" => cfg.delta = parse_u64(key, value)?,
        "beta" => cfg.beta = parse_f64(key, value)?,
        "beta_grid" => {
            let mut grid = Vec::new();
            for part in value.split(',') {
                grid.push(parse_f64("beta_grid", part.trim())?);
            }
            cfg.beta_grid = grid;
        }
        "buffer_capacity" => cfg.buffer_capacity = parse_usize(key, value)?,
        "batch_size" => cfg.batch_size = parse_usize(key, value)?,
        "q_lr" => cfg.q_lr = parse_f64(key, value)?,
        "pi_lr" => cfg.pi_lr = parse_f64(key, value)?,
        "i_lr" => cfg.i_lr = parse_f64(key, value)?,
        "total_env_steps" => cfg.total_env_steps = parse_usize(key, value)?,
        "eval_interval" => cfg.eval_interval = parse_usize(key, value)?,
        "eval_episodes" => cfg.eval_episodes = parse_usize(key, value)?,
        "updates_per_episode" => cfg.updates_per_episode = parse_usize(key, value)?,
        "exploration_noise" => cfg.exploration_noise = parse_f64(key, value)?,
        "future_fraction" => cfg.future_fraction = parse_f64(key, value)?,
        "relabel_strategy" => cfg.relabel_strategy = RelabelStrategy::parse(value)?,
        "replan_every" => cfg.replan_every = parse_usize(key, value)?,
        "distill_steps" => cfg.distill_steps = parse_usize(key, value)?,
        "distill_lr" => cfg.distill_lr = parse_f64(key, value)?,
        // Empty path values mean "not set" so snapshots re-parse cleanly.
        "policy_ckpt" => cfg.policy_ckpt = non_empty_path(value),
        "goal_planner_ckpt" => cfg.goal_planner_ckpt = non_empty_path(value),
        "controller_ckpt" => cfg.controller_ckpt = non_empty_path(value),
        "buffer_path" => cfg.buffer_path = non_empty_path(value),
        other => return Err(PilotError::Config(format!("unknown key '{other}'"))),
    }
    Ok(())
}

fn non_empty_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn range_err(key: &str, got: impl std::fmt::Display, range: &str) -> PilotError {
    PilotError::Config(format!("key '{key}': value {got} outside valid range {range}"))
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(range_err("gamma", cfg.gamma, "(0, 1)"));
    }
    if cfg.lambda < 0.0 {
        return Err(range_err("lambda", cfg.lambda, "[0, inf)"));
    }
    if cfg.delta < 1 {
        return Err(range_err("delta", cfg.delta, "[1, inf)"));
    }
    if cfg.beta < 0.0 {
        return Err(range_err("beta", cfg.beta, "[0, inf)"));
    }
    for b in &cfg.beta_grid {
        if *b < 0.0 {
            return Err(range_err("beta_grid", b, "[0, inf)"));
        }
    }
    if !(0.0..=1.0).contains(&cfg.future_fraction) {
        return Err(range_err("future_fraction", cfg.future_fraction, "[0, 1]"));
    }
    if cfg.batch_size == 0 {
        return Err(range_err("batch_size", cfg.batch_size, "[1, inf)"));
    }
    if cfg.buffer_capacity == 0 {
        return Err(range_err("buffer_capacity", cfg.buffer_capacity, "[1, inf)"));
    }
    for (key, lr) in [("q_lr", cfg.q_lr), ("pi_lr", cfg.pi_lr), ("i_lr", cfg.i_lr), ("distill_lr", cfg.distill_lr)] {
        if lr <= 0.0 {
            return Err(range_err(key, lr, "(0, inf)"));
        }
    }
    if cfg.total_env_steps == 0 {
        return Err(range_err("total_env_steps", cfg.total_env_steps, "[1, inf)"));
    }
    if cfg.eval_interval == 0 {
        return Err(range_err("eval_interval", cfg.eval_interval, "[1, inf)"));
    }
    if cfg.eval_episodes == 0 {
        return Err(range_err("eval_episodes", cfg.eval_episodes, "[1, inf)"));
    }
    if cfg.updates_per_episode == 0 {
        return Err(range_err("updates_per_episode", cfg.updates_per_episode, "[1, inf)"));
    }
    if cfg.exploration_noise < 0.0 {
        return Err(range_err("exploration_noise", cfg.exploration_noise, "[0, inf)"));
    }
    if cfg.replan_every == 0 {
        return Err(range_err("replan_every", cfg.replan_every, "[1, inf)"));
    }
    if cfg.seeds.is_empty() {
        return Err(PilotError::Config("key 'seeds': empty list".into()));
    }

    let need = |key: &str, present: bool| -> Result<()> {
        if present {
            Ok(())
        } else {
            Err(PilotError::Config(format!(
                "stage '{}' requires key '{key}'",
                cfg.stage
            )))
        }
    };
    match cfg.stage {
        Stage::Distill => {
            need("policy_ckpt", cfg.policy_ckpt.is_some())?;
            need("buffer_path", cfg.buffer_path.is_some())?;
        }
        Stage::TransferBonus => need("goal_planner_ckpt", cfg.goal_planner_ckpt.is_some())?,
        Stage::TransferPlanner => need("policy_ckpt", cfg.policy_ckpt.is_some())?,
        Stage::Zeroshot => {
            need("goal_planner_ckpt", cfg.goal_planner_ckpt.is_some())?;
            need("controller_ckpt", cfg.controller_ckpt.is_some())?;
        }
        Stage::Eval => need("policy_ckpt", cfg.policy_ckpt.is_some())?,
        _ => {}
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn relabel_spec(&self) -> RelabelSpec {
        RelabelSpec {
            strategy: self.relabel_strategy,
            future_fraction: self.future_fraction,
        }
    }

    /// The training-loop slice of this configuration.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            lambda: self.lambda,
            delta: self.delta,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            q_lr: self.q_lr,
            pi_lr: self.pi_lr,
            i_lr: self.i_lr,
            total_env_steps: self.total_env_steps,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            updates_per_episode: self.updates_per_episode,
            exploration_noise: self.exploration_noise,
            relabel: self.relabel_spec(),
            ..TrainConfig::default()
        }
    }

    /// Deterministic key=value snapshot of the resolved configuration.
    pub fn snapshot(&self) -> String {
        let path_str = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let grid: Vec<String> = self.beta_grid.iter().map(f64::to_string).collect();
        let strategy = match self.relabel_strategy {
            RelabelStrategy::None => "none",
            RelabelStrategy::Future => "future",
        };
        format!(
            "[experiment]\n\
             env = {}\n\
             stage = {}\n\
             seeds = {}\n\
             out_dir = {}\n\
             \n[training]\n\
             gamma = {}\n\
             lambda = {}\n\
             delta = {}\n\
             beta = {}\n\
             beta_grid = {}\n\
             buffer_capacity = {}\n\
             batch_size = {}\n\
             q_lr = {}\n\
             pi_lr = {}\n\
             i_lr = {}\n\
             total_env_steps = {}\n\
             eval_interval = {}\n\
             eval_episodes = {}\n\
             updates_per_episode = {}\n\
             exploration_noise = {}\n\
             future_fraction = {}\n\
             relabel_strategy = {}\n\
             replan_every = {}\n\
             distill_steps = {}\n\
             distill_lr = {}\n\
             \n[paths]\n\
             policy_ckpt = {}\n\
             goal_planner_ckpt = {}\n\
             controller_ckpt = {}\n\
             buffer_path = {}\n",
            self.env,
            self.stage,
            seeds.join(","),
            self.out_dir.display(),
            self.gamma,
            self.lambda,
            self.delta,
            self.beta,
            grid.join(","),
            self.buffer_capacity,
            self.batch_size,
            self.q_lr,
            self.pi_lr,
            self.i_lr,
            self.total_env_steps,
            self.eval_interval,
            self.eval_episodes,
            self.updates_per_episode,
            self.exploration_noise,
            self.future_fraction,
            strategy,
            self.replan_every,
            self.distill_steps,
            self.distill_lr,
            path_str(&self.policy_ckpt),
            path_str(&self.goal_planner_ckpt),
            path_str(&self.controller_ckpt),
            path_str(&self.buffer_path),
        )
    }
}
