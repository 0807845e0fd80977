//! Stage dispatch and the three challenge recipes.
//!
//! A run executes one stage for every configured seed, writing one CSV of
//! metrics, a config snapshot, and the stage's artifacts into
//! `out_dir/<stage>_<env>/`. Input artifact paths may contain the literal
//! `{seed}`, which is substituted per seed so multi-seed pipelines wire up
//! without repetition.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::envs::{Env, EnvKind, MazeLayout};
use crate::error::{PilotError, Result};
use crate::harness::checkpoint::{
    load_baseline, load_decoupled, load_goal_planner, load_policy, save_baseline, save_decoupled,
    save_goal_planner, PolicyArtifact,
};
use crate::harness::config::{parse_config, ExperimentConfig, Stage};
use crate::harness::gradcheck::run_gradient_suite;
use crate::harness::metrics::{MetricsRow, MetricsWriter};
use crate::replay::ReplayBuffer;
use crate::transfer::{
    distill_goal_planner, transfer_state_planner, wrap_env_with_bonus, zero_shot_rollout,
    BonusConfig, LandmarkExecutor,
};
use crate::udpo::{evaluate, her_train, udpo_train, EvalPoint};

pub struct StageOutcome {
    pub run_dir: PathBuf,
    pub csv_path: PathBuf,
    /// False when a verification stage (gradcheck) found violations.
    pub passed: bool,
}

/// Replace the literal `{seed}` in a configured path.
pub fn subst_seed(path: &Path, seed: u64) -> PathBuf {
    PathBuf::from(
        path.to_string_lossy()
            .replace("{seed}", &seed.to_string()),
    )
}

fn required_path(
    cfg: &ExperimentConfig,
    field: &Option<PathBuf>,
    key: &str,
    seed: u64,
) -> Result<PathBuf> {
    field
        .as_ref()
        .map(|p| subst_seed(p, seed))
        .ok_or_else(|| {
            PilotError::Config(format!("stage '{}' requires key '{key}'", cfg.stage))
        })
}

/// The desired goal used for zero-shot episodes: the canonical cross-wall
/// cell on maze layouts, the environment's own distribution elsewhere.
pub fn zeroshot_goal(env: EnvKind) -> Option<Vec<f64>> {
    match env {
        EnvKind::Maze2d | EnvKind::Maze2dLiftedObs => {
            Some(MazeLayout::default().canonical_goal.to_vec())
        }
        _ => None,
    }
}

struct RunContext {
    writer: MetricsWriter,
    started: Instant,
    env_name: String,
    stage_name: String,
}

impl RunContext {
    fn emit(&mut self, run_id: &str, seed: u64, points: &[EvalPoint]) -> Result<()> {
        for p in points {
            let row = MetricsRow::from_eval_point(
                run_id,
                seed,
                &self.env_name,
                &self.stage_name,
                p,
                self.started.elapsed().as_secs_f64(),
            );
            self.writer.write_row(&row)?;
        }
        Ok(())
    }
}

/// Execute one stage for every configured seed.
pub fn run(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let run_dir = cfg.out_dir.join(format!("{}_{}", cfg.stage, cfg.env));
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("config.snapshot.cfg"), cfg.snapshot())?;
    let csv_path = run_dir.join("metrics.csv");
    let mut ctx = RunContext {
        writer: MetricsWriter::create(&csv_path)?,
        started: Instant::now(),
        env_name: cfg.env.name().to_string(),
        stage_name: cfg.stage.name().to_string(),
    };
    let mut passed = true;

    match cfg.stage {
        Stage::Gradcheck => {
            let report = run_gradient_suite(32)?;
            print!("{}", report.render());
            std::fs::write(run_dir.join("gradcheck_report.txt"), report.render())?;
            passed = report.passed();
        }
        _ => {
            for &seed in &cfg.seeds {
                run_seed(cfg, seed, &run_dir, &mut ctx)?;
            }
        }
    }

    Ok(StageOutcome {
        run_dir,
        csv_path,
        passed,
    })
}

fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    run_dir: &Path,
    ctx: &mut RunContext,
) -> Result<()> {
    let train_cfg = cfg.train_config();
    let run_id = format!("{}_{}_seed{seed}", cfg.stage, cfg.env);
    match cfg.stage {
        Stage::PretrainUdpo => {
            let mut env = cfg.env.build();
            let out = udpo_train(env.as_mut(), &train_cfg, seed, &mut |p| {
                ctx.emit(&run_id, seed, std::slice::from_ref(p))
            })?;
            save_decoupled(&run_dir.join(format!("policy_seed{seed}.ckpt")), &out.policy)?;
            out.buffer
                .save(&run_dir.join(format!("buffer_seed{seed}.bin")))?;
        }
        Stage::PretrainHer => {
            let mut env = cfg.env.build();
            let out = her_train(env.as_mut(), &train_cfg, seed, &mut |p| {
                ctx.emit(&run_id, seed, std::slice::from_ref(p))
            })?;
            save_baseline(&run_dir.join(format!("policy_seed{seed}.ckpt")), &out.policy)?;
        }
        Stage::Distill => {
            let policy_path = required_path(cfg, &cfg.policy_ckpt, "policy_ckpt", seed)?;
            let buffer_path = required_path(cfg, &cfg.buffer_path, "buffer_path", seed)?;
            let teacher = load_decoupled(&policy_path)?;
            let buffer = ReplayBuffer::load(&buffer_path)?;
            let env = cfg.env.build();
            let goal_spec = env.goal_spec().clone();
            let goal_norm = env.io_norm().goal;
            let mut sampler =
                |rng: &mut dyn rand::RngCore| -> Vec<f64> { env.sample_goal(rng) };
            let (planner, report) = distill_goal_planner(
                &teacher,
                &buffer,
                &goal_spec,
                &goal_norm,
                &mut sampler,
                cfg.distill_steps,
                cfg.batch_size,
                cfg.distill_lr,
                seed,
            )?;
            save_goal_planner(
                &run_dir.join(format!("goal_planner_seed{seed}.ckpt")),
                &planner,
            )?;
            ctx.emit(
                &run_id,
                seed,
                &[EvalPoint {
                    env_steps: 0,
                    success_rate: 0.0,
                    planner_mse: Some(report.heldout_mean_err),
                    inverse_loss: Some(report.heldout_nll),
                    critic_loss: None,
                    bonus_mean: None,
                }],
            )?;
        }
        Stage::TransferBonus => {
            let planner_path =
                required_path(cfg, &cfg.goal_planner_ckpt, "goal_planner_ckpt", seed)?;
            let planner = load_goal_planner(&planner_path)?;
            let mut env: Box<dyn Env> = Box::new(wrap_env_with_bonus(
                cfg.env.build(),
                planner,
                BonusConfig { beta: cfg.beta },
            )?);
            let run_id = format!("{}_{}_beta{}_seed{seed}", cfg.stage, cfg.env, cfg.beta);
            let out = her_train(env.as_mut(), &train_cfg, seed, &mut |p| {
                ctx.emit(&run_id, seed, std::slice::from_ref(p))
            })?;
            save_baseline(&run_dir.join(format!("policy_seed{seed}.ckpt")), &out.policy)?;
        }
        Stage::TransferPlanner => {
            let policy_path = required_path(cfg, &cfg.policy_ckpt, "policy_ckpt", seed)?;
            let source = load_decoupled(&policy_path)?;
            let mut env = cfg.env.build();
            let out = transfer_state_planner(&source, env.as_mut(), &train_cfg, seed, &mut |p| {
                ctx.emit(&run_id, seed, std::slice::from_ref(p))
            })?;
            save_decoupled(&run_dir.join(format!("policy_seed{seed}.ckpt")), &out.policy)?;
        }
        Stage::Zeroshot => {
            let planner_path =
                required_path(cfg, &cfg.goal_planner_ckpt, "goal_planner_ckpt", seed)?;
            let controller_path =
                required_path(cfg, &cfg.controller_ckpt, "controller_ckpt", seed)?;
            let planner = load_goal_planner(&planner_path)?;
            let controller = load_baseline(&controller_path)?;
            let mut env = cfg.env.build();
            if controller.state_dim != env.obs_dim() {
                return Err(PilotError::Checkpoint(format!(
                    "controller expects obs dim {}, env provides {}",
                    controller.state_dim,
                    env.obs_dim()
                )));
            }
            let exec = LandmarkExecutor {
                goal_planner: &planner,
                controller: &controller,
                replan_every: cfg.replan_every,
            };
            let fixed_goal = zeroshot_goal(cfg.env);
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x2E20_5307);
            let mut successes = 0usize;
            for _ in 0..cfg.eval_episodes {
                let goal = fixed_goal
                    .clone()
                    .unwrap_or_else(|| env.sample_goal(&mut rng));
                let (_, success) = zero_shot_rollout(&exec, env.as_mut(), &mut rng, &goal)?;
                successes += success as usize;
            }
            ctx.emit(
                &run_id,
                seed,
                &[EvalPoint {
                    env_steps: 0,
                    success_rate: successes as f64 / cfg.eval_episodes as f64,
                    planner_mse: None,
                    inverse_loss: None,
                    critic_loss: None,
                    bonus_mean: None,
                }],
            )?;
        }
        Stage::Eval => {
            let policy_path = required_path(cfg, &cfg.policy_ckpt, "policy_ckpt", seed)?;
            let artifact = load_policy(&policy_path)?;
            let mut env = cfg.env.build();
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5EED_0EA1u64);
            let out = match &artifact {
                PolicyArtifact::Decoupled(p) => {
                    check_policy_dims(p.state_dim, p.goal_dim, env.as_ref())?;
                    evaluate(p, env.as_mut(), cfg.eval_episodes, Some(p), &mut rng)?
                }
                PolicyArtifact::Baseline(p) => {
                    check_policy_dims(p.state_dim, p.goal_dim, env.as_ref())?;
                    evaluate(p, env.as_mut(), cfg.eval_episodes, None, &mut rng)?
                }
            };
            ctx.emit(
                &run_id,
                seed,
                &[EvalPoint {
                    env_steps: 0,
                    success_rate: out.success_rate,
                    planner_mse: out.planner_mse,
                    inverse_loss: None,
                    critic_loss: None,
                    bonus_mean: None,
                }],
            )?;
        }
        Stage::Ablation => {
            let planner_path =
                required_path(cfg, &cfg.goal_planner_ckpt, "goal_planner_ckpt", seed)?;
            for &beta in &cfg.beta_grid {
                let planner = load_goal_planner(&planner_path)?;
                let mut env: Box<dyn Env> = Box::new(wrap_env_with_bonus(
                    cfg.env.build(),
                    planner,
                    BonusConfig { beta },
                )?);
                let run_id = format!("ablation_{}_beta{beta}_seed{seed}", cfg.env);
                her_train(env.as_mut(), &train_cfg, seed, &mut |p| {
                    ctx.emit(&run_id, seed, std::slice::from_ref(p))
                })?;
            }
        }
        Stage::Gradcheck => unreachable!("handled before seed dispatch"),
    }
    Ok(())
}

fn check_policy_dims(state_dim: usize, goal_dim: usize, env: &dyn Env) -> Result<()> {
    if state_dim != env.obs_dim() || goal_dim != env.goal_spec().goal_dim {
        return Err(PilotError::Checkpoint(format!(
            "checkpoint dims (state {state_dim}, goal {goal_dim}) vs env (state {}, goal {})",
            env.obs_dim(),
            env.goal_spec().goal_dim
        )));
    }
    Ok(())
}

/// One step of a challenge recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecipeStep {
    pub stage: Stage,
    pub env: EnvKind,
}

pub const RECIPE_NAMES: [&str; 3] = ["high_dim_action", "vec_to_lifted_obs", "zero_shot_maze"];

/// The ordered stage list for a named transfer challenge.
pub fn challenge_recipe(name: &str) -> Result<Vec<RecipeStep>> {
    let step = |stage, env| RecipeStep { stage, env };
    match name {
        "high_dim_action" => Ok(vec![
            step(Stage::PretrainUdpo, EnvKind::PointMass),
            step(Stage::TransferPlanner, EnvKind::PointMassLiftedAction),
            step(Stage::PretrainHer, EnvKind::PointMassLiftedAction),
        ]),
        "vec_to_lifted_obs" => Ok(vec![
            step(Stage::PretrainUdpo, EnvKind::PointMass),
            step(Stage::Distill, EnvKind::PointMass),
            step(Stage::TransferBonus, EnvKind::PointMassLiftedObs),
            step(Stage::PretrainHer, EnvKind::PointMassLiftedObs),
        ]),
        "zero_shot_maze" => Ok(vec![
            step(Stage::PretrainUdpo, EnvKind::Maze2d),
            step(Stage::Distill, EnvKind::Maze2d),
            step(Stage::PretrainHer, EnvKind::PointMass),
            step(Stage::Zeroshot, EnvKind::Maze2d),
        ]),
        other => Err(PilotError::Config(format!(
            "unknown recipe '{other}', expected one of: {}",
            RECIPE_NAMES.join(", ")
        ))),
    }
}

/// Run a recipe end to end, wiring each step's artifacts into the next.
/// `config_path` and `overrides` apply to every step (after the step's own
/// env/stage defaults).
pub fn run_recipe(
    name: &str,
    config_path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<Vec<StageOutcome>> {
    let steps = challenge_recipe(name)?;
    let mut outcomes = Vec::new();
    let mut last_udpo_dir: Option<PathBuf> = None;
    let mut last_distill_dir: Option<PathBuf> = None;
    let mut last_her_dir: Option<PathBuf> = None;

    for step in steps {
        let mut step_overrides: Vec<(String, String)> = vec![
            ("env".into(), step.env.name().into()),
            ("stage".into(), step.stage.name().into()),
        ];
        match step.stage {
            Stage::Distill => {
                let dir = last_udpo_dir.as_ref().ok_or_else(|| {
                    PilotError::Config("recipe wiring: distill before pretrain_udpo".into())
                })?;
                step_overrides.push((
                    "policy_ckpt".into(),
                    dir.join("policy_seed{seed}.ckpt").display().to_string(),
                ));
                step_overrides.push((
                    "buffer_path".into(),
                    dir.join("buffer_seed{seed}.bin").display().to_string(),
                ));
            }
            Stage::TransferPlanner => {
                let dir = last_udpo_dir.as_ref().ok_or_else(|| {
                    PilotError::Config("recipe wiring: transfer before pretrain_udpo".into())
                })?;
                step_overrides.push((
                    "policy_ckpt".into(),
                    dir.join("policy_seed{seed}.ckpt").display().to_string(),
                ));
            }
            Stage::TransferBonus => {
                let dir = last_distill_dir.as_ref().ok_or_else(|| {
                    PilotError::Config("recipe wiring: transfer_bonus before distill".into())
                })?;
                step_overrides.push((
                    "goal_planner_ckpt".into(),
                    dir.join("goal_planner_seed{seed}.ckpt")
                        .display()
                        .to_string(),
                ));
            }
            Stage::Zeroshot => {
                let distill_dir = last_distill_dir.as_ref().ok_or_else(|| {
                    PilotError::Config("recipe wiring: zeroshot before distill".into())
                })?;
                let her_dir = last_her_dir.as_ref().ok_or_else(|| {
                    PilotError::Config("recipe wiring: zeroshot before pretrain_her".into())
                })?;
                step_overrides.push((
                    "goal_planner_ckpt".into(),
                    distill_dir
                        .join("goal_planner_seed{seed}.ckpt")
                        .display()
                        .to_string(),
                ));
                step_overrides.push((
                    "controller_ckpt".into(),
                    her_dir.join("policy_seed{seed}.ckpt").display().to_string(),
                ));
            }
            _ => {}
        }
        // User-provided overrides win over the wiring.
        step_overrides.extend(overrides.iter().cloned());
        let cfg = parse_config(config_path, &step_overrides)?;
        let outcome = run(&cfg)?;
        match step.stage {
            Stage::PretrainUdpo => last_udpo_dir = Some(outcome.run_dir.clone()),
            Stage::Distill => last_distill_dir = Some(outcome.run_dir.clone()),
            Stage::PretrainHer => last_her_dir = Some(outcome.run_dir.clone()),
            _ => {}
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}
