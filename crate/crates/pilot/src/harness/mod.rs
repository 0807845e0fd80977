//! Experiment harness: configuration, stages and recipes, metrics, binary
//! checkpoints, and the gradient-check suite.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod metrics;
pub mod stages;

pub use checkpoint::{
    load_baseline, load_decoupled, load_goal_planner, load_policy, save_baseline, save_decoupled,
    save_goal_planner, PolicyArtifact,
};
pub use config::{defaults_for, parse_config, ExperimentConfig, Stage, CONFIG_KEYS};
pub use gradcheck::{run_gradient_suite, GradcheckReport, GRADCHECK_TOLERANCE};
pub use metrics::{strip_wallclock, MetricsRow, MetricsWriter, CSV_HEADER};
pub use stages::{
    challenge_recipe, run, run_recipe, subst_seed, zeroshot_goal, RecipeStep, StageOutcome,
    RECIPE_NAMES,
};
