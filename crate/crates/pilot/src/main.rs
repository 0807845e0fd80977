//! Command-line front end.
//!
//! Usage: `pilot <stage|recipe> [--config PATH] [--seed N] [--key value ...]`
//!
//! The first argument is either a stage (`pretrain_udpo`, `pretrain_her`,
//! `distill`, `transfer_bonus`, `transfer_planner`, `zeroshot`, `eval`,
//! `gradcheck`, `ablation`) or a recipe (`high_dim_action`,
//! `vec_to_lifted_obs`, `zero_shot_maze`). Any `--key value` pair overrides
//! the corresponding config-file key; `PILOT_OUT_DIR` overrides the output
//! root.

use std::path::PathBuf;
use std::process::ExitCode;

use pilot::harness::{self, Stage, RECIPE_NAMES};

struct CliArgs {
    command: String,
    config: Option<PathBuf>,
    overrides: Vec<(String, String)>,
}

fn usage() -> String {
    let stages: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
    format!(
        "usage: pilot <stage|recipe> [--config PATH] [--seed N] [--key value ...]\n\
         stages:  {}\n\
         recipes: {}",
        stages.join(", "),
        RECIPE_NAMES.join(", ")
    )
}

fn parse_args(args: &[String]) -> Result<CliArgs, String> {
    let mut it = args.iter();
    let command = it.next().ok_or_else(usage)?.clone();
    if command == "--help" || command == "-h" {
        return Err(usage());
    }
    let mut config = None;
    let mut overrides = Vec::new();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| format!("expected '--key value', got '{flag}'\n{}", usage()))?;
        let value = it
            .next()
            .ok_or_else(|| format!("flag '--{key}' is missing a value"))?;
        if key == "config" {
            config = Some(PathBuf::from(value));
        } else {
            overrides.push((key.to_string(), value.clone()));
        }
    }
    Ok(CliArgs {
        command,
        config,
        overrides,
    })
}

fn run(cli: &CliArgs) -> pilot::Result<bool> {
    if RECIPE_NAMES.contains(&cli.command.as_str()) {
        let outcomes = harness::run_recipe(&cli.command, cli.config.as_deref(), &cli.overrides)?;
        for o in &outcomes {
            println!("wrote {}", o.csv_path.display());
        }
        Ok(outcomes.iter().all(|o| o.passed))
    } else {
        Stage::parse(&cli.command)?;
        let mut overrides = vec![("stage".to_string(), cli.command.clone())];
        overrides.extend(cli.overrides.iter().cloned());
        let cfg = harness::parse_config(cli.config.as_deref(), &overrides)?;
        let outcome = harness::run(&cfg)?;
        println!("wrote {}", outcome.csv_path.display());
        Ok(outcome.passed)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_args(&args) {
        Ok(cli) => cli,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("pilot: {e}");
            ExitCode::from(2)
        }
    }
}
