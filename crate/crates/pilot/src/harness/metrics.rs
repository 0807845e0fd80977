//! CSV metrics emission, flushed row by row so partial runs stay readable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::udpo::EvalPoint;

pub const CSV_HEADER: &str = "run_id,seed,env,stage,env_steps,eval_success_rate,planner_pred_mse,inverse_dyn_loss,critic_loss,bonus_mean,wallclock_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub seed: u64,
    pub env: String,
    pub stage: String,
    pub env_steps: usize,
    pub eval_success_rate: f64,
    pub planner_pred_mse: Option<f64>,
    pub inverse_dyn_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub bonus_mean: Option<f64>,
    pub wallclock_seconds: f64,
}

impl MetricsRow {
    pub fn from_eval_point(
        run_id: &str,
        seed: u64,
        env: &str,
        stage: &str,
        point: &EvalPoint,
        wallclock_seconds: f64,
    ) -> Self {
        Self {
            run_id: run_id.to_string(),
            seed,
            env: env.to_string(),
            stage: stage.to_string(),
            env_steps: point.env_steps,
            eval_success_rate: point.success_rate,
            planner_pred_mse: point.planner_mse,
            inverse_dyn_loss: point.inverse_loss,
            critic_loss: point.critic_loss,
            bonus_mean: point.bonus_mean,
            wallclock_seconds,
        }
    }

    fn csv_line(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.run_id,
            self.seed,
            self.env,
            self.stage,
            self.env_steps,
            self.eval_success_rate,
            opt(&self.planner_pred_mse),
            opt(&self.inverse_dyn_loss),
            opt(&self.critic_loss),
            opt(&self.bonus_mean),
            self.wallclock_seconds
        )
    }
}

pub struct MetricsWriter {
    path: PathBuf,
    file: BufWriter<File>,
}

impl MetricsWriter {
    /// Create (or truncate) the CSV and write the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{CSV_HEADER}")?;
        file.flush()?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.file, "{}", row.csv_line())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Drop the wallclock column from CSV text, for byte-equality comparisons
/// between reruns.
pub fn strip_wallclock(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(idx) => &line[..idx],
            None => line,
        })
        .map(|l| format!("{l}\n"))
        .collect()
}
