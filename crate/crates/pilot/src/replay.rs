//! Trajectory replay with hindsight goal relabeling.
//!
//! Transitions are stored whole trajectories at a time so the "future"
//! relabeling strategy can always find later steps of the same trajectory.
//! Eviction is oldest-trajectory-first, which keeps every stored trajectory
//! contiguous.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, RngCore};

use crate::envs::GoalSpaceSpec;
use crate::error::{PilotError, Result};

/// One environment step, the unit of replay and relabeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    /// Goal coordinates actually reached: `phi(next_state)`.
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub trajectory_id: u64,
    pub step_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelabelStrategy {
    None,
    Future,
}

impl RelabelStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "future" => Ok(Self::Future),
            other => Err(PilotError::Config(format!(
                "unknown relabel strategy '{other}', expected none|future"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabelSpec {
    pub strategy: RelabelStrategy,
    /// Probability of swapping the desired goal for a future achieved goal.
    pub future_fraction: f64,
}

impl Default for RelabelSpec {
    fn default() -> Self {
        Self {
            strategy: RelabelStrategy::Future,
            future_fraction: 0.8,
        }
    }
}

impl RelabelSpec {
    pub fn none() -> Self {
        Self {
            strategy: RelabelStrategy::None,
            future_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TrajSpan {
    id: u64,
    len: u32,
}

/// Fixed-capacity transition storage with a trajectory index.
pub struct ReplayBuffer {
    capacity: usize,
    goal_spec: GoalSpaceSpec,
    transitions: VecDeque<Transition>,
    spans: VecDeque<TrajSpan>,
    /// Global index of `transitions[0]`; grows monotonically with eviction.
    head_global: u64,
    /// trajectory id -> (global start, length).
    by_id: BTreeMap<u64, (u64, u32)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, goal_spec: GoalSpaceSpec) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self {
            capacity,
            goal_spec,
            transitions: VecDeque::new(),
            spans: VecDeque::new(),
            head_global: 0,
            by_id: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn goal_spec(&self) -> &GoalSpaceSpec {
        &self.goal_spec
    }

    pub fn contains_trajectory(&self, id: u64) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    /// Store a whole trajectory atomically, evicting oldest trajectories if
    /// needed. Steps must be consecutive from zero and share one id.
    pub fn push(&mut self, trajectory: Vec<Transition>) -> Result<()> {
        if trajectory.is_empty() {
            return Err(PilotError::Input("empty trajectory".into()));
        }
        if trajectory.len() > self.capacity {
            return Err(PilotError::Input(format!(
                "trajectory of {} steps exceeds buffer capacity {}",
                trajectory.len(),
                self.capacity
            )));
        }
        let id = trajectory[0].trajectory_id;
        if self.by_id.contains_key(&id) {
            return Err(PilotError::Input(format!("duplicate trajectory id {id}")));
        }
        for (i, t) in trajectory.iter().enumerate() {
            if t.trajectory_id != id || t.step_index as usize != i {
                return Err(PilotError::Input(format!(
                    "non-contiguous trajectory: step {} has (id {}, index {})",
                    i, t.trajectory_id, t.step_index
                )));
            }
        }
        while self.transitions.len() + trajectory.len() > self.capacity {
            self.evict_oldest();
        }
        let start = self.head_global + self.transitions.len() as u64;
        let len = trajectory.len() as u32;
        self.transitions.extend(trajectory);
        self.spans.push_back(TrajSpan { id, len });
        self.by_id.insert(id, (start, len));
        Ok(())
    }

    fn evict_oldest(&mut self) {
        let span = self.spans.pop_front().expect("evict on non-empty buffer");
        for _ in 0..span.len {
            self.transitions.pop_front();
        }
        self.head_global += span.len as u64;
        self.by_id.remove(&span.id);
    }

    /// Uniform sampling with replacement. Under the `future` strategy each
    /// sampled transition independently (with probability `future_fraction`)
    /// has its desired goal replaced by the achieved goal of a uniformly
    /// chosen step at or after it in the same trajectory, and its reward
    /// recomputed as the goal-reaching indicator against the new goal.
    pub fn sample_batch(
        &self,
        batch_size: usize,
        relabel: &RelabelSpec,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Transition>> {
        if self.is_empty() {
            return Err(PilotError::State("sampling from an empty buffer".into()));
        }
        let n = self.transitions.len();
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let idx = rng.gen_range(0..n);
            let mut t = self.transitions[idx].clone();
            if relabel.strategy == RelabelStrategy::Future
                && rng.gen_range(0.0..1.0) < relabel.future_fraction
            {
                let global = self.head_global + idx as u64;
                let (start, len) = self.by_id[&t.trajectory_id];
                let offset_in_traj = (global - start) as u32;
                let future = rng.gen_range(offset_in_traj..len);
                let future_idx = (start + future as u64 - self.head_global) as usize;
                let new_goal = self.transitions[future_idx].achieved_goal.clone();
                t.reward = if self
                    .goal_spec
                    .goal_distance(&t.achieved_goal, &new_goal)
                    <= self.goal_spec.threshold
                {
                    1.0
                } else {
                    0.0
                };
                t.desired_goal = new_goal;
            }
            batch.push(t);
        }
        Ok(batch)
    }

    /// All achieved goals at or after `step_index` in a stored trajectory
    /// (the candidate set for future relabeling). Test support.
    pub fn future_achieved_goals(&self, trajectory_id: u64, step_index: u32) -> Vec<Vec<f64>> {
        let Some(&(start, len)) = self.by_id.get(&trajectory_id) else {
            return Vec::new();
        };
        (step_index..len)
            .map(|o| {
                let idx = (start + o as u64 - self.head_global) as usize;
                self.transitions[idx].achieved_goal.clone()
            })
            .collect()
    }
}

const BUF_MAGIC: &[u8; 9] = b"PILOTBUF1";

impl ReplayBuffer {
    /// Write the buffer to a flat binary snapshot: the magic, little-endian
    /// u32 counts and dims, then one little-endian f64 record per transition.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BUF_MAGIC)?;
        let first = self.transitions.front();
        let state_dim = first.map_or(0, |t| t.state.len()) as u32;
        let action_dim = first.map_or(0, |t| t.action.len()) as u32;
        let goal_dim = self.goal_spec.goal_dim as u32;
        for v in [
            self.transitions.len() as u32,
            state_dim,
            action_dim,
            goal_dim,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.goal_spec.threshold).to_le_bytes())?;
        let put = |w: &mut BufWriter<File>, xs: &[f64]| -> Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        for t in &self.transitions {
            put(&mut w, &t.state)?;
            put(&mut w, &t.action)?;
            put(&mut w, &t.next_state)?;
            put(&mut w, &t.achieved_goal)?;
            put(&mut w, &t.desired_goal)?;
            put(
                &mut w,
                &[
                    t.reward,
                    if t.done { 1.0 } else { 0.0 },
                    t.trajectory_id as f64,
                    t.step_index as f64,
                ],
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a snapshot written by [`ReplayBuffer::save`]. The restored
    /// buffer has capacity equal to its length (or 1 if empty).
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic)?;
        if &magic != BUF_MAGIC {
            return Err(PilotError::Checkpoint(format!(
                "bad buffer magic in {}",
                path.display()
            )));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
            r.read_exact(&mut u32_buf)?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let count = read_u32(&mut r)? as usize;
        let state_dim = read_u32(&mut r)? as usize;
        let action_dim = read_u32(&mut r)? as usize;
        let goal_dim = read_u32(&mut r)? as usize;
        let mut f64_buf = [0u8; 8];
        r.read_exact(&mut f64_buf)?;
        let threshold = f64::from_le_bytes(f64_buf);
        if goal_dim != 2 {
            return Err(PilotError::Checkpoint(format!(
                "unsupported goal dim {goal_dim} in snapshot"
            )));
        }
        let read_vec = |r: &mut BufReader<File>, n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                out.push(f64::from_le_bytes(buf));
            }
            Ok(out)
        };
        let spec = GoalSpaceSpec::position(threshold);
        let mut buffer = ReplayBuffer::new(count.max(1), spec);
        let mut current: Vec<Transition> = Vec::new();
        for _ in 0..count {
            let state = read_vec(&mut r, state_dim)?;
            let action = read_vec(&mut r, action_dim)?;
            let next_state = read_vec(&mut r, state_dim)?;
            let achieved_goal = read_vec(&mut r, goal_dim)?;
            let desired_goal = read_vec(&mut r, goal_dim)?;
            let tail = read_vec(&mut r, 4)?;
            let t = Transition {
                state,
                action,
                next_state,
                achieved_goal,
                desired_goal,
                reward: tail[0],
                done: tail[1] != 0.0,
                trajectory_id: tail[2] as u64,
                step_index: tail[3] as u32,
            };
            if t.step_index == 0 && !current.is_empty() {
                buffer.push(std::mem::take(&mut current))?;
            }
            current.push(t);
        }
        if !current.is_empty() {
            buffer.push(current)?;
        }
        Ok(buffer)
    }
}
