//! Binary checkpoints for trained artifacts.
//!
//! Layout: the magic `PILOTCKPT1`, a little-endian u32 artifact kind, the
//! artifact's dimensions as u32s, then each network as (activation u32,
//! layer count u32, per-layer in/out u32 pairs) followed by its parameters
//! as little-endian f64 (weights row-major, then biases, layer by layer).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{PilotError, Result};
use crate::numerics::{Activation, LinearLayer, MlpParams, Tensor};
use crate::transfer::GoalPlanner;
use crate::udpo::{BaselinePolicy, DecoupledPolicy};

const MAGIC: &[u8; 10] = b"PILOTCKPT1";

const KIND_DECOUPLED: u32 = 1;
const KIND_BASELINE: u32 = 2;
const KIND_GOAL_PLANNER: u32 = 3;

/// Any loadable policy artifact, discriminated by the kind tag.
pub enum PolicyArtifact {
    Decoupled(DecoupledPolicy),
    Baseline(BaselinePolicy),
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_mlp(w: &mut impl Write, net: &MlpParams) -> Result<()> {
    write_u32(
        w,
        match net.activation {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        },
    )?;
    write_u32(w, net.layers.len() as u32)?;
    for layer in &net.layers {
        write_u32(w, layer.in_dim() as u32)?;
        write_u32(w, layer.out_dim() as u32)?;
    }
    for layer in &net.layers {
        for x in layer.weight.data().iter().chain(layer.bias.data()) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_mlp(r: &mut impl Read) -> Result<MlpParams> {
    let activation = match read_u32(r)? {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        other => {
            return Err(PilotError::Checkpoint(format!(
                "unknown activation tag {other}"
            )))
        }
    };
    let n_layers = read_u32(r)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(PilotError::Checkpoint(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_dim = read_u32(r)? as usize;
        let out_dim = read_u32(r)? as usize;
        dims.push((in_dim, out_dim));
    }
    let mut layers = Vec::with_capacity(n_layers);
    let mut buf = [0u8; 8];
    for (in_dim, out_dim) in dims {
        let mut weight = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            r.read_exact(&mut buf)?;
            weight.push(f64::from_le_bytes(buf));
        }
        let mut bias = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            r.read_exact(&mut buf)?;
            bias.push(f64::from_le_bytes(buf));
        }
        layers.push(LinearLayer {
            weight: Tensor::matrix(out_dim, in_dim, weight)
                .map_err(|e| PilotError::Checkpoint(e.to_string()))?,
            bias: Tensor::from_vec(bias),
        });
    }
    Ok(MlpParams { layers, activation })
}

fn open_kind(path: &Path, expect: Option<u32>) -> Result<(BufReader<File>, u32)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 10];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PilotError::Checkpoint(format!(
            "bad checkpoint magic in {}",
            path.display()
        )));
    }
    let kind = read_u32(&mut r)?;
    if let Some(want) = expect {
        if kind != want {
            return Err(PilotError::Checkpoint(format!(
                "{}: artifact kind {kind}, expected {want}",
                path.display()
            )));
        }
    }
    Ok((r, kind))
}

pub fn save_decoupled(path: &Path, policy: &DecoupledPolicy) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, KIND_DECOUPLED)?;
    write_u32(&mut w, policy.state_dim as u32)?;
    write_u32(&mut w, policy.action_dim as u32)?;
    write_u32(&mut w, policy.goal_dim as u32)?;
    write_mlp(&mut w, &policy.planner)?;
    write_mlp(&mut w, &policy.inverse)?;
    w.flush()?;
    Ok(())
}

pub fn load_decoupled(path: &Path) -> Result<DecoupledPolicy> {
    let (mut r, _) = open_kind(path, Some(KIND_DECOUPLED))?;
    let state_dim = read_u32(&mut r)? as usize;
    let action_dim = read_u32(&mut r)? as usize;
    let goal_dim = read_u32(&mut r)? as usize;
    let planner = read_mlp(&mut r)?;
    let inverse = read_mlp(&mut r)?;
    if planner.input_dim() != state_dim + goal_dim || planner.output_dim() != 2 * state_dim {
        return Err(PilotError::Checkpoint(format!(
            "planner network is {}->{}, expected {}->{} for state dim {state_dim} / goal dim {goal_dim}",
            planner.input_dim(),
            planner.output_dim(),
            state_dim + goal_dim,
            2 * state_dim
        )));
    }
    if inverse.input_dim() != 2 * state_dim || inverse.output_dim() != 2 * action_dim {
        return Err(PilotError::Checkpoint(format!(
            "inverse network is {}->{}, expected {}->{} for state dim {state_dim} / action dim {action_dim}",
            inverse.input_dim(),
            inverse.output_dim(),
            2 * state_dim,
            2 * action_dim
        )));
    }
    Ok(DecoupledPolicy {
        planner,
        inverse,
        state_dim,
        action_dim,
        goal_dim,
        inverse_trained_at: None,
    })
}

pub fn save_baseline(path: &Path, policy: &BaselinePolicy) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, KIND_BASELINE)?;
    write_u32(&mut w, policy.state_dim as u32)?;
    write_u32(&mut w, policy.action_dim as u32)?;
    write_u32(&mut w, policy.goal_dim as u32)?;
    write_mlp(&mut w, &policy.actor)?;
    w.flush()?;
    Ok(())
}

pub fn load_baseline(path: &Path) -> Result<BaselinePolicy> {
    let (mut r, _) = open_kind(path, Some(KIND_BASELINE))?;
    let state_dim = read_u32(&mut r)? as usize;
    let action_dim = read_u32(&mut r)? as usize;
    let goal_dim = read_u32(&mut r)? as usize;
    let actor = read_mlp(&mut r)?;
    if actor.input_dim() != state_dim + goal_dim || actor.output_dim() != 2 * action_dim {
        return Err(PilotError::Checkpoint(format!(
            "actor network is {}->{}, expected {}->{} for state dim {state_dim} / action dim {action_dim}",
            actor.input_dim(),
            actor.output_dim(),
            state_dim + goal_dim,
            2 * action_dim
        )));
    }
    Ok(BaselinePolicy {
        actor,
        state_dim,
        action_dim,
        goal_dim,
    })
}

pub fn save_goal_planner(path: &Path, planner: &GoalPlanner) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, KIND_GOAL_PLANNER)?;
    write_u32(&mut w, planner.goal_dim as u32)?;
    write_mlp(&mut w, &planner.net)?;
    w.flush()?;
    Ok(())
}

pub fn load_goal_planner(path: &Path) -> Result<GoalPlanner> {
    let (mut r, _) = open_kind(path, Some(KIND_GOAL_PLANNER))?;
    let goal_dim = read_u32(&mut r)? as usize;
    let net = read_mlp(&mut r)?;
    if net.input_dim() != 2 * goal_dim || net.output_dim() != 2 * goal_dim {
        return Err(PilotError::Checkpoint(format!(
            "goal planner network is {}->{}, expected {}->{} for goal dim {goal_dim}",
            net.input_dim(),
            net.output_dim(),
            2 * goal_dim,
            2 * goal_dim
        )));
    }
    Ok(GoalPlanner { net, goal_dim })
}

/// Load either policy kind, dispatching on the artifact tag.
pub fn load_policy(path: &Path) -> Result<PolicyArtifact> {
    let (_, kind) = open_kind(path, None)?;
    match kind {
        KIND_DECOUPLED => Ok(PolicyArtifact::Decoupled(load_decoupled(path)?)),
        KIND_BASELINE => Ok(PolicyArtifact::Baseline(load_baseline(path)?)),
        other => Err(PilotError::Checkpoint(format!(
            "{}: kind {other} is not a policy artifact",
            path.display()
        ))),
    }
}
