//! Shared kinematics: the double-integrator point mass and axis-aligned
//! rectangle collision used by the maze.

use rand::Rng;

/// Physical state of a point agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub step_count: u32,
}

impl EnvState {
    pub fn at_rest(position: [f64; 2]) -> Self {
        Self {
            position,
            velocity: [0.0, 0.0],
            step_count: 0,
        }
    }

    /// Observation vector `[px, py, vx, vy]`.
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.position[0],
            self.position[1],
            self.velocity[0],
            self.velocity[1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub const fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    /// Boundary counts as inside; used for movement blocking so agents can
    /// never sit on the wall.
    pub fn contains_closed(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    /// Strict interior; used by the impermeability checks.
    pub fn contains_open(&self, p: [f64; 2]) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    pub fn sample_uniform(&self, rng: &mut dyn rand::RngCore) -> [f64; 2] {
        [
            rng.gen_range(self.min[0]..self.max[0]),
            rng.gen_range(self.min[1]..self.max[1]),
        ]
    }

    /// Does the open segment `a -> b` pass through the rectangle interior?
    /// Standard slab clipping of the parametric segment.
    pub fn segment_crosses_interior(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for axis in 0..2 {
            let d = b[axis] - a[axis];
            if d.abs() < 1e-300 {
                if a[axis] <= self.min[axis] || a[axis] >= self.max[axis] {
                    return false;
                }
            } else {
                let mut lo = (self.min[axis] - a[axis]) / d;
                let mut hi = (self.max[axis] - a[axis]) / d;
                if lo > hi {
                    std::mem::swap(&mut lo, &mut hi);
                }
                t0 = t0.max(lo);
                t1 = t1.min(hi);
                if t0 >= t1 {
                    return false;
                }
            }
        }
        // Overlap interval has positive length: the segment spends time
        // strictly inside the slab intersection.
        t1 - t0 > 1e-12
    }
}

/// Per-step acceleration per unit action.
pub const ACCEL_GAIN: f64 = 0.1;
/// Per-axis velocity clamp.
pub const MAX_SPEED: f64 = 0.5;

/// One clamped double-integrator step in free space: velocity gains
/// `ACCEL_GAIN * action * gravity_scale` (clamped per axis), position gains
/// the velocity (clamped to `bounds`). Action components are clamped to
/// `[-1, 1]` first.
pub fn integrate(state: &EnvState, action: [f64; 2], gravity_scale: f64, bounds: &Rect) -> EnvState {
    let mut velocity = state.velocity;
    for axis in 0..2 {
        let a = action[axis].clamp(-1.0, 1.0);
        velocity[axis] = (velocity[axis] + ACCEL_GAIN * a * gravity_scale).clamp(-MAX_SPEED, MAX_SPEED);
    }
    let position = [
        (state.position[0] + velocity[0]).clamp(bounds.min[0], bounds.max[0]),
        (state.position[1] + velocity[1]).clamp(bounds.min[1], bounds.max[1]),
    ];
    EnvState {
        position,
        velocity,
        step_count: state.step_count + 1,
    }
}

/// Double-integrator step with wall blocking: each axis displacement is
/// applied separately and cancelled if it would enter the (closed) wall
/// rectangle; a final sweep check stops the rare diagonal corner clip.
pub fn integrate_with_wall(
    state: &EnvState,
    action: [f64; 2],
    gravity_scale: f64,
    bounds: &Rect,
    wall: &Rect,
) -> EnvState {
    let mut velocity = state.velocity;
    for axis in 0..2 {
        let a = action[axis].clamp(-1.0, 1.0);
        velocity[axis] = (velocity[axis] + ACCEL_GAIN * a * gravity_scale).clamp(-MAX_SPEED, MAX_SPEED);
    }
    let old = state.position;
    let mut pos = old;
    let cand_x = (pos[0] + velocity[0]).clamp(bounds.min[0], bounds.max[0]);
    if !wall.contains_closed([cand_x, pos[1]]) {
        pos[0] = cand_x;
    }
    let cand_y = (pos[1] + velocity[1]).clamp(bounds.min[1], bounds.max[1]);
    if !wall.contains_closed([pos[0], cand_y]) {
        pos[1] = cand_y;
    }
    if wall.segment_crosses_interior(old, pos) {
        pos = old;
    }
    EnvState {
        position: pos,
        velocity,
        step_count: state.step_count + 1,
    }
}
