//! Discrete time stepping of the car-following dynamics.
//!
//! Updates are explicit Euler, all vehicles synchronous from the pre-step
//! state: `x' = x + v dt`, `v' = max(0, v + accel dt)`. The position update
//! uses the pre-update velocity; clipping applies to velocity only. A step
//! that produces an overlap is reported as a collision event rather than an
//! error so that training can terminate the episode and carry on.

use serde::{Deserialize, Serialize};

use crate::idm::{idm_accelerations, IdmParams, Topology, TrafficState};
use crate::{Error, Result};

/// Integration step and controlled-vehicle action bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    /// Integration time step (s).
    pub dt: f64,
    /// Lower bound on the controlled vehicle's commanded acceleration (m/s²).
    pub action_min: f64,
    /// Upper bound on the controlled vehicle's commanded acceleration (m/s²).
    pub action_max: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 0.1,
            // Asymmetric bounds: braking authority must cover what
            // car-following demands in congested flow (IDM peaks near
            // -1.8 m/s^2 on the shipped ring), acceleration stays gentle.
            action_min: -3.0,
            action_max: 1.0,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt > 0.0 && self.dt.is_finite() && self.action_min < self.action_max {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("StepConfig {self:?}")))
        }
    }

    pub fn clamp_action(&self, action: f64) -> f64 {
        action.clamp(self.action_min, self.action_max)
    }
}

/// Result of advancing the simulation by one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: TrafficState,
    /// Acceleration actually applied to each vehicle (before velocity clipping).
    pub accelerations: Vec<f64>,
    /// True for vehicles whose updated velocity was clipped to zero.
    pub clipped: Vec<bool>,
    /// Indices of vehicles whose post-step gap is non-positive. Non-empty
    /// means the step produced a collision.
    pub collisions: Vec<usize>,
}

impl StepOutcome {
    pub fn collided(&self) -> bool {
        !self.collisions.is_empty()
    }
}

/// Advances every vehicle one Euler step under the given accelerations.
///
/// This is the shared integrator behind [`step`]; callers that override
/// accelerations (a controlled vehicle, yield braking) compute the
/// acceleration vector themselves and integrate here.
pub fn integrate(
    state: &TrafficState,
    params: &IdmParams,
    cfg: &StepConfig,
    accelerations: &[f64],
) -> Result<StepOutcome> {
    let n = state.vehicles.len();
    if accelerations.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: accelerations.len(),
        });
    }
    let mut next = state.clone();
    let mut clipped = vec![false; n];
    for i in 0..n {
        let v = state.vehicles[i].velocity;
        let mut new_x = state.vehicles[i].position + v * cfg.dt;
        if let Topology::Ring { length } = state.topology {
            new_x = new_x.rem_euclid(length);
        }
        let mut new_v = v + accelerations[i] * cfg.dt;
        if new_v < 0.0 {
            new_v = 0.0;
            clipped[i] = true;
        }
        next.vehicles[i].position = new_x;
        next.vehicles[i].velocity = new_v;
    }

    // Overlap check on the updated state. The head of an open road has no
    // leader and cannot collide forward.
    let mut collisions = Vec::new();
    for i in 0..n {
        if next.leader_of(i).is_none() {
            continue;
        }
        match crate::idm::headway(&next, i, params) {
            Ok(_) => {}
            Err(Error::Overlap { index, .. }) => collisions.push(index),
            Err(e) => return Err(e),
        }
    }

    Ok(StepOutcome {
        state: next,
        accelerations: accelerations.to_vec(),
        clipped,
        collisions,
    })
}

/// One forward simulation step.
///
/// Every vehicle follows IDM except the controlled one, which applies
/// `action` clamped to the configured bounds when an action is given. With
/// `action = None` the controlled vehicle (if any) also follows IDM.
pub fn step(
    state: &TrafficState,
    params: &IdmParams,
    cfg: &StepConfig,
    action: Option<f64>,
) -> Result<StepOutcome> {
    let mut accels = idm_accelerations(state, params)?;
    if let Some(a) = action {
        if !a.is_finite() {
            return Err(Error::NonFinite("action"));
        }
        let idx = state.controlled_index.ok_or(Error::MissingControlledIndex)?;
        if idx >= accels.len() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                count: accels.len(),
            });
        }
        accels[idx] = cfg.clamp_action(a);
    }
    integrate(state, params, cfg, &accels)
}

/// Uniform ring flow with zero IDM acceleration.
///
/// Vehicles are evenly spaced on the ring and share the equilibrium velocity
/// `v_eq` solving `idm_acceleration(v, v, L/n - l) = 0`, found by bisection
/// on `[0, v0]`. The residual at the returned velocity is below 1e-12.
pub fn equilibrium_state(
    n: usize,
    params: &IdmParams,
    ring_length: f64,
) -> Result<TrafficState> {
    if n == 0 {
        return Err(Error::EmptyState);
    }
    if !(ring_length.is_finite() && ring_length > 0.0) {
        return Err(Error::InvalidParameter(format!("ring length {ring_length}")));
    }
    params.validate()?;
    let segment = ring_length / n as f64;
    let gap = segment - params.vehicle_length;
    if gap <= params.min_gap {
        return Err(Error::InfeasibleSpacing {
            segment,
            length: params.vehicle_length,
            min_gap: params.min_gap,
        });
    }

    let velocity = equilibrium_velocity(gap, params)?;
    let spacing = ring_length / n as f64;
    let vehicles = (0..n)
        .map(|i| crate::idm::VehicleState {
            position: (n - 1 - i) as f64 * spacing,
            velocity,
        })
        .collect();
    Ok(TrafficState::new(
        vehicles,
        Topology::Ring {
            length: ring_length,
        },
    ))
}

/// Bisection for the speed with zero IDM acceleration at a fixed gap.
pub fn equilibrium_velocity(gap: f64, params: &IdmParams) -> Result<f64> {
    let residual = |v: f64| crate::idm::idm_acceleration(v, v, gap, params).unwrap_or(f64::NAN);
    let mut lo = 0.0;
    let mut hi = params.desired_speed;
    let f_lo = residual(lo);
    let f_hi = residual(hi);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NoEquilibrium {
            v0: params.desired_speed,
            gap,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    if residual(v).abs() < 1e-12 {
        Ok(v)
    } else {
        Err(Error::NoEquilibrium {
            v0: params.desired_speed,
            gap,
        })
    }
}
