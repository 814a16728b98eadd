//! Intelligent Driver Model car-following dynamics and traffic state types.
//!
//! A vehicle's acceleration depends only on its own speed and on the gap and
//! speed of the vehicle directly ahead. Vehicles are stored front to back:
//! index 0 is the front of the platoon, and vehicle `i` follows vehicle
//! `i - 1` (wrapping to `n - 1` on a ring).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// IDM driver parameters.
///
/// All quantities are SI: m, s, m/s, m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    /// Desired free-flow speed v0 (m/s).
    pub desired_speed: f64,
    /// Safe time headway T (s).
    pub time_headway: f64,
    /// Maximum acceleration a (m/s²).
    pub max_accel: f64,
    /// Comfortable deceleration b (m/s²).
    pub comfortable_decel: f64,
    /// Free-flow acceleration exponent (the IDM exponent, typically 4).
    pub accel_exponent: f64,
    /// Minimum standstill gap s0 (m).
    pub min_gap: f64,
    /// Vehicle length l (m).
    pub vehicle_length: f64,
}

impl Default for IdmParams {
    /// Standard published passenger-car values.
    fn default() -> Self {
        IdmParams {
            desired_speed: 30.0,
            time_headway: 1.0,
            max_accel: 1.0,
            comfortable_decel: 1.5,
            accel_exponent: 4.0,
            min_gap: 2.0,
            vehicle_length: 5.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.desired_speed > 0.0
            && self.time_headway >= 0.0
            && self.max_accel > 0.0
            && self.comfortable_decel > 0.0
            && self.min_gap > 0.0
            && self.vehicle_length > 0.0
            && self.accel_exponent > 0.0;
        let finite = [
            self.desired_speed,
            self.time_headway,
            self.max_accel,
            self.comfortable_decel,
            self.accel_exponent,
            self.min_gap,
            self.vehicle_length,
        ]
        .iter()
        .all(|x| x.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("IdmParams {self:?}")))
        }
    }

    /// Dynamic desired gap s*(v, dv) = s0 + v T + v dv / (2 sqrt(a b)).
    ///
    /// `approach_rate` is own speed minus leader speed.
    pub fn desired_gap(&self, speed: f64, approach_rate: f64) -> f64 {
        self.min_gap
            + speed * self.time_headway
            + speed * approach_rate / (2.0 * (self.max_accel * self.comfortable_decel).sqrt())
    }
}

/// Position and velocity of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal track position (m). On a ring, always in `[0, L)`.
    pub position: f64,
    /// Velocity (m/s); never negative after a simulation step.
    pub velocity: f64,
}

/// Track layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    /// Straight road; vehicle 0 has no leader.
    OpenRoad,
    /// Closed loop of the given length; vehicle 0 follows vehicle n-1.
    Ring { length: f64 },
}

impl Topology {
    pub fn ring_length(&self) -> Option<f64> {
        match self {
            Topology::OpenRoad => None,
            Topology::Ring { length } => Some(*length),
        }
    }
}

/// Full simulation state: every vehicle plus the track it lives on.
///
/// The flattened layout used by Jacobians and observations is
/// `[x_0, v_0, x_1, v_1, ..]` in vehicle order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    pub vehicles: Vec<VehicleState>,
    pub topology: Topology,
    /// Index of the externally controlled vehicle, if any.
    pub controlled_index: Option<usize>,
}

impl TrafficState {
    pub fn new(vehicles: Vec<VehicleState>, topology: Topology) -> Self {
        TrafficState {
            vehicles,
            topology,
            controlled_index: None,
        }
    }

    pub fn with_controlled(mut self, index: usize) -> Self {
        self.controlled_index = Some(index);
        self
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Index of vehicle `i`'s leader, or `None` for the head of an open road.
    pub fn leader_of(&self, i: usize) -> Option<usize> {
        match self.topology {
            Topology::OpenRoad => i.checked_sub(1),
            Topology::Ring { .. } => {
                let n = self.vehicles.len();
                Some((i + n - 1) % n)
            }
        }
    }

    /// Flattened `[x_0, v_0, .., x_{n-1}, v_{n-1}]` copy of the state.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.vehicles.len());
        for v in &self.vehicles {
            out.push(v.position);
            out.push(v.velocity);
        }
        out
    }

    /// Replaces positions and velocities from a flattened vector.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != 2 * self.vehicles.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.vehicles.len(),
                actual: flat.len(),
            });
        }
        for (i, v) in self.vehicles.iter_mut().enumerate() {
            v.position = flat[2 * i];
            v.velocity = flat[2 * i + 1];
        }
        Ok(())
    }
}

/// Bumper-to-bumper gap from vehicle `i` to its leader.
///
/// On a ring the positional difference is taken modulo the ring length, and a
/// single vehicle follows itself around the whole loop. Overlapping vehicles
/// (gap <= 0) are rejected: they indicate a corrupted state.
pub fn headway(state: &TrafficState, i: usize, params: &IdmParams) -> Result<f64> {
    let n = state.vehicles.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, count: n });
    }
    let leader = state.leader_of(i).ok_or(Error::NoLeader)?;
    let gap = match state.topology {
        Topology::OpenRoad => {
            state.vehicles[leader].position - state.vehicles[i].position - params.vehicle_length
        }
        Topology::Ring { length } => {
            if leader == i {
                length - params.vehicle_length
            } else {
                (state.vehicles[leader].position - state.vehicles[i].position).rem_euclid(length)
                    - params.vehicle_length
            }
        }
    };
    if !gap.is_finite() {
        return Err(Error::NonFinite("headway"));
    }
    if gap <= 0.0 {
        return Err(Error::Overlap { index: i, gap });
    }
    Ok(gap)
}

/// IDM acceleration of a follower: `a (1 - (v/v0)^exp - (s*/s)^2)`.
pub fn idm_acceleration(
    speed: f64,
    leader_speed: f64,
    gap: f64,
    params: &IdmParams,
) -> Result<f64> {
    if !(speed.is_finite() && leader_speed.is_finite() && gap.is_finite()) {
        return Err(Error::NonFinite("idm_acceleration input"));
    }
    if gap <= 0.0 {
        return Err(Error::Overlap {
            index: 0,
            gap,
        });
    }
    let desired = params.desired_gap(speed, speed - leader_speed);
    let free = (speed / params.desired_speed).powf(params.accel_exponent);
    Ok(params.max_accel * (1.0 - free - (desired / gap).powi(2)))
}

/// Free-road IDM acceleration for a vehicle with no leader: `a (1 - (v/v0)^exp)`.
pub fn free_road_acceleration(speed: f64, params: &IdmParams) -> Result<f64> {
    if !speed.is_finite() {
        return Err(Error::NonFinite("free_road_acceleration input"));
    }
    let free = (speed / params.desired_speed).powf(params.accel_exponent);
    Ok(params.max_accel * (1.0 - free))
}

/// IDM acceleration for every vehicle in the state.
///
/// The head of an open road uses the free-road term only, which is the
/// infinitely-distant-leader limit of the full model.
pub fn idm_accelerations(state: &TrafficState, params: &IdmParams) -> Result<Vec<f64>> {
    let n = state.vehicles.len();
    if n == 0 {
        return Err(Error::EmptyState);
    }
    let mut accels = Vec::with_capacity(n);
    for i in 0..n {
        let v = state.vehicles[i].velocity;
        let accel = match state.leader_of(i) {
            None => free_road_acceleration(v, params)?,
            Some(leader) => {
                let gap = headway(state, i, params)?;
                idm_acceleration(v, state.vehicles[leader].velocity, gap, params)?
            }
        };
        accels.push(accel);
    }
    Ok(accels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ring_state(positions: &[f64], velocities: &[f64], length: f64) -> TrafficState {
        let vehicles = positions
            .iter()
            .zip(velocities)
            .map(|(&position, &velocity)| VehicleState { position, velocity })
            .collect();
        TrafficState::new(vehicles, Topology::Ring { length })
    }

    fn open_state(positions: &[f64], velocities: &[f64]) -> TrafficState {
        let vehicles = positions
            .iter()
            .zip(velocities)
            .map(|(&position, &velocity)| VehicleState { position, velocity })
            .collect();
        TrafficState::new(vehicles, Topology::OpenRoad)
    }

    #[test]
    fn headway_wraps_on_ring() {
        // Leader at 0, follower at 60 on a 90 m ring: gap = (0-60) mod 90 - 5 = 25.
        let state = ring_state(&[0.0, 60.0], &[0.0, 0.0], 90.0);
        let gap = headway(&state, 1, &IdmParams::default()).unwrap();
        assert_relative_eq!(gap, 25.0, max_relative = 1e-12);
    }

    #[test]
    fn headway_open_road() {
        let state = open_state(&[100.0, 80.0], &[0.0, 0.0]);
        let gap = headway(&state, 1, &IdmParams::default()).unwrap();
        assert_relative_eq!(gap, 15.0, max_relative = 1e-12);
    }

    #[test]
    fn headway_rejects_overlap() {
        let state = open_state(&[20.0, 20.0], &[0.0, 0.0]);
        assert!(matches!(
            headway(&state, 1, &IdmParams::default()),
            Err(Error::Overlap { index: 1, .. })
        ));
    }

    #[test]
    fn headway_rejects_lead_vehicle_on_open_road() {
        let state = open_state(&[0.0], &[0.0]);
        assert!(matches!(
            headway(&state, 0, &IdmParams::default()),
            Err(Error::NoLeader)
        ));
    }

    #[test]
    fn single_vehicle_ring_follows_itself() {
        let state = ring_state(&[10.0], &[5.0], 90.0);
        let gap = headway(&state, 0, &IdmParams::default()).unwrap();
        assert_relative_eq!(gap, 85.0, max_relative = 1e-12);
    }

    #[test]
    fn idm_accel_free_flow_at_desired_speed_is_zero() {
        let params = IdmParams::default();
        let a = idm_acceleration(30.0, 30.0, 1e9, &params).unwrap();
        assert!(a.abs() < 1e-6, "free flow at v0 should give ~0, got {a}");
    }

    #[test]
    fn idm_accel_standing_start_is_max_accel() {
        let params = IdmParams::default();
        let a = idm_acceleration(0.0, 0.0, 1e9, &params).unwrap();
        assert_relative_eq!(a, params.max_accel, max_relative = 1e-6);
    }

    #[test]
    fn idm_accel_hand_value() {
        // v=10, leader 10, gap 12: s* = 2 + 10 = 12, accel = 1 - (1/3)^4 - 1 = -1/81.
        let params = IdmParams::default();
        let a = idm_acceleration(10.0, 10.0, 12.0, &params).unwrap();
        assert_relative_eq!(a, -1.0 / 81.0, max_relative = 1e-12);
    }

    #[test]
    fn idm_accel_rejects_non_finite() {
        let params = IdmParams::default();
        assert!(idm_acceleration(f64::NAN, 0.0, 10.0, &params).is_err());
        assert!(idm_acceleration(0.0, f64::INFINITY, 10.0, &params).is_err());
    }

    #[test]
    fn open_road_head_uses_free_road_term() {
        let params = IdmParams::default();
        let state = open_state(&[100.0, 80.0], &[20.0, 10.0]);
        let accels = idm_accelerations(&state, &params).unwrap();
        assert_relative_eq!(
            accels[0],
            free_road_acceleration(20.0, &params).unwrap(),
            max_relative = 1e-12
        );
    }
}
