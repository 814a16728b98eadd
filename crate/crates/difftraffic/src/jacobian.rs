//! Analytical Jacobians of the car-following dynamics.
//!
//! A platoon couples each vehicle only to the vehicle directly ahead, so the
//! Jacobian of the dynamics is block lower-bidiagonal: one 2x2 diagonal block
//! per vehicle (partials with respect to its own position and velocity) and
//! one 2x2 block toward its leader's state. On a ring the coupling of vehicle
//! 0 to vehicle n-1 adds a single corner block. Everything else is exactly
//! zero, so the matrix is stored as O(n) blocks and only materialized dense
//! on demand.
//!
//! Two flavors are exposed: [`dynamics_jacobian`] gives the continuous-time
//! partials of `(dx/dt, dv/dt)`, and [`step_jacobian`] gives the partials of
//! the discrete Euler step, `I + dt * J` with the clipping rule applied.
//! [`finite_difference_jacobian`] is the central-difference oracle used to
//! verify both.

use nalgebra::DMatrix;
use rand::Rng;

use crate::idm::{headway, idm_accelerations, IdmParams, Topology, TrafficState, VehicleState};
use crate::sim::{step, StepConfig};
use crate::{Error, Result};

/// One 2x2 block of partials; rows are (position rate, velocity rate),
/// columns are (position, velocity).
pub type Block = [[f64; 2]; 2];

const ZERO_BLOCK: Block = [[0.0, 0.0], [0.0, 0.0]];

/// Block-bidiagonal Jacobian of the traffic dynamics.
///
/// Also used, after discretization, for the one-step Jacobian returned by
/// [`step_jacobian`]; the sparsity pattern is the same.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsJacobian {
    n: usize,
    /// Leader index per vehicle; `None` for the head of an open road.
    leader: Vec<Option<usize>>,
    diag: Vec<Block>,
    /// Coupling block toward the leader. Zero when there is no distinct
    /// leader (a single vehicle on a ring folds its self-coupling into the
    /// diagonal block).
    toward_leader: Vec<Block>,
}

impl DynamicsJacobian {
    pub fn vehicle_count(&self) -> usize {
        self.n
    }

    /// Partials of vehicle `i`'s rates with respect to its own state.
    pub fn diag_block(&self, i: usize) -> &Block {
        &self.diag[i]
    }

    /// Leader index and coupling block for vehicle `i`, if it has a distinct
    /// leader.
    pub fn leader_block(&self, i: usize) -> Option<(usize, &Block)> {
        match self.leader[i] {
            Some(l) if l != i => Some((l, &self.toward_leader[i])),
            _ => None,
        }
    }

    /// The ring's corner block: coupling of vehicle 0 to vehicle n-1.
    pub fn corner_block(&self) -> Option<&Block> {
        self.leader_block(0).map(|(_, b)| b)
    }

    /// Zeroes all blocks of the given vehicles (the convention for vehicles
    /// whose velocity was clipped in the corresponding step).
    pub fn zero_vehicles(&mut self, zeroed: &[bool]) -> Result<()> {
        if zeroed.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: zeroed.len(),
            });
        }
        for (i, &z) in zeroed.iter().enumerate() {
            if z {
                self.diag[i] = ZERO_BLOCK;
                self.toward_leader[i] = ZERO_BLOCK;
            }
        }
        Ok(())
    }

    /// Dense 2n x 2n materialization (tests and small-n inspection only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(2 * self.n, 2 * self.n);
        for i in 0..self.n {
            for r in 0..2 {
                for c in 0..2 {
                    m[(2 * i + r, 2 * i + c)] = self.diag[i][r][c];
                }
            }
            if let Some((l, block)) = self.leader_block(i) {
                for r in 0..2 {
                    for c in 0..2 {
                        m[(2 * i + r, 2 * l + c)] = block[r][c];
                    }
                }
            }
        }
        m
    }
}

/// Per-vehicle partials of the IDM acceleration.
struct AccelPartials {
    own_x: f64,
    own_v: f64,
    leader_x: f64,
    leader_v: f64,
}

/// Partials of `g = dv/dt` for a follower at speed `v` with leader speed
/// `v_lead` and gap `s`.
fn accel_partials(v: f64, v_lead: f64, s: f64, p: &IdmParams) -> AccelPartials {
    let a = p.max_accel;
    let dv = v - v_lead;
    let s_star = p.desired_gap(v, dv);
    let sqrt_ab = (p.max_accel * p.comfortable_decel).sqrt();
    let free_v = -a * p.accel_exponent * v.powf(p.accel_exponent - 1.0)
        / p.desired_speed.powf(p.accel_exponent);
    AccelPartials {
        own_x: -2.0 * a * s_star * s_star / (s * s * s),
        own_v: free_v - (2.0 * a * s_star / (s * s)) * (p.time_headway + (dv + v) / (2.0 * sqrt_ab)),
        leader_x: 2.0 * a * s_star * s_star / (s * s * s),
        leader_v: a * s_star * v / (s * s * sqrt_ab),
    }
}

/// Analytical Jacobian of the continuous dynamics at the given state.
///
/// Every diagonal block has top row (0, 1) -- position rate is velocity --
/// and every leader block has top row (0, 0). The head of an open road keeps
/// only the free-road velocity partial, the infinitely-distant-leader limit
/// in which the interaction term and its couplings vanish.
pub fn dynamics_jacobian(state: &TrafficState, params: &IdmParams) -> Result<DynamicsJacobian> {
    let n = state.vehicles.len();
    if n == 0 {
        return Err(Error::EmptyState);
    }
    let mut leader = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    let mut toward_leader = Vec::with_capacity(n);
    for i in 0..n {
        let v = state.vehicles[i].velocity;
        let lead = state.leader_of(i);
        leader.push(lead);
        match lead {
            None => {
                let free_v = -params.max_accel
                    * params.accel_exponent
                    * v.powf(params.accel_exponent - 1.0)
                    / params.desired_speed.powf(params.accel_exponent);
                diag.push([[0.0, 1.0], [0.0, free_v]]);
                toward_leader.push(ZERO_BLOCK);
            }
            Some(l) => {
                let s = headway(state, i, params)?;
                let partials = accel_partials(v, state.vehicles[l].velocity, s, params);
                let mut d = [[0.0, 1.0], [partials.own_x, partials.own_v]];
                if l == i {
                    // Single vehicle on a ring: leader partials fold into the
                    // diagonal (its gap is constant, so the x terms cancel).
                    d[1][0] += partials.leader_x;
                    d[1][1] += partials.leader_v;
                    toward_leader.push(ZERO_BLOCK);
                } else {
                    toward_leader.push([[0.0, 0.0], [partials.leader_x, partials.leader_v]]);
                }
                diag.push(d);
            }
        }
    }
    Ok(DynamicsJacobian {
        n,
        leader,
        diag,
        toward_leader,
    })
}

/// Jacobian of one discrete Euler step: `I + dt * J_dyn`, with the velocity
/// row of every clipped vehicle zeroed.
///
/// A clipped vehicle's next velocity is the constant zero, so its velocity
/// row vanishes; its position row keeps `dx'/dx = 1`, `dx'/dv = dt` because
/// the position update uses the pre-clip velocity. `clipped` must come from
/// the matching [`step`] call.
pub fn step_jacobian(
    state: &TrafficState,
    params: &IdmParams,
    cfg: &StepConfig,
    clipped: &[bool],
) -> Result<DynamicsJacobian> {
    let n = state.vehicles.len();
    if clipped.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: clipped.len(),
        });
    }
    let dyn_jac = dynamics_jacobian(state, params)?;
    let dt = cfg.dt;
    let mut diag = Vec::with_capacity(n);
    let mut toward_leader = Vec::with_capacity(n);
    for i in 0..n {
        let d = &dyn_jac.diag[i];
        let s = &dyn_jac.toward_leader[i];
        if clipped[i] {
            diag.push([[1.0, dt], [0.0, 0.0]]);
            toward_leader.push(ZERO_BLOCK);
        } else {
            diag.push([
                [1.0 + dt * d[0][0], dt * d[0][1]],
                [dt * d[1][0], 1.0 + dt * d[1][1]],
            ]);
            toward_leader.push([
                [dt * s[0][0], dt * s[0][1]],
                [dt * s[1][0], dt * s[1][1]],
            ]);
        }
    }
    Ok(DynamicsJacobian {
        n,
        leader: dyn_jac.leader,
        diag,
        toward_leader,
    })
}

/// Central-difference Jacobian of the full step map, the correctness oracle
/// for [`step_jacobian`].
///
/// Perturbs each state entry by `±h` and differences the stepped flattened
/// states. Meaningful only at interior states: away from clip boundaries and,
/// on a ring, away from the position wrap.
pub fn finite_difference_jacobian(
    state: &TrafficState,
    params: &IdmParams,
    cfg: &StepConfig,
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("perturbation h = {h}")));
    }
    if h < 1e-12 {
        log::warn!("finite differences with h = {h:.3e} may underflow to noise");
    }
    let n2 = 2 * state.vehicles.len();
    let base = state.flatten();
    let mut jac = DMatrix::zeros(n2, n2);
    let mut probe = state.clone();
    for col in 0..n2 {
        let mut plus = base.clone();
        plus[col] += h;
        probe.assign_flat(&plus)?;
        let f_plus = step(&probe, params, cfg, None)?.state.flatten();

        let mut minus = base.clone();
        minus[col] -= h;
        probe.assign_flat(&minus)?;
        let f_minus = step(&probe, params, cfg, None)?.state.flatten();

        for row in 0..n2 {
            jac[(row, col)] = (f_plus[row] - f_minus[row]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Sensitivity of the next state and reward to the controlled vehicle's
/// action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSensitivity {
    /// Length-2n vector of partials of the flattened next state with respect
    /// to the commanded acceleration.
    pub d_next_state_d_action: Vec<f64>,
    /// Partial of the reward (through the next state) with respect to the
    /// commanded acceleration.
    pub d_reward_d_action: f64,
    /// True when the controlled vehicle's velocity clipped, zeroing both
    /// gradients.
    pub clipped: bool,
}

/// Gradients of the next state and of a state-dependent reward with respect
/// to the controlled vehicle's action.
///
/// Under the explicit Euler update only the controlled vehicle's next
/// velocity responds to the action (by `dt`); its next position does not.
/// If the commanded acceleration would clip the velocity to zero, both
/// gradients are zero by the clipping convention. `reward_grad_state` is the
/// gradient of the reward with respect to the flattened next state.
pub fn action_sensitivity(
    state: &TrafficState,
    cfg: &StepConfig,
    action: f64,
    reward_grad_state: &[f64],
) -> Result<ActionSensitivity> {
    let n = state.vehicles.len();
    let idx = state.controlled_index.ok_or(Error::MissingControlledIndex)?;
    if idx >= n {
        return Err(Error::IndexOutOfRange { index: idx, count: n });
    }
    if reward_grad_state.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            actual: reward_grad_state.len(),
        });
    }
    if !action.is_finite() {
        return Err(Error::NonFinite("action"));
    }
    let applied = cfg.clamp_action(action);
    let clipped = state.vehicles[idx].velocity + applied * cfg.dt < 0.0;
    let mut d_state = vec![0.0; 2 * n];
    let d_reward;
    if clipped {
        d_reward = 0.0;
    } else {
        d_state[2 * idx + 1] = cfg.dt;
        d_reward = reward_grad_state[2 * idx + 1] * cfg.dt;
    }
    Ok(ActionSensitivity {
        d_next_state_d_action: d_state,
        d_reward_d_action: d_reward,
        clipped,
    })
}

/// Draws a random platoon state away from clip boundaries and ring wraps,
/// suitable for finite-difference comparisons.
///
/// Gaps are uniform in [10, 40] m and speeds sit within ±1.5 m/s of a common
/// base speed, which keeps every IDM acceleration mild. `ring` selects the
/// topology; the ring length is the exact sum of gaps and vehicle lengths.
pub fn sample_interior_state<R: Rng>(
    rng: &mut R,
    n: usize,
    ring: bool,
    params: &IdmParams,
    cfg: &StepConfig,
) -> TrafficState {
    assert!(n >= 1, "need at least one vehicle");
    loop {
        let gaps: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..40.0)).collect();
        let base_speed: f64 = rng.gen_range(2.0..20.0);
        let velocities: Vec<f64> = (0..n)
            .map(|_| (base_speed + rng.gen_range(-1.5..1.5)).max(0.5))
            .collect();

        let total: f64 = gaps.iter().map(|g| g + params.vehicle_length).sum();
        let first = if ring { total - 5.0 } else { 1000.0 };
        let mut positions = Vec::with_capacity(n);
        let mut x = first;
        positions.push(x);
        for gap in gaps.iter().skip(1) {
            x -= gap + params.vehicle_length;
            positions.push(x);
        }

        let vehicles = positions
            .iter()
            .zip(&velocities)
            .map(|(&position, &velocity)| VehicleState { position, velocity })
            .collect();
        let topology = if ring {
            Topology::Ring { length: total }
        } else {
            Topology::OpenRoad
        };
        let state = TrafficState::new(vehicles, topology);

        // Keep a safety margin from the clipping kink.
        let accels = match idm_accelerations(&state, params) {
            Ok(a) => a,
            Err(_) => continue,
        };
        let interior = state
            .vehicles
            .iter()
            .zip(&accels)
            .all(|(veh, acc)| veh.velocity + acc * cfg.dt > 1e-3);
        if interior {
            return state;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::equilibrium_state;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_vehicle_state() -> (TrafficState, IdmParams) {
        // Follower at speed 10 with leader at speed 10 and gap 12, so the
        // desired gap is exactly 12.
        let params = IdmParams::default();
        let state = TrafficState::new(
            vec![
                VehicleState {
                    position: 100.0,
                    velocity: 10.0,
                },
                VehicleState {
                    position: 83.0,
                    velocity: 10.0,
                },
            ],
            Topology::OpenRoad,
        );
        (state, params)
    }

    #[test]
    fn hand_checked_position_partials() {
        let (state, params) = two_vehicle_state();
        assert_relative_eq!(
            headway(&state, 1, &params).unwrap(),
            12.0,
            max_relative = 1e-12
        );
        let jac = dynamics_jacobian(&state, &params).unwrap();
        let d = jac.diag_block(1);
        assert_relative_eq!(d[1][0], -1.0 / 6.0, max_relative = 1e-12);
        let (l, s) = jac.leader_block(1).unwrap();
        assert_eq!(l, 0);
        assert_relative_eq!(s[1][0], 1.0 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn top_rows_are_fixed() {
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &ring in &[false, true] {
            let state = sample_interior_state(&mut rng, 6, ring, &params, &cfg);
            let jac = dynamics_jacobian(&state, &params).unwrap();
            for i in 0..6 {
                assert_eq!(jac.diag_block(i)[0], [0.0, 1.0]);
                if let Some((_, s)) = jac.leader_block(i) {
                    assert_eq!(s[0], [0.0, 0.0]);
                }
            }
            let step_jac = step_jacobian(&state, &params, &cfg, &vec![false; 6]).unwrap();
            for i in 0..6 {
                assert_eq!(step_jac.diag_block(i)[0], [1.0, cfg.dt]);
            }
        }
    }

    #[test]
    fn three_vehicle_open_road_zero_pattern() {
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let state = sample_interior_state(&mut rng, 3, false, &params, &cfg);
        let dense = dynamics_jacobian(&state, &params).unwrap().to_dense();
        // Anything above the 2x2 diagonal, or more than one block below it,
        // is exactly zero.
        for row in 0..6 {
            for col in 0..6 {
                let (bi, bj) = (row / 2, col / 2);
                if bj > bi || bi > bj + 1 {
                    assert_eq!(dense[(row, col)], 0.0, "nonzero at ({row},{col})");
                }
            }
        }
    }

    #[test]
    fn free_flow_step_block_hand_value() {
        // One vehicle on an open road at its desired speed.
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let state = TrafficState::new(
            vec![VehicleState {
                position: 0.0,
                velocity: 30.0,
            }],
            Topology::OpenRoad,
        );
        let jac = step_jacobian(&state, &params, &cfg, &[false]).unwrap();
        let d = jac.diag_block(0);
        assert_eq!(d[0], [1.0, 0.1]);
        assert_relative_eq!(d[1][1], 1.0 + 0.1 * (-4.0 / 30.0), max_relative = 1e-12);
        assert_eq!(d[1][0], 0.0);
    }

    #[test]
    fn step_jacobian_approaches_identity_for_tiny_dt() {
        let params = IdmParams::default();
        let cfg = StepConfig {
            dt: 1e-12,
            ..StepConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = sample_interior_state(&mut rng, 4, true, &params, &StepConfig::default());
        let dense = step_jacobian(&state, &params, &cfg, &vec![false; 4])
            .unwrap()
            .to_dense();
        let identity = DMatrix::<f64>::identity(8, 8);
        assert!((dense - identity).abs().max() < 1e-9);
    }

    #[test]
    fn clipped_vehicle_velocity_row_is_zero() {
        let (state, params) = two_vehicle_state();
        let cfg = StepConfig::default();
        let jac = step_jacobian(&state, &params, &cfg, &[false, true]).unwrap();
        let dense = jac.to_dense();
        for col in 0..4 {
            assert_eq!(dense[(3, col)], 0.0);
        }
        // Position row of a clipped vehicle is untouched.
        assert_eq!(dense[(2, 2)], 1.0);
        assert_eq!(dense[(2, 3)], cfg.dt);
    }

    #[test]
    fn matches_finite_differences_on_both_topologies() {
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &ring in &[false, true] {
            for _ in 0..10 {
                let state = sample_interior_state(&mut rng, 4, ring, &params, &cfg);
                let out = step(&state, &params, &cfg, None).unwrap();
                let analytical = step_jacobian(&state, &params, &cfg, &out.clipped)
                    .unwrap()
                    .to_dense();
                let numerical =
                    finite_difference_jacobian(&state, &params, &cfg, 1e-5).unwrap();
                let err = (analytical - numerical).abs().max();
                assert!(err <= 1e-6, "ring={ring}: max error {err}");
            }
        }
    }

    #[test]
    fn ring_corner_block_exists_and_open_road_has_none() {
        let params = IdmParams::default();
        let ring = equilibrium_state(5, &params, 120.0).unwrap();
        let jac = dynamics_jacobian(&ring, &params).unwrap();
        assert!(jac.corner_block().is_some());

        let mut open = ring.clone();
        open.topology = Topology::OpenRoad;
        let jac = dynamics_jacobian(&open, &params).unwrap();
        assert!(jac.corner_block().is_none());
    }

    #[test]
    fn open_road_causality_zero_columns() {
        // No vehicle is influenced by anything behind it.
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let state = sample_interior_state(&mut rng, 5, false, &params, &cfg);
        let dense = step_jacobian(&state, &params, &cfg, &vec![false; 5])
            .unwrap()
            .to_dense();
        for i in 0..5 {
            for j in (i + 1)..5 {
                for r in 0..2 {
                    for c in 0..2 {
                        assert_eq!(dense[(2 * i + r, 2 * j + c)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn action_sensitivity_seeds_dt_at_controlled_velocity() {
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let state = equilibrium_state(4, &params, 120.0).unwrap().with_controlled(2);
        // Pure mean-velocity reward gradient: 1/n at every velocity slot.
        let grad: Vec<f64> = (0..8).map(|k| if k % 2 == 1 { 0.25 } else { 0.0 }).collect();
        let sens = action_sensitivity(&state, &cfg, 0.5, &grad).unwrap();
        assert!(!sens.clipped);
        for (k, &g) in sens.d_next_state_d_action.iter().enumerate() {
            if k == 5 {
                assert_relative_eq!(g, cfg.dt, max_relative = 1e-12);
            } else {
                assert_eq!(g, 0.0);
            }
        }
        assert_relative_eq!(sens.d_reward_d_action, cfg.dt / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn action_sensitivity_zeroes_on_clip() {
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let mut state = equilibrium_state(4, &params, 120.0).unwrap().with_controlled(2);
        state.vehicles[2].velocity = 0.05;
        let grad = vec![1.0; 8];
        let sens = action_sensitivity(&state, &cfg, -1.0, &grad).unwrap();
        assert!(sens.clipped);
        assert!(sens.d_next_state_d_action.iter().all(|&g| g == 0.0));
        assert_eq!(sens.d_reward_d_action, 0.0);
    }

    #[test]
    fn missing_controlled_index_is_rejected() {
        let params = IdmParams::default();
        let cfg = StepConfig::default();
        let state = equilibrium_state(4, &params, 120.0).unwrap();
        assert!(matches!(
            action_sensitivity(&state, &cfg, 0.0, &vec![0.0; 8]),
            Err(Error::MissingControlledIndex)
        ));
    }
}
