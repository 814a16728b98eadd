//! Societal reward terms and their gradients with respect to state.
//!
//! The per-step reward combines the mean velocity of all vehicles (traffic
//! flow), a miles-per-gallon term (energy efficiency), and a penalty on the
//! change of the controlled vehicle's action between steps (jerk):
//!
//! `reward = velocity_weight * mean(v) + fuel_weight * mean(v/g)/1609
//!           - jerk_weight * |a_t - a_{t-1}|`
//!
//! where `g` is the fuel rate in gallons per second and 1609 converts meters
//! to miles. All terms are evaluated on the post-step state.

use serde::{Deserialize, Serialize};

use crate::fuel::FuelModel;
use crate::idm::TrafficState;
use crate::{Error, Result};

/// Weights of the combined reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    /// Weight on the mean-velocity (flow) term.
    pub velocity: f64,
    /// Weight on the miles-per-gallon term.
    pub fuel: f64,
    /// Weight on the action-change (jerk) penalty.
    pub jerk: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            velocity: 1.0,
            fuel: 0.1,
            jerk: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.velocity, self.fuel, self.jerk]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("RewardWeights {self:?}")))
        }
    }
}

/// Meters per mile, the conversion constant in the miles-per-gallon term.
pub const METERS_PER_MILE: f64 = 1609.0;

/// Mean velocity over all vehicles (m/s).
pub fn velocity_reward(state: &TrafficState) -> Result<f64> {
    if state.is_empty() {
        return Err(Error::EmptyState);
    }
    let sum: f64 = state.vehicles.iter().map(|v| v.velocity).sum();
    Ok(sum / state.vehicles.len() as f64)
}

/// Mean of velocity over fuel rate, in miles per gallon.
pub fn mpg_reward(
    state: &TrafficState,
    accelerations: &[f64],
    model: &FuelModel,
) -> Result<f64> {
    let n = state.vehicles.len();
    if n == 0 {
        return Err(Error::EmptyState);
    }
    if accelerations.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: accelerations.len(),
        });
    }
    let mut sum = 0.0;
    for (veh, &accel) in state.vehicles.iter().zip(accelerations) {
        let g = model.rate(veh.velocity, accel);
        sum += veh.velocity / g;
    }
    Ok(sum / (METERS_PER_MILE * n as f64))
}

/// Magnitude of the action change between consecutive steps.
pub fn jerk_penalty(action: f64, prev_action: f64) -> f64 {
    (action - prev_action).abs()
}

/// The individual reward terms, kept around for logging and ablation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardTerms {
    pub velocity: f64,
    pub mpg: f64,
    pub jerk: f64,
}

impl RewardTerms {
    pub fn combine(&self, weights: &RewardWeights) -> f64 {
        weights.velocity * self.velocity + weights.fuel * self.mpg - weights.jerk * self.jerk
    }
}

/// Computes every term of the combined reward.
pub fn reward_terms(
    state: &TrafficState,
    accelerations: &[f64],
    action: f64,
    prev_action: f64,
    model: &FuelModel,
) -> Result<RewardTerms> {
    Ok(RewardTerms {
        velocity: velocity_reward(state)?,
        mpg: mpg_reward(state, accelerations, model)?,
        jerk: jerk_penalty(action, prev_action),
    })
}

/// Weighted combination of the three reward terms.
pub fn combined_reward(
    state: &TrafficState,
    accelerations: &[f64],
    action: f64,
    prev_action: f64,
    weights: &RewardWeights,
    model: &FuelModel,
) -> Result<f64> {
    Ok(reward_terms(state, accelerations, action, prev_action, model)?.combine(weights))
}

/// Exact gradient of the combined reward with respect to the flattened state
/// `[x_0, v_0, ..]`, holding accelerations and actions fixed.
///
/// Positions never enter the reward, so every position slot is zero. Each
/// velocity slot gets `velocity_weight / n` from the flow term plus the
/// quotient-rule derivative of `v/g` from the fuel term; the jerk term does
/// not depend on state at all. At the idle-floor kink the active branch's
/// derivative is used.
pub fn reward_grad_state(
    state: &TrafficState,
    accelerations: &[f64],
    weights: &RewardWeights,
    model: &FuelModel,
) -> Result<Vec<f64>> {
    let n = state.vehicles.len();
    if n == 0 {
        return Err(Error::EmptyState);
    }
    if accelerations.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: accelerations.len(),
        });
    }
    let mut grad = vec![0.0; 2 * n];
    let n_f = n as f64;
    for (i, (veh, &accel)) in state.vehicles.iter().zip(accelerations).enumerate() {
        let g = model.rate(veh.velocity, accel);
        let dg = model.rate_grad_speed(veh.velocity, accel);
        let d_mpg = (g - veh.velocity * dg) / (g * g) / (METERS_PER_MILE * n_f);
        grad[2 * i + 1] = weights.velocity / n_f + weights.fuel * d_mpg;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::{Topology, VehicleState};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_with_velocities(velocities: &[f64]) -> TrafficState {
        let vehicles = velocities
            .iter()
            .enumerate()
            .map(|(i, &velocity)| VehicleState {
                position: 1000.0 - 20.0 * i as f64,
                velocity,
            })
            .collect();
        TrafficState::new(vehicles, Topology::OpenRoad)
    }

    #[test]
    fn velocity_reward_is_the_mean() {
        assert_relative_eq!(
            velocity_reward(&state_with_velocities(&[10.0, 20.0, 30.0])).unwrap(),
            20.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            velocity_reward(&state_with_velocities(&[7.0])).unwrap(),
            7.0,
            max_relative = 1e-15
        );
        assert_eq!(
            velocity_reward(&state_with_velocities(&[0.0, 0.0])).unwrap(),
            0.0
        );
    }

    #[test]
    fn velocity_reward_rejects_empty_state() {
        let state = TrafficState::new(Vec::new(), Topology::OpenRoad);
        assert!(velocity_reward(&state).is_err());
    }

    #[test]
    fn mpg_reward_hand_value() {
        // One vehicle at 16.09 m/s with the rate pinned to 1e-3 gal/s:
        // (16.09 / 1e-3) / 1609 = 10 mpg.
        let model = FuelModel {
            c0: 1e-3,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            c4: 0.0,
            idle_rate: 1e-3,
        };
        let state = state_with_velocities(&[16.09]);
        let mpg = mpg_reward(&state, &[0.0], &model).unwrap();
        assert!((mpg - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mpg_reward_zero_when_stationary() {
        let state = state_with_velocities(&[0.0, 0.0, 0.0]);
        let mpg = mpg_reward(&state, &[0.0; 3], &FuelModel::default()).unwrap();
        assert_eq!(mpg, 0.0);
    }

    #[test]
    fn mpg_reward_mean_of_equal_terms() {
        let model = FuelModel::default();
        let one = mpg_reward(&state_with_velocities(&[12.0]), &[0.5], &model).unwrap();
        let two = mpg_reward(&state_with_velocities(&[12.0, 12.0]), &[0.5, 0.5], &model).unwrap();
        assert_relative_eq!(one, two, max_relative = 1e-12);
    }

    #[test]
    fn jerk_penalty_basics() {
        assert_eq!(jerk_penalty(0.5, 0.5), 0.0);
        assert_eq!(jerk_penalty(1.0, 0.0), 1.0);
        assert_eq!(jerk_penalty(0.3, -0.4), jerk_penalty(-0.4, 0.3));
    }

    #[test]
    fn combined_reward_hand_value() {
        // velocity=1, fuel=0, jerk=1 on speeds [10,20,30] with a jump from
        // action 0 to 1: 20 - 1 = 19.
        let weights = RewardWeights {
            velocity: 1.0,
            fuel: 0.0,
            jerk: 1.0,
        };
        let state = state_with_velocities(&[10.0, 20.0, 30.0]);
        let r = combined_reward(&state, &[0.0; 3], 1.0, 0.0, &weights, &FuelModel::default())
            .unwrap();
        assert!((r - 19.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_reward() {
        let weights = RewardWeights {
            velocity: 0.0,
            fuel: 0.0,
            jerk: 0.0,
        };
        let state = state_with_velocities(&[10.0, 20.0]);
        let r = combined_reward(&state, &[0.0; 2], 2.0, -1.0, &weights, &FuelModel::default())
            .unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn zero_jerk_weight_ignores_actions() {
        let weights = RewardWeights {
            velocity: 1.0,
            fuel: 0.1,
            jerk: 0.0,
        };
        let state = state_with_velocities(&[10.0, 20.0]);
        let model = FuelModel::default();
        let a = combined_reward(&state, &[0.0; 2], 3.0, 0.0, &weights, &model).unwrap();
        let b = combined_reward(&state, &[0.0; 2], -3.0, 2.0, &weights, &model).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grad_pure_velocity_weights() {
        let weights = RewardWeights {
            velocity: 1.0,
            fuel: 0.0,
            jerk: 0.0,
        };
        let state = state_with_velocities(&[5.0, 10.0, 15.0, 20.0]);
        let grad =
            reward_grad_state(&state, &[0.0; 4], &weights, &FuelModel::default()).unwrap();
        for (k, &g) in grad.iter().enumerate() {
            if k % 2 == 1 {
                assert_relative_eq!(g, 0.25, max_relative = 1e-15);
            } else {
                assert_eq!(g, 0.0);
            }
        }
    }

    #[test]
    fn grad_zero_weights_is_zero_vector() {
        let weights = RewardWeights {
            velocity: 0.0,
            fuel: 0.0,
            jerk: 0.0,
        };
        let state = state_with_velocities(&[5.0, 10.0]);
        let grad =
            reward_grad_state(&state, &[0.0; 2], &weights, &FuelModel::default()).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn grad_matches_finite_differences() {
        let weights = RewardWeights::default();
        let model = FuelModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for _ in 0..50 {
            let n = rng.gen_range(1..8);
            let velocities: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..28.0)).collect();
            let accels: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let state = state_with_velocities(&velocities);
            let grad = reward_grad_state(&state, &accels, &weights, &model).unwrap();
            for slot in 0..2 * n {
                let mut plus = state.clone();
                let mut minus = state.clone();
                let mut flat = state.flatten();
                flat[slot] += h;
                plus.assign_flat(&flat).unwrap();
                flat[slot] -= 2.0 * h;
                minus.assign_flat(&flat).unwrap();
                let r_plus =
                    combined_reward(&plus, &accels, 0.7, 0.2, &weights, &model).unwrap();
                let r_minus =
                    combined_reward(&minus, &accels, 0.7, 0.2, &weights, &model).unwrap();
                let fd = (r_plus - r_minus) / (2.0 * h);
                assert!(
                    (grad[slot] - fd).abs() <= 1e-7,
                    "slot {slot}: analytical {} vs fd {fd}",
                    grad[slot]
                );
            }
        }
    }

    #[test]
    fn reward_is_permutation_invariant() {
        let weights = RewardWeights::default();
        let model = FuelModel::default();
        let a = combined_reward(
            &state_with_velocities(&[4.0, 9.0, 14.0]),
            &[0.1, 0.2, 0.3],
            0.0,
            0.0,
            &weights,
            &model,
        )
        .unwrap();
        let b = combined_reward(
            &state_with_velocities(&[14.0, 4.0, 9.0]),
            &[0.3, 0.1, 0.2],
            0.0,
            0.0,
            &weights,
            &model,
        )
        .unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn raising_a_velocity_never_lowers_the_flow_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let velocities: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..25.0)).collect();
            let state = state_with_velocities(&velocities);
            let base = velocity_reward(&state).unwrap();
            let mut bumped = state.clone();
            let k = rng.gen_range(0..5);
            bumped.vehicles[k].velocity += rng.gen_range(0.0..5.0);
            assert!(velocity_reward(&bumped).unwrap() >= base);
        }
    }
}
