//! Vehicle fuel-rate model.
//!
//! Fuel burn in gallons per second as a cubic polynomial in speed plus a
//! positive-part acceleration term, floored at the idle rate so the rate is
//! always strictly positive. Coefficients are configuration with
//! order-of-magnitude realism for a passenger car, not calibrated truth.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Polynomial fuel-rate model: `max(idle, c0 + c1 v + c2 v^2 + c3 v^3 + c4 v max(accel, 0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuelModel {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Idle floor (gal/s); keeps every fuel rate strictly positive.
    pub idle_rate: f64,
}

impl Default for FuelModel {
    fn default() -> Self {
        FuelModel {
            c0: 1.64e-4,
            c1: 5e-6,
            c2: 0.0,
            c3: 1e-8,
            c4: 2e-5,
            idle_rate: 1.64e-4,
        }
    }
}

impl FuelModel {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.c0, self.c1, self.c2, self.c3, self.c4, self.idle_rate];
        if coeffs.iter().all(|c| c.is_finite()) && self.idle_rate > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("FuelModel {self:?}")))
        }
    }

    /// Fuel rate (gal/s) at the given speed and applied acceleration.
    ///
    /// Braking consumes no extra fuel: the acceleration term only engages for
    /// positive accelerations.
    pub fn rate(&self, speed: f64, accel: f64) -> f64 {
        let poly = self.c0
            + self.c1 * speed
            + self.c2 * speed * speed
            + self.c3 * speed * speed * speed
            + self.c4 * speed * accel.max(0.0);
        poly.max(self.idle_rate)
    }

    /// Derivative of the rate with respect to speed on the active branch.
    ///
    /// At the idle floor the rate is constant, so the derivative is zero; the
    /// tie at the kink resolves to the polynomial branch.
    pub fn rate_grad_speed(&self, speed: f64, accel: f64) -> f64 {
        let poly = self.c0
            + self.c1 * speed
            + self.c2 * speed * speed
            + self.c3 * speed * speed * speed
            + self.c4 * speed * accel.max(0.0);
        if poly >= self.idle_rate {
            self.c1 + 2.0 * self.c2 * speed + 3.0 * self.c3 * speed * speed
                + self.c4 * accel.max(0.0)
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn idle_floor_at_rest() {
        let m = FuelModel::default();
        assert_relative_eq!(m.rate(0.0, 0.0), 1.64e-4, max_relative = 1e-12);
    }

    #[test]
    fn hand_value_at_ten_mps() {
        let m = FuelModel::default();
        // 1.64e-4 + 5e-5 + 1e-5 = 2.24e-4
        assert_relative_eq!(m.rate(10.0, 0.0), 2.24e-4, max_relative = 1e-12);
    }

    #[test]
    fn braking_burns_no_extra_fuel() {
        let m = FuelModel::default();
        assert_eq!(m.rate(10.0, -2.0), m.rate(10.0, 0.0));
    }

    #[test]
    fn rate_never_below_idle() {
        let m = FuelModel {
            c0: 0.0,
            c1: -1e-3,
            ..FuelModel::default()
        };
        for v in [0.0, 1.0, 5.0, 30.0] {
            assert!(m.rate(v, 0.0) >= m.idle_rate);
        }
    }

    #[test]
    fn speed_gradient_matches_central_differences() {
        let m = FuelModel::default();
        let h = 1e-6;
        for &(v, a) in &[(3.0, 0.5), (12.0, 0.0), (25.0, -1.0), (8.0, 2.0)] {
            let fd = (m.rate(v + h, a) - m.rate(v - h, a)) / (2.0 * h);
            assert_relative_eq!(m.rate_grad_speed(v, a), fd, epsilon = 1e-8);
        }
    }
}
