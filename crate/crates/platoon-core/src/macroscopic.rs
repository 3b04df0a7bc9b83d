//! Running statistics over the platoon prefix and the two-state filter
//! each vehicle drives with them.
//!
//! Vehicle i sees the mean and variance of the spacing and closing-speed
//! signals of vehicles 0..i. Those statistics enter the control loop only
//! through the pair (psi_dp, psi_dv), a signed standard deviation, and
//! through the filter states (rho1, rho2) that low-pass the pair.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Weights of the macroscopic coupling and the filter time constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroWeights {
    pub gamma_dp: f64,
    pub gamma_dv: f64,
    pub a: f64,
    pub b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl MacroWeights {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, ok: bool, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: reason.to_string(),
                })
            }
        };
        check("gamma_dp", self.gamma_dp > 0.0, "must be > 0")?;
        check("gamma_dv", self.gamma_dv > 0.0, "must be > 0")?;
        check("a", self.a >= 0.0, "must be >= 0")?;
        check("b", self.b >= 0.0, "must be >= 0")?;
        check("lambda1", self.lambda1 > 0.0, "must be > 0")?;
        check("lambda2", self.lambda2 > 0.0, "must be > 0")?;
        Ok(())
    }
}

/// Prefix statistics and coupling signals for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroSignals {
    pub psi_dp: f64,
    pub psi_dv: f64,
    pub mu_dp: f64,
    pub sigma2_dp: f64,
    pub mu_dv: f64,
    pub sigma2_dv: f64,
}

/// Population mean and variance over `values[0..=upto]` (divisor `upto + 1`).
///
/// Two-pass evaluation: the mean is computed first, then the centered
/// second moment. The one-pass expansion loses all significant digits when
/// the values are large compared to their spread, and the spurious spread
/// it reports gets amplified by the closed loop.
pub fn prefix_mean_variance(values: &[f64], upto: usize) -> Result<(f64, f64)> {
    if upto >= values.len() {
        return Err(Error::IndexOutOfRange {
            index: upto,
            len: values.len(),
        });
    }
    let n = (upto + 1) as f64;
    let mean = values[..=upto].iter().sum::<f64>() / n;
    let var = values[..=upto]
        .iter()
        .map(|x| {
            let d = x - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok((mean, var.max(0.0)))
}

/// The three-valued sign: -1, 0, or 1.
pub fn sign(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else if y < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Signed spacing spread over the prefix `dp[0..=i]`:
/// `gamma_dp * sign(dp_bar + mean) * sqrt(variance)`.
///
/// `i < 0` denotes the empty prefix ahead of the head vehicle and yields 0.
pub fn psi_dp(dp: &[f64], dp_bar: f64, w: &MacroWeights, i: isize) -> Result<f64> {
    if i < 0 {
        return Ok(0.0);
    }
    let (mu, sigma2) = prefix_mean_variance(dp, i as usize)?;
    Ok(w.gamma_dp * sign(dp_bar + mu) * sigma2.sqrt())
}

/// Signed closing-speed spread over the prefix `dv[0..=i]`:
/// `gamma_dv * sign(mean) * sqrt(variance)`. `i < 0` yields 0.
pub fn psi_dv(dv: &[f64], w: &MacroWeights, i: isize) -> Result<f64> {
    if i < 0 {
        return Ok(0.0);
    }
    let (mu, sigma2) = prefix_mean_variance(dv, i as usize)?;
    Ok(w.gamma_dv * sign(mu) * sigma2.sqrt())
}

/// Full prefix statistics for vehicle `i`, computed once per step so every
/// consumer sees the same values.
pub fn prefix_signals(
    dp: &[f64],
    dv: &[f64],
    dp_bar: f64,
    w: &MacroWeights,
    i: usize,
) -> Result<MacroSignals> {
    let (mu_dp, sigma2_dp) = prefix_mean_variance(dp, i)?;
    let (mu_dv, sigma2_dv) = prefix_mean_variance(dv, i)?;
    Ok(MacroSignals {
        psi_dp: w.gamma_dp * sign(dp_bar + mu_dp) * sigma2_dp.sqrt(),
        psi_dv: w.gamma_dv * sign(mu_dv) * sigma2_dv.sqrt(),
        mu_dp,
        sigma2_dp,
        mu_dv,
        sigma2_dv,
    })
}

/// Time derivative of the filter pair driven by the predecessor's signals:
/// `(-lambda1*rho1 + rho2, -lambda2*rho2 + a*psi_dp_prev + b*psi_dv_prev)`.
pub fn rho_derivative(
    rho1: f64,
    rho2: f64,
    psi_dp_prev: f64,
    psi_dv_prev: f64,
    w: &MacroWeights,
) -> (f64, f64) {
    (
        -w.lambda1 * rho1 + rho2,
        -w.lambda2 * rho2 + w.a * psi_dp_prev + w.b * psi_dv_prev,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn w_baseline() -> MacroWeights {
        MacroWeights {
            gamma_dp: 0.5,
            gamma_dv: 0.5,
            a: 0.2,
            b: 1.0,
            lambda1: 1.5,
            lambda2: 1.5,
        }
    }

    #[test]
    fn constant_sequence_has_zero_variance() {
        let (mu, var) = prefix_mean_variance(&[-10.0, -10.0, -10.0], 2).unwrap();
        assert_eq!((mu, var), (-10.0, 0.0));
    }

    #[test]
    fn two_point_stats() {
        let (mu, var) = prefix_mean_variance(&[-12.0, -10.0], 1).unwrap();
        assert_eq!((mu, var), (-11.0, 1.0));
    }

    #[test]
    fn singleton_stats() {
        let (mu, var) = prefix_mean_variance(&[5.0], 0).unwrap();
        assert_eq!((mu, var), (5.0, 0.0));
    }

    #[test]
    fn prefix_index_out_of_range() {
        assert!(matches!(
            prefix_mean_variance(&[1.0, 2.0], 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn sign_is_three_valued() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-3.2), -1.0);
        assert_eq!(sign(1e-300), 1.0);
    }

    #[test]
    fn psi_dp_zero_at_uniform_spacing() {
        let w = w_baseline();
        let dp = [-10.0; 5];
        for i in 0..5 {
            assert_eq!(psi_dp(&dp, 10.0, &w, i as isize).unwrap(), 0.0);
        }
    }

    #[test]
    fn psi_dp_two_vehicle_example() {
        let w = w_baseline();
        let v = psi_dp(&[-12.0, -10.0], 10.0, &w, 1).unwrap();
        assert_relative_eq!(v, -0.5, max_relative = 1e-15);
    }

    #[test]
    fn psi_empty_prefix_is_zero() {
        let w = w_baseline();
        assert_eq!(psi_dp(&[], 10.0, &w, -1).unwrap(), 0.0);
        assert_eq!(psi_dv(&[], &w, -1).unwrap(), 0.0);
    }

    #[test]
    fn psi_dv_two_vehicle_example() {
        let w = w_baseline();
        let v = psi_dv(&[1.0, -2.0], &w, 1).unwrap();
        assert_relative_eq!(v, -0.75, max_relative = 1e-15);
    }

    #[test]
    fn rho_derivative_rest_point() {
        assert_eq!(
            rho_derivative(0.0, 0.0, 0.0, 0.0, &w_baseline()),
            (0.0, 0.0)
        );
    }

    #[test]
    fn rho_derivative_unforced_example() {
        let (d1, d2) = rho_derivative(1.0, 2.0, 0.0, 0.0, &w_baseline());
        assert_relative_eq!(d1, 0.5, max_relative = 1e-15);
        assert_relative_eq!(d2, -3.0, max_relative = 1e-15);
    }

    #[test]
    fn rho_derivative_forced_example() {
        let (d1, d2) = rho_derivative(0.0, 0.0, -0.5, -0.75, &w_baseline());
        assert_eq!(d1, 0.0);
        assert_relative_eq!(d2, -0.85, max_relative = 1e-15);
    }

    #[test]
    fn signals_match_scalar_paths() {
        let w = w_baseline();
        let dp = [-12.0, -10.0, -9.5];
        let dv = [1.0, -2.0, 0.25];
        for i in 0..3 {
            let s = prefix_signals(&dp, &dv, 10.0, &w, i).unwrap();
            assert_eq!(s.psi_dp, psi_dp(&dp, 10.0, &w, i as isize).unwrap());
            assert_eq!(s.psi_dv, psi_dv(&dv, &w, i as isize).unwrap());
        }
    }

    proptest! {
        #[test]
        fn variance_bounded_by_quarter_range_squared(
            values in proptest::collection::vec(-200.0f64..200.0, 1..40),
        ) {
            let i = values.len() - 1;
            let (_, var) = prefix_mean_variance(&values, i).unwrap();
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let bound = 0.25 * (max - min) * (max - min);
            prop_assert!(var <= bound + 1e-12 * bound.max(1.0));
        }

        #[test]
        fn variance_is_translation_invariant(
            values in proptest::collection::vec(-100.0f64..100.0, 1..30),
            c in -1000.0f64..1000.0,
        ) {
            let i = values.len() - 1;
            let (_, var) = prefix_mean_variance(&values, i).unwrap();
            let shifted: Vec<f64> = values.iter().map(|x| x + c).collect();
            let (_, var_shifted) = prefix_mean_variance(&shifted, i).unwrap();
            prop_assert!((var - var_shifted).abs() <= 1e-9 * var.max(1.0));
        }

        #[test]
        fn coupling_bounded_by_peak_deviation(
            rows in proptest::collection::vec(
                (-30.0f64..30.0, -10.0f64..10.0, -5.0f64..5.0, -5.0f64..5.0),
                1..20,
            ),
            dp_bar in 1.0f64..30.0,
        ) {
            let w = w_baseline();
            let dp: Vec<f64> = rows.iter().map(|r| r.0 - dp_bar).collect();
            let dv: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let i = rows.len() - 1;
            let pdp = psi_dp(&dp, dp_bar, &w, i as isize).unwrap();
            let pdv = psi_dv(&dv, &w, i as isize).unwrap();
            let max_norm = rows
                .iter()
                .map(|r| (r.0 * r.0 + r.1 * r.1 + r.2 * r.2 + r.3 * r.3).sqrt())
                .fold(0.0f64, f64::max);
            let lhs = w.a * pdp.abs() + w.b * pdv.abs();
            let rhs = (w.a * w.gamma_dp + w.b * w.gamma_dv) * max_norm;
            prop_assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn coupling_bounded_by_prefix_sum(
            rows in proptest::collection::vec(
                (-30.0f64..30.0, -10.0f64..10.0, -5.0f64..5.0, -5.0f64..5.0),
                1..20,
            ),
            dp_bar in 1.0f64..30.0,
        ) {
            let w = w_baseline();
            let dp: Vec<f64> = rows.iter().map(|r| r.0 - dp_bar).collect();
            let dv: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let i = rows.len() - 1;
            let pdp = psi_dp(&dp, dp_bar, &w, i as isize).unwrap();
            let pdv = psi_dv(&dv, &w, i as isize).unwrap();
            let norm_sum: f64 = rows
                .iter()
                .map(|r| (r.0 * r.0 + r.1 * r.1 + r.2 * r.2 + r.3 * r.3).sqrt())
                .sum();
            let lhs = w.a * pdp.abs() + w.b * pdv.abs();
            let coeff = 2.0 / ((i as f64 + 1.0).sqrt())
                * (w.a * w.gamma_dp).max(w.b * w.gamma_dv);
            let rhs = coeff * norm_sum;
            prop_assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
        }
    }
}
