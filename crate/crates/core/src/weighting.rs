//! Per-sample loss weighting rules.
//!
//! The recognizer-based rule gives weight `w_high` to joint actions whose
//! Q_r sits within slack `C` of Q_r(â) — the potentially optimal set — and
//! `w_low` to everything else. The optimistic and central rules are the
//! established baselines; uniform weighting recovers the plain monotonic
//! learner. All weight computations are pure functions of detached values.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Uniform,
    /// Potentially-optimal weighting from the recognizer.
    Pow,
    /// Optimistic weighting: underestimation gets `w_high`.
    Ow,
    /// Central weighting: the greedy action or targets above the central
    /// estimate get `w_high`.
    Cw,
}

impl std::str::FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightKind::Uniform),
            "pow" => Ok(WeightKind::Pow),
            "ow" => Ok(WeightKind::Ow),
            "cw" => Ok(WeightKind::Cw),
            other => Err(Error::InvalidConfig(format!(
                "unknown weighting kind `{other}` (expected uniform|pow|ow|cw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightingConfig {
    pub kind: WeightKind,
    pub w_high: f64,
    pub w_low: f64,
    /// Slack constant C stabilizing membership of the potentially optimal
    /// set; must be ≥ 0.
    pub slack: f64,
}

impl WeightingConfig {
    pub fn uniform() -> Self {
        WeightingConfig {
            kind: WeightKind::Uniform,
            w_high: 1.0,
            w_low: 1.0,
            slack: 0.0,
        }
    }

    pub fn pow(w_high: f64, w_low: f64, slack: f64) -> Self {
        WeightingConfig {
            kind: WeightKind::Pow,
            w_high,
            w_low,
            slack,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_high >= self.w_low && self.w_low >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weights must satisfy w_high ≥ w_low ≥ 0, got ({}, {})",
                self.w_high, self.w_low
            )));
        }
        if self.slack < 0.0 {
            return Err(Error::InvalidConfig(format!("slack must be ≥ 0, got {}", self.slack)));
        }
        Ok(())
    }
}

/// w = w_high if Q_r(τ,a) ≥ Q_r(τ,â) − C, else w_low.
pub fn pow_weights(qr_values: &[f64], qr_at_ahat: &[f64], cfg: &WeightingConfig) -> Vec<f64> {
    qr_values
        .iter()
        .zip(qr_at_ahat)
        .map(|(q, qa)| {
            if *q >= qa - cfg.slack {
                cfg.w_high
            } else {
                cfg.w_low
            }
        })
        .collect()
}

/// Membership of the potentially optimal set under the C-slack rule.
pub fn membership_mask_ar(qr_values: &[f64], qr_at_ahat: f64, slack: f64) -> Vec<bool> {
    qr_values.iter().map(|q| *q >= qr_at_ahat - slack).collect()
}

/// Optimistic rule: w_high on strict underestimation Q_tot < y, else w_low.
pub fn ow_weights(qtot_values: &[f64], targets: &[f64], cfg: &WeightingConfig) -> Vec<f64> {
    qtot_values
        .iter()
        .zip(targets)
        .map(|(q, y)| if *q < *y { cfg.w_high } else { cfg.w_low })
        .collect()
}

/// Central rule: w_high when the sampled action is â or when the target
/// exceeds the central estimate at â, else w_low.
pub fn cw_weights(
    targets: &[f64],
    qhat_at_ahat: &[f64],
    sampled_is_ahat: &[bool],
    cfg: &WeightingConfig,
) -> Vec<f64> {
    targets
        .iter()
        .zip(qhat_at_ahat)
        .zip(sampled_is_ahat)
        .map(|((y, qh), is_ahat)| {
            if *is_ahat || *y > *qh {
                cfg.w_high
            } else {
                cfg.w_low
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pow_cfg() -> WeightingConfig {
        WeightingConfig::pow(5.0, 0.0, 0.05)
    }

    #[test]
    fn pow_equal_qr_gets_high_weight() {
        let w = pow_weights(&[8.0], &[8.0], &pow_cfg());
        assert_eq!(w, vec![5.0]);
    }

    #[test]
    fn pow_far_below_gets_low_weight() {
        let w = pow_weights(&[0.0], &[8.0], &pow_cfg());
        assert_eq!(w, vec![0.0]);
    }

    #[test]
    fn pow_boundary_within_slack_is_high() {
        // 7.96 ≥ 8 − 0.05
        let w = pow_weights(&[7.96, 7.94], &[8.0, 8.0], &pow_cfg());
        assert_eq!(w, vec![5.0, 0.0]);
    }

    #[test]
    fn pow_ahat_always_high_and_infinite_slack_degenerates() {
        let cfg = WeightingConfig::pow(5.0, 0.0, f64::INFINITY);
        let w = pow_weights(&[-100.0, 3.0], &[8.0, 8.0], &cfg);
        assert_eq!(w, vec![5.0, 5.0]);
        // â itself: Q_r(â) ≥ Q_r(â) − C for any C ≥ 0
        let w = pow_weights(&[8.0], &[8.0], &WeightingConfig::pow(1.0, 0.0, 0.0));
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn pow_is_pure() {
        let cfg = pow_cfg();
        let a = pow_weights(&[1.0, 2.0, 3.0], &[2.5, 2.5, 2.5], &cfg);
        let b = pow_weights(&[1.0, 2.0, 3.0], &[2.5, 2.5, 2.5], &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn membership_mask_matches_rule() {
        let mask = membership_mask_ar(&[8.0, 7.96, 0.0, -12.0], 8.0, 0.05);
        assert_eq!(mask, vec![true, true, false, false]);
        let all = membership_mask_ar(&[1.0, 1.0, 1.0], 1.0, 0.0);
        assert_eq!(all, vec![true, true, true]);
    }

    #[test]
    fn ow_strict_underestimation_only() {
        let cfg = WeightingConfig {
            kind: WeightKind::Ow,
            w_high: 1.0,
            w_low: 0.1,
            slack: 0.0,
        };
        let w = ow_weights(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], &cfg);
        assert_eq!(w, vec![1.0, 0.1, 0.1]); // ties go low
    }

    #[test]
    fn cw_high_on_ahat_or_optimistic_target() {
        let cfg = WeightingConfig {
            kind: WeightKind::Cw,
            w_high: 1.0,
            w_low: 0.0,
            slack: 0.0,
        };
        let w = cw_weights(
            &[5.0, 5.0, 5.0],
            &[6.0, 6.0, 4.0],
            &[true, false, false],
            &cfg,
        );
        assert_eq!(w, vec![1.0, 0.0, 1.0]);
        // y equal to the central estimate is not "above" → low
        let w = cw_weights(&[6.0], &[6.0], &[false], &cfg);
        assert_eq!(w, vec![0.0]);
    }

    #[test]
    fn invalid_weight_order_rejected() {
        let cfg = WeightingConfig::pow(0.5, 1.0, 0.0);
        assert!(cfg.validate().is_err());
        assert!(WeightingConfig::pow(1.0, 0.0, -0.1).validate().is_err());
        assert!(pow_cfg().validate().is_ok());
    }
}
