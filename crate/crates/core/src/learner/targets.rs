//! TD(λ) regression targets over the shared bootstrap.
//!
//! The recursion runs backward through one episode:
//! G_t = r_t + γ·[(1−λ)·V̂_{t+1} + λ·G_{t+1}], with G at a terminal
//! transition equal to the reward alone. `bootstraps[t]` is the target-net
//! value of the trajectory slot *after* transition t.

/// λ = 0 gives one-step TD, λ = 1 the discounted Monte-Carlo return.
pub fn td_lambda_targets(
    rewards: &[f64],
    bootstraps: &[f64],
    terminal: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let len = rewards.len();
    assert_eq!(bootstraps.len(), len);
    assert_eq!(terminal.len(), len);
    let mut g = vec![0.0; len];
    let mut next: Option<f64> = None;
    for t in (0..len).rev() {
        g[t] = if terminal[t] {
            rewards[t]
        } else {
            let mixed = match next {
                Some(gn) => (1.0 - lambda) * bootstraps[t] + lambda * gn,
                // truncated tail: fall back to the pure bootstrap
                None => bootstraps[t],
            };
            rewards[t] + gamma * mixed
        };
        next = Some(g[t]);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_is_one_step_td() {
        let y = td_lambda_targets(&[1.0, 2.0, 3.0], &[10.0, 20.0, 0.0], &[false, false, true], 0.9, 0.0);
        assert_eq!(y[2], 3.0);
        assert!((y[1] - (2.0 + 0.9 * 20.0)).abs() < 1e-12);
        assert!((y[0] - (1.0 + 0.9 * 10.0)).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_is_discounted_monte_carlo() {
        let y = td_lambda_targets(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0], &[false, false, true], 0.9, 1.0);
        assert!((y[0] - (1.0 + 0.9 * (2.0 + 0.9 * 3.0))).abs() < 1e-12);
    }

    #[test]
    fn hand_recursion_two_step() {
        // r = (1, 2), terminal after the second transition, V̂₁ = 3
        // G₁ = 2; G₀ = 1 + γ(0.4·V̂₁ + 0.6·G₁)
        let (gamma, lambda) = (0.9, 0.6);
        let y = td_lambda_targets(&[1.0, 2.0], &[3.0, 0.0], &[false, true], gamma, lambda);
        assert_eq!(y[1], 2.0);
        let expect = 1.0 + gamma * (0.4 * 3.0 + 0.6 * 2.0);
        assert!((y[0] - expect).abs() < 1e-12, "{} vs {}", y[0], expect);
    }

    #[test]
    fn one_step_terminal_reduces_to_reward() {
        let y = td_lambda_targets(&[7.9], &[123.0], &[true], 0.99, 0.6);
        assert_eq!(y, vec![7.9]);
    }
}
