use crate::error::{Error, Result};

/// Generalized advantage estimation by the backward recursion
/// `A_t = delta_t + gamma * lambda * A_{t+1}`, with
/// `delta_t = r_t + gamma * V_{t+1} - V_t`.
///
/// `values` carries one entry per reward plus the bootstrap value of the
/// state after the last reward (zero for terminal endings). Returns
/// `(advantages, returns)` where `returns = advantages + values`.
pub fn compute_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::config(format!(
            "GAE needs {} values (one per reward plus bootstrap), got {}",
            rewards.len() + 1,
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_hand_recursion() {
        let (adv, ret) = compute_gae(&[1.0, 1.0], &[0.0, 0.0, 0.0], 0.9, 0.95).unwrap();
        assert!((adv[0] - 1.855).abs() < 1e-12);
        assert!((adv[1] - 1.0).abs() < 1e-12);
        assert_eq!(adv, ret);
    }

    #[test]
    fn lambda_zero_is_td_residual() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, -0.3, 0.7];
        let (adv, _) = compute_gae(&r, &v, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert_eq!(adv[t], r[t] + 0.9 * v[t + 1] - v[t]);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0, 0.0], 0.9, 0.95).is_err());
    }
}
