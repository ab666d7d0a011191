//! Generalized advantage estimation.

/// Backward recursion. A `done` step is terminal: its successor value is ignored
/// and the advantage trace restarts.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && next_values.len() == n && dones.len() == n);
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Mean-zero, unit-variance rescaling. When the spread is negligible, only the mean is removed.
pub fn normalize(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 1e-8 {
            *a /= std;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[0.0], &[true], 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn three_step_episode() {
        let (a, _) = compute_gae(&[1.0; 3], &[0.0; 3], &[0.0; 3], &[false, false, true], 0.99, 0.95);
        let g = 0.99 * 0.95;
        assert!((a[0] - (1.0 + g + g * g)).abs() < 1e-15);
        assert!((a[0] - 2.825_040_25).abs() < 1e-8);
    }

    #[test]
    fn lambda_zero_is_td_residual() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3];
        let nv = [0.2, 0.3, 0.0];
        let (a, _) = compute_gae(&r, &v, &nv, &[false, false, true], 0.9, 0.0);
        assert!((a[0] - (0.5 + 0.9 * 0.2 - 0.1)).abs() < 1e-15);
        assert!((a[2] - (2.0 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn gamma_zero() {
        let (a, _) = compute_gae(&[3.0, 4.0], &[1.0, 1.5], &[9.0, 9.0], &[false, true], 0.0, 0.95);
        assert_eq!(a, vec![2.0, 2.5]);
    }

    #[test]
    fn lambda_one_zero_values_is_reward_to_go() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (a, _) = compute_gae(&r, &[0.0; 4], &[0.0; 4], &[false, false, false, true], 0.9, 1.0);
        for t in 0..4 {
            let want: f64 = (t..4).map(|k| 0.9f64.powi((k - t) as i32) * r[k]).sum();
            assert!((a[t] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_guard() {
        let mut a = vec![2.0; 5];
        normalize(&mut a);
        assert_eq!(a, vec![0.0; 5]);
        let mut b = vec![1.0, 2.0, 3.0];
        normalize(&mut b);
        let m: f64 = b.iter().sum::<f64>() / 3.0;
        let v: f64 = b.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
    }
}
