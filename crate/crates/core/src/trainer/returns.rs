use super::Trajectory;

/// `G_t = R_t + gamma * G_{t+1}` with `G_T = 0`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *o = g;
    }
    out
}

/// Per-agent Monte-Carlo returns of a `T x n` reward table.
pub fn monte_carlo_returns(rewards: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = rewards.iter().map(|r| vec![0.0; r.len()]).collect();
    let Some(first) = rewards.first() else {
        return out;
    };
    let mut g = vec![0.0; first.len()];
    for (row, r) in out.iter_mut().zip(rewards).rev() {
        for i in 0..g.len() {
            g[i] = r[i] + gamma * g[i];
            row[i] = g[i];
        }
    }
    out
}

/// `A^i_t = G^i_t - V^i_t`, not normalised.
pub fn individual_advantages(traj: &Trajectory, gamma: f64) -> Vec<Vec<f64>> {
    let returns = monte_carlo_returns(&traj.rewards, gamma);
    returns.iter().zip(&traj.values).map(|(g, v)| g.iter().zip(v).map(|(g, v)| g - v).collect()).collect()
}

/// Shifts to zero mean and scales to unit variance. A (near) constant batch
/// is only centred.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    for v in values {
        *v = (*v - mean) * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_steps_of_minus_one() {
        let g = discounted_returns(&[-1.0, -1.0, -1.0], 0.99);
        assert!((g[0] + 2.9701).abs() < 1e-12);
        assert!((g[1] + 1.99).abs() < 1e-12);
        assert_eq!(g[2], -1.0);
    }

    #[test]
    fn zero_discount_is_identity() {
        let r = [0.5, -2.0, 3.0];
        assert_eq!(discounted_returns(&r, 0.0), r.to_vec());
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let t = rng.gen_range(1..60);
            let gamma = rng.gen_range(0.0..1.0);
            let r: Vec<f64> = (0..t).map(|_| rng.gen_range(-2.0..1.0)).collect();
            let g = discounted_returns(&r, gamma);
            for s in 0..t {
                let direct: f64 = (s..t).map(|k| gamma.powi((k - s) as i32) * r[k]).sum();
                assert!((g[s] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn per_agent_columns_are_independent() {
        let table = vec![vec![1.0, -1.0], vec![2.0, 0.0], vec![3.0, -4.0]];
        let g = monte_carlo_returns(&table, 0.5);
        let col0 = discounted_returns(&[1.0, 2.0, 3.0], 0.5);
        let col1 = discounted_returns(&[-1.0, 0.0, -4.0], 0.5);
        for t in 0..3 {
            assert_eq!(g[t], vec![col0[t], col1[t]]);
        }
        assert!(monte_carlo_returns(&[], 0.9).is_empty());
    }

    #[test]
    fn normalize_standardises() {
        let mut v = vec![1.0, 2.0, 3.0, 4.0];
        normalize(&mut v);
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-12);
        let mut c = vec![2.0; 3];
        normalize(&mut c);
        assert_eq!(c, vec![0.0; 3]);
    }
}
