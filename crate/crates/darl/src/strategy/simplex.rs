//! Euclidean projection onto the probability simplex via the sorted
//! threshold rule: find the largest support size whose water level keeps
//! every supported coordinate positive, then shift and clip.

/// Returns the unique nearest point of the simplex to `v`.
pub fn project_euclidean(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("non-finite input"));
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - 1.0) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force sorted-threshold oracle: tries every support size and
    /// keeps the one satisfying the optimality conditions.
    pub(crate) fn project_oracle(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut sorted = v.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut prefix = 0.0;
        let mut thetas = Vec::with_capacity(n);
        for (j, &u) in sorted.iter().enumerate() {
            prefix += u;
            thetas.push((prefix - 1.0) / (j as f64 + 1.0));
        }
        for k in (1..=n).rev() {
            let theta = thetas[k - 1];
            let ok_support = sorted[k - 1] - theta > 0.0;
            let ok_rest = k == n || sorted[k] - theta <= 0.0;
            if ok_support && ok_rest {
                return v.iter().map(|x| (x - theta).max(0.0)).collect();
            }
        }
        unreachable!("projection always has a valid support size");
    }

    #[test]
    fn already_on_simplex_is_fixed() {
        let w = project_euclidean(&[0.2, 0.3, 0.5]);
        assert!((w[0] - 0.2).abs() < 1e-15);
        assert!((w[1] - 0.3).abs() < 1e-15);
        assert!((w[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_hand_example() {
        // [23, -22] projects to [1, 0].
        let w = project_euclidean(&[23.0, -22.0]);
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn all_negative_input() {
        let w = project_euclidean(&[-5.0, -3.0]);
        assert_eq!(w, vec![0.0, 1.0]);
    }

    #[test]
    fn matches_oracle_exactly_on_many_vectors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.random_range(1..12);
            let v: Vec<f64> = (0..n).map(|_| 20.0 * (rng.random::<f64>() - 0.5)).collect();
            assert_eq!(project_euclidean(&v), project_oracle(&v));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn prop_output_is_on_simplex(v in proptest::collection::vec(-10.0f64..10.0, 1..10)) {
            let w = project_euclidean(&v);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        // The projection is the nearest simplex point: no random simplex
        // vector may be closer.
        #[test]
        fn prop_projection_is_nearest(
            v in proptest::collection::vec(-5.0f64..5.0, 2..8),
            probe in proptest::collection::vec(0.01f64..1.0, 2..8),
        ) {
            prop_assume!(v.len() == probe.len());
            let w = project_euclidean(&v);
            let total: f64 = probe.iter().sum();
            let q: Vec<f64> = probe.iter().map(|p| p / total).collect();
            let d = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
            };
            prop_assert!(d(&w, &v) <= d(&q, &v) + 1e-12);
        }
    }
}
