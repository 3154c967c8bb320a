mod common;

use common::{all_specs, random_spd, rel_close, rel_err};
use proptest::prelude::*;
use wishart_minors::{
    minor_mean, minor_variance, variance_via_decomposition, CovarianceMatrix, IndexSet,
    MinorSpec, WishartModel,
};

fn spec_strategy() -> impl Strategy<Value = (usize, u64, Vec<usize>, Vec<usize>)> {
    (2usize..=6, any::<u64>()).prop_flat_map(|(r, seed)| {
        (1..=r.min(3)).prop_flat_map(move |m| {
            (
                Just(r),
                Just(seed),
                prop::sample::subsequence((0..r).collect::<Vec<_>>(), m),
                prop::sample::subsequence((0..r).collect::<Vec<_>>(), m),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn swap_symmetry((r, seed, rows, cols) in spec_strategy(), n in 1u64..=10) {
        let model = WishartModel::new(n, random_spd(r, seed)).unwrap();
        let spec = MinorSpec::from_indices(&rows, &cols, r).unwrap();
        let a = minor_variance(&model, &spec).unwrap().variance;
        let b = minor_variance(&model, &spec.swapped()).unwrap().variance;
        prop_assert!(rel_close(a, b, 1e-12), "{a} vs {b}");
    }

    #[test]
    fn scaling_law((r, seed, rows, cols) in spec_strategy(), n in 1u64..=10, lambda in 0.1f64..5.0) {
        let sigma = random_spd(r, seed);
        let spec = MinorSpec::from_indices(&rows, &cols, r).unwrap();
        let m = spec.order() as i32;
        let base = WishartModel::new(n, sigma.clone()).unwrap();
        let scaled = WishartModel::new(n, sigma.scaled(lambda).unwrap()).unwrap();
        let mean = minor_mean(&base, &spec).unwrap();
        let var = minor_variance(&base, &spec).unwrap().variance;
        prop_assert!(rel_close(minor_mean(&scaled, &spec).unwrap(), mean * lambda.powi(m), 1e-10));
        prop_assert!(rel_close(minor_variance(&scaled, &spec).unwrap().variance, var * lambda.powi(2 * m), 1e-10));
    }

    #[test]
    fn permutation_equivariance(
        (r, seed, rows, cols) in spec_strategy(),
        n in 1u64..=10,
        shuffle in any::<u64>(),
    ) {
        let sigma = random_spd(r, seed);
        // Fisher–Yates driven by `shuffle`
        let mut perm: Vec<usize> = (0..r).collect();
        let mut state = shuffle;
        for i in (1..r).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let spec = MinorSpec::from_indices(&rows, &cols, r).unwrap();
        let moved_rows: Vec<usize> = rows.iter().map(|&i| perm[i]).collect();
        let moved_cols: Vec<usize> = cols.iter().map(|&i| perm[i]).collect();
        let moved = MinorSpec::from_indices(&moved_rows, &moved_cols, r).unwrap();
        let base = minor_variance(&WishartModel::new(n, sigma.clone()).unwrap(), &spec).unwrap().variance;
        let permuted = minor_variance(&WishartModel::new(n, sigma.permuted(&perm).unwrap()).unwrap(), &moved).unwrap().variance;
        prop_assert!(rel_close(permuted, base, 1e-10), "{permuted} vs {base}");
    }

    #[test]
    fn decomposition_route_agrees((r, seed, rows, cols) in spec_strategy(), n in 1u64..=12) {
        let model = WishartModel::new(n, random_spd(r, seed)).unwrap();
        let spec = MinorSpec::from_indices(&rows, &cols, r).unwrap();
        prop_assume!(spec.overlap() == spec.order() || n > spec.overlap() as u64);
        let direct = minor_variance(&model, &spec).unwrap().variance;
        let routed = variance_via_decomposition(&model, &spec).unwrap();
        prop_assert!(rel_close(routed, direct, 1e-10), "{routed} vs {direct}");
    }

    #[test]
    fn marginalization_invariance((r, seed, rows, cols) in spec_strategy(), n in 1u64..=10) {
        // The minor only sees coordinates in I ∪ J.
        let sigma = random_spd(r, seed);
        let spec = MinorSpec::from_indices(&rows, &cols, r).unwrap();
        let support = spec.rows().union(spec.cols());
        let marginal = sigma.principal(&support).unwrap();
        let pos = |i: usize| support.as_slice().binary_search(&i).unwrap();
        let local = MinorSpec::from_indices(
            &rows.iter().map(|&i| pos(i)).collect::<Vec<_>>(),
            &cols.iter().map(|&i| pos(i)).collect::<Vec<_>>(),
            support.len(),
        ).unwrap();
        let full = minor_variance(&WishartModel::new(n, sigma).unwrap(), &spec).unwrap().variance;
        let reduced = minor_variance(&WishartModel::new(n, marginal).unwrap(), &local).unwrap().variance;
        prop_assert!(rel_close(full, reduced, 1e-10), "{full} vs {reduced}");
    }
}

#[test]
fn nonnegative_variance_battery() {
    for r in 2..=5 {
        let sigma = random_spd(r, 100 + r as u64);
        for m in 1..=r.min(3) {
            for spec in all_specs(r, m) {
                for n in m as u64..=12 {
                    let model = WishartModel::new(n, sigma.clone()).unwrap();
                    let report = minor_variance(&model, &spec).unwrap();
                    let bound = -1e-8 * report.mean.powi(2).max(1.0);
                    assert!(report.variance >= bound, "{spec:?} n={n}: {}", report.variance);
                }
            }
        }
    }
}

#[test]
fn rank_deficient_minors_vanish_exactly() {
    for r in 2..=5 {
        let sigma = random_spd(r, 200 + r as u64);
        for m in 2..=r.min(3) {
            for spec in all_specs(r, m) {
                for n in 1..m as u64 {
                    let model = WishartModel::new(n, sigma.clone()).unwrap();
                    assert_eq!(minor_mean(&model, &spec).unwrap(), 0.0);
                    assert_eq!(minor_variance(&model, &spec).unwrap().variance, 0.0);
                }
            }
        }
    }
}

#[test]
fn classical_entry_identities() {
    for seed in 0..20 {
        let sigma = random_spd(4, 300 + seed);
        for n in 1..=12u64 {
            let model = WishartModel::new(n, sigma.clone()).unwrap();
            let nf = n as f64;
            for i in 0..4 {
                for j in 0..4 {
                    let spec = MinorSpec::from_indices(&[i], &[j], 4).unwrap();
                    let var = minor_variance(&model, &spec).unwrap().variance;
                    let want = if i == j {
                        2.0 * nf * sigma.get(i, i).powi(2)
                    } else {
                        nf * (sigma.get(i, i) * sigma.get(j, j) + sigma.get(i, j).powi(2))
                    };
                    assert!(rel_err(var, want) <= 1e-12, "({i},{j}) n={n}: {var} vs {want}");
                }
            }
        }
    }
}

#[test]
fn conditional_model_reindexing() {
    // I = {0, 4}, J = {2, 4}: C = {4} sits after Ī and J̄, so Σ̄'s coordinates
    // are a genuine relabeling.
    let sigma = random_spd(5, 77);
    let model = WishartModel::new(6, sigma).unwrap();
    let spec = MinorSpec::new(
        IndexSet::new(vec![0, 4], 5).unwrap(),
        IndexSet::new(vec![2, 4], 5).unwrap(),
    )
    .unwrap();
    let direct = minor_variance(&model, &spec).unwrap().variance;
    let routed = variance_via_decomposition(&model, &spec).unwrap();
    assert!(rel_close(direct, routed, 1e-10));
}

#[test]
fn identity_scale_example() {
    let model = WishartModel::new(5, CovarianceMatrix::identity(3)).unwrap();
    let spec = MinorSpec::from_indices(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
    assert_eq!(minor_mean(&model, &spec).unwrap(), 60.0);
}
