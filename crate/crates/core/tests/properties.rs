use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use clustop_core::cluster::{dbscan, hdbscan, HdbscanParams};
use clustop_core::dimred::{EmbeddingMatrix, Stage};
use clustop_core::metrics::{ari, nmi, purity};
use clustop_core::topics::{compute_beta, key_token, AttentionMatrix, BetaProfile};

fn matrix(rows: &[Vec<f64>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows, Stage::Original).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn points(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-20.0..20.0f64, 2), 12..max)
}

fn labels() -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-1i64..5, n),
            prop::collection::vec(0i64..5, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn ctem_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 3), 1..30)) {
        let m = matrix(&rows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ctem");
        m.write_ctem(&path).unwrap();
        let back = EmbeddingMatrix::read_ctem(&path).unwrap();
        // CTEM stores f32.
        let narrowed: Vec<f64> = m.values().iter().map(|&v| v as f32 as f64).collect();
        prop_assert_eq!(back.values(), &narrowed[..]);
        prop_assert_eq!((back.n(), back.d()), (m.n(), m.d()));
    }

    #[test]
    fn external_metrics_ranges_and_symmetry((a, b) in labels()) {
        let n = nmi(&a, &b).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&n));
        prop_assert!((ari(&a, &b).unwrap() - ari(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((n - nmi(&b, &a).unwrap()).abs() < 1e-12);
        let p = purity(&a, &b).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn ari_ignores_label_names((a, b) in labels(), shift in 1i64..50) {
        let renamed: Vec<i64> = a.iter().map(|&l| if l < 0 { l } else { 100 - l * shift }).collect();
        prop_assert!((ari(&a, &b).unwrap() - ari(&renamed, &b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(ari(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn dbscan_noise_never_grows_with_eps(rows in points(60), eps in 0.1..5.0f64, grow in 0.0..5.0f64, ms in 1usize..6) {
        let y = matrix(&rows);
        let small = dbscan(&y, eps, ms).unwrap();
        let large = dbscan(&y, eps + grow, ms).unwrap();
        prop_assert!(large.noise_count() <= small.noise_count());
    }

    #[test]
    fn clusterers_are_permutation_invariant(rows in points(50), seed in any::<u64>()) {
        let n = rows.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let unpermute = |labels: &[i64]| {
            let mut out = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                out[i] = labels[pos];
            }
            out
        };
        // A border point reachable from two clusters follows its lowest-index
        // core neighbour, so only core points and noise are order-free.
        let (eps, ms) = (3.0, 3);
        let core: Vec<usize> = (0..n)
            .filter(|&i| rows.iter().filter(|r| dist(r, &rows[i]) <= eps).count() >= ms)
            .collect();
        let d1 = dbscan(&matrix(&rows), eps, ms).unwrap();
        let d2 = unpermute(&dbscan(&matrix(&permuted), eps, ms).unwrap().labels);
        let pick = |l: &[i64]| core.iter().map(|&i| l[i]).collect::<Vec<_>>();
        if core.len() >= 2 {
            prop_assert_eq!(ari(&pick(&d1.labels), &pick(&d2)).unwrap(), 1.0);
        }
        for i in 0..n {
            prop_assert_eq!(d1.labels[i] == -1, d2[i] == -1);
        }

        let h1 = hdbscan(&matrix(&rows), &HdbscanParams::new(4)).unwrap().0;
        let h2 = hdbscan(&matrix(&permuted), &HdbscanParams::new(4)).unwrap().0;
        prop_assert_eq!(ari(&h1.labels, &unpermute(&h2.labels)).unwrap(), 1.0);
    }

    #[test]
    fn beta_sums_to_token_count(n in 1usize..25, raw in prop::collection::vec(1e-6..1.0f64, 625)) {
        let mut v = Vec::with_capacity(n * n);
        for i in 0..n {
            let row = &raw[i * n..(i + 1) * n];
            let s: f64 = row.iter().sum();
            v.extend(row.iter().map(|x| x / s));
        }
        let beta = compute_beta(&AttentionMatrix::new(n, v).unwrap()).unwrap();
        prop_assert!((beta.iter().sum::<f64>() - n as f64).abs() < 1e-10);
    }

    #[test]
    fn key_token_invariant_under_rescaling(beta in prop::collection::vec(0.0..3.0f64, 3..20), scale in 0.01..100.0f64) {
        let n = beta.len();
        let sum: f64 = beta.iter().sum();
        prop_assume!(sum > 0.0);
        let row: Vec<f64> = beta.iter().map(|b| b * n as f64 / sum).collect();
        let mut p = BetaProfile::new("d", vec![row.clone()]).unwrap();
        p.special = (0..n).map(|t| t == 0).collect();
        let before = key_token(&p, 0).unwrap();
        p.beta[0] = row.iter().map(|b| b * scale).collect();
        prop_assert_eq!(key_token(&p, 0).unwrap(), before);
    }
}
