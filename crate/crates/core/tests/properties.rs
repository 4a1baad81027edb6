use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clwe_core::dictionary::Dictionary;
use clwe_core::embeddings::EmbeddingSpace;
use clwe_core::linalg::{normalized_rows, orthogonality_error};
use clwe_core::retrieval::{csls_scores, rank_of};
use clwe_core::seed::induce_unsupervised_seed;
use clwe_core::synth::{gaussian_matrix, random_orthogonal};
use clwe_core::transforms::{s1_normalize, solve_orthogonal, whitening_transform, WHITENING_EPS};

fn space(v: Array2<f64>, prefix: &str) -> EmbeddingSpace {
    let words = (0..v.nrows()).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingSpace::new(words, v).unwrap()
}

fn matrix(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-100.0f64..100.0, n * d)
        .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn word2vec_round_trip(n in 1usize..20, d in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let original = space(gaussian_matrix(&mut rng, n, d, 3.0), "w");
        let mut buf = Vec::new();
        original.write_word2vec(&mut buf).unwrap();
        let (back, stats) = EmbeddingSpace::read_word2vec(buf.as_slice(), usize::MAX).unwrap();
        prop_assert_eq!(stats.malformed_rows, 0);
        prop_assert_eq!(back.words(), original.words());
        for (a, b) in back.vectors().iter().zip(original.vectors().iter()) {
            // six significant digits, then f32 parsing
            prop_assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn frequency_cuts_compose(a in 0usize..30, b in 0usize..30) {
        let s = space(Array2::from_shape_fn((20, 2), |(i, j)| (i * 2 + j) as f64), "w");
        prop_assert_eq!(s.frequency_cut(a).frequency_cut(b), s.frequency_cut(a.min(b)));
    }

    #[test]
    fn dictionary_ignores_pair_order(pairs in prop::collection::vec((0usize..15, 0usize..15), 1..40),
                                     seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = Dictionary::new(pairs.clone(), 15, 15).unwrap();
        let b = Dictionary::new(shuffled, 15, 15).unwrap();
        prop_assert_eq!(a.pair_set(), b.pair_set());
        prop_assert_eq!(a.len(), pairs.iter().collect::<BTreeSet<_>>().len());
    }

    #[test]
    fn s1_rows_are_unit_length(a in matrix(12, 4)) {
        let (out, zeros) = s1_normalize(&space(a, "w"));
        for row in out.vectors().rows() {
            let norm = row.dot(&row).sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        }
        prop_assert!(zeros <= 12);
    }

    #[test]
    fn procrustes_maps_are_orthogonal(seed in any::<u64>(), n in 3usize..40, d in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_matrix(&mut rng, n, d, 1.0);
        let z = gaussian_matrix(&mut rng, n, d, 1.0);
        let m = solve_orthogonal(x.view(), z.view(), &Dictionary::identity(n)).unwrap();
        prop_assert!(orthogonality_error(m.w_x.view()) < 1e-9);
        prop_assert!(orthogonality_error(m.w_z.view()) < 1e-9);
    }

    #[test]
    fn whitening_inverse_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_matrix(&mut rng, 30, 5, 2.0);
        let t = whitening_transform(a.view(), WHITENING_EPS).unwrap();
        let id = t.matrix().dot(&t.inverse());
        prop_assert!((&id - &Array2::<f64>::eye(5)).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn csls_ranking_is_rotation_invariant(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = normalized_rows(gaussian_matrix(&mut rng, 8, 4, 1.0).view());
        let t = normalized_rows(gaussian_matrix(&mut rng, 9, 4, 1.0).view());
        let r = random_orthogonal(&mut rng, 4);
        let a = csls_scores(q.view(), t.view(), k);
        let b = csls_scores(q.dot(&r).view(), t.dot(&r).view(), k);
        prop_assert!((&a - &b).iter().all(|v| v.abs() < 1e-10));
        for i in 0..8 {
            prop_assert!(rank_of(a.row(i), 0) >= 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Relabelling the source rows relabels the seed pairs and nothing else.
    #[test]
    fn seed_is_equivariant_under_source_permutation(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let x = gaussian_matrix(&mut rng, n, 6, 1.0);
        let z = x.dot(&random_orthogonal(&mut rng, 6)) + gaussian_matrix(&mut rng, n, 6, 0.01);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let xp = x.select(Axis(0), &perm);

        let (sx, _) = s1_normalize(&space(x, "s"));
        let (sxp, _) = s1_normalize(&space(xp, "s"));
        let (sz, _) = s1_normalize(&space(z, "t"));
        let a = induce_unsupervised_seed(&sx, &sz, n).unwrap();
        let b = induce_unsupervised_seed(&sxp, &sz, n).unwrap();
        // row p of the permuted space is row perm[p] of the original
        let mapped: BTreeSet<(usize, usize)> = b.pairs().iter().map(|&(p, j)| (perm[p], j)).collect();
        prop_assert_eq!(mapped, a.pair_set());
    }
}
