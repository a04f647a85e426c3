mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recshape_core::ar_prior::{cond_prob, exhaustive_joint, outcome_index, sample_sequence, MarkovPrior};
use recshape_core::distribution_grid::{
    max_diff_fraction, mean_entropy, mix, reorder, sample_cellwise, DistributionGrid, OrderPermutation,
};
use recshape_core::voxel_shapes::chamfer_distance;
use recshape_core::vq_codec::{encode, extract_patches, Codebook, IndexGrid};

fn index_grid(g: usize, k: usize, seed: u64) -> IndexGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    IndexGrid::new(g, (0..g * g * g).map(|_| rng.gen_range(0..k as u16)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mix_matches_weighted_histogram(
        g in 1usize..4, k in 1usize..6, m in 1usize..6, seed in any::<u64>(),
        weights in proptest::collection::vec(0.01f64..10.0, 5),
    ) {
        let grids: Vec<IndexGrid> = (0..m).map(|j| index_grid(g, k, seed ^ j as u64)).collect();
        let zs: Vec<DistributionGrid> = grids.iter().map(|q| DistributionGrid::from_index_grid(q, k).unwrap()).collect();
        let refs: Vec<&DistributionGrid> = zs.iter().collect();
        let w = &weights[..m];
        let mixed = mix(&refs, w).unwrap();
        for (a, b) in mixed.probs().iter().zip(brute_mix(&grids, w, k)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let scaled: Vec<f64> = w.iter().map(|x| x * 8.0).collect();
        prop_assert_eq!(mix(&refs, &scaled).unwrap(), mixed);
    }

    #[test]
    fn reorder_is_a_descending_sort(g in 1usize..5, k in 1usize..5, seed in any::<u64>(), coarse in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = if coarse {
            (coarse_grid(&mut rng, g, k), coarse_grid(&mut rng, g, k))
        } else {
            (random_grid(&mut rng, g, k), random_grid(&mut rng, g, k))
        };
        prop_assert_eq!(reorder(&a, &b).unwrap().as_slice().to_vec(), sort_order(&a, &b));
        prop_assert_eq!(reorder(&a, &a).unwrap(), OrderPermutation::identity(a.cells()));
    }

    #[test]
    fn entropy_is_bounded(g in 1usize..4, k in 1usize..9, seed in any::<u64>()) {
        let z = random_grid(&mut ChaCha8Rng::seed_from_u64(seed), g, k);
        let h = mean_entropy(&z);
        prop_assert!(h >= 0.0 && h <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn unchanged_fraction_is_monotone_in_tau(g in 1usize..4, k in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_grid(&mut rng, g, k), random_grid(&mut rng, g, k));
        let mut last = 0.0;
        for tau in [1e-10, 1e-6, 1e-3, 1e-1, 1.0] {
            let f = max_diff_fraction(&a, &b, tau).unwrap();
            prop_assert!(f >= last);
            last = f;
        }
        prop_assert_eq!(max_diff_fraction(&a, &a, 1e-10).unwrap(), 1.0);
    }

    #[test]
    fn cond_prob_is_normalized_product(k in 1usize..6, seed in any::<u64>(), ctx_len in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grids: Vec<IndexGrid> = (0..3).map(|i| index_grid(2, k, seed.wrapping_add(i))).collect();
        let prior = MarkovPrior::fit(&grids, 2, 0.5, k).unwrap();
        let context: Vec<u16> = (0..ctx_len).map(|_| rng.gen_range(0..k as u16)).collect();
        let row: Vec<f64> = {
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        };
        let p_theta = prior.distribution(&context);
        let raw: Vec<f64> = p_theta.iter().zip(&row).map(|(a, b)| a * b).collect();
        let s: f64 = raw.iter().sum();
        for (a, b) in cond_prob(&prior, &context, &row).unwrap().iter().zip(&raw) {
            prop_assert!((a - b / s).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_hot_sampling_ignores_seed_and_prior(k in 1usize..6, s1 in any::<u64>(), s2 in any::<u64>()) {
        let q = index_grid(2, k, s1);
        let z = DistributionGrid::from_index_grid(&q, k).unwrap();
        let prior = MarkovPrior::fit(&[index_grid(2, k, s2)], 2, 0.1, k).unwrap();
        let perm = OrderPermutation::identity(8);
        prop_assert_eq!(sample_sequence(&prior, &z, &perm, s1).unwrap(), q.clone());
        prop_assert_eq!(sample_sequence(&prior, &z, &perm, s2).unwrap(), q.clone());
        prop_assert_eq!(sample_cellwise(&z, s2), q);
    }

    #[test]
    fn encode_is_nearest_codeword(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..10);
        let words: Vec<Vec<f32>> = (0..k).map(|_| (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
        let book = Codebook::new(2, 1.0, words).unwrap();
        let values: Vec<f32> = (0..64).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let tsdf = recshape_core::voxel_shapes::TsdfGrid::new(4, 1.0, values).unwrap();
        let q = encode(&tsdf, &book).unwrap();
        for (patch, &idx) in extract_patches(&tsdf, 2).unwrap().iter().zip(q.indices()) {
            prop_assert_eq!(idx as usize, brute_nearest(patch, book.codewords()));
        }
    }

    #[test]
    fn chamfer_matches_pairwise_search(seed in any::<u64>(), r in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_occupancy(&mut rng, r, 0.2);
        let b = random_occupancy(&mut rng, r, 0.3);
        let fast = chamfer_distance(&a, &b).unwrap();
        prop_assert!((fast - brute_chamfer(&a, &b)).abs() <= 1e-9);
        prop_assert!((fast - chamfer_distance(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn uniform_factors_cancel() {
    let k = 4;
    let uniform_prior = MarkovPrior::empty(2, 1.0, k).unwrap();
    let row = [0.1, 0.2, 0.3, 0.4];
    assert_eq!(cond_prob(&uniform_prior, &[1, 2], &row).unwrap(), row.to_vec());
    let prior = MarkovPrior::fit(&[index_grid(2, k, 9), index_grid(2, k, 10)], 2, 0.5, k).unwrap();
    let p = cond_prob(&prior, &[3], &[0.25; 4]).unwrap();
    for (a, b) in p.iter().zip(prior.distribution(&[3])) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn exhaustive_joint_chain_rule_by_hand() {
    // Two-cell grid is not expressible; use g=1 with K=3 and a single cell.
    let prior = MarkovPrior::fit(&[IndexGrid::new(1, vec![2]).unwrap()], 1, 1.0, 3).unwrap();
    let z = DistributionGrid::new(1, 3, vec![0.5, 0.25, 0.25]).unwrap();
    let joint = exhaustive_joint(&prior, &z, &OrderPermutation::identity(1)).unwrap();
    // Empty context: counts [0, 0, 1] with α=1 → [1/4, 1/4, 2/4].
    let raw = [0.5 / 4.0, 0.25 / 4.0, 0.25 * 2.0 / 4.0];
    let s: f64 = raw.iter().sum();
    for (a, b) in joint.iter().zip(raw) {
        assert!((a - b / s).abs() < 1e-15);
    }
}

#[test]
fn exhaustive_joint_of_uniform_prior_is_row_product() {
    let k = 2;
    let z = random_grid(&mut ChaCha8Rng::seed_from_u64(4), 2, k);
    let prior = MarkovPrior::empty(1, 1.0, k).unwrap();
    let joint = exhaustive_joint(&prior, &z, &OrderPermutation::identity(8)).unwrap();
    assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for outcome in 0..joint.len() {
        let q: Vec<u16> = (0..8).map(|c| ((outcome >> c) & 1) as u16).collect();
        let grid = IndexGrid::new(2, q.clone()).unwrap();
        assert_eq!(outcome_index(&grid, k), outcome);
        let p: f64 = q.iter().enumerate().map(|(c, &i)| z.row(c)[i as usize]).product();
        assert!((joint[outcome] - p).abs() < 1e-15);
    }
}

#[test]
fn uniform_prior_sampling_frequencies_follow_rows() {
    let z = DistributionGrid::new(1, 3, vec![0.2, 0.5, 0.3]).unwrap();
    let prior = MarkovPrior::empty(2, 1.0, 3).unwrap();
    let perm = OrderPermutation::identity(1);
    let n = 100_000;
    let mut counts = [0usize; 3];
    for seed in 0..n {
        counts[sample_sequence(&prior, &z, &perm, seed).unwrap().indices()[0] as usize] += 1;
    }
    for (c, p) in counts.iter().zip(z.row(0)) {
        assert!((*c as f64 / n as f64 - p).abs() < 0.01);
    }
}

#[test]
fn prior_perplexity_by_hand() {
    // Three 1×1×1 "grids" give sequences of length one: only the empty
    // context is ever counted.
    let grids: Vec<IndexGrid> = [0u16, 0, 1].iter().map(|&i| IndexGrid::new(1, vec![i]).unwrap()).collect();
    let prior = MarkovPrior::fit(&grids, 1, 0.5, 2).unwrap();
    // p(0) = (2 + .5) / (3 + 1), p(1) = (1 + .5) / 4.
    let expected = (-(2.0 * (2.5f64 / 4.0).ln() + (1.5f64 / 4.0).ln()) / 3.0).exp();
    assert!((prior.perplexity(&grids) - expected).abs() < 1e-12);
    assert_eq!(prior.total_count(), 3);
}
