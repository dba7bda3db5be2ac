mod common;

use oncopipe::metrics::*;
use oncopipe::volume::{Geometry, Mask3D};
use proptest::prelude::*;

fn pair(seed: u64, max: usize) -> (Mask3D, Mask3D) {
    let mut rng = common::rng(seed);
    let g = Geometry::new(common::random_dims(&mut rng, max), common::random_spacing(&mut rng), [0.0; 3]).unwrap();
    use rand::Rng;
    let da = rng.random_range(0.05..0.7);
    let db = rng.random_range(0.05..0.7);
    (common::random_mask(&mut rng, g, da), common::random_mask(&mut rng, g, db))
}

fn with_spacing(m: &Mask3D, s: [f64; 3]) -> Mask3D {
    let g = Geometry::new(m.dims(), s, m.origin()).unwrap();
    Mask3D::new(g, m.data().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matches_exhaustive_oracle(seed in any::<u64>()) {
        let (a, b) = pair(seed, 8);
        prop_assert_eq!(nearest_distances(&a, &b).unwrap(), common::brute_nearest(&a, &b));
        let s = score_pair(&a, &b).unwrap();
        let (dsc, avg, h95) = common::brute_scores(&a, &b);
        prop_assert_eq!((s.dsc, s.avg_hd, s.hd95), (dsc, avg, h95));
    }

    #[test]
    fn symmetric_and_self_zero(seed in any::<u64>()) {
        let (a, b) = pair(seed, 6);
        prop_assert_eq!(dice_similarity(&a, &b).unwrap(), dice_similarity(&b, &a).unwrap());
        prop_assert_eq!(average_hd(&a, &b).unwrap(), average_hd(&b, &a).unwrap());
        prop_assert_eq!(hd95(&a, &b).unwrap(), hd95(&b, &a).unwrap());
        prop_assert_eq!(average_hd(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(hd95(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn bounded_by_largest_pooled_distance(seed in any::<u64>()) {
        let (a, b) = pair(seed, 6);
        let max = nearest_distances(&a, &b).unwrap().into_iter()
            .chain(nearest_distances(&b, &a).unwrap())
            .fold(0.0, f64::max);
        prop_assert!(hd95(&a, &b).unwrap() <= max);
        prop_assert!(average_hd(&a, &b).unwrap() <= max);
    }

    #[test]
    fn spacing_scale_scales_distances(seed in any::<u64>(), k in 0usize..4) {
        let (a, b) = pair(seed, 6);
        let s = [0.5, 2.0, 4.0, 8.0][k];
        let sp = a.spacing().map(|x| x * s);
        let (a2, b2) = (with_spacing(&a, sp), with_spacing(&b, sp));
        prop_assert_eq!(dice_similarity(&a2, &b2).unwrap(), dice_similarity(&a, &b).unwrap());
        let d = average_hd(&a2, &b2).unwrap() - s * average_hd(&a, &b).unwrap();
        prop_assert!(d.abs() <= 1e-12 * (1.0 + average_hd(&a2, &b2).unwrap()));
        let d = hd95(&a2, &b2).unwrap() - s * hd95(&a, &b).unwrap();
        prop_assert!(d.abs() <= 1e-12 * (1.0 + hd95(&a2, &b2).unwrap()));
    }

    #[test]
    fn dice_ignores_a_shared_voxel_permutation(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let (a, b) = pair(seed, 6);
        let mut perm: Vec<usize> = (0..a.len()).collect();
        perm.shuffle(&mut common::rng(seed ^ 1));
        let shuffle = |m: &Mask3D| Mask3D::new(*m.geometry(), perm.iter().map(|&i| m.data()[i]).collect()).unwrap();
        prop_assert_eq!(dice_similarity(&shuffle(&a), &shuffle(&b)).unwrap(), dice_similarity(&a, &b).unwrap());
    }
}

#[test]
fn four_sevenths() {
    let g = Geometry::unit([7, 1, 1]).unwrap();
    let a = Mask3D::new(g, [1, 1, 1, 0, 0, 0, 0].map(|v| v == 1).to_vec()).unwrap();
    let b = Mask3D::new(g, [0, 1, 1, 1, 1, 0, 0].map(|v| v == 1).to_vec()).unwrap();
    assert!((dice_similarity(&a, &b).unwrap() - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn batch_scores_follow_case_order() {
    let pairs: Vec<(Mask3D, Mask3D)> = (0..6).map(|s| pair(s, 5)).collect();
    let batch = evaluate_batch(&pairs).unwrap();
    for ((a, b), s) in pairs.iter().zip(&batch.cases) {
        assert_eq!(*s, score_pair(a, b).unwrap());
    }
    let empty = Mask3D::filled(*pairs[0].0.geometry(), false);
    let mut bad = pairs.clone();
    bad.push((empty, pairs[0].1.clone()));
    assert!(matches!(evaluate_batch(&bad), Err(oncopipe::Error::Case { index: 6, .. })));
}
