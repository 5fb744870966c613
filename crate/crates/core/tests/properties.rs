use proptest::prelude::*;

use lpsketch::fixed;
use lpsketch::median::{estimate_median_cost, minmax, uniform_weights, MedianCostTriple, MedianSketchConfig};
use lpsketch::oracle::{exact_k_cost, exact_median_cost, exact_sampling_dist, verify_ratio_bounds, ExactInstance};
use lpsketch::partition::{members, min_partition_cost};
use lpsketch::rng::SeedCtx;
use lpsketch::stable_sketch::{apply_sketch, estimate_norm, LpSketchConfig, SketchVector, Weights};
use lpsketch::stream::CoresetEntry;
use lpsketch::wire;

fn p_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(1.5), Just(2.0), 1.0..=2.0f64]
}

fn points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), n)
}

/// Stirling numbers of the second kind summed over block counts 1..=k.
fn partitions_at_most(n: usize, k: usize) -> u64 {
    let mut s = vec![vec![0u64; n + 1]; n + 1];
    s[0][0] = 1;
    for i in 1..=n {
        for j in 1..=i {
            s[i][j] = j as u64 * s[i - 1][j] + s[i - 1][j - 1];
        }
    }
    (1..=k.min(n)).map(|j| s[n][j]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sketch_is_linear(a in prop::collection::vec(-5.0..5.0f64, 12), b in prop::collection::vec(-5.0..5.0f64, 12), seed in any::<u64>()) {
        let cfg = LpSketchConfig::new(1.5, 16, 12, SeedCtx::new(seed, 1)).unwrap();
        let idx = |v: &[f64]| v.iter().copied().enumerate().collect::<Vec<_>>();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let mut sa = apply_sketch(&cfg, &idx(&a), &Weights::Uniform).unwrap();
        sa.add(&apply_sketch(&cfg, &idx(&b), &Weights::Uniform).unwrap()).unwrap();
        let s_sum = apply_sketch(&cfg, &idx(&sum), &Weights::Uniform).unwrap();
        for (u, v) in sa.entries.iter().zip(&s_sum.entries) {
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn norm_estimate_is_homogeneous(v in prop::collection::vec(-5.0..5.0f64, 8), c in -4.0..4.0f64, p in p_strategy()) {
        let cfg = LpSketchConfig::new(p, 32, 8, SeedCtx::new(3, 1)).unwrap();
        let idx: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
        let scaled: Vec<(usize, f64)> = v.iter().map(|x| x * c).enumerate().collect();
        let e1 = estimate_norm(&apply_sketch(&cfg, &idx, &Weights::Uniform).unwrap());
        let e2 = estimate_norm(&apply_sketch(&cfg, &scaled, &Weights::Uniform).unwrap());
        prop_assert!((e2 - c.abs() * e1).abs() <= 1e-9 * (1.0 + e2.abs()));
    }

    #[test]
    fn fixed_point_merge_is_exact(vals in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 6), 1..20), cut in 0usize..20) {
        let cut = cut.min(vals.len());
        let mut whole = vec![0i128; 6];
        for v in vals.iter().rev() {
            fixed::accumulate(&mut whole, v);
        }
        let (mut a, mut b) = (vec![0i128; 6], vec![0i128; 6]);
        for v in &vals[..cut] {
            fixed::accumulate(&mut a, v);
        }
        for v in &vals[cut..] {
            fixed::accumulate(&mut b, v);
        }
        let merged: Vec<i128> = a.iter().zip(&b).map(|(x, y)| x.wrapping_add(*y)).collect();
        prop_assert_eq!(merged, whole);
    }

    #[test]
    fn clamped_ratio_in_band(alpha in 0.0..10.0f64, beta in 0.0..20.0f64, p in p_strategy()) {
        let t = MedianCostTriple { j_hat: 0, alpha_hat: alpha, beta_hat: beta };
        let r = t.clamped_ratio(p);
        prop_assert!(r >= 2f64.powf(-p) - 1e-15 && r <= 1.0);
        prop_assert_eq!(minmax(0.25, r, 1.0), r.max(0.25));
    }

    #[test]
    fn partition_search_matches_brute_force(costs in prop::collection::vec(0.0..10.0f64, 1 << 6), n in 1usize..7, k in 1usize..4) {
        let cost = |mask: u32| costs[mask as usize % costs.len()] * members(mask).count() as f64;
        let s = min_partition_cost(n, k, cost);
        // Brute force over block labelings.
        let mut best = f64::INFINITY;
        let kk = k.min(n);
        for code in 0..kk.pow(n as u32) {
            let mut masks = vec![0u32; kk];
            let mut c = code;
            for i in 0..n {
                masks[c % kk] |= 1 << i;
                c /= kk;
            }
            let total: f64 = masks.iter().filter(|&&m| m != 0).map(|&m| cost(m)).sum();
            best = best.min(total);
        }
        prop_assert!((s.best - best).abs() <= 1e-9);
        prop_assert_eq!(s.partitions, partitions_at_most(n, k));
    }

    #[test]
    fn oracle_self_consistent(pts in points(1..8, 3), p in p_strategy()) {
        let inst = ExactInstance::unweighted(pts, p).unwrap();
        let one = exact_k_cost(&inst, 1).unwrap();
        prop_assert!((one - exact_median_cost(&inst)).abs() <= 1e-9 * (1.0 + one));
        prop_assert!(verify_ratio_bounds(&inst));
        let dist = exact_sampling_dist(&inst);
        let s: f64 = dist.iter().sum();
        prop_assert!(s == 0.0 || (s - 1.0).abs() <= 1e-12);
        // More clusters never cost more.
        let two = exact_k_cost(&inst, 2).unwrap();
        prop_assert!(two <= one + 1e-9);
    }

    #[test]
    fn sketch_wire_roundtrip(entries in prop::collection::vec(any::<f64>(), 0..40), id in any::<u64>(), p in p_strategy()) {
        let sk = SketchVector { config_id: id, p, entries };
        let back = wire::decode_sketch(&wire::encode_sketch(&sk)).unwrap();
        prop_assert_eq!(back.config_id, id);
        prop_assert_eq!(
            back.entries.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            sk.entries.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn coreset_wire_roundtrip(ids in prop::collection::vec(any::<u64>(), 0..6), w in 0.0..5.0f64) {
        let entries: Vec<CoresetEntry> = ids
            .iter()
            .map(|&id| CoresetEntry { id, weight: w, distance: vec![w, -w], slots: vec![id as f64; 3] })
            .collect();
        let bytes = wire::encode_coreset(7, &entries);
        prop_assert_eq!(wire::decode_coreset(&bytes, 7).unwrap(), entries);
        prop_assert!(wire::decode_coreset(&bytes[..bytes.len().saturating_sub(1)], 7).is_err() || bytes.is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn median_estimate_ignores_translation(pts in points(2..8, 3), shift in prop::collection::vec(-50.0..50.0f64, 3), p in p_strategy(), seed in 0u64..1000) {
        let cfg = MedianSketchConfig::new(p, 0.5, 0.5, 3).unwrap().with_samples(4, 2).with_widths(16, 8, 8);
        let w = uniform_weights(pts.len());
        let moved: Vec<Vec<f64>> = pts.iter().map(|x| x.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let a = estimate_median_cost(&pts, &w, &cfg, seed).unwrap();
        let b = estimate_median_cost(&moved, &w, &cfg, seed).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn median_estimate_scales_as_power(pts in points(2..8, 3), c in 0.1..10.0f64, p in p_strategy(), seed in 0u64..1000) {
        let cfg = MedianSketchConfig::new(p, 0.5, 0.5, 3).unwrap().with_samples(4, 2).with_widths(16, 8, 8);
        let w = uniform_weights(pts.len());
        let scaled: Vec<Vec<f64>> = pts.iter().map(|x| x.iter().map(|v| v * c).collect()).collect();
        let a = estimate_median_cost(&pts, &w, &cfg, seed).unwrap();
        let b = estimate_median_cost(&scaled, &w, &cfg, seed).unwrap();
        prop_assert!((b - c.powf(p) * a).abs() <= 1e-6 * (1.0 + b.abs()), "{b} vs {}", c.powf(p) * a);
    }
}
