use proptest::prelude::*;

use vpon_core::latency::{
    convolve, feasibility_region, kingman_wait, ChannelConfig, RegionSpec, SizePmf, TrafficProfile,
};
use vpon_core::layout::{generate_layout, held_karp_tour, ring_order, tour_length, LayoutParams, Point};
use vpon_core::sim::{simulate, RuSource, SimConfig};
use vpon_core::traffic::{erlang_occupancy, rate_probabilities, ru_size_pmf, LadderSet, RateLadder, Split};

fn pmf_strategy() -> impl Strategy<Value = SizePmf> {
    prop::collection::vec(0.0f64..1.0, 1..12).prop_filter_map("all-zero weights", |w| {
        let total: f64 = w.iter().sum();
        (total > 1e-6).then(|| SizePmf::new(w.iter().map(|x| x / total).collect(), 1500).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occupancy_is_a_distribution(gamma in 0.0f64..200.0, nu in 0.1f64..5.0, m in 1u32..200) {
        let occ = erlang_occupancy(gamma, nu, m).unwrap();
        let total: f64 = occ.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(occ.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert_eq!(occ.probs().len(), m as usize + 1);
    }

    #[test]
    fn occupancy_mean_grows_with_offered_load(g in 0.0f64..64.0, extra in 0.01f64..16.0, m in 1u32..64) {
        let lo = erlang_occupancy(g, 1.0, m).unwrap().mean();
        let hi = erlang_occupancy(g + extra, 1.0, m).unwrap().mean();
        prop_assert!(hi >= lo - 1e-9);
    }

    #[test]
    fn rate_pmf_preserves_mass(gamma in 0.0f64..64.0, steps in 1u32..8) {
        let ladder = RateLadder::linear(32, steps, 1e8, 3e9).unwrap();
        let occ = erlang_occupancy(gamma, 1.0, 32).unwrap();
        let rates = rate_probabilities(&occ, &ladder).unwrap();
        let total: f64 = rates.entries().iter().map(|e| e.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(rates.mean_rate() >= 1e8 - 1e-3 && rates.mean_rate() <= 3e9 + 1e-3);
    }

    #[test]
    fn size_pmf_mean_monotone_in_load(a in 0.0f64..1.0, b in 0.0f64..1.0, split71 in any::<bool>()) {
        let ladders = LadderSet::default_for(32).unwrap();
        let split = if split71 { Split::Split71 } else { Split::Split72 };
        let ru = TrafficProfile::default().ru(0, split);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p = |l| ru_size_pmf(&ru, ladders.for_split(split), l, 125e-6, 1500).unwrap().mean();
        prop_assert!(p(hi) >= p(lo) - 1e-9);
    }

    #[test]
    fn convolution_adds_moments(p in pmf_strategy(), q in pmf_strategy()) {
        let r = convolve(&p, &q).unwrap();
        let total: f64 = r.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!((r.mean() - p.mean() - q.mean()).abs() < 1e-9);
        prop_assert!((r.variance() - p.variance() - q.variance()).abs() < 1e-9);
        prop_assert_eq!(r.max_segments(), p.max_segments() + q.max_segments());
    }

    #[test]
    fn convolution_commutes(p in pmf_strategy(), q in pmf_strategy()) {
        let a = convolve(&p, &q).unwrap();
        let b = convolve(&q, &p).unwrap();
        prop_assert_eq!(a.probs().len(), b.probs().len());
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kingman_monotone(mean in 0.0f64..0.9, var in 0.0f64..0.5, dm in 0.0f64..0.09, dv in 0.0f64..0.5) {
        let base = kingman_wait(1.0, 0.0, mean, var).unwrap();
        prop_assert!(kingman_wait(1.0, 0.0, mean + dm, var).unwrap() >= base);
        prop_assert!(kingman_wait(1.0, 0.0, mean, var + dv).unwrap() >= base);
        prop_assert!(kingman_wait(1.0, dv, mean, var).unwrap() >= base);
        prop_assert!(base >= mean);
    }

    #[test]
    fn region_is_downward_closed(load in 0.0f64..1.0, threshold in 60.0f64..160.0) {
        let spec = RegionSpec { max71: 8, max72: 10, distance_km: 1.0 };
        let region = feasibility_region(
            load,
            threshold,
            &spec,
            &TrafficProfile::default(),
            &ChannelConfig::default(),
            &LadderSet::default_for(32).unwrap(),
        )
        .unwrap();
        prop_assert!(region.is_downward_closed());
    }

    #[test]
    fn ring_is_a_permutation_no_longer_than_identity(seed in 0u64..1000, n in 1usize..20) {
        let pts: Vec<Point> = (0..n)
            .map(|i| {
                let h = (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407))) >> 33;
                Point::new((h % 1000) as f64 / 100.0, ((h / 1000) % 1000) as f64 / 100.0)
            })
            .collect();
        let ring = ring_order(&pts);
        let mut sorted = ring.order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let identity: Vec<usize> = (0..n).collect();
        prop_assert!(ring.tour_length <= tour_length(&pts, &identity) + 1e-9);
        if n <= 9 {
            prop_assert!((ring.tour_length - held_karp_tour(&pts).tour_length).abs() < 1e-9);
        }
    }

    #[test]
    fn generated_layouts_are_consistent(seed in 0u64..500, n_macro in 1usize..6) {
        let params = LayoutParams { seed, n_macro, ..LayoutParams::default() };
        let layout = generate_layout(&params, &TrafficProfile::default(), 1.4).unwrap();
        let mut seen = vec![false; layout.ru_count()];
        for t in 0..layout.tree_count() {
            for &r in layout.tree_members(t) {
                prop_assert!(!seen[r]);
                seen[r] = true;
                prop_assert_eq!(layout.smalls()[r].tree_id, t);
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let again = generate_layout(&params, &TrafficProfile::default(), 1.4).unwrap();
        prop_assert_eq!(layout, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_seed_deterministic_and_ordered(seed in 0u64..10_000, p in pmf_strategy()) {
        prop_assume!(p.mean() > 0.01);
        let cfg = SimConfig { duration: 2_000, seed, ..SimConfig::default() };
        let sources = vec![RuSource::Iid(p.clone()), RuSource::Iid(p)];
        let a = simulate(&sources, 0.5, &cfg).unwrap();
        let b = simulate(&sources, 0.5, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.p99_wait_us >= a.p95_wait_us && a.p95_wait_us >= a.mean_wait_us && a.mean_wait_us >= 0.0);
        prop_assert!(a.samples > 0);
        let capacity = ChannelConfig::default().segments_per_cycle_capacity();
        prop_assert!(a.served_segments as f64 <= cfg.duration as f64 * capacity);
    }
}
