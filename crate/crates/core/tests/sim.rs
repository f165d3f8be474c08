use vpon_core::latency::{slice_latency, ChannelConfig, SliceMember, TrafficProfile};
use vpon_core::sim::{simulate_slice, validate, validate_cell, ArrivalMode, SimConfig, ValidationSpec};
use vpon_core::traffic::{LadderSet, Split};

fn spec() -> ValidationSpec {
    ValidationSpec {
        threshold_us: 100.0,
        tolerance: 0.15,
        distance_km: 1.0,
    }
}

fn mixed_slice(n71: usize, n72: usize) -> Vec<vpon_core::traffic::RuProfile> {
    let t = TrafficProfile::default();
    (0..n71)
        .map(|i| t.ru(i, Split::Split71))
        .chain((0..n72).map(|i| t.ru(n71 + i, Split::Split72)))
        .collect()
}

#[test]
fn eight_rus_at_thirty_percent_agree_with_analytics() {
    let ladders = LadderSet::default_for(32).unwrap();
    let rus = mixed_slice(4, 4);
    let members: Vec<SliceMember> = rus
        .iter()
        .enumerate()
        .map(|(i, ru)| SliceMember {
            ru,
            distance_km: 0.5 + 0.25 * i as f64,
        })
        .collect();
    let analytic = slice_latency(&members, 0.3, &ChannelConfig::default(), &ladders).unwrap();
    let cfg = SimConfig {
        duration: 100_000,
        ..SimConfig::default()
    };
    let stats = simulate_slice(&members, 0.3, &ladders, &cfg).unwrap();
    let rel = (stats.mean_total_us - analytic.total_us).abs() / analytic.total_us;
    assert!(rel < 0.15, "sim {} vs analytic {}", stats.mean_total_us, analytic.total_us);
    assert!((stats.utilization - analytic.utilization).abs() < 0.02);
    assert!((stats.propagation_us - analytic.propagation_us).abs() < 1e-9);
}

#[test]
fn utilization_matches_rho_for_both_arrival_modes() {
    let ladders = LadderSet::default_for(32).unwrap();
    for mode in [ArrivalMode::PerCycleBatch, ArrivalMode::Poisson] {
        let cfg = SimConfig {
            duration: 100_000,
            arrival_mode: mode,
            ..SimConfig::default()
        };
        let row = validate_cell(3, 2, 0.6, &spec(), &TrafficProfile::default(), &ladders, &cfg).unwrap();
        let rus = mixed_slice(3, 2);
        let members: Vec<SliceMember> = rus.iter().map(|ru| SliceMember { ru, distance_km: 1.0 }).collect();
        let stats = simulate_slice(&members, 0.6, &ladders, &cfg).unwrap();
        assert!((stats.utilization - row.rho).abs() < 0.02 * row.rho, "{mode:?}");
        let little = stats.segment_rate_per_us * stats.mean_segment_wait_us;
        assert!((stats.mean_queue_segments - little).abs() < 0.1 * little, "{mode:?}");
    }
}

#[test]
fn single_cell_grid() {
    let ladders = LadderSet::default_for(32).unwrap();
    let cfg = SimConfig {
        duration: 20_000,
        ..SimConfig::default()
    };
    let rows = validate(&[(1, 0)], &[0.2], &spec(), &TrafficProfile::default(), &ladders, &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].within_tolerance && rows[0].rel_err < 0.15);
    assert!(validate(&[], &[0.2], &spec(), &TrafficProfile::default(), &ladders, &cfg).is_err());
}

#[test]
fn analytic_feasible_boundary_cells_hold_in_simulation() {
    let ladders = LadderSet::default_for(32).unwrap();
    let traffic = TrafficProfile::default();
    let cfg = SimConfig {
        duration: 50_000,
        ..SimConfig::default()
    };
    let grid: Vec<(u32, u32)> = (0..=6).flat_map(|a| (0..=8).map(move |b| (a, b))).filter(|&c| c != (0, 0)).collect();
    let rows = validate(&grid, &[0.3], &spec(), &traffic, &ladders, &cfg).unwrap();
    let feasible: std::collections::BTreeSet<(u32, u32)> =
        rows.iter().filter(|r| r.feasible_analytic).map(|r| (r.n71, r.n72)).collect();
    let boundary: Vec<_> = rows
        .iter()
        .filter(|r| r.feasible_analytic)
        .filter(|r| !feasible.contains(&(r.n71 + 1, r.n72)) || !feasible.contains(&(r.n71, r.n72 + 1)))
        .collect();
    assert!(!boundary.is_empty());
    for r in boundary {
        assert!(r.sim_mean_us <= 100.0 * 1.15, "{r:?}");
    }
}

#[test]
fn simulated_mean_rises_with_load() {
    let ladders = LadderSet::default_for(32).unwrap();
    let traffic = TrafficProfile::default();
    let mut previous = 0.0;
    for load in [0.1, 0.3, 0.5, 0.7] {
        let means: Vec<f64> = (0..3)
            .map(|seed| {
                let cfg = SimConfig {
                    duration: 30_000,
                    seed,
                    ..SimConfig::default()
                };
                validate_cell(2, 3, load, &spec(), &traffic, &ladders, &cfg).unwrap().sim_mean_us
            })
            .collect();
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        assert!(mean >= previous, "load {load}: {mean} < {previous}");
        previous = mean;
    }
}
