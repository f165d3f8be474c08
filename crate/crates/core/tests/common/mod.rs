#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use vpon_core::latency::{slice_latency, ChannelConfig, SliceMember};
use vpon_core::layout::{Area, Layout, Point};
use vpon_core::latency::TrafficProfile;
use vpon_core::optimizer::SliceSolution;
use vpon_core::traffic::{LadderSet, Split};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trees an RU may join: its home tree and the `w - 1` macro sites closest to it.
pub fn allowed_trees(layout: &Layout, ru: usize, w: usize) -> Vec<usize> {
    let home = layout.smalls()[ru].tree_id;
    let here = layout.macros()[home].position;
    let mut others: Vec<(f64, usize)> = layout
        .macros()
        .iter()
        .enumerate()
        .filter(|(t, _)| *t != home)
        .map(|(t, m)| (here.dist(&m.position), t))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    std::iter::once(home)
        .chain(others.into_iter().map(|(_, t)| t))
        .take(w.max(1))
        .collect()
}

pub fn fiber_km(layout: &Layout, ru: usize, tree: usize) -> f64 {
    layout.smalls()[ru].position.dist(&layout.macros()[tree].position) * layout.detour()
}

/// Analytical total latency of `rus` served by `tree`, with distances recomputed here.
pub fn latency_of(
    layout: &Layout,
    tree: usize,
    rus: &[usize],
    load: f64,
    cfg: &ChannelConfig,
    ladders: &LadderSet,
) -> Option<f64> {
    let members: Vec<SliceMember> = rus
        .iter()
        .map(|&r| SliceMember {
            ru: &layout.smalls()[r],
            distance_km: fiber_km(layout, r, tree),
        })
        .collect();
    slice_latency(&members, load, cfg, ladders).ok().map(|r| r.total_us)
}

/// Fewest MEC nodes over every neighbour-respecting assignment whose slices all
/// meet `threshold_us`. `None` when no assignment does.
pub fn brute_force_mec_count(
    layout: &Layout,
    w: usize,
    load: f64,
    threshold_us: f64,
    cfg: &ChannelConfig,
    ladders: &LadderSet,
) -> Option<usize> {
    let n = layout.ru_count();
    assert!(n <= 20);
    let allowed: Vec<Vec<usize>> = (0..n).map(|r| allowed_trees(layout, r, w)).collect();
    let mut feasible: HashMap<(usize, u32), bool> = HashMap::new();
    let mut choice = vec![0usize; n];
    let mut best: Option<usize> = None;
    loop {
        let mut masks: BTreeMap<usize, u32> = BTreeMap::new();
        for r in 0..n {
            *masks.entry(allowed[r][choice[r]]).or_default() |= 1 << r;
        }
        if best.is_none_or(|b| masks.len() < b) {
            let ok = masks.iter().all(|(&t, &mask)| {
                *feasible.entry((t, mask)).or_insert_with(|| {
                    let rus: Vec<usize> = (0..n).filter(|r| mask & (1 << r) != 0).collect();
                    latency_of(layout, t, &rus, load, cfg, ladders).is_some_and(|l| l <= threshold_us)
                })
            });
            if ok {
                best = Some(masks.len());
            }
        }
        // odometer over per-RU choices
        let mut r = 0;
        loop {
            if r == n {
                return best;
            }
            choice[r] += 1;
            if choice[r] < allowed[r].len() {
                break;
            }
            choice[r] = 0;
            r += 1;
        }
    }
}

/// Layout with `trees` random macro sites and `rus` random small cells in a square.
pub fn random_layout(seed: u64, trees: usize, rus: usize, side_km: f64) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = Area {
        width: side_km,
        height: side_km,
    };
    let pt = |rng: &mut ChaCha8Rng| Point::new(rng.random_range(0.0..side_km), rng.random_range(0.0..side_km));
    let macros: Vec<Point> = (0..trees).map(|_| pt(&mut rng)).collect();
    let cells: Vec<(Point, Split)> = (0..rus)
        .map(|_| {
            let split = if rng.random_bool(0.5) { Split::Split71 } else { Split::Split72 };
            (pt(&mut rng), split)
        })
        .collect();
    Layout::with_voronoi_trees(area, macros, &cells, &TrafficProfile::default(), 1.4).unwrap()
}

/// Problems found when re-checking a solution from scratch; empty when sound.
pub fn audit_solution(
    layout: &Layout,
    sol: &SliceSolution,
    w: usize,
    load: f64,
    threshold_us: f64,
    cfg: &ChannelConfig,
    ladders: &LadderSet,
) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen = vec![0usize; layout.ru_count()];
    for (&tree, rus) in &sol.slices {
        for &r in rus {
            seen[r] += 1;
            if !allowed_trees(layout, r, w).contains(&tree) {
                problems.push(format!("RU {r} outside the neighbour set of tree {tree}"));
            }
        }
        match latency_of(layout, tree, rus, load, cfg, ladders) {
            Some(l) if l <= threshold_us => {}
            other => problems.push(format!("slice at tree {tree} has latency {other:?}")),
        }
    }
    for (r, &count) in seen.iter().enumerate() {
        if count != 1 {
            problems.push(format!("RU {r} assigned {count} times"));
        }
    }
    if sol.mec_count() != sol.slices.len() {
        problems.push("MEC count disagrees with slice count".into());
    }
    problems
}
