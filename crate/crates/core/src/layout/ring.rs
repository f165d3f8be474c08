//! Minimum-length closed ring through a set of sites.

use serde::{Deserialize, Serialize};

use super::Point;

/// Largest instance solved exactly.
pub const HELD_KARP_LIMIT: usize = 12;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingOrder {
    pub order: Vec<usize>,
    pub tour_length: f64,
}

/// Length of the closed tour visiting `points` in `order`.
pub fn tour_length(points: &[Point], order: &[usize]) -> f64 {
    if order.len() < 2 {
        return 0.0;
    }
    order
        .iter()
        .zip(order.iter().cycle().skip(1))
        .map(|(&a, &b)| points[a].dist(&points[b]))
        .sum()
}

/// Exact tour for small inputs, multi-start local search above [`HELD_KARP_LIMIT`].
pub fn ring_order(points: &[Point]) -> RingOrder {
    if points.len() <= HELD_KARP_LIMIT {
        held_karp_tour(points)
    } else {
        heuristic_tour(points)
    }
}

/// Held-Karp dynamic program over subsets, anchored at node 0.
pub fn held_karp_tour(points: &[Point]) -> RingOrder {
    let n = points.len();
    if n <= 3 {
        let order: Vec<usize> = (0..n).collect();
        let tour_length = tour_length(points, &order);
        return RingOrder { order, tour_length };
    }
    assert!(n <= 20, "held-karp is exponential; {n} points is too many");
    let d = |a: usize, b: usize| points[a].dist(&points[b]);
    // Subsets range over nodes 1..n; bit i-1 stands for node i.
    let m = n - 1;
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full * m];
    let mut parent = vec![usize::MAX; full * m];
    for j in 0..m {
        cost[(1 << j) * m + j] = d(0, j + 1);
    }
    for mask in 1..full {
        for j in 0..m {
            let here = cost[mask * m + j];
            if mask & (1 << j) == 0 || !here.is_finite() {
                continue;
            }
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let c = here + d(j + 1, k + 1);
                if c < cost[next * m + k] {
                    cost[next * m + k] = c;
                    parent[next * m + k] = j;
                }
            }
        }
    }
    let last_mask = full - 1;
    let (mut j, _) = (0..m)
        .map(|j| (j, cost[last_mask * m + j] + d(j + 1, 0)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("m >= 1");
    let mut order = Vec::with_capacity(n);
    let mut mask = last_mask;
    loop {
        order.push(j + 1);
        let p = parent[mask * m + j];
        mask &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    order.push(0);
    order.reverse();
    let tour_length = tour_length(points, &order);
    RingOrder { order, tour_length }
}

/// Nearest-neighbour construction from several starts, each polished by 2-opt and
/// or-opt moves until neither finds an improvement; the shortest result wins.
pub fn heuristic_tour(points: &[Point]) -> RingOrder {
    let n = points.len();
    if n <= 3 {
        return held_karp_tour(points);
    }
    let starts = n.min(16);
    let mut best: Option<RingOrder> = None;
    for s in 0..starts {
        let start = s * n / starts;
        let mut order = nearest_neighbor(points, start);
        loop {
            let a = two_opt(points, &mut order);
            let b = or_opt(points, &mut order);
            if !a && !b {
                break;
            }
        }
        let len = tour_length(points, &order);
        if best.as_ref().is_none_or(|b| len < b.tour_length - EPS) {
            best = Some(RingOrder {
                order,
                tour_length: len,
            });
        }
    }
    let mut best = best.expect("at least one start");
    rotate_to_zero(&mut best.order);
    best
}

fn rotate_to_zero(order: &mut [usize]) {
    if let Some(pos) = order.iter().position(|&v| v == 0) {
        order.rotate_left(pos);
    }
}

fn nearest_neighbor(points: &[Point], start: usize) -> Vec<usize> {
    let n = points.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| {
                points[cur]
                    .dist(&points[a])
                    .total_cmp(&points[cur].dist(&points[b]))
                    .then(a.cmp(&b))
            })
            .expect("unvisited node remains");
        visited[next] = true;
        order.push(next);
        cur = next;
    }
    order
}

/// Repeated first-improvement 2-opt. Returns whether anything changed.
fn two_opt(points: &[Point], order: &mut [usize]) -> bool {
    let n = order.len();
    let d = |a: usize, b: usize| points[a].dist(&points[b]);
    let mut changed = false;
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (order[i], order[i + 1]);
                let (c, e) = (order[j], order[(j + 1) % n]);
                let delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if delta < -EPS {
                    order[i + 1..=j].reverse();
                    improved = true;
                    changed = true;
                }
            }
        }
    }
    changed
}

/// Relocates runs of 1-3 consecutive nodes (optionally reversed). Returns whether anything changed.
fn or_opt(points: &[Point], order: &mut Vec<usize>) -> bool {
    let n = order.len();
    let d = |a: usize, b: usize| points[a].dist(&points[b]);
    let mut changed = false;
    'restart: loop {
        for seg in 1..=3.min(n - 2) {
            for i in 0..n {
                // segment occupies positions i..i+seg (cyclic)
                let idx: Vec<usize> = (0..seg).map(|k| (i + k) % n).collect();
                let prev = order[(i + n - 1) % n];
                let next = order[(i + seg) % n];
                let first = order[idx[0]];
                let last = order[idx[seg - 1]];
                let removal_gain = d(prev, first) + d(last, next) - d(prev, next);
                let rest: Vec<usize> = (0..n - seg).map(|k| order[(i + seg + k) % n]).collect();
                for p in 0..rest.len() {
                    let (u, v) = (rest[p], rest[(p + 1) % rest.len()]);
                    if u == prev && v == next {
                        continue;
                    }
                    let forward = d(u, first) + d(last, v) - d(u, v);
                    let backward = d(u, last) + d(first, v) - d(u, v);
                    let (cost, reversed) = if backward < forward {
                        (backward, true)
                    } else {
                        (forward, false)
                    };
                    if cost < removal_gain - EPS {
                        let mut moved: Vec<usize> = idx.iter().map(|&k| order[k]).collect();
                        if reversed {
                            moved.reverse();
                        }
                        let mut new_order = Vec::with_capacity(n);
                        new_order.extend_from_slice(&rest[..=p]);
                        new_order.extend(moved);
                        new_order.extend_from_slice(&rest[p + 1..]);
                        *order = new_order;
                        changed = true;
                        continue 'restart;
                    }
                }
            }
        }
        return changed;
    }
}
