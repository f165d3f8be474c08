//! Grant-cycle discrete-event simulation of upstream traffic in one vPON slice.
//!
//! Every grant cycle each RU produces a number of eCPRI segments. They are buffered
//! at the RU's ONU while the cycle runs and reported at its end; the OLT then grants
//! the queues in fixed round-robin order and the slice's wavelength drains them back
//! to back at line rate. A cycle's burst is delivered once its last segment is on the
//! fiber, since the DU processes the slice's uplink jointly. Propagation uses the
//! ranged (farthest-RU) fiber delay common to all ONUs of a PON.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{
    convolve_power, latency_from_aggregate, slice_aggregate_pmf, slice_members, ChannelConfig, SizePmf,
    SliceMember, TrafficProfile,
};
use crate::layout::Layout;
use crate::optimizer::{SliceEvaluator, SliceVerdict};
use crate::traffic::{erlang_occupancy, ru_size_pmf, segments_per_cycle, LadderSet, RuProfile, Split};

/// Queue size (segments) beyond which a run is declared overloaded.
pub const OVERLOAD_SEGMENTS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    /// Segments of a cycle are spread evenly over it.
    PerCycleBatch,
    /// Segments of a cycle arrive at independent uniform instants (a Poisson
    /// process conditioned on the cycle's count).
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateDynamics {
    /// Independent rate draw per cycle from the RU's size distribution.
    Iid,
    /// User count follows the M/M/m/m birth-death chain across cycles.
    BirthDeath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated grant cycles.
    pub duration: u64,
    pub seed: u64,
    /// Leading cycles excluded from statistics. `None` means 10% of `duration`.
    pub warmup: Option<u64>,
    pub channel: ChannelConfig,
    pub arrival_mode: ArrivalMode,
    pub dynamics: RateDynamics,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 100_000,
            seed: 1,
            warmup: None,
            channel: ChannelConfig::default(),
            arrival_mode: ArrivalMode::PerCycleBatch,
            dynamics: RateDynamics::Iid,
        }
    }
}

impl SimConfig {
    pub fn warmup_cycles(&self) -> u64 {
        self.warmup.unwrap_or(self.duration / 10)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.duration <= self.warmup_cycles() {
            return Err(Error::param(format!(
                "{} cycles do not exceed the {} warmup cycles",
                self.duration,
                self.warmup_cycles()
            )));
        }
        Ok(())
    }
}

/// Latency statistics over post-warmup grant cycles. Times in µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    /// Mean burst latency (grant alignment, queueing and transmission).
    pub mean_wait_us: f64,
    pub p95_wait_us: f64,
    pub p99_wait_us: f64,
    /// `mean_wait_us` plus propagation.
    pub mean_total_us: f64,
    pub propagation_us: f64,
    /// Fraction of time the wavelength is transmitting.
    pub utilization: f64,
    /// Measured bursts.
    pub samples: u64,
    /// Mean time a single segment spends in its ONU buffer.
    pub mean_segment_wait_us: f64,
    /// Time-average number of buffered segments, from one random probe per cycle.
    pub mean_queue_segments: f64,
    /// Segment arrival rate (segments/µs).
    pub segment_rate_per_us: f64,
    /// Segments fully transmitted within the simulated horizon.
    pub served_segments: u64,
    pub overloaded: bool,
}

/// How an RU generates its per-cycle segment count.
#[derive(Debug, Clone)]
pub enum RuSource {
    Iid(SizePmf),
    BirthDeath {
        gamma: f64,
        nu: f64,
        /// Segments per cycle indexed by active user count `0..=m`.
        segments_by_users: Vec<usize>,
    },
}

enum Sampler {
    Iid {
        support: Vec<usize>,
        index: WeightedIndex<f64>,
    },
    BirthDeath {
        gamma: f64,
        nu: f64,
        users: usize,
        segments_by_users: Vec<usize>,
    },
}

impl Sampler {
    fn new(source: &RuSource, gc_s: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        match source {
            RuSource::Iid(pmf) => {
                let (support, weights): (Vec<usize>, Vec<f64>) = pmf.entries().unzip();
                let index = WeightedIndex::new(weights).map_err(|e| Error::param(e.to_string()))?;
                Ok(Sampler::Iid { support, index })
            }
            RuSource::BirthDeath {
                gamma,
                nu,
                segments_by_users,
            } => {
                let m = segments_by_users.len() - 1;
                let occ = erlang_occupancy(*gamma, *nu, m as u32)?;
                let index = WeightedIndex::new(occ.probs().to_vec()).map_err(|e| Error::param(e.to_string()))?;
                let _ = gc_s;
                Ok(Sampler::BirthDeath {
                    gamma: *gamma,
                    nu: *nu,
                    users: index.sample(rng),
                    segments_by_users: segments_by_users.clone(),
                })
            }
        }
    }

    fn next(&mut self, gc_s: f64, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Sampler::Iid { support, index } => support[index.sample(rng)],
            Sampler::BirthDeath {
                gamma,
                nu,
                users,
                segments_by_users,
            } => {
                let m = segments_by_users.len() - 1;
                // uniformised chain: events at rate γ + mν, each a birth, a death or a self-loop
                let total_rate = *gamma + m as f64 * *nu;
                let mut t = 0.0;
                loop {
                    let u: f64 = rng.random();
                    t += -(1.0 - u).ln() / total_rate;
                    if t > gc_s {
                        break;
                    }
                    let pick = rng.random::<f64>() * total_rate;
                    if pick < *gamma {
                        if *users < m {
                            *users += 1;
                        }
                    } else if pick < *gamma + *users as f64 * *nu {
                        *users -= 1;
                    }
                }
                segments_by_users[*users]
            }
        }
    }
}

struct Burst {
    start: f64,
    segments: u64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::INFINITY;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Simulates one slice whose RUs are described by `sources`.
pub fn simulate(sources: &[RuSource], max_distance_km: f64, cfg: &SimConfig) -> Result<SimStats> {
    if sources.is_empty() {
        return Err(Error::param("cannot simulate an empty slice"));
    }
    cfg.validate()?;
    let ch = &cfg.channel;
    let gc = ch.gc_s * 1e6;
    let tau = ch.segment_time_s() * 1e6;
    let warmup = cfg.warmup_cycles();
    let horizon = cfg.duration as f64 * gc;
    let backlog_limit = OVERLOAD_SEGMENTS * tau;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samplers = sources
        .iter()
        .map(|s| Sampler::new(s, ch.gc_s, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let mut channel_free = 0.0_f64;
    let mut pending: VecDeque<Burst> = VecDeque::new();
    let mut burst_latency = Vec::with_capacity((cfg.duration - warmup) as usize);
    let mut counts = vec![0usize; sources.len()];
    let mut offsets: Vec<Vec<f64>> = vec![Vec::new(); sources.len()];
    let (mut segment_wait_sum, mut segment_count) = (0.0, 0u64);
    let (mut queue_probe_sum, mut busy) = (0.0, 0.0);
    let mut served_segments = 0u64;
    let mut overloaded = false;

    for c in 0..cfg.duration {
        let cycle_start = c as f64 * gc;
        let measured = c >= warmup;
        for (j, sampler) in samplers.iter_mut().enumerate() {
            counts[j] = sampler.next(ch.gc_s, &mut rng);
            if cfg.arrival_mode == ArrivalMode::Poisson {
                offsets[j].clear();
                offsets[j].extend((0..counts[j]).map(|_| rng.random::<f64>() * gc));
                offsets[j].sort_by(f64::total_cmp);
            }
        }
        let total: u64 = counts.iter().map(|&x| x as u64).sum();

        // Queue probe at a random instant of this cycle, before its data is granted.
        let probe = cycle_start + rng.random::<f64>() * gc;
        while pending.front().is_some_and(|b| b.start + b.segments as f64 * tau <= probe) {
            let done = pending.pop_front().expect("front exists");
            served_segments += done.segments;
        }
        if measured {
            let in_flight: f64 = pending
                .iter()
                .map(|b| {
                    let sent = ((probe - b.start) / tau).floor().clamp(0.0, b.segments as f64);
                    b.segments as f64 - sent
                })
                .sum();
            let arrived: usize = counts
                .iter()
                .enumerate()
                .map(|(j, &x)| match cfg.arrival_mode {
                    ArrivalMode::PerCycleBatch => {
                        (((probe - cycle_start) * x as f64 / gc + 0.5).floor() as usize).min(x)
                    }
                    ArrivalMode::Poisson => offsets[j].partition_point(|&o| cycle_start + o <= probe),
                })
                .sum();
            queue_probe_sum += in_flight + arrived as f64;
        }

        // Grant at the end of the cycle; the wavelength drains queues in RU order.
        let grant = cycle_start + gc;
        let start = channel_free.max(grant);
        if start - grant > backlog_limit {
            overloaded = true;
            break;
        }
        let completion = start + total as f64 * tau;
        channel_free = completion;
        if total > 0 {
            pending.push_back(Burst {
                start,
                segments: total,
            });
        }
        if !measured || total == 0 {
            continue;
        }
        busy += total as f64 * tau;
        let mut cursor = start;
        let mut enqueue_sum = 0.0;
        for (j, &x) in counts.iter().enumerate() {
            if x == 0 {
                continue;
            }
            let x_f = x as f64;
            let arrivals = match cfg.arrival_mode {
                // offsets (i + 1/2)·gc/x for i < x sum to gc·x/2
                ArrivalMode::PerCycleBatch => x_f * cycle_start + gc * x_f / 2.0,
                ArrivalMode::Poisson => offsets[j].iter().map(|o| cycle_start + o).sum(),
            };
            // i-th segment of this RU leaves at cursor + (i+1)·τ
            let departures = x_f * cursor + tau * x_f * (x_f + 1.0) / 2.0;
            segment_wait_sum += departures - arrivals;
            enqueue_sum += arrivals;
            cursor += x_f * tau;
        }
        segment_count += total;
        burst_latency.push(completion - enqueue_sum / total as f64);
    }
    for b in &pending {
        let sent = ((horizon - b.start) / tau).floor().clamp(0.0, b.segments as f64);
        served_segments += sent as u64;
    }

    let propagation_us = max_distance_km * ch.fiber_delay_us_per_km;
    let measured_time = (cfg.duration - warmup) as f64 * gc;
    if !overloaded && burst_latency.is_empty() {
        return Err(Error::Model("slice produced no traffic after warmup".into()));
    }
    if overloaded {
        return Ok(SimStats {
            mean_wait_us: f64::INFINITY,
            p95_wait_us: f64::INFINITY,
            p99_wait_us: f64::INFINITY,
            mean_total_us: f64::INFINITY,
            propagation_us,
            utilization: 1.0,
            samples: burst_latency.len() as u64,
            mean_segment_wait_us: f64::INFINITY,
            mean_queue_segments: f64::INFINITY,
            segment_rate_per_us: segment_count as f64 / measured_time,
            served_segments,
            overloaded: true,
        });
    }
    let samples = burst_latency.len();
    let mean_wait_us = burst_latency.iter().sum::<f64>() / samples as f64;
    burst_latency.sort_by(f64::total_cmp);
    Ok(SimStats {
        mean_wait_us,
        p95_wait_us: percentile(&burst_latency, 0.95),
        p99_wait_us: percentile(&burst_latency, 0.99),
        mean_total_us: mean_wait_us + propagation_us,
        propagation_us,
        utilization: busy / measured_time,
        samples: samples as u64,
        mean_segment_wait_us: segment_wait_sum / segment_count.max(1) as f64,
        mean_queue_segments: queue_probe_sum / (cfg.duration - warmup) as f64,
        segment_rate_per_us: segment_count as f64 / measured_time,
        served_segments,
        overloaded: false,
    })
}

fn source_for(ru: &RuProfile, load_scale: f64, ladders: &LadderSet, cfg: &SimConfig) -> Result<RuSource> {
    let ch = &cfg.channel;
    let ladder = ladders.for_split(ru.split);
    match cfg.dynamics {
        RateDynamics::Iid => Ok(RuSource::Iid(ru_size_pmf(ru, ladder, load_scale, ch.gc_s, ch.segment_bytes)?)),
        RateDynamics::BirthDeath => {
            if ladder.max_users() != ru.m {
                return Err(Error::param(format!("RU {} capacity does not match its ladder", ru.id)));
            }
            let segments_by_users = (0..=ru.m)
                .map(|u| {
                    let level = ladder.level_for(u).expect("u <= m");
                    segments_per_cycle(ladder.rates()[level], ch.gc_s, ch.segment_bytes) as usize
                })
                .collect();
            Ok(RuSource::BirthDeath {
                gamma: ru.gamma * load_scale,
                nu: ru.nu,
                segments_by_users,
            })
        }
    }
}

/// Simulates the slice formed by `members` at `load_scale` of full load.
pub fn simulate_slice(
    members: &[SliceMember<'_>],
    load_scale: f64,
    ladders: &LadderSet,
    cfg: &SimConfig,
) -> Result<SimStats> {
    let sources = members
        .iter()
        .map(|m| source_for(m.ru, load_scale, ladders, cfg))
        .collect::<Result<Vec<_>>>()?;
    let reach = members.iter().map(|m| m.distance_km).fold(0.0_f64, f64::max);
    simulate(&sources, reach, cfg)
}

/// One `(n71, n72, load)` cell of a validation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub n71: u32,
    pub n72: u32,
    pub load: f64,
    pub sim_mean_us: f64,
    /// Analytical total; infinite when the model reports overload.
    pub analytic_us: f64,
    pub rel_err: f64,
    pub feasible_sim: bool,
    pub feasible_analytic: bool,
    pub rho: f64,
    pub overloaded: bool,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSpec {
    pub threshold_us: f64,
    pub tolerance: f64,
    /// Common RU-to-MEC fiber distance (km).
    pub distance_km: f64,
}

/// Simulates and evaluates a homogeneous-distance slice of `n71` split-7.1 and `n72`
/// split-7.2 RUs.
pub fn validate_cell(
    n71: u32,
    n72: u32,
    load: f64,
    spec: &ValidationSpec,
    traffic: &TrafficProfile,
    ladders: &LadderSet,
    cfg: &SimConfig,
) -> Result<ValidationRow> {
    if n71 + n72 == 0 {
        return Err(Error::param("validation cell needs at least one RU"));
    }
    let ch = &cfg.channel;
    let per_split = |split| {
        ru_size_pmf(&traffic.ru(0, split), ladders.for_split(split), load, ch.gc_s, ch.segment_bytes)
    };
    let (p71, p72) = (per_split(Split::Split71)?, per_split(Split::Split72)?);
    let agg = slice_aggregate_pmf(&[convolve_power(&p71, n71 as usize)?, convolve_power(&p72, n72 as usize)?])?;
    let (analytic_us, rho) = match latency_from_aggregate(&agg, spec.distance_km, ch) {
        Ok(r) => (r.total_us, r.utilization),
        Err(Error::Overload { utilization }) => (f64::INFINITY, utilization),
        Err(e) => return Err(e),
    };
    let rus: Vec<RuProfile> = std::iter::repeat_n(Split::Split71, n71 as usize)
        .chain(std::iter::repeat_n(Split::Split72, n72 as usize))
        .enumerate()
        .map(|(i, s)| traffic.ru(i, s))
        .collect();
    let members: Vec<SliceMember> = rus
        .iter()
        .map(|ru| SliceMember {
            ru,
            distance_km: spec.distance_km,
        })
        .collect();
    let stats = simulate_slice(&members, load, ladders, cfg)?;
    let rel_err = if analytic_us.is_finite() && stats.mean_total_us.is_finite() {
        (stats.mean_total_us - analytic_us).abs() / analytic_us
    } else {
        f64::INFINITY
    };
    Ok(ValidationRow {
        n71,
        n72,
        load,
        sim_mean_us: stats.mean_total_us,
        analytic_us,
        rel_err,
        feasible_sim: stats.mean_total_us <= spec.threshold_us,
        feasible_analytic: analytic_us <= spec.threshold_us,
        rho,
        overloaded: stats.overloaded || !analytic_us.is_finite(),
        within_tolerance: rel_err <= spec.tolerance,
    })
}

/// Runs [`validate_cell`] over `grid × loads`, ordered by `(n71, n72, load)`.
pub fn validate(
    grid: &[(u32, u32)],
    loads: &[f64],
    spec: &ValidationSpec,
    traffic: &TrafficProfile,
    ladders: &LadderSet,
    cfg: &SimConfig,
) -> Result<Vec<ValidationRow>> {
    if grid.is_empty() || loads.is_empty() {
        return Err(Error::param("validation grid is empty"));
    }
    let mut rows = Vec::with_capacity(grid.len() * loads.len());
    for &(n71, n72) in grid {
        for &load in loads {
            rows.push(validate_cell(n71, n72, load, spec, traffic, ladders, cfg)?);
        }
    }
    Ok(rows)
}

/// Slice evaluator that replaces the analytical model with a simulation run.
pub struct SimulatedEvaluator<'a> {
    layout: &'a Layout,
    load_scale: f64,
    ladders: &'a LadderSet,
    cfg: SimConfig,
    cache: HashMap<(usize, Vec<usize>), SliceVerdict>,
    pub runs: usize,
}

impl<'a> SimulatedEvaluator<'a> {
    pub fn new(layout: &'a Layout, load_scale: f64, ladders: &'a LadderSet, cfg: SimConfig) -> Self {
        SimulatedEvaluator {
            layout,
            load_scale,
            ladders,
            cfg,
            cache: HashMap::new(),
            runs: 0,
        }
    }
}

impl SliceEvaluator for SimulatedEvaluator<'_> {
    fn evaluate(&mut self, tree: usize, members: &[usize]) -> Result<SliceVerdict> {
        let key = (tree, members.to_vec());
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let slice = slice_members(self.layout, tree, members)?;
        let stats = simulate_slice(&slice, self.load_scale, self.ladders, &self.cfg)?;
        self.runs += 1;
        let verdict = SliceVerdict {
            latency_us: (!stats.overloaded).then_some(stats.mean_total_us),
            report: None,
        };
        self.cache.insert(key, verdict);
        Ok(verdict)
    }
}

/// Simulated mean totals keyed by slice tree, for re-checking an optimizer result.
pub fn simulate_solution(
    layout: &Layout,
    slices: &BTreeMap<usize, Vec<usize>>,
    load_scale: f64,
    ladders: &LadderSet,
    cfg: &SimConfig,
) -> Result<BTreeMap<usize, SimStats>> {
    slices
        .iter()
        .map(|(&tree, rus)| {
            let members = slice_members(layout, tree, rus)?;
            Ok((tree, simulate_slice(&members, load_scale, ladders, cfg)?))
        })
        .collect()
}
