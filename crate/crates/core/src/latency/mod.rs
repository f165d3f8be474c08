//! Analytical upstream latency of a vPON slice.
//!
//! Per-RU segment distributions are convolved into the slice's per-cycle burst
//! distribution. The burst is the customer of a G/G/1 queue whose service time is
//! the burst transmission time on the slice's wavelength, and whose arrivals are the
//! coordinated grant cycles. The mean sojourn follows Kingman's heavy-traffic bound;
//! propagation to the MEC node and the mean grant-alignment delay are added on top.

mod pmf;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Layout, Node};
use crate::traffic::{ru_size_pmf, LadderSet, RuProfile, Split};

pub(crate) use pmf::convolve_power;
pub use pmf::{convolve, slice_aggregate_pmf, SizePmf};

/// Physical parameters of one east-west wavelength channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Upstream line rate per wavelength (bits/s).
    pub line_rate_bps: f64,
    /// Grant-cycle duration (s).
    pub gc_s: f64,
    /// eCPRI segment size (bytes).
    pub segment_bytes: u32,
    /// Number of east-west wavelengths available per MEC node.
    pub wavelengths: u32,
    /// One-way fiber delay (µs/km).
    pub fiber_delay_us_per_km: f64,
    /// Burst arrival rate (1/s). `None` means one burst per grant cycle.
    pub arrival_rate: Option<f64>,
    /// Variance of burst inter-arrival times (s²). Zero for coordinated DBA.
    pub arrival_variance_s2: f64,
    /// Include the mean half-cycle grant alignment delay in totals.
    pub framing: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            line_rate_bps: 50e9,
            gc_s: 125e-6,
            segment_bytes: 1500,
            wavelengths: 4,
            fiber_delay_us_per_km: 5.0,
            arrival_rate: None,
            arrival_variance_s2: 0.0,
            framing: true,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("line_rate_bps", self.line_rate_bps),
            ("gc_s", self.gc_s),
            ("fiber_delay_us_per_km", self.fiber_delay_us_per_km),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.segment_bytes == 0 || self.wavelengths == 0 {
            return Err(Error::param("segment_bytes and wavelengths must be > 0"));
        }
        if let Some(l) = self.arrival_rate {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::param(format!("arrival_rate must be > 0, got {l}")));
            }
        }
        if !(self.arrival_variance_s2 >= 0.0) {
            return Err(Error::param("arrival_variance_s2 must be >= 0"));
        }
        Ok(())
    }

    /// Burst arrival rate used by the queueing bound.
    pub fn burst_rate(&self) -> f64 {
        self.arrival_rate.unwrap_or(1.0 / self.gc_s)
    }

    /// Transmission time of a single segment (s).
    pub fn segment_time_s(&self) -> f64 {
        8.0 * f64::from(self.segment_bytes) / self.line_rate_bps
    }

    /// Segments that fit in one grant cycle at line rate.
    pub fn segments_per_cycle_capacity(&self) -> f64 {
        self.gc_s / self.segment_time_s()
    }

    pub fn framing_s(&self) -> f64 {
        if self.framing {
            self.gc_s / 2.0
        } else {
            0.0
        }
    }
}

/// Moments of the per-cycle burst service time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceMoments {
    pub mean_s: f64,
    pub variance_s2: f64,
    pub utilization: f64,
}

/// Service time of a `k`-segment burst is `k · 8 · segment / line_rate`.
pub fn service_moments(agg: &SizePmf, cfg: &ChannelConfig) -> ServiceMoments {
    let unit = 8.0 * f64::from(agg.segment_bytes()) / cfg.line_rate_bps;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (k, p) in agg.entries() {
        let x = k as f64 * unit;
        m1 += p * x;
        m2 += p * x * x;
    }
    ServiceMoments {
        mean_s: m1,
        variance_s2: (m2 - m1 * m1).max(0.0),
        utilization: cfg.burst_rate() * m1,
    }
}

/// Kingman's G/G/1 bound on mean sojourn:
/// `service_mean + λ(σ_a² + σ_b²) / (2(1 − ρ))` with `ρ = λ · service_mean`.
pub fn kingman_wait(
    lambda: f64,
    sigma_a2: f64,
    service_mean: f64,
    service_var: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) || !(sigma_a2 >= 0.0) || !(service_mean >= 0.0) || !(service_var >= 0.0)
    {
        return Err(Error::param("queue parameters must be non-negative"));
    }
    let rho = lambda * service_mean;
    if rho >= 1.0 {
        return Err(Error::Overload { utilization: rho });
    }
    Ok(service_mean + lambda * (sigma_a2 + service_var) / (2.0 * (1.0 - rho)))
}

/// An RU in a slice together with its fiber distance to the serving MEC node.
#[derive(Debug, Clone, Copy)]
pub struct SliceMember<'a> {
    pub ru: &'a RuProfile,
    pub distance_km: f64,
}

/// Analytical upstream latency of one slice. All times in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceLatencyReport {
    pub wait_us: f64,
    pub service_mean_us: f64,
    pub service_var_us2: f64,
    pub utilization: f64,
    pub propagation_us: f64,
    pub framing_us: f64,
    pub total_us: f64,
}

/// Latency report for a slice whose aggregate burst distribution is already known.
pub fn latency_from_aggregate(
    agg: &SizePmf,
    max_distance_km: f64,
    cfg: &ChannelConfig,
) -> Result<SliceLatencyReport> {
    let moments = service_moments(agg, cfg);
    let wait = kingman_wait(
        cfg.burst_rate(),
        cfg.arrival_variance_s2,
        moments.mean_s,
        moments.variance_s2,
    )?;
    let wait_us = wait * 1e6;
    let propagation_us = max_distance_km * cfg.fiber_delay_us_per_km;
    let framing_us = cfg.framing_s() * 1e6;
    Ok(SliceLatencyReport {
        wait_us,
        service_mean_us: moments.mean_s * 1e6,
        service_var_us2: moments.variance_s2 * 1e12,
        utilization: moments.utilization,
        propagation_us,
        framing_us,
        total_us: wait_us + propagation_us + framing_us,
    })
}

/// End-to-end upstream latency of a slice at a fraction `load_scale` of full load.
pub fn slice_latency(
    members: &[SliceMember<'_>],
    load_scale: f64,
    cfg: &ChannelConfig,
    ladders: &LadderSet,
) -> Result<SliceLatencyReport> {
    if members.is_empty() {
        return Err(Error::param("slice has no RUs"));
    }
    cfg.validate()?;
    let pmfs = members
        .iter()
        .map(|m| {
            ru_size_pmf(
                m.ru,
                ladders.for_split(m.ru.split),
                load_scale,
                cfg.gc_s,
                cfg.segment_bytes,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let agg = slice_aggregate_pmf(&pmfs)?;
    let reach = members
        .iter()
        .map(|m| m.distance_km)
        .fold(0.0_f64, f64::max);
    latency_from_aggregate(&agg, reach, cfg)
}

/// Resolves RU ids against `layout` and evaluates the slice rooted at `tree`'s MEC node.
pub fn slice_latency_in_layout(
    layout: &Layout,
    tree: usize,
    ru_ids: &[usize],
    load_scale: f64,
    cfg: &ChannelConfig,
    ladders: &LadderSet,
) -> Result<SliceLatencyReport> {
    let members = slice_members(layout, tree, ru_ids)?;
    slice_latency(&members, load_scale, cfg, ladders)
}

pub fn slice_members<'a>(
    layout: &'a Layout,
    tree: usize,
    ru_ids: &[usize],
) -> Result<Vec<SliceMember<'a>>> {
    if layout.macro_site(tree).is_none() {
        return Err(Error::Topology(format!("no MEC site at tree {tree}")));
    }
    ru_ids
        .iter()
        .map(|&id| {
            let ru = layout
                .small(id)
                .ok_or_else(|| Error::Topology(format!("RU {id} is not part of the layout")))?;
            let distance_km = layout.fiber_distance(Node::Small(id), Node::Macro(tree))?;
            Ok(SliceMember { ru, distance_km })
        })
        .collect()
}

/// Traffic parameters shared by a homogeneous population of RUs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficProfile {
    /// Maximum attached users per RU.
    pub m: u32,
    /// Call arrival rate at full load (calls/s).
    pub gamma: f64,
    /// Call departure rate (calls/s).
    pub nu: f64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            m: 32,
            gamma: 32.0,
            nu: 1.0,
        }
    }
}

impl TrafficProfile {
    pub fn ru(&self, id: usize, split: Split) -> RuProfile {
        RuProfile {
            id,
            split,
            m: self.m,
            gamma: self.gamma,
            nu: self.nu,
            position: crate::layout::Point::new(0.0, 0.0),
            tree_id: 0,
        }
    }
}

/// One `(n71, n72)` mix evaluated for the feasibility region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCell {
    pub n71: u32,
    pub n72: u32,
    /// `None` when the mix overloads the channel.
    pub report: Option<SliceLatencyReport>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityRegion {
    pub load_scale: f64,
    pub threshold_us: f64,
    pub cells: Vec<RegionCell>,
}

impl FeasibilityRegion {
    pub fn feasible_pairs(&self) -> BTreeSet<(u32, u32)> {
        self.cells
            .iter()
            .filter(|c| c.feasible)
            .map(|c| (c.n71, c.n72))
            .collect()
    }

    /// Every feasible mix has all its dominated non-empty mixes feasible too.
    pub fn is_downward_closed(&self) -> bool {
        let set = self.feasible_pairs();
        set.iter().all(|&(a, b)| {
            (0..=a)
                .flat_map(|x| (0..=b).map(move |y| (x, y)))
                .filter(|&p| p != (0, 0))
                .all(|p| set.contains(&p))
        })
    }
}

/// Settings for a feasibility-region sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSpec {
    pub max71: u32,
    pub max72: u32,
    /// Common RU-to-MEC fiber distance (km).
    pub distance_km: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec {
            max71: 12,
            max72: 24,
            distance_km: 1.0,
        }
    }
}

/// All non-empty `(n71, n72)` mixes of identical RUs at a common distance, with
/// their latency and whether it meets `threshold_us`. The empty mix is not reported.
pub fn feasibility_region(
    load_scale: f64,
    threshold_us: f64,
    spec: &RegionSpec,
    traffic: &TrafficProfile,
    cfg: &ChannelConfig,
    ladders: &LadderSet,
) -> Result<FeasibilityRegion> {
    if !(threshold_us > 0.0) {
        return Err(Error::param("latency threshold must be > 0"));
    }
    cfg.validate()?;
    let per_ru = |split| {
        ru_size_pmf(
            &traffic.ru(0, split),
            ladders.for_split(split),
            load_scale,
            cfg.gc_s,
            cfg.segment_bytes,
        )
    };
    let p71 = per_ru(Split::Split71)?;
    let p72 = per_ru(Split::Split72)?;

    let mut cells = Vec::new();
    let mut row = SizePmf::point(0, cfg.segment_bytes)?;
    for n71 in 0..=spec.max71 {
        if n71 > 0 {
            row = convolve(&row, &p71)?;
        }
        let mut agg = row.clone();
        for n72 in 0..=spec.max72 {
            if n72 > 0 {
                agg = convolve(&agg, &p72)?;
            }
            if n71 == 0 && n72 == 0 {
                continue;
            }
            let report = match latency_from_aggregate(&agg, spec.distance_km, cfg) {
                Ok(r) => Some(r),
                Err(Error::Overload { .. }) => None,
                Err(e) => return Err(e),
            };
            let feasible = report.is_some_and(|r| r.total_us <= threshold_us);
            cells.push(RegionCell {
                n71,
                n72,
                report,
                feasible,
            });
        }
    }
    Ok(FeasibilityRegion {
        load_scale,
        threshold_us,
        cells,
    })
}
