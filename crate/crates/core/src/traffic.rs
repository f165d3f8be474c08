//! Per-RU user occupancy and the variable-rate eCPRI size distributions it induces.
//!
//! Users attach to a radio unit as an Erlang loss system (M/M/m/m). The number of
//! active users selects a step on the RU's eCPRI rate ladder, and each rate maps to
//! a whole number of fronthaul segments per grant cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::SizePmf;
use crate::layout::Point;

/// Split-7.1 fronthaul rate span for a 100 MHz, 4T4R cell (bits/s).
pub const SPLIT71_RATE_RANGE: (f64, f64) = (1.378e9, 7.384e9);
/// Split-7.2 fronthaul rate span for a 100 MHz, 4T4R cell (bits/s).
pub const SPLIT72_RATE_RANGE: (f64, f64) = (273.98e6, 2.92e9);

/// Number of rate steps in the default ladders.
pub const DEFAULT_LADDER_STEPS: u32 = 4;

const PMF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "7.1")]
    Split71,
    #[serde(rename = "7.2")]
    Split72,
}

impl Split {
    pub fn rate_range(self) -> (f64, f64) {
        match self {
            Split::Split71 => SPLIT71_RATE_RANGE,
            Split::Split72 => SPLIT72_RATE_RANGE,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Split71 => f.write_str("7.1"),
            Split::Split72 => f.write_str("7.2"),
        }
    }
}

/// One radio unit at a small cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuProfile {
    pub id: usize,
    pub split: Split,
    /// Maximum number of simultaneously attached users.
    pub m: u32,
    /// Call arrival rate (calls/s) at full load.
    pub gamma: f64,
    /// Call departure rate (calls/s).
    pub nu: f64,
    pub position: Point,
    pub tree_id: usize,
}

impl RuProfile {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::param(format!("RU {}: m must be >= 1", self.id)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::param(format!("RU {}: gamma must be >= 0", self.id)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::param(format!("RU {}: nu must be > 0", self.id)));
        }
        if !self.position.x.is_finite() || !self.position.y.is_finite() {
            return Err(Error::param(format!("RU {}: position not finite", self.id)));
        }
        Ok(())
    }

    /// Offered traffic in Erlangs once the arrival rate is scaled by `load_scale`.
    pub fn offered_erlangs(&self, load_scale: f64) -> f64 {
        self.gamma * load_scale / self.nu
    }
}

/// User-count thresholds and the eCPRI rate used up to each threshold.
///
/// Level `i` is selected while the number of active users lies in
/// `(F_{i-1}, F_i]`, with `F_0 = 0` and the idle state folded into level 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLadder", into = "RawLadder")]
pub struct RateLadder {
    thresholds: Vec<u32>,
    rates: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLadder {
    thresholds: Vec<u32>,
    rates: Vec<f64>,
}

impl TryFrom<RawLadder> for RateLadder {
    type Error = Error;
    fn try_from(raw: RawLadder) -> Result<Self> {
        RateLadder::new(raw.thresholds, raw.rates)
    }
}

impl From<RateLadder> for RawLadder {
    fn from(l: RateLadder) -> Self {
        RawLadder {
            thresholds: l.thresholds,
            rates: l.rates,
        }
    }
}

impl RateLadder {
    pub fn new(thresholds: Vec<u32>, rates: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::param("rate ladder needs at least one level"));
        }
        if thresholds.len() != rates.len() {
            return Err(Error::param(format!(
                "rate ladder has {} thresholds but {} rates",
                thresholds.len(),
                rates.len()
            )));
        }
        if thresholds[0] == 0 {
            return Err(Error::param("first ladder threshold must be >= 1"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("ladder thresholds must be strictly increasing"));
        }
        if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::param("ladder rates must be positive and finite"));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("ladder rates must be strictly increasing"));
        }
        Ok(RateLadder { thresholds, rates })
    }

    /// `steps` equally spaced thresholds over `1..=m` with rates linearly
    /// interpolated from `lo` to `hi`. Uses fewer steps when `m < steps`.
    pub fn linear(m: u32, steps: u32, lo: f64, hi: f64) -> Result<Self> {
        if m == 0 || steps == 0 {
            return Err(Error::param("linear ladder needs m >= 1 and steps >= 1"));
        }
        let n = steps.min(m);
        let thresholds = (1..=n)
            .map(|i| (u64::from(i) * u64::from(m)).div_ceil(u64::from(n)) as u32)
            .collect();
        let rates = if n == 1 {
            vec![hi]
        } else {
            (0..n)
                .map(|i| lo + (hi - lo) * f64::from(i) / f64::from(n - 1))
                .collect()
        };
        RateLadder::new(thresholds, rates)
    }

    pub fn default_for(split: Split, m: u32) -> Result<Self> {
        let (lo, hi) = split.rate_range();
        RateLadder::linear(m, DEFAULT_LADDER_STEPS, lo, hi)
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn levels(&self) -> usize {
        self.rates.len()
    }

    /// The largest threshold, which must equal the RU's user capacity.
    pub fn max_users(&self) -> u32 {
        *self.thresholds.last().expect("ladder is non-empty")
    }

    /// Index of the rate level serving `users` active users.
    pub fn level_for(&self, users: u32) -> Option<usize> {
        if users > self.max_users() {
            return None;
        }
        Some(self.thresholds.partition_point(|&f| f < users))
    }
}

/// Rate ladders for both functional splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSet {
    pub split71: RateLadder,
    pub split72: RateLadder,
}

impl LadderSet {
    pub fn default_for(m: u32) -> Result<Self> {
        Ok(LadderSet {
            split71: RateLadder::default_for(Split::Split71, m)?,
            split72: RateLadder::default_for(Split::Split72, m)?,
        })
    }

    pub fn for_split(&self, split: Split) -> &RateLadder {
        match split {
            Split::Split71 => &self.split71,
            Split::Split72 => &self.split72,
        }
    }
}

/// Steady-state distribution of the number of attached users, indexed `0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy(Vec<f64>);

impl Occupancy {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn max_users(&self) -> u32 {
        (self.0.len() - 1) as u32
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Probability that all `m` servers are busy (Erlang B).
    pub fn blocking(&self) -> f64 {
        *self.0.last().expect("occupancy is non-empty")
    }
}

/// Erlang loss-system occupancy `p_k ∝ (γ/ν)^k / k!` for `k = 0..=m`.
///
/// Terms are accumulated in log space through `ln t_k = ln t_{k-1} + ln a - ln k`
/// and rescaled by the largest term, so `m` in the tens of thousands is safe.
pub fn erlang_occupancy(gamma: f64, nu: f64, m: u32) -> Result<Occupancy> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::param(format!("departure rate must be > 0, got {nu}")));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::param(format!("arrival rate must be >= 0, got {gamma}")));
    }
    if m == 0 {
        return Err(Error::param("user capacity m must be >= 1"));
    }
    let a = gamma / nu;
    let n = m as usize + 1;
    if a == 0.0 {
        let mut probs = vec![0.0; n];
        probs[0] = 1.0;
        return Ok(Occupancy(probs));
    }
    let ln_a = a.ln();
    let mut log_terms = Vec::with_capacity(n);
    let mut acc = 0.0;
    log_terms.push(acc);
    for k in 1..n {
        acc += ln_a - (k as f64).ln();
        log_terms.push(acc);
    }
    let peak = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_terms.iter().map(|t| (t - peak).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(Occupancy(probs))
}

/// Distribution over the eCPRI rates of one RU.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePmf {
    entries: Vec<(f64, f64)>,
}

impl RatePmf {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::param("rate pmf is empty"));
        }
        if entries.iter().any(|&(r, p)| !(r > 0.0) || !(0.0..=1.0 + PMF_TOLERANCE).contains(&p)) {
            return Err(Error::param("rate pmf has invalid rate or probability"));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::param(format!("rate pmf sums to {total}")));
        }
        Ok(RatePmf { entries })
    }

    /// `(rate bits/s, probability)` pairs in ascending rate order.
    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn mean_rate(&self) -> f64 {
        self.entries.iter().map(|(r, p)| r * p).sum()
    }
}

/// Aggregates user-count probabilities into rate-level probabilities.
pub fn rate_probabilities(occupancy: &Occupancy, ladder: &RateLadder) -> Result<RatePmf> {
    if occupancy.max_users() != ladder.max_users() {
        return Err(Error::param(format!(
            "occupancy covers 0..={} users but ladder tops out at {}",
            occupancy.max_users(),
            ladder.max_users()
        )));
    }
    let mut mass = vec![0.0; ladder.levels()];
    for (users, p) in occupancy.probs().iter().enumerate() {
        let level = ladder
            .level_for(users as u32)
            .expect("users bounded by ladder maximum");
        mass[level] += p;
    }
    let entries = ladder.rates().iter().copied().zip(mass).collect();
    RatePmf::new(entries)
}

/// Whole eCPRI segments needed to carry `rate` bits/s for one grant cycle.
pub fn segments_per_cycle(rate_bps: f64, gc_s: f64, segment_bytes: u32) -> u64 {
    let exact = rate_bps * gc_s / (8.0 * f64::from(segment_bytes));
    // Guard against ceil() bumping an exact integer that picked up rounding noise.
    (exact - 1e-9).ceil().max(0.0) as u64
}

/// Segments-per-grant-cycle distribution for one RU at the given fraction of full load.
pub fn ru_size_pmf(
    profile: &RuProfile,
    ladder: &RateLadder,
    load_scale: f64,
    gc_s: f64,
    segment_bytes: u32,
) -> Result<SizePmf> {
    if !(gc_s > 0.0) {
        return Err(Error::param("grant cycle must be > 0"));
    }
    if segment_bytes == 0 {
        return Err(Error::param("segment size must be > 0"));
    }
    if !(0.0..=1.0).contains(&load_scale) {
        return Err(Error::param(format!("load scale {load_scale} outside [0, 1]")));
    }
    profile.validate()?;
    let occupancy = erlang_occupancy(profile.gamma * load_scale, profile.nu, profile.m)?;
    let rates = rate_probabilities(&occupancy, ladder)?;
    SizePmf::from_entries(
        rates
            .entries()
            .iter()
            .map(|&(r, p)| (segments_per_cycle(r, gc_s, segment_bytes) as usize, p)),
        segment_bytes,
    )
}
