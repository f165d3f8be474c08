use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vpon_core::latency::{ChannelConfig, RegionSpec, TrafficProfile};
use vpon_core::layout::{generate_layout, Layout, LayoutDoc, LayoutParams, DEFAULT_DETOUR};
use vpon_core::optimizer::{Costs, OptimizeParams};
use vpon_core::sim::{ArrivalMode, RateDynamics, SimConfig, ValidationSpec};
use vpon_core::traffic::{LadderSet, RateLadder, Split};

use crate::CliError;

/// Where the network layout comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LayoutSource {
    /// Synthetic layout; the scenario seeds replace `seed`.
    Generate(LayoutParams),
    Inline(LayoutDoc),
    /// Layout JSON file, relative to the scenario file.
    File(PathBuf),
}

impl Default for LayoutSource {
    fn default() -> Self {
        LayoutSource::Generate(LayoutParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub duration: u64,
    pub warmup: Option<u64>,
    pub arrival_mode: ArrivalMode,
    pub dynamics: RateDynamics,
}

impl Default for SimSettings {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSettings {
            duration: d.duration,
            warmup: d.warmup,
            arrival_mode: d.arrival_mode,
            dynamics: d.dynamics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSettings {
    /// `(n71, n72)` mixes. Empty means every mix of 1 to `max_rus` RUs.
    pub grid: Vec<(u32, u32)>,
    pub max_rus: u32,
    pub distance_km: f64,
    pub tolerance: f64,
}

impl Default for ValidateSettings {
    fn default() -> Self {
        ValidateSettings {
            grid: Vec::new(),
            max_rus: 8,
            distance_km: 1.0,
            tolerance: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub layout: LayoutSource,
    pub detour: f64,
    pub traffic: TrafficProfile,
    /// Rate ladders per split; linear defaults sized to `traffic.m` when absent.
    pub ladders: Option<LadderSet>,
    pub channel: ChannelConfig,
    pub threshold_us: f64,
    /// Fractions of full load in [0, 1].
    pub loads: Vec<f64>,
    pub w: usize,
    pub max_iterations: Vec<usize>,
    pub minimal_cuts: bool,
    pub seeds: Vec<u64>,
    pub costs: Costs,
    pub region: RegionSpec,
    pub sim: SimSettings,
    pub validate: ValidateSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            layout: LayoutSource::default(),
            detour: DEFAULT_DETOUR,
            traffic: TrafficProfile::default(),
            ladders: None,
            channel: ChannelConfig::default(),
            threshold_us: 100.0,
            loads: vec![0.3],
            w: 3,
            max_iterations: vec![10],
            minimal_cuts: false,
            seeds: vec![1],
            costs: Costs::default(),
            region: RegionSpec::default(),
            sim: SimSettings::default(),
            validate: ValidateSettings::default(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(anyhow::anyhow!(msg.into()))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(format!("scenario key `{path}`: {}", e.inner()))
        })?;
        scenario.check()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Scenario::from_json(&text)?, base))
    }

    fn check(&self) -> Result<(), CliError> {
        if self.loads.is_empty() {
            return Err(config_error("scenario key `loads`: at least one load is required"));
        }
        if let Some(l) = self.loads.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(config_error(format!("scenario key `loads`: {l} is outside [0, 1]")));
        }
        if !(self.threshold_us > 0.0) {
            return Err(config_error("scenario key `threshold_us`: must be > 0"));
        }
        if self.w == 0 {
            return Err(config_error("scenario key `w`: must be >= 1"));
        }
        if self.max_iterations.is_empty() || self.max_iterations.contains(&0) {
            return Err(config_error("scenario key `max_iterations`: needs values >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(config_error("scenario key `seeds`: at least one seed is required"));
        }
        if !(self.detour >= 1.0) {
            return Err(config_error("scenario key `detour`: must be >= 1"));
        }
        if !(self.validate.tolerance > 0.0) {
            return Err(config_error("scenario key `validate.tolerance`: must be > 0"));
        }
        self.channel
            .validate()
            .map_err(|e| config_error(format!("scenario key `channel`: {e}")))?;
        self.ladders()?;
        Ok(())
    }

    pub fn ladders(&self) -> Result<LadderSet, CliError> {
        let ladders = match &self.ladders {
            Some(l) => l.clone(),
            None => LadderSet::default_for(self.traffic.m)
                .map_err(|e| config_error(format!("scenario key `traffic.m`: {e}")))?,
        };
        for split in [Split::Split71, Split::Split72] {
            let l: &RateLadder = ladders.for_split(split);
            if l.max_users() != self.traffic.m {
                return Err(config_error(format!(
                    "scenario key `ladders`: split {split} ladder ends at {} users but traffic.m is {}",
                    l.max_users(),
                    self.traffic.m
                )));
            }
        }
        Ok(ladders)
    }

    /// Layouts keyed by seed. Fixed layouts are shared by every seed.
    pub fn layouts(&self, base: &Path) -> Result<Vec<(u64, Layout)>, CliError> {
        let fixed = match &self.layout {
            LayoutSource::Generate(_) => None,
            LayoutSource::Inline(doc) => Some(
                Layout::from_doc(doc, &self.traffic, self.detour)
                    .map_err(|e| config_error(format!("scenario key `layout.inline`: {e}")))?,
            ),
            LayoutSource::File(path) => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| config_error(format!("cannot read layout {}: {e}", full.display())))?;
                Some(
                    Layout::from_json(&text, &self.traffic, self.detour)
                        .map_err(|e| config_error(format!("layout {}: {e}", full.display())))?,
                )
            }
        };
        self.seeds
            .iter()
            .map(|&seed| {
                let layout = match (&fixed, &self.layout) {
                    (Some(l), _) => l.clone(),
                    (None, LayoutSource::Generate(p)) => {
                        let params = LayoutParams { seed, ..p.clone() };
                        generate_layout(&params, &self.traffic, self.detour)
                            .map_err(|e| config_error(format!("scenario key `layout.generate`: {e}")))?
                    }
                    (None, _) => unreachable!("only generated layouts vary by seed"),
                };
                Ok((seed, layout))
            })
            .collect()
    }

    pub fn optimize_params(&self, load: f64, max_iterations: usize) -> OptimizeParams {
        OptimizeParams {
            load_scale: load,
            threshold_us: self.threshold_us,
            max_iterations,
            w: self.w,
            costs: self.costs.clone(),
            minimal_cuts: self.minimal_cuts,
        }
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            duration: self.sim.duration,
            seed,
            warmup: self.sim.warmup,
            channel: self.channel.clone(),
            arrival_mode: self.sim.arrival_mode,
            dynamics: self.sim.dynamics,
        }
    }

    pub fn validation_spec(&self) -> ValidationSpec {
        ValidationSpec {
            threshold_us: self.threshold_us,
            tolerance: self.validate.tolerance,
            distance_km: self.validate.distance_km,
        }
    }

    pub fn validation_grid(&self) -> Vec<(u32, u32)> {
        if !self.validate.grid.is_empty() {
            let mut grid = self.validate.grid.clone();
            grid.sort_unstable();
            grid.dedup();
            return grid;
        }
        (1..=self.validate.max_rus)
            .flat_map(|n| (0..=n).map(move |a| (a, n - a)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_uses_defaults() {
        let s = Scenario::from_json("{}").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.ladders().unwrap(), LadderSet::default_for(32).unwrap());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Scenario::from_json(r#"{"channel": {"line_rate": 1e9}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("channel.line_rate"), "{msg}");
    }

    #[test]
    fn bad_values_are_rejected() {
        for doc in [
            r#"{"loads": []}"#,
            r#"{"loads": [1.5]}"#,
            r#"{"threshold_us": 0}"#,
            r#"{"w": 0}"#,
            r#"{"max_iterations": [0]}"#,
            r#"{"seeds": []}"#,
            r#"{"traffic": {"m": 8}, "ladders": {"split71": {"thresholds": [4, 32], "rates": [1e9, 2e9]}, "split72": {"thresholds": [32], "rates": [1e9]}}}"#,
        ] {
            assert!(matches!(Scenario::from_json(doc), Err(CliError::Config(_))), "{doc}");
        }
    }

    #[test]
    fn generated_layouts_follow_seeds() {
        let s = Scenario::from_json(r#"{"seeds": [4, 9], "layout": {"generate": {"n_macro": 2}}}"#).unwrap();
        let layouts = s.layouts(Path::new(".")).unwrap();
        assert_eq!(layouts.iter().map(|l| l.0).collect::<Vec<_>>(), vec![4, 9]);
        assert!(layouts.iter().all(|(_, l)| l.tree_count() == 2));
        assert_ne!(layouts[0].1, layouts[1].1);
    }

    #[test]
    fn validation_grid_defaults_to_all_mixes() {
        let s = Scenario::default();
        let grid = s.validation_grid();
        assert_eq!(grid.len(), (2..=9).sum::<usize>());
        assert!(grid.contains(&(8, 0)) && grid.contains(&(0, 1)));
    }
}
