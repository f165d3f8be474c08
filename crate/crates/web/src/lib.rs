//! WebAssembly bindings for the browser demo in `www/`. Every export takes plain
//! numbers and returns a JSON string, so the page needs no generated type glue.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use vpon_core::latency::{feasibility_region, slice_latency, ChannelConfig, RegionSpec, SliceMember, TrafficProfile};
use vpon_core::layout::{generate_layout, LayoutDoc, LayoutParams, DEFAULT_DETOUR};
use vpon_core::optimizer::{optimize_slices, Costs, OptimizeOutcome, OptimizeParams, SliceSolution, InfeasibleReport};
use vpon_core::traffic::{LadderSet, Split};
use vpon_core::Error;

#[derive(Serialize)]
struct RegionView {
    load: f64,
    threshold_us: f64,
    max71: u32,
    max72: u32,
    /// `[n71, n72, total_us or null, feasible]`
    cells: Vec<(u32, u32, Option<f64>, bool)>,
}

#[derive(Serialize)]
struct CurvePoint {
    load: f64,
    total_us: Option<f64>,
    wait_us: Option<f64>,
    rho: Option<f64>,
}

#[derive(Serialize)]
struct PlanView {
    layout: LayoutDoc,
    solution: Option<SliceSolution>,
    infeasible: Option<InfeasibleReport>,
}

fn ladders() -> Result<LadderSet, Error> {
    LadderSet::default_for(TrafficProfile::default().m)
}

fn to_json(value: &impl Serialize) -> Result<String, Error> {
    Ok(serde_json::to_string(value)?)
}

pub fn region_json(load: f64, threshold_us: f64, max71: u32, max72: u32, distance_km: f64) -> Result<String, Error> {
    let spec = RegionSpec {
        max71,
        max72,
        distance_km,
    };
    let region = feasibility_region(
        load,
        threshold_us,
        &spec,
        &TrafficProfile::default(),
        &ChannelConfig::default(),
        &ladders()?,
    )?;
    to_json(&RegionView {
        load,
        threshold_us,
        max71,
        max72,
        cells: region
            .cells
            .iter()
            .map(|c| (c.n71, c.n72, c.report.map(|r| r.total_us), c.feasible))
            .collect(),
    })
}

pub fn curve_json(n71: u32, n72: u32, distance_km: f64, points: u32) -> Result<String, Error> {
    if n71 + n72 == 0 || points < 2 {
        return Err(Error::Parameter("need at least one RU and two points".into()));
    }
    let traffic = TrafficProfile::default();
    let rus: Vec<_> = (0..n71)
        .map(|i| traffic.ru(i as usize, Split::Split71))
        .chain((0..n72).map(|i| traffic.ru((n71 + i) as usize, Split::Split72)))
        .collect();
    let members: Vec<SliceMember> = rus.iter().map(|ru| SliceMember { ru, distance_km }).collect();
    let (cfg, ladders) = (ChannelConfig::default(), ladders()?);
    let curve = (0..points)
        .map(|k| {
            let load = k as f64 / (points - 1) as f64;
            match slice_latency(&members, load, &cfg, &ladders) {
                Ok(r) => Ok(CurvePoint {
                    load,
                    total_us: Some(r.total_us),
                    wait_us: Some(r.wait_us),
                    rho: Some(r.utilization),
                }),
                Err(Error::Overload { utilization }) => Ok(CurvePoint {
                    load,
                    total_us: None,
                    wait_us: None,
                    rho: Some(utilization),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, Error>>()?;
    to_json(&curve)
}

#[allow(clippy::too_many_arguments)]
pub fn plan_json(
    seed: u64,
    n_macro: usize,
    smalls_per_macro: f64,
    load: f64,
    threshold_us: f64,
    w: usize,
    max_iterations: usize,
) -> Result<String, Error> {
    let params = LayoutParams {
        seed,
        n_macro,
        smalls_per_macro_mean: smalls_per_macro,
        ..LayoutParams::default()
    };
    let layout = generate_layout(&params, &TrafficProfile::default(), DEFAULT_DETOUR)?;
    let opt = OptimizeParams {
        load_scale: load,
        threshold_us,
        max_iterations,
        w,
        costs: Costs::default(),
        minimal_cuts: true,
    };
    let outcome = optimize_slices(&layout, &opt, &ChannelConfig::default(), &ladders()?)?;
    let (solution, infeasible) = match outcome {
        OptimizeOutcome::Solved(s) => (Some(s), None),
        OptimizeOutcome::Infeasible(r) => (None, Some(r)),
    };
    to_json(&PlanView {
        layout: layout.to_doc(),
        solution,
        infeasible,
    })
}

fn js(r: Result<String, Error>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Feasible `(n71, n72)` mixes at one load.
#[wasm_bindgen(js_name = feasibilityRegion)]
pub fn feasibility_region_js(
    load: f64,
    threshold_us: f64,
    max71: u32,
    max72: u32,
    distance_km: f64,
) -> Result<String, JsError> {
    js(region_json(load, threshold_us, max71, max72, distance_km))
}

/// Slice latency as load sweeps from 0 to 1.
#[wasm_bindgen(js_name = latencyCurve)]
pub fn latency_curve_js(n71: u32, n72: u32, distance_km: f64, points: u32) -> Result<String, JsError> {
    js(curve_json(n71, n72, distance_km, points))
}

/// Generates a layout and plans its slices.
#[wasm_bindgen(js_name = planLayout)]
pub fn plan_layout_js(
    seed: u32,
    n_macro: u32,
    smalls_per_macro: f64,
    load: f64,
    threshold_us: f64,
    w: u32,
    max_iterations: u32,
) -> Result<String, JsError> {
    js(plan_json(
        u64::from(seed),
        n_macro as usize,
        smalls_per_macro,
        load,
        threshold_us,
        w as usize,
        max_iterations as usize,
    ))
}
