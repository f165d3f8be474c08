use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use vpon_core::latency::{feasibility_region, slice_latency_in_layout};
use vpon_core::layout::Layout;
use vpon_core::optimizer::{
    optimize_slices, optimize_slices_with, AnalyticEvaluator, OptimizeOutcome, SolveDiagnostics,
};
use vpon_core::sim::{validate_cell, SimulatedEvaluator};
use vpon_core::traffic::Split;

use crate::scenario::Scenario;
use crate::CliError;

pub struct Job {
    pub scenario: Scenario,
    pub base: PathBuf,
    pub out: PathBuf,
}

fn internal(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Internal(e.into())
}

fn core_error(e: vpon_core::Error) -> CliError {
    use vpon_core::Error as E;
    match e {
        E::Parameter(_) | E::Topology(_) | E::Lookup(_) | E::Generation(_) | E::Json(_) => {
            CliError::Config(e.into())
        }
        _ => CliError::Internal(e.into()),
    }
}

fn writer(out: &Path, name: &str) -> Result<csv::Writer<File>, CliError> {
    let path = out.join(name);
    csv::Writer::from_path(&path)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(internal)
}

fn write_json(out: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let path = out.join(name);
    let mut f = File::create(&path)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(internal)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(internal)?;
    writeln!(f).map_err(internal)
}

fn fmt_us(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "inf".into()
    }
}

fn load_tag(load: f64) -> String {
    format!("{:.0}", load * 100.0)
}

pub fn feasibility(job: &Job) -> Result<(), CliError> {
    let s = &job.scenario;
    let ladders = s.ladders()?;
    let regions = s
        .loads
        .par_iter()
        .map(|&load| feasibility_region(load, s.threshold_us, &s.region, &s.traffic, &s.channel, &ladders))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core_error)?;
    let mut w = writer(&job.out, "region.csv")?;
    w.write_record(["load", "n71", "n72", "latency_us", "feasible"]).map_err(internal)?;
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| regions[a].load_scale.total_cmp(&regions[b].load_scale));
    for i in order {
        let region = &regions[i];
        for cell in &region.cells {
            let latency = cell.report.map_or(f64::INFINITY, |r| r.total_us);
            w.write_record([
                region.load_scale.to_string(),
                cell.n71.to_string(),
                cell.n72.to_string(),
                fmt_us(latency),
                cell.feasible.to_string(),
            ])
            .map_err(internal)?;
        }
        println!(
            "load {:>3}%: {} of {} mixes feasible",
            load_tag(region.load_scale),
            region.feasible_pairs().len(),
            region.cells.len()
        );
    }
    w.flush().map_err(internal)
}

struct Run {
    seed: u64,
    load: f64,
    max_iterations: usize,
    outcome: OptimizeOutcome,
}

fn diagnostics_of(outcome: &OptimizeOutcome) -> &SolveDiagnostics {
    match outcome {
        OptimizeOutcome::Solved(s) => &s.diagnostics,
        OptimizeOutcome::Infeasible(r) => &r.diagnostics,
    }
}

fn run_grid(s: &Scenario, layouts: &[(u64, Layout)]) -> Result<Vec<Run>, CliError> {
    let ladders = s.ladders()?;
    let cells: Vec<(usize, f64, usize)> = (0..layouts.len())
        .flat_map(|i| s.loads.iter().flat_map(move |&l| s.max_iterations.iter().map(move |&m| (i, l, m))))
        .collect();
    let mut runs = cells
        .par_iter()
        .map(|&(i, load, iters)| {
            let (seed, layout) = &layouts[i];
            let outcome =
                optimize_slices(layout, &s.optimize_params(load, iters), &s.channel, &ladders).map_err(core_error)?;
            Ok(Run {
                seed: *seed,
                load,
                max_iterations: iters,
                outcome,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    runs.sort_by(|a, b| {
        (a.seed, a.max_iterations)
            .cmp(&(b.seed, b.max_iterations))
            .then(a.load.total_cmp(&b.load))
    });
    Ok(runs)
}

pub fn optimize(job: &Job) -> Result<(), CliError> {
    let s = &job.scenario;
    let ladders = s.ladders()?;
    let layouts = s.layouts(&job.base)?;
    let runs = run_grid(s, &layouts)?;

    let mut latency = writer(&job.out, "latency.csv")?;
    latency
        .write_record([
            "seed", "max_iterations", "slice_id", "n71", "n72", "load", "wait_us", "prop_us", "total_us", "rho",
        ])
        .map_err(internal)?;
    let mut diag = writer(&job.out, "diagnostics.csv")?;
    diag.write_record([
        "seed", "load", "max_iterations", "iteration", "lb", "violations", "cuts", "incumbent",
    ])
    .map_err(internal)?;
    let mut edges = writer(&job.out, "edges.csv")?;
    edges
        .write_record([
            "seed", "load", "max_iterations", "ru", "split", "tree", "ru_x", "ru_y", "mec_x", "mec_y",
        ])
        .map_err(internal)?;

    let mut infeasible = 0;
    for run in &runs {
        let layout = &layouts.iter().find(|(seed, _)| *seed == run.seed).expect("layout per seed").1;
        let key = [run.seed.to_string(), load_tag(run.load), run.max_iterations.to_string()];
        let name = format!("seed{}_load{}_iter{}", key[0], key[1], key[2]);
        for r in &diagnostics_of(&run.outcome).records {
            diag.write_record([
                run.seed.to_string(),
                run.load.to_string(),
                run.max_iterations.to_string(),
                r.iteration.to_string(),
                r.lb.to_string(),
                r.violations.to_string(),
                r.cuts.to_string(),
                r.incumbent.to_string(),
            ])
            .map_err(internal)?;
        }
        match &run.outcome {
            OptimizeOutcome::Solved(sol) => {
                write_json(&job.out, &format!("solution_{name}.json"), sol)?;
                for (&tree, rus) in &sol.slices {
                    let report = slice_latency_in_layout(layout, tree, rus, run.load, &s.channel, &ladders)
                        .map_err(core_error)?;
                    let n71 = rus.iter().filter(|&&r| layout.smalls()[r].split == Split::Split71).count();
                    latency
                        .write_record([
                            run.seed.to_string(),
                            run.max_iterations.to_string(),
                            tree.to_string(),
                            n71.to_string(),
                            (rus.len() - n71).to_string(),
                            run.load.to_string(),
                            fmt_us(report.wait_us),
                            fmt_us(report.propagation_us),
                            fmt_us(report.total_us),
                            format!("{:.6}", report.utilization),
                        ])
                        .map_err(internal)?;
                    let mec = layout.macros()[tree].position;
                    for &r in rus {
                        let ru = &layout.smalls()[r];
                        edges
                            .write_record([
                                run.seed.to_string(),
                                run.load.to_string(),
                                run.max_iterations.to_string(),
                                r.to_string(),
                                ru.split.to_string(),
                                tree.to_string(),
                                ru.position.x.to_string(),
                                ru.position.y.to_string(),
                                mec.x.to_string(),
                                mec.y.to_string(),
                            ])
                            .map_err(internal)?;
                    }
                }
                println!(
                    "seed {} load {:>3}% max_iterations {}: {} MEC nodes, {} iterations, {} cuts, {:.1} ms",
                    run.seed,
                    load_tag(run.load),
                    run.max_iterations,
                    sol.mec_count(),
                    sol.iterations,
                    sol.cuts,
                    sol.wall_ms
                );
            }
            OptimizeOutcome::Infeasible(report) => {
                infeasible += 1;
                write_json(&job.out, &format!("infeasible_{name}.json"), report)?;
                println!(
                    "seed {} load {:>3}% max_iterations {}: infeasible ({})",
                    run.seed,
                    load_tag(run.load),
                    run.max_iterations,
                    report.reason
                );
            }
        }
    }
    for (seed, layout) in &layouts {
        let text = layout.to_json().map_err(core_error)?;
        std::fs::write(job.out.join(format!("layout_seed{seed}.json")), text).map_err(internal)?;
    }
    for w in [&mut latency, &mut diag, &mut edges] {
        w.flush().map_err(internal)?;
    }
    if infeasible > 0 {
        return Err(CliError::Infeasible(format!("{infeasible} of {} runs found no feasible slicing", runs.len())));
    }
    Ok(())
}

pub fn validate(job: &Job) -> Result<(), CliError> {
    let s = &job.scenario;
    let ladders = s.ladders()?;
    let spec = s.validation_spec();
    let grid = s.validation_grid();
    let base_seed = s.seeds[0];
    let cells: Vec<(u32, u32, f64)> = grid
        .iter()
        .flat_map(|&(a, b)| s.loads.iter().map(move |&l| (a, b, l)))
        .collect();
    let mut rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(n71, n72, load))| {
            validate_cell(n71, n72, load, &spec, &s.traffic, &ladders, &s.sim_config(base_seed + i as u64))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(core_error)?;
    rows.sort_by(|a, b| (a.n71, a.n72).cmp(&(b.n71, b.n72)).then(a.load.total_cmp(&b.load)));

    let mut w = writer(&job.out, "validation.csv")?;
    w.write_record([
        "n71",
        "n72",
        "load",
        "sim_mean_us",
        "analytic_us",
        "rel_err",
        "feasible_sim",
        "feasible_analytic",
        "rho",
        "overloaded",
        "within_tolerance",
    ])
    .map_err(internal)?;
    for r in &rows {
        w.write_record([
            r.n71.to_string(),
            r.n72.to_string(),
            r.load.to_string(),
            fmt_us(r.sim_mean_us),
            fmt_us(r.analytic_us),
            if r.rel_err.is_finite() { format!("{:.6}", r.rel_err) } else { "inf".into() },
            r.feasible_sim.to_string(),
            r.feasible_analytic.to_string(),
            format!("{:.6}", r.rho),
            r.overloaded.to_string(),
            r.within_tolerance.to_string(),
        ])
        .map_err(internal)?;
    }
    w.flush().map_err(internal)?;
    let stable: Vec<_> = rows.iter().filter(|r| !r.overloaded).collect();
    let max_err = stable.iter().map(|r| r.rel_err).fold(0.0_f64, f64::max);
    let flagged = stable.iter().filter(|r| !r.within_tolerance).count();
    println!(
        "max relative error {max_err:.4} over {} stable cells ({} overloaded, {flagged} beyond tolerance {})",
        stable.len(),
        rows.len() - stable.len(),
        spec.tolerance
    );
    Ok(())
}

pub fn benchmark(job: &Job, sim_in_loop: bool) -> Result<(), CliError> {
    let s = &job.scenario;
    let ladders = s.ladders()?;
    let layouts = s.layouts(&job.base)?;
    let mut w = writer(&job.out, "timing.csv")?;
    w.write_record(["seed", "evaluator", "load", "max_iterations", "wall_ms", "mec_count", "iterations"])
        .map_err(internal)?;
    let mut loads = s.loads.clone();
    loads.sort_by(f64::total_cmp);
    let mut iters = s.max_iterations.clone();
    iters.sort_unstable();
    let mut ratios = Vec::new();
    // Sequential on purpose: parallel runs would distort the wall-clock numbers.
    for (seed, layout) in &layouts {
        for &load in &loads {
            for &max_iterations in &iters {
                let params = s.optimize_params(load, max_iterations);
                let started = Instant::now();
                let mut evaluator = AnalyticEvaluator::new(layout, load, &s.channel, &ladders);
                let analytic = optimize_slices_with(layout, &params, &mut evaluator).map_err(core_error)?;
                let analytic_ms = started.elapsed().as_secs_f64() * 1e3;
                let mut rows = vec![("analytic", analytic_ms, analytic)];
                if sim_in_loop {
                    let started = Instant::now();
                    let mut evaluator = SimulatedEvaluator::new(layout, load, &ladders, s.sim_config(*seed));
                    let simulated = optimize_slices_with(layout, &params, &mut evaluator).map_err(core_error)?;
                    let sim_ms = started.elapsed().as_secs_f64() * 1e3;
                    ratios.push(sim_ms / analytic_ms.max(1e-6));
                    rows.push(("simulated", sim_ms, simulated));
                }
                for (name, ms, outcome) in rows {
                    let (mec, iterations) = match &outcome {
                        OptimizeOutcome::Solved(sol) => (sol.mec_count().to_string(), sol.iterations),
                        OptimizeOutcome::Infeasible(r) => (String::new(), r.iterations),
                    };
                    w.write_record([
                        seed.to_string(),
                        name.to_string(),
                        load.to_string(),
                        max_iterations.to_string(),
                        format!("{ms:.3}"),
                        mec,
                        iterations.to_string(),
                    ])
                    .map_err(internal)?;
                }
            }
        }
    }
    w.flush().map_err(internal)?;
    if !ratios.is_empty() {
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        println!("simulation-in-the-loop slowdown: mean {mean:.1}x, min {min:.1}x over {} cells", ratios.len());
    }
    Ok(())
}

pub fn gen_layout(job: &Job) -> Result<(), CliError> {
    let layouts = job.scenario.layouts(&job.base)?;
    let single = layouts.len() == 1;
    for (seed, layout) in &layouts {
        let name = if single { "layout.json".to_string() } else { format!("layout_seed{seed}.json") };
        let text = layout.to_json().map_err(core_error)?;
        std::fs::write(job.out.join(&name), text + "\n").map_err(internal)?;
        println!(
            "{name}: {} macro sites, {} RUs",
            layout.tree_count(),
            layout.ru_count()
        );
    }
    Ok(())
}
