//! Minimal-MEC slice planning.
//!
//! The slice program is solved without its latency rows; the latency of every
//! resulting slice is then checked against the threshold. Each violating slice
//! membership is excluded with a no-good cut and the program is re-solved. When a
//! given MEC lower bound has consumed its iteration budget the bound is raised,
//! trading solution quality for bounded run time.

mod bnb;
mod model;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::latency::{slice_latency_in_layout, ChannelConfig, SliceLatencyReport};
use crate::layout::{ring_order, Layout, Point};
use crate::traffic::LadderSet;

pub use bnb::{solve_bnb, BnbOutcome, BnbSolution};
pub use model::{build_model, BinaryLinearProgram, Costs, Row, RowKind, Sense, VarKind};

/// Latency verdict for one candidate slice. `latency_us` is `None` on overload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceVerdict {
    pub latency_us: Option<f64>,
    pub report: Option<SliceLatencyReport>,
}

/// Source of slice latencies for the iterative loop.
pub trait SliceEvaluator {
    fn evaluate(&mut self, tree: usize, members: &[usize]) -> Result<SliceVerdict>;
}

/// Memoised analytical latency of slices within one layout.
pub struct AnalyticEvaluator<'a> {
    layout: &'a Layout,
    load_scale: f64,
    cfg: &'a ChannelConfig,
    ladders: &'a LadderSet,
    cache: HashMap<(usize, Vec<usize>), SliceVerdict>,
}

impl<'a> AnalyticEvaluator<'a> {
    pub fn new(layout: &'a Layout, load_scale: f64, cfg: &'a ChannelConfig, ladders: &'a LadderSet) -> Self {
        AnalyticEvaluator {
            layout,
            load_scale,
            cfg,
            ladders,
            cache: HashMap::new(),
        }
    }

    pub fn distinct_evaluations(&self) -> usize {
        self.cache.len()
    }
}

impl SliceEvaluator for AnalyticEvaluator<'_> {
    fn evaluate(&mut self, tree: usize, members: &[usize]) -> Result<SliceVerdict> {
        let key = (tree, members.to_vec());
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let verdict = match slice_latency_in_layout(self.layout, tree, members, self.load_scale, self.cfg, self.ladders)
        {
            Ok(r) => SliceVerdict {
                latency_us: Some(r.total_us),
                report: Some(r),
            },
            Err(Error::Overload { .. }) => SliceVerdict {
                latency_us: None,
                report: None,
            },
            Err(e) => return Err(e),
        };
        self.cache.insert(key, verdict);
        Ok(verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeParams {
    pub load_scale: f64,
    pub threshold_us: f64,
    pub max_iterations: usize,
    /// Size of each tree's nearest-neighbour set.
    pub w: usize,
    pub costs: Costs,
    /// Shrink each violating slice to a minimal violating subset before cutting it.
    /// Valid because slice latency only grows as RUs join; fewer iterations, more
    /// latency evaluations per iteration.
    #[serde(default)]
    pub minimal_cuts: bool,
}

/// One pass of the iterative loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lb: usize,
    pub violations: usize,
    pub cuts: usize,
    pub incumbent: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub records: Vec<IterationRecord>,
}

/// Closed level-1 ring through a slice's MEC site and its RUs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRing {
    /// RU ids in visiting order, starting after the MEC site.
    pub order: Vec<usize>,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSolution {
    pub active_trees: Vec<usize>,
    pub slices: BTreeMap<usize, Vec<usize>>,
    pub latency_us: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reports: BTreeMap<usize, SliceLatencyReport>,
    pub rings: BTreeMap<usize, SliceRing>,
    pub objective: f64,
    pub iterations: usize,
    pub cuts: usize,
    pub wall_ms: f64,
    #[serde(skip)]
    pub diagnostics: SolveDiagnostics,
}

impl SliceSolution {
    pub fn mec_count(&self) -> usize {
        self.active_trees.len()
    }

    /// The tree serving each RU.
    pub fn assignment(&self) -> BTreeMap<usize, usize> {
        self.slices
            .iter()
            .flat_map(|(&t, rus)| rus.iter().map(move |&r| (r, t)))
            .collect()
    }

    /// Changes needed to move from `self` to `next`.
    pub fn diff(&self, next: &SliceSolution) -> SolutionDiff {
        let before: BTreeSet<_> = self.active_trees.iter().copied().collect();
        let after: BTreeSet<_> = next.active_trees.iter().copied().collect();
        let old = self.assignment();
        let moved = next
            .assignment()
            .into_iter()
            .filter_map(|(ru, to)| match old.get(&ru) {
                Some(&from) if from != to => Some(Migration { ru, from, to }),
                _ => None,
            })
            .collect();
        SolutionDiff {
            opened: after.difference(&before).copied().collect(),
            closed: before.difference(&after).copied().collect(),
            moved,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Migration {
    pub ru: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionDiff {
    pub opened: Vec<usize>,
    pub closed: Vec<usize>,
    pub moved: Vec<Migration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleReport {
    pub reason: String,
    /// The cut program itself has no solution, as opposed to the iteration budget
    /// running out.
    pub proven: bool,
    pub lower_bound: usize,
    pub iterations: usize,
    pub cuts: usize,
    pub wall_ms: f64,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizeOutcome {
    Solved(SliceSolution),
    Infeasible(InfeasibleReport),
}

impl OptimizeOutcome {
    pub fn solution(&self) -> Option<&SliceSolution> {
        match self {
            OptimizeOutcome::Solved(s) => Some(s),
            OptimizeOutcome::Infeasible(_) => None,
        }
    }
}

/// Slices (tree → sorted RU ids) of a solver assignment; trees without RUs are dropped.
fn extract_slices(program: &BinaryLinearProgram, values: &[bool]) -> BTreeMap<usize, Vec<usize>> {
    let mut slices: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, var) in program.vars().iter().enumerate() {
        if let VarKind::Assign { ru, tree } = *var {
            if values[j] {
                slices.entry(tree).or_default().push(ru);
            }
        }
    }
    for rus in slices.values_mut() {
        rus.sort_unstable();
    }
    slices
}

fn open_count(program: &BinaryLinearProgram, values: &[bool]) -> usize {
    (0..program.tree_count())
        .filter(|&t| values[program.alpha_var(t)])
        .count()
}

fn violating_slices(
    slices: &BTreeMap<usize, Vec<usize>>,
    threshold_us: f64,
    evaluator: &mut dyn SliceEvaluator,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (&tree, rus) in slices {
        if violates(tree, rus, threshold_us, evaluator)? {
            out.push(tree);
        }
    }
    Ok(out)
}

fn violates(tree: usize, rus: &[usize], threshold_us: f64, evaluator: &mut dyn SliceEvaluator) -> Result<bool> {
    Ok(!evaluator
        .evaluate(tree, rus)?
        .latency_us
        .is_some_and(|t| t <= threshold_us))
}

/// Drops members one at a time while the remainder still violates.
fn minimal_violating_subset(
    tree: usize,
    rus: &[usize],
    threshold_us: f64,
    evaluator: &mut dyn SliceEvaluator,
) -> Result<Vec<usize>> {
    let mut core = rus.to_vec();
    let mut i = core.len();
    while i > 0 {
        i -= 1;
        if core.len() == 1 {
            break;
        }
        let mut trial = core.clone();
        trial.remove(i);
        if violates(tree, &trial, threshold_us, evaluator)? {
            core = trial;
        }
    }
    Ok(core)
}

fn slice_ring(layout: &Layout, tree: usize, rus: &[usize]) -> SliceRing {
    let mut points: Vec<Point> = vec![layout.macros()[tree].position];
    points.extend(rus.iter().map(|&r| layout.smalls()[r].position));
    let ring = ring_order(&points);
    SliceRing {
        order: ring.order.iter().skip(1).map(|&i| rus[i - 1]).collect(),
        length_km: ring.tour_length * layout.detour(),
    }
}

/// Runs the iterative cut loop with the analytical latency model.
pub fn optimize_slices(
    layout: &Layout,
    params: &OptimizeParams,
    cfg: &ChannelConfig,
    ladders: &LadderSet,
) -> Result<OptimizeOutcome> {
    let mut evaluator = AnalyticEvaluator::new(layout, params.load_scale, cfg, ladders);
    optimize_slices_with(layout, params, &mut evaluator)
}

/// Runs the iterative cut loop, judging slices with `evaluator`.
pub fn optimize_slices_with(
    layout: &Layout,
    params: &OptimizeParams,
    evaluator: &mut dyn SliceEvaluator,
) -> Result<OptimizeOutcome> {
    if params.max_iterations == 0 {
        return Err(Error::param("max_iterations must be >= 1"));
    }
    if params.w == 0 {
        return Err(Error::param("w must be >= 1"));
    }
    let clock = Stopwatch::start();
    let neighbors = layout.neighbor_sets(params.w);
    let mut program = build_model(layout, &neighbors, &params.costs, 1)?;
    let mut diagnostics = SolveDiagnostics::default();
    let mut total_iterations = 0;

    let infeasible = |reason: String, proven, program: &BinaryLinearProgram, iterations, diagnostics| {
        Ok(OptimizeOutcome::Infeasible(InfeasibleReport {
            reason,
            proven,
            lower_bound: program.lower_bound(),
            iterations,
            cuts: program.cut_count(),
            wall_ms: clock.elapsed_ms(),
            diagnostics,
        }))
    };

    let BnbOutcome::Optimal(mut current) = solve_bnb(&program) else {
        return infeasible("slice program has no solution".into(), true, &program, 0, diagnostics);
    };
    let mut lower_bound = open_count(&program, &current.values);
    program.set_lower_bound(lower_bound);
    let mut slices = extract_slices(&program, &current.values);
    let mut violating = violating_slices(&slices, params.threshold_us, evaluator)?;
    diagnostics.records.push(IterationRecord {
        iteration: 0,
        lb: lower_bound,
        violations: violating.len(),
        cuts: 0,
        incumbent: current.objective,
    });

    let mut iteration_id = 0;
    while !violating.is_empty() {
        if iteration_id >= params.max_iterations {
            lower_bound += 1;
            iteration_id = 0;
            if lower_bound > layout.tree_count() {
                return infeasible(
                    format!(
                        "iteration budget exhausted with all {} trees required",
                        layout.tree_count()
                    ),
                    false,
                    &program,
                    total_iterations,
                    diagnostics,
                );
            }
            program.set_lower_bound(lower_bound);
        } else {
            iteration_id += 1;
        }
        total_iterations += 1;
        for &tree in &violating {
            if params.minimal_cuts {
                let core = minimal_violating_subset(tree, &slices[&tree], params.threshold_us, evaluator)?;
                program.add_nogood_cut(tree, &core)?;
            } else {
                program.add_nogood_cut(tree, &slices[&tree])?;
            }
        }
        match solve_bnb(&program) {
            BnbOutcome::Optimal(sol) => current = sol,
            BnbOutcome::Infeasible { .. } => {
                return infeasible(
                    "no slice configuration satisfies the latency threshold".into(),
                    true,
                    &program,
                    total_iterations,
                    diagnostics,
                )
            }
        }
        slices = extract_slices(&program, &current.values);
        violating = violating_slices(&slices, params.threshold_us, evaluator)?;
        diagnostics.records.push(IterationRecord {
            iteration: total_iterations,
            lb: lower_bound,
            violations: violating.len(),
            cuts: program.cut_count(),
            incumbent: current.objective,
        });
    }

    let mut latency_us = BTreeMap::new();
    let mut reports = BTreeMap::new();
    let mut rings = BTreeMap::new();
    for (&tree, rus) in &slices {
        let verdict = evaluator.evaluate(tree, rus)?;
        latency_us.insert(tree, verdict.latency_us.expect("accepted slices are not overloaded"));
        if let Some(r) = verdict.report {
            reports.insert(tree, r);
        }
        rings.insert(tree, slice_ring(layout, tree, rus));
    }
    let active_trees: Vec<usize> = slices.keys().copied().collect();
    let objective = active_trees.iter().map(|&t| params.costs.tree_cost(t)).sum();
    Ok(OptimizeOutcome::Solved(SliceSolution {
        active_trees,
        slices,
        latency_us,
        reports,
        rings,
        objective,
        iterations: total_iterations,
        cuts: program.cut_count(),
        wall_ms: clock.elapsed_ms(),
        diagnostics,
    }))
}
