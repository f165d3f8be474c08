use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Layout, NeighborSets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// `X_{r,v}`: RU `ru` joins the slice served from tree `tree`.
    Assign { ru: usize, tree: usize },
    /// `α_i`: a MEC node is deployed at tree `tree`.
    Open { tree: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Each RU is in exactly one slice, chosen among its neighbour trees.
    Assignment { ru: usize },
    /// RUs may only join a slice whose MEC node is deployed.
    Linking { tree: usize },
    /// All RUs are assigned.
    Completeness,
    /// At least the current lower bound of MEC nodes is deployed.
    LowerBound,
    /// Slice `tree` may not contain a previously rejected membership.
    NoGood { tree: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub kind: RowKind,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[bool]) -> f64 {
        self.terms
            .iter()
            .filter(|(j, _)| values[*j])
            .map(|(_, a)| a)
            .sum()
    }

    pub fn is_satisfied(&self, values: &[bool]) -> bool {
        const EPS: f64 = 1e-9;
        let act = self.activity(values);
        match self.sense {
            Sense::Le => act <= self.rhs + EPS,
            Sense::Ge => act >= self.rhs - EPS,
            Sense::Eq => (act - self.rhs).abs() <= EPS,
        }
    }
}

/// Deployment cost per tree: `C^CAP_i + |W| · C^OLT_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Costs {
    pub cap: f64,
    pub olt: f64,
    /// Per-tree `(cap, olt)` overrides, indexed by tree id.
    pub per_tree: Option<Vec<(f64, f64)>>,
    pub wavelengths: u32,
}

impl Default for Costs {
    fn default() -> Self {
        Costs {
            cap: 1.0,
            olt: 0.0,
            per_tree: None,
            wavelengths: 4,
        }
    }
}

impl Costs {
    pub fn tree_cost(&self, tree: usize) -> f64 {
        let (cap, olt) = self
            .per_tree
            .as_ref()
            .and_then(|v| v.get(tree).copied())
            .unwrap_or((self.cap, self.olt));
        cap + f64::from(self.wavelengths) * olt
    }
}

/// The slice-assignment integer program without the latency rows.
#[derive(Debug, Clone)]
pub struct BinaryLinearProgram {
    vars: Vec<VarKind>,
    costs: Vec<f64>,
    rows: Vec<Row>,
    n_rus: usize,
    n_trees: usize,
    x_index: HashMap<(usize, usize), usize>,
    alpha_index: Vec<usize>,
    lower_bound_row: usize,
    cuts: usize,
    branch_order: Vec<usize>,
}

/// Builds the slice program; every RU may only join trees in its home tree's neighbour set.
pub fn build_model(
    layout: &Layout,
    neighbors: &NeighborSets,
    costs: &Costs,
    lower_bound: usize,
) -> Result<BinaryLinearProgram> {
    if layout.tree_count() == 0 || layout.ru_count() == 0 {
        return Err(Error::Model("layout has no trees or no RUs".into()));
    }
    if lower_bound == 0 {
        return Err(Error::Model("lower bound must be >= 1".into()));
    }
    if neighbors.len() != layout.tree_count() {
        return Err(Error::Model(format!(
            "neighbour sets cover {} trees, layout has {}",
            neighbors.len(),
            layout.tree_count()
        )));
    }
    let n_trees = layout.tree_count();
    let n_rus = layout.ru_count();
    let mut vars = Vec::new();
    let mut var_costs = Vec::new();
    let mut alpha_index = Vec::with_capacity(n_trees);
    for tree in 0..n_trees {
        let c = costs.tree_cost(tree);
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::Model(format!("tree {tree} has invalid cost {c}")));
        }
        alpha_index.push(vars.len());
        vars.push(VarKind::Open { tree });
        var_costs.push(c);
    }
    let mut x_index = HashMap::new();
    let mut assignment_rows = Vec::with_capacity(n_rus);
    for ru in layout.smalls() {
        let candidates = neighbors.of(ru.tree_id);
        if candidates.is_empty() {
            return Err(Error::Model(format!("RU {} has an empty neighbour set", ru.id)));
        }
        let mut terms = Vec::with_capacity(candidates.len());
        for &tree in candidates {
            if tree >= n_trees {
                return Err(Error::Model(format!("neighbour tree {tree} does not exist")));
            }
            let j = vars.len();
            vars.push(VarKind::Assign { ru: ru.id, tree });
            var_costs.push(0.0);
            x_index.insert((ru.id, tree), j);
            terms.push((j, 1.0));
        }
        assignment_rows.push(Row {
            kind: RowKind::Assignment { ru: ru.id },
            terms,
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    let mut rows = assignment_rows;
    for tree in 0..n_trees {
        let mut terms: Vec<(usize, f64)> = (0..n_rus)
            .filter_map(|r| x_index.get(&(r, tree)).map(|&j| (j, 1.0)))
            .collect();
        terms.push((alpha_index[tree], -(n_rus as f64)));
        rows.push(Row {
            kind: RowKind::Linking { tree },
            terms,
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    let mut all_x: Vec<usize> = x_index.values().copied().collect();
    all_x.sort_unstable();
    rows.push(Row {
        kind: RowKind::Completeness,
        terms: all_x.into_iter().map(|j| (j, 1.0)).collect(),
        sense: Sense::Eq,
        rhs: n_rus as f64,
    });
    let lower_bound_row = rows.len();
    rows.push(Row {
        kind: RowKind::LowerBound,
        terms: alpha_index.iter().map(|&j| (j, 1.0)).collect(),
        sense: Sense::Ge,
        rhs: lower_bound as f64,
    });

    // α first, larger home trees earlier; then X by RU id in neighbour order.
    let mut trees: Vec<usize> = (0..n_trees).collect();
    trees.sort_by_key(|&t| (std::cmp::Reverse(layout.tree_members(t).len()), t));
    let mut branch_order: Vec<usize> = trees.iter().map(|&t| alpha_index[t]).collect();
    for ru in layout.smalls() {
        branch_order.extend(neighbors.of(ru.tree_id).iter().map(|&t| x_index[&(ru.id, t)]));
    }

    Ok(BinaryLinearProgram {
        vars,
        costs: var_costs,
        rows,
        n_rus,
        n_trees,
        x_index,
        alpha_index,
        lower_bound_row,
        cuts: 0,
        branch_order,
    })
}

impl BinaryLinearProgram {
    pub fn vars(&self) -> &[VarKind] {
        &self.vars
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn ru_count(&self) -> usize {
        self.n_rus
    }

    pub fn tree_count(&self) -> usize {
        self.n_trees
    }

    pub fn cut_count(&self) -> usize {
        self.cuts
    }

    pub fn x_var(&self, ru: usize, tree: usize) -> Option<usize> {
        self.x_index.get(&(ru, tree)).copied()
    }

    pub fn alpha_var(&self, tree: usize) -> usize {
        self.alpha_index[tree]
    }

    /// Variable indices in the order the branch-and-bound fixes them.
    pub fn branch_order(&self) -> &[usize] {
        &self.branch_order
    }

    pub fn lower_bound(&self) -> usize {
        self.rows[self.lower_bound_row].rhs as usize
    }

    pub fn set_lower_bound(&mut self, lb: usize) {
        self.rows[self.lower_bound_row].rhs = lb as f64;
    }

    /// Appends `Σ_{r ∈ members} X_{r,tree} ≤ (|members| − 1) · α_tree`, forbidding slice
    /// `tree` from containing all of `members` while its MEC node is deployed.
    pub fn add_nogood_cut(&mut self, tree: usize, members: &[usize]) -> Result<()> {
        if members.is_empty() {
            return Err(Error::param("no-good cut needs at least one member"));
        }
        if tree >= self.n_trees {
            return Err(Error::param(format!("no-good cut names unknown tree {tree}")));
        }
        let mut terms = Vec::with_capacity(members.len() + 1);
        for &ru in members {
            let j = self.x_var(ru, tree).ok_or_else(|| {
                Error::param(format!("RU {ru} cannot be assigned to tree {tree}"))
            })?;
            terms.push((j, 1.0));
        }
        terms.push((self.alpha_index[tree], -((members.len() - 1) as f64)));
        self.rows.push(Row {
            kind: RowKind::NoGood { tree },
            terms,
            sense: Sense::Le,
            rhs: 0.0,
        });
        self.cuts += 1;
        Ok(())
    }

    pub fn objective(&self, values: &[bool]) -> f64 {
        self.costs
            .iter()
            .zip(values)
            .filter(|(_, &v)| v)
            .map(|(c, _)| c)
            .sum()
    }

    pub fn is_feasible(&self, values: &[bool]) -> bool {
        values.len() == self.vars.len() && self.rows.iter().all(|r| r.is_satisfied(values))
    }
}
