//! Depth-first branch-and-bound for 0-1 programs with non-negative objective costs.
//!
//! Bounding uses no LP relaxation: a node's bound is the cost of variables already
//! fixed to one plus the cheapest way to satisfy any unit-coefficient covering row
//! (the MEC lower-bound row). Row activity bounds drive unit propagation.

use super::model::{BinaryLinearProgram, Sense};

const EPS: f64 = 1e-9;
const FREE: i8 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct BnbSolution {
    pub values: Vec<bool>,
    pub objective: f64,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BnbOutcome {
    Optimal(BnbSolution),
    Infeasible { nodes: u64 },
}

impl BnbOutcome {
    pub fn solution(&self) -> Option<&BnbSolution> {
        match self {
            BnbOutcome::Optimal(s) => Some(s),
            BnbOutcome::Infeasible { .. } => None,
        }
    }
}

/// Exact optimum of `program`, or a proof that no assignment satisfies every row.
pub fn solve_bnb(program: &BinaryLinearProgram) -> BnbOutcome {
    let mut search = Search::new(program);
    if search.propagate_all() {
        search.dfs(0);
    }
    let nodes = search.nodes;
    match search.best {
        Some((values, objective)) => BnbOutcome::Optimal(BnbSolution {
            values,
            objective,
            nodes,
        }),
        None => BnbOutcome::Infeasible { nodes },
    }
}

struct Search<'a> {
    program: &'a BinaryLinearProgram,
    value: Vec<i8>,
    min_act: Vec<f64>,
    max_act: Vec<f64>,
    var_rows: Vec<Vec<(usize, f64)>>,
    trail: Vec<usize>,
    fixed_cost: f64,
    /// Rows of the form `Σ x_j ≥ k` over costed variables, used for bounding.
    covering: Vec<usize>,
    best: Option<(Vec<bool>, f64)>,
    nodes: u64,
}

impl<'a> Search<'a> {
    fn new(program: &'a BinaryLinearProgram) -> Self {
        let n = program.var_count();
        let rows = program.rows();
        let mut var_rows = vec![Vec::new(); n];
        let mut min_act = vec![0.0; rows.len()];
        let mut max_act = vec![0.0; rows.len()];
        let mut covering = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                var_rows[j].push((i, a));
                min_act[i] += a.min(0.0);
                max_act[i] += a.max(0.0);
            }
            if row.sense == Sense::Ge && row.terms.iter().all(|&(_, a)| a == 1.0) {
                covering.push(i);
            }
        }
        Search {
            program,
            value: vec![FREE; n],
            min_act,
            max_act,
            var_rows,
            trail: Vec::new(),
            fixed_cost: 0.0,
            covering,
            best: None,
            nodes: 0,
        }
    }

    fn assign(&mut self, j: usize, v: bool) {
        debug_assert_eq!(self.value[j], FREE);
        let x = if v { 1.0 } else { 0.0 };
        self.value[j] = v as i8;
        for &(i, a) in &self.var_rows[j] {
            self.min_act[i] += a * x - a.min(0.0);
            self.max_act[i] += a * x - a.max(0.0);
        }
        if v {
            self.fixed_cost += self.program.costs()[j];
        }
        self.trail.push(j);
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let j = self.trail.pop().expect("trail above mark");
            let v = self.value[j];
            let x = f64::from(v);
            for &(i, a) in &self.var_rows[j] {
                self.min_act[i] -= a * x - a.min(0.0);
                self.max_act[i] -= a * x - a.max(0.0);
            }
            if v == 1 {
                self.fixed_cost -= self.program.costs()[j];
            }
            self.value[j] = FREE;
        }
    }

    fn row_violated(&self, i: usize) -> bool {
        let row = &self.program.rows()[i];
        match row.sense {
            Sense::Le => self.min_act[i] > row.rhs + EPS,
            Sense::Ge => self.max_act[i] < row.rhs - EPS,
            Sense::Eq => self.min_act[i] > row.rhs + EPS || self.max_act[i] < row.rhs - EPS,
        }
    }

    /// Fixes every free variable whose opposite value would violate row `i`.
    /// Returns false on conflict; newly touched rows are pushed to `queue`.
    fn propagate_row(&mut self, i: usize, queue: &mut Vec<usize>) -> bool {
        if self.row_violated(i) {
            return false;
        }
        let row = &self.program.rows()[i];
        let (upper, lower) = match row.sense {
            Sense::Le => (true, false),
            Sense::Ge => (false, true),
            Sense::Eq => (true, true),
        };
        let rhs = row.rhs;
        let mut forced = Vec::new();
        for &(j, a) in &row.terms {
            if self.value[j] != FREE {
                continue;
            }
            // Activity range if x_j were fixed to 1 or to 0.
            let (min1, max1) = (self.min_act[i] + a - a.min(0.0), self.max_act[i] + a - a.max(0.0));
            let (min0, max0) = (self.min_act[i] - a.min(0.0), self.max_act[i] - a.max(0.0));
            let one_bad = (upper && min1 > rhs + EPS) || (lower && max1 < rhs - EPS);
            let zero_bad = (upper && min0 > rhs + EPS) || (lower && max0 < rhs - EPS);
            match (one_bad, zero_bad) {
                (true, true) => return false,
                (true, false) => forced.push((j, false)),
                (false, true) => forced.push((j, true)),
                (false, false) => {}
            }
        }
        for (j, v) in forced {
            if self.value[j] == FREE {
                self.assign(j, v);
                queue.extend(self.var_rows[j].iter().map(|&(r, _)| r));
            } else if self.value[j] != v as i8 {
                return false;
            }
        }
        true
    }

    fn propagate(&mut self, mut queue: Vec<usize>) -> bool {
        while let Some(i) = queue.pop() {
            if !self.propagate_row(i, &mut queue) {
                return false;
            }
        }
        true
    }

    fn propagate_all(&mut self) -> bool {
        let all = (0..self.program.row_count()).collect();
        self.propagate(all)
    }

    fn bound(&self) -> f64 {
        let costs = self.program.costs();
        let mut extra = 0.0_f64;
        for &i in &self.covering {
            let row = &self.program.rows()[i];
            let ones = row.terms.iter().filter(|&&(j, _)| self.value[j] == 1).count();
            let need = (row.rhs - ones as f64).ceil().max(0.0) as usize;
            if need == 0 {
                continue;
            }
            let mut free: Vec<f64> = row
                .terms
                .iter()
                .filter(|&&(j, _)| self.value[j] == FREE)
                .map(|&(j, _)| costs[j])
                .collect();
            free.sort_by(f64::total_cmp);
            extra = extra.max(free.iter().take(need).sum());
        }
        self.fixed_cost + extra
    }

    fn dfs(&mut self, mut pos: usize) {
        self.nodes += 1;
        if let Some((_, inc)) = &self.best {
            if self.bound() >= inc - EPS {
                return;
            }
        }
        let order = self.program.branch_order();
        while pos < order.len() && self.value[order[pos]] != FREE {
            pos += 1;
        }
        if pos == order.len() {
            let values: Vec<bool> = self.value.iter().map(|&v| v == 1).collect();
            debug_assert!(self.program.is_feasible(&values));
            self.best = Some((values, self.fixed_cost));
            return;
        }
        let j = order[pos];
        // Zero-cost variables (assignments) try 1 first; costed ones (MEC nodes) try 0.
        let first = self.program.costs()[j] == 0.0;
        for v in [first, !first] {
            let mark = self.trail.len();
            self.assign(j, v);
            let queue = self.var_rows[j].iter().map(|&(r, _)| r).collect();
            if self.propagate(queue) {
                self.dfs(pos + 1);
            }
            self.undo_to(mark);
        }
    }
}
