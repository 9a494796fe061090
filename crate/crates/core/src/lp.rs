//! Dense standard-form linear program solver.
//!
//! Bounded-variable primal simplex with an explicitly maintained dense
//! basis inverse. Inequality rows are activated lazily: the solver first
//! optimizes over the equality system and variable bounds, then pulls in
//! whichever inequality rows the current point violates and re-solves from
//! the warm basis. For the collision-constrained planning subproblems this
//! keeps the working basis near the equality row count even when the
//! problem carries thousands of inequality rows.
//!
//! Infeasible starts are handled by a composite phase 1 that minimizes the
//! total bound violation of basic variables, so equality rows get plain
//! artificial columns and freshly activated violated rows get their slack
//! pivoted in out of bounds. Callers building structured problems can pass
//! basis hints (row, column) to pre-pivot an obvious triangular basis and
//! skip most of phase 1.

use thiserror::Error;

/// Default relative optimality/feasibility tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Bound-violation slack treated as feasible in the simplex loop.
const FEAS_EPS: f64 = 1e-9;
/// Smallest pivot magnitude accepted in the ratio test.
const PIVOT_EPS: f64 = 1e-9;
/// Degenerate steps tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 60;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {j} has invalid bounds [{lb}, {ub}]")]
    InvalidBounds { j: usize, lb: f64, ub: f64 },
    #[error("non-finite coefficient: {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Solution of a linear program.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    /// Total simplex pivots performed.
    pub iterations: usize,
    /// Row duals: equality rows first, then inequality rows (zero for rows
    /// that never became active).
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Row {
    cols: Vec<u32>,
    vals: Vec<f64>,
    rhs: f64,
}

impl Row {
    fn from_entries(entries: &[(usize, f64)], rhs: f64) -> Self {
        Row {
            cols: entries.iter().map(|&(j, _)| j as u32).collect(),
            vals: entries.iter().map(|&(_, v)| v).collect(),
            rhs,
        }
    }
}

/// A linear program: min c·x subject to equality rows, inequality rows
/// (a·x ≤ rhs) and per-variable bounds (±∞ allowed).
#[derive(Debug, Clone)]
pub struct LpProblem {
    nv: usize,
    c: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    eq: Vec<Row>,
    ineq: Vec<Row>,
    basis_hint: Vec<(usize, usize)>,
}

impl LpProblem {
    pub fn new(nv: usize) -> Self {
        LpProblem {
            nv,
            c: vec![0.0; nv],
            lb: vec![f64::NEG_INFINITY; nv],
            ub: vec![f64::INFINITY; nv],
            eq: Vec::new(),
            ineq: Vec::new(),
            basis_hint: Vec::new(),
        }
    }

    /// Build from dense matrices (rows of `aeq`/`ain` must have `nv`
    /// entries). Zero entries are dropped.
    #[allow(clippy::too_many_arguments)]
    pub fn from_dense(
        c: Vec<f64>,
        aeq: &[Vec<f64>],
        beq: &[f64],
        ain: &[Vec<f64>],
        bin: &[f64],
        lb: Vec<f64>,
        ub: Vec<f64>,
    ) -> Result<Self, LpError> {
        let nv = c.len();
        if lb.len() != nv || ub.len() != nv {
            return Err(LpError::Dimension(format!(
                "bounds length {}/{} vs {} variables",
                lb.len(),
                ub.len(),
                nv
            )));
        }
        if aeq.len() != beq.len() || ain.len() != bin.len() {
            return Err(LpError::Dimension(
                "matrix row count differs from rhs length".into(),
            ));
        }
        let mut p = LpProblem::new(nv);
        p.c = c;
        p.lb = lb;
        p.ub = ub;
        let densify = |row: &Vec<f64>| -> Result<Vec<(usize, f64)>, LpError> {
            if row.len() != nv {
                return Err(LpError::Dimension(format!(
                    "row has {} entries, expected {}",
                    row.len(),
                    nv
                )));
            }
            Ok(row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect())
        };
        for (row, &rhs) in aeq.iter().zip(beq) {
            let entries = densify(row)?;
            p.add_eq(&entries, rhs);
        }
        for (row, &rhs) in ain.iter().zip(bin) {
            let entries = densify(row)?;
            p.add_le(&entries, rhs);
        }
        Ok(p)
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn num_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq.len()
    }

    pub fn set_cost(&mut self, j: usize, v: f64) {
        self.c[j] = v;
    }

    pub fn set_bounds(&mut self, j: usize, lb: f64, ub: f64) {
        self.lb[j] = lb;
        self.ub[j] = ub;
    }

    /// Fix a variable to a value (equivalent to an equality row, handled
    /// by substitution during the solve).
    pub fn fix(&mut self, j: usize, v: f64) {
        self.set_bounds(j, v, v);
    }

    /// Add an equality row a·x = rhs; returns its row index.
    pub fn add_eq(&mut self, entries: &[(usize, f64)], rhs: f64) -> usize {
        self.eq.push(Row::from_entries(entries, rhs));
        self.eq.len() - 1
    }

    /// Add an inequality row a·x ≤ rhs; returns its row index.
    pub fn add_le(&mut self, entries: &[(usize, f64)], rhs: f64) -> usize {
        self.ineq.push(Row::from_entries(entries, rhs));
        self.ineq.len() - 1
    }

    /// Add an inequality row a·x ≥ rhs (stored negated).
    pub fn add_ge(&mut self, entries: &[(usize, f64)], rhs: f64) -> usize {
        let negated: Vec<(usize, f64)> = entries.iter().map(|&(j, v)| (j, -v)).collect();
        self.add_le(&negated, -rhs)
    }

    /// Suggest that equality row `row` can be pivoted on column `col` to
    /// seed the starting basis. Hints are applied in insertion order and
    /// silently skipped when the pivot is numerically bad.
    pub fn hint_basis(&mut self, row: usize, col: usize) {
        self.basis_hint.push((row, col));
    }

    fn validate(&self) -> Result<(), LpError> {
        for j in 0..self.nv {
            if self.lb[j] > self.ub[j] || self.lb[j].is_nan() || self.ub[j].is_nan() {
                return Err(LpError::InvalidBounds {
                    j,
                    lb: self.lb[j],
                    ub: self.ub[j],
                });
            }
            if !self.c[j].is_finite() {
                return Err(LpError::NonFinite(format!("cost[{j}]")));
            }
        }
        for (kind, rows) in [("eq", &self.eq), ("ineq", &self.ineq)] {
            for (i, row) in rows.iter().enumerate() {
                if !row.rhs.is_finite() {
                    return Err(LpError::NonFinite(format!("{kind} rhs[{i}]")));
                }
                for (&jc, &v) in row.cols.iter().zip(&row.vals) {
                    if jc as usize >= self.nv {
                        return Err(LpError::Dimension(format!(
                            "{kind} row {i} references column {jc} of {}",
                            self.nv
                        )));
                    }
                    if !v.is_finite() {
                        return Err(LpError::NonFinite(format!("{kind} row {i}")));
                    }
                }
            }
        }
        for &(row, col) in &self.basis_hint {
            if row >= self.eq.len() || col >= self.nv {
                return Err(LpError::Dimension(format!(
                    "basis hint ({row}, {col}) out of range"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NonbasicAt {
    Lower,
    Upper,
    FreeZero,
}

struct Solver<'a> {
    p: &'a LpProblem,
    tol: f64,
    max_iter: usize,

    // column universe: structurals, then eq artificials, then slacks of
    // activated inequality rows (created on activation)
    ncols: usize,
    cols: Vec<Vec<(u32, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    fixed: Vec<bool>,

    // active rows: all eq rows, then activated ineq rows in activation order
    m: usize,
    rhs: Vec<f64>,
    active_of_ineq: Vec<Option<usize>>,

    basis: Vec<usize>,
    row_of_col: Vec<i64>,
    nb_at: Vec<NonbasicAt>,
    xb: Vec<f64>,
    binv: Vec<f64>,

    /// Reduced costs of the current phase objective (maintained
    /// incrementally during phase 2, rebuilt per iteration in phase 1).
    d: Vec<f64>,
    /// Devex reference weights.
    gamma: Vec<f64>,

    iterations: usize,
    degenerate_streak: usize,
    rhs_scale: f64,
}

impl<'a> Solver<'a> {
    fn new(p: &'a LpProblem, tol: f64, max_iter: usize) -> Self {
        let nv = p.nv;
        let me = p.eq.len();
        let ncols = nv + me;
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ncols];
        let mut rhs = Vec::with_capacity(me);
        for (i, row) in p.eq.iter().enumerate() {
            for (&jc, &v) in row.cols.iter().zip(&row.vals) {
                cols[jc as usize].push((i as u32, v));
            }
            rhs.push(row.rhs);
        }
        let mut lb = p.lb.clone();
        let mut ub = p.ub.clone();
        let mut cost = p.c.clone();
        let mut fixed: Vec<bool> = (0..nv).map(|j| p.lb[j] == p.ub[j]).collect();
        // artificial columns for equality rows: unit column, fixed at 0
        for i in 0..me {
            cols[nv + i].push((i as u32, 1.0));
            lb.push(0.0);
            ub.push(0.0);
            cost.push(0.0);
            fixed.push(true);
        }
        let rhs_scale = rhs
            .iter()
            .fold(1.0f64, |acc, r| acc.max(r.abs()))
            .max(p.ineq.iter().fold(1.0, |acc, r| acc.max(r.rhs.abs())));

        let basis: Vec<usize> = (0..me).map(|i| nv + i).collect();
        let mut row_of_col = vec![-1i64; ncols];
        for (i, &b) in basis.iter().enumerate() {
            row_of_col[b] = i as i64;
        }
        // nonbasic start: nearest finite bound, else free at zero
        let nb_at: Vec<NonbasicAt> = (0..ncols)
            .map(|j| {
                if lb[j].is_finite() {
                    NonbasicAt::Lower
                } else if ub[j].is_finite() {
                    NonbasicAt::Upper
                } else {
                    NonbasicAt::FreeZero
                }
            })
            .collect();
        let mut binv = vec![0.0; me * me];
        for i in 0..me {
            binv[i * me + i] = 1.0;
        }
        Solver {
            p,
            tol,
            max_iter,
            ncols,
            cols,
            lb,
            ub,
            cost,
            fixed,
            m: me,
            rhs,
            active_of_ineq: vec![None; p.ineq.len()],
            basis,
            row_of_col,
            nb_at,
            xb: vec![0.0; me],
            binv,
            d: vec![0.0; ncols],
            gamma: vec![1.0; ncols],
            iterations: 0,
            degenerate_streak: 0,
            rhs_scale,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.nb_at[j] {
            NonbasicAt::Lower => self.lb[j],
            NonbasicAt::Upper => self.ub[j],
            NonbasicAt::FreeZero => 0.0,
        }
    }

    fn value_of(&self, j: usize) -> f64 {
        let r = self.row_of_col[j];
        if r >= 0 {
            self.xb[r as usize]
        } else {
            self.nonbasic_value(j)
        }
    }

    /// w = B⁻¹ · a_j using the sparse column.
    fn ftran(&self, j: usize, w: &mut Vec<f64>) {
        w.clear();
        w.resize(self.m, 0.0);
        for &(r, v) in &self.cols[j] {
            let col = r as usize;
            let base = col;
            // B⁻¹ column `col`: stride through rows
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += v * self.binv[i * self.m + base];
            }
        }
    }

    /// Replace the basic variable of `row` by column `j` given w = B⁻¹ a_j.
    fn pivot(&mut self, row: usize, j: usize, w: &[f64]) {
        let m = self.m;
        let wr = w[row];
        let old = self.basis[row];
        self.row_of_col[old] = -1;
        self.basis[row] = j;
        self.row_of_col[j] = row as i64;
        // Gauss-Jordan update of B⁻¹
        let (head, rest) = self.binv.split_at_mut(row * m);
        let (prow, tail) = rest.split_at_mut(m);
        let inv = 1.0 / wr;
        for x in prow.iter_mut() {
            *x *= inv;
        }
        for (i, chunk) in head.chunks_exact_mut(m).enumerate() {
            let f = w[i];
            if f != 0.0 {
                for (x, &pv) in chunk.iter_mut().zip(prow.iter()) {
                    *x -= f * pv;
                }
            }
        }
        for (i, chunk) in tail.chunks_exact_mut(m).enumerate() {
            let f = w[row + 1 + i];
            if f != 0.0 {
                for (x, &pv) in chunk.iter_mut().zip(prow.iter()) {
                    *x -= f * pv;
                }
            }
        }
    }

    /// Apply caller-provided basis hints by pivoting structural columns in.
    fn apply_hints(&mut self) {
        let mut w = Vec::new();
        for &(row, col) in &self.p.basis_hint.clone() {
            if self.row_of_col[col] >= 0 || self.fixed[col] {
                continue;
            }
            self.ftran(col, &mut w);
            let wr = w[row];
            let wmax = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if wr.abs() < 1e-7 || wr.abs() < 1e-4 * wmax {
                continue;
            }
            self.pivot(row, col, &w);
        }
    }

    /// Recompute all basic values from scratch: x_B = B⁻¹ (b − N x_N).
    fn recompute_xb(&mut self) {
        let mut r0 = self.rhs.clone();
        for j in 0..self.ncols {
            if self.row_of_col[j] >= 0 {
                continue;
            }
            let xj = self.nonbasic_value(j);
            if xj != 0.0 {
                for &(r, v) in &self.cols[j] {
                    r0[r as usize] -= v * xj;
                }
            }
        }
        let m = self.m;
        for i in 0..m {
            let mut acc = 0.0;
            let rowi = &self.binv[i * m..(i + 1) * m];
            for (k, &r) in r0.iter().enumerate() {
                acc += rowi[k] * r;
            }
            self.xb[i] = acc;
        }
    }

    /// Rebuild B⁻¹ by inverting the current basis matrix. A numerically
    /// dependent basis column is repaired in place: the offending variable
    /// leaves for its nearest bound and a fresh fixed artificial for an
    /// uncovered row takes its slot, leaving any resulting infeasibility to
    /// phase 1. Returns false only if repair itself is impossible.
    fn refactorize(&mut self) -> bool {
        let m = self.m;
        let mut mat = vec![0.0; m * m]; // dense basis, row-major
        for (i, &bj) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[bj] {
                mat[r as usize * m + i] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        // Gauss-Jordan with partial pivoting over rows
        let mut perm: Vec<usize> = (0..m).collect();
        for k in 0..m {
            let mut piv = k;
            for i in k..m {
                if mat[perm[i] * m + k].abs() > mat[perm[piv] * m + k].abs() {
                    piv = i;
                }
            }
            if mat[perm[piv] * m + k].abs() < 1e-11 {
                // dependent column: swap in an artificial for the first
                // still-uncovered row
                let repair_row = perm[piv];
                let out_var = self.basis[k];
                self.row_of_col[out_var] = -1;
                self.nb_at[out_var] = if self.lb[out_var].is_finite() {
                    NonbasicAt::Lower
                } else if self.ub[out_var].is_finite() {
                    NonbasicAt::Upper
                } else {
                    NonbasicAt::FreeZero
                };
                let art = self.ncols;
                self.cols.push(vec![(repair_row as u32, 1.0)]);
                self.lb.push(0.0);
                self.ub.push(0.0);
                self.cost.push(0.0);
                self.fixed.push(true);
                self.nb_at.push(NonbasicAt::Lower);
                self.row_of_col.push(k as i64);
                self.d.push(0.0);
                self.gamma.push(1.0);
                self.ncols += 1;
                self.basis[k] = art;
                // rewrite the matrix column and redo this k
                for i in 0..m {
                    mat[i * m + k] = 0.0;
                }
                // column of the artificial in the partially eliminated
                // system: start from e_repair_row and apply recorded
                // eliminations implicitly by recomputing from inv
                // (inv currently holds the row operations applied so far)
                for i in 0..m {
                    mat[i * m + k] = inv[i * m + repair_row];
                }
                piv = k;
                for i in k..m {
                    if mat[perm[i] * m + k].abs() > mat[perm[piv] * m + k].abs() {
                        piv = i;
                    }
                }
                if mat[perm[piv] * m + k].abs() < 1e-11 {
                    return false;
                }
            }
            perm.swap(k, piv);
            let prow = perm[k];
            let pv = mat[prow * m + k];
            let inv_pv = 1.0 / pv;
            for jj in 0..m {
                mat[prow * m + jj] *= inv_pv;
                inv[prow * m + jj] *= inv_pv;
            }
            for i in 0..m {
                let irow = perm[i];
                if irow == prow {
                    continue;
                }
                let f = mat[irow * m + k];
                if f != 0.0 {
                    for jj in 0..m {
                        mat[irow * m + jj] -= f * mat[prow * m + jj];
                        inv[irow * m + jj] -= f * inv[prow * m + jj];
                    }
                }
            }
        }
        // rows of inv are permuted: row k of B⁻¹ is inv[perm[k]]
        let mut out = vec![0.0; m * m];
        for k in 0..m {
            out[k * m..(k + 1) * m].copy_from_slice(&inv[perm[k] * m..(perm[k] + 1) * m]);
        }
        self.binv = out;
        self.recompute_xb();
        true
    }

    /// Max equality/active-row residual at the current point.
    fn residual_inf(&self) -> f64 {
        let mut r0 = self.rhs.clone();
        for j in 0..self.ncols {
            let xj = self.value_of(j);
            if xj != 0.0 {
                for &(r, v) in &self.cols[j] {
                    r0[r as usize] -= v * xj;
                }
            }
        }
        r0.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Dual vector for the cost assignment `g` over basic variables.
    /// `g` is sparse: (row, weight) pairs.
    fn btran_sparse(&self, g: &[(usize, f64)], y: &mut Vec<f64>) {
        y.clear();
        y.resize(self.m, 0.0);
        let m = self.m;
        for &(i, gi) in g {
            let rowi = &self.binv[i * m..(i + 1) * m];
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += gi * rowi[k];
            }
        }
    }

    fn infeasible_rows(&self) -> Vec<(usize, f64)> {
        let scaled = FEAS_EPS * self.rhs_scale.max(1.0);
        let mut out = Vec::new();
        for i in 0..self.m {
            let j = self.basis[i];
            let x = self.xb[i];
            if x < self.lb[j] - scaled {
                out.push((i, -1.0));
            } else if x > self.ub[j] + scaled {
                out.push((i, 1.0));
            }
        }
        out
    }

    fn total_infeasibility(&self) -> f64 {
        let mut t = 0.0;
        for i in 0..self.m {
            let j = self.basis[i];
            let x = self.xb[i];
            if x < self.lb[j] {
                t += self.lb[j] - x;
            } else if x > self.ub[j] {
                t += x - self.ub[j];
            }
        }
        t
    }

    /// Rebuild the reduced-cost vector for the current phase objective.
    fn rebuild_reduced_costs(&mut self, phase1: bool) {
        let g: Vec<(usize, f64)> = if phase1 {
            self.infeasible_rows()
        } else {
            (0..self.m)
                .filter_map(|i| {
                    let cb = self.cost[self.basis[i]];
                    (cb != 0.0).then_some((i, cb))
                })
                .collect()
        };
        let mut y = Vec::new();
        self.btran_sparse(&g, &mut y);
        for j in 0..self.ncols {
            if self.row_of_col[j] >= 0 || self.fixed[j] {
                self.d[j] = 0.0;
                continue;
            }
            let mut dj = if phase1 { 0.0 } else { self.cost[j] };
            for &(r, v) in &self.cols[j] {
                dj -= y[r as usize] * v;
            }
            self.d[j] = dj;
        }
    }

    /// Clamp basics that violate their bounds within `tol_abs` onto the
    /// bound (phase-transition cleanup).
    fn snap_basics_into_bounds(&mut self, tol_abs: f64) {
        for i in 0..self.m {
            let j = self.basis[i];
            if self.xb[i] < self.lb[j] && self.lb[j] - self.xb[i] <= tol_abs {
                self.xb[i] = self.lb[j];
            } else if self.xb[i] > self.ub[j] && self.xb[i] - self.ub[j] <= tol_abs {
                self.xb[i] = self.ub[j];
            }
        }
    }

    /// One simplex phase loop. Returns Ok(true) when the phase objective is
    /// optimal (phase 1: may still be infeasible; phase 2: optimal), or the
    /// terminal status on unboundedness / iteration exhaustion.
    fn run_phase(&mut self, phase1: bool) -> Result<bool, LpStatus> {
        let mut w: Vec<f64> = Vec::new();
        let mut rho: Vec<f64> = Vec::new();
        let mut alpha: Vec<f64> = vec![0.0; self.ncols];
        // columns whose improving direction turned out to be numerical
        // noise (no usable ray); skipped until the next phase run
        let mut banned: Vec<bool> = vec![false; self.ncols];
        self.rebuild_reduced_costs(phase1);
        self.gamma.iter_mut().for_each(|g| *g = 1.0);
        let mut stall_best = f64::INFINITY;
        let mut stall_count = 0usize;

        loop {
            if self.iterations >= self.max_iter {
                return Err(LpStatus::IterationLimit);
            }
            // periodic accuracy check
            if self.iterations % 256 == 255 {
                let res = self.residual_inf();
                if res > 1e-7 * self.rhs_scale.max(1.0) {
                    if !self.refactorize() {
                        return Err(LpStatus::IterationLimit);
                    }
                    self.rebuild_reduced_costs(phase1);
                }
            }

            if phase1 {
                if self.infeasible_rows().is_empty() {
                    return Ok(true);
                }
                // the phase-1 gradient changes as basics cross bounds, so
                // the cheap route is a per-iteration rebuild from the
                // (sparse) infeasibility vector
                self.rebuild_reduced_costs(true);
                let total = self.total_infeasibility();
                if total < stall_best - 1e-13 {
                    stall_best = total;
                    stall_count = 0;
                } else {
                    stall_count += 1;
                    if stall_count > 4000 {
                        if std::env::var_os("LP_TRACE").is_some() {
                            eprintln!("lp trace: phase-1 stall at infeas {total:.3e}");
                        }
                        return Err(LpStatus::IterationLimit);
                    }
                }
                if std::env::var_os("LP_TRACE").is_some() && self.iterations % 500 == 499 {
                    eprintln!(
                        "lp trace: iter={} infeas={:.4e} rows={} m={} stall={}",
                        self.iterations,
                        total,
                        self.infeasible_rows().len(),
                        self.m,
                        stall_count,
                    );
                }
            }

            let bland = self.degenerate_streak > DEGENERATE_LIMIT;
            banned.resize(self.ncols, false);
            let Some((enter, sigma)) = self.price(bland, &banned) else {
                return Ok(true); // no improving column: phase objective optimal
            };

            self.ftran(enter, &mut w);

            if !phase1 {
                // guard against drifted incremental reduced costs
                let mut actual = self.cost[enter];
                for (i, &wi) in w.iter().enumerate() {
                    let cb = self.cost[self.basis[i]];
                    if cb != 0.0 {
                        actual -= cb * wi;
                    }
                }
                if (actual - self.d[enter]).abs() > 1e-7 * (1.0 + actual.abs()) {
                    self.rebuild_reduced_costs(false);
                    continue;
                }
                self.d[enter] = actual;
                if sigma * actual >= -self.tol.max(1e-12) {
                    // not actually improving once recomputed
                    continue;
                }
            }

            let outcome = if phase1 {
                self.ratio_test_phase1(enter, sigma, &w, sigma * self.d[enter])
            } else {
                self.ratio_test(enter, sigma, &w, false)
            };
            match outcome {
                RatioOutcome::Unbounded => {
                    if phase1 || self.d[enter].abs() < 1e-6 {
                        // a bounded-below (phase-1) or noise-level direction
                        // cannot be a real ray; retire the column
                        banned[enter] = true;
                        continue;
                    }
                    // the improving ray may be cut by a not-yet-active row
                    if self.activate_rows_cutting_ray(enter, sigma, &w) {
                        self.rebuild_reduced_costs(false);
                        continue;
                    }
                    return Err(LpStatus::Unbounded);
                }
                RatioOutcome::BoundFlip(theta) => {
                    self.apply_bound_flip(enter, sigma, theta, &w);
                }
                RatioOutcome::Pivot(theta, row, leave_at_upper) => {
                    // pivot row in nonbasic coordinates, for the devex and
                    // reduced-cost updates
                    let m = self.m;
                    rho.clear();
                    rho.extend_from_slice(&self.binv[row * m..(row + 1) * m]);
                    let wr = w[row];
                    let leave = self.basis[row];
                    let d_enter = self.d[enter];
                    let gamma_enter = self.gamma[enter].max(1.0);

                    self.apply_pivot(enter, sigma, theta, row, leave_at_upper, &w);

                    let factor = d_enter / wr;
                    let gfac = gamma_enter / (wr * wr);
                    alpha.resize(self.ncols, 0.0);
                    for j in 0..self.ncols {
                        if self.row_of_col[j] >= 0 || self.fixed[j] || j == leave {
                            alpha[j] = 0.0;
                            continue;
                        }
                        let mut aj = 0.0;
                        for &(r, v) in &self.cols[j] {
                            aj += rho[r as usize] * v;
                        }
                        alpha[j] = aj;
                    }
                    if !phase1 {
                        for j in 0..self.ncols {
                            let aj = alpha[j];
                            if aj != 0.0 {
                                self.d[j] -= factor * aj;
                            }
                        }
                        self.d[leave] = -factor;
                        self.d[enter] = 0.0;
                    }
                    for j in 0..self.ncols {
                        let aj = alpha[j];
                        if aj != 0.0 {
                            let cand = aj * aj * gfac;
                            if cand > self.gamma[j] {
                                self.gamma[j] = cand;
                            }
                        }
                    }
                    self.gamma[leave] = gfac.max(1.0);
                }
            }
            self.iterations += 1;
        }
    }

    /// Devex pricing on the maintained reduced costs (or Bland's rule when
    /// degeneracy has stalled progress). Returns (column, direction).
    fn price(&self, bland: bool, banned: &[bool]) -> Option<(usize, f64)> {
        let tol = self.tol.max(1e-12);
        let mut best: Option<(usize, f64, f64)> = None; // (col, sigma, score)
        for j in 0..self.ncols {
            if self.row_of_col[j] >= 0 || self.fixed[j] || banned[j] {
                continue;
            }
            let dj = self.d[j];
            let (eligible, sigma) = match self.nb_at[j] {
                NonbasicAt::Lower => (dj < -tol, 1.0),
                NonbasicAt::Upper => (dj > tol, -1.0),
                NonbasicAt::FreeZero => {
                    if dj < -tol {
                        (true, 1.0)
                    } else {
                        (dj > tol, -1.0)
                    }
                }
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, sigma));
            }
            let score = dj * dj / self.gamma[j];
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, sigma, score));
            }
        }
        best.map(|(j, sigma, _)| (j, sigma))
    }

    /// Breakpoint of basic `i` in direction `delta` per unit step, with the
    /// blocking bound relaxed by `expand`. Returns (theta, at_upper).
    fn breakpoint(
        &self,
        i: usize,
        delta: f64,
        expand: f64,
        feas: f64,
        phase1: bool,
    ) -> Option<(f64, bool)> {
        let j = self.basis[i];
        let x = self.xb[i];
        let (lo, hi) = (self.lb[j], self.ub[j]);
        if phase1 && x < lo - feas {
            // infeasible below: blocks only when rising to its lower bound
            return (delta > 0.0).then(|| ((lo + expand - x) / delta, false));
        }
        if phase1 && x > hi + feas {
            return (delta < 0.0).then(|| ((hi - expand - x) / delta, true));
        }
        if delta > 0.0 {
            hi.is_finite().then(|| ((hi + expand - x) / delta, true))
        } else {
            lo.is_finite().then(|| ((lo - expand - x) / delta, false))
        }
    }

    /// Two-pass (Harris) ratio test: the first pass finds the tolerance-
    /// relaxed step limit, the second picks the largest-magnitude pivot
    /// among rows whose strict breakpoint fits under it. Large pivots keep
    /// the maintained inverse from degrading on degenerate problems.
    fn ratio_test(&self, enter: usize, sigma: f64, w: &[f64], phase1: bool) -> RatioOutcome {
        let feas = FEAS_EPS * self.rhs_scale.max(1.0);
        let own_range = match self.nb_at[enter] {
            NonbasicAt::FreeZero => f64::INFINITY,
            _ => self.ub[enter] - self.lb[enter],
        };
        // pass 1: relaxed limit
        let mut theta_max = own_range;
        for (i, &wi) in w.iter().enumerate() {
            if wi.abs() <= PIVOT_EPS {
                continue;
            }
            let delta = -sigma * wi;
            if let Some((t, _)) = self.breakpoint(i, delta, feas, feas, phase1) {
                let t = t.max(0.0);
                if t < theta_max {
                    theta_max = t;
                }
            }
        }
        if theta_max.is_infinite() {
            return RatioOutcome::Unbounded;
        }
        // pass 2: best pivot magnitude under the relaxed limit
        let mut leaving: Option<(usize, bool, f64, f64)> = None; // (row, at_upper, |w|, theta)
        for (i, &wi) in w.iter().enumerate() {
            if wi.abs() <= PIVOT_EPS {
                continue;
            }
            let delta = -sigma * wi;
            if let Some((t, at_upper)) = self.breakpoint(i, delta, 0.0, feas, phase1) {
                let t = t.max(0.0);
                if t <= theta_max + 1e-15
                    && leaving.map_or(true, |(_, _, wa, _)| wi.abs() > wa)
                {
                    leaving = Some((i, at_upper, wi.abs(), t));
                }
            }
        }
        match leaving {
            Some((row, at_upper, _, theta)) => RatioOutcome::Pivot(theta, row, at_upper),
            None => RatioOutcome::BoundFlip(own_range),
        }
    }

    /// Long-step phase-1 ratio test: walk through bound-crossing events in
    /// step order, accumulating the slope of the piecewise-linear
    /// infeasibility sum, and stop at the event where the slope turns
    /// nonnegative. One pivot can repair many out-of-bounds basics.
    fn ratio_test_phase1(&self, enter: usize, sigma: f64, w: &[f64], slope0: f64) -> RatioOutcome {
        let feas = FEAS_EPS * self.rhs_scale.max(1.0);
        let own_range = match self.nb_at[enter] {
            NonbasicAt::FreeZero => f64::INFINITY,
            _ => self.ub[enter] - self.lb[enter],
        };
        // events: (theta, row, at_upper, |w|)
        let mut events: Vec<(f64, usize, bool, f64)> = Vec::new();
        for (i, &wi) in w.iter().enumerate() {
            if wi.abs() <= PIVOT_EPS {
                continue;
            }
            let delta = -sigma * wi;
            let j = self.basis[i];
            let x = self.xb[i];
            let (lo, hi) = (self.lb[j], self.ub[j]);
            if delta > 0.0 {
                if x < lo - feas {
                    events.push((((lo - x) / delta).max(0.0), i, false, wi.abs()));
                }
                if hi.is_finite() && x <= hi + feas {
                    events.push((((hi - x) / delta).max(0.0), i, true, wi.abs()));
                }
            } else {
                if x > hi + feas {
                    events.push((((hi - x) / delta).max(0.0), i, true, wi.abs()));
                }
                if lo.is_finite() && x >= lo - feas {
                    events.push((((lo - x) / delta).max(0.0), i, false, wi.abs()));
                }
            }
        }
        if events.is_empty() {
            if own_range.is_finite() {
                return RatioOutcome::BoundFlip(own_range);
            }
            return RatioOutcome::Unbounded;
        }
        events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // pass 1: find the step at which the accumulated slope turns
        // nonnegative
        let mut slope = slope0;
        let mut t_stop: Option<f64> = None;
        for &(t, _, _, absw) in &events {
            if t >= own_range {
                break;
            }
            slope += absw;
            if slope >= -1e-12 {
                t_stop = Some(t);
                break;
            }
        }
        let Some(t_stop) = t_stop else {
            // slope stayed negative through every event: flip if possible,
            // else the direction was numerical noise
            if own_range.is_finite() {
                return RatioOutcome::BoundFlip(own_range);
            }
            return RatioOutcome::Unbounded;
        };
        // pass 2: any event at or before the stop is a valid (smaller)
        // step. Prefer the latest one, but never pivot on an element far
        // below the best magnitude available, which would poison the
        // maintained inverse.
        let in_window = || events.iter().take_while(|e| e.0 <= t_stop + 1e-12);
        let wmax = in_window().fold(0.0f64, |a, e| a.max(e.3));
        let floor = (0.05 * wmax).max(1e-7f64.min(wmax));
        let chosen = in_window()
            .filter(|e| e.3 >= floor)
            .last()
            .or_else(|| in_window().max_by(|a, b| a.3.partial_cmp(&b.3).unwrap()));
        match chosen {
            Some(&(t, row, at_upper, _)) => RatioOutcome::Pivot(t, row, at_upper),
            None => RatioOutcome::Unbounded,
        }
    }

    fn apply_bound_flip(&mut self, enter: usize, sigma: f64, theta: f64, w: &[f64]) {
        for (i, &wi) in w.iter().enumerate() {
            self.xb[i] -= sigma * theta * wi;
        }
        self.nb_at[enter] = match self.nb_at[enter] {
            NonbasicAt::Lower => NonbasicAt::Upper,
            NonbasicAt::Upper => NonbasicAt::Lower,
            NonbasicAt::FreeZero => NonbasicAt::FreeZero,
        };
        self.degenerate_streak = 0;
    }

    fn apply_pivot(
        &mut self,
        enter: usize,
        sigma: f64,
        theta: f64,
        row: usize,
        leave_at_upper: bool,
        w: &[f64],
    ) {
        let enter_val = self.nonbasic_value(enter) + sigma * theta;
        for (i, &wi) in w.iter().enumerate() {
            self.xb[i] -= sigma * theta * wi;
        }
        let leave = self.basis[row];
        self.pivot(row, enter, w);
        self.xb[row] = enter_val;
        self.nb_at[leave] = if leave_at_upper {
            NonbasicAt::Upper
        } else {
            NonbasicAt::Lower
        };
        // snap the leaving variable's recorded bound to kill residual drift
        if theta.abs() < 1e-12 {
            self.degenerate_streak += 1;
        } else {
            self.degenerate_streak = 0;
        }
    }

    /// Activate all inequality rows violated at the current point.
    /// Returns how many were added.
    fn activate_violated(&mut self) -> usize {
        let feas = 1e-8 * self.rhs_scale.max(1.0);
        let mut xfull: Vec<f64> = (0..self.p.nv).map(|j| self.value_of(j)).collect();
        for x in xfull.iter_mut() {
            if !x.is_finite() {
                *x = 0.0;
            }
        }
        let mut to_add = Vec::new();
        for (k, row) in self.p.ineq.iter().enumerate() {
            if self.active_of_ineq[k].is_some() {
                continue;
            }
            let mut acc = 0.0;
            for (&jc, &v) in row.cols.iter().zip(&row.vals) {
                acc += v * xfull[jc as usize];
            }
            if acc > row.rhs + feas {
                to_add.push(k);
            }
        }
        let count = to_add.len();
        if count > 0 {
            self.extend_rows(&to_add);
        }
        count
    }

    /// During an unbounded phase-2 ray, pull in inactive rows that the ray
    /// eventually violates. Returns true if any row was activated.
    fn activate_rows_cutting_ray(&mut self, enter: usize, sigma: f64, w: &[f64]) -> bool {
        // direction in structural space
        let mut dir = vec![0.0; self.p.nv];
        if enter < self.p.nv {
            dir[enter] = sigma;
        }
        for (i, &wi) in w.iter().enumerate() {
            let j = self.basis[i];
            if j < self.p.nv {
                dir[j] = -sigma * wi;
            }
        }
        let mut to_add = Vec::new();
        for (k, row) in self.p.ineq.iter().enumerate() {
            if self.active_of_ineq[k].is_some() {
                continue;
            }
            let mut rate = 0.0;
            for (&jc, &v) in row.cols.iter().zip(&row.vals) {
                rate += v * dir[jc as usize];
            }
            if rate > 1e-10 {
                to_add.push(k);
            }
        }
        if to_add.is_empty() {
            return false;
        }
        self.extend_rows(&to_add);
        true
    }

    /// Append inequality rows to the active system, giving each a slack
    /// column that starts basic at the row residual.
    fn extend_rows(&mut self, rows: &[usize]) {
        let m_old = self.m;
        let k = rows.len();
        let m_new = m_old + k;
        // grow B⁻¹: [[B⁻¹, 0], [-C·B⁻¹, I]]
        let mut binv = vec![0.0; m_new * m_new];
        for i in 0..m_old {
            binv[i * m_new..i * m_new + m_old]
                .copy_from_slice(&self.binv[i * m_old..(i + 1) * m_old]);
        }
        for (t, &ri) in rows.iter().enumerate() {
            let row = &self.p.ineq[ri];
            let dst = (m_old + t) * m_new;
            for (&jc, &v) in row.cols.iter().zip(&row.vals) {
                let j = jc as usize;
                let r = self.row_of_col[j];
                if r >= 0 {
                    let src = (r as usize) * m_old;
                    for col in 0..m_old {
                        binv[dst + col] -= v * self.binv[src + col];
                    }
                }
            }
            binv[dst + m_old + t] = 1.0;
        }
        self.binv = binv;
        self.m = m_new;

        for (t, &ri) in rows.iter().enumerate() {
            let row_idx = m_old + t;
            let row = &self.p.ineq[ri];
            self.active_of_ineq[ri] = Some(row_idx);
            self.rhs.push(row.rhs);
            // slack column
            let slack = self.ncols;
            self.cols.push(vec![(row_idx as u32, 1.0)]);
            self.lb.push(0.0);
            self.ub.push(f64::INFINITY);
            self.cost.push(0.0);
            self.fixed.push(false);
            self.nb_at.push(NonbasicAt::Lower);
            self.row_of_col.push(row_idx as i64);
            self.d.push(0.0);
            self.gamma.push(1.0);
            self.ncols += 1;
            // structural columns gain the new row
            let mut resid = row.rhs;
            for (&jc, &v) in row.cols.iter().zip(&row.vals) {
                self.cols[jc as usize].push((row_idx as u32, v));
                resid -= v * self.value_of(jc as usize);
            }
            self.basis.push(slack);
            self.xb.push(resid);
        }
    }

    /// Final polish: one iterative-refinement pass on the basic values.
    fn refine(&mut self) {
        let m = self.m;
        if m == 0 {
            return;
        }
        let mut r0 = self.rhs.clone();
        for j in 0..self.ncols {
            let xj = self.value_of(j);
            if xj != 0.0 {
                for &(r, v) in &self.cols[j] {
                    r0[r as usize] -= v * xj;
                }
            }
        }
        let mut dx = vec![0.0; m];
        for i in 0..m {
            let rowi = &self.binv[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for (kk, &rk) in r0.iter().enumerate() {
                acc += rowi[kk] * rk;
            }
            dx[i] = acc;
        }
        for i in 0..m {
            self.xb[i] += dx[i];
        }
    }

    fn solve(mut self) -> LpSolution {
        self.apply_hints();
        self.recompute_xb();

        let feas_abs = 1e-7 * self.rhs_scale.max(1.0);
        let mut rounds = 0;
        let status = loop {
            rounds += 1;
            if rounds > 200 {
                break LpStatus::IterationLimit;
            }
            // phase 1 until feasible
            match self.run_phase(true) {
                Ok(_) => {}
                Err(s) => break s,
            }
            if self.total_infeasibility() > feas_abs {
                break LpStatus::Infeasible;
            }
            // sub-tolerance violations would make the phase-2 ratio test
            // grind through spurious degenerate steps
            self.snap_basics_into_bounds(feas_abs);
            // phase 2 on the active rows
            match self.run_phase(false) {
                Ok(_) => {}
                Err(s) => break s,
            }
            if self.total_infeasibility() > feas_abs {
                // drift or basis repair during phase 2; clean up and redo
                if !self.refactorize() {
                    break LpStatus::IterationLimit;
                }
                continue;
            }
            // bring in violated inactive rows and re-optimize
            if self.activate_violated() == 0 {
                break LpStatus::Optimal;
            }
        };

        self.refine();

        let x: Vec<f64> = (0..self.p.nv).map(|j| self.value_of(j)).collect();
        let objective: f64 = x.iter().zip(&self.p.c).map(|(xi, ci)| xi * ci).sum();

        // duals from the phase-2 cost vector
        let g: Vec<(usize, f64)> = (0..self.m)
            .filter_map(|i| {
                let cb = self.cost[self.basis[i]];
                (cb != 0.0).then_some((i, cb))
            })
            .collect();
        let mut y = Vec::new();
        if self.m > 0 {
            self.btran_sparse(&g, &mut y);
        }
        let me = self.p.eq.len();
        let mut duals = vec![0.0; me + self.p.ineq.len()];
        duals[..me.min(y.len())].copy_from_slice(&y[..me.min(y.len())]);
        for (k, act) in self.active_of_ineq.iter().enumerate() {
            if let Some(r) = act {
                duals[me + k] = y[*r];
            }
        }

        LpSolution {
            x,
            objective,
            status,
            iterations: self.iterations,
            duals,
        }
    }
}

enum RatioOutcome {
    /// No finite breakpoint in the improving direction.
    Unbounded,
    /// Entering variable reaches its opposite bound first.
    BoundFlip(f64),
    /// Basic variable of `row` leaves at (theta, row, at_upper).
    Pivot(f64, usize, bool),
}

/// Solve a linear program.
///
/// `tol` controls reduced-cost optimality; feasibility is enforced to
/// absolute tolerances compatible with the problem's right-hand-side scale.
/// Numerical breakdown is reported as `IterationLimit`, never a panic.
pub fn solve_lp(p: &LpProblem, tol: f64, max_iter: usize) -> Result<LpSolution, LpError> {
    p.validate()?;
    Ok(Solver::new(p, tol, max_iter).solve())
}
