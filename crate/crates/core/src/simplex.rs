//! Bounded-variable revised primal simplex with a dual-simplex
//! reoptimization path.
//!
//! The solver works on the standardized system `A z = b` with
//! `z = (structurals, slacks, artificials)` and per-column bounds. Equality
//! rows come first, one slack per inequality row, one artificial per row
//! (pinned to zero outside phase 1). The basis inverse is kept explicitly
//! and refactored from scratch every few dozen pivots; at the sizes this
//! crate solves (a few hundred columns) that is faster than factor updates
//! and numerically boring.
//!
//! Pricing is Dantzig's rule, switching to Bland's rule after `5 * n`
//! degenerate pivots to rule out cycling. Feasibility and reduced-cost
//! tolerances are 1e-9.
//!
//! [`lp_resolve_bounds`] restores primal feasibility with the bounded-variable
//! dual simplex after bound changes only, which is how the branch-and-bound
//! tree re-solves child nodes from the parent basis in a handful of pivots.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-9;
pub const COST_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

/// `min c'x` subject to `a_eq x = b_eq`, `a_le x <= b_le`,
/// `lower <= x <= upper` (upper entries may be infinite).
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_le: DMatrix<f64>,
    pub b_le: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

/// Where each standardized column sits; the warm-start snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

#[derive(Clone, Debug)]
pub struct Basis {
    pub status: Vec<VarStatus>,
    pub basic: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    /// Structural part of the solution (original variables only).
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

struct Worker {
    m: usize,
    n_struct: usize,
    n_total: usize,
    cols: DMatrix<f64>, // m x n_total, equilibrated
    b: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    status: Vec<VarStatus>,
    basic: Vec<usize>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    pivots: usize,
    degenerate: usize,
    scale: f64,
    /// Column equilibration factors; the caller's variable j equals
    /// `col_scale[j] * z_j` in worker coordinates.
    col_scale: Vec<f64>,
}

impl Worker {
    fn standardize(lp: &LinearProgram) -> Worker {
        let m_eq = lp.a_eq.nrows();
        let m_le = lp.a_le.nrows();
        let m = m_eq + m_le;
        let n = lp.c.len();
        let n_total = n + m_le + m;
        let mut cols = DMatrix::zeros(m, n_total);
        let mut b = DVector::zeros(m);
        if m_eq > 0 {
            cols.view_mut((0, 0), (m_eq, n)).copy_from(&lp.a_eq);
            b.rows_mut(0, m_eq).copy_from(&lp.b_eq);
        }
        if m_le > 0 {
            cols.view_mut((m_eq, 0), (m_le, n)).copy_from(&lp.a_le);
            b.rows_mut(m_eq, m_le).copy_from(&lp.b_le);
        }
        // Max-abs equilibration of the structural block: rows first, then
        // columns. The factors depend only on the matrix, so re-solves after
        // bound changes land in identical coordinates and parent bases stay
        // valid.
        for r in 0..m {
            let amax = (0..n).fold(0.0_f64, |acc, j| acc.max(cols[(r, j)].abs()));
            if amax > 0.0 {
                let f = 1.0 / amax;
                for j in 0..n {
                    cols[(r, j)] *= f;
                }
                b[r] *= f;
            }
        }
        let mut col_scale = vec![1.0_f64; n_total];
        for j in 0..n {
            let amax = (0..m).fold(0.0_f64, |acc, r| acc.max(cols[(r, j)].abs()));
            if amax > 0.0 {
                let f = 1.0 / amax;
                for r in 0..m {
                    cols[(r, j)] *= f;
                }
                col_scale[j] = f;
            }
        }
        for i in 0..m_le {
            cols[(m_eq + i, n + i)] = 1.0;
        }
        // Worker-coordinate bounds: z_j = x_j / col_scale[j].
        let mut lower = vec![0.0; n_total];
        let mut upper = vec![f64::INFINITY; n_total];
        for j in 0..n {
            lower[j] = lp.lower[j] / col_scale[j];
            upper[j] = lp.upper[j] / col_scale[j];
        }
        for j in n + m_le..n_total {
            upper[j] = 0.0; // opened up during phase 1 only
        }
        let cost_amax = (0..n).fold(0.0_f64, |acc, j| acc.max((lp.c[j] * col_scale[j]).abs()));
        let scale = 1.0 + if m > 0 { b.amax() } else { 0.0 } + cost_amax;
        Worker {
            m,
            n_struct: n,
            n_total,
            cols,
            b,
            lower,
            upper,
            cost: vec![0.0; n_total],
            status: vec![VarStatus::AtLower; n_total],
            basic: Vec::new(),
            binv: DMatrix::identity(m, m),
            xb: DVector::zeros(m),
            pivots: 0,
            degenerate: 0,
            scale,
            col_scale,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Basic => unreachable!("basic variable has no bound value"),
        }
    }

    /// b minus the contribution of every nonbasic column.
    fn rhs_minus_nonbasic(&self) -> DVector<f64> {
        let mut r = self.b.clone();
        for j in 0..self.n_total {
            if self.status[j] != VarStatus::Basic {
                let v = self.nonbasic_value(j);
                if v != 0.0 {
                    for i in 0..self.m {
                        r[i] -= v * self.cols[(i, j)];
                    }
                }
            }
        }
        r
    }

    fn refactor(&mut self) -> Result<()> {
        let mut bmat = DMatrix::zeros(self.m, self.m);
        for (r, &j) in self.basic.iter().enumerate() {
            bmat.column_mut(r).copy_from(&self.cols.column(j));
        }
        self.binv = bmat
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular simplex basis".into()))?;
        self.xb = &self.binv * self.rhs_minus_nonbasic();
        Ok(())
    }

    fn reduced_costs(&self) -> Vec<f64> {
        let mut cb = DVector::zeros(self.m);
        for (r, &j) in self.basic.iter().enumerate() {
            cb[r] = self.cost[j];
        }
        let y = self.binv.tr_mul(&cb);
        let mut d = vec![0.0; self.n_total];
        for j in 0..self.n_total {
            if self.status[j] != VarStatus::Basic {
                let mut dj = self.cost[j];
                for i in 0..self.m {
                    dj -= y[i] * self.cols[(i, j)];
                }
                d[j] = dj;
            }
        }
        d
    }

    /// One primal iteration; Ok(false) when optimal.
    fn primal_step(&mut self, bland: bool) -> Result<bool> {
        let d = self.reduced_costs();
        let tol = COST_TOL * self.scale;
        let mut enter: Option<(usize, f64)> = None;
        for j in 0..self.n_total {
            if self.lower[j] == self.upper[j] {
                continue; // fixed variables never enter
            }
            let viol = match self.status[j] {
                VarStatus::AtLower => -d[j],
                VarStatus::AtUpper => d[j],
                VarStatus::Basic => continue,
            };
            if viol > tol {
                if bland {
                    enter = Some((j, viol));
                    break;
                }
                if enter.map_or(true, |(_, best)| viol > best) {
                    enter = Some((j, viol));
                }
            }
        }
        let Some((e, _)) = enter else {
            return Ok(false);
        };
        let sigma = if self.status[e] == VarStatus::AtLower { 1.0 } else { -1.0 };
        let w = &self.binv * self.cols.column(e).into_owned();
        // Max step before a basic variable or the entering bound span blocks.
        let mut t_max = self.upper[e] - self.lower[e]; // may be inf
        let mut leave: Option<usize> = None;
        for r in 0..self.m {
            let delta = -sigma * w[r];
            let limit = if delta > FEAS_TOL {
                (self.upper[self.basic[r]] - self.xb[r]) / delta
            } else if delta < -FEAS_TOL {
                (self.lower[self.basic[r]] - self.xb[r]) / delta
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            if limit < t_max - FEAS_TOL {
                t_max = limit;
                leave = Some(r);
            } else if limit < t_max + FEAS_TOL {
                // Tie: prefer the larger pivot magnitude for stability.
                if let Some(cur) = leave {
                    if w[r].abs() > w[cur].abs() {
                        t_max = t_max.min(limit);
                        leave = Some(r);
                    }
                } else if limit <= t_max {
                    t_max = limit;
                    leave = Some(r);
                }
            }
        }
        if !t_max.is_finite() {
            return Err(Error::Numerical("unbounded simplex direction".into()));
        }
        if t_max <= FEAS_TOL {
            self.degenerate += 1;
        }
        match leave {
            None => {
                // Bound flip.
                self.status[e] = match self.status[e] {
                    VarStatus::AtLower => VarStatus::AtUpper,
                    VarStatus::AtUpper => VarStatus::AtLower,
                    VarStatus::Basic => unreachable!(),
                };
                for i in 0..self.m {
                    self.xb[i] -= sigma * t_max * w[i];
                }
            }
            Some(r) => {
                let old_basic = self.basic[r];
                let entering_value = self.nonbasic_value(e) + sigma * t_max;
                // Which bound did the leaving variable hit?
                let delta = -sigma * w[r];
                self.status[old_basic] = if delta > 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                if self.upper[old_basic] == self.lower[old_basic] {
                    self.status[old_basic] = VarStatus::AtLower;
                }
                self.status[e] = VarStatus::Basic;
                self.basic[r] = e;
                self.update_binv(r, &w)?;
                for i in 0..self.m {
                    self.xb[i] -= sigma * t_max * w[i];
                }
                self.xb[r] = entering_value;
            }
        }
        self.pivots += 1;
        if self.pivots % REFACTOR_EVERY == 0 {
            self.refactor()?;
        }
        Ok(true)
    }

    fn update_binv(&mut self, r: usize, w: &DVector<f64>) -> Result<()> {
        let piv = w[r];
        if piv.abs() < 1e-12 {
            return Err(Error::Numerical("tiny simplex pivot".into()));
        }
        let row = self.binv.row(r).into_owned() / piv;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = w[i];
            if f != 0.0 {
                for k in 0..self.m {
                    self.binv[(i, k)] -= f * row[(0, k)];
                }
            }
        }
        self.binv.row_mut(r).copy_from(&row);
        Ok(())
    }

    fn run_primal(&mut self) -> Result<()> {
        let bland_after = 5 * self.n_total;
        let iter_cap = 400 * (self.m + self.n_total);
        for _ in 0..iter_cap {
            let bland = self.degenerate > bland_after;
            if !self.primal_step(bland)? {
                return Ok(());
            }
        }
        Err(Error::Numerical("primal simplex iteration cap".into()))
    }

    fn objective(&self) -> f64 {
        let mut obj = 0.0;
        for j in 0..self.n_total {
            if self.status[j] != VarStatus::Basic {
                obj += self.cost[j] * self.nonbasic_value(j);
            }
        }
        for (r, &j) in self.basic.iter().enumerate() {
            obj += self.cost[j] * self.xb[r];
        }
        obj
    }

    fn structural_solution(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.n_struct);
        for j in 0..self.n_struct {
            if self.status[j] != VarStatus::Basic {
                x[j] = self.nonbasic_value(j);
            }
        }
        for (r, &j) in self.basic.iter().enumerate() {
            if j < self.n_struct {
                x[j] = self.xb[r];
            }
        }
        // Back to caller coordinates.
        for j in 0..self.n_struct {
            x[j] *= self.col_scale[j];
        }
        x
    }

    fn primal_infeasibility(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (r, &j) in self.basic.iter().enumerate() {
            worst = worst
                .max(self.lower[j] - self.xb[r])
                .max(self.xb[r] - self.upper[j]);
        }
        worst
    }

    /// Bounded-variable dual simplex: restore primal feasibility while the
    /// reduced costs stay sign-feasible. Used after bound changes.
    fn run_dual(&mut self) -> Result<LpStatus> {
        let iter_cap = 200 * (self.m + self.n_total);
        let feas = FEAS_TOL * self.scale.max(1.0);
        for _ in 0..iter_cap {
            // Most violated basic variable leaves.
            let mut leave: Option<(usize, f64, bool)> = None; // (row, violation, below)
            for (r, &j) in self.basic.iter().enumerate() {
                let below = self.lower[j] - self.xb[r];
                let above = self.xb[r] - self.upper[j];
                if below > feas && leave.map_or(true, |(_, v, _)| below > v) {
                    leave = Some((r, below, true));
                } else if above > feas && leave.map_or(true, |(_, v, _)| above > v) {
                    leave = Some((r, above, false));
                }
            }
            let Some((r, _, below)) = leave else {
                return Ok(LpStatus::Optimal);
            };
            let d = self.reduced_costs();
            let rho = self.binv.row(r).into_owned().transpose();
            let alpha_all = self.cols.tr_mul(&rho);
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.n_total {
                if self.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let alpha = alpha_all[j];
                if alpha.abs() <= 1e-11 {
                    continue;
                }
                // Moving z_j in its feasible direction changes x_B[r] by
                // -sigma * alpha * t; it must push toward the violated bound.
                let moves_up = match self.status[j] {
                    VarStatus::AtLower => -alpha > 0.0,
                    VarStatus::AtUpper => alpha > 0.0,
                    VarStatus::Basic => unreachable!(),
                };
                if moves_up != below {
                    continue;
                }
                let ratio = (d[j] / alpha).abs();
                if enter.map_or(true, |(_, best)| ratio < best - 1e-15) {
                    enter = Some((j, ratio));
                }
            }
            let Some((e, _)) = enter else {
                return Ok(LpStatus::Infeasible);
            };
            // Pivot e into row r.
            let w = &self.binv * self.cols.column(e).into_owned();
            if w[r].abs() < 1e-11 {
                return Err(Error::Numerical("tiny dual pivot".into()));
            }
            let old_basic = self.basic[r];
            let target = if below { self.lower[old_basic] } else { self.upper[old_basic] };
            let sigma = if self.status[e] == VarStatus::AtLower { 1.0 } else { -1.0 };
            let t = (self.xb[r] - target) / (sigma * w[r]);
            let entering_value = self.nonbasic_value(e) + sigma * t;
            self.status[old_basic] = if below { VarStatus::AtLower } else { VarStatus::AtUpper };
            if self.lower[old_basic] == self.upper[old_basic] {
                self.status[old_basic] = VarStatus::AtLower;
            }
            self.status[e] = VarStatus::Basic;
            self.basic[r] = e;
            self.update_binv(r, &w)?;
            for i in 0..self.m {
                self.xb[i] -= sigma * t * w[i];
            }
            self.xb[r] = entering_value;
            self.pivots += 1;
            if self.pivots % REFACTOR_EVERY == 0 {
                self.refactor()?;
            }
        }
        Err(Error::Numerical("dual simplex iteration cap".into()))
    }

    fn snapshot(&self) -> Basis {
        Basis { status: self.status.clone(), basic: self.basic.clone() }
    }
}

/// Two-phase bounded-variable primal simplex.
pub fn lp_simplex(lp: &LinearProgram) -> Result<LpSolution> {
    let mut w = Worker::standardize(lp);
    let n = w.n_struct;
    let m_le = lp.a_le.nrows();
    let m_eq = lp.a_eq.nrows();

    for j in 0..n {
        if !w.lower[j].is_finite() {
            return Err(Error::Numerical("lower bounds must be finite".into()));
        }
        w.status[j] = VarStatus::AtLower;
    }
    // Initial residual decides slack-vs-artificial per row.
    let residual = {
        // All nonbasic; no basics yet.
        let mut r = w.b.clone();
        for j in 0..w.n_total {
            let v = match w.status[j] {
                VarStatus::AtLower => w.lower[j],
                VarStatus::AtUpper => w.upper[j],
                VarStatus::Basic => unreachable!(),
            };
            if v != 0.0 {
                for i in 0..w.m {
                    r[i] -= v * w.cols[(i, j)];
                }
            }
        }
        r
    };
    w.basic = Vec::with_capacity(w.m);
    for r in 0..w.m {
        let is_le = r >= m_eq;
        if is_le && residual[r] >= 0.0 {
            w.basic.push(n + (r - m_eq));
            continue;
        }
        let art = n + m_le + r;
        let sgn = if residual[r] < 0.0 { -1.0 } else { 1.0 };
        w.cols[(r, art)] = sgn;
        w.upper[art] = f64::INFINITY;
        w.cost[art] = 1.0;
        w.basic.push(art);
    }
    for r in 0..w.m {
        let j = w.basic[r];
        w.status[j] = VarStatus::Basic;
    }
    w.refactor()?;

    let needs_phase1 = w.cost.iter().any(|&c| c != 0.0);
    if needs_phase1 {
        w.run_primal()?;
        let infeas = w.objective();
        if infeas > FEAS_TOL * w.scale.max(1.0) {
            return Ok(LpSolution {
                x: w.structural_solution(),
                objective: f64::INFINITY,
                status: LpStatus::Infeasible,
                iterations: w.pivots,
                basis: None,
            });
        }
    }
    // Phase 2: original costs (in worker coordinates), artificials pinned
    // to zero.
    for j in 0..w.n_total {
        w.cost[j] = if j < n { lp.c[j] * w.col_scale[j] } else { 0.0 };
    }
    for r in 0..w.m {
        let art = n + m_le + r;
        w.upper[art] = 0.0;
        if w.status[art] != VarStatus::Basic {
            w.status[art] = VarStatus::AtLower;
        }
    }
    w.degenerate = 0;
    w.run_primal()?;
    debug_assert!(
        w.primal_infeasibility() <= 1e-6 * w.scale.max(1.0),
        "phase-2 exit infeasibility {}",
        w.primal_infeasibility()
    );
    Ok(LpSolution {
        x: w.structural_solution(),
        objective: w.objective(),
        status: LpStatus::Optimal,
        iterations: w.pivots,
        basis: Some(w.snapshot()),
    })
}

/// Reoptimize after bound changes from a previous optimal basis using the
/// dual simplex; the caller passes the program with the *new* bounds. `Err`
/// signals numerical trouble and callers should re-solve from scratch.
pub fn lp_resolve_bounds(lp: &LinearProgram, basis: &Basis) -> Result<LpSolution> {
    let mut w = Worker::standardize(lp);
    if basis.status.len() != w.n_total || basis.basic.len() != w.m {
        return Err(Error::Numerical("basis shape mismatch".into()));
    }
    w.status = basis.status.clone();
    w.basic = basis.basic.clone();
    for j in 0..w.n_total {
        w.cost[j] = if j < w.n_struct { lp.c[j] * w.col_scale[j] } else { 0.0 };
    }
    for j in 0..w.n_total {
        if w.status[j] == VarStatus::AtUpper && !w.upper[j].is_finite() {
            w.status[j] = VarStatus::AtLower;
        }
    }
    w.refactor()?;
    let status = w.run_dual()?;
    if status == LpStatus::Infeasible {
        return Ok(LpSolution {
            x: w.structural_solution(),
            objective: f64::INFINITY,
            status,
            iterations: w.pivots,
            basis: None,
        });
    }
    // Dual exit is primal feasible at a dual-feasible basis; a primal sweep
    // mops up any tolerance slack and certifies optimality.
    w.degenerate = 0;
    w.run_primal()?;
    if w.primal_infeasibility() > 1e-7 * w.scale.max(1.0) {
        return Err(Error::Numerical("warm start failed to restore feasibility".into()));
    }
    Ok(LpSolution {
        x: w.structural_solution(),
        objective: w.objective(),
        status: LpStatus::Optimal,
        iterations: w.pivots,
        basis: Some(w.snapshot()),
    })
}
