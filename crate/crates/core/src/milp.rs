//! Exact 0-1 MILP reduction of the design oracle, with certified-gap
//! branch-and-bound.
//!
//! The chain is: the trace objective over a binary assortment indicator `x`
//! is a quadratic fraction (QFIP), the quadratic forms are linearized with
//! big-M splits (LFIP), and the Charnes-Cooper scaling `alpha = 1/denominator`
//! turns the fractional objective into a linear one. Every feasible binary
//! `x` then has a unique continuous completion whose objective equals
//! `x'Ax / (denom + x'Bx)`, so MILP bounds translate directly into certified
//! bounds on the trace maximization.
//!
//! Without the outside option (minimum size 2):
//!
//! ```text
//! A = -(w r' + r w')/2 + G,     B = w w',            denom = 0,
//! ```
//!
//! with `w_i = exp(a_i' theta0)`, `s_i = a_i' M^{-1} a_i`, `r = w ∘ s`,
//! `G_ij = w_i w_j a_i' M^{-1} a_j`. With the outside option the denominator
//! becomes `(1 + w'x)^2`, which on binary points splits into an affine
//! constant plus a quadratic with extra diagonal terms:
//!
//! ```text
//! A = G - diag(r) - (w r' + r w')/2,   B = 2 diag(w) + w w',   denom = 1,
//! ```
//!
//! the scaling constraint becomes `1'U1 + alpha = 1`, and the minimum
//! cardinality drops to 1. Both variants share all remaining machinery.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lmo::{utility_weights, LmoBackend, LmoResult, LmoStats};
use crate::mnl::{Assortment, Instance};
use crate::simplex::{lp_resolve_bounds, lp_simplex, Basis, LinearProgram, LpStatus};

/// Integrality tolerance for branching decisions.
pub const INT_TOL: f64 = 1e-6;
/// Gap below which a solve is reported as optimal.
pub const OPT_TOL: f64 = 1e-9;

/// Quadratic fractional form of one oracle call: minimize
/// `x'Ax / (denom_const + x'Bx)` over binary x with
/// `min_size <= 1'x <= k`. The LMO value is the negative of that minimum.
#[derive(Clone, Debug)]
pub struct QfipData {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w: Vec<f64>,
    /// `r_i = w_i s_i` (the reduction's shorthand, not a revenue).
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub denom_const: f64,
    pub k: usize,
    pub min_size: usize,
}

impl QfipData {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Exact objective of a binary point given as an item list.
    pub fn ratio_of_items(&self, items: &[usize]) -> f64 {
        let mut quad_a = 0.0;
        let mut quad_b = 0.0;
        for &i in items {
            for &j in items {
                quad_a += self.a[(i, j)];
                quad_b += self.b[(i, j)];
            }
        }
        quad_a / (self.denom_const + quad_b)
    }
}

/// Builds the fractional form at `theta0` against the design matrix `m`.
pub fn build_qfip(inst: &Instance, theta0: &DVector<f64>, m: &DMatrix<f64>) -> Result<QfipData> {
    let n = inst.n_arms();
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical("design matrix not positive definite".into()))?;
    let w = utility_weights(inst, theta0);
    let minv_a: Vec<DVector<f64>> = (0..n).map(|i| chol.solve(&inst.arm(i))).collect();
    let s: Vec<f64> = (0..n).map(|i| inst.arm(i).dot(&minv_a[i])).collect();
    let r: Vec<f64> = (0..n).map(|i| w[i] * s[i]).collect();
    let outside = inst.outside_option();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let g = w[i] * w[j] * inst.arm(i).dot(&minv_a[j]);
            let mut aij = g - 0.5 * (w[i] * r[j] + r[i] * w[j]);
            if outside && i == j {
                aij -= r[i];
            }
            a[(i, j)] = aij;
            a[(j, i)] = aij;
            let mut bij = w[i] * w[j];
            if outside && i == j {
                bij += 2.0 * w[i];
            }
            b[(i, j)] = bij;
            b[(j, i)] = bij;
        }
    }
    Ok(QfipData {
        a,
        b,
        w,
        r,
        s,
        denom_const: if outside { 1.0 } else { 0.0 },
        k: inst.capacity(),
        min_size: inst.min_assortment_size(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BigMMode {
    /// Scalar row-sum bounds.
    Coarse,
    /// Cardinality-aware row-wise bounds and the exact smallest-weights
    /// denominator floor.
    Tight,
}

#[derive(Clone, Debug)]
pub struct BigMConstants {
    pub m_a: Vec<f64>,
    pub m_b: Vec<f64>,
    pub alpha_bar: f64,
    pub mode: BigMMode,
}

/// Valid big-M envelopes for `(Ax)_i`, `(Bx)_i`, and `1/(denom + x'Bx)` over
/// every feasible binary x.
pub fn big_m(q: &QfipData, mode: BigMMode) -> BigMConstants {
    let n = q.n();
    let m_a = match mode {
        BigMMode::Coarse => {
            let scalar = (0..n)
                .map(|i| (0..n).map(|j| q.a[(i, j)].abs()).sum::<f64>())
                .fold(0.0_f64, f64::max);
            vec![scalar; n]
        }
        BigMMode::Tight => (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| q.a[(i, j)].abs()).collect();
                row.sort_by(|x, y| y.partial_cmp(x).unwrap());
                row.iter().take(q.k).sum()
            })
            .collect(),
    };
    let m_b = match mode {
        BigMMode::Coarse => {
            let scalar = (0..n)
                .map(|i| (0..n).map(|j| q.b[(i, j)]).sum::<f64>())
                .fold(0.0_f64, f64::max);
            vec![scalar; n]
        }
        BigMMode::Tight => {
            let mut sorted = q.w.clone();
            sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let w_max_k: f64 = sorted.iter().take(q.k).sum();
            (0..n)
                .map(|i| {
                    let diag_extra = if q.denom_const > 0.0 { 2.0 * q.w[i] } else { 0.0 };
                    q.w[i] * w_max_k + diag_extra
                })
                .collect()
        }
    };
    // Denominator floor over feasible x: the min_size smallest weights.
    let mut ascending = q.w.clone();
    ascending.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let w_min_sum: f64 = ascending.iter().take(q.min_size).sum();
    let alpha_bar = match mode {
        BigMMode::Coarse => {
            if q.denom_const > 0.0 {
                1.0 / (1.0 + ascending[0]).powi(2)
            } else {
                // 1'x >= 2 gives w'x >= 2 w_min.
                1.0 / (4.0 * ascending[0] * ascending[0])
            }
        }
        BigMMode::Tight => 1.0 / (q.denom_const + w_min_sum).powi(2),
    };
    BigMConstants { m_a, m_b, alpha_bar, mode }
}

/// The assembled 0-1 MILP: `lp` holds the linear relaxation (all columns
/// continuous), `integer_vars` the indices that must be binary, and the
/// provenance data stays attached for incumbent evaluation and export.
#[derive(Clone, Debug)]
pub struct MilpModel {
    pub n_items: usize,
    pub qfip: QfipData,
    pub bigm: BigMConstants,
    pub lp: LinearProgram,
    pub integer_vars: Vec<usize>,
}

/// Column layout: x | v | s0 | s1 | u0 | u1 | alpha.
pub fn build_milp(q: &QfipData, bigm: &BigMConstants) -> MilpModel {
    let n = q.n();
    let cols = 6 * n + 1;
    let alpha = 6 * n;
    let (x0, v0, s00, s10, u00, u10) = (0, n, 2 * n, 3 * n, 4 * n, 5 * n);

    let mut c = DVector::zeros(cols);
    for i in 0..n {
        c[s10 + i] = 1.0;
        c[v0 + i] = -bigm.m_a[i];
    }

    // Equalities: A v + m_a alpha - s0 - s1 = 0; B v - u0 - u1 = 0;
    // sum(u1) + denom * alpha = 1.
    let m_eq = 2 * n + 1;
    let mut a_eq = DMatrix::zeros(m_eq, cols);
    let mut b_eq = DVector::zeros(m_eq);
    for i in 0..n {
        for j in 0..n {
            a_eq[(i, v0 + j)] = q.a[(i, j)];
            a_eq[(n + i, v0 + j)] = q.b[(i, j)];
        }
        a_eq[(i, alpha)] = bigm.m_a[i];
        a_eq[(i, s00 + i)] = -1.0;
        a_eq[(i, s10 + i)] = -1.0;
        a_eq[(n + i, u00 + i)] = -1.0;
        a_eq[(n + i, u10 + i)] = -1.0;
    }
    for i in 0..n {
        a_eq[(2 * n, u10 + i)] = 1.0;
    }
    a_eq[(2 * n, alpha)] = q.denom_const;
    b_eq[2 * n] = 1.0;

    // Inequalities.
    let m_le = 7 * n + 2;
    let mut a_le = DMatrix::zeros(m_le, cols);
    let mut b_le = DVector::zeros(m_le);
    for i in 0..n {
        // s0_i <= 2 m_a_i (alpha - v_i)
        a_le[(i, s00 + i)] = 1.0;
        a_le[(i, v0 + i)] = 2.0 * bigm.m_a[i];
        a_le[(i, alpha)] = -2.0 * bigm.m_a[i];
        // s1_i <= 2 m_a_i v_i
        a_le[(n + i, s10 + i)] = 1.0;
        a_le[(n + i, v0 + i)] = -2.0 * bigm.m_a[i];
        // u0_i <= m_b_i (alpha - v_i)
        a_le[(2 * n + i, u00 + i)] = 1.0;
        a_le[(2 * n + i, v0 + i)] = bigm.m_b[i];
        a_le[(2 * n + i, alpha)] = -bigm.m_b[i];
        // u1_i <= m_b_i v_i
        a_le[(3 * n + i, u10 + i)] = 1.0;
        a_le[(3 * n + i, v0 + i)] = -bigm.m_b[i];
        // v_i <= alpha
        a_le[(4 * n + i, v0 + i)] = 1.0;
        a_le[(4 * n + i, alpha)] = -1.0;
        // v_i <= alpha_bar x_i
        a_le[(5 * n + i, v0 + i)] = 1.0;
        a_le[(5 * n + i, x0 + i)] = -bigm.alpha_bar;
        // v_i >= alpha - alpha_bar (1 - x_i)
        a_le[(6 * n + i, alpha)] = 1.0;
        a_le[(6 * n + i, v0 + i)] = -1.0;
        a_le[(6 * n + i, x0 + i)] = bigm.alpha_bar;
        b_le[6 * n + i] = bigm.alpha_bar;
    }
    for i in 0..n {
        a_le[(7 * n, x0 + i)] = 1.0;
        a_le[(7 * n + 1, x0 + i)] = -1.0;
    }
    b_le[7 * n] = q.k as f64;
    b_le[7 * n + 1] = -(q.min_size as f64);

    let mut lower = DVector::zeros(cols);
    let mut upper = DVector::zeros(cols);
    for i in 0..n {
        upper[x0 + i] = 1.0;
        upper[v0 + i] = bigm.alpha_bar;
        upper[s00 + i] = 2.0 * bigm.m_a[i] * bigm.alpha_bar;
        upper[s10 + i] = 2.0 * bigm.m_a[i] * bigm.alpha_bar;
        upper[u00 + i] = bigm.m_b[i] * bigm.alpha_bar;
        upper[u10 + i] = bigm.m_b[i] * bigm.alpha_bar;
    }
    upper[alpha] = bigm.alpha_bar;
    lower.fill(0.0);

    MilpModel {
        n_items: n,
        qfip: q.clone(),
        bigm: bigm.clone(),
        lp: LinearProgram { c, a_eq, b_eq, a_le, b_le, lower, upper },
        integer_vars: (0..n).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BnbStatus {
    Optimal,
    GapReached,
    NodeCap,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct BnbResult {
    pub x_incumbent: Vec<u8>,
    pub ub: f64,
    pub lb: f64,
    pub gap: f64,
    pub nodes: usize,
    pub status: BnbStatus,
}

#[derive(Clone, Copy, Debug)]
pub struct BnbOptions {
    pub verbose: bool,
    pub deadline: Option<Instant>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { verbose: false, deadline: None }
    }
}

struct HeapNode {
    lb: f64,
    seq: u64,
    x: Vec<f64>,
    basis: Basis,
    xlo: Vec<f64>,
    xhi: Vec<f64>,
}

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.lb == other.lb && self.seq == other.seq
    }
}
impl Eq for HeapNode {}
impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapNode {
    // BinaryHeap is a max-heap; invert so the lowest bound pops first, with
    // insertion order as the deterministic tie-break.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lb
            .partial_cmp(&self.lb)
            .unwrap_or(Ordering::Equal)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Threshold-round the relaxation point and repair cardinality into
/// `[min_size, k]` by flipping the most fractional coordinates.
fn repair_rounding(q: &QfipData, x: &[f64]) -> Vec<usize> {
    let n = q.n();
    let mut items: Vec<usize> = (0..n).filter(|&i| x[i] >= 0.5).collect();
    if items.len() > q.k {
        items.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
        items.truncate(q.k);
        items.sort_unstable();
    }
    if items.len() < q.min_size {
        let mut outside: Vec<usize> = (0..n).filter(|i| !items.contains(i)).collect();
        outside.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
        for i in outside {
            if items.len() >= q.min_size {
                break;
            }
            items.push(i);
        }
        items.sort_unstable();
    }
    items
}

/// Best-bound branch-and-bound over the assembled MILP. The returned bracket
/// `[lb, ub]` always contains the true minimum, regardless of early stopping.
pub fn solve_bnb(
    model: &MilpModel,
    eps_lmo: f64,
    node_cap: usize,
    opts: &BnbOptions,
) -> Result<BnbResult> {
    assert!(eps_lmo >= 0.0, "gap tolerance must be nonnegative");
    let n = model.n_items;
    let q = &model.qfip;
    let stop_gap = eps_lmo.max(OPT_TOL);

    let mut lp = model.lp.clone();
    let root = lp_simplex(&lp)?;
    if root.status == LpStatus::Infeasible {
        // Valid inputs always admit the fractional interior completion, so
        // this only fires on externally corrupted bounds.
        return Err(Error::Infeasible("MILP relaxation infeasible".into()));
    }
    let mut nodes = 1usize;
    let mut seq = 0u64;

    let mut best_items = repair_rounding(q, root.x.as_slice());
    let mut ub = q.ratio_of_items(&best_items);
    let mut heap: BinaryHeap<HeapNode> = BinaryHeap::new();
    heap.push(HeapNode {
        lb: root.objective,
        seq,
        x: root.x.as_slice()[..n].to_vec(),
        basis: root.basis.expect("optimal LP carries a basis"),
        xlo: vec![0.0; n],
        xhi: vec![1.0; n],
    });
    let mut last_global_lb = f64::NEG_INFINITY;

    let finish = |status: BnbStatus, ub: f64, lb: f64, nodes: usize, items: &[usize]| {
        let mut x_inc = vec![0u8; n];
        for &i in items {
            x_inc[i] = 1;
        }
        BnbResult { x_incumbent: x_inc, ub, lb: lb.min(ub), gap: (ub - lb).max(0.0), nodes, status }
    };

    loop {
        let global_lb = heap.peek().map_or(ub, |t| t.lb.min(ub));
        debug_assert!(
            global_lb >= last_global_lb - 1e-9,
            "global bound regressed: {global_lb} < {last_global_lb}"
        );
        last_global_lb = last_global_lb.max(global_lb);
        if opts.verbose {
            eprintln!(
                "node={} LB={:.9e} UB={:.9e} gap={:.3e}",
                nodes,
                global_lb,
                ub,
                ub - global_lb
            );
        }
        if ub - global_lb <= stop_gap {
            let status =
                if ub - global_lb <= OPT_TOL { BnbStatus::Optimal } else { BnbStatus::GapReached };
            return Ok(finish(status, ub, global_lb, nodes, &best_items));
        }
        if nodes >= node_cap {
            return Ok(finish(BnbStatus::NodeCap, ub, global_lb, nodes, &best_items));
        }
        if let Some(t) = opts.deadline {
            if Instant::now() >= t {
                return Ok(finish(BnbStatus::NodeCap, ub, global_lb, nodes, &best_items));
            }
        }
        let Some(node) = heap.pop() else {
            return Ok(finish(BnbStatus::Optimal, ub, ub, nodes, &best_items));
        };
        if node.lb >= ub - 1e-12 {
            continue;
        }
        // Most fractional coordinate; ties break to the lowest index.
        let mut branch: Option<(usize, f64)> = None;
        for i in 0..n {
            let frac = (node.x[i] - node.x[i].round()).abs();
            if frac > INT_TOL && branch.map_or(true, |(_, b)| frac > b + 1e-15) {
                branch = Some((i, frac));
            }
        }
        let Some((bi, _)) = branch else {
            // Integral leaf: its exact ratio was recorded when pushed.
            continue;
        };
        for fix_to_one in [false, true] {
            let mut xlo = node.xlo.clone();
            let mut xhi = node.xhi.clone();
            if fix_to_one {
                xlo[bi] = 1.0;
            } else {
                xhi[bi] = 0.0;
            }
            for i in 0..n {
                lp.lower[i] = xlo[i];
                lp.upper[i] = xhi[i];
            }
            let solved = match lp_resolve_bounds(&lp, &node.basis) {
                Ok(sol) => sol,
                Err(_) => lp_simplex(&lp)?,
            };
            nodes += 1;
            if solved.status == LpStatus::Infeasible {
                continue;
            }
            let child_lb = solved.objective.max(node.lb);
            if child_lb >= ub - 1e-12 {
                continue;
            }
            let xs = &solved.x.as_slice()[..n];
            let integral = xs.iter().all(|v| (v - v.round()).abs() <= INT_TOL);
            // Every node contributes a repair-rounded incumbent candidate.
            let cand = repair_rounding(q, xs);
            if cand.len() >= q.min_size && cand.len() <= q.k {
                let val = q.ratio_of_items(&cand);
                if val < ub {
                    ub = val;
                    best_items = cand;
                }
            }
            if integral {
                continue;
            }
            seq += 1;
            heap.push(HeapNode {
                lb: child_lb,
                seq,
                x: xs.to_vec(),
                basis: solved.basis.expect("optimal LP carries a basis"),
                xlo,
                xhi,
            });
        }
    }
}

/// Full oracle call through the MILP route: build the fractional form,
/// assemble the model with the requested big-M mode, run branch-and-bound,
/// and translate the sign back to the trace objective.
pub fn lmo_milp(
    inst: &Instance,
    theta0: &DVector<f64>,
    m: &DMatrix<f64>,
    eps_lmo: f64,
    mode: BigMMode,
    node_cap: usize,
    opts: &BnbOptions,
) -> Result<LmoResult> {
    let q = build_qfip(inst, theta0, m)?;
    let bigm = big_m(&q, mode);
    let model = build_milp(&q, &bigm);
    let res = solve_bnb(&model, eps_lmo, node_cap, opts)?;
    let items: Vec<usize> = res
        .x_incumbent
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v == 1).then_some(i))
        .collect();
    Ok(LmoResult {
        assortment: Assortment::new(items)?,
        value: -res.ub,
        certified_gap: res.gap,
        backend: LmoBackend::Milp,
        stats: LmoStats { explored: res.nodes as u64 },
    })
}
