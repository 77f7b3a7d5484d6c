//! Independent reference implementations used to validate the fast paths.
//!
//! Everything here favors obviousness over speed: direct per-subset
//! evaluation, dense inverses, finite differences, and a naive full-tableau
//! LP solver. None of it shares code with the implementations it checks; the
//! verification suite in [`crate::check`] and the unit tests run both sides
//! and compare.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lmo::RatioProblem;
use crate::mnl::{choice_probs, fisher_info, nll_loss_grad_hess, Assortment, Instance, Observation};

/// Every subset of {0..n-1} with size in [lo, hi], lexicographic.
pub fn subsets_in_range(n: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    fn rec(n: usize, lo: usize, hi: usize, next: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if stack.len() >= lo {
            out.push(stack.clone());
        }
        if stack.len() == hi {
            return;
        }
        for i in next..n {
            stack.push(i);
            rec(n, lo, hi, i + 1, stack, out);
            stack.pop();
        }
    }
    rec(n, lo, hi, 0, &mut stack, &mut out);
    out
}

/// Every valid assortment of an instance.
pub fn all_assortments(inst: &Instance) -> Vec<Assortment> {
    subsets_in_range(inst.n_arms(), inst.min_assortment_size(), inst.capacity())
        .into_iter()
        .map(|items| Assortment::new(items).unwrap())
        .collect()
}

/// Exhaustive maximization of a ratio problem by direct evaluation.
pub fn brute_ratio_max(p: &RatioProblem) -> Option<(Vec<usize>, f64)> {
    let n = p.w.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for items in subsets_in_range(n, p.min_size, p.k) {
        if !p.forced_in.iter().all(|i| items.contains(i)) {
            continue;
        }
        if items.iter().any(|i| p.forced_out.contains(i)) {
            continue;
        }
        let ratio = p.ratio(&items);
        if best.as_ref().map_or(true, |(_, b)| ratio > *b) {
            best = Some((items, ratio));
        }
    }
    best
}

/// Exhaustive `argmax_S tr(M^{-1} I(S))` by direct Fisher + trace evaluation
/// per subset (dense inverse, no incremental tricks).
pub fn brute_trace_max(
    inst: &Instance,
    theta0: &DVector<f64>,
    m: &DMatrix<f64>,
) -> Result<(Assortment, f64)> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular design matrix".into()))?;
    let mut best: Option<(Assortment, f64)> = None;
    for s in all_assortments(inst) {
        let info = fisher_info(inst, &s, theta0)?;
        let value = (&inv * info).trace();
        if best.as_ref().map_or(true, |(_, b)| value > *b) {
            best = Some((s, value));
        }
    }
    best.ok_or_else(|| Error::Infeasible("no admissible assortment".into()))
}

/// Direct trace value of one subset (for spot checks).
pub fn trace_value(
    inst: &Instance,
    s: &Assortment,
    theta0: &DVector<f64>,
    m: &DMatrix<f64>,
) -> Result<f64> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular design matrix".into()))?;
    Ok((&inv * fisher_info(inst, s, theta0)?).trace())
}

/// Exhaustive kappa: enumerate every assortment and offered item.
pub fn brute_kappa(inst: &Instance, theta: &DVector<f64>) -> Result<f64> {
    if !inst.outside_option() {
        return Err(Error::ModelFlag("kappa requires the outside option".into()));
    }
    let mut best = f64::INFINITY;
    for s in all_assortments(inst) {
        let p = choice_probs(inst, &s, theta)?;
        let p0 = p.outside.unwrap();
        for &pi in &p.probs {
            best = best.min(pi * p0);
        }
    }
    Ok(best)
}

/// Expected revenue of a (possibly empty) item set under explicit utilities,
/// computed the obvious way with a max shift.
pub fn revenue_of(items: &[usize], utilities: &[f64], revenues: &[f64]) -> f64 {
    let shift = items
        .iter()
        .map(|&i| utilities[i])
        .fold(0.0_f64, f64::max);
    let mut num = 0.0;
    let mut denom = (-shift).exp();
    for &i in items {
        let w = (utilities[i] - shift).exp();
        num += w * revenues[i];
        denom += w;
    }
    num / denom
}

/// Exhaustive revenue maximization over all sets with |S| <= k satisfying the
/// constraints; the empty set is a candidate when nothing is forced in.
pub fn brute_best_assortment(
    utilities: &[f64],
    revenues: &[f64],
    k: usize,
    forced_in: &[usize],
    forced_out: &[usize],
) -> (Vec<usize>, f64) {
    let n = utilities.len();
    let mut best: Vec<usize> = Vec::new();
    let mut best_val = if forced_in.is_empty() { 0.0 } else { f64::NEG_INFINITY };
    for items in subsets_in_range(n, 1, k) {
        if !forced_in.iter().all(|i| items.contains(i)) {
            continue;
        }
        if items.iter().any(|i| forced_out.contains(i)) {
            continue;
        }
        let v = revenue_of(&items, utilities, revenues);
        if v > best_val {
            best_val = v;
            best = items;
        }
    }
    (best, best_val)
}

/// Exhaustive best and second-best revenue sets at one utility vector.
pub fn brute_two_best(
    utilities: &[f64],
    revenues: &[f64],
    k: usize,
) -> ((Vec<usize>, f64), (Vec<usize>, f64)) {
    let n = utilities.len();
    let sets = subsets_in_range(n, 0, k);
    let mut scored: Vec<(Vec<usize>, f64)> = sets
        .into_iter()
        .map(|s| {
            let v = revenue_of(&s, utilities, revenues);
            (s, v)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let best = scored[0].clone();
    let second = scored
        .iter()
        .find(|(s, _)| *s != best.0)
        .cloned()
        .expect("at least two candidate sets");
    (best, second)
}

/// Central finite-difference gradient of the regularized NLL.
pub fn fd_gradient(
    inst: &Instance,
    dataset: &[Observation],
    theta: &DVector<f64>,
    lambda: f64,
    h: f64,
) -> Result<DVector<f64>> {
    let d = theta.len();
    let mut g = DVector::zeros(d);
    for j in 0..d {
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let (lp, _, _) = nll_loss_grad_hess(inst, dataset, &plus, lambda)?;
        let (lm, _, _) = nll_loss_grad_hess(inst, dataset, &minus, lambda)?;
        g[j] = (lp - lm) / (2.0 * h);
    }
    Ok(g)
}

/// Central finite-difference Hessian via gradient differences.
pub fn fd_hessian(
    inst: &Instance,
    dataset: &[Observation],
    theta: &DVector<f64>,
    lambda: f64,
    h: f64,
) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let (_, gp, _) = nll_loss_grad_hess(inst, dataset, &plus, lambda)?;
        let (_, gm, _) = nll_loss_grad_hess(inst, dataset, &minus, lambda)?;
        let col = (gp - gm) / (2.0 * h);
        out.column_mut(j).copy_from(&col);
    }
    // Symmetrize the numerical noise away.
    let sym = (&out + out.transpose()) * 0.5;
    Ok(sym)
}

/// Textbook Big-M dense-tableau simplex for `min c'x, A x <= b, A_eq x = b_eq,
/// 0 <= x` used as the independent oracle for the revised solver. Variables
/// with general bounds are shifted/split by the caller.
pub struct TableauLp {
    pub c: Vec<f64>,
    pub a_le: Vec<Vec<f64>>,
    pub b_le: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

pub enum TableauOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

pub fn tableau_simplex(lp: &TableauLp) -> TableauOutcome {
    let n = lp.c.len();
    let m_le = lp.a_le.len();
    let m_eq = lp.a_eq.len();
    let m = m_le + m_eq;
    let big_m = 1e7
        * (1.0
            + lp
                .c
                .iter()
                .chain(lp.b_le.iter())
                .chain(lp.b_eq.iter())
                .fold(0.0_f64, |acc, v| acc.max(v.abs())));
    // Columns: n structural + m_le slacks + m artificials, then RHS.
    let cols = n + m_le + m + 1;
    let mut t = vec![vec![0.0_f64; cols]; m + 1];
    for (r, (row, rhs)) in lp.a_le.iter().zip(&lp.b_le).enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r][j] = sign * row[j];
        }
        t[r][n + r] = sign; // slack
        t[r][n + m_le + r] = 1.0; // artificial
        t[r][cols - 1] = sign * rhs;
    }
    for (i, (row, rhs)) in lp.a_eq.iter().zip(&lp.b_eq).enumerate() {
        let r = m_le + i;
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r][j] = sign * row[j];
        }
        t[r][n + m_le + r] = 1.0;
        t[r][cols - 1] = sign * rhs;
    }
    for j in 0..n {
        t[m][j] = lp.c[j];
    }
    for r in 0..m {
        t[m][n + m_le + r] = big_m;
    }
    // Price out artificial basis.
    let mut basis: Vec<usize> = (0..m).map(|r| n + m_le + r).collect();
    for r in 0..m {
        let factor = t[m][basis[r]];
        if factor != 0.0 {
            for j in 0..cols {
                t[m][j] -= factor * t[r][j];
            }
        }
    }
    for _ in 0..20_000 {
        // Entering: most negative reduced cost.
        let mut enter = None;
        let mut best = -1e-9;
        for j in 0..cols - 1 {
            if t[m][j] < best {
                best = t[m][j];
                enter = Some(j);
            }
        }
        let Some(e) = enter else { break };
        // Ratio test.
        let mut leave = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..m {
            if t[r][e] > 1e-11 {
                let ratio = t[r][cols - 1] / t[r][e];
                if ratio < best_ratio - 1e-12 {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(l) = leave else {
            return TableauOutcome::Unbounded;
        };
        // Pivot.
        let piv = t[l][e];
        for j in 0..cols {
            t[l][j] /= piv;
        }
        for r in 0..=m {
            if r != l && t[r][e].abs() > 0.0 {
                let f = t[r][e];
                for j in 0..cols {
                    t[r][j] -= f * t[l][j];
                }
            }
        }
        basis[l] = e;
    }
    // Artificials must be zero.
    for r in 0..m {
        if basis[r] >= n + m_le && t[r][cols - 1] > 1e-6 {
            return TableauOutcome::Infeasible;
        }
    }
    let mut x = vec![0.0; n];
    for r in 0..m {
        if basis[r] < n {
            x[basis[r]] = t[r][cols - 1];
        }
    }
    let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    TableauOutcome::Optimal { x, objective }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_enumeration_counts() {
        assert_eq!(subsets_in_range(5, 2, 3).len(), 10 + 10);
        assert_eq!(subsets_in_range(4, 0, 4).len(), 16);
    }

    #[test]
    fn tableau_tiny_lp() {
        // min x1 s.t. x1 >= 3 (as -x1 <= -3), x1 <= 5.
        let lp = TableauLp {
            c: vec![1.0],
            a_le: vec![vec![-1.0], vec![1.0]],
            b_le: vec![-3.0, 5.0],
            a_eq: vec![],
            b_eq: vec![],
        };
        match tableau_simplex(&lp) {
            TableauOutcome::Optimal { x, objective } => {
                assert!((x[0] - 3.0).abs() < 1e-7);
                assert!((objective - 3.0).abs() < 1e-7);
            }
            _ => panic!("expected optimal"),
        }
    }

    #[test]
    fn tableau_detects_infeasible() {
        // x1 <= 1, x1 >= 2.
        let lp = TableauLp {
            c: vec![0.0],
            a_le: vec![vec![1.0], vec![-1.0]],
            b_le: vec![1.0, -2.0],
            a_eq: vec![],
            b_eq: vec![],
        };
        assert!(matches!(tableau_simplex(&lp), TableauOutcome::Infeasible));
    }
}
