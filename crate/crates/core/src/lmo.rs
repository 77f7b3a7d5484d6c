//! Linear maximization oracles over the assortment family.
//!
//! Three backends produce the Frank-Wolfe atom `argmax_S tr(M^{-1} I(S))`:
//!
//! * [`lmo_brute`] — exhaustive enumeration with an incrementally maintained
//!   quadratic form, exact;
//! * `milp` (in [`crate::milp`]) — the 0-1 MILP reduction with certified
//!   early stopping;
//! * [`lmo_lifted`] — the polynomial-time oracle for the lifted objective,
//!   exact for the surrogate.
//!
//! The Dinkelbach solver here is the shared engine for every ratio-of-sums
//! maximization in the crate (lifted LMO, revenue-optimal assortments).

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mnl::{Assortment, Instance, UTILITY_CLAMP};

/// Which engine produced an [`LmoResult`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmoBackend {
    Brute,
    Milp,
    Lifted,
}

impl std::fmt::Display for LmoBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LmoBackend::Brute => write!(f, "brute"),
            LmoBackend::Milp => write!(f, "milp"),
            LmoBackend::Lifted => write!(f, "lifted"),
        }
    }
}

/// Work counters for an oracle call.
#[derive(Clone, Copy, Debug, Default)]
pub struct LmoStats {
    /// Subsets evaluated (brute), branch-and-bound nodes (milp), or
    /// Dinkelbach iterations (lifted).
    pub explored: u64,
}

/// A candidate maximizer with a certified optimality gap:
/// `true max <= value + certified_gap`.
#[derive(Clone, Debug)]
pub struct LmoResult {
    pub assortment: Assortment,
    pub value: f64,
    pub certified_gap: f64,
    pub backend: LmoBackend,
    pub stats: LmoStats,
}

/// Budget knobs shared by the enumeration backends.
#[derive(Clone, Copy, Debug)]
pub struct LmoOptions {
    /// Hard cap on enumerated subsets.
    pub subset_budget: u64,
    /// Optional wall-clock deadline.
    pub deadline: Option<Instant>,
}

impl Default for LmoOptions {
    fn default() -> Self {
        Self { subset_budget: 100_000_000, deadline: None }
    }
}

/// Maximize `(num_const + sum_{i in S} w_i s_i) / (denom_const + sum_{i in S} w_i)`
/// over `{S : forced_in ⊆ S, S ∩ forced_out = ∅, min_size <= |S| <= k}`.
#[derive(Clone, Debug)]
pub struct RatioProblem {
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    /// Constant added to the numerator (the outside option's lifted score).
    pub num_const: f64,
    /// 0 for the no-outside-option design objective, 1 with the outside option.
    pub denom_const: f64,
    pub k: usize,
    pub min_size: usize,
    pub forced_in: Vec<usize>,
    pub forced_out: Vec<usize>,
}

impl RatioProblem {
    pub fn unconstrained(w: Vec<f64>, s: Vec<f64>, denom_const: f64, k: usize, min_size: usize) -> Self {
        Self {
            w,
            s,
            num_const: 0.0,
            denom_const,
            k,
            min_size,
            forced_in: Vec::new(),
            forced_out: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.w.len();
        if self.s.len() != n {
            return Err(Error::Infeasible("w/s length mismatch".into()));
        }
        if self.w.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Infeasible("weights must be positive and finite".into()));
        }
        if self.forced_in.iter().any(|i| self.forced_out.contains(i)) {
            return Err(Error::Infeasible("forced_in and forced_out overlap".into()));
        }
        if self.forced_in.len() > self.k {
            return Err(Error::Infeasible(format!(
                "{} forced items exceed capacity {}",
                self.forced_in.len(),
                self.k
            )));
        }
        let available = n - self.forced_out.len();
        if available < self.min_size {
            return Err(Error::Infeasible(format!(
                "only {available} admissible items for min size {}",
                self.min_size
            )));
        }
        if self.min_size > self.k {
            return Err(Error::Infeasible("min_size exceeds capacity".into()));
        }
        Ok(())
    }

    fn numerator(&self, items: &[usize]) -> f64 {
        self.num_const + items.iter().map(|&i| self.w[i] * self.s[i]).sum::<f64>()
    }

    fn denominator(&self, items: &[usize]) -> f64 {
        self.denom_const + items.iter().map(|&i| self.w[i]).sum::<f64>()
    }

    pub fn ratio(&self, items: &[usize]) -> f64 {
        self.numerator(items) / self.denominator(items)
    }

    /// Exact maximizer of the linear surrogate `sum_{i in S} w_i (s_i - lambda)`
    /// over the constrained family: forced items, then the largest strictly
    /// positive scores up to capacity, then the least-negative scores to
    /// reach the minimum size. Ties break toward the lower index.
    fn inner_argmax(&self, lambda: f64) -> Vec<usize> {
        let mut items: Vec<usize> = self.forced_in.clone();
        let mut optional: Vec<usize> = (0..self.w.len())
            .filter(|i| !self.forced_in.contains(i) && !self.forced_out.contains(i))
            .collect();
        let score = |i: usize| self.w[i] * (self.s[i] - lambda);
        optional.sort_by(|&a, &b| {
            score(b).partial_cmp(&score(a)).unwrap().then(a.cmp(&b))
        });
        let mut cursor = 0;
        while items.len() < self.k && cursor < optional.len() && score(optional[cursor]) > 0.0 {
            items.push(optional[cursor]);
            cursor += 1;
        }
        while items.len() < self.min_size && cursor < optional.len() {
            items.push(optional[cursor]);
            cursor += 1;
        }
        items.sort_unstable();
        items
    }
}

const DINKELBACH_TOL: f64 = 1e-12;
const DINKELBACH_MAX_ITERS: usize = 100;

/// Exact ratio-of-sums maximization by Dinkelbach's parametric method.
///
/// Each round sets `lambda` to the ratio of the current set and re-solves the
/// linear surrogate; the surplus `f(S) - lambda g(S)` of the new set is
/// nonnegative and hits (numerical) zero exactly at the optimum.
pub fn dinkelbach(p: &RatioProblem) -> Result<(Assortment, f64)> {
    p.validate()?;
    // Any feasible set seeds lambda; fill by score to start close.
    let mut current = {
        let mut items = p.forced_in.clone();
        let mut optional: Vec<usize> = (0..p.w.len())
            .filter(|i| !p.forced_in.contains(i) && !p.forced_out.contains(i))
            .collect();
        optional.sort_by(|&a, &b| {
            (p.w[b] * p.s[b]).partial_cmp(&(p.w[a] * p.s[a])).unwrap().then(a.cmp(&b))
        });
        for &i in optional.iter() {
            if items.len() >= p.min_size.max(1) {
                break;
            }
            items.push(i);
        }
        items.sort_unstable();
        items
    };
    if current.is_empty() && p.denom_const == 0.0 {
        return Err(Error::Infeasible("empty seed set with zero denominator".into()));
    }
    let mut lambda = p.ratio(&current);
    for _ in 0..DINKELBACH_MAX_ITERS {
        let candidate = p.inner_argmax(lambda);
        let scale = lambda.abs().max(1.0) * p.denominator(&candidate).max(1.0);
        let surplus = p.numerator(&candidate) - lambda * p.denominator(&candidate);
        debug_assert!(
            surplus >= -1e-9 * scale,
            "inner maximizer beats the current set by construction"
        );
        // Exact finite termination: once the parametric argmax reproduces
        // the current set, the ratio cannot strictly improve. The surplus
        // test catches the same condition earlier on well-scaled inputs.
        if candidate == current || surplus <= DINKELBACH_TOL * scale {
            let value = p.ratio(&candidate);
            let best = if value >= lambda { (candidate, value) } else { (current, lambda) };
            return Ok((Assortment::new(best.0)?, best.1));
        }
        let next = p.ratio(&candidate);
        debug_assert!(next > lambda - 1e-12, "Dinkelbach ratio sequence is increasing");
        current = candidate;
        lambda = next;
    }
    Err(Error::IterationCap(format!(
        "Dinkelbach failed to settle in {DINKELBACH_MAX_ITERS} rounds (lambda = {lambda})"
    )))
}

/// Utility weights `w_i = exp(a_i' theta)`, clamped like every other utility
/// in the crate.
pub fn utility_weights(inst: &Instance, theta: &DVector<f64>) -> Vec<f64> {
    inst.utilities(theta)
        .iter()
        .map(|u| u.clamp(-UTILITY_CLAMP, UTILITY_CLAMP).exp())
        .collect()
}

/// Exhaustive exact LMO: `argmax_S tr(M^{-1} I_theta0(S))`.
///
/// With `s_i = a_i' M^{-1} a_i` and `g_ij = a_i' M^{-1} a_j` precomputed, the
/// trace of a subset is
///
/// ```text
/// tr(M^{-1} I(S)) = (sum w_i s_i) / W  -  (sum_{ij} w_i w_j g_ij) / W^2,
/// W = denom_const + sum w_i,
/// ```
///
/// and enumeration maintains the three running sums incrementally, so each
/// visited subset costs O(|S|).
pub fn lmo_brute(
    inst: &Instance,
    theta0: &DVector<f64>,
    m: &DMatrix<f64>,
    opts: &LmoOptions,
) -> Result<LmoResult> {
    let n = inst.n_arms();
    let k = inst.capacity();
    let min_size = inst.min_assortment_size();
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical("design matrix not positive definite".into()))?;
    let total = count_subsets(n, min_size, k);
    if total > opts.subset_budget as u128 {
        return Err(Error::BudgetExceeded(format!(
            "{total} candidate assortments exceed the {} budget",
            opts.subset_budget
        )));
    }
    let w = utility_weights(inst, theta0);
    let minv_a: Vec<DVector<f64>> = (0..n).map(|i| chol.solve(&inst.arm(i))).collect();
    let s_diag: Vec<f64> = (0..n).map(|i| inst.arm(i).dot(&minv_a[i])).collect();
    let gram = {
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = inst.arm(i).dot(&minv_a[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    };
    let denom_const = if inst.outside_option() { 1.0 } else { 0.0 };

    struct Search<'a> {
        n: usize,
        k: usize,
        min_size: usize,
        w: &'a [f64],
        s: &'a [f64],
        gram: &'a DMatrix<f64>,
        denom_const: f64,
        stack: Vec<usize>,
        // Running sums along the current prefix.
        sum_w: f64,
        sum_ws: f64,
        quad: f64,
        best: f64,
        best_items: Vec<usize>,
        visited: u64,
        deadline: Option<Instant>,
        expired: bool,
    }

    impl Search<'_> {
        fn value(&self) -> f64 {
            let big_w = self.denom_const + self.sum_w;
            self.sum_ws / big_w - self.quad / (big_w * big_w)
        }

        fn recurse(&mut self, next: usize) {
            if self.expired {
                return;
            }
            if self.stack.len() >= self.min_size {
                self.visited += 1;
                if self.visited % 65_536 == 0 {
                    if let Some(t) = self.deadline {
                        if Instant::now() >= t {
                            self.expired = true;
                            return;
                        }
                    }
                }
                let v = self.value();
                // Lexicographic enumeration; strict improvement keeps the
                // first-encountered maximizer on ties.
                if v > self.best {
                    self.best = v;
                    self.best_items = self.stack.clone();
                }
            }
            if self.stack.len() == self.k {
                return;
            }
            for i in next..self.n {
                let cross: f64 = self
                    .stack
                    .iter()
                    .map(|&j| self.w[j] * self.gram[(j, i)])
                    .sum();
                self.stack.push(i);
                let wi = self.w[i];
                self.sum_w += wi;
                self.sum_ws += wi * self.s[i];
                self.quad += wi * (2.0 * cross + wi * self.gram[(i, i)]);
                self.recurse(i + 1);
                self.stack.pop();
                self.sum_w -= wi;
                self.sum_ws -= wi * self.s[i];
                self.quad -= wi * (2.0 * cross + wi * self.gram[(i, i)]);
            }
        }
    }

    let mut search = Search {
        n,
        k,
        min_size,
        w: &w,
        s: &s_diag,
        gram: &gram,
        denom_const,
        stack: Vec::with_capacity(k),
        sum_w: 0.0,
        sum_ws: 0.0,
        quad: 0.0,
        best: f64::NEG_INFINITY,
        best_items: Vec::new(),
        visited: 0,
        deadline: opts.deadline,
        expired: false,
    };
    search.recurse(0);
    if search.expired {
        return Err(Error::Timeout("exhaustive oracle hit its deadline".into()));
    }
    if search.best_items.is_empty() && search.best == f64::NEG_INFINITY {
        return Err(Error::Infeasible("no admissible assortment".into()));
    }
    Ok(LmoResult {
        assortment: Assortment::new(search.best_items)?,
        value: search.best,
        certified_gap: 0.0,
        backend: LmoBackend::Brute,
        stats: LmoStats { explored: search.visited },
    })
}

/// Number of subsets with size in [lo, hi] of an n-element set.
pub fn count_subsets(n: usize, lo: usize, hi: usize) -> u128 {
    (lo..=hi).map(|k| binomial(n, k)).sum()
}

/// Exact binomial coefficient in u128.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Polynomial-time exact oracle for the lifted objective
/// `argmax_S tr(Mlift^{-1} Ilift(S))`, which is the ratio of sums
/// `(s0 * denom_const + sum w_i s_i) / (denom_const + sum w_i)` with
/// `s_i = ã_i' Mlift^{-1} ã_i` and the outside row `ã_0 = (0, 1)`.
pub fn lmo_lifted(
    inst: &Instance,
    theta0: &DVector<f64>,
    m_lifted: &DMatrix<f64>,
) -> Result<LmoResult> {
    let d = inst.dim();
    let chol = Cholesky::new(m_lifted.clone())
        .ok_or_else(|| Error::Numerical("lifted design matrix not positive definite".into()))?;
    let w = utility_weights(inst, theta0);
    let lift = |i: usize| {
        let mut v = DVector::zeros(d + 1);
        v.rows_mut(0, d).copy_from(&inst.arm(i));
        v[d] = 1.0;
        v
    };
    let scores: Vec<f64> = (0..inst.n_arms())
        .map(|i| {
            let a = lift(i);
            chol.solve(&a).dot(&a)
        })
        .collect();
    let (num_const, denom_const) = if inst.outside_option() {
        let mut outside = DVector::zeros(d + 1);
        outside[d] = 1.0;
        (chol.solve(&outside).dot(&outside), 1.0)
    } else {
        (0.0, 0.0)
    };
    let problem = RatioProblem {
        w,
        s: scores,
        num_const,
        denom_const,
        k: inst.capacity(),
        min_size: inst.min_assortment_size(),
        forced_in: Vec::new(),
        forced_out: Vec::new(),
    };
    let (assortment, value) = dinkelbach(&problem)?;
    Ok(LmoResult {
        assortment,
        value,
        certified_gap: 0.0,
        backend: LmoBackend::Lifted,
        stats: LmoStats { explored: 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn inst(outside: bool) -> Instance {
        let features = DMatrix::from_row_slice(
            5,
            2,
            &[0.9, 0.0, 0.0, 0.9, -0.6, 0.3, 0.4, 0.5, -0.2, -0.7],
        );
        Instance::new(features, vec![0.2, 0.4, 0.6, 0.8, 1.0], 3, 1.0, None, outside).unwrap()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(30, 3), 4060);
        assert_eq!(binomial(200, 5), 2_535_650_040);
        assert_eq!(count_subsets(4, 2, 3), 6 + 4);
    }

    #[test]
    fn dinkelbach_single_item() {
        let p = RatioProblem {
            w: vec![2.0, 3.0],
            s: vec![0.5, 0.7],
            num_const: 0.0,
            denom_const: 1.0,
            k: 1,
            min_size: 1,
            forced_in: vec![],
            forced_out: vec![1],
        };
        let (s, ratio) = dinkelbach(&p).unwrap();
        assert_eq!(s.items(), &[0]);
        assert!((ratio - 2.0 * 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dinkelbach_constant_scores_scale_free() {
        let p = RatioProblem::unconstrained(vec![1.0, 5.0, 0.3], vec![0.4; 3], 0.0, 2, 1);
        let (_, ratio) = dinkelbach(&p).unwrap();
        assert!((ratio - 0.4).abs() < 1e-12);
    }

    #[test]
    fn dinkelbach_matches_enumeration() {
        let mut rng = crate::rng::CounterRng::new(99, 0);
        for trial in 0..200 {
            let n = 3 + rng.next_below(9);
            let k = 1 + rng.next_below(n);
            let min_size = 1 + rng.next_below(k);
            let denom_const = if rng.next_f64() < 0.5 { 0.0 } else { 1.0 };
            let w: Vec<f64> = (0..n).map(|_| 0.1 + 2.0 * rng.next_f64()).collect();
            let s: Vec<f64> = (0..n).map(|_| 2.0 * rng.next_f64() - 0.5).collect();
            let p = RatioProblem::unconstrained(w, s, denom_const, k, min_size);
            let (set, ratio) = dinkelbach(&p).unwrap();
            let (brute_set, brute) =
                crate::oracle::brute_ratio_max(&p).expect("feasible");
            assert!(
                (ratio - brute).abs() <= 1e-12 * brute.abs().max(1.0),
                "trial {trial}: dinkelbach {ratio} vs brute {brute}"
            );
            assert!((p.ratio(set.items()) - p.ratio(&brute_set)).abs() <= 1e-12);
        }
    }

    #[test]
    fn brute_unique_candidate() {
        let features = DMatrix::from_row_slice(2, 1, &[0.7, -0.5]);
        let inst = Instance::new(features, vec![0.1, 0.2], 2, 1.0, None, false).unwrap();
        let m = DMatrix::identity(1, 1);
        let res = lmo_brute(&inst, &DVector::zeros(1), &m, &LmoOptions::default()).unwrap();
        assert_eq!(res.assortment.items(), &[0, 1]);
        assert_eq!(res.certified_gap, 0.0);
    }

    #[test]
    fn brute_matches_direct_trace() {
        for outside in [false, true] {
            let inst = inst(outside);
            let theta = DVector::from_vec(vec![0.4, -0.3]);
            let m = DMatrix::identity(2, 2) * 0.8
                + DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
            let res = lmo_brute(&inst, &theta, &m, &LmoOptions::default()).unwrap();
            let (brute_set, brute_val) =
                crate::oracle::brute_trace_max(&inst, &theta, &m).unwrap();
            assert!((res.value - brute_val).abs() < 1e-10);
            assert_eq!(res.assortment.items(), brute_set.items());
        }
    }

    #[test]
    fn lifted_matches_enumerated_ratio_and_direct_trace() {
        for outside in [false, true] {
            let inst = inst(outside);
            let theta = DVector::from_vec(vec![-0.2, 0.5]);
            // A generic PD lifted matrix.
            let base = DMatrix::from_row_slice(
                3,
                3,
                &[1.0, 0.2, 0.1, 0.2, 0.8, 0.0, 0.1, 0.0, 1.2],
            );
            let res = lmo_lifted(&inst, &theta, &base).unwrap();
            // Direct trace evaluation on the returned set.
            let direct = {
                let li = crate::mnl::lifted_info(&inst, &res.assortment, &theta).unwrap();
                (base.clone().try_inverse().unwrap() * li).trace()
            };
            assert!((res.value - direct).abs() < 1e-10, "value vs direct trace");
            // Exhaustive check over all valid assortments.
            let mut best = f64::NEG_INFINITY;
            let inv = base.try_inverse().unwrap();
            for s in crate::oracle::all_assortments(&inst) {
                let li = crate::mnl::lifted_info(&inst, &s, &theta).unwrap();
                best = best.max((inv.clone() * li).trace());
            }
            assert!((res.value - best).abs() < 1e-10, "lifted oracle is exact");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let inst = inst(false);
        let m = DMatrix::identity(2, 2);
        let opts = LmoOptions { subset_budget: 3, deadline: None };
        assert!(matches!(
            lmo_brute(&inst, &DVector::zeros(2), &m, &opts),
            Err(Error::BudgetExceeded(_))
        ));
    }
}
