//! Frank-Wolfe computation of (near-)G-optimal designs over assortments.
//!
//! Three variants share one loop, differing only in the oracle and the
//! stopping threshold:
//!
//! * `brute`  — exact oracle, stop when `g <= (1 + eps) d`;
//! * `milp`   — certified-gap oracle; the certificate `value + gap` is a true
//!   upper bound on `g`, and stopping when it falls below `(1 + eps) d`
//!   yields the same final accuracy as running with the tightened tolerance
//!   `eps - eps_lmo/d`;
//! * `lifted` — exact oracle for the lifted objective, stop at
//!   `(1 + eps)(d + 1)`.
//!
//! Every iteration uses the single oracle call both as the update direction
//! and as the stopping certificate. Step sizes come from a golden-section
//! line search on the (concave) log-determinant restricted to the segment.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lmo::{lmo_brute, lmo_lifted, LmoBackend, LmoOptions, LmoResult};
use crate::milp::{lmo_milp, BigMMode, BnbOptions};
use crate::mnl::{fisher_info, lifted_info, Assortment, Instance};
use crate::rng::CounterRng;
use crate::sim::STREAM_DESIGN;

/// Weights below this are pruned (with renormalization) after every update.
pub const PRUNE_TOL: f64 = 1e-12;
/// Smallest admissible eigenvalue for the initial design matrix.
pub const INIT_EIG_FLOOR: f64 = 1e-8;
/// Step sizes are clamped to [0, 1 - GAMMA_CLAMP] so a singular atom can
/// never destroy positive definiteness.
pub const GAMMA_CLAMP: f64 = 1e-9;

/// A finitely supported distribution over assortments together with its
/// design matrices at the nominal parameter.
#[derive(Clone, Debug)]
pub struct Design {
    pub atoms: Vec<Assortment>,
    pub weights: Vec<f64>,
    infos: Vec<DMatrix<f64>>,
    lifted_infos: Vec<DMatrix<f64>>,
    /// `sum_k w_k I(S_k)`.
    pub m: DMatrix<f64>,
    /// `sum_k w_k Ilift(S_k)`; its top-left Schur complement majorizes `m`.
    pub m_lifted: DMatrix<f64>,
}

impl Design {
    pub fn from_atoms(
        inst: &Instance,
        theta0: &DVector<f64>,
        atoms: Vec<Assortment>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        assert_eq!(atoms.len(), weights.len());
        let infos: Result<Vec<_>> = atoms.iter().map(|s| fisher_info(inst, s, theta0)).collect();
        let lifted: Result<Vec<_>> = atoms.iter().map(|s| lifted_info(inst, s, theta0)).collect();
        let mut design = Design {
            atoms,
            weights,
            infos: infos?,
            lifted_infos: lifted?,
            m: DMatrix::zeros(inst.dim(), inst.dim()),
            m_lifted: DMatrix::zeros(inst.dim() + 1, inst.dim() + 1),
        };
        design.rebuild_matrices();
        Ok(design)
    }

    pub fn support(&self) -> usize {
        self.atoms.len()
    }

    fn rebuild_matrices(&mut self) {
        let d = self.m.nrows();
        let mut m = DMatrix::zeros(d, d);
        let mut ml = DMatrix::zeros(d + 1, d + 1);
        for (k, w) in self.weights.iter().enumerate() {
            m += &self.infos[k] * *w;
            ml += &self.lifted_infos[k] * *w;
        }
        self.m = m;
        self.m_lifted = ml;
    }

    /// Convex-combination update toward the atom with step `gamma`, merging
    /// duplicates, pruning negligible weights, and renormalizing.
    pub fn blend(
        &mut self,
        inst: &Instance,
        theta0: &DVector<f64>,
        atom: Assortment,
        gamma: f64,
    ) -> Result<()> {
        debug_assert!((0.0..1.0).contains(&gamma));
        for w in self.weights.iter_mut() {
            *w *= 1.0 - gamma;
        }
        match self.atoms.iter().position(|s| *s == atom) {
            Some(k) => self.weights[k] += gamma,
            None => {
                self.infos.push(fisher_info(inst, &atom, theta0)?);
                self.lifted_infos.push(lifted_info(inst, &atom, theta0)?);
                self.atoms.push(atom);
                self.weights.push(gamma);
            }
        }
        // Prune and renormalize.
        let mut k = 0;
        while k < self.weights.len() {
            if self.weights[k] < PRUNE_TOL {
                self.weights.swap_remove(k);
                self.atoms.swap_remove(k);
                self.infos.swap_remove(k);
                self.lifted_infos.swap_remove(k);
            } else {
                k += 1;
            }
        }
        let total: f64 = self.weights.iter().sum();
        for w in self.weights.iter_mut() {
            *w /= total;
        }
        debug_assert!((self.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        self.rebuild_matrices();
        Ok(())
    }
}

/// Uniform mixture over randomly drawn valid assortments, grown until the
/// design matrix clears the eigenvalue floor. Deterministic given the seed.
pub fn init_design(inst: &Instance, theta0: &DVector<f64>, seed: u64) -> Result<Design> {
    let d = inst.dim();
    let lo = inst.min_assortment_size();
    let hi = inst.capacity();
    if hi < lo {
        return Err(Error::Infeasible(format!(
            "capacity {hi} below the minimum assortment size {lo}"
        )));
    }
    let cap = 10 * d * (d + 1) / 2;
    let mut rng = CounterRng::new(seed, STREAM_DESIGN);
    let mut atoms: Vec<Assortment> = Vec::new();
    loop {
        let size = lo + rng.next_below(hi - lo + 1);
        let items = rng.next_subset(inst.n_arms(), size);
        let atom = Assortment::new(items)?;
        if !atoms.contains(&atom) {
            atoms.push(atom);
        }
        if atoms.len() >= d.min(cap) {
            let weights = vec![1.0 / atoms.len() as f64; atoms.len()];
            let design = Design::from_atoms(inst, theta0, atoms.clone(), weights)?;
            let min_eig = design.m.symmetric_eigenvalues().min();
            if min_eig >= INIT_EIG_FLOOR {
                return Ok(design);
            }
            if atoms.len() >= cap {
                let rank = design
                    .m
                    .symmetric_eigenvalues()
                    .iter()
                    .filter(|&&e| e > INIT_EIG_FLOOR)
                    .count();
                return Err(Error::DegenerateGeometry(format!(
                    "after {cap} random atoms the design matrix has rank {rank} of {d} \
                     (min eigenvalue {min_eig:.3e})"
                )));
            }
        }
    }
}

/// Log-determinant of a PD matrix; None when the Cholesky fails.
fn logdet(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    Some(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Golden-section maximization of `gamma -> logdet((1-gamma) M + gamma I(S))`
/// on `[0, 1 - 1e-9]` to bracket width 1e-10. Ties resolve to 0.
pub fn line_search(m: &DMatrix<f64>, info: &DMatrix<f64>) -> f64 {
    let eval = |g: f64| -> f64 {
        let blend = m * (1.0 - g) + info * g;
        logdet(&blend).unwrap_or(f64::NEG_INFINITY)
    };
    let (mut a, mut b) = (0.0_f64, 1.0 - GAMMA_CLAMP);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while b - a > 1e-10 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    let g = 0.5 * (a + b);
    // Tie rule: steps that do not beat the endpoint beyond rounding noise
    // collapse to zero.
    let f0 = eval(0.0);
    let fg = eval(g);
    if fg > f0 + 1e-12 * (1.0 + f0.abs()) {
        g
    } else {
        0.0
    }
}

/// Mismatch factor of the lifted surrogate: the smallest `e >= 0` with
/// `Schur(m_lifted) - m ⪯ e m`, computed as the top eigenvalue of the
/// whitened mismatch.
pub fn lift_error(design: &Design) -> Result<f64> {
    let d = design.m.nrows();
    let top = design.m_lifted.view((0, 0), (d, d)).into_owned();
    let col = design.m_lifted.view((0, d), (d, 1)).into_owned();
    let schur = top - &col * col.transpose();
    let delta = schur - &design.m;
    let chol = Cholesky::new(design.m.clone())
        .ok_or_else(|| Error::Numerical("design matrix not positive definite".into()))?;
    // Whiten: L^{-1} Delta L^{-T}.
    let l = chol.l();
    let half = l
        .clone()
        .solve_lower_triangular(&delta)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let whitened_t = l
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let sym = (&whitened_t + whitened_t.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().max().max(0.0))
}

#[derive(Clone, Copy, Debug)]
pub struct FwConfig {
    pub epsilon: f64,
    /// Certified-gap tolerance for the milp backend.
    pub eps_lmo: f64,
    pub backend: LmoBackend,
    pub iter_cap: usize,
    pub seed: u64,
    pub bigm: BigMMode,
    pub node_cap: usize,
    pub subset_budget: u64,
    pub verbose: bool,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            eps_lmo: 0.1,
            backend: LmoBackend::Brute,
            iter_cap: 100_000,
            seed: 0,
            bigm: BigMMode::Tight,
            node_cap: 200_000,
            subset_budget: 100_000_000,
            verbose: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FwIterLog {
    /// Oracle value at the pre-update design.
    pub g_hat: f64,
    pub certified_gap: f64,
    pub gamma: f64,
    pub atom: String,
}

#[derive(Clone, Debug)]
pub struct FwReport {
    pub design: Design,
    pub iterations: usize,
    /// Certified upper bound on the variant's criterion at exit.
    pub final_g: f64,
    pub epsilon_used: f64,
    pub eps_lmo_used: f64,
    pub backend: LmoBackend,
    /// True when the loop exited through its stopping certificate rather
    /// than the iteration cap.
    pub certified: bool,
    pub eps_lift: f64,
    pub log: Vec<FwIterLog>,
}

#[derive(Serialize)]
struct FwReportJson<'a> {
    backend: String,
    epsilon: f64,
    eps_lmo: f64,
    iterations: usize,
    certified: bool,
    final_g: f64,
    eps_lift: f64,
    support: usize,
    atoms: Vec<&'a [usize]>,
    weights: &'a [f64],
    log: &'a [FwIterLog],
}

impl FwReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(FwReportJson {
            backend: self.backend.to_string(),
            epsilon: self.epsilon_used,
            eps_lmo: self.eps_lmo_used,
            iterations: self.iterations,
            certified: self.certified,
            final_g: self.final_g,
            eps_lift: self.eps_lift,
            support: self.design.support(),
            atoms: self.design.atoms.iter().map(|s| s.items()).collect(),
            weights: &self.design.weights,
            log: &self.log,
        })
        .expect("report serialization")
    }
}

/// One oracle call against the design under the configured backend. Returns
/// a candidate atom with a certified upper bound `value + gap` on the
/// criterion the backend optimizes (the plain objective for brute/milp, the
/// lifted objective for lifted).
pub fn g_value(
    design: &Design,
    inst: &Instance,
    theta0: &DVector<f64>,
    cfg: &FwConfig,
) -> Result<LmoResult> {
    match cfg.backend {
        LmoBackend::Brute => {
            let opts = LmoOptions { subset_budget: cfg.subset_budget, deadline: None };
            lmo_brute(inst, theta0, &design.m, &opts)
        }
        LmoBackend::Milp => lmo_milp(
            inst,
            theta0,
            &design.m,
            cfg.eps_lmo,
            cfg.bigm,
            cfg.node_cap,
            &BnbOptions { verbose: false, deadline: None },
        ),
        LmoBackend::Lifted => lmo_lifted(inst, theta0, &design.m_lifted),
    }
}

/// The Frank-Wolfe loop shared by all three variants.
pub fn frank_wolfe(inst: &Instance, theta0: &DVector<f64>, cfg: &FwConfig) -> Result<FwReport> {
    let d = inst.dim() as f64;
    let lifted = cfg.backend == LmoBackend::Lifted;
    let threshold = match cfg.backend {
        LmoBackend::Lifted => (1.0 + cfg.epsilon) * (d + 1.0),
        _ => (1.0 + cfg.epsilon) * d,
    };
    if cfg.backend == LmoBackend::Milp {
        let eps_tilde = cfg.epsilon - cfg.eps_lmo / d;
        if !(eps_tilde > 0.0 && eps_tilde <= 1.0) {
            return Err(Error::Infeasible(format!(
                "tightened precision {eps_tilde} outside (0, 1]; lower eps_lmo or raise epsilon"
            )));
        }
    }
    let mut design = init_design(inst, theta0, cfg.seed)?;
    let mut log: Vec<FwIterLog> = Vec::new();
    let mut prev_obj = f64::NEG_INFINITY;
    // Running floor of lambda_min feeds the theoretical iteration envelope.
    let mut lambda_floor = f64::INFINITY;
    let mut certified = false;
    let mut final_g = f64::INFINITY;
    let mut iterations = 0;
    let mut stalls = 0usize;
    while iterations < cfg.iter_cap {
        let oracle = g_value(&design, inst, theta0, cfg)?;
        let upper = oracle.value + oracle.certified_gap;
        if cfg.verbose {
            eprintln!(
                "fw iter={iterations} backend={} ghat={:.6} gap={:.2e} atoms={}",
                cfg.backend,
                oracle.value,
                oracle.certified_gap,
                design.support()
            );
        }
        if upper <= threshold + 1e-12 {
            certified = true;
            final_g = upper;
            break;
        }
        let (cur, info) = if lifted {
            (
                &design.m_lifted,
                lifted_info(inst, &oracle.assortment, theta0)?,
            )
        } else {
            (&design.m, fisher_info(inst, &oracle.assortment, theta0)?)
        };
        let gamma = line_search(cur, &info);
        // Above the threshold each step improves the log-det by a strictly
        // positive amount; repeated zero steps signal numerical breakdown.
        if gamma == 0.0 {
            stalls += 1;
            if stalls > 3 {
                return Err(Error::Numerical(
                    "line search stalled above the stopping threshold".into(),
                ));
            }
        } else {
            stalls = 0;
        }
        let obj = logdet(if lifted { &design.m_lifted } else { &design.m })
            .ok_or_else(|| Error::Numerical("design matrix lost positive definiteness".into()))?;
        debug_assert!(
            obj >= prev_obj - 1e-9,
            "log-det decreased: {prev_obj} -> {obj}"
        );
        prev_obj = obj;
        log.push(FwIterLog {
            g_hat: oracle.value,
            certified_gap: oracle.certified_gap,
            gamma,
            atom: oracle.assortment.label(),
        });
        design.blend(inst, theta0, oracle.assortment, gamma)?;
        iterations += 1;

        if cfg.backend == LmoBackend::Milp {
            lambda_floor = lambda_floor.min(design.m.symmetric_eigenvalues().min().max(1e-300));
            let eps_tilde = cfg.epsilon - cfg.eps_lmo / d;
            // Feature norms are at most 1, so the atom spectral bound L = 1.
            let envelope = 1.0 + (4.0 * d * (1.0 / lambda_floor).ln().max(0.0) / eps_tilde).ceil();
            debug_assert!(
                (iterations as f64) <= envelope,
                "milp variant exceeded its iteration envelope: {iterations} > {envelope}"
            );
        }
    }
    if !certified {
        // Report the last certificate (or one final oracle call if none).
        final_g = match log.last() {
            Some(entry) => entry.g_hat + entry.certified_gap,
            None => {
                let oracle = g_value(&design, inst, theta0, cfg)?;
                oracle.value + oracle.certified_gap
            }
        };
    }
    let eps_lift = lift_error(&design)?;
    if inst.outside_option() && theta0.norm() <= inst.param_bound() + 1e-12 {
        let envelope = inst.capacity() as f64 * inst.param_bound().exp();
        debug_assert!(
            eps_lift <= envelope + 1e-6,
            "lift mismatch {eps_lift} above the K e^B envelope {envelope}"
        );
    }
    Ok(FwReport {
        design,
        iterations,
        final_g,
        epsilon_used: cfg.epsilon,
        eps_lmo_used: cfg.eps_lmo,
        backend: cfg.backend,
        certified,
        eps_lift,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::sim::{gen_instance, GenParams};

    fn no_outside_instance(n: usize, d: usize, k: usize, seed: u64) -> Instance {
        let mut rng = CounterRng::new(seed, 7);
        loop {
            let mut rows = Vec::new();
            for _ in 0..n {
                rows.extend(rng.next_in_ball(d, 1.0));
            }
            let revenues: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            if let Ok(inst) = Instance::new(
                DMatrix::from_row_slice(n, d, &rows),
                revenues,
                k,
                1.0,
                None,
                false,
            ) {
                return inst;
            }
        }
    }

    #[test]
    fn init_design_reaches_pd() {
        let inst = no_outside_instance(6, 3, 2, 1);
        let design = init_design(&inst, &DVector::zeros(3), 5).unwrap();
        assert!(design.m.symmetric_eigenvalues().min() >= INIT_EIG_FLOOR);
        // Uniform weights at init.
        let w0 = design.weights[0];
        assert!(design.weights.iter().all(|w| (w - w0).abs() < 1e-15));
        assert!((design.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_search_ties_return_zero() {
        // Design whose only atom is the candidate: the blend is constant in
        // gamma, so the tie rule returns 0. A 3-item atom makes the single
        // Fisher matrix full rank.
        let inst = no_outside_instance(5, 2, 3, 2);
        let theta = DVector::zeros(2);
        let s = Assortment::new(vec![0, 1, 2]).unwrap();
        let info = fisher_info(&inst, &s, &theta).unwrap();
        assert!(info.symmetric_eigenvalues().min() > 1e-9, "atom must be full rank");
        let gamma = line_search(&info.clone(), &info);
        assert_eq!(gamma, 0.0);
    }

    #[test]
    fn line_search_matches_grid() {
        let inst = no_outside_instance(6, 2, 2, 3);
        let theta = DVector::from_vec(vec![0.3, -0.2]);
        let design = init_design(&inst, &theta, 9).unwrap();
        let s = Assortment::new(vec![2, 4]).unwrap();
        let info = fisher_info(&inst, &s, &theta).unwrap();
        let gamma = line_search(&design.m, &info);
        // 1e6-point grid oracle.
        let mut best = (0.0, f64::NEG_INFINITY);
        let n = 1_000_000;
        for i in 0..=n {
            let g = i as f64 / n as f64 * (1.0 - GAMMA_CLAMP);
            let blend = &design.m * (1.0 - g) + &info * g;
            if let Some(v) = logdet(&blend) {
                if v > best.1 {
                    best = (g, v);
                }
            }
        }
        assert!(
            (gamma - best.0).abs() <= 2e-6,
            "golden {gamma} vs grid {}",
            best.0
        );
        // Concavity: the interior optimum is at least both endpoints.
        let at = |g: f64| logdet(&(&design.m * (1.0 - g) + &info * g)).unwrap();
        assert!(at(gamma) >= at(0.0) - 1e-12);
        assert!(at(gamma) >= at(1.0 - GAMMA_CLAMP) - 1e-12);
    }

    #[test]
    fn brute_fw_reaches_certified_accuracy() {
        let inst = no_outside_instance(8, 3, 2, 4);
        let theta = DVector::from_vec(vec![0.2, -0.1, 0.3]);
        let cfg = FwConfig { epsilon: 0.1, ..FwConfig::default() };
        let report = frank_wolfe(&inst, &theta, &cfg).unwrap();
        assert!(report.certified);
        assert!(report.final_g <= 1.1 * 3.0 + 1e-9);
        // Brute verification of the returned design.
        let (_, g_true) = oracle::brute_trace_max(&inst, &theta, &report.design.m).unwrap();
        assert!(g_true <= 1.1 * 3.0 + 1e-9);
        assert!(g_true >= 3.0 - 1e-6, "criterion is bounded below by d");
    }

    #[test]
    fn milp_fw_certified_accuracy_verified_by_brute() {
        let inst = no_outside_instance(8, 3, 2, 5);
        let theta = DVector::from_vec(vec![-0.2, 0.4, 0.1]);
        // eps_lmo chosen so the tightened precision is 0.05.
        let cfg = FwConfig {
            epsilon: 0.1,
            eps_lmo: 0.05 * 3.0,
            backend: LmoBackend::Milp,
            ..FwConfig::default()
        };
        let report = frank_wolfe(&inst, &theta, &cfg).unwrap();
        assert!(report.certified);
        let (_, g_true) = oracle::brute_trace_max(&inst, &theta, &report.design.m).unwrap();
        assert!(g_true <= (1.0 + 0.1) * 3.0 + 1e-9, "true g = {g_true}");
    }

    #[test]
    fn milp_fw_rejects_bad_tolerances() {
        let inst = no_outside_instance(6, 2, 2, 6);
        let cfg = FwConfig {
            epsilon: 0.1,
            eps_lmo: 1.0, // eps_tilde = 0.1 - 0.5 < 0
            backend: LmoBackend::Milp,
            ..FwConfig::default()
        };
        assert!(frank_wolfe(&inst, &DVector::zeros(2), &cfg).is_err());
    }

    #[test]
    fn lifted_fw_guarantee_on_outside_instances() {
        let inst = gen_instance(&GenParams::new(8, 2, 3, 1.0, 31)).unwrap();
        let theta = inst.theta_star().unwrap().clone();
        let cfg = FwConfig { epsilon: 0.1, backend: LmoBackend::Lifted, ..FwConfig::default() };
        let report = frank_wolfe(&inst, &theta, &cfg).unwrap();
        assert!(report.certified);
        let d = inst.dim() as f64;
        assert!(report.final_g <= 1.1 * (d + 1.0) + 1e-9);
        // Mismatch envelope.
        let envelope = inst.capacity() as f64 * inst.param_bound().exp();
        assert!(report.eps_lift <= envelope + 1e-9);
        // True-objective guarantee at the returned design.
        let (_, g_true) = oracle::brute_trace_max(&inst, &theta, &report.design.m).unwrap();
        assert!(
            g_true <= 2.0 * (1.0 + report.eps_lift) * 1.1 * d + 1e-9,
            "g {g_true} vs bound with eps_lift {}",
            report.eps_lift
        );
    }

    #[test]
    fn single_atom_design_has_no_lift_mismatch() {
        let inst = gen_instance(&GenParams::new(6, 2, 2, 1.0, 33)).unwrap();
        let theta = inst.theta_star().unwrap().clone();
        let atom = Assortment::new(vec![0, 3]).unwrap();
        let design = Design::from_atoms(&inst, &theta, vec![atom], vec![1.0]).unwrap();
        if design.m.symmetric_eigenvalues().min() > 1e-10 {
            let e = lift_error(&design).unwrap();
            assert!(e.abs() < 1e-9, "point-mass mixture has zero variance, got {e}");
        }
    }

    #[test]
    fn lift_error_matches_bisection_oracle() {
        let inst = gen_instance(&GenParams::new(7, 3, 3, 1.0, 35)).unwrap();
        let theta = inst.theta_star().unwrap().clone();
        let a1 = Assortment::new(vec![0, 1, 4]).unwrap();
        let a2 = Assortment::new(vec![2, 5]).unwrap();
        let a3 = Assortment::new(vec![3, 6]).unwrap();
        let design =
            Design::from_atoms(&inst, &theta, vec![a1, a2, a3], vec![0.5, 0.3, 0.2]).unwrap();
        if design.m.symmetric_eigenvalues().min() < 1e-8 {
            return; // degenerate draw; other seeds cover the check
        }
        let fast = lift_error(&design).unwrap();
        // Bisection on e over the PSD test Delta ⪯ e M via Cholesky.
        let d = design.m.nrows();
        let top = design.m_lifted.view((0, 0), (d, d)).into_owned();
        let col = design.m_lifted.view((0, d), (d, 1)).into_owned();
        let delta = top - &col * col.transpose() - &design.m;
        let psd_ok = |e: f64| {
            let trial = &design.m * e - &delta;
            Cholesky::new(trial + DMatrix::identity(d, d) * 1e-14).is_some()
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while !psd_ok(hi) {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if psd_ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((fast - hi).abs() <= 1e-8 * (1.0 + hi), "eigen {fast} vs bisection {hi}");
    }

    #[test]
    fn kw_certificate_brute_small() {
        // Tight-precision runs land in [d, (1 + eps) d] and the log-det sits
        // within eps * d nats of a long-run reference.
        let inst = no_outside_instance(7, 2, 2, 8);
        let theta = DVector::from_vec(vec![0.1, 0.2]);
        let eps = 0.05;
        let cfg = FwConfig { epsilon: eps, ..FwConfig::default() };
        let report = frank_wolfe(&inst, &theta, &cfg).unwrap();
        let (_, g) = oracle::brute_trace_max(&inst, &theta, &report.design.m).unwrap();
        let d = 2.0;
        assert!(g >= d - 1e-6 && g <= (1.0 + eps) * d + 1e-9, "g = {g}");
        let long = frank_wolfe(&inst, &theta, &FwConfig { epsilon: 0.005, ..cfg }).unwrap();
        let f_short = logdet(&report.design.m).unwrap();
        let f_long = logdet(&long.design.m).unwrap();
        assert!(f_long - f_short <= eps * d + 1e-9, "D-objective off by {}", f_long - f_short);
    }
}
