//! Runtime verification suite: every derived-value oracle in the crate,
//! packaged as named pass/fail checks with timings.
//!
//! Each check pits a fast implementation against an independent reference
//! from [`crate::oracle`] (exhaustive enumeration, dense inverses, finite
//! differences, a naive tableau LP). The command-line `check` subcommand
//! runs the whole manifest and exits nonzero on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::assortment::{best_and_alternative, best_assortment, true_gap, RevenueQuery};
use crate::bsi::{run_bsi, stopping_check, BsiConfig};
use crate::design::{frank_wolfe, init_design, lift_error, line_search, Design, FwConfig};
use crate::estimator::{fit_mle, DesignMatrices};
use crate::lmo::{dinkelbach, lmo_brute, lmo_lifted, LmoOptions, RatioProblem};
use crate::milp::{big_m, build_milp, build_qfip, solve_bnb, BigMMode, BnbOptions};
use crate::mnl::{
    choice_probs, fisher_info, kappa, lifted_info, nll_loss_grad_hess, Assortment, Instance,
    Observation,
};
use crate::mps::{export_mps, parse_mps};
use crate::oracle;
use crate::rng::CounterRng;
use crate::sim::{gen_instance, Environment, GenParams, Stream};
use crate::simplex::lp_simplex;

#[derive(Clone, Copy, Debug, Default)]
pub struct CheckOptions {
    /// Negative-control hook: corrupt the big-M row bounds before building
    /// MILP models, which must make the exactness check fail.
    pub corrupt_big_m: bool,
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type CheckFn = fn(&CheckOptions) -> Result<String, String>;

fn random_instance(rng: &mut CounterRng, n: usize, d: usize, k: usize, outside: bool) -> Instance {
    loop {
        let mut rows = Vec::with_capacity(n * d);
        for _ in 0..n {
            rows.extend(rng.next_in_ball(d, 1.0));
        }
        let features = DMatrix::from_row_slice(n, d, &rows);
        let revenues: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        if let Ok(inst) = Instance::new(features, revenues, k, 1.0, None, outside) {
            return inst;
        }
    }
}

fn random_pd(rng: &mut CounterRng, d: usize) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(d, d, |_, _| rng.next_f64() - 0.5);
    &raw * raw.transpose() + DMatrix::identity(d, d) * 0.3
}

fn random_dataset(
    rng: &mut CounterRng,
    inst: &Instance,
    theta: &DVector<f64>,
    len: usize,
) -> Vec<Observation> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let lo = inst.min_assortment_size();
        let size = lo + rng.next_below(inst.capacity() - lo + 1);
        let s = Assortment::new(rng.next_subset(inst.n_arms(), size)).unwrap();
        let p = choice_probs(inst, &s, theta).unwrap();
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut choice = if inst.outside_option() { None } else { Some(*s.items().last().unwrap()) };
        for (pos, &i) in p.items.iter().enumerate() {
            acc += p.probs[pos];
            if u < acc {
                choice = Some(i);
                break;
            }
        }
        out.push((s, choice));
    }
    out
}

fn check_schur_identity(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(101, 0);
    let mut worst = 0.0_f64;
    for trial in 0..1000 {
        let outside = trial % 2 == 0;
        let n = 4 + rng.next_below(5);
        let d = 2 + rng.next_below(2);
        let inst = random_instance(&mut rng, n, d, 3, outside);
        let d = inst.dim();
        let theta = DVector::from_vec(rng.next_in_ball(d, 1.0));
        let lo = inst.min_assortment_size();
        let size = lo + rng.next_below(inst.capacity() - lo + 1);
        let s = Assortment::new(rng.next_subset(inst.n_arms(), size)).unwrap();
        let lifted = lifted_info(&inst, &s, &theta).map_err(|e| e.to_string())?;
        let fisher = fisher_info(&inst, &s, &theta).map_err(|e| e.to_string())?;
        let top = lifted.view((0, 0), (d, d)).into_owned();
        let col = lifted.view((0, d), (d, 1)).into_owned();
        let schur = top - &col * col.transpose();
        worst = worst.max((schur - fisher).amax());
    }
    if worst <= 1e-10 {
        Ok(format!("1000 draws, worst entrywise gap {worst:.2e}"))
    } else {
        Err(format!("Schur mismatch {worst:.2e} above 1e-10"))
    }
}

fn check_loss_derivatives(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(102, 0);
    let mut worst_g = 0.0_f64;
    let mut worst_h = 0.0_f64;
    for trial in 0..20 {
        let inst = random_instance(&mut rng, 6, 3, 3, trial % 2 == 0);
        let theta_data = DVector::from_vec(rng.next_in_ball(3, 1.0));
        let data = random_dataset(&mut rng, &inst, &theta_data, 25);
        let theta = DVector::from_vec(rng.next_in_ball(3, 2.0));
        let lambda = 0.5 + rng.next_f64();
        let (_, grad, hess) =
            nll_loss_grad_hess(&inst, &data, &theta, lambda).map_err(|e| e.to_string())?;
        let fd_g = oracle::fd_gradient(&inst, &data, &theta, lambda, 1e-6).map_err(|e| e.to_string())?;
        let fd_h = oracle::fd_hessian(&inst, &data, &theta, lambda, 1e-5).map_err(|e| e.to_string())?;
        worst_g = worst_g.max((&grad - &fd_g).norm() / grad.norm().max(1.0));
        worst_h = worst_h.max((&hess - &fd_h).amax() / hess.amax().max(1.0));
    }
    if worst_g <= 1e-5 && worst_h <= 1e-4 {
        Ok(format!("rel. errors grad {worst_g:.2e}, hess {worst_h:.2e}"))
    } else {
        Err(format!("finite differences disagree: grad {worst_g:.2e}, hess {worst_h:.2e}"))
    }
}

fn check_hessian_fisher_identity(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(103, 0);
    let inst = random_instance(&mut rng, 7, 3, 3, true);
    let theta_data = DVector::from_vec(rng.next_in_ball(3, 1.0));
    let data = random_dataset(&mut rng, &inst, &theta_data, 40);
    let theta = DVector::from_vec(rng.next_in_ball(3, 1.0));
    let lambda = 0.8;
    let (_, _, hess) = nll_loss_grad_hess(&inst, &data, &theta, lambda).map_err(|e| e.to_string())?;
    let mut expect = DMatrix::identity(3, 3) * lambda;
    for (s, _) in &data {
        expect += fisher_info(&inst, s, &theta).map_err(|e| e.to_string())?;
    }
    let gap = (hess - expect).amax();
    if gap <= 1e-10 {
        Ok(format!("entrywise gap {gap:.2e}"))
    } else {
        Err(format!("Hessian/Fisher identity broken by {gap:.2e}"))
    }
}

fn check_kappa(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(104, 0);
    for trial in 0..30 {
        let n = 3 + rng.next_below(6); // N <= 8
        let k = 1 + rng.next_below(n.min(4));
        let inst = random_instance(&mut rng, n, 2, k, true);
        let theta = DVector::from_vec(rng.next_in_ball(2, 1.0));
        let fast = kappa(&inst, &theta).map_err(|e| e.to_string())?;
        let brute = oracle::brute_kappa(&inst, &theta).map_err(|e| e.to_string())?;
        if (fast - brute).abs() > 1e-12 {
            return Err(format!("trial {trial}: kappa {fast} vs brute {brute}"));
        }
        // 1/kappa <= 4 K^2 e^{3B} follows from the closed-form lower bound.
        let bound = 4.0 * (k * k) as f64 * (3.0 * inst.param_bound()).exp();
        if 1.0 / fast > bound + 1e-9 {
            return Err(format!("1/kappa {} above 4 K^2 e^(3B) = {bound}", 1.0 / fast));
        }
        // theta = 0: all weights equal, kappa = 1/(K+1)^2.
        let at_zero = kappa(&inst, &DVector::zeros(2)).map_err(|e| e.to_string())?;
        let expect = 1.0 / ((k + 1) * (k + 1)) as f64;
        if (at_zero - expect).abs() > 1e-12 {
            return Err(format!("kappa at zero {at_zero} vs {expect}"));
        }
    }
    Ok("30 instances, exact agreement and order bound".into())
}

fn check_mle_consistency(_: &CheckOptions) -> Result<String, String> {
    let inst = gen_instance(&GenParams::new(8, 3, 3, 1.0, 42)).map_err(|e| e.to_string())?;
    let theta_star = inst.theta_star().unwrap().clone();
    let mut rng = CounterRng::new(4242, 9);
    let data = random_dataset(&mut rng, &inst, &theta_star, 50_000);
    let fit = fit_mle(&inst, &data, 1.0, &DVector::zeros(3)).map_err(|e| e.to_string())?;
    if !fit.converged {
        return Err("consistency fit did not converge".into());
    }
    let err = (&fit.theta_hat - &theta_star).norm();
    if err <= 0.1 {
        Ok(format!("50k-sample estimate within {err:.4} of the truth"))
    } else {
        Err(format!("estimate error {err:.4} above 0.1"))
    }
}

fn check_width_and_updates(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(105, 0);
    let inst = random_instance(&mut rng, 6, 3, 3, true);
    let theta = DVector::from_vec(rng.next_in_ball(3, 1.0));
    let mut mats = DesignMatrices::new(3, 1.0);
    let offers: Vec<Assortment> = (0..12)
        .map(|_| {
            let size = 1 + rng.next_below(3);
            Assortment::new(rng.next_subset(6, size)).unwrap()
        })
        .collect();
    for s in &offers {
        mats.rank_update(&inst, s, &theta).map_err(|e| e.to_string())?;
    }
    // Batch recomputation.
    let mut batch = DesignMatrices::new(3, 1.0);
    batch
        .set_hessian_from(&inst, offers.iter().cloned(), &theta)
        .map_err(|e| e.to_string())?;
    let gap = (mats.h() - batch.h()).amax();
    if gap > 1e-9 {
        return Err(format!("incremental vs batch H gap {gap:.2e}"));
    }
    // Width against the dense inverse.
    let hinv = mats.h().clone().try_inverse().unwrap();
    let mut worst = 0.0_f64;
    for i in 0..6 {
        let a = inst.arm(i);
        let direct = (a.transpose() * &hinv * &a)[(0, 0)].sqrt();
        worst = worst.max((mats.uncertainty_width(&a) - direct).abs());
    }
    if worst > 1e-10 {
        return Err(format!("width vs dense inverse gap {worst:.2e}"));
    }
    // Monotonicity under PSD increments.
    let before: Vec<f64> = (0..6).map(|i| mats.uncertainty_width(&inst.arm(i))).collect();
    let extra = Assortment::new(vec![0, 2, 4]).unwrap();
    mats.rank_update(&inst, &extra, &theta).map_err(|e| e.to_string())?;
    for i in 0..6 {
        if mats.uncertainty_width(&inst.arm(i)) > before[i] + 1e-12 {
            return Err(format!("width of arm {i} grew under a PSD increment"));
        }
    }
    Ok(format!("batch gap {gap:.2e}, width gap {worst:.2e}, widths monotone"))
}

fn check_dinkelbach(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(106, 0);
    for trial in 0..300 {
        let n = 3 + rng.next_below(12); // N <= 14
        let k = 1 + rng.next_below(n);
        let min_size = 1 + rng.next_below(k);
        let denom_const = if rng.next_f64() < 0.5 { 0.0 } else { 1.0 };
        let w: Vec<f64> = (0..n).map(|_| 0.05 + 3.0 * rng.next_f64()).collect();
        let s: Vec<f64> = (0..n).map(|_| 2.0 * rng.next_f64() - 0.5).collect();
        let p = RatioProblem::unconstrained(w, s, denom_const, k, min_size);
        let (_, ratio) = dinkelbach(&p).map_err(|e| e.to_string())?;
        let (_, brute) = oracle::brute_ratio_max(&p).ok_or("infeasible enumeration")?;
        if (ratio - brute).abs() > 1e-12 * brute.abs().max(1.0) {
            return Err(format!("trial {trial}: {ratio} vs enumeration {brute}"));
        }
    }
    Ok("300 random ratio problems match enumeration".into())
}

fn check_lmo_brute_spot(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(107, 0);
    for outside in [false, true] {
        let inst = random_instance(&mut rng, 9, 3, 3, outside);
        let theta = DVector::from_vec(rng.next_in_ball(3, 1.0));
        let m = random_pd(&mut rng, 3);
        let res = lmo_brute(&inst, &theta, &m, &LmoOptions::default()).map_err(|e| e.to_string())?;
        let (set, brute) = oracle::brute_trace_max(&inst, &theta, &m).map_err(|e| e.to_string())?;
        if (res.value - brute).abs() > 1e-10 * (1.0 + brute.abs()) || res.assortment != set {
            return Err(format!("brute oracle mismatch: {} vs {brute}", res.value));
        }
        // 100 random subsets: direct Fisher-trace per subset.
        for _ in 0..100 {
            let lo = inst.min_assortment_size();
            let size = lo + rng.next_below(inst.capacity() - lo + 1);
            let s = Assortment::new(rng.next_subset(9, size)).unwrap();
            let direct = oracle::trace_value(&inst, &s, &theta, &m).map_err(|e| e.to_string())?;
            if direct > res.value + 1e-10 {
                return Err(format!("subset beats the reported maximum by {}", direct - res.value));
            }
        }
    }
    Ok("exhaustive maxima match direct evaluation on both model variants".into())
}

fn check_lifted_lmo(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(108, 0);
    for trial in 0..10 {
        let outside = trial % 2 == 0;
        let n = 6 + rng.next_below(7);
        let inst = random_instance(&mut rng, n, 3, 3, outside);
        let theta = DVector::from_vec(rng.next_in_ball(3, 1.0));
        let m = random_pd(&mut rng, 4);
        let res = lmo_lifted(&inst, &theta, &m).map_err(|e| e.to_string())?;
        let inv = m.clone().try_inverse().unwrap();
        let mut best = f64::NEG_INFINITY;
        for s in oracle::all_assortments(&inst) {
            let li = lifted_info(&inst, &s, &theta).map_err(|e| e.to_string())?;
            best = best.max((&inv * li).trace());
        }
        if (res.value - best).abs() > 1e-10 * (1.0 + best.abs()) {
            return Err(format!("trial {trial}: lifted {} vs enumeration {best}", res.value));
        }
    }
    Ok("10 instances, exact agreement with enumerated lifted objective".into())
}

fn milp_battery(
    opts: &CheckOptions,
    count: usize,
    eps: f64,
) -> Result<(usize, f64), String> {
    let mut rng = CounterRng::new(109, 0);
    let mut mismatches = 0usize;
    let mut worst = 0.0_f64;
    for trial in 0..count {
        let n = 6 + rng.next_below(7);
        let k = 2 + rng.next_below(2);
        let d = 2 + rng.next_below(3);
        let inst = random_instance(&mut rng, n, d, k, trial % 2 == 0);
        let theta = DVector::from_vec(rng.next_in_ball(d, 1.0));
        let m = random_pd(&mut rng, d);
        let q = build_qfip(&inst, &theta, &m).map_err(|e| e.to_string())?;
        let mut bigm = big_m(&q, BigMMode::Tight);
        if opts.corrupt_big_m {
            for v in bigm.m_a.iter_mut() {
                *v *= 0.1;
            }
        }
        let model = build_milp(&q, &bigm);
        // Corrupted bounds may cut the relaxation away or break the solver's
        // internal invariants outright; both count as detected failures. The
        // panic hook is muted so the expected failures do not spam stderr.
        let run = || catch_unwind(AssertUnwindSafe(|| {
            solve_bnb(&model, eps, 500_000, &BnbOptions::default())
        }));
        let solved = if opts.corrupt_big_m {
            let prev = std::panic::take_hook();
            std::panic::set_hook(Box::new(|_| {}));
            let out = run();
            std::panic::set_hook(prev);
            out
        } else {
            run()
        };
        let res = match solved {
            Ok(Ok(res)) => res,
            Ok(Err(e)) if opts.corrupt_big_m => {
                let _ = e;
                mismatches += 1;
                continue;
            }
            Err(_) if opts.corrupt_big_m => {
                mismatches += 1;
                continue;
            }
            Ok(Err(e)) => return Err(e.to_string()),
            Err(_) => return Err("solver panicked on valid input".into()),
        };
        let value = -res.ub;
        let (_, brute) = oracle::brute_trace_max(&inst, &theta, &m).map_err(|e| e.to_string())?;
        let miss = brute - value;
        worst = worst.max(miss);
        if miss > eps + 1e-7 {
            mismatches += 1;
        }
    }
    Ok((mismatches, worst))
}

fn check_milp_exact(opts: &CheckOptions) -> Result<String, String> {
    let (mismatches, worst) = milp_battery(opts, 40, 0.0)?;
    if opts.corrupt_big_m {
        // Negative control: the corrupted bounds must break exactness.
        if mismatches > 0 {
            Ok(format!("corrupted bounds produced {mismatches} mismatches as expected"))
        } else {
            Err("corrupted big-M still matched enumeration".into())
        }
    } else if mismatches == 0 {
        Ok(format!("40 instances exact (worst miss {worst:.2e})"))
    } else {
        Err(format!("{mismatches} instances missed the optimum (worst {worst:.2e})"))
    }
}

fn check_milp_gap(opts: &CheckOptions) -> Result<String, String> {
    let (mismatches, worst) = milp_battery(opts, 25, 0.1)?;
    if mismatches == 0 {
        Ok(format!("25 early-stopped solves within 0.1 of enumeration (worst {worst:.3})"))
    } else {
        Err(format!("{mismatches} solves outside the certified tolerance"))
    }
}

fn check_lp_oracle(_: &CheckOptions) -> Result<String, String> {
    use crate::oracle::{tableau_simplex, TableauLp, TableauOutcome};
    use crate::simplex::{LinearProgram, LpStatus};
    let mut rng = CounterRng::new(110, 0);
    let mut compared = 0;
    for _ in 0..120 {
        let n = 2 + rng.next_below(4);
        let m = 1 + rng.next_below(4);
        let c: Vec<f64> = (0..n).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let a: Vec<Vec<f64>> =
            (0..m).map(|_| (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.next_f64() * 2.0).collect();
        let lp = LinearProgram {
            c: DVector::from_vec(c.clone()),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_le: DMatrix::from_fn(m, n, |i, j| a[i][j]),
            b_le: DVector::from_vec(b.clone()),
            lower: DVector::zeros(n),
            upper: DVector::from_element(n, 10.0),
        };
        let sol = lp_simplex(&lp).map_err(|e| e.to_string())?;
        let mut a_o = a.clone();
        let mut b_o = b.clone();
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            a_o.push(row);
            b_o.push(10.0);
        }
        let oracle_out =
            tableau_simplex(&TableauLp { c, a_le: a_o, b_le: b_o, a_eq: vec![], b_eq: vec![] });
        match (sol.status, oracle_out) {
            (LpStatus::Optimal, TableauOutcome::Optimal { objective, .. }) => {
                if (sol.objective - objective).abs() > 1e-8 * (1.0 + objective.abs()) {
                    return Err(format!("objective {} vs tableau {objective}", sol.objective));
                }
                compared += 1;
            }
            (LpStatus::Infeasible, TableauOutcome::Infeasible) => {}
            (got, _) => return Err(format!("status disagreement: {got:?}")),
        }
    }
    Ok(format!("{compared} optimal LPs agree with the tableau oracle"))
}

fn check_mps_roundtrip(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(111, 0);
    let inst = random_instance(&mut rng, 4, 2, 2, false);
    let theta = DVector::from_vec(rng.next_in_ball(2, 1.0));
    let q = build_qfip(&inst, &theta, &random_pd(&mut rng, 2)).map_err(|e| e.to_string())?;
    let model = build_milp(&q, &big_m(&q, BigMMode::Tight));
    let dir = std::env::temp_dir().join("mnldesign-check");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join("roundtrip.mps");
    export_mps(&model, &path).map_err(|e| e.to_string())?;
    let doc = parse_mps(&path).map_err(|e| e.to_string())?;
    if doc.row_kinds.get("COST") != Some(&'N') {
        return Err("objective row missing".into());
    }
    if doc.integers.len() != model.n_items {
        return Err("integrality markers lost".into());
    }
    // Spot-compare a dense stripe of coefficients.
    for r in 0..model.lp.a_eq.nrows() {
        for j in 0..model.lp.c.len() {
            let want = model.lp.a_eq[(r, j)];
            if want != 0.0 {
                let key = (format!("EQ{:04}", r), mps_var_name(&model, j));
                if doc.entries.get(&key).copied() != Some(want) {
                    return Err(format!("coefficient {key:?} not reproduced"));
                }
            }
        }
    }
    Ok("parse reproduces every written coefficient bit-exactly".into())
}

// Mirrors the writer's naming (kept private there).
fn mps_var_name(model: &crate::milp::MilpModel, j: usize) -> String {
    let n = model.n_items;
    match j {
        j if j < n => format!("X{:04}", j),
        j if j < 2 * n => format!("V{:04}", j - n),
        j if j < 3 * n => format!("SZ{:04}", j - 2 * n),
        j if j < 4 * n => format!("SO{:04}", j - 3 * n),
        j if j < 5 * n => format!("UZ{:04}", j - 4 * n),
        j if j < 6 * n => format!("UO{:04}", j - 5 * n),
        _ => "ALPHA".to_string(),
    }
}

fn check_line_search_grid(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(112, 0);
    let inst = random_instance(&mut rng, 6, 2, 2, false);
    let theta = DVector::from_vec(rng.next_in_ball(2, 1.0));
    let design = init_design(&inst, &theta, 1).map_err(|e| e.to_string())?;
    let s = Assortment::new(vec![1, 3]).unwrap();
    let info = fisher_info(&inst, &s, &theta).map_err(|e| e.to_string())?;
    let gamma = line_search(&design.m, &info);
    let n = 1_000_000;
    let mut best = (0.0_f64, f64::NEG_INFINITY);
    for i in 0..=n {
        let g = i as f64 / n as f64 * (1.0 - 1e-9);
        let blend = &design.m * (1.0 - g) + &info * g;
        if let Some(chol) = nalgebra::Cholesky::new(blend) {
            let v = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            if v > best.1 {
                best = (g, v);
            }
        }
    }
    if (gamma - best.0).abs() <= 2e-6 {
        Ok(format!("golden-section {gamma:.8} vs grid {:.8}", best.0))
    } else {
        Err(format!("step mismatch: {gamma} vs grid {}", best.0))
    }
}

fn check_lift_error_bisection(_: &CheckOptions) -> Result<String, String> {
    let inst = gen_instance(&GenParams::new(7, 3, 3, 1.0, 77)).map_err(|e| e.to_string())?;
    let theta = inst.theta_star().unwrap().clone();
    let design = Design::from_atoms(
        &inst,
        &theta,
        vec![
            Assortment::new(vec![0, 1, 4]).unwrap(),
            Assortment::new(vec![2, 5]).unwrap(),
            Assortment::new(vec![3, 6]).unwrap(),
        ],
        vec![0.5, 0.3, 0.2],
    )
    .map_err(|e| e.to_string())?;
    if design.m.symmetric_eigenvalues().min() < 1e-8 {
        return Err("test design degenerate".into());
    }
    let fast = lift_error(&design).map_err(|e| e.to_string())?;
    let d = design.m.nrows();
    let top = design.m_lifted.view((0, 0), (d, d)).into_owned();
    let col = design.m_lifted.view((0, d), (d, 1)).into_owned();
    let delta = top - &col * col.transpose() - &design.m;
    let psd_ok = |e: f64| {
        nalgebra::Cholesky::new(&design.m * e - &delta + DMatrix::identity(d, d) * 1e-14).is_some()
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
    if (fast - hi).abs() <= 1e-8 * (1.0 + hi) {
        Ok(format!("eigenvalue route {fast:.6e} vs bisection {hi:.6e}"))
    } else {
        Err(format!("mismatch: {fast} vs {hi}"))
    }
}

fn check_fw_certificates(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(113, 0);
    let inst = random_instance(&mut rng, 8, 3, 2, false);
    let theta = DVector::from_vec(rng.next_in_ball(3, 1.0));
    let cfg = FwConfig { epsilon: 0.1, ..FwConfig::default() };
    let report = frank_wolfe(&inst, &theta, &cfg).map_err(|e| e.to_string())?;
    if !report.certified {
        return Err("exact variant failed to certify".into());
    }
    let (_, g) = oracle::brute_trace_max(&inst, &theta, &report.design.m).map_err(|e| e.to_string())?;
    if g <= 1.1 * 3.0 + 1e-9 && g >= 3.0 - 1e-6 {
        Ok(format!("true criterion value {g:.4} within [d, 1.1 d]"))
    } else {
        Err(format!("criterion {g} outside [d, 1.1 d]"))
    }
}

fn check_assortment_enumeration(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(114, 0);
    for trial in 0..1000 {
        let n = 3 + rng.next_below(12); // N <= 14
        let k = 1 + rng.next_below(n.min(5));
        let utilities: Vec<f64> = (0..n).map(|_| 3.0 * rng.next_f64() - 1.5).collect();
        let revenues: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let mut forced_in = Vec::new();
        let mut forced_out = Vec::new();
        match trial % 3 {
            1 => forced_in.push(rng.next_below(n)),
            2 => {
                let j = rng.next_below(n);
                forced_out.push(j);
            }
            _ => {}
        }
        if forced_in.iter().any(|i| forced_out.contains(i)) {
            continue;
        }
        let q = RevenueQuery {
            utilities: utilities.clone(),
            revenues: revenues.clone(),
            k,
            forced_in: forced_in.clone(),
            forced_out: forced_out.clone(),
        };
        let (_, v) = best_assortment(&q).map_err(|e| e.to_string())?;
        let (_, brute) =
            oracle::brute_best_assortment(&utilities, &revenues, k, &forced_in, &forced_out);
        if (v - brute).abs() > 1e-12 * brute.abs().max(1.0) {
            return Err(format!("trial {trial}: value {v} vs enumeration {brute}"));
        }
    }
    Ok("1000 constrained queries match enumeration".into())
}

fn check_alternative_and_gap(_: &CheckOptions) -> Result<String, String> {
    let mut rng = CounterRng::new(115, 0);
    for trial in 0..40 {
        let n = 4 + rng.next_below(6);
        let k = 1 + rng.next_below(3);
        let inst = {
            let mut rows = Vec::new();
            for _ in 0..n {
                rows.extend(rng.next_in_ball(2, 1.0));
            }
            let revenues: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let theta = DVector::from_vec(rng.next_in_ball(2, 1.0));
            Instance::new(DMatrix::from_row_slice(n, 2, &rows), revenues, k, 1.0, Some(theta), true)
                .map_err(|e| e.to_string())?
        };
        let theta = inst.theta_star().unwrap().clone();
        let utilities: Vec<f64> = inst.utilities(&theta).iter().copied().collect();
        let alt = best_and_alternative(&inst, &utilities, &utilities, k).map_err(|e| e.to_string())?;
        let (best, second) = oracle::brute_two_best(&utilities, inst.revenues(), k);
        if (alt.r_best - best.1).abs() > 1e-12 || (alt.r_alt - second.1).abs() > 1e-12 {
            return Err(format!(
                "trial {trial}: ({}, {}) vs enumeration ({}, {})",
                alt.r_best, alt.r_alt, best.1, second.1
            ));
        }
        match true_gap(&inst) {
            Ok((s_star, gap)) => {
                if s_star.items() != best.0 || (gap - (best.1 - second.1)).abs() > 1e-12 {
                    return Err(format!("trial {trial}: gap {gap} vs {}", best.1 - second.1));
                }
            }
            Err(crate::error::Error::NonUniqueMaximizer(_)) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok("40 instances: incumbent, alternative, and gap match enumeration".into())
}

fn check_rng_and_sampling(_: &CheckOptions) -> Result<String, String> {
    // Golden words.
    let got: Vec<u64> = (0..4).map(|n| crate::rng::word(42, 0, n)).collect();
    if got
        != [
            11396772325553039511,
            6399376717692418458,
            10447242438436438508,
            1353175752923778321,
        ]
    {
        return Err("golden generator vectors changed".into());
    }
    // Ball radius law: mean of ||x||^d is B^d / 2.
    let mut rng = CounterRng::new(11, 0);
    let (d, b) = (3usize, 1.0);
    let n = 100_000;
    let mean: f64 = (0..n)
        .map(|_| {
            let x = rng.next_in_ball(d, b);
            x.iter().map(|v| v * v).sum::<f64>().sqrt().powi(d as i32)
        })
        .sum::<f64>()
        / n as f64;
    let sigma = (1.0_f64 / 12.0 / n as f64).sqrt();
    if (mean - 0.5).abs() > 3.0 * sigma {
        return Err(format!("ball radial moment {mean} off 0.5 by >3 sigma"));
    }
    // Choice frequencies.
    let inst = gen_instance(&GenParams::new(5, 3, 2, 1.0, 11)).map_err(|e| e.to_string())?;
    let theta = inst.theta_star().unwrap().clone();
    let s = Assortment::new(vec![0, 2, 4]).unwrap();
    let probs = choice_probs(&inst, &s, &theta).map_err(|e| e.to_string())?;
    let mut env = Environment::new(inst, 123).map_err(|e| e.to_string())?;
    let draws = 1_000_000usize;
    let mut counts = vec![0usize; 4];
    for _ in 0..draws {
        match env.sample_choice(&s, Stream::A).map_err(|e| e.to_string())? {
            Some(item) => counts[s.items().iter().position(|&i| i == item).unwrap()] += 1,
            None => counts[3] += 1,
        }
    }
    let mut expected = probs.probs.clone();
    expected.push(probs.outside.unwrap());
    for (idx, &e) in expected.iter().enumerate() {
        let freq = counts[idx] as f64 / draws as f64;
        let sigma = (e * (1.0 - e) / draws as f64).sqrt();
        if (freq - e).abs() > 4.0 * sigma {
            return Err(format!("slot {idx} frequency {freq} vs {e} beyond 4 sigma"));
        }
    }
    Ok("golden vectors, ball moments, and 1e6-draw frequencies in range".into())
}

fn check_bsi_hooks(_: &CheckOptions) -> Result<String, String> {
    let inst = gen_instance(&GenParams::new(6, 2, 2, 1.0, 9)).map_err(|e| e.to_string())?;
    let theta_star = inst.theta_star().unwrap().clone();
    let (s_star, _) = true_gap(&inst).map_err(|e| e.to_string())?;
    // Collapsed bands at the true parameter must stop immediately at S*.
    let mats = DesignMatrices::new(inst.dim(), 1.0);
    let (alt, _) = stopping_check(&inst, &mats, &theta_star, 0.0, inst.capacity())
        .map_err(|e| e.to_string())?;
    if !(alt.r_best > alt.r_alt) || alt.s_best != s_star {
        return Err("collapsed bands did not certify the true optimum".into());
    }
    // Full run with the hooks engaged.
    let mut env = Environment::new(inst, 5).map_err(|e| e.to_string())?;
    let cfg = BsiConfig {
        beta_override: Some(0.0),
        zeta_override: Some(0.35),
        theta_hat_freeze: Some(theta_star.iter().copied().collect()),
        seed: 5,
        ..BsiConfig::default()
    };
    let trace = run_bsi(&mut env, &cfg).map_err(|e| e.to_string())?;
    if trace.stopped && trace.correct == Some(true) {
        Ok(format!("stopped at sample {} with the true optimum", trace.tau))
    } else {
        Err("hooked run failed to stop at the truth".into())
    }
}

fn check_milp_corruption_control(opts: &CheckOptions) -> Result<String, String> {
    // Run the exactness battery with corrupted bounds; it must fail.
    let corrupted = CheckOptions { corrupt_big_m: true };
    let (mismatches, worst) = milp_battery(&corrupted, 15, 0.0)?;
    let _ = opts;
    if mismatches > 0 {
        Ok(format!(
            "corrupting the row bounds broke {mismatches}/15 solves (worst miss {worst:.3})"
        ))
    } else {
        Err("corrupted big-M bounds went undetected".into())
    }
}

/// The full manifest in execution order.
pub fn manifest() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("schur-complement-identity", check_schur_identity),
        ("loss-finite-differences", check_loss_derivatives),
        ("hessian-fisher-identity", check_hessian_fisher_identity),
        ("kappa-enumeration", check_kappa),
        ("mle-consistency", check_mle_consistency),
        ("design-matrix-updates", check_width_and_updates),
        ("dinkelbach-enumeration", check_dinkelbach),
        ("lmo-brute-direct", check_lmo_brute_spot),
        ("lmo-lifted-enumeration", check_lifted_lmo),
        ("milp-exactness", check_milp_exact),
        ("milp-gap-soundness", check_milp_gap),
        ("milp-corruption-control", check_milp_corruption_control),
        ("lp-tableau-oracle", check_lp_oracle),
        ("mps-roundtrip", check_mps_roundtrip),
        ("line-search-grid", check_line_search_grid),
        ("lift-error-bisection", check_lift_error_bisection),
        ("fw-brute-certificate", check_fw_certificates),
        ("assortment-enumeration", check_assortment_enumeration),
        ("alternative-and-gap", check_alternative_and_gap),
        ("rng-and-sampling", check_rng_and_sampling),
        ("bsi-stopping-hooks", check_bsi_hooks),
    ]
}

/// Runs every check, timing each and converting panics into failures.
pub fn run_all(opts: &CheckOptions) -> Vec<CheckOutcome> {
    manifest()
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let result = catch_unwind(AssertUnwindSafe(|| f(opts)));
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match result {
                Ok(Ok(detail)) => (true, detail),
                Ok(Err(detail)) => (false, detail),
                Err(panic) => {
                    let msg = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "panicked".into());
                    (false, format!("panic: {msg}"))
                }
            };
            CheckOutcome { name, passed, detail, seconds }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_control_is_wired() {
        // The corruption hook must defeat the exactness check.
        let out = check_milp_exact(&CheckOptions { corrupt_big_m: true });
        assert!(out.is_ok(), "corruption expected to be detected: {out:?}");
        let clean = check_milp_exact(&CheckOptions::default());
        assert!(clean.is_ok(), "clean run must pass: {clean:?}");
    }
}
