//! LMO runtime benchmarking over an (N, K) grid.
//!
//! Each cell generates fresh instances, initializes a design at the known
//! parameter, and times a single oracle call per backend and seed. Cells
//! whose call exceeds the timeout are recorded as such (the CSV writes `--`
//! for their time), and the exact binomial count column tags the
//! combinatorial size of the enumeration space.

use std::time::{Duration, Instant};

use crate::design::init_design;
use crate::error::Result;
use crate::lmo::{binomial, lmo_brute, lmo_lifted, LmoBackend, LmoOptions};
use crate::milp::{lmo_milp, BigMMode, BnbOptions};
use crate::sim::{gen_instance, GenParams};

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub backends: Vec<LmoBackend>,
    pub seeds: u64,
    pub d: usize,
    pub b: f64,
    pub eps_lmo: f64,
    pub timeout: Duration,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ns: vec![30, 50],
            ks: vec![3, 4],
            backends: vec![LmoBackend::Milp, LmoBackend::Lifted, LmoBackend::Brute],
            seeds: 10,
            d: 5,
            b: 1.0,
            eps_lmo: 0.1,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub binom: u128,
    pub backend: LmoBackend,
    pub seed: u64,
    /// None when the call hit the timeout.
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchCell {
    pub n: usize,
    pub k: usize,
    pub binom: u128,
    pub backend: LmoBackend,
    pub mean_seconds: Option<f64>,
    pub std_seconds: Option<f64>,
    pub timeouts: usize,
}

/// Times one oracle call per (cell, backend, seed).
pub fn run_grid(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        for &k in &cfg.ks {
            let binom = binomial(n, k);
            for seed in 0..cfg.seeds {
                let inst = gen_instance(&GenParams::new(n, k, cfg.d, cfg.b, seed))?;
                let theta0 = inst.theta_star().expect("generated instances carry a parameter").clone();
                let design = init_design(&inst, &theta0, seed)?;
                for &backend in &cfg.backends {
                    let start = Instant::now();
                    let deadline = start + cfg.timeout;
                    let outcome = match backend {
                        LmoBackend::Brute => {
                            let opts = LmoOptions {
                                subset_budget: u64::MAX,
                                deadline: Some(deadline),
                            };
                            lmo_brute(&inst, &theta0, &design.m, &opts)
                        }
                        LmoBackend::Milp => lmo_milp(
                            &inst,
                            &theta0,
                            &design.m,
                            cfg.eps_lmo,
                            BigMMode::Tight,
                            usize::MAX,
                            &BnbOptions { verbose: false, deadline: Some(deadline) },
                        ),
                        LmoBackend::Lifted => lmo_lifted(&inst, &theta0, &design.m_lifted),
                    };
                    let elapsed = start.elapsed();
                    let seconds = match outcome {
                        Ok(_) if elapsed < cfg.timeout => Some(elapsed.as_secs_f64()),
                        _ => None,
                    };
                    rows.push(BenchRow { n, k, binom, backend, seed, seconds });
                }
            }
        }
    }
    Ok(rows)
}

/// Deterministic aggregation by (n, k, backend) in grid order.
pub fn aggregate(cfg: &BenchConfig, rows: &[BenchRow]) -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for &n in &cfg.ns {
        for &k in &cfg.ks {
            for &backend in &cfg.backends {
                let times: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.n == n && r.k == k && r.backend == backend)
                    .filter_map(|r| r.seconds)
                    .collect();
                let total = rows
                    .iter()
                    .filter(|r| r.n == n && r.k == k && r.backend == backend)
                    .count();
                let timeouts = total - times.len();
                let (mean, std) = if times.is_empty() {
                    (None, None)
                } else {
                    let mean = times.iter().sum::<f64>() / times.len() as f64;
                    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
                        / times.len() as f64;
                    (Some(mean), Some(var.sqrt()))
                };
                cells.push(BenchCell {
                    n,
                    k,
                    binom: binomial(n, k),
                    backend,
                    mean_seconds: mean,
                    std_seconds: std,
                    timeouts,
                });
            }
        }
    }
    cells
}
