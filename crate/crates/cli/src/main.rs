//! Command-line harness: instance generation, design computation,
//! identification runs, oracle benchmarking, and the verification suite.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mnldesign::bench::{aggregate, run_grid, BenchConfig};
use mnldesign::bsi::{run_bsi, BsiConfig, BsiTrace, KappaMode, Phase};
use mnldesign::check::{run_all, CheckOptions};
use mnldesign::design::{frank_wolfe, FwConfig};
use mnldesign::lmo::LmoBackend;
use mnldesign::milp::BigMMode;
use mnldesign::mnl::Instance;
use mnldesign::sim::{gen_instance, Environment, GenParams};
use nalgebra::DVector;

#[derive(Parser)]
#[command(name = "mnldesign", version, about = "Optimal design and best-assortment identification for MNL choice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Force single-threaded execution (fully reproducible output).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads for seed sweeps (default: MNLDESIGN_WORKERS or 1).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Brute,
    Milp,
    Lifted,
}

impl From<BackendArg> for LmoBackend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Brute => LmoBackend::Brute,
            BackendArg::Milp => LmoBackend::Milp,
            BackendArg::Lifted => LmoBackend::Lifted,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KappaArg {
    Oracle,
    Bound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Theta0Arg {
    /// The instance's true parameter.
    Star,
    Zero,
}

#[derive(Args, Clone)]
struct InstanceSource {
    /// Load an instance from JSON instead of generating one.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Generator seed (ignored when --instance is given).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    gap_margin: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    outside_option: bool,
}

impl InstanceSource {
    fn load(&self) -> Result<Instance> {
        match &self.instance {
            Some(path) => Instance::load(path).with_context(|| format!("loading {path:?}")),
            None => {
                let params = GenParams {
                    gap_margin: self.gap_margin,
                    outside_option: self.outside_option,
                    ..GenParams::new(self.n, self.k, self.d, self.b, self.seed)
                };
                Ok(gen_instance(&params)?)
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write it as JSON.
    Gen {
        #[command(flatten)]
        source: InstanceSource,
        #[arg(long, default_value = "instance.json")]
        out: PathBuf,
    },
    /// Compute a (near-)G-optimal design at a nominal parameter.
    Design {
        #[command(flatten)]
        source: InstanceSource,
        #[arg(long, value_enum, default_value_t = BackendArg::Brute)]
        backend: BackendArg,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        eps_lmo: f64,
        #[arg(long, value_enum, default_value_t = Theta0Arg::Star)]
        theta0: Theta0Arg,
        /// Load the nominal parameter from a JSON array instead.
        #[arg(long)]
        theta0_file: Option<PathBuf>,
        #[arg(long, default_value = "design.json")]
        out: PathBuf,
    },
    /// Run the identification loop over a list of seeds.
    Bsi {
        #[command(flatten)]
        source: InstanceSource,
        /// Environment/run seeds, e.g. --seeds 0,1,2 (defaults to --seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        eps_lmo: f64,
        #[arg(long, value_enum, default_value_t = BackendArg::Brute)]
        backend: BackendArg,
        #[arg(long, value_enum, default_value_t = KappaArg::Oracle)]
        kappa_mode: KappaArg,
        #[arg(long, default_value_t = 0.1)]
        const_scale: f64,
        #[arg(long, default_value_t = 1)]
        stop_check_every: usize,
        #[arg(long, default_value_t = 2_000_000)]
        round_cap: usize,
        #[arg(long, default_value = "bsi-out")]
        out: PathBuf,
    },
    /// Time single oracle calls over an (N, K) grid.
    BenchLmo {
        #[arg(long, value_delimiter = ',', default_value = "30,50")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "3,4")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0.1)]
        eps_lmo: f64,
        /// Per-call timeout in seconds; cells over budget print `--`.
        #[arg(long, default_value_t = 120)]
        timeout: u64,
        #[arg(long, value_delimiter = ',', value_enum, default_value = "milp,lifted,brute")]
        backends: Vec<BackendArg>,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Run the oracle verification suite; exits nonzero on any failure.
    Check {
        /// Negative-control hook: corrupt the big-M bounds (must fail).
        #[arg(long, hide = true)]
        corrupt_big_m: bool,
    },
}

fn resolve_workers(cli: &Cli) -> usize {
    if cli.deterministic {
        return 1;
    }
    cli.workers
        .or_else(|| std::env::var("MNLDESIGN_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn write_trace_csv(path: &Path, seed: u64, trace: &BsiTrace) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "#schema: bsi-trace-v1")?;
    writeln!(out, "seed,phase,round,assortment,choice,max_width,R_pess,R_opt_alt,stopped")?;
    for rec in &trace.records {
        let phase = match rec.phase {
            Phase::Warmup => "warmup",
            Phase::Main => "main",
        };
        let choice = rec.choice.map(|c| c as i64).unwrap_or(-1);
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        writeln!(
            out,
            "{seed},{phase},{},{},{choice},{},{},{},{}",
            rec.round,
            rec.assortment.label(),
            fmt_opt(rec.max_width),
            fmt_opt(rec.r_pess),
            fmt_opt(rec.r_opt_alt),
            u8::from(rec.stopped),
        )?;
    }
    Ok(())
}

fn cmd_gen(source: &InstanceSource, out: &Path) -> Result<()> {
    let inst = source.load()?;
    inst.save(out)?;
    println!(
        "wrote instance N={} K={} d={} outside_option={} to {}",
        inst.n_arms(),
        inst.capacity(),
        inst.dim(),
        inst.outside_option(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_design(
    cli: &Cli,
    source: &InstanceSource,
    backend: BackendArg,
    epsilon: f64,
    eps_lmo: f64,
    theta0: Theta0Arg,
    theta0_file: &Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let inst = source.load()?;
    let theta = match theta0_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let raw: Vec<f64> = serde_json::from_str(&text)?;
            if raw.len() != inst.dim() {
                bail!("nominal parameter has dimension {}, expected {}", raw.len(), inst.dim());
            }
            DVector::from_vec(raw)
        }
        None => match theta0 {
            Theta0Arg::Star => inst
                .theta_star()
                .cloned()
                .context("instance has no true parameter; use --theta0 zero or --theta0-file")?,
            Theta0Arg::Zero => DVector::zeros(inst.dim()),
        },
    };
    let cfg = FwConfig {
        epsilon,
        eps_lmo,
        backend: backend.into(),
        seed: source.seed,
        bigm: BigMMode::Tight,
        verbose: cli.verbose,
        ..FwConfig::default()
    };
    let start = Instant::now();
    let report = frank_wolfe(&inst, &theta, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    std::fs::write(out, serde_json::to_string_pretty(&report.to_json())?)?;
    println!(
        "{},{},{:.6},{:.6},{:.3}",
        report.backend, report.iterations, report.final_g, report.eps_lift, seconds
    );
    Ok(())
}

struct BsiRunArgs {
    delta: f64,
    epsilon: f64,
    eps_lmo: f64,
    backend: LmoBackend,
    kappa_mode: KappaMode,
    const_scale: f64,
    stop_check_every: usize,
    round_cap: usize,
}

fn cmd_bsi(
    cli: &Cli,
    source: &InstanceSource,
    seeds: &[u64],
    args: &BsiRunArgs,
    out: &Path,
) -> Result<()> {
    let inst = source.load()?;
    std::fs::create_dir_all(out)?;
    let seeds: Vec<u64> = if seeds.is_empty() { vec![source.seed] } else { seeds.to_vec() };
    let workers = resolve_workers(cli);
    let run_one = |seed: u64| -> Result<(u64, BsiTrace)> {
        let mut env = Environment::new(inst.clone(), seed)?;
        let cfg = BsiConfig {
            delta: args.delta,
            epsilon: args.epsilon,
            eps_lmo: args.eps_lmo,
            backend: args.backend,
            kappa_mode: args.kappa_mode,
            const_scale: args.const_scale,
            stop_check_every: args.stop_check_every,
            round_cap: args.round_cap,
            seed,
            ..BsiConfig::default()
        };
        Ok((seed, run_bsi(&mut env, &cfg)?))
    };
    let mut results: Vec<(u64, BsiTrace)> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        pool.install(|| {
            use rayon::prelude::*;
            seeds.par_iter().map(|&s| run_one(s)).collect::<Result<Vec<_>>>()
        })?
    } else {
        seeds.iter().map(|&s| run_one(s)).collect::<Result<Vec<_>>>()?
    };
    results.sort_by_key(|(seed, _)| *seed);

    for (seed, trace) in &results {
        write_trace_csv(&out.join(format!("trace-{seed}.csv")), *seed, trace)?;
        let summary = serde_json::json!({
            "seed": seed,
            "tau": trace.tau,
            "warmup_len": trace.warmup_len,
            "stopped": trace.stopped,
            "s_hat": trace.s_hat.items(),
            "correct": trace.correct,
            "kappa": trace.kappa_used,
            "zeta_w": trace.zeta_used,
            "beta": trace.beta_used,
            "design_support": trace.design_support,
            "fw_final_g": trace.fw_final_g,
            "eps_lift": trace.eps_lift,
        });
        std::fs::write(
            out.join(format!("summary-{seed}.json")),
            serde_json::to_string_pretty(&summary)?,
        )?;
    }
    // Aggregate row matching the reported quantities.
    let taus: Vec<f64> = results.iter().map(|(_, t)| t.tau as f64).collect();
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    let var = taus.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / taus.len() as f64;
    let correct = results
        .iter()
        .filter(|(_, t)| t.stopped && t.correct == Some(true))
        .count() as f64
        / results.len() as f64;
    let agg_path = out.join("aggregate.csv");
    let mut agg = std::io::BufWriter::new(std::fs::File::create(&agg_path)?);
    writeln!(agg, "#schema: bsi-aggregate-v1")?;
    writeln!(agg, "N,K,backend,mean_tau,std_tau,correct_frac")?;
    writeln!(
        agg,
        "{},{},{},{:.3},{:.3},{:.3}",
        inst.n_arms(),
        inst.capacity(),
        args.backend,
        mean,
        var.sqrt(),
        correct
    )?;
    println!(
        "{} runs: mean tau {:.0} (sd {:.0}), correct {:.0}%, outputs in {}",
        results.len(),
        mean,
        var.sqrt(),
        100.0 * correct,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    ns: &[usize],
    ks: &[usize],
    d: usize,
    b: f64,
    seeds: u64,
    eps_lmo: f64,
    timeout: u64,
    backends: &[BackendArg],
    out: &Path,
) -> Result<()> {
    let cfg = BenchConfig {
        ns: ns.to_vec(),
        ks: ks.to_vec(),
        backends: backends.iter().map(|&b| b.into()).collect(),
        seeds,
        d,
        b,
        eps_lmo,
        timeout: Duration::from_secs(timeout),
    };
    let rows = run_grid(&cfg)?;
    std::fs::create_dir_all(out)?;
    let mut raw = std::io::BufWriter::new(std::fs::File::create(out.join("bench-rows.csv"))?);
    writeln!(raw, "#schema: bench-lmo-rows-v1")?;
    writeln!(raw, "N,K,binom,backend,seed,seconds")?;
    for r in &rows {
        let secs = r.seconds.map(|s| format!("{s:.6}")).unwrap_or_else(|| "--".into());
        writeln!(raw, "{},{},{},{},{},{}", r.n, r.k, r.binom, r.backend, r.seed, secs)?;
    }
    let cells = aggregate(&cfg, &rows);
    let mut agg = std::io::BufWriter::new(std::fs::File::create(out.join("bench-cells.csv"))?);
    writeln!(agg, "#schema: bench-lmo-cells-v1")?;
    writeln!(agg, "N,K,binom,backend,mean_seconds,std_seconds,timeouts")?;
    for c in &cells {
        let mean = c.mean_seconds.map(|s| format!("{s:.6}")).unwrap_or_else(|| "--".into());
        let std = c.std_seconds.map(|s| format!("{s:.6}")).unwrap_or_else(|| "--".into());
        writeln!(agg, "{},{},{},{},{},{},{}", c.n, c.k, c.binom, c.backend, mean, std, c.timeouts)?;
        println!(
            "N={:<4} K={} C(N,K)={:<12} {:<7} mean={} sd={} timeouts={}",
            c.n,
            c.k,
            c.binom,
            c.backend.to_string(),
            mean,
            std,
            c.timeouts
        );
    }
    Ok(())
}

fn cmd_check(corrupt_big_m: bool) -> Result<()> {
    let outcomes = run_all(&CheckOptions { corrupt_big_m });
    let mut failures = 0;
    for o in &outcomes {
        println!(
            "{} {:<28} {:>8.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
        if !o.passed {
            failures += 1;
        }
    }
    println!("{} checks, {} failed", outcomes.len(), failures);
    if failures > 0 {
        std::process::exit(1);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gen { source, out } => cmd_gen(source, out),
        Command::Design { source, backend, epsilon, eps_lmo, theta0, theta0_file, out } => {
            cmd_design(&cli, source, *backend, *epsilon, *eps_lmo, *theta0, theta0_file, out)
        }
        Command::Bsi {
            source,
            seeds,
            delta,
            epsilon,
            eps_lmo,
            backend,
            kappa_mode,
            const_scale,
            stop_check_every,
            round_cap,
            out,
        } => cmd_bsi(
            &cli,
            source,
            seeds,
            &BsiRunArgs {
                delta: *delta,
                epsilon: *epsilon,
                eps_lmo: *eps_lmo,
                backend: (*backend).into(),
                kappa_mode: match kappa_mode {
                    KappaArg::Oracle => KappaMode::Oracle,
                    KappaArg::Bound => KappaMode::Bound,
                },
                const_scale: *const_scale,
                stop_check_every: *stop_check_every,
                round_cap: *round_cap,
            },
            out,
        ),
        Command::BenchLmo { n, k, d, b, seeds, eps_lmo, timeout, backends, out } => {
            cmd_bench(n, k, *d, *b, *seeds, *eps_lmo, *timeout, backends, out)
        }
        Command::Check { corrupt_big_m } => cmd_check(*corrupt_big_m),
    }
}
