//! Simulated MNL environment and instance generation.
//!
//! Instances follow the experimental protocol: the true parameter uniform in
//! the radius-B ball, features uniform in the unit ball, revenues Unif(0,1),
//! outside option on, and rejection sampling until the revenue-gap margin
//! holds. Choice feedback runs on two named counter-based streams so the
//! warm-up's doubled offers yield conditionally independent datasets.

use nalgebra::{DMatrix, DVector};

use crate::assortment::true_gap;
use crate::error::{Error, Result};
use crate::mnl::{choice_probs, Assortment, Instance};
use crate::rng::CounterRng;

/// Stream ids; the generator, feedback stream A, and feedback stream B never
/// share counters.
const STREAM_GEN: u64 = 0;
const STREAM_FEEDBACK_A: u64 = 1;
const STREAM_FEEDBACK_B: u64 = 2;
/// Reserved for design initialization (see `design::init_design`).
pub const STREAM_DESIGN: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    A,
    B,
}

#[derive(Clone, Debug)]
pub struct GenParams {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub b: f64,
    pub seed: u64,
    /// Instances whose revenue gap falls below this margin are redrawn.
    pub gap_margin: f64,
    pub outside_option: bool,
}

impl GenParams {
    pub fn new(n: usize, k: usize, d: usize, b: f64, seed: u64) -> Self {
        Self { n, k, d, b, seed, gap_margin: 1e-6, outside_option: true }
    }
}

const REDRAW_CAP: usize = 1000;

/// Draws an instance satisfying every construction invariant, redrawing when
/// the (outside-option) revenue gap is below the margin.
pub fn gen_instance(params: &GenParams) -> Result<Instance> {
    if params.n < params.d {
        return Err(Error::InvalidInstance(format!(
            "need at least d = {} arms, got {}",
            params.d, params.n
        )));
    }
    if params.k > params.n {
        return Err(Error::InvalidInstance("K exceeds N".into()));
    }
    let mut rng = CounterRng::new(params.seed, STREAM_GEN);
    for _ in 0..REDRAW_CAP {
        let theta = DVector::from_vec(rng.next_in_ball(params.d, params.b));
        let mut rows = Vec::with_capacity(params.n * params.d);
        for _ in 0..params.n {
            rows.extend(rng.next_in_ball(params.d, 1.0));
        }
        let features = DMatrix::from_row_slice(params.n, params.d, &rows);
        let revenues: Vec<f64> = (0..params.n).map(|_| rng.next_f64()).collect();
        let Ok(inst) = Instance::new(
            features,
            revenues,
            params.k,
            params.b,
            Some(theta),
            params.outside_option,
        ) else {
            continue;
        };
        if params.outside_option {
            match true_gap(&inst) {
                Ok((_, gap)) if gap >= params.gap_margin => return Ok(inst),
                _ => continue,
            }
        }
        return Ok(inst);
    }
    Err(Error::RejectionCap(REDRAW_CAP))
}

/// A simulated bandit environment around an instance with a known parameter.
#[derive(Clone, Debug)]
pub struct Environment {
    instance: Instance,
    rng_a: CounterRng,
    rng_b: CounterRng,
}

impl Environment {
    pub fn new(instance: Instance, seed: u64) -> Result<Self> {
        if instance.theta_star().is_none() {
            return Err(Error::InvalidInstance(
                "environment needs the true parameter".into(),
            ));
        }
        Ok(Self {
            instance,
            rng_a: CounterRng::new(seed, STREAM_FEEDBACK_A),
            rng_b: CounterRng::new(seed, STREAM_FEEDBACK_B),
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    /// One choice draw on the named stream: inverse CDF over the offered
    /// items in ascending order, then the outside option.
    pub fn sample_choice(&mut self, s: &Assortment, stream: Stream) -> Result<Option<usize>> {
        let probs = {
            let theta = self.instance.theta_star().expect("checked at construction");
            choice_probs(&self.instance, s, theta)?
        };
        let rng = match stream {
            Stream::A => &mut self.rng_a,
            Stream::B => &mut self.rng_b,
        };
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (pos, &item) in probs.items.iter().enumerate() {
            acc += probs.probs[pos];
            if u < acc {
                return Ok(Some(item));
            }
        }
        // Remaining mass is the outside option (or float residue).
        if probs.outside.is_some() {
            Ok(None)
        } else {
            Ok(Some(*probs.items.last().expect("nonempty assortment")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_gives_zero_parameter() {
        let params = GenParams { b: 0.0, ..GenParams::new(6, 2, 1, 0.0, 7) };
        let inst = gen_instance(&params).unwrap();
        assert_eq!(inst.theta_star().unwrap().norm(), 0.0);
    }

    #[test]
    fn generated_instances_satisfy_bounds() {
        for seed in 0..20 {
            let inst = gen_instance(&GenParams::new(8, 3, 3, 1.0, seed)).unwrap();
            for i in 0..inst.n_arms() {
                assert!(inst.arm(i).norm() <= 1.0 + 1e-12);
            }
            assert!(inst.theta_star().unwrap().norm() <= 1.0 + 1e-12);
            assert!(inst.outside_option());
            let (_, gap) = true_gap(&inst).unwrap();
            assert!(gap >= 1e-6);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_instance(&GenParams::new(6, 2, 2, 1.0, 3)).unwrap();
        let b = gen_instance(&GenParams::new(6, 2, 2, 1.0, 3)).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.revenues(), b.revenues());
    }

    #[test]
    fn choice_frequencies_match_probabilities() {
        let inst = gen_instance(&GenParams::new(5, 3, 2, 1.0, 11)).unwrap();
        let theta = inst.theta_star().unwrap().clone();
        let s = Assortment::new(vec![0, 2, 4]).unwrap();
        let probs = choice_probs(&inst, &s, &theta).unwrap();
        let mut env = Environment::new(inst.clone(), 123).unwrap();
        let n = 1_000_000usize;
        let mut counts = vec![0usize; 4]; // 3 items + outside
        for _ in 0..n {
            match env.sample_choice(&s, Stream::A).unwrap() {
                Some(item) => {
                    let pos = s.items().iter().position(|&i| i == item).unwrap();
                    counts[pos] += 1;
                }
                None => counts[3] += 1,
            }
        }
        let mut expected: Vec<f64> = probs.probs.clone();
        expected.push(probs.outside.unwrap());
        for (idx, &e) in expected.iter().enumerate() {
            let freq = counts[idx] as f64 / n as f64;
            let sigma = (e * (1.0 - e) / n as f64).sqrt();
            assert!(
                (freq - e).abs() <= 4.0 * sigma,
                "slot {idx}: freq {freq} expected {e} (sigma {sigma})"
            );
        }
    }

    #[test]
    fn streams_are_uncorrelated() {
        let inst = gen_instance(&GenParams::new(4, 2, 2, 1.0, 21)).unwrap();
        let s = Assortment::new(vec![0, 1]).unwrap();
        let mut env = Environment::new(inst, 99).unwrap();
        let n = 100_000usize;
        let mut xa = Vec::with_capacity(n);
        let mut xb = Vec::with_capacity(n);
        for _ in 0..n {
            xa.push(matches!(env.sample_choice(&s, Stream::A).unwrap(), Some(0)) as i32 as f64);
            xb.push(matches!(env.sample_choice(&s, Stream::B).unwrap(), Some(0)) as i32 as f64);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&xa), mean(&xb));
        let cov: f64 = xa
            .iter()
            .zip(&xb)
            .map(|(a, b)| (a - ma) * (b - mb))
            .sum::<f64>()
            / n as f64;
        let corr = cov / (ma * (1.0 - ma) * mb * (1.0 - mb)).sqrt();
        // Under independence, corr is ~Normal(0, 1/sqrt(n)).
        assert!(corr.abs() <= 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
