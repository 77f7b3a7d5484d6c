//! Counter-based pseudo-random generator with a fully specified algorithm.
//!
//! Simulation traces must be bit-reproducible across runs, platforms, and
//! reimplementations, so instead of an external RNG crate the generator is a
//! pure function of `(seed, stream, counter)`:
//!
//! ```text
//! base        = finalize(seed * PHI + stream)
//! word(n)     = finalize(base + (n + 1) * PHI)
//! ```
//!
//! where `finalize` is the SplitMix64 output permutation
//!
//! ```text
//! z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//! z ^= z >> 27;  z *= 0x94D049BB133111EB;
//! z ^= z >> 31;
//! ```
//!
//! with all arithmetic modulo 2^64 and `PHI = 0x9E3779B97F4A7C15`. Uniform
//! doubles take the top 53 bits; Gaussians apply an inverse normal CDF
//! (Acklam's rational approximation plus one Halley refinement) to a uniform,
//! so every derived quantity is reproducible from integer arithmetic and
//! fixed float expressions. Golden vectors are pinned in the tests below.

const PHI: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The n-th raw word of stream `stream` under `seed`, independent of any
/// generator state.
#[inline]
pub fn word(seed: u64, stream: u64, counter: u64) -> u64 {
    let base = finalize(seed.wrapping_mul(PHI).wrapping_add(stream));
    finalize(base.wrapping_add(counter.wrapping_add(1).wrapping_mul(PHI)))
}

/// Stateful view over one stream; `counter` advances by one per draw.
#[derive(Clone, Debug)]
pub struct CounterRng {
    pub seed: u64,
    pub stream: u64,
    pub counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let w = word(self.seed, self.stream, self.counter);
        self.counter += 1;
        w
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1): rejects exact zeros so inverse-CDF transforms stay
    /// finite.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        loop {
            let u = self.next_f64();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Standard normal via the inverse CDF.
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_open01())
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // 53-bit uniform scaled; bias is negligible for the desk-scale n here
        // and keeps the draw a single fixed float expression.
        let u = self.next_f64();
        ((u * n as f64) as usize).min(n - 1)
    }

    /// Uniform point in the d-dimensional ball of the given radius:
    /// Gaussian direction normalized, radius scaled by U^(1/d).
    pub fn next_in_ball(&mut self, d: usize, radius: f64) -> Vec<f64> {
        if radius == 0.0 {
            return vec![0.0; d];
        }
        let mut x: Vec<f64> = (0..d).map(|_| self.next_normal()).collect();
        let mut norm2: f64 = x.iter().map(|v| v * v).sum();
        while norm2 == 0.0 {
            x = (0..d).map(|_| self.next_normal()).collect();
            norm2 = x.iter().map(|v| v * v).sum();
        }
        let r = radius * self.next_open01().powf(1.0 / d as f64);
        let scale = r / norm2.sqrt();
        x.iter_mut().for_each(|v| *v *= scale);
        x
    }

    /// A uniformly random size-m subset of {0, .., n-1}, sorted ascending.
    /// Partial Fisher-Yates over an index array.
    pub fn next_subset(&mut self, n: usize, m: usize) -> Vec<usize> {
        debug_assert!(m <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.next_below(n - i);
            idx.swap(i, j);
        }
        let mut out = idx[..m].to_vec();
        out.sort_unstable();
        out
    }
}

/// Inverse standard normal CDF.
///
/// Acklam's rational approximation (relative error ~1.15e-9) followed by one
/// Halley refinement step against `erfc`-free evaluation of the normal CDF,
/// giving close to full double precision for u in (0, 1).
pub fn inverse_normal_cdf(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0, "inverse_normal_cdf domain");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const U_LOW: f64 = 0.02425;

    let x = if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // One Halley step: e = Phi(x) - u, x <- x - 2e/(2*phi(x) + e*x).
    let e = normal_cdf(x) - u;
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    x - 2.0 * e / (2.0 * pdf + e * x)
}

/// Standard normal CDF via a series/continued-fraction split of erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc_scalar(-x / std::f64::consts::SQRT_2)
}

fn erfc_scalar(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_scalar(-x);
    }
    if x <= 2.0 {
        // erf via its Taylor series; cancellation is mild for x <= 2.
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for k in 1..120 {
            term *= -x2 / k as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Lentz's method on the continued fraction
        //   erfc(x) * sqrt(pi) * exp(x^2) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        // with a_1 = 1, a_k = (k-1)/2 for k >= 2, b_k = x.
        let tiny = 1e-300;
        let mut f = tiny;
        let mut c = f;
        let mut d = 0.0_f64;
        for k in 1..300 {
            let a = if k == 1 { 1.0 } else { (k - 1) as f64 / 2.0 };
            d = x + a * d;
            if d == 0.0 {
                d = tiny;
            }
            c = x + a / c;
            if c == 0.0 {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (-x * x).exp() / std::f64::consts::PI.sqrt() * f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_words() {
        // Frozen outputs of the specified algorithm (cross-checked against an
        // independent Python implementation); any change to the generator
        // breaks trace reproducibility and must fail here.
        let got: Vec<u64> = (0..4).map(|n| word(42, 0, n)).collect();
        let expected = [
            11396772325553039511u64,
            6399376717692418458,
            10447242438436438508,
            1353175752923778321,
        ];
        assert_eq!(got, expected);
        let got1: Vec<u64> = (0..2).map(|n| word(42, 1, n)).collect();
        assert_eq!(got1, [14683772372732499137u64, 5415354778601377440]);
        assert_ne!(word(1, 0, 0), word(2, 0, 0));
    }

    #[test]
    fn golden_uniforms() {
        let mut rng = CounterRng::new(7, 0);
        let u: Vec<f64> = (0..3).map(|_| rng.next_f64()).collect();
        assert_eq!(
            u,
            [0.41629159502903634, 0.4499260755746426, 0.7187972119269876]
        );
        // Same draws, recomputed statelessly.
        let direct: Vec<f64> = (0..3)
            .map(|n| (word(7, 0, n) >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
            .collect();
        assert_eq!(u, direct);
    }

    #[test]
    fn inverse_cdf_accuracy() {
        // Round trip Phi(Phi^-1(u)) = u at interior and tail points.
        for &u in &[1e-12, 1e-6, 0.02, 0.3, 0.5, 0.7, 0.975, 1.0 - 1e-9] {
            let x = inverse_normal_cdf(u);
            let back = normal_cdf(x);
            assert!(
                (back - u).abs() <= 1e-12 * u.max(1e-3),
                "u={u} x={x} back={back}"
            );
        }
        assert!(inverse_normal_cdf(0.5).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn ball_sampling_radius_law() {
        // r = B * U^(1/d) makes ||x||^d uniform on [0, B^d]: mean B^d/2.
        let d = 3;
        let b = 2.0;
        let mut rng = CounterRng::new(11, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let x = rng.next_in_ball(d, b);
                let r2: f64 = x.iter().map(|v| v * v).sum();
                r2.sqrt().powi(d as i32)
            })
            .sum::<f64>()
            / n as f64;
        let target = b.powi(d as i32) / 2.0;
        // Var of Unif(0, B^d) is B^(2d)/12.
        let sigma = (b.powi(2 * d as i32) / 12.0 / n as f64).sqrt();
        assert!(
            (mean - target).abs() < 3.0 * sigma,
            "mean={mean} target={target} sigma={sigma}"
        );
    }

    #[test]
    fn subsets_are_sorted_and_distinct() {
        let mut rng = CounterRng::new(3, 5);
        for _ in 0..200 {
            let s = rng.next_subset(10, 4);
            assert_eq!(s.len(), 4);
            for w in s.windows(2) {
                assert!(w[0] < w[1]);
            }
            assert!(s.iter().all(|&i| i < 10));
        }
    }
}
