//! Independent Monte Carlo oracles shared by integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Draw with CDF `x^alpha` by inversion.
pub fn power_draw<R: Rng>(rng: &mut R, alpha: f64) -> f64 {
    let u: f64 = rng.random();
    u.powf(1.0 / alpha)
}

/// Mean and standard error of each of `N` statistics over `draws` samples,
/// split into independent ChaCha streams.
pub fn mc_means<const N: usize, F>(draws: u64, seed: u64, f: F) -> [(f64, f64); N]
where
    F: Fn(&mut ChaCha8Rng) -> [f64; N] + Sync,
{
    const CHUNK: u64 = 1 << 16;
    let chunks = draws.div_ceil(CHUNK);
    let (sum, sq) = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let n = CHUNK.min(draws - i * CHUNK);
            let mut s = [0.0; N];
            let mut q = [0.0; N];
            for _ in 0..n {
                let x = f(&mut rng);
                for j in 0..N {
                    s[j] += x[j];
                    q[j] += x[j] * x[j];
                }
            }
            (s, q)
        })
        .reduce(
            || ([0.0; N], [0.0; N]),
            |mut a, b| {
                for j in 0..N {
                    a.0[j] += b.0[j];
                    a.1[j] += b.1[j];
                }
                a
            },
        );
    let n = draws as f64;
    std::array::from_fn(|j| {
        let mean = sum[j] / n;
        let var = (sq[j] / n - mean * mean).max(0.0) * n / (n - 1.0);
        (mean, (var / n).sqrt())
    })
}

/// Direct simulation of the five borrow-power case terms. `w` is the best
/// block of the shown nodes, `u` that of the rest; each term is the
/// expectation of its payoff over its case region.
pub fn borrow_terms_mc(a: f64, c: f64, v: f64, t: f64, draws: u64, seed: u64) -> [(f64, f64); 5] {
    mc_means(draws, seed, |rng| {
        let w = power_draw(rng, c);
        let u = power_draw(rng, a);
        let honest = t - (u - w).max(0.0);
        let c1 = if w < v && u < w + t { honest } else { 0.0 };
        let c4 = if w >= v && u < v + t { honest } else { 0.0 };
        let c5h = if u > v + t && w > u - t { honest } else { 0.0 };
        let c5a = if w > v && u > v + t && u < w + t { u - v - t } else { 0.0 };
        let c6a = if w > v && u > w + t { w - v } else { 0.0 };
        [c1, c4, c5h, c5a, c6a]
    })
}

/// `E[exp(theta * W)]` for `W ~ CDF x^alpha`, from the moment series
/// `sum theta^n / n! * alpha / (alpha + n)`.
pub fn power_mgf(alpha: f64, theta: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for n in 0..400 {
        if n > 0 {
            term *= theta / n as f64;
        }
        sum += term * alpha / (alpha + n as f64);
    }
    sum
}

/// Large-deviation rate of `P(sum (W_A - W_H) >= 0)`:
/// `-min_theta log E[exp(theta (W_A - W_H))]`, searched over `[0, 10]`.
pub fn chernoff_rate(alpha_a: f64, alpha_h: f64) -> f64 {
    let g = |th: f64| (power_mgf(alpha_a, th) * power_mgf(alpha_h, -th)).ln();
    let (mut a, mut b) = (0.0, 10.0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-9 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if g(x1) < g(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    -g((a + b) / 2.0)
}
