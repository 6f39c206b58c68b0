//! Closed-form monomial integrals over centered balls.

use super::Monomial;
use crate::math::{powi, sqrt};

/// Gamma(k/2) for integer k >= 1.
fn half_gamma(k: u32) -> f64 {
    debug_assert!(k >= 1);
    let (mut acc, mut j) = if k.is_multiple_of(2) { (1.0, 2) } else { (sqrt(core::f64::consts::PI), 1) };
    while j < k {
        acc *= j as f64 / 2.0;
        j += 2;
    }
    acc
}

/// Integral of `x^alpha` over the `n`-ball of the given radius centered at
/// the origin.
///
/// Odd exponents integrate to zero. For even `alpha`, with `b_i = (alpha_i+1)/2`,
/// the value is `2 * prod Gamma(b_i) / Gamma(sum b_i) * R^(n+|alpha|) / (n+|alpha|)`.
pub fn ball_moment(alpha: &Monomial, n: usize, radius: f64) -> f64 {
    debug_assert_eq!(alpha.dim(), n);
    debug_assert!(radius > 0.0);
    if !alpha.is_even() {
        return 0.0;
    }
    let total = n as u32 + alpha.degree();
    let mut sphere = 2.0 / half_gamma(total);
    for &a in alpha.exponents() {
        sphere *= half_gamma(a + 1);
    }
    sphere * powi(radius, total) / total as f64
}

pub fn ball_volume(n: usize, radius: f64) -> f64 {
    ball_moment(&Monomial::one(n), n, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use alloc::vec::Vec;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use proptest::test_runner::RngSeed;

    /// Even exponents with total degree at most 8 in at most 8 variables.
    fn even_alpha() -> impl Strategy<Value = Vec<u32>> {
        (1usize..=8).prop_flat_map(|n| proptest::collection::vec(0u32..=2, n)).prop_filter_map("degree", |half| {
            (half.iter().sum::<u32>() <= 4).then(|| half.iter().map(|h| 2 * h).collect())
        })
    }

    /// Uniform cube samples of `x^alpha` on the ball: estimate and standard error.
    fn monte_carlo(alpha: &Monomial, n: usize, radius: f64, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = sample::rng(seed);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..samples {
            let x = sample::in_box(&mut rng, n, radius);
            if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
                let v = alpha.eval(&x);
                sum += v;
                sum_sq += v * v;
            }
        }
        let cube = powi(2.0 * radius, n as u32);
        let mean = sum / samples as f64;
        let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
        (cube * mean, cube * sqrt(var / samples as f64))
    }

    proptest! {
        #[test]
        fn scaling_law(alpha in even_alpha(), radius in 0.1f64..3.0) {
            let n = alpha.len();
            let m = Monomial::new(alpha);
            let want = powi(radius, n as u32 + m.degree()) * ball_moment(&m, n, 1.0);
            let got = ball_moment(&m, n, radius);
            prop_assert!((got - want).abs() <= 1e-12 * want.abs(), "{} vs {}", got, want);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 48, rng_seed: RngSeed::Fixed(7), failure_persistence: None, ..ProptestConfig::default() })]

        #[test]
        fn agrees_with_monte_carlo(alpha in even_alpha(), seed in any::<u64>()) {
            let n = alpha.len();
            let m = Monomial::new(alpha);
            let exact = ball_moment(&m, n, 1.0);
            let (est, se) = monte_carlo(&m, n, 1.0, 200_000, seed);
            prop_assert!((est - exact).abs() <= 3.0 * se + 1e-12 * exact.abs(), "{:?}: exact {} estimate {} se {}", m, exact, est, se);
        }
    }

    #[test]
    fn disk_examples() {
        assert!((ball_moment(&Monomial::new(alloc::vec![0, 0]), 2, 1.0) - PI).abs() < 1e-14);
        assert_eq!(ball_moment(&Monomial::new(alloc::vec![1, 0]), 2, 1.0), 0.0);
        assert!((ball_moment(&Monomial::new(alloc::vec![2, 0]), 2, 1.0) - PI / 4.0).abs() < 1e-14);
    }

    #[test]
    fn known_volumes() {
        assert!((ball_volume(1, 1.0) - 2.0).abs() < 1e-14);
        assert!((ball_volume(3, 2.0) - 4.0 / 3.0 * PI * 8.0).abs() < 1e-12);
        assert!((ball_volume(4, 1.0) - PI * PI / 2.0).abs() < 1e-14);
        assert!((ball_volume(8, 1.0) - PI.powi(4) / 24.0).abs() < 1e-13);
    }

    #[test]
    fn half_gamma_values() {
        assert!((half_gamma(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(half_gamma(2), 1.0);
        assert!((half_gamma(3) - PI.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(half_gamma(8), 6.0);
    }
}
