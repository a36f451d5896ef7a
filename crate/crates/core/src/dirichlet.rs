//! Dirichlet density, maximum likelihood from observed simplex points, and
//! the special functions they need.

use statrs::function::gamma::{digamma, ln_gamma};

/// Trigamma via the recurrence `psi1(x) = psi1(x + 1) + 1 / x^2` and the
/// asymptotic series for large arguments.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv + inv2 / 2.0 + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

/// Inverse of the digamma function by Newton iteration.
pub fn inverse_digamma(y: f64) -> f64 {
    let mut x = if y >= -2.22 { y.exp() + 0.5 } else { -1.0 / (y - digamma(1.0)) };
    for _ in 0..8 {
        x -= (digamma(x) - y) / trigamma(x);
        if x <= 0.0 {
            x = 1e-12;
        }
    }
    x
}

/// Log-density of the truncated draw `x` (first `K` coordinates) under
/// `Dir(alpha)`, `alpha` of length `K + 1`.
pub fn log_density(x: &[f64], alpha: &[f64]) -> f64 {
    let k = x.len();
    debug_assert_eq!(alpha.len(), k + 1);
    let rest = 1.0 - x.iter().sum::<f64>();
    let total: f64 = alpha.iter().sum();
    let mut out = ln_gamma(total) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    for (xi, ai) in x.iter().zip(alpha) {
        out += (ai - 1.0) * xi.ln();
    }
    out + (alpha[k] - 1.0) * rest.ln()
}

/// Gradient of [`log_density`] with respect to the first `K` coordinates.
pub fn log_density_grad(x: &[f64], alpha: &[f64], out: &mut [f64]) {
    let k = x.len();
    let rest = 1.0 - x.iter().sum::<f64>();
    let tail = (alpha[k] - 1.0) / rest;
    for i in 0..k {
        out[i] = (alpha[i] - 1.0) / x[i] - tail;
    }
}

pub const MLE_MAX_ITERS: usize = 200;
pub const MLE_TOLERANCE: f64 = 1e-8;
const ALPHA_BOUNDS: (f64, f64) = (1e-3, 1e6);

/// Dirichlet MLE from truncated points (each of length `K`, the remainder
/// implied) by the fixed-point iteration
/// `alpha_k <- psi^{-1}(psi(sum alpha) + mean log p_k)`.
///
/// Returns `None` for fewer than two points. Components are kept inside
/// `[1e-3, 1e6]`; a cloud of identical points would otherwise diverge.
pub fn fit_mle(points: &[&[f64]]) -> Option<Vec<f64>> {
    if points.len() < 2 {
        return None;
    }
    let k = points[0].len();
    let count = points.len() as f64;
    let mut mean_log = vec![0.0; k + 1];
    let mut mean = vec![0.0; k + 1];
    let mut second = 0.0;
    for p in points {
        let rest = (1.0 - p.iter().sum::<f64>()).max(f64::MIN_POSITIVE);
        for (i, &v) in p.iter().chain(std::iter::once(&rest)).enumerate() {
            let v = v.max(f64::MIN_POSITIVE);
            mean_log[i] += v.ln() / count;
            mean[i] += v / count;
        }
        second += p[0] * p[0] / count;
    }
    // Moment-matched start from the first coordinate.
    let var = (second - mean[0] * mean[0]).max(1e-12);
    let total = ((mean[0] * (1.0 - mean[0]) / var) - 1.0).clamp(0.1, 1e4);
    let mut alpha: Vec<f64> = mean.iter().map(|m| (m * total).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1)).collect();
    for _ in 0..MLE_MAX_ITERS {
        let psi_total = digamma(alpha.iter().sum());
        let mut change: f64 = 0.0;
        for (a, &s) in alpha.iter_mut().zip(&mean_log) {
            let next = inverse_digamma(psi_total + s).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1);
            change = change.max((next - *a).abs() / *a);
            *a = next;
        }
        if change < MLE_TOLERANCE {
            break;
        }
    }
    Some(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_latent, DirichletParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trigamma_known_values() {
        assert!((trigamma(1.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-10);
        assert!((trigamma(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-10);
        assert!((trigamma(10.0) - 0.105_166_335_681_685_4).abs() < 1e-12);
    }

    #[test]
    fn inverse_digamma_round_trips() {
        for x in [1e-3, 0.1, 0.7, 1.0, 3.3, 50.0, 1e4] {
            assert!((inverse_digamma(digamma(x)) - x).abs() / x < 1e-9, "{x}");
        }
    }

    #[test]
    fn density_integrates_like_beta() {
        // K = 1: Dir(a, b) on x is Beta(a, b); check the normalizer at a point.
        let v = log_density(&[0.3], &[2.0, 3.0]);
        let beta = (12.0f64 * 0.3 * 0.7 * 0.7).ln();
        assert!((v - beta).abs() < 1e-12);
    }

    #[test]
    fn mle_recovers_parameters() {
        let truth = DirichletParams::new(vec![2.0, 5.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<Vec<f64>> = (0..20_000).map(|_| sample_latent(&truth, &mut rng).coords().to_vec()).collect();
        let refs: Vec<&[f64]> = draws.iter().map(|d| d.as_slice()).collect();
        let fit = fit_mle(&refs).unwrap();
        for (f, t) in fit.iter().zip(truth.alpha()) {
            assert!((f - t).abs() / t < 0.05, "{fit:?}");
        }
    }

    #[test]
    fn mle_needs_two_points() {
        assert!(fit_mle(&[&[0.2, 0.3][..]]).is_none());
    }
}
