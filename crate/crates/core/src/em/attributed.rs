//! Maximization step for attributed logs.
//!
//! The likelihood depends on each Dirichlet law only through its latent mean
//! `mu`. Holding the other law fixed, the objective in one mean is
//!
//! ```text
//! sum_k c_k log mu_k  -  a sum_k mu_k^2  -  sum_k b_k mu_k
//! ```
//!
//! with `c_k` the event counts touching that law (class-2 or class-0 counts
//! twice, class-1 once), `a` the same-law exposure and `b_k = gamma_1 *
//! other_mean_k`. It is concave, and on the truncated simplex its maximizer
//! is the positive root of `2a mu^2 + (b_k + nu) mu - c_k = 0`, with the
//! multiplier `nu >= 0` found by bisection when the sum constraint binds.

use serde::Serialize;

use crate::error::Result;
use crate::likelihood::{loglik_attributed_means, SufficientStats};
use crate::model::DirichletParams;

/// Interior floor for mean components and for the implicit remainder.
pub const MEAN_FLOOR: f64 = 1e-9;
const BLOCK_ROUNDS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRoute {
    /// The closed-form update passed its gradient and monotonicity checks.
    ClosedForm,
    /// Exact block-coordinate ascent replaced the closed form.
    BlockAscent,
    /// Neither candidate improved on the previous parameters.
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MStepOutcome {
    pub alpha0: DirichletParams,
    pub alpha1: DirichletParams,
    pub route: UpdateRoute,
    /// No opportunity touches the anomalous law; `alpha1` was carried over.
    pub alpha1_skipped: bool,
}

/// Maximizes `sum c log mu - a |mu|^2 - b . mu` over `mu_k >= MEAN_FLOOR`,
/// `sum mu <= 1 - MEAN_FLOOR`.
pub(crate) fn maximize_block(c: &[f64], a: f64, b: &[f64]) -> Vec<f64> {
    let cap = 1.0 - MEAN_FLOOR;
    let at = |nu: f64| -> Vec<f64> {
        c.iter()
            .zip(b)
            .map(|(&ck, &bk)| {
                if ck <= 0.0 {
                    return MEAN_FLOOR;
                }
                let lin = bk + nu;
                let disc = (lin * lin + 8.0 * a * ck).sqrt();
                let denom = lin + disc;
                let mu = if denom > 0.0 { 2.0 * ck / denom } else { f64::INFINITY };
                mu.max(MEAN_FLOOR)
            })
            .collect()
    };
    let free = at(0.0);
    if free.iter().sum::<f64>() <= cap {
        return free;
    }
    let mut hi = 1.0;
    while at(hi).iter().sum::<f64>() > cap {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).iter().sum::<f64>() > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    at(hi)
}

fn block_counts(stats: &SufficientStats, own: usize) -> Vec<f64> {
    stats.counts[own].iter().zip(&stats.counts[1]).map(|(&o, &x)| 2.0 * o as f64 + x as f64).collect()
}

fn scaled(mean: &[f64], gamma1: f64) -> Vec<f64> {
    mean.iter().map(|m| gamma1 * m).collect()
}

/// Alternating exact maximization over the two means, starting from the
/// given ones. `update1 = false` holds `mean1` fixed.
pub(crate) fn block_ascent(
    stats: &SufficientStats,
    mean0: &[f64],
    mean1: &[f64],
    update1: bool,
) -> (Vec<f64>, Vec<f64>) {
    let [g0, g1, g2] = stats.exposure;
    let c0 = block_counts(stats, 0);
    let c1 = block_counts(stats, 2);
    let mut m0 = mean0.to_vec();
    let mut m1 = mean1.to_vec();
    for _ in 0..BLOCK_ROUNDS {
        let next0 = maximize_block(&c0, g0, &scaled(&m1, g1));
        let next1 = if update1 { maximize_block(&c1, g2, &scaled(&next0, g1)) } else { m1.clone() };
        let change = next0.iter().zip(&m0).chain(next1.iter().zip(&m1)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        m0 = next0;
        m1 = next1;
        if change < 1e-13 {
            break;
        }
    }
    (m0, m1)
}

/// The closed-form update: a quadratic root per attribute
/// component and a separate rule for the remainder component. Returns
/// `None` when any component comes out non-positive or non-finite.
pub(crate) fn closed_form_update(
    stats: &SufficientStats,
    alpha0: &DirichletParams,
    alpha1: &DirichletParams,
) -> Option<(DirichletParams, DirichletParams)> {
    let [g0, g1, g2] = stats.exposure;
    let totals = stats.totals();
    let mean0 = alpha0.latent_mean();
    let mean1 = alpha1.latent_mean();
    let roots = |own: usize, gamma: f64, other: &[f64], bar: f64| -> Vec<f64> {
        stats.counts[own]
            .iter()
            .zip(&stats.counts[1])
            .zip(other)
            .map(|((&o, &x), &m)| {
                let lin = g1 * m;
                bar * ((lin * lin + 8.0 * gamma * (o + x) as f64).sqrt() - lin) / (2.0 * gamma)
            })
            .collect()
    };
    let remainder = |v: &mut Vec<f64>, rate: f64, bar: f64| {
        let s: f64 = v.iter().sum();
        v.push(bar * (s.sqrt() / rate - s));
    };
    let mut a0 = roots(0, g0, &mean1, alpha0.total());
    remainder(&mut a0, totals[0] as f64 / g0, alpha0.total());
    let mut a1 = roots(2, g2, &mean0, alpha1.total());
    // The anomalous remainder rule divides by the class-1 rate.
    remainder(&mut a1, totals[1] as f64 / g1, alpha1.total());
    let ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
    if !(ok(&a0) && ok(&a1)) {
        return None;
    }
    Some((DirichletParams::new(a0).ok()?, DirichletParams::new(a1).ok()?))
}

/// Largest relative violation of the stationarity conditions at interior
/// means (gradient over the sum of absolute gradient terms).
pub(crate) fn stationarity_gap(stats: &SufficientStats, mean0: &[f64], mean1: &[f64]) -> f64 {
    let [g0, g1, g2] = stats.exposure;
    let c0 = block_counts(stats, 0);
    let c1 = block_counts(stats, 2);
    let mut worst: f64 = 0.0;
    for k in 0..mean0.len() {
        let terms0 = [c0[k] / mean0[k], 2.0 * g0 * mean0[k], g1 * mean1[k]];
        let terms1 = [c1[k] / mean1[k], 2.0 * g2 * mean1[k], g1 * mean0[k]];
        for t in [terms0, terms1] {
            let scale = t.iter().map(|v| v.abs()).sum::<f64>();
            if scale > 0.0 {
                worst = worst.max((t[0] - t[1] - t[2]).abs() / scale);
            }
        }
    }
    worst
}

const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Updates both laws for fixed (window, subset). The closed form is tried
/// first and kept only if it is stationary and does not lower the
/// likelihood; otherwise exact block ascent runs from the previous means.
/// Concentrations `sum alpha` are carried over, since the likelihood does
/// not depend on them.
pub fn mstep_attributed(
    stats: &SufficientStats,
    alpha0_prev: &DirichletParams,
    alpha1_prev: &DirichletParams,
) -> Result<MStepOutcome> {
    let mean0 = alpha0_prev.latent_mean();
    let mean1 = alpha1_prev.latent_mean();
    let before = loglik_attributed_means(stats, &mean0, &mean1);
    let [_, g1, g2] = stats.exposure;
    let update1 = g1 > 0.0 || g2 > 0.0;
    if update1 && g2 > 0.0 {
        if let Some((a0, a1)) = closed_form_update(stats, alpha0_prev, alpha1_prev) {
            let (m0, m1) = (a0.latent_mean(), a1.latent_mean());
            let ll = loglik_attributed_means(stats, &m0, &m1);
            if ll >= before && stationarity_gap(stats, &m0, &m1) < GRADIENT_TOLERANCE {
                return Ok(MStepOutcome {
                    alpha0: a0,
                    alpha1: a1,
                    route: UpdateRoute::ClosedForm,
                    alpha1_skipped: false,
                });
            }
        }
    }
    let (m0, m1) = block_ascent(stats, &mean0, &mean1, update1);
    let ll = loglik_attributed_means(stats, &m0, &m1);
    if !(ll >= before) {
        return Ok(MStepOutcome {
            alpha0: alpha0_prev.clone(),
            alpha1: alpha1_prev.clone(),
            route: UpdateRoute::Unchanged,
            alpha1_skipped: !update1,
        });
    }
    Ok(MStepOutcome {
        alpha0: DirichletParams::from_latent_mean(&m0, alpha0_prev.total())?,
        alpha1: if update1 {
            DirichletParams::from_latent_mean(&m1, alpha1_prev.total())?
        } else {
            alpha1_prev.clone()
        },
        route: UpdateRoute::BlockAscent,
        alpha1_skipped: !update1,
    })
}

/// Moment-style starting means: `sqrt(N_0k / gamma_0)` for the baseline law
/// and `sqrt(N_2k / gamma_2)` (or `N_1k / (gamma_1 mu_0k)` without class-2
/// events) for the anomalous law, each pulled back into the simplex.
pub(crate) fn moment_means(stats: &SufficientStats) -> (Vec<f64>, Vec<f64>) {
    let [g0, g1, g2] = stats.exposure;
    let totals = stats.totals();
    let k = stats.counts[0].len();
    let cap = 1.0 - MEAN_FLOOR;
    let fit = |v: Vec<f64>| -> Vec<f64> {
        let mut v: Vec<f64> =
            v.into_iter().map(|x| if x.is_finite() { x.max(MEAN_FLOOR) } else { MEAN_FLOOR }).collect();
        let s: f64 = v.iter().sum();
        if s > cap {
            // Shrink the excess over the floor so the sum lands on the cap.
            let floors = k as f64 * MEAN_FLOOR;
            let shrink = (cap - floors) / (s - floors);
            v.iter_mut().for_each(|x| *x = MEAN_FLOOR + (*x - MEAN_FLOOR) * shrink);
        }
        v
    };
    let m0 = fit(if g0 > 0.0 {
        stats.counts[0].iter().map(|&c| (c as f64 / g0).sqrt()).collect()
    } else {
        vec![MEAN_FLOOR; k]
    });
    let m1 = fit(if g2 > 0.0 && totals[2] > 0 {
        stats.counts[2].iter().map(|&c| (c as f64 / g2).sqrt()).collect()
    } else if g1 > 0.0 {
        stats.counts[1].iter().zip(&m0).map(|(&c, m)| c as f64 / (g1 * m)).collect()
    } else {
        m0.clone()
    });
    (m0, m1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::exposures;

    fn stats(counts: [[u64; 2]; 3], exposure: [f64; 3]) -> SufficientStats {
        SufficientStats { counts: counts.map(|c| c.to_vec()), exposure }
    }

    fn objective(c: &[f64], a: f64, b: &[f64], mu: &[f64]) -> f64 {
        c.iter().zip(mu).map(|(c, m)| c * m.ln()).sum::<f64>()
            - a * mu.iter().map(|m| m * m).sum::<f64>()
            - b.iter().zip(mu).map(|(b, m)| b * m).sum::<f64>()
    }

    #[test]
    fn block_maximizer_is_stationary_when_free() {
        let c = [10.0, 4.0];
        let b = [3.0, 1.0];
        let mu = maximize_block(&c, 50.0, &b);
        for k in 0..2 {
            let g = c[k] / mu[k] - 2.0 * 50.0 * mu[k] - b[k];
            assert!(g.abs() < 1e-9, "{g}");
        }
    }

    #[test]
    fn block_maximizer_respects_cap() {
        let c = [100.0, 100.0];
        let mu = maximize_block(&c, 1.0, &[0.0, 0.0]);
        assert!((mu.iter().sum::<f64>() - (1.0 - MEAN_FLOOR)).abs() < 1e-9);
        // Perturbing along the constraint face cannot improve.
        let base = objective(&c, 1.0, &[0.0, 0.0], &mu);
        for d in [-1e-3, 1e-3] {
            let p = [mu[0] + d, mu[1] - d];
            assert!(objective(&c, 1.0, &[0.0, 0.0], &p) <= base + 1e-12);
        }
    }

    #[test]
    fn zero_counts_push_means_to_floor() {
        let s = stats([[0, 0], [0, 0], [0, 0]], exposures(10, 3, 10.0, 4.0, 2.0));
        let a = DirichletParams::new(vec![2.0, 2.0, 1.0]).unwrap();
        let out = mstep_attributed(&s, &a, &a).unwrap();
        let q_before = crate::model::expected_dot(&a, &a);
        let q_after = crate::model::expected_dot(&out.alpha0, &out.alpha0);
        assert!(q_after < q_before);
        assert!(out.alpha0.latent_mean().iter().all(|&m| m <= 1e-8));
    }

    #[test]
    fn update_never_lowers_likelihood() {
        let s = stats([[30, 5], [6, 8], [1, 9]], exposures(12, 4, 20.0, 8.0, 6.0));
        let a0 = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        let a1 = DirichletParams::new(vec![1.0, 3.0, 2.0]).unwrap();
        let before = loglik_attributed_means(&s, &a0.latent_mean(), &a1.latent_mean());
        let out = mstep_attributed(&s, &a0, &a1).unwrap();
        let after = loglik_attributed_means(&s, &out.alpha0.latent_mean(), &out.alpha1.latent_mean());
        assert!(after >= before - 1e-9);
        // The anomalous mean sits on the sum cap here.
        assert!(out.alpha1.latent_mean().iter().sum::<f64>() > 0.999);
        assert!((out.alpha0.total() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_anomalous_exposure_skips_alpha1() {
        let s = stats([[30, 5], [0, 0], [0, 0]], [200.0, 0.0, 0.0]);
        let a0 = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        let a1 = DirichletParams::new(vec![1.0, 3.0, 2.0]).unwrap();
        let out = mstep_attributed(&s, &a0, &a1).unwrap();
        assert!(out.alpha1_skipped);
        assert_eq!(out.alpha1, a1);
        // Single law: mu_k = sqrt(N_k / gamma).
        let m = out.alpha0.latent_mean();
        assert!((m[0] - 0.15f64.sqrt()).abs() < 1e-9);
        assert!((m[1] - 0.025f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn moment_means_stay_inside_the_simplex() {
        // One attribute dominates and the rest are empty, so rescaling
        // alone would lift the floored entries past the cap.
        let s = SufficientStats { counts: std::array::from_fn(|_| vec![900, 5, 0, 0]), exposure: [100.0, 50.0, 25.0] };
        let (m0, m1) = moment_means(&s);
        for m in [&m0, &m1] {
            assert!(m.iter().all(|&x| x >= MEAN_FLOOR));
            assert!(m.iter().sum::<f64>() <= 1.0 - MEAN_FLOOR + 1e-15, "{m:?}");
            DirichletParams::from_latent_mean(m, 10.0).unwrap();
        }
    }
}
