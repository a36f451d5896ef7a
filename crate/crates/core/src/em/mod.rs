//! Stochastic conditional EM for the two-component partition model.

mod attributed;
mod estep;
mod unattributed;

pub use attributed::{mstep_attributed, MStepOutcome, UpdateRoute, MEAN_FLOOR};
pub use estep::{estep_membership, estep_window, membership_probabilities, MembershipStep, WindowStep};
pub use unattributed::{mstep_unattributed, mstep_unattributed_warm, PositionObjective, PositionState, POSITION_FLOOR};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initializer::{best_start, candidate_subsets, InitConfig, Start};
use crate::likelihood::{compute_stats, homogeneous_stats, loglik_stats, SufficientStats};
use crate::model::{ChangeWindow, DirichletParams, EventLog, Mode, PartitionModel, VertexSubset};
use crate::simplex;

/// Concentration `sum alpha` given to laws built from a mean alone.
pub const DEFAULT_CONCENTRATION: f64 = 10.0;

/// Controls for the per-vertex projected ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    /// First trial step length (the direction is normalized).
    pub initial_step: f64,
    pub backtrack: f64,
    pub max_inner: usize,
    pub max_sweeps: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { initial_step: 0.05, backtrack: 0.5, max_inner: 30, max_sweeps: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EMConfig {
    /// Candidate windows drawn per window step.
    pub num_candidates: usize,
    /// Membership threshold.
    pub xi: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Prior probability of subset membership in the membership step.
    pub membership_prior: f64,
    pub step: StepConfig,
}

impl Default for EMConfig {
    fn default() -> Self {
        Self {
            num_candidates: 5000,
            xi: 0.5,
            max_iters: 100,
            rel_tol: 1e-4,
            membership_prior: 0.5,
            step: StepConfig::default(),
        }
    }
}

impl EMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_candidates == 0 {
            return Err(Error::invalid("em.num_candidates must be at least 1"));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::invalid("em.xi must lie in (0, 1)"));
        }
        if !(self.membership_prior > 0.0 && self.membership_prior < 1.0) {
            return Err(Error::invalid("em.membership_prior must lie in (0, 1)"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("em.rel_tol must be positive"));
        }
        let s = &self.step;
        if !(s.initial_step > 0.0 && s.backtrack > 0.0 && s.backtrack < 1.0) {
            return Err(Error::invalid("em.step needs initial_step > 0 and backtrack in (0, 1)"));
        }
        Ok(())
    }
}

/// Opportunity rate: 1.5 times the busiest bin's event count, per unit time.
/// Bins are `[j unit, (j + 1) unit)` from time zero.
pub fn fix_lambda(log: &EventLog, unit: f64) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::invalid("cannot fix lambda from an empty log"));
    }
    if !(unit.is_finite() && unit > 0.0) {
        return Err(Error::invalid("time unit must be positive"));
    }
    let mut bins = std::collections::BTreeMap::<u64, u64>::new();
    for e in log.events() {
        *bins.entry((e.t / unit).floor() as u64).or_default() += 1;
    }
    let busiest = bins.values().copied().max().unwrap_or(0);
    Ok(1.5 * busiest as f64 / unit)
}

/// Method-of-moments laws from sufficient statistics, used to score
/// candidate starts. Means are matched to the observed per-class rates and
/// given [`DEFAULT_CONCENTRATION`].
pub fn moment_estimates(stats: &SufficientStats, mode: Mode, k: usize) -> Result<(DirichletParams, DirichletParams)> {
    let (m0, m1) = match mode {
        Mode::Attributed => attributed::moment_means(stats),
        Mode::Unattributed => unattributed_moment_means(stats, k),
    };
    Ok((
        DirichletParams::from_latent_mean(&m0, DEFAULT_CONCENTRATION)?,
        DirichletParams::from_latent_mean(&m1, DEFAULT_CONCENTRATION)?,
    ))
}

/// Means with `|mu0|^2 = q0`, `mu0 . mu1 = q1` and `|mu1|^2 = q2` where the
/// observed rates allow it, built in the plane of the all-ones direction and
/// one orthogonal direction.
fn unattributed_moment_means(stats: &SufficientStats, k: usize) -> (Vec<f64>, Vec<f64>) {
    let [g0, g1, g2] = stats.exposure;
    let [n0, n1, n2] = stats.totals().map(|c| c as f64);
    let rate = |n: f64, g: f64| if g > 0.0 { n / g } else { f64::NAN };
    let q0 = rate(n0, g0);
    let q0 = if q0.is_finite() { q0.max(MEAN_FLOOR) } else { MEAN_FLOOR };
    let q1 = rate(n1, g1);
    let q2 = rate(n2, g2);
    let q2 = if q2.is_finite() && n2 > 0.0 {
        q2
    } else if q1.is_finite() {
        q1 * q1 / q0
    } else {
        q0
    };
    let q1 = if q1.is_finite() { q1 } else { (q0 * q2).sqrt() };
    let ones: Vec<f64> = vec![1.0 / (k as f64).sqrt(); k];
    let mut m0: Vec<f64> = ones.iter().map(|e| e * q0.sqrt()).collect();
    let along = q1 / q0.sqrt();
    let mut m1: Vec<f64> = if k == 1 {
        vec![along]
    } else {
        let across = (q2 - along * along).max(0.0).sqrt();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        (0..k)
            .map(|j| {
                ones[j] * along
                    + across
                        * if j == 0 {
                            s
                        } else if j == 1 {
                            -s
                        } else {
                            0.0
                        }
            })
            .collect()
    };
    simplex::project(&mut m0, MEAN_FLOOR, 1.0 - MEAN_FLOOR);
    simplex::project(&mut m1, MEAN_FLOOR, 1.0 - MEAN_FLOOR);
    (m0, m1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub window: ChangeWindow,
    pub subset_size: usize,
    pub loglik: f64,
}

/// Counts of steps that hit a degenerate case and fell back.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FitFlags {
    pub degenerate_windows: usize,
    pub degenerate_memberships: usize,
    pub alpha1_skipped: usize,
    pub closed_form_accepted: usize,
    pub start_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: PartitionModel,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
    /// Membership probabilities from the membership step that produced the
    /// returned subset (empty when the start was returned).
    pub membership: Vec<f64>,
    pub flags: FitFlags,
}

fn relative_change(a: &DirichletParams, b: &DirichletParams) -> f64 {
    a.alpha().iter().zip(b.alpha()).map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

/// Runs EM from `start`, or from [`best_start`] over the initializer's
/// candidates when `start` is `None`. Each iteration updates the window,
/// then memberships, then the laws; the best-likelihood iterate is returned.
pub fn fit<R: Rng + ?Sized>(
    log: &EventLog,
    lambda: f64,
    cfg: &EMConfig,
    init: &InitConfig,
    start: Option<Start>,
    rng: &mut R,
) -> Result<FitResult> {
    cfg.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let start = match start {
        Some(s) => s,
        None => {
            let candidates = candidate_subsets(log, init, lambda, rng)?;
            best_start(log, &candidates, lambda, rng)?
        }
    };
    let mode = log.mode();
    let mut flags = FitFlags { start_fallback: start.fallback, ..FitFlags::default() };
    let mut positions = match mode {
        Mode::Unattributed => Some(PositionState::from_log(log, lambda)?),
        Mode::Attributed => None,
    };
    let mut window = start.window;
    let mut subset = start.subset.clone();
    let mut alpha0 = start.alpha0.clone();
    let mut alpha1 = start.alpha1.clone();
    let mut best: Option<(f64, PartitionModel, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let w = estep_window(log, &subset, &alpha0, &alpha1, lambda, &window, cfg, rng)?;
        flags.degenerate_windows += usize::from(w.degenerate);
        let moved = (w.window.start - window.start).abs().max((w.window.end - window.end).abs());
        window = w.window;

        let m = estep_membership(log, &window, &subset, &alpha0, &alpha1, lambda, cfg)?;
        flags.degenerate_memberships += usize::from(m.degenerate);
        let membership_changed = m.subset != subset;
        subset = m.subset;

        let outcome = match (mode, positions.as_mut()) {
            (Mode::Unattributed, Some(state)) => mstep_unattributed_warm(
                log,
                &window,
                subset.mask(),
                &alpha0,
                &alpha1,
                lambda,
                &cfg.step,
                cfg.rel_tol,
                state,
            )?,
            _ => mstep_attributed(&compute_stats(log, &window, &subset, lambda)?, &alpha0, &alpha1)?,
        };
        flags.alpha1_skipped += usize::from(outcome.alpha1_skipped);
        flags.closed_form_accepted += usize::from(outcome.route == UpdateRoute::ClosedForm);
        let change = relative_change(&outcome.alpha0, &alpha0).max(relative_change(&outcome.alpha1, &alpha1));
        alpha0 = outcome.alpha0;
        alpha1 = outcome.alpha1;

        let stats = compute_stats(log, &window, &subset, lambda)?;
        let ll = loglik_stats(mode, &stats, &alpha0, &alpha1)?;
        trace.push(TraceEntry { window, subset_size: subset.len(), loglik: ll });
        if best.as_ref().is_none_or(|(b, _, _)| ll > *b) {
            let model = PartitionModel::new(alpha0.clone(), alpha1.clone(), window, subset.clone(), lambda)?;
            best = Some((ll, model, m.probabilities));
        }
        if !membership_changed && moved < cfg.rel_tol * log.horizon() && change < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    let (loglik, model, membership) = match best {
        Some(b) => b,
        None => {
            let model = PartitionModel::new(alpha0, alpha1, window, subset, lambda)?;
            (start.loglik, model, Vec::new())
        }
    };
    Ok(FitResult { model, loglik, iterations: trace.len(), converged, trace, membership, flags })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousFit {
    pub alpha: DirichletParams,
    pub loglik: f64,
}

/// Maximizes the one-law likelihood. Attributed logs use the per-attribute
/// root with a single group; unattributed logs run the positional ascent
/// with no subset, then polish the mean.
pub fn fit_homogeneous(log: &EventLog, lambda: f64, cfg: &EMConfig) -> Result<HomogeneousFit> {
    cfg.validate()?;
    let stats = homogeneous_stats(log, lambda)?;
    let k = log.k();
    let seed = DirichletParams::from_latent_mean(&vec![1.0 / (k as f64 + 1.0); k], DEFAULT_CONCENTRATION)?;
    let alpha = match log.mode() {
        Mode::Attributed => mstep_attributed(&stats, &seed, &seed)?.alpha0,
        Mode::Unattributed => {
            let mut state = PositionState::from_log(log, lambda)?;
            let none = vec![false; log.n()];
            let empty = ChangeWindow { start: 0.0, end: 0.0 };
            mstep_unattributed_warm(log, &empty, &none, &seed, &seed, lambda, &cfg.step, cfg.rel_tol, &mut state)?
                .alpha0
        }
    };
    let loglik = loglik_stats(log.mode(), &stats, &alpha, &alpha)?;
    Ok(HomogeneousFit { alpha, loglik })
}

/// Start built from a known configuration, with moment-estimated laws.
pub fn start_from(log: &EventLog, window: ChangeWindow, subset: VertexSubset, lambda: f64) -> Result<Start> {
    let stats = compute_stats(log, &window, &subset, lambda)?;
    let (alpha0, alpha1) = moment_estimates(&stats, log.mode(), log.k())?;
    let loglik = loglik_stats(log.mode(), &stats, &alpha0, &alpha1)?;
    Ok(Start { window, subset, alpha0, alpha1, loglik, candidate: None, fallback: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EdgeEvent;

    fn at_times(times: &[f64]) -> EventLog {
        let events = times.iter().map(|&t| EdgeEvent { t, u: 0, v: 1, attr: None }).collect();
        EventLog::new(events, 3, 100.0, 1, Mode::Unattributed).unwrap()
    }

    #[test]
    fn lambda_from_busiest_bin() {
        let mut times = vec![0.5; 100];
        times.extend([3.5, 4.5]);
        assert_eq!(fix_lambda(&at_times(&times), 1.0).unwrap(), 150.0);
        assert_eq!(fix_lambda(&at_times(&[42.0]), 1.0).unwrap(), 1.5);
        let uniform: Vec<f64> = (0..50).flat_map(|b| (0..10).map(move |i| b as f64 * 2.0 + 0.1 * i as f64)).collect();
        assert_eq!(fix_lambda(&at_times(&uniform), 2.0).unwrap(), 7.5);
    }

    #[test]
    fn lambda_needs_events() {
        assert!(fix_lambda(&at_times(&[]), 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EMConfig::default().validate().is_ok());
        assert!(EMConfig { xi: 1.0, ..EMConfig::default() }.validate().is_err());
        assert!(EMConfig { num_candidates: 0, ..EMConfig::default() }.validate().is_err());
    }

    #[test]
    fn unattributed_moments_match_rates() {
        let stats = SufficientStats { counts: [vec![40], vec![9], vec![9]], exposure: [400.0, 60.0, 30.0] };
        let (m0, m1) = unattributed_moment_means(&stats, 2);
        let dot = crate::model::dot;
        assert!((dot(&m0, &m0) - 0.1).abs() < 1e-12);
        assert!((dot(&m0, &m1) - 0.15).abs() < 1e-12);
        assert!((dot(&m1, &m1) - 0.3).abs() < 1e-12);
    }
}
