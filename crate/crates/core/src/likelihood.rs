//! Sufficient statistics and the marginal log-likelihood of an event log
//! under the two-component partition model.
//!
//! Every opportunity falls in one of three classes by how many of its two
//! latent draws come from the anomalous law: 0, 1 or 2. Class `j` receives
//! an expected `gamma_j` opportunities, and an opportunity of class `j`
//! realizes an edge with probability `q_j`, the dot product of the two mean
//! vectors involved. Integrating out the latent positions and the unobserved
//! opportunity count gives
//!
//! ```text
//! log L = sum_i log p_i  -  sum_j gamma_j q_j
//! ```
//!
//! where `p_i` is the marginal probability of event `i`'s outcome (its
//! attribute, or simply "edge" in unattributed mode). Terms that do not
//! depend on the Dirichlet parameters are dropped.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{dot, pairs, ChangeWindow, DirichletParams, EventLog, Mode, VertexSubset};

/// Per-class event counts and opportunity exposures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientStats {
    /// `counts[j][a]`: events of class `j` carrying attribute `a + 1`. In
    /// unattributed mode each inner vector has a single entry.
    pub counts: [Vec<u64>; 3],
    /// Expected opportunity counts `gamma_0, gamma_1, gamma_2`.
    pub exposure: [f64; 3],
}

impl SufficientStats {
    pub fn totals(&self) -> [u64; 3] {
        [0, 1, 2].map(|j| self.counts[j].iter().sum())
    }

    pub fn total_events(&self) -> u64 {
        self.totals().iter().sum()
    }
}

/// Opportunity exposures for a window of length `window_len` and a subset
/// of `m` vertices. Class 0 collects everything outside the window plus
/// in-window pairs with no subset endpoint.
///
/// Panics if `m > n`.
pub fn exposures(n: usize, m: usize, horizon: f64, window_len: f64, lambda: f64) -> [f64; 3] {
    assert!(m <= n, "subset of {m} exceeds {n} vertices");
    let all = pairs(n);
    let outside_subset = pairs(n - m) / all;
    let inside_subset = pairs(m) / all;
    let g0 = lambda * (horizon - window_len + window_len * outside_subset);
    let g2 = lambda * window_len * inside_subset;
    let g1 = (lambda * horizon - g0 - g2).max(0.0);
    [g0, g1, g2]
}

/// Number of latent draws from the anomalous law at this event.
#[inline]
pub(crate) fn event_class(t: f64, u: usize, v: usize, window: &ChangeWindow, mask: &[bool]) -> usize {
    if window.contains(t) {
        mask[u] as usize + mask[v] as usize
    } else {
        0
    }
}

#[inline]
pub(crate) fn attr_slot(attr: Option<usize>) -> usize {
    attr.map_or(0, |a| a - 1)
}

pub(crate) fn slots(log: &EventLog) -> usize {
    match log.mode() {
        Mode::Attributed => log.k(),
        Mode::Unattributed => 1,
    }
}

fn check_lambda_window(log: &EventLog, window: &ChangeWindow, lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda {lambda} must be positive")));
    }
    window.check_within(log.horizon())
}

pub fn compute_stats(
    log: &EventLog,
    window: &ChangeWindow,
    subset: &VertexSubset,
    lambda: f64,
) -> Result<SufficientStats> {
    if subset.n() != log.n() {
        return Err(Error::invalid("subset and log disagree on vertex count"));
    }
    check_lambda_window(log, window, lambda)?;
    Ok(stats_for_mask(log, window, subset.mask(), lambda))
}

pub(crate) fn stats_for_mask(log: &EventLog, window: &ChangeWindow, mask: &[bool], lambda: f64) -> SufficientStats {
    let slots = slots(log);
    let mut counts = [vec![0u64; slots], vec![0u64; slots], vec![0u64; slots]];
    for e in log.events() {
        counts[event_class(e.t, e.u, e.v, window, mask)][attr_slot(e.attr)] += 1;
    }
    let m = mask.iter().filter(|&&b| b).count();
    SufficientStats { counts, exposure: exposures(log.n(), m, log.horizon(), window.length(), lambda) }
}

/// Statistics for the homogeneous model: every event is class 0 and the
/// whole exposure `lambda * T` sits in class 0.
pub fn homogeneous_stats(log: &EventLog, lambda: f64) -> Result<SufficientStats> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda {lambda} must be positive")));
    }
    let slots = slots(log);
    let mut counts = [vec![0u64; slots], vec![0u64; slots], vec![0u64; slots]];
    for e in log.events() {
        counts[0][attr_slot(e.attr)] += 1;
    }
    Ok(SufficientStats { counts, exposure: [lambda * log.horizon(), 0.0, 0.0] })
}

/// Edge probabilities `q_0, q_1, q_2` of the three opportunity classes.
pub fn class_rates(alpha0: &DirichletParams, alpha1: &DirichletParams) -> [f64; 3] {
    let m0 = alpha0.latent_mean();
    let m1 = alpha1.latent_mean();
    [dot(&m0, &m0), dot(&m0, &m1), dot(&m1, &m1)]
}

fn exposure_term(stats: &SufficientStats, rates: &[f64; 3]) -> f64 {
    (0..3).map(|j| stats.exposure[j] * rates[j]).sum()
}

fn count_term(count: u64, p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * p.ln()
    }
}

pub(crate) fn loglik_attributed_means(stats: &SufficientStats, mean0: &[f64], mean1: &[f64]) -> f64 {
    let pairs = [(mean0, mean0), (mean0, mean1), (mean1, mean1)];
    let mut ll = 0.0;
    for (j, (a, b)) in pairs.iter().enumerate() {
        for (k, &c) in stats.counts[j].iter().enumerate() {
            ll += count_term(c, a[k] * b[k]);
        }
    }
    let rates = [dot(mean0, mean0), dot(mean0, mean1), dot(mean1, mean1)];
    ll - exposure_term(stats, &rates)
}

pub(crate) fn loglik_unattributed_means(stats: &SufficientStats, mean0: &[f64], mean1: &[f64]) -> f64 {
    let rates = [dot(mean0, mean0), dot(mean0, mean1), dot(mean1, mean1)];
    let totals = stats.totals();
    let events: f64 = (0..3).map(|j| count_term(totals[j], rates[j])).sum();
    events - exposure_term(stats, &rates)
}

fn check_dims(
    stats: &SufficientStats,
    alpha0: &DirichletParams,
    alpha1: &DirichletParams,
    attributed: bool,
) -> Result<()> {
    if alpha0.dim() != alpha1.dim() {
        return Err(Error::invalid("alpha0 and alpha1 differ in dimension"));
    }
    if attributed && stats.counts[0].len() != alpha0.dim() {
        return Err(Error::invalid(format!(
            "statistics carry {} attributes but parameters have K = {}",
            stats.counts[0].len(),
            alpha0.dim()
        )));
    }
    Ok(())
}

/// Attributed log-likelihood. Event `i` of class `(a, b)` with attribute `k`
/// contributes `log(mu_a[k] mu_b[k])`.
pub fn loglik_attributed(stats: &SufficientStats, alpha0: &DirichletParams, alpha1: &DirichletParams) -> Result<f64> {
    check_dims(stats, alpha0, alpha1, true)?;
    Ok(loglik_attributed_means(stats, &alpha0.latent_mean(), &alpha1.latent_mean()))
}

/// Unattributed log-likelihood. Event `i` of class `(a, b)` contributes
/// `log(mu_a . mu_b)`.
pub fn loglik_unattributed(stats: &SufficientStats, alpha0: &DirichletParams, alpha1: &DirichletParams) -> Result<f64> {
    check_dims(stats, alpha0, alpha1, false)?;
    Ok(loglik_unattributed_means(stats, &alpha0.latent_mean(), &alpha1.latent_mean()))
}

pub fn loglik_stats(
    mode: Mode,
    stats: &SufficientStats,
    alpha0: &DirichletParams,
    alpha1: &DirichletParams,
) -> Result<f64> {
    match mode {
        Mode::Attributed => loglik_attributed(stats, alpha0, alpha1),
        Mode::Unattributed => loglik_unattributed(stats, alpha0, alpha1),
    }
}

/// Log-likelihood of `log` under a fully specified partition.
pub fn loglik(
    log: &EventLog,
    window: &ChangeWindow,
    subset: &VertexSubset,
    lambda: f64,
    alpha0: &DirichletParams,
    alpha1: &DirichletParams,
) -> Result<f64> {
    let stats = compute_stats(log, window, subset, lambda)?;
    loglik_stats(log.mode(), &stats, alpha0, alpha1)
}

pub fn loglik_homogeneous(log: &EventLog, alpha: &DirichletParams, lambda: f64) -> Result<f64> {
    let stats = homogeneous_stats(log, lambda)?;
    loglik_stats(log.mode(), &stats, alpha, alpha)
}

/// Window-dependent statistics for a fixed subset, answered by binary search
/// over per-class event times. Events with no subset endpoint are class 0
/// for every window, so only events touching the subset are indexed.
#[derive(Debug, Clone)]
pub struct WindowScanner {
    /// `times[(c - 1) * slots + a]`: sorted times of events with `c` subset
    /// endpoints and attribute slot `a`.
    times: Vec<Vec<f64>>,
    base: Vec<u64>,
    slots: usize,
    n: usize,
    m: usize,
    horizon: f64,
}

impl WindowScanner {
    pub fn new(log: &EventLog, subset: &VertexSubset) -> Self {
        Self::from_mask(log, subset.mask())
    }

    pub(crate) fn from_mask(log: &EventLog, mask: &[bool]) -> Self {
        let slots = slots(log);
        let mut times = vec![Vec::new(); 2 * slots];
        let mut base = vec![0u64; slots];
        for e in log.events() {
            let c = mask[e.u] as usize + mask[e.v] as usize;
            let a = attr_slot(e.attr);
            if c == 0 {
                base[a] += 1;
            } else {
                times[(c - 1) * slots + a].push(e.t);
            }
        }
        let m = mask.iter().filter(|&&b| b).count();
        WindowScanner { times, base, slots, n: log.n(), m, horizon: log.horizon() }
    }

    pub fn stats(&self, window: &ChangeWindow, lambda: f64) -> SufficientStats {
        let mut counts = [self.base.clone(), vec![0u64; self.slots], vec![0u64; self.slots]];
        for c in 1..=2 {
            for (a, ts) in self.times[(c - 1) * self.slots..c * self.slots].iter().enumerate() {
                let below_end = ts.partition_point(|&t| t <= window.end);
                let below_start = ts.partition_point(|&t| t <= window.start);
                let inside = (below_end - below_start) as u64;
                counts[c][a] += inside;
                counts[0][a] += ts.len() as u64 - inside;
            }
        }
        SufficientStats { counts, exposure: exposures(self.n, self.m, self.horizon, window.length(), lambda) }
    }
}
