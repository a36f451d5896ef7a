//! Expectation steps: a Monte Carlo average over candidate windows, and a
//! per-vertex membership update by likelihood ratio.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::EMConfig;
use crate::error::{Error, Result};
use crate::likelihood::{
    attr_slot, exposures, loglik_attributed_means, loglik_unattributed_means, slots, stats_for_mask, SufficientStats,
    WindowScanner,
};
use crate::model::{ChangeWindow, DirichletParams, EventLog, Mode, VertexSubset};

/// Log-likelihood evaluator with the latent means precomputed.
#[derive(Debug, Clone)]
pub(crate) struct MeanLoglik {
    mode: Mode,
    mean0: Vec<f64>,
    mean1: Vec<f64>,
}

impl MeanLoglik {
    pub(crate) fn new(mode: Mode, alpha0: &DirichletParams, alpha1: &DirichletParams) -> Result<Self> {
        if alpha0.dim() != alpha1.dim() {
            return Err(Error::invalid("alpha0 and alpha1 differ in dimension"));
        }
        Ok(Self { mode, mean0: alpha0.latent_mean(), mean1: alpha1.latent_mean() })
    }

    pub(crate) fn eval(&self, stats: &SufficientStats) -> f64 {
        match self.mode {
            Mode::Attributed => loglik_attributed_means(stats, &self.mean0, &self.mean1),
            Mode::Unattributed => loglik_unattributed_means(stats, &self.mean0, &self.mean1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStep {
    pub window: ChangeWindow,
    /// Every candidate had zero likelihood; `window` is the input window.
    pub degenerate: bool,
}

/// Draws `cfg.num_candidates` uniform pairs on `(0, T)^2`, orders each, and
/// returns the likelihood-weighted mean of the candidates.
#[allow(clippy::too_many_arguments)]
pub fn estep_window<R: Rng + ?Sized>(
    log: &EventLog,
    subset: &VertexSubset,
    alpha0: &DirichletParams,
    alpha1: &DirichletParams,
    lambda: f64,
    current: &ChangeWindow,
    cfg: &EMConfig,
    rng: &mut R,
) -> Result<WindowStep> {
    cfg.validate()?;
    if subset.n() != log.n() {
        return Err(Error::invalid("subset and log disagree on vertex count"));
    }
    let horizon = log.horizon();
    let candidates: Vec<ChangeWindow> = (0..cfg.num_candidates)
        .map(|_| loop {
            let a = rng.random::<f64>() * horizon;
            let b = rng.random::<f64>() * horizon;
            if a != b {
                break ChangeWindow { start: a.min(b), end: a.max(b) };
            }
        })
        .collect();
    let scanner = WindowScanner::new(log, subset);
    let eval = MeanLoglik::new(log.mode(), alpha0, alpha1)?;
    let weights: Vec<f64> = candidates.par_iter().map(|w| eval.eval(&scanner.stats(w, lambda))).collect();
    let top = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Ok(WindowStep { window: *current, degenerate: true });
    }
    let (mut total, mut start, mut end) = (0.0, 0.0, 0.0);
    for (w, c) in weights.iter().zip(&candidates) {
        let p = (w - top).exp();
        total += p;
        start += p * c.start;
        end += p * c.end;
    }
    let window = ChangeWindow { start: (start / total).clamp(0.0, horizon), end: (end / total).clamp(0.0, horizon) };
    if !(window.end > window.start) {
        return Ok(WindowStep { window: *current, degenerate: true });
    }
    Ok(WindowStep { window, degenerate: false })
}

/// Posterior probability that each vertex belongs to the subset, holding
/// every other vertex at its current assignment. Each toggle only moves the
/// in-window events incident to that vertex between classes, so the whole
/// sweep costs one pass over the events.
#[allow(clippy::too_many_arguments)]
pub fn membership_probabilities(
    log: &EventLog,
    window: &ChangeWindow,
    subset: &VertexSubset,
    alpha0: &DirichletParams,
    alpha1: &DirichletParams,
    lambda: f64,
    prior: f64,
) -> Result<Vec<f64>> {
    if subset.n() != log.n() {
        return Err(Error::invalid("subset and log disagree on vertex count"));
    }
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::invalid("membership prior must lie in (0, 1)"));
    }
    let mask = subset.mask();
    let n = log.n();
    let eval = MeanLoglik::new(log.mode(), alpha0, alpha1)?;
    let base = stats_for_mask(log, window, mask, lambda);
    let base_ll = eval.eval(&base);
    let slots = slots(log);
    // In-window events per vertex: (other endpoint, attribute slot).
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for e in log.events().iter().filter(|e| window.contains(e.t)) {
        let a = attr_slot(e.attr);
        incident[e.u].push((e.v, a));
        incident[e.v].push((e.u, a));
    }
    let log_prior = (prior / (1.0 - prior)).ln();
    let m = subset.len();
    let probs = (0..n)
        .into_par_iter()
        .map(|i| {
            let inside = mask[i];
            let mut counts = base.counts.clone();
            for &(other, a) in &incident[i] {
                let now = inside as usize + mask[other] as usize;
                let next = (!inside) as usize + mask[other] as usize;
                counts[now][a] -= 1;
                counts[next][a] += 1;
            }
            debug_assert_eq!(counts[0].len(), slots);
            let m_toggled = if inside { m - 1 } else { m + 1 };
            let toggled =
                SufficientStats { counts, exposure: exposures(n, m_toggled, log.horizon(), window.length(), lambda) };
            let toggled_ll = eval.eval(&toggled);
            let (ll_in, ll_out) = if inside { (base_ll, toggled_ll) } else { (toggled_ll, base_ll) };
            let diff = if ll_in == ll_out { 0.0 } else { ll_in - ll_out };
            let z = diff + log_prior;
            if z.is_nan() {
                prior
            } else {
                1.0 / (1.0 + (-z).exp())
            }
        })
        .collect();
    Ok(probs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipStep {
    pub subset: VertexSubset,
    pub probabilities: Vec<f64>,
    /// The threshold rule selected no vertex or every vertex; `subset` is the
    /// input subset.
    pub degenerate: bool,
}

/// Includes vertex `i` iff its membership probability exceeds `cfg.xi`.
pub fn estep_membership(
    log: &EventLog,
    window: &ChangeWindow,
    subset_prev: &VertexSubset,
    alpha0: &DirichletParams,
    alpha1: &DirichletParams,
    lambda: f64,
    cfg: &EMConfig,
) -> Result<MembershipStep> {
    cfg.validate()?;
    let probabilities =
        membership_probabilities(log, window, subset_prev, alpha0, alpha1, lambda, cfg.membership_prior)?;
    let mask: Vec<bool> = probabilities.iter().map(|&p| p > cfg.xi).collect();
    match VertexSubset::from_mask(mask) {
        Ok(subset) => Ok(MembershipStep { subset, probabilities, degenerate: false }),
        Err(_) => Ok(MembershipStep { subset: subset_prev.clone(), probabilities, degenerate: true }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EdgeEvent;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(a: &[f64]) -> DirichletParams {
        DirichletParams::new(a.to_vec()).unwrap()
    }

    fn toy(mode: Mode) -> EventLog {
        let attr = |k| if mode == Mode::Attributed { Some(k) } else { None };
        let events = vec![
            EdgeEvent { t: 1.0, u: 0, v: 1, attr: attr(1) },
            EdgeEvent { t: 4.0, u: 0, v: 2, attr: attr(2) },
            EdgeEvent { t: 5.0, u: 1, v: 2, attr: attr(2) },
            EdgeEvent { t: 6.0, u: 3, v: 4, attr: attr(1) },
            EdgeEvent { t: 7.0, u: 2, v: 5, attr: attr(2) },
            EdgeEvent { t: 9.0, u: 4, v: 5, attr: attr(1) },
        ];
        EventLog::new(events, 6, 10.0, 2, mode).unwrap()
    }

    #[test]
    fn single_candidate_is_returned() {
        let log = toy(Mode::Attributed);
        let cfg = EMConfig { num_candidates: 1, ..EMConfig::default() };
        let subset = VertexSubset::new(&[0, 1], 6).unwrap();
        let a = params(&[2.0, 1.0, 1.0]);
        let current = ChangeWindow::new(2.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = estep_window(&log, &subset, &a, &a, 2.0, &current, &cfg, &mut rng).unwrap();
        let mut replay = ChaCha8Rng::seed_from_u64(5);
        let x: f64 = replay.random::<f64>() * 10.0;
        let y: f64 = replay.random::<f64>() * 10.0;
        assert_eq!((step.window.start, step.window.end), (x.min(y), x.max(y)));
    }

    #[test]
    fn toggled_probabilities_match_direct_evaluation() {
        for mode in [Mode::Attributed, Mode::Unattributed] {
            let log = toy(mode);
            let window = ChangeWindow::new(3.0, 8.0).unwrap();
            let subset = VertexSubset::new(&[0, 2], 6).unwrap();
            let a0 = params(&[3.0, 1.0, 2.0]);
            let a1 = params(&[1.0, 4.0, 1.5]);
            let probs = membership_probabilities(&log, &window, &subset, &a0, &a1, 3.0, 0.5).unwrap();
            let eval = MeanLoglik::new(mode, &a0, &a1).unwrap();
            for (i, p) in probs.iter().enumerate() {
                let mut with = subset.mask().to_vec();
                with[i] = true;
                let mut without = subset.mask().to_vec();
                without[i] = false;
                let l_in = eval.eval(&stats_for_mask(&log, &window, &with, 3.0));
                let l_out = eval.eval(&stats_for_mask(&log, &window, &without, 3.0));
                let direct = 1.0 / (1.0 + (l_out - l_in).exp());
                assert!((p - direct).abs() < 1e-12, "{mode:?} vertex {i}: {p} vs {direct}");
            }
        }
    }

    #[test]
    fn equal_laws_leave_membership_unchanged() {
        let log = toy(Mode::Unattributed);
        let a = params(&[2.0, 2.0, 3.0]);
        let window = ChangeWindow::new(3.0, 8.0).unwrap();
        let subset = VertexSubset::new(&[1, 4], 6).unwrap();
        let step = estep_membership(&log, &window, &subset, &a, &a, 2.0, &EMConfig::default()).unwrap();
        assert!(step.degenerate);
        assert_eq!(step.subset, subset);
        assert!(step.probabilities.iter().all(|&p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn higher_threshold_shrinks_subset() {
        let log = toy(Mode::Attributed);
        let window = ChangeWindow::new(3.0, 8.0).unwrap();
        let subset = VertexSubset::new(&[0, 2], 6).unwrap();
        let a0 = params(&[3.0, 1.0, 2.0]);
        let a1 = params(&[1.0, 4.0, 1.5]);
        let low = estep_membership(&log, &window, &subset, &a0, &a1, 3.0, &EMConfig::default()).unwrap();
        let high =
            estep_membership(&log, &window, &subset, &a0, &a1, 3.0, &EMConfig { xi: 0.95, ..EMConfig::default() })
                .unwrap();
        if !high.degenerate && !low.degenerate {
            assert!(high.subset.members().iter().all(|v| low.subset.contains(*v)));
        }
    }
}
