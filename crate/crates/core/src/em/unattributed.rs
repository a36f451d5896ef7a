//! Maximization step for unattributed logs.
//!
//! Every vertex carries a baseline position `X_i`; subset vertices also
//! carry a window position `Y_i`. Write `Z_i = Y_i` for subset vertices
//! inside the window and `Z_i = X_i` otherwise. Events are split into a
//! quiet part (outside the window, or inside it with no subset endpoint)
//! and an active part (inside the window with a subset endpoint). The
//! positions maximize the log-posterior
//!
//! ```text
//! g = sum_quiet A_uv log(X_u . X_v) + sum_active A_uv log(Z_u . Z_v)
//!     - sum_{u<v} [c_out X_u . X_v + c_in Z_u . Z_v]
//!     + sum_i log Dir(X_i; alpha0) + sum_{i in subset} log Dir(Y_i; alpha1)
//! ```
//!
//! with `c_out = lambda (T - w) / C(n, 2)` and `c_in = lambda w / C(n, 2)`.
//! The gradient in `X_i` is
//!
//! ```text
//! sum_v A^quiet_iv X_v / (X_i . X_v)  + [i outside] sum_v A^active_iv Y_v / (X_i . Y_v)
//! - c_out sum_{v != i} X_v  - [i outside] c_in sum_{v != i} Z_v
//! + (alpha0_k - 1) / x_k  - (alpha0_{K+1} - 1) / (1 - sum x)
//! ```
//!
//! and in `Y_i` the active edge sum, `- c_in sum_{v != i} Z_v` and the
//! `alpha1` terms. The no-edge exposure terms and the remainder component's
//! prior term have no counterpart in the edge-ratio form alone; without them
//! the gradient disagrees with finite differences of `g`.
//!
//! After the positional sweeps converge, the Dirichlet laws are refit to the
//! positions, and their means are then polished against the marginal
//! likelihood holding each concentration fixed.

use nalgebra::DMatrix;

use super::attributed::{MStepOutcome, UpdateRoute, MEAN_FLOOR};
use super::StepConfig;
use crate::dirichlet;
use crate::error::{Error, Result};
use crate::initializer::{augment_diagonal, ls_positions, MultiAdjacency};
use crate::likelihood::{loglik_unattributed_means, stats_for_mask, SufficientStats};
use crate::model::{dot, pairs, ChangeWindow, DirichletParams, EventLog};
use crate::simplex;

/// Interior floor for positions.
pub const POSITION_FLOOR: f64 = 1e-6;
/// Margin used when seeding positions from the least-squares fit.
const SEED_MARGIN: f64 = 1e-3;

/// Positions carried across EM iterations, flattened row-major `n x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionState {
    pub k: usize,
    pub base: Vec<f64>,
    pub window: Vec<f64>,
}

impl PositionState {
    /// Least-squares positions from the whole log, pulled into the interior.
    /// The window positions start equal to the baseline ones.
    pub fn from_log(log: &EventLog, lambda: f64) -> Result<Self> {
        let k = log.k();
        let n = log.n();
        if k > n {
            return Err(Error::invalid(format!("latent dimension {k} exceeds vertex count {n}")));
        }
        // Start just below zero so events at t = 0 are counted too.
        let whole = ChangeWindow { start: -f64::MIN_POSITIVE, end: log.horizon() };
        let adjacency = MultiAdjacency::from_log(log, whole);
        let augmented = augment_diagonal(&adjacency, k, 1e-8)?;
        let b = lambda * log.horizon() / pairs(n);
        let positions = ls_positions(&augmented.matrix, b, k)?;
        let mut base = Vec::with_capacity(n * k);
        for p in positions {
            let mut c = p.coords().to_vec();
            simplex::project(&mut c, SEED_MARGIN, 1.0 - SEED_MARGIN);
            base.extend(c);
        }
        Ok(Self { k, window: base.clone(), base })
    }

    pub fn uniform(n: usize, k: usize, value: f64) -> Self {
        Self { k, base: vec![value; n * k], window: vec![value; n * k] }
    }

    fn row(v: &[f64], i: usize, k: usize) -> &[f64] {
        &v[i * k..(i + 1) * k]
    }
}

/// The log-posterior `g` for a fixed (window, subset) and laws.
#[derive(Debug, Clone)]
pub struct PositionObjective {
    n: usize,
    k: usize,
    mask: Vec<bool>,
    quiet: Vec<Vec<(usize, f64)>>,
    active: Vec<Vec<(usize, f64)>>,
    c_out: f64,
    c_in: f64,
    alpha0: Vec<f64>,
    alpha1: Vec<f64>,
}

fn adjacency_lists(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<(usize, f64)>> {
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for (u, v) in pairs {
        dense[(u, v)] += 1.0;
        dense[(v, u)] += 1.0;
    }
    (0..n).map(|i| (0..n).filter(|&j| dense[(i, j)] > 0.0).map(|j| (j, dense[(i, j)])).collect()).collect()
}

impl PositionObjective {
    pub fn new(
        log: &EventLog,
        window: &ChangeWindow,
        mask: &[bool],
        lambda: f64,
        alpha0: &DirichletParams,
        alpha1: &DirichletParams,
    ) -> Result<Self> {
        let n = log.n();
        if mask.len() != n {
            return Err(Error::invalid("mask and log disagree on vertex count"));
        }
        let active_event = |e: &crate::model::EdgeEvent| window.contains(e.t) && (mask[e.u] || mask[e.v]);
        let quiet = adjacency_lists(n, log.events().iter().filter(|e| !active_event(e)).map(|e| (e.u, e.v)));
        let active = adjacency_lists(n, log.events().iter().filter(|e| active_event(e)).map(|e| (e.u, e.v)));
        let per_pair = lambda / pairs(n);
        Ok(Self {
            n,
            k: log.k(),
            mask: mask.to_vec(),
            quiet,
            active,
            c_out: per_pair * (log.horizon() - window.length()),
            c_in: per_pair * window.length(),
            alpha0: alpha0.alpha().to_vec(),
            alpha1: alpha1.alpha().to_vec(),
        })
    }

    pub fn set_laws(&mut self, alpha0: &[f64], alpha1: &[f64]) {
        self.alpha0 = alpha0.to_vec();
        self.alpha1 = alpha1.to_vec();
    }

    fn z<'a>(&self, state: &'a PositionState, i: usize) -> &'a [f64] {
        if self.mask[i] {
            PositionState::row(&state.window, i, self.k)
        } else {
            PositionState::row(&state.base, i, self.k)
        }
    }

    fn sums(&self, state: &PositionState) -> (Vec<f64>, Vec<f64>) {
        let mut sx = vec![0.0; self.k];
        let mut sz = vec![0.0; self.k];
        for i in 0..self.n {
            for c in 0..self.k {
                sx[c] += state.base[i * self.k + c];
                sz[c] += self.z(state, i)[c];
            }
        }
        (sx, sz)
    }

    /// Full log-posterior.
    pub fn value(&self, state: &PositionState) -> f64 {
        let k = self.k;
        let mut edges = 0.0;
        for i in 0..self.n {
            let xi = PositionState::row(&state.base, i, k);
            for &(v, c) in self.quiet[i].iter().filter(|(v, _)| *v > i) {
                edges += c * dot(xi, PositionState::row(&state.base, v, k)).ln();
            }
            for &(v, c) in self.active[i].iter().filter(|(v, _)| *v > i) {
                edges += c * dot(self.z(state, i), self.z(state, v)).ln();
            }
        }
        let (sx, sz) = self.sums(state);
        let mut self_x = 0.0;
        let mut self_z = 0.0;
        for i in 0..self.n {
            let x = PositionState::row(&state.base, i, k);
            self_x += dot(x, x);
            let z = self.z(state, i);
            self_z += dot(z, z);
        }
        let exposure = self.c_out * (dot(&sx, &sx) - self_x) / 2.0 + self.c_in * (dot(&sz, &sz) - self_z) / 2.0;
        let mut prior = 0.0;
        for i in 0..self.n {
            prior += dirichlet::log_density(PositionState::row(&state.base, i, k), &self.alpha0);
            if self.mask[i] {
                prior += dirichlet::log_density(PositionState::row(&state.window, i, k), &self.alpha1);
            }
        }
        edges - exposure + prior
    }

    /// Terms of `g` that involve vertex `i`'s baseline position, at `x`.
    fn local_base(&self, state: &PositionState, sums: &(Vec<f64>, Vec<f64>), i: usize, x: &[f64]) -> f64 {
        let k = self.k;
        let own = PositionState::row(&state.base, i, k);
        let mut v = 0.0;
        for &(o, c) in &self.quiet[i] {
            v += c * dot(x, PositionState::row(&state.base, o, k)).ln();
        }
        let mut rest_x = sums.0.clone();
        rest_x.iter_mut().zip(own).for_each(|(s, o)| *s -= o);
        v -= self.c_out * dot(x, &rest_x);
        if !self.mask[i] {
            for &(o, c) in &self.active[i] {
                v += c * dot(x, self.z(state, o)).ln();
            }
            let mut rest_z = sums.1.clone();
            rest_z.iter_mut().zip(own).for_each(|(s, o)| *s -= o);
            v -= self.c_in * dot(x, &rest_z);
        }
        v + dirichlet::log_density(x, &self.alpha0)
    }

    fn grad_base(&self, state: &PositionState, sums: &(Vec<f64>, Vec<f64>), i: usize, out: &mut [f64]) {
        let k = self.k;
        let x = PositionState::row(&state.base, i, k);
        dirichlet::log_density_grad(x, &self.alpha0, out);
        for &(o, c) in &self.quiet[i] {
            let xo = PositionState::row(&state.base, o, k);
            let d = dot(x, xo);
            for j in 0..k {
                out[j] += c * xo[j] / d;
            }
        }
        for j in 0..k {
            out[j] -= self.c_out * (sums.0[j] - x[j]);
        }
        if !self.mask[i] {
            for &(o, c) in &self.active[i] {
                let zo = self.z(state, o);
                let d = dot(x, zo);
                for j in 0..k {
                    out[j] += c * zo[j] / d;
                }
            }
            for j in 0..k {
                out[j] -= self.c_in * (sums.1[j] - x[j]);
            }
        }
    }

    /// Terms of `g` that involve subset vertex `i`'s window position, at `y`.
    fn local_window(&self, state: &PositionState, sums: &(Vec<f64>, Vec<f64>), i: usize, y: &[f64]) -> f64 {
        let k = self.k;
        let own = PositionState::row(&state.window, i, k);
        let mut v = 0.0;
        for &(o, c) in &self.active[i] {
            v += c * dot(y, self.z(state, o)).ln();
        }
        let rest: Vec<f64> = sums.1.iter().zip(own).map(|(s, o)| s - o).collect();
        v - self.c_in * dot(y, &rest) + dirichlet::log_density(y, &self.alpha1)
    }

    fn grad_window(&self, state: &PositionState, sums: &(Vec<f64>, Vec<f64>), i: usize, out: &mut [f64]) {
        let k = self.k;
        let y = PositionState::row(&state.window, i, k);
        dirichlet::log_density_grad(y, &self.alpha1, out);
        for &(o, c) in &self.active[i] {
            let zo = self.z(state, o);
            let d = dot(y, zo);
            for j in 0..k {
                out[j] += c * zo[j] / d;
            }
        }
        for j in 0..k {
            out[j] -= self.c_in * (sums.1[j] - y[j]);
        }
    }

    /// Analytic gradient of [`value`](Self::value): `(d/dX, d/dY)`, each
    /// flattened `n x K`. Window-position entries of non-subset vertices are
    /// zero.
    pub fn gradient(&self, state: &PositionState) -> (Vec<f64>, Vec<f64>) {
        let k = self.k;
        let sums = self.sums(state);
        let mut gx = vec![0.0; self.n * k];
        let mut gy = vec![0.0; self.n * k];
        for i in 0..self.n {
            self.grad_base(state, &sums, i, &mut gx[i * k..(i + 1) * k]);
            if self.mask[i] {
                self.grad_window(state, &sums, i, &mut gy[i * k..(i + 1) * k]);
            }
        }
        (gx, gy)
    }

    /// One pass of per-vertex projected ascent steps with backtracking.
    /// Returns the number of accepted steps.
    pub fn sweep(&self, state: &mut PositionState, cfg: &StepConfig) -> usize {
        let k = self.k;
        let mut sums = self.sums(state);
        let mut accepted = 0;
        let mut grad = vec![0.0; k];
        for i in 0..self.n {
            for window in [false, true] {
                if window && !self.mask[i] {
                    continue;
                }
                let current: Vec<f64> = if window {
                    PositionState::row(&state.window, i, k).to_vec()
                } else {
                    PositionState::row(&state.base, i, k).to_vec()
                };
                let local = |s: &PositionState, sums: &(Vec<f64>, Vec<f64>), p: &[f64]| {
                    if window {
                        self.local_window(s, sums, i, p)
                    } else {
                        self.local_base(s, sums, i, p)
                    }
                };
                if window {
                    self.grad_window(state, &sums, i, &mut grad);
                } else {
                    self.grad_base(state, &sums, i, &mut grad);
                }
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    // Boundary position: nudge inside and retry next sweep.
                    let mut p = current.clone();
                    simplex::project(&mut p, POSITION_FLOOR, 1.0 - POSITION_FLOOR);
                    let target = if window { &mut state.window } else { &mut state.base };
                    target[i * k..(i + 1) * k].copy_from_slice(&p);
                    sums = self.sums(state);
                    continue;
                }
                if norm == 0.0 {
                    continue;
                }
                let start_value = local(state, &sums, &current);
                let mut step = cfg.initial_step;
                for _ in 0..cfg.max_inner {
                    let mut trial: Vec<f64> = current.iter().zip(&grad).map(|(c, g)| c + step * g / norm).collect();
                    simplex::project(&mut trial, POSITION_FLOOR, 1.0 - POSITION_FLOOR);
                    let value = local(state, &sums, &trial);
                    if value > start_value {
                        let target = if window { &mut state.window } else { &mut state.base };
                        target[i * k..(i + 1) * k].copy_from_slice(&trial);
                        for j in 0..k {
                            let delta = trial[j] - current[j];
                            if !window {
                                sums.0[j] += delta;
                            }
                            if window || !self.mask[i] {
                                sums.1[j] += delta;
                            }
                        }
                        accepted += 1;
                        break;
                    }
                    step *= cfg.backtrack;
                }
            }
        }
        accepted
    }

    /// Dirichlet MLEs from the current positions; `None` entries mean too
    /// few points to refit.
    pub fn refit_laws(&self, state: &PositionState) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        let k = self.k;
        let base: Vec<&[f64]> = (0..self.n).map(|i| PositionState::row(&state.base, i, k)).collect();
        let window: Vec<&[f64]> =
            (0..self.n).filter(|&i| self.mask[i]).map(|i| PositionState::row(&state.window, i, k)).collect();
        (dirichlet::fit_mle(&base), dirichlet::fit_mle(&window))
    }
}

/// Projected gradient ascent of the unattributed marginal likelihood over
/// the two means, from the given start.
pub(crate) fn polish_means(
    stats: &SufficientStats,
    mean0: &[f64],
    mean1: &[f64],
    update1: bool,
) -> (Vec<f64>, Vec<f64>) {
    let [g0, g1, g2] = stats.exposure;
    let [n0, n1, n2] = stats.totals().map(|c| c as f64);
    let k = mean0.len();
    let cap = 1.0 - MEAN_FLOOR;
    let mut m0 = mean0.to_vec();
    let mut m1 = mean1.to_vec();
    simplex::project(&mut m0, MEAN_FLOOR, cap);
    simplex::project(&mut m1, MEAN_FLOOR, cap);
    let mut value = loglik_unattributed_means(stats, &m0, &m1);
    let mut step = 1e-2;
    for _ in 0..2000 {
        let q0 = dot(&m0, &m0);
        let q1 = dot(&m0, &m1);
        let q2 = dot(&m1, &m1);
        let w0 = if n0 > 0.0 { n0 / q0 } else { 0.0 } - g0;
        let w1 = if n1 > 0.0 { n1 / q1 } else { 0.0 } - g1;
        let w2 = if n2 > 0.0 { n2 / q2 } else { 0.0 } - g2;
        let d0: Vec<f64> = (0..k).map(|j| 2.0 * w0 * m0[j] + w1 * m1[j]).collect();
        let d1: Vec<f64> = (0..k).map(|j| if update1 { 2.0 * w2 * m1[j] + w1 * m0[j] } else { 0.0 }).collect();
        let scale = d0.iter().chain(&d1).map(|v| v * v).sum::<f64>().sqrt();
        if !(scale > 0.0 && scale.is_finite()) {
            break;
        }
        let mut improved = false;
        for _ in 0..60 {
            let mut t0: Vec<f64> = m0.iter().zip(&d0).map(|(m, d)| m + step * d / scale).collect();
            let mut t1: Vec<f64> = m1.iter().zip(&d1).map(|(m, d)| m + step * d / scale).collect();
            simplex::project(&mut t0, MEAN_FLOOR, cap);
            simplex::project(&mut t1, MEAN_FLOOR, cap);
            let v = loglik_unattributed_means(stats, &t0, &t1);
            if v > value {
                let gain = v - value;
                m0 = t0;
                m1 = t1;
                value = v;
                improved = gain > 1e-13 * (1.0 + value.abs());
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (m0, m1)
}

/// Baseline and window positions are ascended sweep by sweep with law
/// refits between sweeps, then the means are polished. The previous laws
/// are returned unchanged if the result would lower the marginal
/// likelihood.
#[allow(clippy::too_many_arguments)]
pub fn mstep_unattributed_warm(
    log: &EventLog,
    window: &ChangeWindow,
    mask: &[bool],
    alpha0_prev: &DirichletParams,
    alpha1_prev: &DirichletParams,
    lambda: f64,
    cfg: &StepConfig,
    rel_tol: f64,
    state: &mut PositionState,
) -> Result<MStepOutcome> {
    let n = log.n();
    let k = log.k();
    if state.base.len() != n * k || state.window.len() != n * k {
        return Err(Error::invalid("position state does not match the log"));
    }
    let mut objective = PositionObjective::new(log, window, mask, lambda, alpha0_prev, alpha1_prev)?;
    for (i, &member) in mask.iter().enumerate() {
        if !member {
            // Window positions of non-members track their baseline, so a
            // vertex that joins later starts from where it already sits.
            let copy = state.base[i * k..(i + 1) * k].to_vec();
            state.window[i * k..(i + 1) * k].copy_from_slice(&copy);
        }
    }
    let mut a0 = alpha0_prev.alpha().to_vec();
    let mut a1 = alpha1_prev.alpha().to_vec();
    let mut value = objective.value(state);
    for _ in 0..cfg.max_sweeps {
        objective.sweep(state, cfg);
        let (f0, f1) = objective.refit_laws(state);
        if let Some(f) = f0 {
            a0 = f;
        }
        if let Some(f) = f1 {
            a1 = f;
        }
        objective.set_laws(&a0, &a1);
        let next = objective.value(state);
        let change = (next - value).abs();
        value = next;
        if change < rel_tol * (1.0 + value.abs()) {
            break;
        }
    }
    let stats = stats_for_mask(log, window, mask, lambda);
    let [_, g1, g2] = stats.exposure;
    let update1 = g1 > 0.0 || g2 > 0.0;
    let total0: f64 = a0.iter().sum();
    let total1: f64 = a1.iter().sum();
    let start0: Vec<f64> = a0[..k].iter().map(|a| a / total0).collect();
    let start1: Vec<f64> =
        if update1 { a1[..k].iter().map(|a| a / total1).collect() } else { alpha1_prev.latent_mean() };
    let (m0, m1) = polish_means(&stats, &start0, &start1, update1);
    let before = loglik_unattributed_means(&stats, &alpha0_prev.latent_mean(), &alpha1_prev.latent_mean());
    let after = loglik_unattributed_means(&stats, &m0, &m1);
    if !(after >= before) {
        return Ok(MStepOutcome {
            alpha0: alpha0_prev.clone(),
            alpha1: alpha1_prev.clone(),
            route: UpdateRoute::Unchanged,
            alpha1_skipped: !update1,
        });
    }
    Ok(MStepOutcome {
        alpha0: DirichletParams::from_latent_mean(&m0, total0)?,
        alpha1: if update1 { DirichletParams::from_latent_mean(&m1, total1)? } else { alpha1_prev.clone() },
        route: UpdateRoute::BlockAscent,
        alpha1_skipped: !update1,
    })
}

/// As [`mstep_unattributed_warm`], seeding positions from the
/// least-squares fit of the whole log.
#[allow(clippy::too_many_arguments)]
pub fn mstep_unattributed(
    log: &EventLog,
    window: &ChangeWindow,
    subset: &crate::model::VertexSubset,
    alpha0_prev: &DirichletParams,
    alpha1_prev: &DirichletParams,
    lambda: f64,
    cfg: &StepConfig,
    rel_tol: f64,
) -> Result<MStepOutcome> {
    let mut state = PositionState::from_log(log, lambda)?;
    mstep_unattributed_warm(log, window, subset.mask(), alpha0_prev, alpha1_prev, lambda, cfg, rel_tol, &mut state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdgeEvent, Mode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> EventLog {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let events: Vec<EdgeEvent> = (0..40)
            .map(|_| {
                let u = rng.random_range(0..6);
                let mut v = rng.random_range(0..6);
                while v == u {
                    v = rng.random_range(0..6);
                }
                EdgeEvent { t: rng.random::<f64>() * 10.0, u, v, attr: None }
            })
            .collect();
        EventLog::new(events, 6, 10.0, 2, Mode::Unattributed).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PositionState {
        let mut draw = || {
            let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.45)).collect();
            simplex::project(&mut v, 0.05, 0.95);
            v
        };
        let base: Vec<f64> = (0..n).flat_map(|_| draw()).collect();
        let window: Vec<f64> = (0..n).flat_map(|_| draw()).collect();
        PositionState { k, base, window }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let log = toy();
        let window = ChangeWindow::new(3.0, 7.0).unwrap();
        let mask = vec![true, false, true, false, false, false];
        let a0 = DirichletParams::new(vec![2.0, 3.0, 1.5]).unwrap();
        let a1 = DirichletParams::new(vec![1.2, 0.8, 2.0]).unwrap();
        let obj = PositionObjective::new(&log, &window, &mask, 4.0, &a0, &a1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = random_state(&mut rng, 6, 2);
        let (gx, gy) = obj.gradient(&state);
        let h = 1e-6;
        for (is_window, grad) in [(false, &gx), (true, &gy)] {
            for idx in 0..12 {
                if is_window && !mask[idx / 2] {
                    assert_eq!(grad[idx], 0.0);
                    continue;
                }
                let mut plus = state.clone();
                let mut minus = state.clone();
                let (p, m) =
                    if is_window { (&mut plus.window, &mut minus.window) } else { (&mut plus.base, &mut minus.base) };
                p[idx] += h;
                m[idx] -= h;
                let fd = (obj.value(&plus) - obj.value(&minus)) / (2.0 * h);
                assert!((fd - grad[idx]).abs() <= 1e-4 * fd.abs().max(1.0), "{is_window} {idx}: {fd} vs {}", grad[idx]);
            }
        }
    }

    #[test]
    fn sweeps_increase_objective() {
        let log = toy();
        let window = ChangeWindow::new(3.0, 7.0).unwrap();
        let mask = vec![true, false, true, false, false, false];
        let a = DirichletParams::new(vec![2.0, 2.0, 2.0]).unwrap();
        let obj = PositionObjective::new(&log, &window, &mask, 4.0, &a, &a).unwrap();
        let mut state = PositionState::uniform(6, 2, 0.3);
        let mut last = obj.value(&state);
        for _ in 0..5 {
            obj.sweep(&mut state, &StepConfig::default());
            let v = obj.value(&state);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn empty_log_moves_positions_toward_origin() {
        let log = EventLog::new(vec![], 5, 10.0, 2, Mode::Unattributed).unwrap();
        let window = ChangeWindow::new(0.0, 0.0).unwrap();
        let mask = vec![false; 5];
        let a = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        let obj = PositionObjective::new(&log, &window, &mask, 50.0, &a, &a).unwrap();
        let mut state = PositionState::uniform(5, 2, 0.3);
        let mut norm = f64::INFINITY;
        for _ in 0..10 {
            obj.sweep(&mut state, &StepConfig::default());
            let now: f64 = state.base.iter().map(|v| v * v).sum();
            assert!(now <= norm);
            norm = now;
        }
        assert!(norm < 5.0 * 2.0 * 0.09);
    }

    #[test]
    fn mstep_does_not_lower_likelihood() {
        let log = toy();
        let window = ChangeWindow::new(3.0, 7.0).unwrap();
        let subset = crate::model::VertexSubset::new(&[0, 2], 6).unwrap();
        let a0 = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        let a1 = DirichletParams::new(vec![3.0, 1.0, 1.0]).unwrap();
        let stats = stats_for_mask(&log, &window, subset.mask(), 8.0);
        let before = loglik_unattributed_means(&stats, &a0.latent_mean(), &a1.latent_mean());
        let out = mstep_unattributed(&log, &window, &subset, &a0, &a1, 8.0, &StepConfig::default(), 1e-6).unwrap();
        let after = loglik_unattributed_means(&stats, &out.alpha0.latent_mean(), &out.alpha1.latent_mean());
        assert!(after >= before - 1e-9, "{after} < {before}");
    }
}
