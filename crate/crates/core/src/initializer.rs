//! Starting values for the EM fit: time segmentation, least-squares latent
//! positions from an augmented multiadjacency matrix, and per-segment
//! two-way clustering of vertices into candidate subsets.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{fuzzy_cmeans2, kmeans2};
use crate::em::moment_estimates;
use crate::error::{Error, Result};
use crate::likelihood::{compute_stats, loglik_stats};
use crate::model::{pairs, ChangeWindow, DirichletParams, EventLog, LatentPosition, Mode, VertexSubset};
use crate::simplex;

/// Per-pair event counts over an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAdjacency {
    counts: DMatrix<f64>,
    interval: ChangeWindow,
}

impl MultiAdjacency {
    pub fn new(counts: DMatrix<f64>, interval: ChangeWindow) -> Result<Self> {
        if !counts.is_square() {
            return Err(Error::invalid("adjacency must be square"));
        }
        let n = counts.nrows();
        for i in 0..n {
            if counts[(i, i)] != 0.0 {
                return Err(Error::invalid("adjacency diagonal must be zero"));
            }
            for j in 0..i {
                if counts[(i, j)] != counts[(j, i)] {
                    return Err(Error::invalid(format!("adjacency not symmetric at ({i}, {j})")));
                }
                if counts[(i, j)] < 0.0 {
                    return Err(Error::invalid("adjacency counts must be nonnegative"));
                }
            }
        }
        Ok(Self { counts, interval })
    }

    /// Counts events with `interval.start < t <= interval.end`.
    pub fn from_log(log: &EventLog, interval: ChangeWindow) -> Self {
        let n = log.n();
        let mut counts = DMatrix::zeros(n, n);
        for e in log.events().iter().filter(|e| interval.contains(e.t)) {
            counts[(e.u, e.v)] += 1.0;
            counts[(e.v, e.u)] += 1.0;
        }
        Self { counts, interval }
    }

    pub fn counts(&self) -> &DMatrix<f64> {
        &self.counts
    }

    pub fn interval(&self) -> ChangeWindow {
        self.interval
    }

    pub fn total(&self) -> f64 {
        self.counts.sum() / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Number of equal time segments scanned for candidates.
    pub r: usize,
    pub kmeans_restarts: usize,
    /// Stopping tolerance for the diagonal completion.
    pub tolerance: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { r: 5, kmeans_restarts: 10, tolerance: 1e-8 }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::invalid("init.r must be at least 2"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("init.tolerance must be positive"));
        }
        Ok(())
    }
}

pub const MAX_DIAGONAL_ITERS: usize = 50;

/// Augmented matrix plus the per-iteration diagonal changes.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub matrix: DMatrix<f64>,
    pub deltas: Vec<f64>,
}

/// Top-`k` eigenpairs of a symmetric matrix, eigenvalues descending and
/// clamped at zero.
fn top_eigen(m: &DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().take(k).map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = order.iter().take(k).map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, vectors)
}

/// Fills the diagonal of `a` by rank-`k` completion: start from row sums
/// over `n - 1`, then repeatedly replace the diagonal with that of the
/// rank-`k` reconstruction. Off-diagonal entries are copied untouched.
pub fn augment_diagonal(a: &MultiAdjacency, k: usize, tolerance: f64) -> Result<Augmented> {
    let n = a.counts.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("latent dimension {k} must be in 1..={n}")));
    }
    let mut m = a.counts.clone();
    let denom = (n.max(2) - 1) as f64;
    for i in 0..n {
        m[(i, i)] = a.counts.row(i).sum() / denom;
    }
    let mut deltas = Vec::new();
    for _ in 0..MAX_DIAGONAL_ITERS {
        let (values, vectors) = top_eigen(&m, k);
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let d: f64 = values.iter().zip(&vectors).map(|(l, v)| l * v[i] * v[i]).sum();
            delta = delta.max((d - m[(i, i)]).abs());
            m[(i, i)] = d;
        }
        deltas.push(delta);
        if delta < tolerance {
            break;
        }
    }
    Ok(Augmented { matrix: m, deltas })
}

/// Squared Frobenius distance `||X^T X - M||^2` for positions `x` (rows).
fn gram_residual(x: &[Vec<f64>], m: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = crate::model::dot(&x[i], &x[j]) - m[(i, j)];
            total += r * r;
        }
    }
    total
}

fn rotate2(x: &[Vec<f64>], angle: f64, reflect: bool) -> Vec<Vec<f64>> {
    let (s, c) = angle.sin_cos();
    x.iter()
        .map(|p| {
            let y = if reflect { -p[1] } else { p[1] };
            vec![c * p[0] - s * y, s * p[0] + c * y]
        })
        .collect()
}

fn total_infeasibility(x: &[Vec<f64>]) -> f64 {
    x.iter().map(|p| simplex::infeasibility(p, 0.0, 1.0)).sum()
}

const POSITION_CAP: f64 = 1.0 - 1e-6;

/// Least-squares latent positions: minimizes `||b X^T X - A||_F^2` over
/// positions in the simplex. Starts from the scaled top-`k` eigenvectors of
/// `A / b`, orients them toward the simplex, projects, then refines by
/// projected gradient descent.
pub fn ls_positions(a_tilde: &DMatrix<f64>, b: f64, k: usize) -> Result<Vec<LatentPosition>> {
    let n = a_tilde.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("latent dimension {k} must be in 1..={n}")));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::invalid("scale b must be positive"));
    }
    let m = a_tilde / b;
    let (values, vectors) = top_eigen(&m, k);
    let mut x: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|c| values[c].sqrt() * vectors[c][i]).collect()).collect();
    for c in 0..k {
        if x.iter().map(|p| p[c]).sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|p| p[c] = -p[c]);
        }
    }
    if k == 2 {
        let steps = 720;
        let mut best = (total_infeasibility(&x), 0.0, false);
        for reflect in [false, true] {
            for s in 0..steps {
                let angle = std::f64::consts::TAU * s as f64 / steps as f64;
                let score = total_infeasibility(&rotate2(&x, angle, reflect));
                if score < best.0 - 1e-15 {
                    best = (score, angle, reflect);
                }
            }
        }
        x = rotate2(&x, best.1, best.2);
    }
    for p in x.iter_mut() {
        for v in p.iter_mut() {
            *v = v.max(0.0);
        }
        let s: f64 = p.iter().sum();
        if s > POSITION_CAP {
            p.iter_mut().for_each(|v| *v *= POSITION_CAP / s);
        }
    }
    refine(&mut x, &m);
    x.into_iter().map(LatentPosition::new).collect()
}

/// Projected gradient descent on `||X^T X - M||^2` with backtracking.
fn refine(x: &mut Vec<Vec<f64>>, m: &DMatrix<f64>) {
    let n = x.len();
    let k = x.first().map_or(0, Vec::len);
    let mut value = gram_residual(x, m);
    let mut step = 1.0 / (1.0 + m.abs().max());
    for _ in 0..300 {
        let mut grad = vec![vec![0.0; k]; n];
        for i in 0..n {
            for j in 0..n {
                let r = crate::model::dot(&x[i], &x[j]) - m[(i, j)];
                for c in 0..k {
                    grad[i][c] += 4.0 * r * x[j][c];
                }
            }
        }
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<Vec<f64>> = x
                .iter()
                .zip(&grad)
                .map(|(p, g)| {
                    let mut q: Vec<f64> = p.iter().zip(g).map(|(a, d)| a - step * d).collect();
                    simplex::project(&mut q, 0.0, POSITION_CAP);
                    q
                })
                .collect();
            let v = gram_residual(&trial, m);
            if v < value {
                let gain = value - v;
                *x = trial;
                value = v;
                improved = gain > 1e-14 * (1.0 + value);
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
}

/// Segment `j` (zero-based) of `r`: `(jT/r, (j+1)T/r]`.
pub fn segments(horizon: f64, r: usize) -> Vec<ChangeWindow> {
    (0..r)
        .map(|j| {
            // The last end is pinned so rounding never leaves the horizon.
            let end = if j + 1 == r { horizon } else { horizon * (j + 1) as f64 / r as f64 };
            ChangeWindow { start: horizon * j as f64 / r as f64, end }
        })
        .collect()
}

/// Index of the segment holding time `t`, clamped to `0..r`.
pub fn segment_index(t: f64, horizon: f64, r: usize) -> usize {
    let raw = (t * r as f64 / horizon).ceil() as i64 - 1;
    raw.clamp(0, r as i64 - 1) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub segment: usize,
    pub window: ChangeWindow,
    pub subset: VertexSubset,
}

/// Attribute-proportion vectors per vertex for events inside `interval`.
/// Vertices with no events get the zero vector.
fn attribute_profiles(log: &EventLog, interval: &ChangeWindow) -> Vec<Vec<f64>> {
    let k = log.k();
    let mut profiles = vec![vec![0.0; k]; log.n()];
    for e in log.events().iter().filter(|e| interval.contains(e.t)) {
        let a = e.attr.map_or(0, |a| a - 1);
        profiles[e.u][a] += 1.0;
        profiles[e.v][a] += 1.0;
    }
    for p in profiles.iter_mut() {
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter_mut().for_each(|v| *v /= s);
        }
    }
    profiles
}

fn smaller_cluster(labels: &[bool]) -> Option<VertexSubset> {
    let ones = labels.iter().filter(|&&l| l).count();
    let mask: Vec<bool> =
        if ones <= labels.len() - ones { labels.to_vec() } else { labels.iter().map(|l| !l).collect() };
    VertexSubset::from_mask(mask).ok()
}

/// One candidate per segment with events: the smaller of two vertex
/// clusters. Unattributed logs cluster least-squares positions by 2-means;
/// attributed logs cluster attribute proportions by fuzzy 2-means.
pub fn candidate_subsets<R: Rng + ?Sized>(
    log: &EventLog,
    cfg: &InitConfig,
    lambda: f64,
    rng: &mut R,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.r).map(|_| rng.random()).collect();
    let windows = segments(log.horizon(), cfg.r);
    let found: Vec<Result<Option<Candidate>>> = windows
        .par_iter()
        .zip(seeds.par_iter())
        .enumerate()
        .map(|(segment, (window, &seed))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<bool> = match log.mode() {
                Mode::Unattributed => {
                    let adjacency = MultiAdjacency::from_log(log, *window);
                    if adjacency.total() == 0.0 {
                        return Ok(None);
                    }
                    let k = log.k().min(log.n());
                    let augmented = augment_diagonal(&adjacency, k, cfg.tolerance)?;
                    let b = lambda * window.length() / pairs(log.n());
                    let positions = ls_positions(&augmented.matrix, b, k)?;
                    let points: Vec<Vec<f64>> = positions.iter().map(|p| p.coords().to_vec()).collect();
                    kmeans2(&points, cfg.kmeans_restarts, &mut rng).into_iter().map(|l| l == 1).collect()
                }
                Mode::Attributed => {
                    if !log.events().iter().any(|e| window.contains(e.t)) {
                        return Ok(None);
                    }
                    let profiles = attribute_profiles(log, window);
                    fuzzy_cmeans2(&profiles, cfg.kmeans_restarts, &mut rng).into_iter().map(|u| u > 0.5).collect()
                }
            };
            Ok(smaller_cluster(&labels).map(|subset| Candidate { segment, window: *window, subset }))
        })
        .collect();
    let mut out = Vec::new();
    for c in found {
        if let Some(c) = c? {
            out.push(c);
        }
    }
    Ok(out)
}

/// Starting configuration for EM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Start {
    pub window: ChangeWindow,
    pub subset: VertexSubset,
    pub alpha0: DirichletParams,
    pub alpha1: DirichletParams,
    pub loglik: f64,
    /// Index into the candidate list, `None` when the fallback was used.
    pub candidate: Option<usize>,
    pub fallback: bool,
}

/// Scores each candidate by its log-likelihood at moment-estimated
/// parameters and returns the best; ties go to the earliest candidate. With
/// no usable candidate, falls back to the middle half of the horizon and a
/// random tenth of the vertices.
pub fn best_start<R: Rng + ?Sized>(
    log: &EventLog,
    candidates: &[Candidate],
    lambda: f64,
    rng: &mut R,
) -> Result<Start> {
    let mut best: Option<Start> = None;
    for (i, c) in candidates.iter().enumerate() {
        let stats = compute_stats(log, &c.window, &c.subset, lambda)?;
        let (alpha0, alpha1) = moment_estimates(&stats, log.mode(), log.k())?;
        let ll = loglik_stats(log.mode(), &stats, &alpha0, &alpha1)?;
        if best.as_ref().is_none_or(|b| ll > b.loglik) {
            best = Some(Start {
                window: c.window,
                subset: c.subset.clone(),
                alpha0,
                alpha1,
                loglik: ll,
                candidate: Some(i),
                fallback: false,
            });
        }
    }
    if let Some(b) = best {
        return Ok(b);
    }
    let n = log.n();
    let horizon = log.horizon();
    let window = ChangeWindow::new(horizon / 4.0, 3.0 * horizon / 4.0)?;
    let m = (n / 10).clamp(1, n - 1);
    let members: Vec<usize> = sample(rng, n, m).into_iter().collect();
    let subset = VertexSubset::new(&members, n)?;
    let stats = compute_stats(log, &window, &subset, lambda)?;
    let (alpha0, alpha1) = moment_estimates(&stats, log.mode(), log.k())?;
    let loglik = loglik_stats(log.mode(), &stats, &alpha0, &alpha1)?;
    Ok(Start { window, subset, alpha0, alpha1, loglik, candidate: None, fallback: true })
}
