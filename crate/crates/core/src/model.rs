//! Domain types shared by every stage of the pipeline, plus the dot-product
//! kernel that turns a pair of latent positions into edge probabilities.
//!
//! Latent positions live in the truncated simplex
//! `{x in R^K : x_k >= 0, sum x_k <= 1}`. They are the first `K` coordinates
//! of a `(K+1)`-dimensional Dirichlet draw; the last coordinate is implicit.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack accepted at simplex boundaries before clamping.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Attributed,
    Unattributed,
}

/// A point of the truncated `K`-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPosition(Vec<f64>);

impl LatentPosition {
    /// Validates and clamps `coords` into the simplex. Components down to
    /// `-1e-12` and sums up to `1 + 1e-12` are accepted and clamped.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("latent position must have at least one coordinate"));
        }
        let mut coords = coords;
        for c in coords.iter_mut() {
            if !c.is_finite() || *c < -SIMPLEX_TOLERANCE {
                return Err(Error::invalid(format!("latent coordinate {c} outside the simplex")));
            }
            *c = c.max(0.0);
        }
        let sum: f64 = coords.iter().sum();
        if sum > 1.0 + SIMPLEX_TOLERANCE {
            return Err(Error::invalid(format!("latent coordinates sum to {sum} > 1")));
        }
        if sum > 1.0 {
            coords.iter_mut().for_each(|c| *c /= sum);
        }
        Ok(LatentPosition(coords))
    }

    pub fn origin(k: usize) -> Self {
        LatentPosition(vec![0.0; k])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The implicit `(K+1)`st Dirichlet component.
    pub fn remainder(&self) -> f64 {
        (1.0 - self.0.iter().sum::<f64>()).max(0.0)
    }
}

/// Concentration vector `(alpha_1, ..., alpha_{K+1})` of a Dirichlet law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::invalid("Dirichlet parameters need K+1 >= 2 components"));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::invalid(format!("Dirichlet component {a} is not positive")));
        }
        Ok(DirichletParams(alpha))
    }

    /// Builds parameters whose first `K` mean components are `mean` and
    /// whose total concentration is `concentration`.
    pub fn from_latent_mean(mean: &[f64], concentration: f64) -> Result<Self> {
        let s: f64 = mean.iter().sum();
        let mut alpha: Vec<f64> = mean.iter().map(|m| m * concentration).collect();
        alpha.push((1.0 - s) * concentration);
        Self::new(alpha)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.0
    }

    /// Latent dimension `K` (one less than the number of components).
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `E[X]` for the truncated draw: the first `K` components of `alpha / total`.
    pub fn latent_mean(&self) -> Vec<f64> {
        let total = self.total();
        self.0[..self.dim()].iter().map(|a| a / total).collect()
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(p: DirichletParams) -> Self {
        p.0
    }
}

/// One observed edge. Vertex ids are zero-based indices; attributes are
/// one-based (`0` is reserved for "no edge" in the generative model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub t: f64,
    pub u: usize,
    pub v: usize,
    pub attr: Option<usize>,
}

/// Time-ordered record of observed edges over `(0, horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<EdgeEvent>,
    n: usize,
    horizon: f64,
    k: usize,
    mode: Mode,
}

impl EventLog {
    /// Validates the events and sorts them by time (stable, so equal times
    /// keep their input order). In unattributed mode attributes are dropped.
    pub fn new(mut events: Vec<EdgeEvent>, n: usize, horizon: f64, k: usize, mode: Mode) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("need at least two vertices"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon {horizon} must be positive")));
        }
        if k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        for (i, e) in events.iter_mut().enumerate() {
            if !(e.t.is_finite() && e.t >= 0.0 && e.t <= horizon) {
                return Err(Error::invalid(format!("event {i}: time {} outside [0, {horizon}]", e.t)));
            }
            if e.u >= n || e.v >= n {
                return Err(Error::invalid(format!("event {i}: vertex id out of range")));
            }
            if e.u == e.v {
                return Err(Error::invalid(format!("event {i}: self-loop on vertex {}", e.u)));
            }
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
            match mode {
                Mode::Unattributed => e.attr = None,
                Mode::Attributed => match e.attr {
                    Some(a) if (1..=k).contains(&a) => {}
                    Some(a) => return Err(Error::invalid(format!("event {i}: attribute {a} outside 1..={k}"))),
                    None => return Err(Error::invalid(format!("event {i}: missing attribute"))),
                },
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(EventLog { events, n, horizon, k, mode })
    }

    pub fn events(&self) -> &[EdgeEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Average observed edges per vertex pair, `N / C(n, 2)`.
    pub fn edges_per_pair(&self) -> f64 {
        self.len() as f64 / pairs(self.n)
    }
}

/// Change interval `(start, end]`. A zero-length window is allowed and
/// classifies no events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeWindow {
    pub start: f64,
    pub end: f64,
}

impl ChangeWindow {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start >= 0.0 && start <= end) {
            return Err(Error::invalid(format!("invalid window ({start}, {end})")));
        }
        Ok(ChangeWindow { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Half-open membership: `start < t <= end`.
    pub fn contains(&self, t: f64) -> bool {
        self.start < t && t <= self.end
    }

    pub fn check_within(&self, horizon: f64) -> Result<()> {
        if self.end > horizon {
            return Err(Error::invalid(format!(
                "window ({}, {}) extends past horizon {horizon}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Nonempty proper subset of the vertex set, stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VertexSubset {
    mask: Vec<bool>,
    size: usize,
}

impl VertexSubset {
    pub fn new(members: &[usize], n: usize) -> Result<Self> {
        let mut mask = vec![false; n];
        for &m in members {
            if m >= n {
                return Err(Error::invalid(format!("vertex {m} out of range for n = {n}")));
            }
            mask[m] = true;
        }
        Self::from_mask(mask)
    }

    pub fn from_mask(mask: Vec<bool>) -> Result<Self> {
        let size = mask.iter().filter(|&&b| b).count();
        if size == 0 || size == mask.len() {
            return Err(Error::invalid(format!(
                "subset of size {size} is not a nonempty proper subset of {} vertices",
                mask.len()
            )));
        }
        Ok(VertexSubset { mask, size })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, v: usize) -> bool {
        self.mask.get(v).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn members(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn complement(&self) -> Self {
        let mask: Vec<bool> = self.mask.iter().map(|b| !b).collect();
        VertexSubset { size: mask.len() - self.size, mask }
    }
}

impl Serialize for VertexSubset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.members().serialize(s)
    }
}

/// A fitted two-component model: everyone draws from `alpha0` except the
/// subset inside the window, which draws from `alpha1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionModel {
    pub alpha0: DirichletParams,
    pub alpha1: DirichletParams,
    pub window: ChangeWindow,
    pub subset: VertexSubset,
    pub lambda: f64,
}

impl PartitionModel {
    pub fn new(
        alpha0: DirichletParams,
        alpha1: DirichletParams,
        window: ChangeWindow,
        subset: VertexSubset,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!("lambda {lambda} must be positive")));
        }
        if alpha0.dim() != alpha1.dim() {
            return Err(Error::invalid("alpha0 and alpha1 differ in dimension"));
        }
        if window.length() <= 0.0 {
            return Err(Error::invalid("partition window must have positive length"));
        }
        Ok(PartitionModel { alpha0, alpha1, window, subset, lambda })
    }
}

/// `C(n, 2)` as a float.
pub fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

pub fn dot_product(x: &LatentPosition, y: &LatentPosition) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", x.dim(), y.dim())));
    }
    Ok(dot(x.coords(), y.coords()))
}

/// `(p_0, p_1, ..., p_K)`: probability of no edge followed by the
/// probability of an edge carrying each attribute.
pub fn attribute_probs(x: &LatentPosition, y: &LatentPosition) -> Result<Vec<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", x.dim(), y.dim())));
    }
    let mut probs = Vec::with_capacity(x.dim() + 1);
    probs.push(0.0);
    probs.extend(x.coords().iter().zip(y.coords()).map(|(a, b)| a * b));
    probs[0] = (1.0 - probs[1..].iter().sum::<f64>()).max(0.0);
    Ok(probs)
}

/// Draws a `(K+1)`-dimensional Dirichlet variate through normalized gamma
/// draws and keeps the first `K` components.
pub fn sample_latent<R: Rng + ?Sized>(params: &DirichletParams, rng: &mut R) -> LatentPosition {
    let mut draws: Vec<f64> =
        params.alpha().iter().map(|&a| Gamma::new(a, 1.0).expect("validated shape").sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        // Every shape underflowed; the law is concentrated on its largest component.
        let argmax = params.alpha().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        draws.iter_mut().enumerate().for_each(|(i, d)| *d = if i == argmax { 1.0 } else { 0.0 });
    }
    draws.pop();
    LatentPosition(draws)
}

/// `E[X_a . X_b]` for independent draws from the two laws.
pub fn expected_dot(a: &DirichletParams, b: &DirichletParams) -> f64 {
    dot(&a.latent_mean(), &b.latent_mean())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
