//! Event-stream simulation: a homogeneous Poisson stream of edge
//! opportunities over uniformly chosen vertex pairs, filtered through the
//! random dot product kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{class_rates, exposures};
use crate::model::{
    attribute_probs, dot_product, pairs, sample_latent, ChangeWindow, DirichletParams, EdgeEvent, EventLog, Mode,
    VertexSubset,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub horizon: f64,
    pub k: usize,
    /// Opportunity rate per time unit.
    pub lambda: f64,
    pub alpha0: DirichletParams,
    pub alpha1: DirichletParams,
    pub window: ChangeWindow,
    /// Zero-based ids of the anomalous vertices.
    pub subset: Vec<usize>,
    pub mode: Mode,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("scenario needs n >= 2"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("scenario horizon must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("scenario lambda must be positive"));
        }
        if self.alpha0.dim() != self.k || self.alpha1.dim() != self.k {
            return Err(Error::invalid(format!(
                "scenario Dirichlet parameters must have K + 1 = {} entries",
                self.k + 1
            )));
        }
        self.window.check_within(self.horizon)?;
        self.subset_mask()?;
        Ok(())
    }

    pub fn subset(&self) -> Result<VertexSubset> {
        VertexSubset::new(&self.subset, self.n)
    }

    fn subset_mask(&self) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.n];
        for &v in &self.subset {
            if v >= self.n {
                return Err(Error::invalid(format!("subset vertex {v} out of range")));
            }
            mask[v] = true;
        }
        if mask.iter().all(|&b| b) {
            return Err(Error::invalid("subset must be a proper subset of the vertices"));
        }
        Ok(mask)
    }

    /// Expected number of realized events.
    pub fn expected_edges(&self) -> f64 {
        let g = exposures(self.n, self.subset.len(), self.horizon, self.window.length(), self.lambda);
        let q = class_rates(&self.alpha0, &self.alpha1);
        (0..3).map(|j| g[j] * q[j]).sum()
    }

    pub fn expected_edges_per_pair(&self) -> f64 {
        self.expected_edges() / pairs(self.n)
    }

    /// Copy of this scenario with `lambda` chosen so the expected number of
    /// edges per pair equals `target`.
    pub fn with_edges_per_pair(&self, target: f64) -> Self {
        let per_unit_lambda = self.expected_edges_per_pair() / self.lambda;
        ScenarioConfig { lambda: target / per_unit_lambda, ..self.clone() }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// An edge opportunity: a time and an unordered vertex pair `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Opportunity {
    pub t: f64,
    pub u: usize,
    pub v: usize,
}

pub fn generate_opportunities<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Vec<Opportunity>> {
    config.validate()?;
    let mean = config.lambda * config.horizon;
    let count =
        Poisson::new(mean).map_err(|e| Error::invalid(format!("Poisson mean {mean}: {e}")))?.sample(rng) as usize;
    let mut times: Vec<f64> = (0..count)
        .map(|_| loop {
            let t = rng.random_range(0.0..config.horizon);
            if t > 0.0 {
                break t;
            }
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n = config.n;
    Ok(times
        .into_iter()
        .map(|t| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            Opportunity { t, u: a.min(b), v: a.max(b) }
        })
        .collect())
}

/// Samples both latent positions at each opportunity and keeps the
/// realized edges.
pub fn realize_events<R: Rng + ?Sized>(
    opportunities: &[Opportunity],
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<EventLog> {
    config.validate()?;
    let mask = config.subset_mask()?;
    let law = |vertex: usize, t: f64| {
        if mask[vertex] && config.window.contains(t) {
            &config.alpha1
        } else {
            &config.alpha0
        }
    };
    let mut events = Vec::new();
    for op in opportunities {
        let xu = sample_latent(law(op.u, op.t), rng);
        let xv = sample_latent(law(op.v, op.t), rng);
        let draw: f64 = rng.random();
        match config.mode {
            Mode::Unattributed => {
                if draw < dot_product(&xu, &xv)? {
                    events.push(EdgeEvent { t: op.t, u: op.u, v: op.v, attr: None });
                }
            }
            Mode::Attributed => {
                let probs = attribute_probs(&xu, &xv)?;
                // Walk attributes 1..=K; whatever is left over is "no edge".
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate().skip(1) {
                    acc += p;
                    if draw < acc {
                        events.push(EdgeEvent { t: op.t, u: op.u, v: op.v, attr: Some(k) });
                        break;
                    }
                }
            }
        }
    }
    EventLog::new(events, config.n, config.horizon, config.k, config.mode)
}

/// Full simulation seeded from `config.seed`.
pub fn simulate(config: &ScenarioConfig) -> Result<EventLog> {
    let mut rng = config.rng();
    let ops = generate_opportunities(config, &mut rng)?;
    realize_events(&ops, config, &mut rng)
}

/// Angle between the latent mean vectors of two laws, in radians.
pub fn separation_angle(a: &DirichletParams, b: &DirichletParams) -> f64 {
    let ma = a.latent_mean();
    let mb = b.latent_mean();
    let dot: f64 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
    let na = ma.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = mb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Separation {
    Null,
    Small,
    Medium,
    Large,
}

impl Separation {
    pub fn name(self) -> &'static str {
        match self {
            Separation::Null => "null",
            Separation::Small => "small",
            Separation::Medium => "medium",
            Separation::Large => "large",
        }
    }

    /// Baseline and anomalous concentrations for `K = 2`. The anomalous law
    /// rotates the latent mean away from the baseline mean `(0.6, 0.1)`.
    /// These are approximations: only their ordering by angle is meaningful.
    pub fn alphas(self) -> (DirichletParams, DirichletParams) {
        let base = vec![6.0, 1.0, 3.0];
        let anomalous = match self {
            Separation::Null => base.clone(),
            Separation::Small => vec![4.0, 3.0, 3.0],
            Separation::Medium => vec![2.5, 4.5, 3.0],
            Separation::Large => vec![1.0, 6.0, 3.0],
        };
        (DirichletParams::new(base).expect("valid"), DirichletParams::new(anomalous).expect("valid"))
    }
}

pub const SIM_HORIZON: f64 = 100.0;
pub const SIM_WINDOW: (f64, f64) = (30.0, 70.0);
pub const SIM_SUBSET_SIZE: usize = 10;
pub const SIM_EDGES_PER_PAIR: [f64; 4] = [1.0, 2.0, 4.0, 6.0];

/// One scenario of the simulation protocol: `m = 10` anomalous vertices
/// (at most half the graph), a window covering 40% of `(0, 100)`, `K = 2`,
/// attributed edges.
pub fn scenario(separation: Separation, n: usize, edges_per_pair: f64) -> ScenarioConfig {
    let (alpha0, alpha1) = separation.alphas();
    let template = ScenarioConfig {
        name: format!("{}-n{}-e{}", separation.name(), n, edges_per_pair),
        n,
        horizon: SIM_HORIZON,
        k: 2,
        lambda: 1.0,
        alpha0,
        alpha1,
        window: ChangeWindow { start: SIM_WINDOW.0, end: SIM_WINDOW.1 },
        subset: (0..SIM_SUBSET_SIZE.min(n / 2)).collect(),
        mode: Mode::Attributed,
        seed: 0,
    };
    template.with_edges_per_pair(edges_per_pair)
}

/// The three separation levels for `n` in `{50, 150}`, each swept over the
/// edges-per-pair grid.
pub fn protocol_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for n in [50, 150] {
        for sep in [Separation::Small, Separation::Medium, Separation::Large] {
            for e in SIM_EDGES_PER_PAIR {
                out.push(scenario(sep, n, e));
            }
        }
    }
    out
}
