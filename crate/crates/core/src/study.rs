//! Monte Carlo power study over simulated scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{fit, fit_homogeneous, fix_lambda, EMConfig};
use crate::error::{Error, Result};
use crate::generator::{separation_angle, simulate, ScenarioConfig};
use crate::initializer::InitConfig;
use crate::selection::{compare, Decision};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Bin width for fixing lambda; `None` means one hundredth of the horizon.
    pub time_unit: Option<f64>,
    pub em: EMConfig,
    pub init: InitConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { replicates: 100, seed: 0, time_unit: None, em: EMConfig::default(), init: InitConfig::default() }
    }
}

/// What one simulated replicate produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub rejected: bool,
    pub delta_bic: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub cp_error: f64,
    pub edges_per_pair: f64,
}

/// Aggregated metrics for one scenario. Sensitivity, specificity and
/// change-point error average over rejecting replicates only and are NaN
/// when none rejected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMetrics {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub avg_edges_per_pair: f64,
    pub phi: f64,
    pub power: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub cp_error: f64,
    pub replicates: usize,
    pub failures: usize,
}

/// Data and fitting seeds for replicate `rep` of scenario `index`, taken
/// from a dedicated ChaCha stream so they do not depend on scheduling.
pub fn replicate_seeds(master: u64, index: usize, rep: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((index as u64) << 32) | rep as u64);
    (rng.random(), rng.random())
}

/// Simulates one dataset, fits both models and scores the decision
/// against the planted truth.
pub fn run_replicate(
    config: &ScenarioConfig,
    study: &StudyConfig,
    data_seed: u64,
    fit_seed: u64,
) -> Result<ReplicateOutcome> {
    let config = ScenarioConfig { seed: data_seed, ..config.clone() };
    let log = simulate(&config)?;
    let unit = study.time_unit.unwrap_or(config.horizon / 100.0);
    let lambda = fix_lambda(&log, unit)?;
    let hom = fit_homogeneous(&log, lambda, &study.em)?;
    let mut rng = ChaCha8Rng::seed_from_u64(fit_seed);
    let het = fit(&log, lambda, &study.em, &study.init, None, &mut rng)?;
    let cmp = compare(log.k(), log.len(), hom.loglik, het.loglik);

    let truth = config.subset()?;
    let found = &het.model.subset;
    let hits = truth.members().iter().filter(|&&v| found.contains(v)).count();
    let rejections = (0..config.n).filter(|&v| !truth.contains(v) && !found.contains(v)).count();
    let w = het.model.window;
    Ok(ReplicateOutcome {
        rejected: cmp.decision == Decision::Heterogeneous,
        delta_bic: cmp.delta(),
        sensitivity: hits as f64 / truth.len() as f64,
        specificity: rejections as f64 / (config.n - truth.len()) as f64,
        cp_error: ((w.start - config.window.start).abs() + (w.end - config.window.end).abs()) / 2.0,
        edges_per_pair: log.edges_per_pair(),
    })
}

/// Folds replicate outcomes into the scenario row; errors count as
/// failures and are excluded from every average.
pub fn aggregate(config: &ScenarioConfig, outcomes: &[Result<ReplicateOutcome>]) -> StudyMetrics {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    };
    let rejecting: Vec<&&ReplicateOutcome> = ok.iter().filter(|o| o.rejected).collect();
    StudyMetrics {
        scenario: config.name.clone(),
        n: config.n,
        m: config.subset.len(),
        lambda: config.lambda,
        avg_edges_per_pair: mean(&mut ok.iter().map(|o| o.edges_per_pair)),
        phi: separation_angle(&config.alpha0, &config.alpha1),
        power: mean(&mut ok.iter().map(|o| f64::from(u8::from(o.rejected)))),
        sensitivity: mean(&mut rejecting.iter().map(|o| o.sensitivity)),
        specificity: mean(&mut rejecting.iter().map(|o| o.specificity)),
        cp_error: mean(&mut rejecting.iter().map(|o| o.cp_error)),
        replicates: outcomes.len(),
        failures: outcomes.len() - ok.len(),
    }
}

/// Runs every replicate of every scenario in parallel. Results are
/// independent of thread count.
pub fn run_study(scenarios: &[ScenarioConfig], study: &StudyConfig) -> Result<Vec<StudyMetrics>> {
    if study.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    for s in scenarios {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..scenarios.len()).flat_map(|i| (0..study.replicates).map(move |r| (i, r))).collect();
    let outcomes: Vec<Result<ReplicateOutcome>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (data_seed, fit_seed) = replicate_seeds(study.seed, i, r);
            let out = run_replicate(&scenarios[i], study, data_seed, fit_seed);
            if let Err(e) = &out {
                log::warn!("scenario {} replicate {r} failed: {e}", scenarios[i].name);
            }
            out
        })
        .collect();
    Ok(outcomes.chunks(study.replicates).zip(scenarios).map(|(chunk, config)| aggregate(config, chunk)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{scenario, Separation};

    fn outcome(rejected: bool, sens: f64, spec: f64, cp: f64) -> Result<ReplicateOutcome> {
        Ok(ReplicateOutcome {
            rejected,
            delta_bic: 0.0,
            sensitivity: sens,
            specificity: spec,
            cp_error: cp,
            edges_per_pair: 2.0,
        })
    }

    #[test]
    fn metrics_use_rejecting_replicates_only() {
        let config = scenario(Separation::Large, 50, 2.0);
        let rows = [
            outcome(true, 1.0, 0.9, 2.0),
            outcome(false, 0.0, 0.0, 50.0),
            outcome(true, 0.5, 0.7, 4.0),
            Err(Error::Numerical("boom".into())),
        ];
        let m = aggregate(&config, &rows);
        assert!((m.power - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.sensitivity - 0.75).abs() < 1e-12);
        assert!((m.specificity - 0.8).abs() < 1e-12);
        assert!((m.cp_error - 3.0).abs() < 1e-12);
        assert_eq!((m.replicates, m.failures), (4, 1));
    }

    #[test]
    fn single_replicate_metrics_are_its_values() {
        let config = scenario(Separation::Large, 50, 2.0);
        let m = aggregate(&config, &[outcome(true, 0.9, 0.8, 1.5)]);
        assert_eq!((m.power, m.sensitivity, m.specificity, m.cp_error), (1.0, 0.9, 0.8, 1.5));
    }

    #[test]
    fn no_rejections_leave_conditional_metrics_undefined() {
        let config = scenario(Separation::Null, 50, 2.0);
        let m = aggregate(&config, &[outcome(false, 1.0, 1.0, 0.0)]);
        assert_eq!(m.power, 0.0);
        assert!(m.sensitivity.is_nan() && m.cp_error.is_nan());
    }

    #[test]
    fn seeds_are_distinct_per_replicate() {
        let a = replicate_seeds(7, 0, 0);
        assert_eq!(a, replicate_seeds(7, 0, 0));
        assert_ne!(a, replicate_seeds(7, 0, 1));
        assert_ne!(a, replicate_seeds(7, 1, 0));
        assert_ne!(a, replicate_seeds(8, 0, 0));
    }

    #[test]
    fn study_is_reproducible() {
        let mut config = scenario(Separation::Large, 20, 2.0);
        config.subset = (0..5).collect();
        let study = StudyConfig {
            replicates: 2,
            seed: 3,
            em: EMConfig { num_candidates: 200, max_iters: 5, ..EMConfig::default() },
            ..StudyConfig::default()
        };
        let a = run_study(std::slice::from_ref(&config), &study).unwrap();
        let b = run_study(std::slice::from_ref(&config), &study).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a[0].replicates, 2);
    }
}
