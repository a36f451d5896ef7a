//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::Path;

use dynrdpg::em::EMConfig;
use dynrdpg::generator::{
    scenario, ScenarioConfig, Separation, SIM_EDGES_PER_PAIR, SIM_HORIZON, SIM_SUBSET_SIZE, SIM_WINDOW,
};
use dynrdpg::initializer::InitConfig;
use dynrdpg::selection::SelectionConfig;
use dynrdpg::{ChangeWindow, DirichletParams, Mode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SeparationName {
    Null,
    Small,
    Medium,
    Large,
}

impl From<SeparationName> for Separation {
    fn from(s: SeparationName) -> Self {
        match s {
            SeparationName::Null => Separation::Null,
            SeparationName::Small => Separation::Small,
            SeparationName::Medium => Separation::Medium,
            SeparationName::Large => Separation::Large,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub floor: usize,
    pub max_depth: usize,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let d = SelectionConfig::default();
        Self { floor: d.floor, max_depth: d.max_depth }
    }
}

/// Simulation settings. Named separations fix the Dirichlet parameters for
/// K = 2; explicit `alpha0`/`alpha1` replace them for any K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub separation: SeparationName,
    pub n: usize,
    pub subset_size: usize,
    pub horizon: f64,
    pub window: [f64; 2],
    pub edges_per_pair: f64,
    /// Opportunity rate; overrides `edges_per_pair` when set.
    pub lambda: Option<f64>,
    pub alpha0: Option<Vec<f64>>,
    pub alpha1: Option<Vec<f64>>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            separation: SeparationName::Large,
            n: 50,
            subset_size: SIM_SUBSET_SIZE,
            horizon: SIM_HORIZON,
            window: [SIM_WINDOW.0, SIM_WINDOW.1],
            edges_per_pair: 2.0,
            lambda: None,
            alpha0: None,
            alpha1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub replicates: usize,
    pub separations: Vec<SeparationName>,
    pub n: Vec<usize>,
    pub edges_per_pair: Vec<f64>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            replicates: 50,
            separations: vec![SeparationName::Small, SeparationName::Medium, SeparationName::Large],
            n: vec![50, 150],
            edges_per_pair: SIM_EDGES_PER_PAIR.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub k: usize,
    /// Bin width for fixing lambda; one hundredth of the horizon if unset.
    pub time_unit: Option<f64>,
    /// Observation horizon for ingested data; inferred if unset.
    pub horizon: Option<f64>,
    pub seed: u64,
    /// Worker threads; the rayon default if unset.
    pub threads: Option<usize>,
    pub em: EMConfig,
    pub init: InitConfig,
    pub selection: SelectionSection,
    pub simulate: SimulateSection,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Attributed,
            k: 2,
            time_unit: None,
            horizon: None,
            seed: 0,
            threads: None,
            em: EMConfig::default(),
            init: InitConfig::default(),
            selection: SelectionSection::default(),
            simulate: SimulateSection::default(),
            study: StudySection::default(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |e: dynrdpg::Error| config_error(e.to_string());
        if self.k == 0 {
            return Err(config_error("k must be at least 1"));
        }
        if let Some(u) = self.time_unit {
            if !(u.is_finite() && u > 0.0) {
                return Err(config_error("time_unit must be positive"));
            }
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(config_error("horizon must be positive"));
            }
        }
        if self.threads == Some(0) {
            return Err(config_error("threads must be at least 1"));
        }
        self.em.validate().map_err(wrap)?;
        self.init.validate().map_err(wrap)?;
        if self.study.replicates == 0 {
            return Err(config_error("study.replicates must be at least 1"));
        }
        Ok(())
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig { floor: self.selection.floor, max_depth: self.selection.max_depth, time_unit: self.time_unit }
    }

    /// The scenario described by the `[simulate]` section, with the run
    /// seed.
    pub fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        let s = &self.simulate;
        let wrap = |e: dynrdpg::Error| config_error(format!("simulate: {e}"));
        let (alpha0, alpha1) = match (&s.alpha0, &s.alpha1) {
            (Some(a0), Some(a1)) => {
                (DirichletParams::new(a0.clone()).map_err(wrap)?, DirichletParams::new(a1.clone()).map_err(wrap)?)
            }
            (None, None) => {
                if self.k != 2 {
                    return Err(config_error("named separations need k = 2; give alpha0 and alpha1 instead"));
                }
                Separation::from(s.separation).alphas()
            }
            _ => return Err(config_error("simulate: give both alpha0 and alpha1 or neither")),
        };
        if s.subset_size == 0 || s.subset_size >= s.n {
            return Err(config_error("simulate.subset_size must lie in 1..n"));
        }
        let name = match (&s.alpha0, s.lambda) {
            (None, None) => format!("{}-n{}-e{}", Separation::from(s.separation).name(), s.n, s.edges_per_pair),
            _ => "custom".to_string(),
        };
        let mut config = ScenarioConfig {
            name,
            n: s.n,
            horizon: s.horizon,
            k: self.k,
            lambda: 1.0,
            alpha0,
            alpha1,
            window: ChangeWindow { start: s.window[0], end: s.window[1] },
            subset: (0..s.subset_size).collect(),
            mode: self.mode,
            seed: self.seed,
        };
        config.validate().map_err(wrap)?;
        config = match s.lambda {
            Some(l) => ScenarioConfig { lambda: l, ..config },
            None => config.with_edges_per_pair(s.edges_per_pair),
        };
        config.validate().map_err(wrap)?;
        Ok(config)
    }

    /// The study grid: every separation, vertex count and density.
    pub fn study_scenarios(&self) -> Result<Vec<ScenarioConfig>, CliError> {
        if self.k != 2 {
            return Err(config_error("the study grid uses the named separations and needs k = 2"));
        }
        let mut out = Vec::new();
        for &n in &self.study.n {
            for &sep in &self.study.separations {
                for &e in &self.study.edges_per_pair {
                    if n <= SIM_SUBSET_SIZE {
                        return Err(config_error(format!(
                            "study.n = {n} must exceed the subset size {SIM_SUBSET_SIZE}"
                        )));
                    }
                    if !(e.is_finite() && e > 0.0) {
                        return Err(config_error("study.edges_per_pair entries must be positive"));
                    }
                    let mut s = scenario(sep.into(), n, e);
                    s.mode = self.mode;
                    out.push(s);
                }
            }
        }
        if out.is_empty() {
            return Err(config_error("the study grid is empty"));
        }
        Ok(out)
    }
}
