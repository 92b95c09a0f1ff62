//! The JSON run configuration shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wdistortion::distortion::{Backend, Multipliers};
use wdistortion::synthesis::{EarlyStop, Init, Optimizer, PoiParams};
use wdistortion::{StackSpec, SynthesisConfig};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds initial noise and point-of-interest draws.
    pub seed: u64,
    pub backend: Backend,
    pub stack: StackSpec,
    pub multipliers: Option<Multipliers>,
    pub poi: PoiSection,
    pub synthesis: SynthesisSection,
    pub sigma_map: SigmaMapSection,
    pub pairwise: PairwiseSection,
    pub progression: ProgressionSection,
    pub limits: LimitsSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backend: Backend::Diag,
            stack: StackSpec::default(),
            multipliers: None,
            poi: PoiSection::default(),
            synthesis: SynthesisSection::default(),
            sigma_map: SigmaMapSection::default(),
            pairwise: PairwiseSection::default(),
            progression: ProgressionSection::default(),
            limits: LimitsSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoiSection {
    pub n_random: usize,
    pub n_sets: usize,
}

impl Default for PoiSection {
    fn default() -> Self {
        let p = PoiParams::default();
        Self {
            n_random: p.n_random,
            n_sets: p.n_sets,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub max_iterations: usize,
    pub optimizer: Optimizer,
    pub lbfgs_memory: usize,
    pub early_stop: EarlyStop,
    pub grad_tol: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let d = SynthesisConfig::default();
        Self {
            max_iterations: d.max_iterations,
            optimizer: d.optimizer,
            lbfgs_memory: d.lbfgs_memory,
            early_stop: d.early_stop,
            grad_tol: d.grad_tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaMapSection {
    pub threshold: f64,
    /// Width at the pixel farthest from the salient set; `None` uses the image width.
    pub edge_sigma: Option<f64>,
}

impl Default for SigmaMapSection {
    fn default() -> Self {
        Self {
            threshold: wdistortion::sigma_map::DEFAULT_SALIENCY_THRESHOLD,
            edge_sigma: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairwiseSection {
    pub sigma: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for PairwiseSection {
    fn default() -> Self {
        Self {
            sigma: 4000.0,
            grid_rows: 3,
            grid_cols: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgressionSection {
    pub sigmas: Vec<f64>,
}

impl Default for ProgressionSection {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 1.0, 4.0, 16.0, 64.0],
        }
    }
}

/// Which PMF family the axiom suite examines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfFamily {
    #[default]
    TwoSidedGeometric,
    /// Deliberately broken: all mass moved off negative offsets. Exercises the failure path.
    Asymmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub pmf: PmfFamily,
    pub axiom_sigmas: Vec<f64>,
    pub axiom_max_offset: usize,
    pub fidelity_sigmas: Vec<f64>,
    pub fidelity_tol: f64,
    pub realism_sigmas: Vec<f64>,
    pub realism_tol: f64,
    pub iid_tol: f64,
    pub cesaro_sigma: f64,
    pub cesaro_tol: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self {
            pmf: PmfFamily::TwoSidedGeometric,
            axiom_sigmas: vec![0.0, 0.01, 0.1, 1.0, 10.0, 1e4],
            axiom_max_offset: 100_000,
            fidelity_sigmas: vec![1.0, 0.3, 0.1, 0.03, 0.01, 0.0],
            fidelity_tol: 1e-3,
            realism_sigmas: vec![1.0, 10.0, 100.0, 1e3, 1e4],
            realism_tol: 1e-2,
            iid_tol: 2e-2,
            cesaro_sigma: 1e4,
            cesaro_tol: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Image sides; `N = side^2`.
    pub sides: Vec<usize>,
    pub depth: usize,
    pub backends: Vec<String>,
    /// Pooling width shared by every backend.
    pub sigma: f64,
    pub grid: usize,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            sides: vec![64],
            depth: 128,
            backends: vec!["diag".into(), "sliced".into()],
            sigma: 16.0,
            grid: 2,
            repeats: 3,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.to_owned(),
            source,
        })
    }

    pub fn multipliers(&self) -> Multipliers {
        self.multipliers
            .clone()
            .unwrap_or_else(|| Multipliers::standard(self.stack.num_layers))
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        let s = &self.synthesis;
        SynthesisConfig {
            max_iterations: s.max_iterations,
            optimizer: s.optimizer,
            lbfgs_memory: s.lbfgs_memory,
            early_stop: s.early_stop,
            grad_tol: s.grad_tol,
            init: Init::UniformNoise { seed: self.seed },
            backend: self.backend,
            multipliers: Some(self.multipliers()),
            poi: PoiParams {
                n_random: self.poi.n_random,
                n_sets: self.poi.n_sets,
                seed: self.seed,
            },
            stack: self.stack.clone(),
        }
    }
}
