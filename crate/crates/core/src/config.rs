//! Experiment configuration: one JSON document, validated in full before
//! anything runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{build_game_model, GameParams};
use crate::model::{build_discrete_model, ModelParams};
use crate::nash::NashQConfig;
use crate::qlearn::LearnerConfig;
use crate::table::Format;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DtGrid {
    Explicit(Vec<f64>),
    /// `10^(start + k (stop - start) / (count - 1))` for `k = 0..count`.
    Log10 { start: f64, stop: f64, count: usize },
}

impl DtGrid {
    /// `10^{-1 - 2k/9}`, `k = 0..9`.
    pub fn standard() -> Self {
        DtGrid::Log10 {
            start: -1.0,
            stop: -3.0,
            count: 10,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            DtGrid::Explicit(v) => v.clone(),
            DtGrid::Log10 { start, stop, count } => {
                if *count == 1 {
                    return vec![10f64.powf(*start)];
                }
                (0..*count)
                    .map(|k| 10f64.powf(start + k as f64 * (stop - start) / (*count as f64 - 1.0)))
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let pts = self.points();
        if pts.is_empty() {
            return Err(Error::Config("dt grid is empty".into()));
        }
        if let Some(bad) = pts.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("dt grid entries must be positive, got {bad}")));
        }
        if pts.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("dt grid must be strictly decreasing".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub game_tol: f64,
    pub game_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 10_000_000,
            game_tol: 1e-10,
            game_max_iter: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    /// Sup-norm error that defines the sample complexity.
    pub threshold: f64,
    /// Fallback for grid points without their own preset.
    #[serde(default)]
    pub default: Option<LearnerConfig>,
    /// Keyed by the grid index, as a decimal string.
    #[serde(default)]
    pub presets: BTreeMap<String, LearnerConfig>,
}

impl LearnerSection {
    pub fn preset(&self, dt_index: usize) -> Result<&LearnerConfig> {
        self.presets
            .get(&dt_index.to_string())
            .or(self.default.as_ref())
            .ok_or_else(|| Error::Config(format!("no learner preset for dt index {dt_index} and no default")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashQSection {
    pub dt: f64,
    pub config: NashQConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub master: u64,
    pub labels: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub plot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelParams,
    pub game: GameParams,
    #[serde(default)]
    pub solver: SolverConfig,
    pub dt_grid: DtGrid,
    pub learner: LearnerSection,
    pub nash_q: NashQSection,
    pub seeds: SeedSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Every check that can fail without running an experiment. Errors are
    /// reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate().map_err(cfg_err)?;
        self.game.validate().map_err(cfg_err)?;
        self.game.intensity.build().map_err(cfg_err)?;
        self.dt_grid.validate()?;
        let s = &self.solver;
        if !(s.tol > 0.0 && s.game_tol > 0.0) || s.max_iter == 0 || s.game_max_iter == 0 {
            return Err(Error::Config("solver tolerances and iteration caps must be positive".into()));
        }
        if !(self.learner.threshold > 0.0) {
            return Err(Error::Config("learner threshold must be positive".into()));
        }
        let n = self.dt_grid.points().len();
        for (key, preset) in &self.learner.presets {
            let idx: usize = key
                .parse()
                .map_err(|_| Error::Config(format!("learner preset key '{key}' is not a grid index")))?;
            if idx >= n {
                return Err(Error::Config(format!("learner preset {idx} is outside the {n}-point grid")));
            }
            preset.validate().map_err(cfg_err)?;
        }
        if let Some(d) = &self.learner.default {
            d.validate().map_err(cfg_err)?;
        }
        for idx in 0..n {
            self.learner.preset(idx)?;
        }
        self.nash_q.config.validate().map_err(cfg_err)?;
        if self.seeds.labels.is_empty() {
            return Err(Error::Config("seed label list is empty".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("no output formats".into()));
        }
        for &dt in &self.dt_grid.points() {
            build_discrete_model(&self.model, dt).map_err(cfg_err)?;
            build_game_model(&self.game, dt).map_err(cfg_err)?;
        }
        build_game_model(&self.game, self.nash_q.dt).map_err(cfg_err)?;
        Ok(())
    }

    /// The tuned configuration shipped with the repository.
    pub fn baseline() -> Self {
        let preset = |omega: f64, epoch: u64, budget: u64| LearnerConfig {
            omega,
            q_init: 3.0,
            eps_floor: 1e-5,
            eps_rho0: 1.0,
            eps_rho: 0.5,
            eps_epoch: epoch,
            step_budget: budget,
            initial_state: None,
            checkpoint_every: None,
        };
        let budgets = [
            1_000_000u64,
            2_000_000,
            5_000_000,
            10_000_000,
            20_000_000,
            40_000_000,
            60_000_000,
            100_000_000,
            150_000_000,
            250_000_000,
        ];
        let presets = budgets
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let omega = if matches!(i, 1 | 2 | 5) { 0.501 } else { 0.5001 };
                (i.to_string(), preset(omega, 1000, b))
            })
            .collect();
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelParams::baseline(),
            game: GameParams::baseline(),
            solver: SolverConfig::default(),
            dt_grid: DtGrid::standard(),
            learner: LearnerSection {
                threshold: 0.1,
                default: None,
                presets,
            },
            nash_q: NashQSection {
                dt: 0.1,
                config: NashQConfig {
                    eta0: 0.5,
                    eta: 0.8,
                    beta_epoch: 10_000,
                    eps_floor: 0.5,
                    eps_rho0: 1.0,
                    eps_rho: 0.7,
                    eps_epoch: 10_000,
                    step_budget: 2_000_000,
                    q_init: 0.0,
                    init_from_reference: false,
                    rule: "standard".into(),
                    solver: "pure_first".into(),
                    initial_state: None,
                    checkpoint_every: None,
                },
            },
            seeds: SeedSection {
                master: 20_240_601,
                labels: vec![0, 1, 2, 3, 4],
            },
            output: OutputSection {
                dir: PathBuf::from("out"),
                formats: vec![OutputFormat::Csv],
                plot: false,
            },
        }
    }
}
