//! Run configuration: TOML parsing, validation, defaults.
//!
//! Every section falls back to the reference preset when omitted, so an
//! empty file reproduces the standard experiment setup. Unknown keys are
//! rejected. Syntax problems surface as [`Error::Parse`] with line
//! diagnostics; semantic problems as [`Error::Config`] with the field path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{CoefficientBounds, CoefficientFields, CoefficientSpec, ModelParams};
use crate::pde::{Grid, SolverOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub coefficients: CoefficientsSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub montecarlo: MonteCarloSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            coefficients: CoefficientsSection::default(),
            grid: GridSection::default(),
            solver: SolverSection::default(),
            montecarlo: MonteCarloSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub horizon: f64,
    pub impact_exponent: f64,
    pub risk_aversion: f64,
    pub penalty: f64,
    pub initial_inventory: f64,
    pub initial_price: f64,
    pub initial_cash: f64,
    pub initial_factor: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::reference();
        Self {
            horizon: p.horizon,
            impact_exponent: p.impact_exponent,
            risk_aversion: p.risk_aversion,
            penalty: p.penalty,
            initial_inventory: p.initial_inventory,
            initial_price: p.initial_price,
            initial_cash: p.initial_cash,
            initial_factor: p.initial_factor,
        }
    }
}

/// One catalog entry in the configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientEntry {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
    ClampedExp { scale: f64, lo: f64, hi: f64 },
    PowerOfKappa { scale: f64, exponent: f64 },
}

impl CoefficientEntry {
    fn to_spec(&self) -> CoefficientSpec {
        match *self {
            CoefficientEntry::Constant { value } => CoefficientSpec::Constant(value),
            CoefficientEntry::Affine { intercept, slope } => {
                CoefficientSpec::Affine { intercept, slope }
            }
            CoefficientEntry::ClampedExp { scale, lo, hi } => {
                CoefficientSpec::ClampedExp { scale, lo, hi }
            }
            CoefficientEntry::PowerOfKappa { scale, exponent } => {
                CoefficientSpec::PowerOfKappa { scale, exponent }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientsSection {
    pub kappa: CoefficientEntry,
    pub sigma: CoefficientEntry,
    pub alpha: CoefficientEntry,
    pub beta: CoefficientEntry,
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl Default for CoefficientsSection {
    fn default() -> Self {
        let f = CoefficientFields::reference();
        Self {
            kappa: CoefficientEntry::ClampedExp {
                scale: 0.5,
                lo: f.bounds.kappa_lo,
                hi: f.bounds.kappa_hi,
            },
            sigma: CoefficientEntry::PowerOfKappa {
                scale: 0.5,
                exponent: -0.5,
            },
            alpha: CoefficientEntry::Affine {
                intercept: 0.0,
                slope: -5.0,
            },
            beta: CoefficientEntry::Constant { value: 1.0 },
            kappa_lo: f.bounds.kappa_lo,
            kappa_hi: f.bounds.kappa_hi,
            sigma_lo: f.bounds.sigma_lo,
            sigma_hi: f.bounds.sigma_hi,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    pub nt: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            y_min: -5.0,
            y_max: 5.0,
            ny: 201,
            nt: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Bracket tolerance relative to the penalty: `epsilon0 = tolerance_rel * A`.
    pub tolerance_rel: f64,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tolerance_rel: 1e-6,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub n_paths: usize,
    pub master_seed: u64,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            master_seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Parameter varied by the `sweep` subcommand.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Penalty ladder for the `singular` subcommand.
    pub penalties: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            parameter: "risk_aversion".to_string(),
            values: vec![0.005, 0.05, 0.5],
            penalties: vec![3.0, 10.0, 30.0, 100.0, 300.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: "out".to_string(),
            formats: vec!["csv".to_string()],
        }
    }
}

impl RunConfig {
    /// Parse and validate a configuration file; an empty file yields the full
    /// reference preset.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    /// Parse and validate configuration text.
    pub fn from_toml(text: &str) -> Result<Self> {
        // Two-stage parse so syntax errors and semantic errors are told apart.
        let value: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let deserializer = toml::de::Deserializer::parse(text)
            .map_err(|e| Error::Parse(e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(deserializer).map_err(|e| {
            Error::config(format!("{}: {}", e.path(), e.inner().message()))
        })?;
        let _ = value;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        require(m.horizon.is_finite() && m.horizon > 0.0, "model.horizon", "must be positive")?;
        require(
            m.impact_exponent > 0.0 && m.impact_exponent <= 1.0,
            "model.impact_exponent",
            "must lie in (0, 1]",
        )?;
        require(
            m.risk_aversion.is_finite() && m.risk_aversion >= 0.0,
            "model.risk_aversion",
            "must be nonnegative",
        )?;
        require(
            m.penalty.is_finite() && m.penalty >= 0.0,
            "model.penalty",
            "must be nonnegative",
        )?;
        for (name, v) in [
            ("model.initial_inventory", m.initial_inventory),
            ("model.initial_price", m.initial_price),
            ("model.initial_cash", m.initial_cash),
            ("model.initial_factor", m.initial_factor),
        ] {
            require(v.is_finite(), name, "must be finite")?;
        }

        let c = &self.coefficients;
        require(
            matches!(c.kappa, CoefficientEntry::Constant { .. })
                || matches!(c.kappa, CoefficientEntry::Affine { .. })
                || matches!(c.kappa, CoefficientEntry::ClampedExp { .. }),
            "coefficients.kappa",
            "cannot be power_of_kappa",
        )?;
        require(c.kappa_lo > 0.0, "coefficients.kappa_lo", "must be positive")?;
        require(
            c.kappa_hi >= c.kappa_lo,
            "coefficients.kappa_hi",
            "must be at least kappa_lo",
        )?;
        require(c.sigma_lo >= 0.0, "coefficients.sigma_lo", "must be nonnegative")?;
        require(
            c.sigma_hi >= c.sigma_lo,
            "coefficients.sigma_hi",
            "must be at least sigma_lo",
        )?;

        let g = &self.grid;
        require(g.y_min < g.y_max, "grid.y_min", "must be below grid.y_max")?;
        require(g.ny >= 3, "grid.ny", "needs at least 3 nodes")?;
        require(g.nt >= 1, "grid.nt", "needs at least 1 step")?;

        require(
            self.solver.tolerance_rel > 0.0,
            "solver.tolerance_rel",
            "must be positive",
        )?;
        require(
            self.solver.max_iterations >= 1,
            "solver.max_iterations",
            "needs at least one iteration",
        )?;
        require(self.montecarlo.n_paths >= 1, "montecarlo.n_paths", "needs at least one path")?;

        crate::montecarlo::SweepParameter::parse(&self.sweep.parameter)
            .map_err(|e| Error::config(format!("sweep.parameter: {e}")))?;
        require(!self.sweep.values.is_empty(), "sweep.values", "must be non-empty")?;
        require(
            !self.sweep.penalties.is_empty(),
            "sweep.penalties",
            "must be non-empty",
        )?;
        require(
            self.sweep.penalties.windows(2).all(|w| w[1] > w[0]),
            "sweep.penalties",
            "must be strictly ascending",
        )?;
        require(
            self.sweep.penalties.iter().all(|p| *p > 0.0),
            "sweep.penalties",
            "must be positive",
        )?;
        for f in &self.output.formats {
            require(f == "csv", "output.formats", "only 'csv' is supported")?;
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.model.horizon,
            self.model.impact_exponent,
            self.model.risk_aversion,
            self.model.penalty,
            self.model.initial_inventory,
            self.model.initial_price,
            self.model.initial_cash,
            self.model.initial_factor,
        )
    }

    pub fn coefficient_fields(&self) -> Result<CoefficientFields> {
        let c = &self.coefficients;
        CoefficientFields::new(
            c.kappa.to_spec(),
            c.sigma.to_spec(),
            c.alpha.to_spec(),
            c.beta.to_spec(),
            CoefficientBounds::new(c.kappa_lo, c.kappa_hi, c.sigma_lo, c.sigma_hi)?,
        )
    }

    pub fn solve_grid(&self) -> Result<Grid> {
        Grid::new(
            self.grid.y_min,
            self.grid.y_max,
            self.grid.ny,
            self.grid.nt,
            self.model.horizon,
        )
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance_rel * self.model.penalty.max(f64::MIN_POSITIVE),
            max_iterations: self.solver.max_iterations,
            ..SolverOptions::for_penalty(self.model.penalty.max(f64::MIN_POSITIVE))
        }
    }
}

fn require(ok: bool, field: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!("{field}: {message}")))
    }
}
