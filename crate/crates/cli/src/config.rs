//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mlpf_core::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Gbm {
        s0: f64,
        /// Carried along unchanged; GBM ignores it.
        #[serde(default)]
        v0: f64,
        rate: f64,
        sigma: f64,
    },
    LangevinSv {
        s0: f64,
        v0: f64,
        rate: f64,
        sigma: f64,
        beta: f64,
        t_dof: f64,
    },
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Gbm { .. } => "gbm",
            ModelConfig::LangevinSv { .. } => "langevin_sv",
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            ModelConfig::Gbm { rate, .. } | ModelConfig::LangevinSv { rate, .. } => *rate,
        }
    }

    pub fn initial(&self) -> State {
        match self {
            ModelConfig::Gbm { s0, v0, .. } | ModelConfig::LangevinSv { s0, v0, .. } => State::new(*s0, *v0),
        }
    }
}

/// A scalar applied to every monitoring date, or one value per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDate {
    Constant(f64),
    Each(Vec<f64>),
}

impl PerDate {
    pub fn expand(&self, dates: usize) -> Vec<f64> {
        match self {
            PerDate::Constant(v) => vec![*v; dates],
            PerDate::Each(v) => v.clone(),
        }
    }
}

fn default_rho() -> f64 {
    0.5
}

fn default_interval() -> f64 {
    1.0
}

fn default_lower() -> PerDate {
    PerDate::Constant(20.0)
}

fn default_upper() -> PerDate {
    PerDate::Constant(50.0)
}

fn default_gain_cap() -> f64 {
    100.0
}

fn default_loss_cap() -> f64 {
    60.0
}

fn default_notional() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptionConfig {
    Call {
        strike: f64,
        #[serde(default = "default_rho")]
        rho: f64,
        dates: usize,
        #[serde(default = "default_interval")]
        interval: f64,
    },
    Barrier {
        strike: f64,
        #[serde(default = "default_rho")]
        rho: f64,
        dates: usize,
        #[serde(default = "default_interval")]
        interval: f64,
        #[serde(default = "default_lower")]
        lower: PerDate,
        #[serde(default = "default_upper")]
        upper: PerDate,
    },
    Tarn {
        dates: usize,
        #[serde(default = "default_interval")]
        interval: f64,
        #[serde(default = "default_gain_cap")]
        gain_cap: f64,
        #[serde(default = "default_loss_cap")]
        loss_cap: f64,
        #[serde(default = "default_notional")]
        notional: f64,
    },
}

impl OptionConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptionConfig::Call { .. } => "call",
            OptionConfig::Barrier { .. } => "barrier",
            OptionConfig::Tarn { .. } => "tarn",
        }
    }

    pub fn dates(&self) -> usize {
        match self {
            OptionConfig::Call { dates, .. }
            | OptionConfig::Barrier { dates, .. }
            | OptionConfig::Tarn { dates, .. } => *dates,
        }
    }

    pub fn interval(&self) -> f64 {
        match self {
            OptionConfig::Call { interval, .. }
            | OptionConfig::Barrier { interval, .. }
            | OptionConfig::Tarn { interval, .. } => *interval,
        }
    }
}

fn default_reference_samples() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Fixed reference value; overrides every automatic choice.
    #[serde(default)]
    pub value: Option<f64>,
    /// Paths of the plain Monte Carlo oracle used when no closed form exists.
    #[serde(default = "default_reference_samples")]
    pub samples: usize,
    /// Level of the oracle; defaults to the finest level in the sweep.
    #[serde(default)]
    pub level: Option<u32>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            value: None,
            samples: default_reference_samples(),
            level: None,
        }
    }
}

fn default_pilot_particles() -> usize {
    200
}

fn default_pilot_runs() -> usize {
    100
}

/// Variance-optimal MLPF allocation from pilot runs, replacing the geometric
/// rule when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    #[serde(default = "default_pilot_particles")]
    pub particles: usize,
    #[serde(default = "default_pilot_runs")]
    pub runs: usize,
    /// Estimator variance the allocation is sized for.
    pub target_variance: f64,
}

fn default_repetitions() -> usize {
    50
}

fn default_ess() -> f64 {
    0.5
}

fn default_exponent() -> f64 {
    mlpf_core::mlpf::DEFAULT_ALLOCATION_EXPONENT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub methods: Vec<Method>,
    /// Level for `pf`/`mc`, finest level `L` for `mlpf`.
    pub levels: Vec<u32>,
    /// Particles (or paths) per estimate; `N_1` for `mlpf`.
    pub n1: usize,
    #[serde(default = "default_ess")]
    pub ess_threshold: f64,
    #[serde(default = "default_exponent")]
    pub allocation_exponent: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelConfig,
    pub option: OptionConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn policy(&self) -> mlpf_core::Result<EssPolicy> {
        EssPolicy::new(self.ess_threshold)
    }

    pub fn allocation(&self, max_level: u32) -> mlpf_core::Result<LevelAllocation> {
        LevelAllocation::geometric(max_level, self.n1, self.allocation_exponent)
    }

    pub fn model(&self) -> mlpf_core::Result<DiffusionModel> {
        Ok(match &self.model {
            ModelConfig::Gbm { rate, sigma, .. } => DiffusionModel::gbm(GbmParams::new(*rate, *sigma)?),
            ModelConfig::LangevinSv {
                rate,
                sigma,
                beta,
                t_dof,
                ..
            } => DiffusionModel::langevin_sv(LangevinSvParams::new(*rate, *sigma, *beta, *t_dof)?),
        })
    }

    pub fn payoff(&self) -> mlpf_core::Result<PayoffSpec> {
        let rate = self.model.rate();
        let maturity = self.option.dates() as f64 * self.option.interval();
        Ok(match &self.option {
            OptionConfig::Call { strike, rho, dates, .. } => {
                PayoffSpec::call(EuropeanCallSpec::new(*strike, rate, maturity, *rho, *dates)?)
            }
            OptionConfig::Barrier {
                strike,
                rho,
                dates,
                lower,
                upper,
                ..
            } => PayoffSpec::barrier(BarrierSpec::new(
                *strike,
                rate,
                maturity,
                *rho,
                lower.expand(*dates),
                upper.expand(*dates),
            )?),
            OptionConfig::Tarn {
                dates,
                interval,
                gain_cap,
                loss_cap,
                notional,
            } => PayoffSpec::tarn(TarnSpec::new(*gain_cap, *loss_cap, *dates, rate, *interval, *notional)?),
        })
    }

    pub fn problem(&self) -> mlpf_core::Result<PricingProblem> {
        PricingProblem::new(
            self.model()?,
            self.model.initial(),
            self.payoff()?,
            self.option.interval(),
        )
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every constraint the config violates; empty iff it is runnable.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut fail = |field: &str, message: &str| {
        out.push(Diagnostic {
            field: field.to_string(),
            message: message.to_string(),
        })
    };
    let positive = |v: f64| v > 0.0 && v.is_finite();

    if config.repetitions == 0 {
        fail("repetitions", "repetitions must be at least 1");
    }
    if config.methods.is_empty() {
        fail("methods", "at least one method is required");
    }
    if config.levels.is_empty() {
        fail("levels", "at least one level is required");
    }
    if config.levels.iter().any(|&l| l == 0 || l > 20) {
        fail("levels", "levels must lie in 1..=20");
    }
    if config.n1 < 2 {
        fail("n1", "n1 must be at least 2");
    }
    if !(config.ess_threshold > 0.0 && config.ess_threshold <= 1.0) {
        fail("ess_threshold", "ess_threshold must lie in (0,1]");
    }
    if !(config.allocation_exponent >= 0.0 && config.allocation_exponent.is_finite()) {
        fail("allocation_exponent", "allocation_exponent must be nonnegative");
    }
    if let Some(p) = &config.pilot {
        if p.particles < 2 {
            fail("pilot.particles", "pilot.particles must be at least 2");
        }
        if p.runs < 2 {
            fail("pilot.runs", "pilot.runs must be at least 2");
        }
        if !(p.target_variance > 0.0 && p.target_variance.is_finite()) {
            fail("pilot.target_variance", "pilot.target_variance must be positive");
        }
    }
    if config.reference.samples < 10_000 && config.reference.value.is_none() {
        fail("reference.samples", "reference.samples must be at least 10000");
    }
    if let Some(l) = config.reference.level {
        if l == 0 || l > 20 {
            fail("reference.level", "reference.level must lie in 1..=20");
        }
    }

    match &config.model {
        ModelConfig::Gbm { s0, v0, rate, sigma } => {
            if !positive(*s0) {
                fail("model.s0", "s0 must be positive");
            }
            if !v0.is_finite() {
                fail("model.v0", "v0 must be finite");
            }
            if !rate.is_finite() {
                fail("model.rate", "rate must be finite");
            }
            if !positive(*sigma) {
                fail("model.sigma", "sigma must be positive");
            }
        }
        ModelConfig::LangevinSv {
            s0,
            v0,
            rate,
            sigma,
            beta,
            t_dof,
        } => {
            if !positive(*s0) {
                fail("model.s0", "s0 must be positive");
            }
            if !v0.is_finite() {
                fail("model.v0", "v0 must be finite");
            }
            if !rate.is_finite() {
                fail("model.rate", "rate must be finite");
            }
            if !positive(*sigma) {
                fail("model.sigma", "sigma must be positive");
            }
            if !positive(*beta) {
                fail("model.beta", "beta must be positive");
            }
            if !positive(*t_dof) {
                fail("model.t_dof", "t_dof must be positive");
            }
        }
    }

    let dates = config.option.dates();
    if dates == 0 {
        fail("option.dates", "dates must be at least 1");
    }
    if !positive(config.option.interval()) {
        fail("option.interval", "interval must be positive");
    }
    match &config.option {
        OptionConfig::Call { strike, rho, .. } => {
            if !positive(*strike) {
                fail("option.strike", "strike must be positive");
            }
            if !(*rho > 0.0 && *rho < 1.0) {
                fail("option.rho", "rho must lie in (0,1)");
            }
        }
        OptionConfig::Barrier {
            strike,
            rho,
            lower,
            upper,
            ..
        } => {
            if !positive(*strike) {
                fail("option.strike", "strike must be positive");
            }
            if !(*rho > 0.0 && *rho < 1.0) {
                fail("option.rho", "rho must lie in (0,1)");
            }
            let (lo, up) = (lower.expand(dates), upper.expand(dates));
            if lo.len() != dates || up.len() != dates {
                fail(
                    "option.lower/upper",
                    "barrier lists must have one entry per monitoring date",
                );
            } else if lo.iter().zip(&up).any(|(l, u)| !(l < u)) {
                fail(
                    "option.lower/upper",
                    "lower barrier must be below upper barrier on every date",
                );
            }
        }
        OptionConfig::Tarn {
            gain_cap,
            loss_cap,
            notional,
            ..
        } => {
            if !positive(*gain_cap) {
                fail("option.gain_cap", "gain_cap must be positive");
            }
            if !positive(*loss_cap) {
                fail("option.loss_cap", "loss_cap must be positive");
            }
            if !positive(*notional) {
                fail("option.notional", "notional must be positive");
            }
        }
    }
    out
}
