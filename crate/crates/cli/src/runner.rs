//! Sweep execution and CSV output.

use std::io::Write;
use std::time::Instant;

use anyhow::{anyhow, Result};
use mlpf_core::prelude::*;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ModelConfig, OptionConfig};

const REFERENCE_TAG: u64 = 0x5245_4645_5245_4e43;
const PILOT_TAG: u64 = 0x0050_494c_4f54;

/// Reference value the MSE is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub value: f64,
    pub source: String,
}

/// Black–Scholes for a call on GBM, the configured value if any, otherwise a
/// plain Monte Carlo oracle at the finest level of the sweep.
pub fn reference(config: &ExperimentConfig, problem: &PricingProblem) -> Result<Reference> {
    if let Some(value) = config.reference.value {
        return Ok(Reference {
            value,
            source: "config".into(),
        });
    }
    if let (
        ModelConfig::Gbm { s0, rate, sigma, .. },
        OptionConfig::Call {
            strike,
            dates,
            interval,
            ..
        },
    ) = (&config.model, &config.option)
    {
        let maturity = *dates as f64 * interval;
        return Ok(Reference {
            value: black_scholes_call(*s0, *strike, *rate, *sigma, maturity),
            source: "black_scholes".into(),
        });
    }
    let level = config
        .reference
        .level
        .or_else(|| config.levels.iter().copied().max())
        .ok_or_else(|| anyhow!("levels: at least one level is required"))?;
    let key = StreamKey::new(config.seed).derive(REFERENCE_TAG);
    let mc = mc_oracle(problem, level, config.reference.samples, &key).map_err(|e| anyhow!("reference oracle: {e}"))?;
    Ok(Reference {
        value: mc.mean,
        source: format!(
            "mc_oracle:level={level}:n={}:se={}",
            config.reference.samples, mc.std_error
        ),
    })
}

fn method_tag(method: Method) -> u64 {
    match method {
        Method::Pf => 1,
        Method::Mlpf => 2,
        Method::Mc => 3,
    }
}

/// Stream key of repetition `rep` of cell `(method, level)`.
pub fn repetition_key(seed: u64, method: Method, level: u32, rep: usize) -> StreamKey {
    StreamKey::new(seed)
        .derive(method_tag(method))
        .derive(level as u64)
        .derive(rep as u64)
}

/// Pilot variances up to the finest swept level when the config asks for a
/// variance-optimal MLPF allocation.
pub fn pilot(config: &ExperimentConfig, problem: &PricingProblem) -> Result<Option<LevelPilot>> {
    let (Some(p), true) = (&config.pilot, config.methods.contains(&Method::Mlpf)) else {
        return Ok(None);
    };
    let max_level = config.levels.iter().copied().max().unwrap_or(1);
    let key = StreamKey::new(config.seed).derive(PILOT_TAG);
    pilot_levels(problem, max_level, p.particles, p.runs, &config.policy()?, &key)
        .map(Some)
        .map_err(|e| anyhow!("pilot: {e}"))
}

/// MLPF particle counts for finest level `level`.
pub fn allocation(
    config: &ExperimentConfig,
    pilot: Option<&LevelPilot>,
    level: u32,
) -> mlpf_core::Result<LevelAllocation> {
    match (pilot, &config.pilot) {
        (Some(p), Some(c)) => {
            let l = level as usize;
            LevelAllocation::optimal(&p.variances[..l], &p.costs[..l], c.target_variance)
        }
        _ => config.allocation(level),
    }
}

/// One estimate and its cost.
pub fn estimate_once(
    config: &ExperimentConfig,
    problem: &PricingProblem,
    method: Method,
    level: u32,
    alloc: Option<&LevelAllocation>,
    key: &StreamKey,
) -> mlpf_core::Result<(f64, u64)> {
    let policy = config.policy()?;
    match method {
        Method::Pf => run_pf(problem, level, config.n1, &policy, key).map(|r| (r.estimate, r.cost)),
        Method::Mlpf => {
            let owned;
            let alloc = match alloc {
                Some(a) => a,
                None => {
                    owned = config.allocation(level)?;
                    &owned
                }
            };
            mlpf_estimate(problem, alloc, &policy, key).map(|r| (r.total, r.cost))
        }
        Method::Mc => mc_oracle(problem, level, config.n1, key).map(|r| (r.mean, r.cost)),
    }
}

/// All repetitions of one sweep cell. Repetitions run in parallel; results
/// are collected in repetition order.
pub fn run_cell(
    config: &ExperimentConfig,
    problem: &PricingProblem,
    method: Method,
    level: u32,
    pilot: Option<&LevelPilot>,
    reference: f64,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    let alloc = match method {
        Method::Mlpf => Some(allocation(config, pilot, level).map_err(|e| anyhow!("mlpf level {level}: {e}"))?),
        _ => None,
    };
    let runs: Vec<(f64, u64)> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let key = repetition_key(config.seed, method, level, rep);
            estimate_once(config, problem, method, level, alloc.as_ref(), &key)
                .map_err(|e| anyhow!("{method} level {level}, repetition {rep}: {e}"))
        })
        .collect::<Result<_>>()?;
    let (estimates, costs) = runs.into_iter().unzip();
    let mut result = summarize(method, estimates, costs, reference)?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: Method,
    pub option: &'static str,
    pub model: &'static str,
    pub k: usize,
    pub level_or_l: u32,
    pub n1: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub estimate_mean: f64,
    pub estimate_std: f64,
    pub mse: f64,
    /// Euler steps of one estimate (mean over repetitions).
    pub cost_steps: u64,
    pub wall_seconds: f64,
    pub reference: f64,
    pub reference_source: String,
}

pub const CSV_HEADER: [&str; 15] = [
    "method",
    "option",
    "model",
    "k",
    "level_or_L",
    "N1",
    "repetitions",
    "seed",
    "estimate_mean",
    "estimate_std",
    "mse",
    "cost_steps",
    "wall_seconds",
    "reference",
    "reference_source",
];

impl Row {
    pub fn new(config: &ExperimentConfig, level: u32, result: &ExperimentResult, reference: &Reference) -> Self {
        Row {
            method: result.method,
            option: config.option.name(),
            model: config.model.name(),
            k: config.option.dates(),
            level_or_l: level,
            n1: config.n1,
            repetitions: result.repetitions(),
            seed: config.seed,
            estimate_mean: result.mean(),
            estimate_std: result.std_dev(),
            mse: result.mse,
            cost_steps: result.total_cost() / result.repetitions() as u64,
            wall_seconds: result.wall_time,
            reference: reference.value,
            reference_source: reference.source.clone(),
        }
    }

    fn fields(&self) -> [String; 15] {
        [
            self.method.to_string(),
            self.option.to_string(),
            self.model.to_string(),
            self.k.to_string(),
            self.level_or_l.to_string(),
            self.n1.to_string(),
            self.repetitions.to_string(),
            self.seed.to_string(),
            self.estimate_mean.to_string(),
            self.estimate_std.to_string(),
            self.mse.to_string(),
            self.cost_steps.to_string(),
            self.wall_seconds.to_string(),
            self.reference.to_string(),
            self.reference_source.clone(),
        ]
    }
}

/// Runs every `(method, level)` cell, methods outermost.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<Row>> {
    let problem = config.problem().map_err(|e| anyhow!("config: {e}"))?;
    let reference = reference(config, &problem)?;
    let pilot = pilot(config, &problem)?;
    let mut rows = Vec::new();
    for &method in &config.methods {
        for &level in &config.levels {
            let result = run_cell(config, &problem, method, level, pilot.as_ref(), reference.value)?;
            rows.push(Row::new(config, level, &result, &reference));
        }
    }
    Ok(rows)
}

/// Runs the sweep on a dedicated pool of `threads` workers (0 = rayon default).
pub fn run_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Vec<Row>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(|| run_sweep(config))
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}
