//! Reference values and error summaries: the Black–Scholes call price, a
//! plain Monte Carlo oracle at a fixed level, and MSE-versus-cost reduction
//! of repeated estimator runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::discretization::simulate_segment;
use crate::error::{Error, Result};
use crate::problem::PricingProblem;
use crate::rng::StreamKey;

/// Closed-form European call price.
pub fn black_scholes_call(s0: f64, strike: f64, rate: f64, sigma: f64, maturity: f64) -> f64 {
    let discounted_strike = strike * (-rate * maturity).exp();
    let vol = sigma * maturity.sqrt();
    if vol < 1e-12 {
        return (s0 - discounted_strike).max(0.0);
    }
    let n = Normal::standard();
    let d1 = ((s0 / strike).ln() + (rate + 0.5 * sigma * sigma) * maturity) / vol;
    let d2 = d1 - vol;
    s0 * n.cdf(d1) - discounted_strike * n.cdf(d2)
}

/// Running mean and variance (Welford). The mean is reported as the plain
/// in-order sum divided by the count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleStats {
    count: u64,
    sum: f64,
    welford_mean: f64,
    m2: f64,
}

impl SampleStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        let delta = x - self.welford_mean;
        self.welford_mean += delta / self.count as f64;
        self.m2 += delta * (x - self.welford_mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for SampleStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = SampleStats::default();
        for x in iter {
            s.push(x);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub cost: u64,
}

const MC_BATCH: usize = 1 << 15;

/// Plain Monte Carlo estimate of `E_l[g]`: `n` independent paths, no
/// potentials, no resampling. Path `i` draws from stream `i` of `key`, the
/// same stream particle `i` of a particle filter under `key` uses.
///
/// Paths are simulated in parallel batches but accumulated in index order,
/// so the result does not depend on the thread count.
pub fn mc_oracle(problem: &PricingProblem, level: u32, n: usize, key: &StreamKey) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::invalid("samples", "need at least one path"));
    }
    let lvl = problem.level(level)?;
    let path_value = |i: usize| -> Result<f64> {
        let mut rng = key.rng(i as u64);
        let mut x = problem.initial;
        let mut summary = problem.payoff.start();
        for step in 1..=problem.dates() {
            x = simulate_segment(x, &problem.model, lvl, problem.interval, &mut rng)
                .map_err(|e| e.at_step(step))?
                .0;
            problem.payoff.extend(&mut summary, x.price);
        }
        Ok(problem.payoff.summary_payoff(&summary))
    };
    let mut stats = SampleStats::default();
    for start in (0..n).step_by(MC_BATCH) {
        let end = (start + MC_BATCH).min(n);
        let values: Vec<f64> = (start..end)
            .into_par_iter()
            .with_min_len(256)
            .map(path_value)
            .collect::<Result<_>>()?;
        values.into_iter().for_each(|v| stats.push(v));
    }
    Ok(McEstimate {
        mean: stats.mean(),
        std_error: stats.std_error(),
        cost: n as u64 * problem.path_cost(level),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pf,
    Mlpf,
    Mc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pf => "pf",
            Method::Mlpf => "mlpf",
            Method::Mc => "mc",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pf" => Ok(Method::Pf),
            "mlpf" => Ok(Method::Mlpf),
            "mc" => Ok(Method::Mc),
            _ => Err(Error::invalid("method", format!("unknown method `{s}`"))),
        }
    }
}

/// Repeated runs of one estimator configuration against a reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub estimates: Vec<f64>,
    /// Euler steps per repetition.
    pub costs: Vec<u64>,
    pub reference: f64,
    pub mse: f64,
    pub wall_time: f64,
}

impl ExperimentResult {
    pub fn repetitions(&self) -> usize {
        self.estimates.len()
    }

    pub fn mean(&self) -> f64 {
        self.estimates.iter().sum::<f64>() / self.estimates.len() as f64
    }

    /// Sample standard deviation of the estimates.
    pub fn std_dev(&self) -> f64 {
        self.estimates
            .iter()
            .copied()
            .collect::<SampleStats>()
            .variance()
            .sqrt()
    }

    pub fn total_cost(&self) -> u64 {
        self.costs.iter().sum()
    }
}

/// MSE of `estimates` around `reference`; `wall_time` starts at zero.
pub fn summarize(method: Method, estimates: Vec<f64>, costs: Vec<u64>, reference: f64) -> Result<ExperimentResult> {
    if estimates.is_empty() {
        return Err(Error::EmptyWeights);
    }
    if estimates.len() != costs.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: costs.len(),
        });
    }
    let mse = estimates.iter().map(|e| (e - reference).powi(2)).sum::<f64>() / estimates.len() as f64;
    Ok(ExperimentResult {
        method,
        estimates,
        costs,
        reference,
        mse,
        wall_time: 0.0,
    })
}
