use serde::{Deserialize, Serialize};

use crate::discretization::Level;
use crate::error::{Error, Result};
use crate::model::{DiffusionModel, State};
use crate::payoff::PayoffSpec;

/// Everything an estimator needs: dynamics, starting point, contract and the
/// physical length of one monitoring interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingProblem {
    pub model: DiffusionModel,
    pub initial: State,
    pub payoff: PayoffSpec,
    pub interval: f64,
}

impl PricingProblem {
    pub fn new(model: DiffusionModel, initial: State, payoff: PayoffSpec, interval: f64) -> Result<Self> {
        if !(initial.price > 0.0 && initial.price.is_finite()) {
            return Err(Error::invalid("s0", "initial price must be positive"));
        }
        if !initial.vol.is_finite() {
            return Err(Error::invalid("v0", "must be finite"));
        }
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::invalid("interval", "must be positive"));
        }
        Ok(PricingProblem {
            model,
            initial,
            payoff,
            interval,
        })
    }

    /// Number of monitoring dates `k`.
    pub fn dates(&self) -> usize {
        self.payoff.dates()
    }

    pub fn level(&self, index: u32) -> Result<Level> {
        Level::with_interval(index, self.interval)
    }

    /// Euler steps one path costs at `level` over all `k` dates.
    pub fn path_cost(&self, level: u32) -> u64 {
        (1u64 << level) * self.dates() as u64
    }
}
