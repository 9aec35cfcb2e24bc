//! Euler discretization of the SDE pair at a single level, and the coupled
//! fine/coarse kernel in which the coarse chain is driven by sums of
//! consecutive fine Gaussian increments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, State};
use crate::rng::Noise;

/// Prices are floored here after every Euler step.
pub const PRICE_FLOOR: f64 = 1e-12;

/// Discretization level `l`: `2^l` Euler steps per monitoring interval.
///
/// With the default unit interval the step is `h_l = 2^-l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    index: u32,
    interval: f64,
}

impl Level {
    pub fn new(index: u32) -> Result<Self> {
        Self::with_interval(index, 1.0)
    }

    /// Level whose monitoring interval has physical length `interval`.
    pub fn with_interval(index: u32, interval: f64) -> Result<Self> {
        if index == 0 || index > 30 {
            return Err(Error::invalid("level", "index must lie in 1..=30"));
        }
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::invalid("interval", "must be positive"));
        }
        Ok(Level { index, interval })
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    /// Euler step size.
    pub fn step(&self) -> f64 {
        self.interval / self.steps_per_interval() as f64
    }

    pub fn steps_per_interval(&self) -> u64 {
        1u64 << self.index
    }

    /// The next coarser level, if any.
    pub fn coarser(&self) -> Option<Level> {
        (self.index > 1).then(|| Level {
            index: self.index - 1,
            interval: self.interval,
        })
    }

    /// Number of Euler steps covering `duration`.
    pub fn steps_for(&self, duration: f64) -> Result<u64> {
        let step = self.step();
        let n = duration / step;
        let rounded = n.round();
        if !(duration > 0.0) || rounded < 1.0 || (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::OffGrid { duration, step });
        }
        Ok(rounded as u64)
    }
}

/// Monitoring dates `t_i = i · interval`, `i = 1..=dates`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitoringGrid {
    pub dates: usize,
    pub interval: f64,
}

impl MonitoringGrid {
    pub fn new(dates: usize, interval: f64) -> Result<Self> {
        if dates == 0 {
            return Err(Error::invalid("dates", "need at least one monitoring date"));
        }
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::invalid("interval", "must be positive"));
        }
        Ok(MonitoringGrid { dates, interval })
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.interval
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.dates).map(|i| self.time(i)).collect()
    }

    pub fn maturity(&self) -> f64 {
        self.time(self.dates)
    }
}

/// One Euler step driven by explicit Brownian increments `dw`, `db`
/// (each of variance `h`).
#[inline]
pub fn euler_step_increments(x: &State, model: &DiffusionModel, h: f64, dw: f64, db: f64) -> Result<State> {
    let price = x.price + model.drift_s(x) * h + model.diff_s(x) * dw;
    let vol = x.vol + model.drift_v(x.vol) * h + model.diff_v(x.vol) * db;
    if !price.is_finite() || !vol.is_finite() {
        return Err(Error::NonFinite { what: "state", step: 0 });
    }
    Ok(State {
        price: price.max(PRICE_FLOOR),
        vol,
    })
}

/// One Euler step with standard normal draws `w` (for `W`) and `b` (for `B`).
#[inline]
pub fn euler_step(x: &State, model: &DiffusionModel, h: f64, w: f64, b: f64) -> Result<State> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", "step must be positive"));
    }
    let sq = h.sqrt();
    euler_step_increments(x, model, h, sq * w, sq * b)
}

#[inline]
fn draw_pair<N: Noise + ?Sized>(model: &DiffusionModel, noise: &mut N) -> (f64, f64) {
    let w = noise.standard_normal();
    let b = if model.has_vol_dynamics() {
        noise.standard_normal()
    } else {
        0.0
    };
    (w, b)
}

/// Simulates `duration` of time at `level` with fresh draws. Returns the
/// terminal state and the number of Euler steps taken.
pub fn simulate_segment<N: Noise + ?Sized>(
    x: State,
    model: &DiffusionModel,
    level: Level,
    duration: f64,
    noise: &mut N,
) -> Result<(State, u64)> {
    let steps = level.steps_for(duration)?;
    let h = level.step();
    let sq = h.sqrt();
    let mut cur = x;
    for _ in 0..steps {
        let (w, b) = draw_pair(model, noise);
        cur = euler_step_increments(&cur, model, h, sq * w, sq * b)?;
    }
    Ok((cur, steps))
}

/// Coupled fine/coarse simulation over `duration`. The fine chain runs at
/// `fine_level`; the coarse chain runs at the next coarser level and each of
/// its steps uses the increment `√h_fine · (Z_{2m} + Z_{2m+1})`, which has
/// the coarse variance `h_coarse`. Each marginal has the law of
/// [`simulate_segment`] at its own level.
///
/// Cost is fine steps plus coarse steps.
pub fn simulate_coupled_segment<N: Noise + ?Sized>(
    x_fine: State,
    x_coarse: State,
    model: &DiffusionModel,
    fine_level: Level,
    duration: f64,
    noise: &mut N,
) -> Result<((State, State), u64)> {
    let coarse_level = fine_level
        .coarser()
        .filter(|_| fine_level.index() >= 2)
        .ok_or_else(|| Error::invalid("level", "coupled kernel needs a fine level >= 2"))?;
    let coarse_steps = coarse_level.steps_for(duration)?;
    let hf = fine_level.step();
    let hc = coarse_level.step();
    let sq = hf.sqrt();
    let mut fine = x_fine;
    let mut coarse = x_coarse;
    for _ in 0..coarse_steps {
        let (w0, b0) = draw_pair(model, noise);
        let (w1, b1) = draw_pair(model, noise);
        fine = euler_step_increments(&fine, model, hf, sq * w0, sq * b0)?;
        fine = euler_step_increments(&fine, model, hf, sq * w1, sq * b1)?;
        coarse = euler_step_increments(&coarse, model, hc, sq * (w0 + w1), sq * (b0 + b1))?;
    }
    Ok(((fine, coarse), 3 * coarse_steps))
}

/// Both chains at the same level with the same draws. With equal inputs the
/// outputs are identical; used to check that the multilevel increment
/// estimator collapses to zero when the two kernels coincide.
pub fn simulate_synchronous_segment<N: Noise + ?Sized>(
    x_fine: State,
    x_coarse: State,
    model: &DiffusionModel,
    level: Level,
    duration: f64,
    noise: &mut N,
) -> Result<((State, State), u64)> {
    let steps = level.steps_for(duration)?;
    let h = level.step();
    let sq = h.sqrt();
    let mut fine = x_fine;
    let mut coarse = x_coarse;
    for _ in 0..steps {
        let (w, b) = draw_pair(model, noise);
        fine = euler_step_increments(&fine, model, h, sq * w, sq * b)?;
        coarse = euler_step_increments(&coarse, model, h, sq * w, sq * b)?;
    }
    Ok(((fine, coarse), 2 * steps))
}
