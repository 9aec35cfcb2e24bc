//! Diffusion coefficients for the price/volatility SDE pair
//!
//! ```text
//! dS = α(S) dt + β(S, V) dW
//! dV = γ(V) dt + ν(V) dB
//! ```
//!
//! with independent Brownian motions `W` and `B`. Two concrete models are
//! provided: geometric Brownian motion with constant volatility, and a GBM
//! price whose volatility follows a Langevin diffusion targeting a Student-t
//! density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point of the discretized chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub price: f64,
    pub vol: f64,
}

impl State {
    pub fn new(price: f64, vol: f64) -> Self {
        State { price, vol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub rate: f64,
    pub sigma: f64,
}

impl GbmParams {
    pub fn new(rate: f64, sigma: f64) -> Result<Self> {
        if !rate.is_finite() {
            return Err(Error::invalid("rate", "must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        Ok(GbmParams { rate, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinSvParams {
    pub rate: f64,
    /// Scale `σ` in the price diffusion `σ V S`.
    pub sigma_scale: f64,
    /// Volatility diffusion coefficient `β`.
    pub beta_scale: f64,
    /// Degrees of freedom of the Student-t density targeted by `V`.
    pub t_dof: f64,
}

impl LangevinSvParams {
    pub fn new(rate: f64, sigma_scale: f64, beta_scale: f64, t_dof: f64) -> Result<Self> {
        if !rate.is_finite() {
            return Err(Error::invalid("rate", "must be finite"));
        }
        for (name, v) in [
            ("sigma_scale", sigma_scale),
            ("beta_scale", beta_scale),
            ("t_dof", t_dof),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        Ok(LangevinSvParams {
            rate,
            sigma_scale,
            beta_scale,
            t_dof,
        })
    }
}

/// Gradient of the log-density of a standard Student-t with `dof` degrees of freedom.
#[inline]
pub fn grad_log_student_t(v: f64, dof: f64) -> f64 {
    -(dof + 1.0) * v / (dof + v * v)
}

/// Coefficient functions `(α, β, γ, ν)` of the SDE pair.
///
/// Constant-volatility GBM has `γ ≡ ν ≡ 0`, so the volatility coordinate
/// stays at its initial value and one simulator serves both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiffusionModel {
    Gbm(GbmParams),
    LangevinSv(LangevinSvParams),
}

impl DiffusionModel {
    pub fn gbm(params: GbmParams) -> Self {
        DiffusionModel::Gbm(params)
    }

    pub fn langevin_sv(params: LangevinSvParams) -> Self {
        DiffusionModel::LangevinSv(params)
    }

    pub fn rate(&self) -> f64 {
        match self {
            DiffusionModel::Gbm(p) => p.rate,
            DiffusionModel::LangevinSv(p) => p.rate,
        }
    }

    /// Price drift `α`.
    #[inline]
    pub fn drift_s(&self, x: &State) -> f64 {
        self.rate() * x.price
    }

    /// Price diffusion `β ≥ 0`. For the Langevin model `V` may be negative,
    /// so the magnitude `|σ v s|` is used.
    #[inline]
    pub fn diff_s(&self, x: &State) -> f64 {
        match self {
            DiffusionModel::Gbm(p) => (p.sigma * x.price).abs(),
            DiffusionModel::LangevinSv(p) => (p.sigma_scale * x.vol * x.price).abs(),
        }
    }

    /// Volatility drift `γ`.
    #[inline]
    pub fn drift_v(&self, v: f64) -> f64 {
        match self {
            DiffusionModel::Gbm(_) => 0.0,
            DiffusionModel::LangevinSv(p) => 0.5 * grad_log_student_t(v, p.t_dof),
        }
    }

    /// Volatility diffusion `ν ≥ 0`.
    #[inline]
    pub fn diff_v(&self, _v: f64) -> f64 {
        match self {
            DiffusionModel::Gbm(_) => 0.0,
            DiffusionModel::LangevinSv(p) => p.beta_scale,
        }
    }

    /// Whether the volatility coordinate moves at all. When it does not, the
    /// simulators skip drawing the `B` increments.
    #[inline]
    pub fn has_vol_dynamics(&self) -> bool {
        matches!(self, DiffusionModel::LangevinSv(_))
    }
}
