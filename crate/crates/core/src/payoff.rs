//! Payoffs `g` and potential sequences `g̃_n` for European calls,
//! discretely monitored knock-out barrier calls and TARNs.
//!
//! Two evaluation routes exist. The free functions (`call_potential`,
//! `tarn_cashflow`, ...) work on explicit path prefixes. [`PathSummary`]
//! carries the running statistics the particle filters need, so a particle
//! never stores its full history. Tests check the two routes agree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every potential value.
pub const POTENTIAL_FLOOR: f64 = 1e-10;

#[inline]
fn floored(raw: f64) -> f64 {
    if raw.is_nan() {
        POTENTIAL_FLOOR
    } else {
        raw.max(POTENTIAL_FLOOR)
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be positive"))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("rho", "rho must lie in (0,1)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuropeanCallSpec {
    pub strike: f64,
    pub rate: f64,
    pub maturity: f64,
    pub rho: f64,
    /// Number of monitoring dates the potentials are evaluated on.
    pub dates: usize,
}

impl EuropeanCallSpec {
    pub fn new(strike: f64, rate: f64, maturity: f64, rho: f64, dates: usize) -> Result<Self> {
        check_positive("strike", strike)?;
        check_positive("maturity", maturity)?;
        check_rho(rho)?;
        if dates == 0 {
            return Err(Error::invalid("dates", "need at least one monitoring date"));
        }
        Ok(EuropeanCallSpec {
            strike,
            rate,
            maturity,
            rho,
            dates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub strike: f64,
    pub rate: f64,
    pub maturity: f64,
    pub rho: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BarrierSpec {
    pub fn new(strike: f64, rate: f64, maturity: f64, rho: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_positive("strike", strike)?;
        check_positive("maturity", maturity)?;
        check_rho(rho)?;
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch {
                left: lower.len(),
                right: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("dates", "need at least one monitoring date"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("barrier", "lower barrier must be below upper barrier"));
        }
        Ok(BarrierSpec {
            strike,
            rate,
            maturity,
            rho,
            lower,
            upper,
        })
    }

    /// Same corridor `[lower, upper]` on every one of `dates` monitoring dates.
    pub fn constant(
        strike: f64,
        rate: f64,
        maturity: f64,
        rho: f64,
        dates: usize,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        Self::new(strike, rate, maturity, rho, vec![lower; dates], vec![upper; dates])
    }

    pub fn dates(&self) -> usize {
        self.lower.len()
    }

    #[inline]
    fn inside(&self, i: usize, s: f64) -> bool {
        self.lower[i] <= s && s <= self.upper[i]
    }
}

/// The three-branch coupon function
///
/// ```text
/// f(s) = 2(s - 60) + 5   for s > 60
///        2(30 - s) + 5   for s < 40
///        -5              for 40 <= s <= 60
/// ```
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePayout;

impl PiecewisePayout {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        if s > 60.0 {
            2.0 * (s - 60.0) + 5.0
        } else if s < 40.0 {
            2.0 * (30.0 - s) + 5.0
        } else {
            -5.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarnSpec {
    pub gain_cap: f64,
    pub loss_cap: f64,
    pub n_dates: usize,
    pub rate: f64,
    /// Time between coupon dates; coupon `i` is discounted with `exp(-r i interval)`.
    pub interval: f64,
    /// Notional of the note. Coupons from `payout` are absolute amounts and
    /// are not scaled by it.
    pub notional: f64,
    pub payout: PiecewisePayout,
}

impl TarnSpec {
    pub fn new(gain_cap: f64, loss_cap: f64, n_dates: usize, rate: f64, interval: f64, notional: f64) -> Result<Self> {
        check_positive("gain_cap", gain_cap)?;
        check_positive("loss_cap", loss_cap)?;
        check_positive("interval", interval)?;
        check_positive("notional", notional)?;
        if n_dates == 0 {
            return Err(Error::invalid("dates", "need at least one coupon date"));
        }
        Ok(TarnSpec {
            gain_cap,
            loss_cap,
            n_dates,
            rate,
            interval,
            notional,
            payout: PiecewisePayout,
        })
    }

    #[inline]
    fn discount(&self, i: usize) -> f64 {
        (-self.rate * self.interval * i as f64).exp()
    }
}

pub fn call_payoff(spec: &EuropeanCallSpec, s_k: f64) -> f64 {
    (-spec.rate * spec.maturity).exp() * (s_k - spec.strike).max(0.0)
}

/// `|s_n - K|^ρ`, floored. `prefix` holds at least `n` prices.
pub fn call_potential(spec: &EuropeanCallSpec, n: usize, prefix: &[f64]) -> f64 {
    floored((prefix[n - 1] - spec.strike).abs().powf(spec.rho))
}

/// Knock-out barrier call on the closed corridors `[L_i, U_i]`.
pub fn barrier_payoff(spec: &BarrierSpec, path: &[f64]) -> f64 {
    let k = spec.dates();
    if path[..k].iter().enumerate().any(|(i, &s)| !spec.inside(i, s)) {
        return 0.0;
    }
    (-spec.rate * spec.maturity).exp() * (path[k - 1] - spec.strike).max(0.0)
}

/// `|s_n - K|^ρ ∏_{i<=n} 1[L_i <= s_i <= U_i]`, floored.
pub fn barrier_potential(spec: &BarrierSpec, n: usize, prefix: &[f64]) -> f64 {
    let alive = prefix[..n].iter().enumerate().all(|(i, &s)| spec.inside(i, s));
    if alive {
        floored((prefix[n - 1] - spec.strike).abs().powf(spec.rho))
    } else {
        POTENTIAL_FLOOR
    }
}

pub fn tarn_f(spec: &TarnSpec, s: f64) -> f64 {
    spec.payout.eval(s)
}

/// Discounted TARN cash flow over the dates covered by `path` (a shorter path
/// gives the truncated cash flow). Coupon `i` is paid while both running
/// gains and losses stay strictly below their caps; the first coupon that
/// breaches a cap is not paid and nothing after it is.
pub fn tarn_cashflow(spec: &TarnSpec, path: &[f64]) -> f64 {
    let mut gains = 0.0;
    let mut losses = 0.0;
    let mut total = 0.0;
    for (i, &s) in path.iter().enumerate() {
        let f = spec.payout.eval(s);
        gains += f.max(0.0);
        losses += (-f).max(0.0);
        if gains < spec.gain_cap && losses < spec.loss_cap {
            total += spec.discount(i + 1) * f;
        } else {
            break;
        }
    }
    total
}

/// `max(floor, |truncated cash flow of s_1..s_n|)`.
pub fn tarn_potential(spec: &TarnSpec, n: usize, prefix: &[f64]) -> f64 {
    floored(tarn_cashflow(spec, &prefix[..n]).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Contract {
    Call(EuropeanCallSpec),
    Barrier(BarrierSpec),
    Tarn(TarnSpec),
}

/// Which potential sequence guides the particle filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PotentialKind {
    /// The contract's own potentials.
    #[default]
    Native,
    /// `g̃_n ≡ 1`: the particle filter degenerates to plain Monte Carlo.
    Unit,
}

/// Running statistics of a path prefix `s_1..s_n`, sufficient to evaluate
/// `g̃_n` and, at `n = k`, the payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub n: usize,
    pub last: f64,
    alive: bool,
    gains: f64,
    losses: f64,
    cashflow: f64,
    stopped: bool,
}

impl PathSummary {
    fn empty() -> Self {
        PathSummary {
            n: 0,
            last: f64::NAN,
            alive: true,
            gains: 0.0,
            losses: 0.0,
            cashflow: 0.0,
            stopped: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub contract: Contract,
    pub potential: PotentialKind,
}

impl PayoffSpec {
    pub fn new(contract: Contract) -> Self {
        PayoffSpec {
            contract,
            potential: PotentialKind::Native,
        }
    }

    pub fn call(spec: EuropeanCallSpec) -> Self {
        Self::new(Contract::Call(spec))
    }

    pub fn barrier(spec: BarrierSpec) -> Self {
        Self::new(Contract::Barrier(spec))
    }

    pub fn tarn(spec: TarnSpec) -> Self {
        Self::new(Contract::Tarn(spec))
    }

    pub fn with_unit_potential(mut self) -> Self {
        self.potential = PotentialKind::Unit;
        self
    }

    /// Number of monitoring dates `k`.
    pub fn dates(&self) -> usize {
        match &self.contract {
            Contract::Call(c) => c.dates,
            Contract::Barrier(b) => b.dates(),
            Contract::Tarn(t) => t.n_dates,
        }
    }

    /// `g(s_1..s_k)`.
    pub fn payoff(&self, path: &[f64]) -> f64 {
        match &self.contract {
            Contract::Call(c) => call_payoff(c, path[c.dates - 1]),
            Contract::Barrier(b) => barrier_payoff(b, path),
            Contract::Tarn(t) => tarn_cashflow(t, &path[..t.n_dates]),
        }
    }

    /// `g̃_n(s_1..s_n)`; `g̃_0 ≡ 1`.
    pub fn potential(&self, n: usize, prefix: &[f64]) -> f64 {
        if n == 0 || self.potential == PotentialKind::Unit {
            return 1.0;
        }
        match &self.contract {
            Contract::Call(c) => call_potential(c, n, prefix),
            Contract::Barrier(b) => barrier_potential(b, n, prefix),
            Contract::Tarn(t) => tarn_potential(t, n, prefix),
        }
    }

    pub fn start(&self) -> PathSummary {
        PathSummary::empty()
    }

    /// Appends `s_{n+1}` to the summarized prefix.
    #[inline]
    pub fn extend(&self, summary: &mut PathSummary, s: f64) {
        let i = summary.n;
        summary.n += 1;
        summary.last = s;
        match &self.contract {
            Contract::Call(_) => {}
            Contract::Barrier(b) => {
                summary.alive = summary.alive && b.inside(i, s);
            }
            Contract::Tarn(t) => {
                if !summary.stopped {
                    let f = t.payout.eval(s);
                    summary.gains += f.max(0.0);
                    summary.losses += (-f).max(0.0);
                    if summary.gains < t.gain_cap && summary.losses < t.loss_cap {
                        summary.cashflow += t.discount(i + 1) * f;
                    } else {
                        summary.stopped = true;
                    }
                }
            }
        }
    }

    /// `g̃_n` of the summarized prefix.
    #[inline]
    pub fn summary_potential(&self, summary: &PathSummary) -> f64 {
        if summary.n == 0 || self.potential == PotentialKind::Unit {
            return 1.0;
        }
        match &self.contract {
            Contract::Call(c) => floored((summary.last - c.strike).abs().powf(c.rho)),
            Contract::Barrier(b) => {
                if summary.alive {
                    floored((summary.last - b.strike).abs().powf(b.rho))
                } else {
                    POTENTIAL_FLOOR
                }
            }
            Contract::Tarn(_) => floored(summary.cashflow.abs()),
        }
    }

    /// Payoff of a summarized full path (`n = k`).
    #[inline]
    pub fn summary_payoff(&self, summary: &PathSummary) -> f64 {
        match &self.contract {
            Contract::Call(c) => call_payoff(c, summary.last),
            Contract::Barrier(b) => {
                if summary.alive {
                    (-b.rate * b.maturity).exp() * (summary.last - b.strike).max(0.0)
                } else {
                    0.0
                }
            }
            Contract::Tarn(_) => summary.cashflow,
        }
    }
}
