//! Single-level particle filter with potential-guided weights, adaptive
//! multinomial resampling and the unbiased product-form estimator of the
//! level-`l` option price.
//!
//! At step `n` every particle carries the raw weight accumulated since the
//! last resampling, a product of incremental ratios `g̃_n / g̃_{n-1}`. When
//! the effective sample size drops below the threshold the mean raw weight is
//! recorded, histories are resampled and weights reset to one. The estimator
//! at step `k` is
//!
//! ```text
//! (∏ recorded means) · (1/N) Σ_i W_i · g(X_i) / g̃_k(X_i)
//! ```
//!
//! which is unbiased for `E_l[g]`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{simulate_segment, Level};
use crate::error::{Error, Result};
use crate::model::State;
use crate::payoff::{PathSummary, PayoffSpec};
use crate::problem::PricingProblem;
use crate::rng::{Noise, StreamKey, RESAMPLE_STREAM};

/// Particle counts below this propagate on the calling thread.
const PAR_MIN_PARTICLES: usize = 256;

/// Effective sample size `(Σw)² / Σw²`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptyWeights);
    }
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(s, s2), w| (s + w, s2 + w * w));
    Ok(s * s / s2)
}

/// Resample when `ESS < threshold_fraction · N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssPolicy {
    threshold_fraction: f64,
}

impl EssPolicy {
    pub fn new(threshold_fraction: f64) -> Result<Self> {
        if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
            return Err(Error::invalid("ess_threshold", "must lie in (0,1]"));
        }
        Ok(EssPolicy { threshold_fraction })
    }

    /// Resampling at every step.
    pub fn always() -> Self {
        EssPolicy {
            threshold_fraction: 1.0,
        }
    }

    pub fn threshold_fraction(&self) -> f64 {
        self.threshold_fraction
    }

    pub fn should_resample(&self, ess: f64, n: usize) -> bool {
        ess < self.threshold_fraction * n as f64
    }
}

impl Default for EssPolicy {
    fn default() -> Self {
        EssPolicy {
            threshold_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: State,
    pub summary: PathSummary,
    /// Raw weight accumulated since the last resampling.
    pub weight: f64,
}

impl Particle {
    pub(crate) fn start(problem: &PricingProblem) -> Self {
        Particle {
            state: problem.initial,
            summary: problem.payoff.start(),
            weight: 1.0,
        }
    }

    /// Records the newly simulated state and multiplies in `g̃_n / g̃_{n-1}`.
    #[inline]
    pub(crate) fn observe(&mut self, payoff: &PayoffSpec, state: State) {
        let prev = payoff.summary_potential(&self.summary);
        self.state = state;
        payoff.extend(&mut self.summary, state.price);
        self.weight *= payoff.summary_potential(&self.summary) / prev;
    }

    #[inline]
    fn terminal_term(&self, payoff: &PayoffSpec) -> f64 {
        self.weight * (payoff.summary_payoff(&self.summary) / payoff.summary_potential(&self.summary))
    }
}

pub(crate) fn check_weights<'a>(weights: impl IntoIterator<Item = &'a f64>, step: usize) -> Result<()> {
    if weights.into_iter().all(|w| w.is_finite() && *w > 0.0) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: "weight", step })
    }
}

pub(crate) fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// `(∏ means) · (1/N) Σ W_i g_i / g̃_k,i`.
pub(crate) fn product_form_estimate<'a>(
    payoff: &PayoffSpec,
    means: &[f64],
    particles: impl ExactSizeIterator<Item = &'a Particle>,
) -> f64 {
    let norm = means.iter().map(|m| m.ln()).sum::<f64>().exp();
    let n = particles.len() as f64;
    let terminal = particles.map(|p| p.terminal_term(payoff)).sum::<f64>() / n;
    norm * terminal
}

/// Particle system at one discretization level.
#[derive(Debug, Clone)]
pub struct ParticleSystem<R = ChaCha8Rng> {
    particles: Vec<Particle>,
    noise: Vec<R>,
    resample_rng: ChaCha8Rng,
    level: Level,
    step: usize,
    weight_means: Vec<f64>,
    resamples: usize,
    cost: u64,
}

impl ParticleSystem<ChaCha8Rng> {
    /// Samples `n` particles one interval ahead of the initial point, weighted
    /// by `g̃_1`. Particle `i` draws from stream `i` of `key`.
    pub fn init(problem: &PricingProblem, level: Level, n: usize, key: &StreamKey) -> Result<Self> {
        let noise = (0..n as u64).map(|i| key.rng(i)).collect();
        Self::init_with(problem, level, noise, key.rng(RESAMPLE_STREAM))
    }
}

impl<R: Noise + Send> ParticleSystem<R> {
    /// Like [`ParticleSystem::init`] with caller-supplied per-particle noise.
    pub fn init_with(problem: &PricingProblem, level: Level, noise: Vec<R>, resample_rng: ChaCha8Rng) -> Result<Self> {
        let n = noise.len();
        if n < 2 {
            return Err(Error::invalid("particles", "need at least 2 particles"));
        }
        let mut sys = ParticleSystem {
            particles: vec![Particle::start(problem); n],
            noise,
            resample_rng,
            level,
            step: 0,
            weight_means: Vec::new(),
            resamples: 0,
            cost: 0,
        };
        sys.propagate(problem)?;
        Ok(sys)
    }

    fn propagate(&mut self, problem: &PricingProblem) -> Result<()> {
        let level = self.level;
        let model = &problem.model;
        let payoff = &problem.payoff;
        let interval = problem.interval;
        let step = self.step + 1;
        let move_one = |(p, noise): (&mut Particle, &mut R)| -> Result<u64> {
            let (x, cost) = simulate_segment(p.state, model, level, interval, noise).map_err(|e| e.at_step(step))?;
            p.observe(payoff, x);
            Ok(cost)
        };
        let cost: u64 = if self.particles.len() >= PAR_MIN_PARTICLES {
            self.particles
                .par_iter_mut()
                .zip(self.noise.par_iter_mut())
                .with_min_len(64)
                .map(move_one)
                .try_reduce(|| 0, |a, b| Ok(a + b))?
        } else {
            self.particles
                .iter_mut()
                .zip(self.noise.iter_mut())
                .map(move_one)
                .sum::<Result<u64>>()?
        };
        self.cost += cost;
        self.step = step;
        check_weights(self.particles.iter().map(|p| &p.weight), step)
    }

    fn resample(&mut self) -> Result<()> {
        let n = self.particles.len();
        let m = mean(self.particles.iter().map(|p| p.weight));
        self.weight_means.push(m);
        let dist = WeightedIndex::new(self.particles.iter().map(|p| p.weight)).map_err(|_| Error::NonFinite {
            what: "weight",
            step: self.step,
        })?;
        let resampled: Vec<Particle> = (0..n)
            .map(|_| {
                let mut p = self.particles[dist.sample(&mut self.resample_rng)];
                p.weight = 1.0;
                p
            })
            .collect();
        self.particles = resampled;
        self.resamples += 1;
        Ok(())
    }

    /// One step `n-1 → n`: adaptive resampling, propagation through the
    /// level-`l` kernel and reweighting by `g̃_n / g̃_{n-1}`.
    pub fn advance(&mut self, problem: &PricingProblem, policy: &EssPolicy) -> Result<()> {
        if self.step >= problem.dates() {
            return Err(Error::StepMismatch {
                expected: problem.dates() - 1,
                actual: self.step,
            });
        }
        let e = ess(&self.weights())?;
        if policy.should_resample(e, self.particles.len()) {
            self.resample()?;
        }
        self.propagate(problem)
    }

    /// Unbiased estimate of `E_l[g]`; the system must be at step `k`.
    pub fn estimate(&self, problem: &PricingProblem) -> Result<f64> {
        if self.step != problem.dates() {
            return Err(Error::StepMismatch {
                expected: problem.dates(),
                actual: self.step,
            });
        }
        Ok(product_form_estimate(
            &problem.payoff,
            &self.weight_means,
            self.particles.iter(),
        ))
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Mean raw weights recorded at each resampling epoch.
    pub fn weight_means(&self) -> &[f64] {
        &self.weight_means
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    /// Euler steps taken so far.
    pub fn cost(&self) -> u64 {
        self.cost
    }
}

/// Outcome of one complete particle filter run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfRun {
    pub estimate: f64,
    pub cost: u64,
    pub resamples: usize,
}

/// Runs the particle filter at `level` with `n` particles through all `k` dates.
pub fn run_pf(problem: &PricingProblem, level: u32, n: usize, policy: &EssPolicy, key: &StreamKey) -> Result<PfRun> {
    let mut sys = ParticleSystem::init(problem, problem.level(level)?, n, key)?;
    drive(&mut sys, problem, policy)
}

pub(crate) fn drive<R: Noise + Send>(
    sys: &mut ParticleSystem<R>,
    problem: &PricingProblem,
    policy: &EssPolicy,
) -> Result<PfRun> {
    while sys.step() < problem.dates() {
        sys.advance(problem, policy)?;
    }
    Ok(PfRun {
        estimate: sys.estimate(problem)?,
        cost: sys.cost(),
        resamples: sys.resamples(),
    })
}
