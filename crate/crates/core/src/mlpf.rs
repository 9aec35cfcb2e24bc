//! Multilevel particle filter.
//!
//! The level-`L` price is written as the telescoping sum
//! `E_1[g] + Σ_{l=2..L} (E_l[g] - E_{l-1}[g])`. The first term comes from a
//! single-level particle filter; each increment from an independent coupled
//! system in which fine and coarse particles move through the coupled Euler
//! kernel and are resampled jointly with a maximal coupling of the two
//! multinomial resampling laws.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::SampleStats;
use crate::discretization::{simulate_coupled_segment, simulate_synchronous_segment, Level};
use crate::error::{Error, Result};
use crate::particle_filter::{check_weights, ess, mean, product_form_estimate, run_pf, EssPolicy, Particle};
use crate::problem::PricingProblem;
use crate::rng::{Noise, StreamKey, RESAMPLE_STREAM};

const NORMALIZATION_TOL: f64 = 1e-9;
const PAR_MIN_PAIRS: usize = 256;

fn check_normalized(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::EmptyWeights);
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::invalid("weights", "entries must be finite and nonnegative"));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Unnormalized { sum });
    }
    Ok(())
}

fn categorical(w: &[f64]) -> Option<WeightedIndex<f64>> {
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        WeightedIndex::new(w.iter().copied()).ok()
    } else {
        None
    }
}

/// Maximal coupling of `multinomial(w_f)` and `multinomial(w_c)`.
///
/// With probability `a = Σ min(w_f, w_c)` both indices are one draw from the
/// normalized overlap; otherwise they are drawn independently from the two
/// normalized residuals.
#[derive(Debug, Clone)]
pub struct MaximalCoupling {
    overlap: f64,
    matched: Option<WeightedIndex<f64>>,
    residuals: Option<(WeightedIndex<f64>, WeightedIndex<f64>)>,
}

impl MaximalCoupling {
    pub fn new(weights_fine: &[f64], weights_coarse: &[f64]) -> Result<Self> {
        if weights_fine.len() != weights_coarse.len() {
            return Err(Error::LengthMismatch {
                left: weights_fine.len(),
                right: weights_coarse.len(),
            });
        }
        check_normalized(weights_fine)?;
        check_normalized(weights_coarse)?;
        let min: Vec<f64> = weights_fine
            .iter()
            .zip(weights_coarse)
            .map(|(a, b)| a.min(*b))
            .collect();
        let overlap: f64 = min.iter().sum();
        let rf: Vec<f64> = weights_fine.iter().zip(&min).map(|(w, m)| w - m).collect();
        let rc: Vec<f64> = weights_coarse.iter().zip(&min).map(|(w, m)| w - m).collect();
        let residuals = match (categorical(&rf), categorical(&rc)) {
            (Some(f), Some(c)) => Some((f, c)),
            _ => None,
        };
        Ok(MaximalCoupling {
            overlap,
            matched: categorical(&min),
            residuals,
        })
    }

    /// Probability that a draw yields a matched pair.
    pub fn match_probability(&self) -> f64 {
        self.overlap.min(1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        match (&self.matched, &self.residuals) {
            (Some(m), Some(_)) if u < self.overlap => {
                let j = m.sample(rng);
                (j, j)
            }
            (Some(m), None) => {
                let j = m.sample(rng);
                (j, j)
            }
            (_, Some((f, c))) => (f.sample(rng), c.sample(rng)),
            (None, None) => unreachable!("normalized weights have positive mass"),
        }
    }
}

/// `N` coupled ancestor pairs for normalized weight vectors of length `N`.
pub fn maximal_coupled_resample<R: Rng + ?Sized>(
    weights_fine: &[f64],
    weights_coarse: &[f64],
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let coupling = MaximalCoupling::new(weights_fine, weights_coarse)?;
    Ok((0..weights_fine.len()).map(|_| coupling.sample(rng)).collect())
}

/// How fine and coarse chains are moved between monitoring dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CouplingKernel {
    /// Coarse chain at level `l-1` driven by summed fine increments.
    #[default]
    Dyadic,
    /// Both chains at level `l` with identical draws.
    Synchronous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledPair {
    pub fine: Particle,
    pub coarse: Particle,
}

/// Coupled pair of particle systems at levels `l` and `l-1`.
#[derive(Debug, Clone)]
pub struct CoupledParticleSystem<R = ChaCha8Rng> {
    pairs: Vec<CoupledPair>,
    noise: Vec<R>,
    resample_rng: ChaCha8Rng,
    fine_level: Level,
    kernel: CouplingKernel,
    step: usize,
    fine_means: Vec<f64>,
    coarse_means: Vec<f64>,
    resamples: usize,
    cost: u64,
}

impl CoupledParticleSystem<ChaCha8Rng> {
    pub fn init(problem: &PricingProblem, fine_level: Level, n: usize, key: &StreamKey) -> Result<Self> {
        Self::init_kernel(problem, fine_level, CouplingKernel::Dyadic, n, key)
    }

    pub fn init_kernel(
        problem: &PricingProblem,
        fine_level: Level,
        kernel: CouplingKernel,
        n: usize,
        key: &StreamKey,
    ) -> Result<Self> {
        let noise = (0..n as u64).map(|i| key.rng(i)).collect();
        Self::init_with(problem, fine_level, kernel, noise, key.rng(RESAMPLE_STREAM))
    }
}

impl<R: Noise + Send> CoupledParticleSystem<R> {
    pub fn init_with(
        problem: &PricingProblem,
        fine_level: Level,
        kernel: CouplingKernel,
        noise: Vec<R>,
        resample_rng: ChaCha8Rng,
    ) -> Result<Self> {
        if fine_level.index() < 2 {
            return Err(Error::invalid("level", "coupled systems need a fine level >= 2"));
        }
        let n = noise.len();
        if n < 2 {
            return Err(Error::invalid("particles", "need at least 2 particle pairs"));
        }
        let start = Particle::start(problem);
        let mut sys = CoupledParticleSystem {
            pairs: vec![
                CoupledPair {
                    fine: start,
                    coarse: start
                };
                n
            ],
            noise,
            resample_rng,
            fine_level,
            kernel,
            step: 0,
            fine_means: Vec::new(),
            coarse_means: Vec::new(),
            resamples: 0,
            cost: 0,
        };
        sys.propagate(problem)?;
        Ok(sys)
    }

    fn propagate(&mut self, problem: &PricingProblem) -> Result<()> {
        let level = self.fine_level;
        let kernel = self.kernel;
        let model = &problem.model;
        let payoff = &problem.payoff;
        let interval = problem.interval;
        let step = self.step + 1;
        let move_pair = |(pair, noise): (&mut CoupledPair, &mut R)| -> Result<u64> {
            let ((xf, xc), cost) = match kernel {
                CouplingKernel::Dyadic => {
                    simulate_coupled_segment(pair.fine.state, pair.coarse.state, model, level, interval, noise)
                }
                CouplingKernel::Synchronous => {
                    simulate_synchronous_segment(pair.fine.state, pair.coarse.state, model, level, interval, noise)
                }
            }
            .map_err(|e| e.at_step(step))?;
            pair.fine.observe(payoff, xf);
            pair.coarse.observe(payoff, xc);
            Ok(cost)
        };
        let cost: u64 = if self.pairs.len() >= PAR_MIN_PAIRS {
            self.pairs
                .par_iter_mut()
                .zip(self.noise.par_iter_mut())
                .with_min_len(64)
                .map(move_pair)
                .try_reduce(|| 0, |a, b| Ok(a + b))?
        } else {
            self.pairs
                .iter_mut()
                .zip(self.noise.iter_mut())
                .map(move_pair)
                .sum::<Result<u64>>()?
        };
        self.cost += cost;
        self.step = step;
        check_weights(self.pairs.iter().flat_map(|p| [&p.fine.weight, &p.coarse.weight]), step)
    }

    fn resample(&mut self) -> Result<()> {
        let wf = self.fine_weights();
        let wc = self.coarse_weights();
        self.fine_means.push(mean(wf.iter().copied()));
        self.coarse_means.push(mean(wc.iter().copied()));
        let sf: f64 = wf.iter().sum();
        let sc: f64 = wc.iter().sum();
        let nf: Vec<f64> = wf.iter().map(|w| w / sf).collect();
        let nc: Vec<f64> = wc.iter().map(|w| w / sc).collect();
        let pairs = maximal_coupled_resample(&nf, &nc, &mut self.resample_rng)?;
        self.pairs = pairs
            .into_iter()
            .map(|(jf, jc)| {
                let mut fine = self.pairs[jf].fine;
                let mut coarse = self.pairs[jc].coarse;
                fine.weight = 1.0;
                coarse.weight = 1.0;
                CoupledPair { fine, coarse }
            })
            .collect();
        self.resamples += 1;
        Ok(())
    }

    /// Whether the next advance resamples: one shared decision for both
    /// sides, taken when either side's ESS is below the threshold.
    pub fn resampling_due(&self, policy: &EssPolicy) -> Result<bool> {
        let n = self.pairs.len();
        let e = ess(&self.fine_weights())?.min(ess(&self.coarse_weights())?);
        Ok(policy.should_resample(e, n))
    }

    pub fn advance(&mut self, problem: &PricingProblem, policy: &EssPolicy) -> Result<()> {
        if self.step >= problem.dates() {
            return Err(Error::StepMismatch {
                expected: problem.dates() - 1,
                actual: self.step,
            });
        }
        if self.resampling_due(policy)? {
            self.resample()?;
        }
        self.propagate(problem)
    }

    fn check_terminal(&self, problem: &PricingProblem) -> Result<()> {
        if self.step != problem.dates() {
            return Err(Error::StepMismatch {
                expected: problem.dates(),
                actual: self.step,
            });
        }
        Ok(())
    }

    /// Product-form estimate of `E_l[g]` from the fine side.
    pub fn fine_estimate(&self, problem: &PricingProblem) -> Result<f64> {
        self.check_terminal(problem)?;
        Ok(product_form_estimate(
            &problem.payoff,
            &self.fine_means,
            self.pairs.iter().map(|p| &p.fine),
        ))
    }

    /// Product-form estimate of `E_{l-1}[g]` from the coarse side.
    pub fn coarse_estimate(&self, problem: &PricingProblem) -> Result<f64> {
        self.check_terminal(problem)?;
        Ok(product_form_estimate(
            &problem.payoff,
            &self.coarse_means,
            self.pairs.iter().map(|p| &p.coarse),
        ))
    }

    /// Unbiased estimate of `E_l[g] - E_{l-1}[g]`.
    pub fn increment_estimate(&self, problem: &PricingProblem) -> Result<f64> {
        Ok(self.fine_estimate(problem)? - self.coarse_estimate(problem)?)
    }

    pub fn pairs(&self) -> &[CoupledPair] {
        &self.pairs
    }

    pub fn fine_weights(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.fine.weight).collect()
    }

    pub fn coarse_weights(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.coarse.weight).collect()
    }

    pub fn fine_level(&self) -> Level {
        self.fine_level
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }
}

/// Outcome of one coupled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledRun {
    pub increment: f64,
    pub fine: f64,
    pub coarse: f64,
    pub cost: u64,
    pub resamples: usize,
}

pub fn run_coupled(
    problem: &PricingProblem,
    fine_level: u32,
    n: usize,
    kernel: CouplingKernel,
    policy: &EssPolicy,
    key: &StreamKey,
) -> Result<CoupledRun> {
    let mut sys = CoupledParticleSystem::init_kernel(problem, problem.level(fine_level)?, kernel, n, key)?;
    while sys.step() < problem.dates() {
        sys.advance(problem, policy)?;
    }
    let fine = sys.fine_estimate(problem)?;
    let coarse = sys.coarse_estimate(problem)?;
    Ok(CoupledRun {
        increment: fine - coarse,
        fine,
        coarse,
        cost: sys.cost(),
        resamples: sys.resamples(),
    })
}

/// Particle counts `N_l >= 2` for levels `1..=L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelAllocation {
    counts: Vec<usize>,
}

impl LevelAllocation {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("levels", "need at least one level"));
        }
        if counts.iter().any(|&n| n < 2) {
            return Err(Error::invalid("particles", "every level needs at least 2 particles"));
        }
        Ok(LevelAllocation { counts })
    }

    /// `N_l = ceil(N_1 · 2^{-exponent (l-1)})`, floored at 2.
    pub fn geometric(max_level: u32, base_count: usize, exponent: f64) -> Result<Self> {
        if max_level == 0 {
            return Err(Error::invalid("max_level", "must be at least 1"));
        }
        if base_count < 2 {
            return Err(Error::invalid("n1", "must be at least 2"));
        }
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::invalid("allocation_exponent", "must be nonnegative"));
        }
        let counts = (1..=max_level)
            .map(|l| {
                let raw = base_count as f64 * 2f64.powf(-exponent * (l - 1) as f64);
                (raw.ceil() as usize).max(2)
            })
            .collect();
        Self::new(counts)
    }

    /// Counts minimizing total cost for a target estimator variance `target`:
    /// `N_l = ceil(sqrt(v_l / c_l) · Σ_j sqrt(v_j c_j) / target)`, floored at 2.
    /// `v_l` is the per-particle variance (`N · Var` of the level term) and
    /// `c_l` the per-particle cost of level `l`.
    pub fn optimal(variances: &[f64], costs: &[f64], target: f64) -> Result<Self> {
        if variances.len() != costs.len() {
            return Err(Error::LengthMismatch {
                left: variances.len(),
                right: costs.len(),
            });
        }
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::invalid("target", "must be positive"));
        }
        if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || costs.iter().any(|c| !(*c > 0.0 && c.is_finite()))
        {
            return Err(Error::invalid("variances", "need finite variances and positive costs"));
        }
        let scale: f64 = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum::<f64>() / target;
        let counts = variances
            .iter()
            .zip(costs)
            .map(|(v, c)| ((scale * (v / c).sqrt()).ceil() as usize).max(2))
            .collect();
        Self::new(counts)
    }

    pub fn max_level(&self) -> u32 {
        self.counts.len() as u32
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, level: u32) -> usize {
        self.counts[level as usize - 1]
    }
}

pub const DEFAULT_ALLOCATION_EXPONENT: f64 = 0.75;

/// `N_l = ceil(N_1 · 2^{-3(l-1)/4})`.
pub fn allocate_levels(max_level: u32, base_count: usize) -> Result<LevelAllocation> {
    LevelAllocation::geometric(max_level, base_count, DEFAULT_ALLOCATION_EXPONENT)
}

/// Per-particle variance and cost of each level term, from pilot runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPilot {
    /// `N · Var` of the term at level `l` (index `l - 1`).
    pub variances: Vec<f64>,
    /// Euler steps per particle.
    pub costs: Vec<f64>,
}

impl LevelPilot {
    pub fn allocation(&self, target: f64) -> Result<LevelAllocation> {
        LevelAllocation::optimal(&self.variances, &self.costs, target)
    }
}

/// Estimates per-particle variances of the level-1 PF and of each coupled
/// increment up to `max_level`, from `repetitions` runs of `n` particles.
/// Run `r` of level `l` uses `key.derive(l).derive(r)`.
pub fn pilot_levels(
    problem: &PricingProblem,
    max_level: u32,
    n: usize,
    repetitions: usize,
    policy: &EssPolicy,
    key: &StreamKey,
) -> Result<LevelPilot> {
    if repetitions < 2 {
        return Err(Error::invalid("repetitions", "need at least 2 pilot runs"));
    }
    let mut variances = Vec::new();
    let mut costs = Vec::new();
    for l in 1..=max_level {
        let lk = key.derive(l as u64);
        let runs: Vec<(f64, u64)> = (0..repetitions)
            .into_par_iter()
            .map(|r| {
                let rk = lk.derive(r as u64);
                if l == 1 {
                    run_pf(problem, 1, n, policy, &rk).map(|p| (p.estimate, p.cost))
                } else {
                    run_coupled(problem, l, n, CouplingKernel::Dyadic, policy, &rk).map(|c| (c.increment, c.cost))
                }
            })
            .collect::<Result<_>>()?;
        let stats: SampleStats = runs.iter().map(|r| r.0).collect();
        variances.push(stats.variance() * n as f64);
        costs.push(runs[0].1 as f64 / n as f64);
    }
    Ok(LevelPilot { variances, costs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    /// Term 1 is the level-1 price; term `l >= 2` the level-`l` increment.
    pub level_terms: Vec<f64>,
    pub total: f64,
    /// Euler steps over all systems.
    pub cost: u64,
}

/// Multilevel estimate of `E_L[g]`. Level `l` uses the independent key
/// `key.derive(l)`, so with `L = 1` this is exactly `run_pf` at level 1 under
/// `key.derive(1)`.
pub fn mlpf_estimate(
    problem: &PricingProblem,
    alloc: &LevelAllocation,
    policy: &EssPolicy,
    key: &StreamKey,
) -> Result<MlEstimate> {
    let first = run_pf(problem, 1, alloc.count(1), policy, &key.derive(1))?;
    let mut level_terms = vec![first.estimate];
    let mut cost = first.cost;
    for l in 2..=alloc.max_level() {
        let run = run_coupled(
            problem,
            l,
            alloc.count(l),
            CouplingKernel::Dyadic,
            policy,
            &key.derive(l as u64),
        )?;
        level_terms.push(run.increment);
        cost += run.cost;
    }
    Ok(MlEstimate {
        total: level_terms.iter().sum(),
        level_terms,
        cost,
    })
}
