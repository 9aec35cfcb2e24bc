//! Statistical self-tests of the coupled kernel and the coupled resampler.
//!
//! * Two-sample Kolmogorov–Smirnov tests comparing each marginal of the
//!   coupled Euler kernel with the single-level simulator.
//! * Chi-squared goodness-of-fit of each marginal of the maximal-coupling
//!   resampler against its multinomial law, and the matched-pair rate
//!   against `Σ min(w_f, w_c)`.

use mlpf_core::prelude::*;
use mlpf_core::Result;
use rand::RngCore;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Outcome of one statistical check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: statistic {:.6} vs threshold {:.6}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.threshold
        )
    }
}

/// Two-sample KS statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at significance `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Pearson statistic and degrees of freedom over cells with positive
/// probability. An observation in a zero-probability cell gives `+∞`.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, usize) {
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&c, &p) in counts.iter().zip(probs) {
        if p > 0.0 {
            let e = p * total as f64;
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        } else if c > 0 {
            return (f64::INFINITY, cells.saturating_sub(1).max(1));
        }
    }
    (stat, cells.saturating_sub(1).max(1))
}

pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}

/// Terminal prices after one unit of time: `(fine, coarse)` from the coupled
/// kernel, and independent single-level samples at the fine and coarse levels.
pub struct CouplingSamples {
    pub coupled_fine: Vec<f64>,
    pub coupled_coarse: Vec<f64>,
    pub single_fine: Vec<f64>,
    pub single_coarse: Vec<f64>,
}

pub fn coupling_samples(
    model: &DiffusionModel,
    x0: State,
    fine: Level,
    samples: usize,
    key: &StreamKey,
) -> Result<CouplingSamples> {
    let coarse = fine.coarser().ok_or_else(|| mlpf_core::Error::InvalidParameter {
        name: "level",
        reason: "coupling check needs level >= 2".into(),
    })?;
    let duration = fine.interval();
    let mut coupled_rng = key.rng(0);
    let mut fine_rng = key.rng(1);
    let mut coarse_rng = key.rng(2);
    let mut out = CouplingSamples {
        coupled_fine: Vec::with_capacity(samples),
        coupled_coarse: Vec::with_capacity(samples),
        single_fine: Vec::with_capacity(samples),
        single_coarse: Vec::with_capacity(samples),
    };
    for _ in 0..samples {
        let ((f, c), _) = simulate_coupled_segment(x0, x0, model, fine, duration, &mut coupled_rng)?;
        out.coupled_fine.push(f.price);
        out.coupled_coarse.push(c.price);
        out.single_fine
            .push(simulate_segment(x0, model, fine, duration, &mut fine_rng)?.0.price);
        out.single_coarse
            .push(simulate_segment(x0, model, coarse, duration, &mut coarse_rng)?.0.price);
    }
    Ok(out)
}

/// KS tests of both coupled marginals at significance `alpha`.
pub fn check_coupling(
    label: &str,
    model: &DiffusionModel,
    x0: State,
    fine: Level,
    samples: usize,
    alpha: f64,
    key: &StreamKey,
) -> Result<Vec<CheckOutcome>> {
    let s = coupling_samples(model, x0, fine, samples, key)?;
    let threshold = ks_critical(samples, samples, alpha);
    let l = fine.index();
    Ok([
        (
            format!("coupling {label} l={l} fine marginal (KS)"),
            &s.coupled_fine,
            &s.single_fine,
        ),
        (
            format!("coupling {label} l={l} coarse marginal (KS)"),
            &s.coupled_coarse,
            &s.single_coarse,
        ),
    ]
    .into_iter()
    .map(|(name, a, b)| {
        let d = ks_statistic(a, b);
        CheckOutcome {
            name,
            statistic: d,
            threshold,
            passed: d < threshold,
        }
    })
    .collect())
}

/// Index pairs drawn from the maximal coupling of `wf` and `wc`.
pub fn resampler_draws<R: RngCore>(wf: &[f64], wc: &[f64], draws: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let coupling = MaximalCoupling::new(wf, wc)?;
    Ok((0..draws).map(|_| coupling.sample(rng)).collect())
}

/// Chi-squared tests of both resampling marginals plus the matched-pair rate
/// (within three standard errors of `Σ min(w_f, w_c)`).
pub fn check_resampler(
    label: &str,
    wf: &[f64],
    wc: &[f64],
    draws: usize,
    alpha: f64,
    key: &StreamKey,
) -> Result<Vec<CheckOutcome>> {
    let pairs = resampler_draws(wf, wc, draws, &mut key.rng(0))?;
    let mut fine_counts = vec![0u64; wf.len()];
    let mut coarse_counts = vec![0u64; wc.len()];
    let mut matched = 0u64;
    for &(a, b) in &pairs {
        fine_counts[a] += 1;
        coarse_counts[b] += 1;
        matched += (a == b) as u64;
    }
    let mut out = Vec::new();
    for (side, counts, probs) in [("fine", &fine_counts, wf), ("coarse", &coarse_counts, wc)] {
        let (stat, df) = chi_square(counts, probs);
        let threshold = chi_square_critical(df, alpha);
        out.push(CheckOutcome {
            name: format!("resampler {label} {side} marginal (chi2, df={df})"),
            statistic: stat,
            threshold,
            passed: stat < threshold,
        });
    }
    let a: f64 = wf.iter().zip(wc).map(|(x, y)| x.min(*y)).sum();
    let rate = matched as f64 / draws as f64;
    let se = (a * (1.0 - a) / draws as f64).sqrt();
    let deviation = (rate - a).abs();
    out.push(CheckOutcome {
        name: format!("resampler {label} match rate {rate:.5} vs {a:.5}"),
        statistic: deviation,
        threshold: 3.0 * se,
        passed: deviation <= 3.0 * se,
    });
    Ok(out)
}

/// Weight-vector pairs exercised by [`run_all`].
pub fn resampler_fixtures() -> Vec<(&'static str, Vec<f64>, Vec<f64>)> {
    vec![
        ("two-point", vec![0.7, 0.3], vec![0.4, 0.6]),
        (
            "five-point",
            vec![0.1, 0.2, 0.3, 0.25, 0.15],
            vec![0.3, 0.1, 0.2, 0.1, 0.3],
        ),
        (
            "ten-point",
            (1..=10).map(|i| i as f64 / 55.0).collect(),
            (1..=10).rev().map(|i| i as f64 / 55.0).collect(),
        ),
    ]
}

/// Default models: GBM (`σ = 0.25`) and the Langevin stochastic-volatility
/// model, both started from `s0 = 32`.
pub fn coupling_fixtures() -> Vec<(&'static str, DiffusionModel, State)> {
    vec![
        (
            "gbm",
            DiffusionModel::gbm(GbmParams::new(0.0, 0.25).expect("valid")),
            State::new(32.0, 0.25),
        ),
        (
            "langevin_sv",
            DiffusionModel::langevin_sv(LangevinSvParams::new(0.0, 0.25, 0.75, 100.0).expect("valid")),
            State::new(32.0, 1.25),
        ),
    ]
}

/// Every self-check: KS coupling tests for `l ∈ {2,3,4}` on both models
/// (`ks_samples` each) and resampler tests (`draws` each), at 1%.
pub fn run_all(seed: u64, ks_samples: usize, draws: usize) -> Result<Vec<CheckOutcome>> {
    let root = StreamKey::new(seed);
    let mut out = Vec::new();
    for (m, (label, model, x0)) in coupling_fixtures().into_iter().enumerate() {
        for l in 2..=4u32 {
            let key = root.derive(m as u64).derive(l as u64);
            out.extend(check_coupling(
                label,
                &model,
                x0,
                Level::new(l)?,
                ks_samples,
                0.01,
                &key,
            )?);
        }
    }
    for (i, (label, wf, wc)) in resampler_fixtures().into_iter().enumerate() {
        out.extend(check_resampler(
            label,
            &wf,
            &wc,
            draws,
            0.01,
            &root.derive(100 + i as u64),
        )?);
    }
    Ok(out)
}
