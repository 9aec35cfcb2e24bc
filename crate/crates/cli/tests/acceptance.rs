//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mlpf_cli::config::ExperimentConfig;
use mlpf_cli::{run_with_threads, selfcheck, write_csv};
use mlpf_core::payoff::{tarn_cashflow, tarn_f};
use mlpf_core::prelude::*;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).expect("shipped config loads")
}

fn stats(xs: &[f64]) -> SampleStats {
    xs.iter().copied().collect()
}

/// Repetitions `0..reps` of `f` in parallel, returned in repetition order.
fn repeat<F>(reps: usize, f: F) -> (Vec<f64>, Vec<u64>)
where
    F: Fn(usize) -> (f64, u64) + Sync + Send,
{
    (0..reps).into_par_iter().map(f).unzip()
}

fn mean_cost(costs: &[u64]) -> f64 {
    costs.iter().sum::<u64>() as f64 / costs.len() as f64
}

/// Stratified exact log-normal Monte Carlo for a call: `strata` equiprobable
/// strata of the terminal Gaussian, two samples per stratum.
fn stratified_call(s0: f64, strike: f64, rate: f64, sigma: f64, maturity: f64, strata: usize, seed: u64) -> (f64, f64) {
    let normal = Normal::standard();
    let drift = (rate - 0.5 * sigma * sigma) * maturity;
    let vol = sigma * maturity.sqrt();
    let discount = (-rate * maturity).exp();
    let payoff = |u: f64| discount * (s0 * (drift + vol * normal.inverse_cdf(u)).exp() - strike).max(0.0);
    let chunk = 1 << 16;
    let parts: Vec<(f64, f64)> = (0..strata.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut rng = StreamKey::new(seed).rng(c as u64);
            let (mut sum, mut var) = (0.0, 0.0);
            for j in c * chunk..((c + 1) * chunk).min(strata) {
                let a = payoff((j as f64 + rng.random::<f64>()) / strata as f64);
                let b = payoff((j as f64 + rng.random::<f64>()) / strata as f64);
                sum += 0.5 * (a + b);
                var += 0.25 * (a - b) * (a - b);
            }
            (sum, var)
        })
        .collect();
    let m = strata as f64;
    let sum: f64 = parts.iter().map(|p| p.0).sum();
    let var: f64 = parts.iter().map(|p| p.1).sum();
    (sum / m, var.sqrt() / m)
}

/// Half a unit in the fourth significant figure of `x`.
fn four_figure_tolerance(x: f64) -> f64 {
    0.5 * 10f64.powi(x.abs().log10().floor() as i32 - 3)
}

fn criterion_1() -> Verdict {
    let config = load("call_gbm.toml");
    let problem = config.problem().unwrap();
    let (s0, strike, sigma, maturity) = (32.0, 30.0, 0.25, 1.0);
    assert_eq!(problem.dates() as f64 * problem.interval, maturity);
    let bs = black_scholes_call(s0, strike, 0.0, sigma, maturity);
    let (mc, mc_se) = stratified_call(s0, strike, 0.0, sigma, maturity, 5_000_000, 1);
    let figures_agree = (mc - bs).abs() <= four_figure_tolerance(bs);

    let policy = EssPolicy::default();
    let root = StreamKey::new(config.seed);
    let (pf, _) = repeat(50, |r| {
        let run = run_pf(&problem, 5, 5000, &policy, &root.derive(1).derive(r as u64)).unwrap();
        (run.estimate, run.cost)
    });
    let alloc = allocate_levels(5, 5000).unwrap();
    let (ml, _) = repeat(50, |r| {
        let run = mlpf_estimate(&problem, &alloc, &policy, &root.derive(2).derive(r as u64)).unwrap();
        (run.total, run.cost)
    });
    let mut ok = figures_agree;
    let mut detail = format!("BS {bs:.6}, stratified MC (1e7) {mc:.6} ± {mc_se:.1e} (4 s.f.: {figures_agree})");
    for (name, xs) in [("PF l=5 N=5000", &pf), ("MLPF L=5 N1=5000", &ml)] {
        let s = stats(xs);
        let z = (s.mean() - bs) / s.std_error();
        ok &= z.abs() <= 3.0;
        detail += &format!("; {name} {:.5} ± {:.5} (z = {z:+.2})", s.mean(), s.std_error());
    }
    Verdict::new(ok, detail)
}

fn criterion_2() -> Verdict {
    let base = load("barrier_gbm.toml");
    let policy = EssPolicy::default();
    let reps = 200;
    let n_pf = 1000;
    let maturity = 0.05;
    let mut ok = true;
    let mut detail = String::new();
    for k in [50usize, 100] {
        let mut config = base.clone();
        if let mlpf_cli::config::OptionConfig::Barrier { dates, interval, .. } = &mut config.option {
            *dates = k;
            *interval = maturity / k as f64;
        }
        let problem = config.problem().unwrap();
        let root = StreamKey::new(config.seed).derive(k as u64);
        let pilot = pilot_levels(&problem, 5, 200, 100, &policy, &root.derive(0)).unwrap();
        let mut wins = 0;
        let mut cells = Vec::new();
        for l in 2..=5u32 {
            let (pf, pf_cost) = repeat(reps, |r| {
                let run = run_pf(
                    &problem,
                    l,
                    n_pf,
                    &policy,
                    &root.derive(1).derive(l as u64).derive(r as u64),
                )
                .unwrap();
                (run.estimate, run.cost)
            });
            let pf_var = stats(&pf).variance();
            let pf_cost = mean_cost(&pf_cost);
            let alloc =
                LevelAllocation::optimal(&pilot.variances[..l as usize], &pilot.costs[..l as usize], pf_var).unwrap();
            let (ml, ml_cost) = repeat(reps, |r| {
                let run = mlpf_estimate(
                    &problem,
                    &alloc,
                    &policy,
                    &root.derive(2).derive(l as u64).derive(r as u64),
                )
                .unwrap();
                (run.total, run.cost)
            });
            let ml_var = stats(&ml).variance();
            // cost at the PF's variance, scaling every N_l by ml_var / pf_var
            let matched = mean_cost(&ml_cost) * ml_var / pf_var;
            wins += usize::from(matched < pf_cost);
            cells.push(format!("L={l} {:.2}", matched / pf_cost));
        }
        ok &= wins >= 3;
        detail += &format!("k={k}: {wins}/4 wins, MLPF/PF matched cost [{}]; ", cells.join(", "));
    }
    Verdict::new(ok, detail.trim_end_matches("; ").to_string())
}

fn criterion_3() -> Verdict {
    let spec = EuropeanCallSpec::new(30.0, 0.0, 1.0, 0.5, 10).unwrap();
    let problem = PricingProblem::new(
        DiffusionModel::gbm(GbmParams::new(0.0, 0.25).unwrap()),
        State::new(32.0, 0.0),
        PayoffSpec::call(spec),
        0.1,
    )
    .unwrap();
    let policy = EssPolicy::default();
    let reps = 1000;
    let root = StreamKey::new(3);
    let levels: Vec<u32> = (2..=6).collect();
    let vars: Vec<(f64, f64)> = levels
        .iter()
        .map(|&l| {
            let (inc, _) = repeat(reps, |r| {
                let run = run_coupled(
                    &problem,
                    l,
                    1000,
                    CouplingKernel::Dyadic,
                    &policy,
                    &root.derive(l as u64).derive(r as u64),
                )
                .unwrap();
                (run.increment, run.cost)
            });
            let v = stats(&inc).variance();
            (v, v * (2.0 / (reps - 1) as f64).sqrt())
        })
        .collect();
    let monotone = vars
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    let xs: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
    let ys: Vec<f64> = vars.iter().map(|v| v.0.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 5.0, ys.iter().sum::<f64>() / 5.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let listed: Vec<String> = vars.iter().map(|v| format!("{:.2e}", v.0)).collect();
    Verdict::new(
        monotone && slope <= -0.4,
        format!(
            "Var[increment] l=2..6 [{}], nonincreasing within 2 SE: {monotone}, slope {slope:.3}",
            listed.join(", ")
        ),
    )
}

fn criterion_4() -> Verdict {
    let root = StreamKey::new(4);
    let mut outcomes = Vec::new();
    for (m, (label, model, x0)) in selfcheck::coupling_fixtures().into_iter().enumerate() {
        for l in 2..=4u32 {
            let key = root.derive(m as u64).derive(l as u64);
            outcomes.extend(
                selfcheck::check_coupling(label, &model, x0, Level::new(l).unwrap(), 10_000, 0.01, &key).unwrap(),
            );
        }
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.to_string()).collect();
    let worst = outcomes.iter().map(|o| o.statistic / o.threshold).fold(0.0, f64::max);
    Verdict::new(
        failed.is_empty(),
        format!(
            "{} KS tests at 1%, {} failed, max D/critical {worst:.3}{}",
            outcomes.len(),
            failed.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(": {}", failed.join("; "))
            }
        ),
    )
}

fn criterion_5() -> Verdict {
    let root = StreamKey::new(5);
    let mut outcomes = Vec::new();
    for (i, (label, wf, wc)) in selfcheck::resampler_fixtures().into_iter().enumerate() {
        outcomes.extend(selfcheck::check_resampler(label, &wf, &wc, 100_000, 0.01, &root.derive(i as u64)).unwrap());
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.to_string()).collect();
    let rates: Vec<String> = outcomes
        .iter()
        .filter(|o| o.name.contains("match rate"))
        .map(|o| format!("{:.2} SE", 3.0 * o.statistic / o.threshold))
        .collect();
    Verdict::new(
        failed.is_empty(),
        format!(
            "{} checks, {} failed, match-rate deviations [{}]{}",
            outcomes.len(),
            failed.len(),
            rates.join(", "),
            if failed.is_empty() {
                String::new()
            } else {
                format!(": {}", failed.join("; "))
            }
        ),
    )
}

fn criterion_6() -> Verdict {
    let model = DiffusionModel::gbm(GbmParams::new(0.02, 0.25).unwrap());
    let x0 = State::new(32.0, 0.0);
    let cases = [
        (
            "call",
            PayoffSpec::call(EuropeanCallSpec::new(30.0, 0.02, 1.0, 0.5, 2).unwrap()),
        ),
        (
            "barrier",
            PayoffSpec::barrier(BarrierSpec::constant(30.0, 0.02, 1.0, 0.5, 2, 25.0, 40.0).unwrap()),
        ),
    ];
    let level = 3;
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, (name, payoff)) in cases.into_iter().enumerate() {
        let problem = PricingProblem::new(model, x0, payoff, 0.5).unwrap();
        let root = StreamKey::new(6).derive(i as u64);
        let (pf, _) = repeat(20_000, |r| {
            let run = run_pf(&problem, level, 50, &EssPolicy::always(), &root.derive(r as u64)).unwrap();
            (run.estimate, run.cost)
        });
        let s = stats(&pf);
        let mc = mc_oracle(&problem, level, 10_000_000, &StreamKey::new(60).derive(i as u64)).unwrap();
        let se = (s.std_error().powi(2) + mc.std_error.powi(2)).sqrt();
        let z = (s.mean() - mc.mean) / se;
        ok &= z.abs() <= 3.0;
        detail.push(format!("{name}: PF {:.5} vs MC {:.5} (z = {z:+.2})", s.mean(), mc.mean));
    }
    Verdict::new(ok, detail.join("; "))
}

fn criterion_7() -> Verdict {
    let gbm = DiffusionModel::gbm(GbmParams::new(0.01, 0.3).unwrap());
    let sv = DiffusionModel::langevin_sv(LangevinSvParams::new(0.01, 0.25, 0.75, 100.0).unwrap());
    let problems = [
        (
            gbm,
            PayoffSpec::call(EuropeanCallSpec::new(30.0, 0.01, 5.0, 0.5, 5).unwrap()),
        ),
        (
            gbm,
            PayoffSpec::barrier(BarrierSpec::constant(30.0, 0.01, 5.0, 0.5, 5, 20.0, 50.0).unwrap()),
        ),
        (
            gbm,
            PayoffSpec::tarn(TarnSpec::new(100.0, 60.0, 5, 0.01, 1.0, 30.0).unwrap()),
        ),
        (
            sv,
            PayoffSpec::barrier(BarrierSpec::constant(30.0, 0.01, 5.0, 0.5, 5, 20.0, 50.0).unwrap()),
        ),
    ]
    .map(|(m, p)| PricingProblem::new(m, State::new(32.0, 1.25), p, 1.0).unwrap());
    let policy = EssPolicy::default();
    let (mut a, mut b, mut c) = (true, true, true);
    for (i, problem) in problems.iter().enumerate() {
        let key = StreamKey::new(70 + i as u64);
        let unit = PricingProblem {
            payoff: problem.payoff.clone().with_unit_potential(),
            ..problem.clone()
        };
        for l in [1, 3] {
            let pf = run_pf(&unit, l, 777, &policy, &key).unwrap().estimate;
            let mc = mc_oracle(problem, l, 777, &key).unwrap().mean;
            a &= pf.to_bits() == mc.to_bits();
        }
        for l in [2, 4] {
            let run = run_coupled(problem, l, 300, CouplingKernel::Synchronous, &policy, &key).unwrap();
            b &= run.increment == 0.0 && run.fine.to_bits() == run.coarse.to_bits();
        }
        let ml = mlpf_estimate(problem, &LevelAllocation::new(vec![500]).unwrap(), &policy, &key).unwrap();
        let pf = run_pf(problem, 1, 500, &policy, &key.derive(1)).unwrap();
        c &= ml.total.to_bits() == pf.estimate.to_bits() && ml.cost == pf.cost;
    }
    Verdict::new(
        a && b && c,
        format!("(a) unit-potential PF == MC bitwise: {a}; (b) identical-kernel increment == 0: {b}; (c) L=1 MLPF == PF: {c}"),
    )
}

fn criterion_8() -> Verdict {
    let spec = TarnSpec::new(100.0, 60.0, 10, 0.0, 1.0, 30.0).unwrap();
    let values = [(50.0, -5.0), (70.0, 25.0), (20.0, 25.0)];
    let mut ok = values.iter().all(|&(s, f)| tarn_f(&spec, s) == f);
    let path = [41.0, 45.0, 50.0, 59.9, 55.0, 40.5, 48.0, 52.0, 57.0, 44.0];
    let total = tarn_cashflow(&spec, &path);
    ok &= (total + 50.0).abs() < 1e-12;
    Verdict::new(
        ok,
        format!(
            "f(50) = {}, f(70) = {}, f(20) = {}, ten coupons in (40,60) total {total}",
            tarn_f(&spec, 50.0),
            tarn_f(&spec, 70.0),
            tarn_f(&spec, 20.0)
        ),
    )
}

fn csv_without_wall_time(config: &ExperimentConfig, threads: usize) -> Vec<u8> {
    let rows = run_with_threads(config, threads).unwrap();
    let mut bytes = Vec::new();
    write_csv(&rows, &mut bytes).unwrap();
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let wall = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "wall_seconds")
        .unwrap();
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(
        reader
            .headers()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != wall)
            .map(|(_, f)| f),
    )
    .unwrap();
    for rec in reader.records() {
        let rec = rec.unwrap();
        out.write_record(rec.iter().enumerate().filter(|(i, _)| *i != wall).map(|(_, f)| f))
            .unwrap();
    }
    out.into_inner().unwrap()
}

fn criterion_9() -> Verdict {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["barrier_gbm.toml", "tarn_sv.toml"] {
        let mut config = load(name);
        config.repetitions = 6;
        config.levels = vec![1, 2, 3];
        config.n1 = 300;
        config.reference.samples = 20_000;
        if let Some(p) = &mut config.pilot {
            p.runs = 10;
        }
        let one = csv_without_wall_time(&config, 1);
        let eight = csv_without_wall_time(&config, 8);
        let again = csv_without_wall_time(&config, 1);
        let same = one == eight && one == again;
        ok &= same;
        detail.push(format!(
            "{name}: {} bytes, identical across 1/8/1 threads: {same}",
            one.len()
        ));
    }
    Verdict::new(ok, detail.join("; "))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("vanilla call correctness", criterion_1),
        ("MLPF dominance on the barrier option", criterion_2),
        ("increment variance decay", criterion_3),
        ("coupling marginal laws", criterion_4),
        ("maximal-coupling resampler", criterion_5),
        ("PF unbiasedness", criterion_6),
        ("exact identities", criterion_7),
        ("TARN payout function", criterion_8),
        ("determinism across thread counts", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = run();
        failures += usize::from(!verdict.passed);
        println!(
            "criterion {id} {}: {name} ({:.1}s): {}",
            if verdict.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
