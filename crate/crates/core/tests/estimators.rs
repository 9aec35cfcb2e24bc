//! Cross-estimator statistical consistency on small problems.

use mlpf_core::prelude::*;

fn stats(xs: impl IntoIterator<Item = f64>) -> SampleStats {
    xs.into_iter().collect()
}

fn sv_tarn() -> PricingProblem {
    PricingProblem::new(
        DiffusionModel::langevin_sv(LangevinSvParams::new(0.0, 0.25, 0.75, 100.0).unwrap()),
        State::new(32.0, 1.25),
        PayoffSpec::tarn(TarnSpec::new(100.0, 60.0, 4, 0.0, 0.25, 30.0).unwrap()),
        0.25,
    )
    .unwrap()
}

fn sv_barrier() -> PricingProblem {
    PricingProblem::new(
        DiffusionModel::langevin_sv(LangevinSvParams::new(0.03, 0.25, 0.75, 100.0).unwrap()),
        State::new(32.0, 1.25),
        PayoffSpec::barrier(BarrierSpec::constant(30.0, 0.03, 1.0, 0.5, 4, 25.0, 45.0).unwrap()),
        0.25,
    )
    .unwrap()
}

/// `|a - b| <= 4` combined standard errors.
fn agree(a: &SampleStats, b_mean: f64, b_se: f64) -> bool {
    (a.mean() - b_mean).abs() <= 4.0 * (a.std_error().powi(2) + b_se.powi(2)).sqrt()
}

#[test]
fn pf_matches_plain_monte_carlo_on_sv_tarn() {
    let p = sv_tarn();
    let mc = mc_oracle(&p, 2, 400_000, &StreamKey::new(1)).unwrap();
    let pf = stats((0..2000).map(|r| {
        run_pf(&p, 2, 40, &EssPolicy::always(), &StreamKey::new(2).derive(r))
            .unwrap()
            .estimate
    }));
    assert!(agree(&pf, mc.mean, mc.std_error), "pf {} mc {}", pf.mean(), mc.mean);
}

#[test]
fn mlpf_telescopes_to_the_finest_level() {
    let p = sv_barrier();
    let level = 3;
    let mc = mc_oracle(&p, level, 400_000, &StreamKey::new(3)).unwrap();
    let alloc = allocate_levels(level, 200).unwrap();
    let ml = stats((0..1000).map(|r| {
        mlpf_estimate(&p, &alloc, &EssPolicy::default(), &StreamKey::new(4).derive(r))
            .unwrap()
            .total
    }));
    assert!(agree(&ml, mc.mean, mc.std_error), "mlpf {} mc {}", ml.mean(), mc.mean);
}

#[test]
fn coupled_sides_target_their_own_levels() {
    let p = sv_barrier();
    let fine = mc_oracle(&p, 3, 400_000, &StreamKey::new(5)).unwrap();
    let coarse = mc_oracle(&p, 2, 400_000, &StreamKey::new(6)).unwrap();
    let runs: Vec<_> = (0..1000)
        .map(|r| {
            run_coupled(
                &p,
                3,
                100,
                CouplingKernel::Dyadic,
                &EssPolicy::default(),
                &StreamKey::new(7).derive(r),
            )
            .unwrap()
        })
        .collect();
    let f = stats(runs.iter().map(|r| r.fine));
    let c = stats(runs.iter().map(|r| r.coarse));
    assert!(
        agree(&f, fine.mean, fine.std_error),
        "fine {} vs {}",
        f.mean(),
        fine.mean
    );
    assert!(
        agree(&c, coarse.mean, coarse.std_error),
        "coarse {} vs {}",
        c.mean(),
        coarse.mean
    );
}

#[test]
fn estimates_do_not_depend_on_the_thread_pool() {
    let p = sv_barrier();
    let alloc = allocate_levels(3, 600).unwrap();
    let key = StreamKey::new(8);
    let run = || mlpf_estimate(&p, &alloc, &EssPolicy::default(), &key).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(one, four);
}
