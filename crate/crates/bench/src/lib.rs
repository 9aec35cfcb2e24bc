//! Benchmark fixtures shared by the criterion targets.

use mlpf_core::prelude::*;

/// Barrier option on constant-volatility GBM with `k` unit-spaced dates.
pub fn barrier_problem(k: usize) -> PricingProblem {
    let rate = 0.05;
    let interval = 1.0;
    let spec = BarrierSpec::constant(30.0, rate, k as f64 * interval, 0.5, k, 20.0, 50.0).expect("valid barrier");
    PricingProblem::new(
        DiffusionModel::gbm(GbmParams::new(rate, 0.25).expect("valid model")),
        State::new(32.0, 0.25),
        PayoffSpec::barrier(spec),
        interval,
    )
    .expect("valid problem")
}

/// Barrier option on the Langevin stochastic-volatility model.
pub fn sv_barrier_problem(k: usize) -> PricingProblem {
    let rate = 0.05;
    let spec = BarrierSpec::constant(30.0, rate, k as f64, 0.5, k, 20.0, 50.0).expect("valid barrier");
    PricingProblem::new(
        DiffusionModel::langevin_sv(LangevinSvParams::new(rate, 0.25, 0.75, 100.0).expect("valid model")),
        State::new(32.0, 1.25),
        PayoffSpec::barrier(spec),
        1.0,
    )
    .expect("valid problem")
}
