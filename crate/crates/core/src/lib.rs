//! Option pricing with particle filters (PF) and multilevel particle filters
//! (MLPF) over Euler-discretized diffusions.
//!
//! The level-`l` price `E_l[g]` of a path-dependent payoff is estimated by a
//! particle system whose weights are guided by positive potentials `g̃_n`
//! (for instance `|s_n - K|^ρ` times barrier indicators). The multilevel
//! estimator telescopes over levels `1..=L`, estimating each increment
//! `E_l[g] - E_{l-1}[g]` with a coupled fine/coarse particle system.
//!
//! ```
//! use mlpf_core::prelude::*;
//!
//! let problem = PricingProblem::new(
//!     DiffusionModel::gbm(GbmParams::new(0.0, 0.25).unwrap()),
//!     State::new(32.0, 0.25),
//!     PayoffSpec::call(EuropeanCallSpec::new(30.0, 0.0, 4.0, 0.5, 4).unwrap()),
//!     1.0,
//! )
//! .unwrap();
//! let key = StreamKey::new(42);
//! let pf = run_pf(&problem, 3, 200, &EssPolicy::default(), &key).unwrap();
//! let ml = mlpf_estimate(&problem, &allocate_levels(3, 200).unwrap(), &EssPolicy::default(), &key).unwrap();
//! assert!(pf.estimate > 0.0 && ml.total.is_finite());
//! ```

// Negated comparisons are deliberate: NaN must fail every parameter check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod discretization;
pub mod error;
pub mod mlpf;
pub mod model;
pub mod particle_filter;
pub mod payoff;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::analytics::{
        black_scholes_call, mc_oracle, summarize, ExperimentResult, McEstimate, Method, SampleStats,
    };
    pub use crate::discretization::{
        euler_step, simulate_coupled_segment, simulate_segment, Level, MonitoringGrid, PRICE_FLOOR,
    };
    pub use crate::error::{Error, Result};
    pub use crate::mlpf::{
        allocate_levels, maximal_coupled_resample, mlpf_estimate, pilot_levels, run_coupled, CoupledParticleSystem,
        CouplingKernel, LevelAllocation, LevelPilot, MaximalCoupling, MlEstimate,
    };
    pub use crate::model::{grad_log_student_t, DiffusionModel, GbmParams, LangevinSvParams, State};
    pub use crate::particle_filter::{ess, run_pf, EssPolicy, ParticleSystem, PfRun};
    pub use crate::payoff::{
        BarrierSpec, Contract, EuropeanCallSpec, PayoffSpec, PiecewisePayout, PotentialKind, TarnSpec, POTENTIAL_FLOOR,
    };
    pub use crate::problem::PricingProblem;
    pub use crate::rng::{Noise, StreamKey, ZeroNoise};
}
