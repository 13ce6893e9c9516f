//! Simulation and verification engine for critical Galton-Watson
//! processes with immigration and their squared-Bessel diffusion limit.
//!
//! The crate simulates the branching recursion
//! `X_k = Σ_{j=1}^{X_{k-1}} ξ_{k,j} + ε_k` exactly, exposes the
//! closed-form moment oracles of the critical case, builds the scaled
//! step processes `M^(n)` and `n^{-1} X_⌊nt⌋`, integrates and exactly
//! samples the limit SDE `dX = m_ε dt + sqrt(σ_ξ² X⁺) dW`, and runs a
//! statistical harness that checks the weak-convergence claim and its
//! sufficient conditions on ladders of scaling indices.
//!
//! Modules follow that pipeline: [`distributions`] (offspring and
//! immigration laws), [`gw_engine`] (exact simulation, martingale
//! differences, seeded ensembles), [`moments`] (closed forms),
//! [`step_process`] (grid processes and functionals), [`diffusion`]
//! (Euler and exact transition schemes, the Gamma limit marginal),
//! [`convergence`] (KS/Wasserstein metrics and condition statistics),
//! [`harness`] + [`scenario`] (scenario-driven verification runs),
//! [`export`] (CSV and binary artifacts). Everything randomized draws
//! from counter-keyed [`rng`] streams, so every ensemble is a pure
//! function of its master seed regardless of worker count.

pub mod convergence;
pub mod diffusion;
pub mod distributions;
pub mod export;
pub mod gw_engine;
pub mod harness;
pub mod moments;
pub mod pmath;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod scenario;
pub mod special;
pub mod stats;
pub mod step_process;

pub use convergence::{
    cond11_supx_statistic, cond1_sup_statistic, cond2_lindeberg_statistic, condition_ladder,
    fdd_convergence_test, ks_distance, ks_two_sample, wasserstein1, ConditionKind, ConditionLadder,
    ConditionTrace, FddSettings, KSResult, StatError,
};
pub use diffusion::{
    euler_path, exact_transition_path, exact_transition_step, limit_marginal_cdf, m_path_from_x,
    DiffusionError, DiffusionPath, SDEParams, Scheme,
};
pub use distributions::{DistError, DistributionSpec};
pub use gw_engine::{generate_ensemble, simulate_path, GWConfig, GWPath, PathEnsemble, SimError};
pub use harness::{run_converge, HarnessError};
pub use moments::{
    cond_var_given_prev, mean_xk, moment_table, order_certificates, second_moment_mk,
    var_xk_critical, MomentError, MomentParams, MomentTable, OrderRow,
};
pub use report::{Cmp, Diagnostic, TestReport, TestVerdict};
pub use rng::{RandomStream, StreamKey};
pub use scenario::{Scenario, ScenarioError};
pub use stats::MomentAccumulator;
pub use step_process::{
    build_mn, build_xn, cell_inf_time, cell_sup_time, floor_nt, psi_limit, psi_n, psi_n_of_step,
    shifted_integral, StepError, StepFunction,
};
