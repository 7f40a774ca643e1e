//! Fully Bayesian HLS under global-local shrinkage priors.

mod gibbs;
mod pg;

pub use gibbs::{
    effective_sample_size, fit_bayes, fit_bayes_with_rng, gibbs_sweep, sample_prior, update_scales,
    BayesFit, ChainDiagnostics, GlsConfig, Prior, ScalePrior, ShrinkageState, TraceRow,
    MAX_ESS_CELLS,
};
pub use pg::{pg_mean, pg_variance, sample_pg, PgParams};
