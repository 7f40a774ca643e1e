//! Gibbs sampler for HLS under a global-local shrinkage prior
//! `β_jk | λ_j, τ ~ N(0, λ_j² τ²)` with Pólya-Gamma augmentation.
//!
//! The multinomial likelihood is handled one child value at a time: value
//! `k` sees a binomial logit with offset `c_ik = log Σ_{l≠k} exp(η_il)`,
//! which is PG-augmented, so each coefficient column has a Gaussian full
//! conditional with the tree-structured precision `UᵀΩU + D⁻¹`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::pg::sample_pg_unchecked;
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, softmax_into};
use crate::tree::{linear_predictor, CoefficientMatrix, Cpt, DesignMatrix};
use crate::treechol::TreeFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// `λ_j = 1`.
    Ridge,
    Horseshoe,
}

/// Prior on a scale parameter `s` (the global `τ` or a local `λ_j`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScalePrior {
    /// `s ~ C⁺(0, 1)`, sampled through an inverse-gamma auxiliary variable.
    HalfCauchy,
    /// `s² ~ IG(a, b)`, conjugate.
    InverseGamma { a: f64, b: f64 },
    /// `s ~ IG(a, b)` on the scale itself, slice-sampled on `log s`.
    InverseGammaScale { a: f64, b: f64 },
}

impl ScalePrior {
    pub fn inverse_gamma_half() -> Self {
        ScalePrior::InverseGamma { a: 0.5, b: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsConfig {
    pub prior: Prior,
    pub tau_prior: ScalePrior,
    /// Only used by the horseshoe.
    pub lambda_prior: ScalePrior,
    pub burn_in: usize,
    pub n_samples: usize,
    pub thin: usize,
    pub seed: u64,
    /// Holds `τ` at this value instead of sampling it.
    #[serde(default)]
    pub fixed_tau: Option<f64>,
    /// Explicit PG series terms.
    pub pg_terms: usize,
    /// Prior variance of unpenalized (intercept) columns.
    pub intercept_variance: f64,
}

impl GlsConfig {
    fn base(prior: Prior, tau_prior: ScalePrior, lambda_prior: ScalePrior) -> Self {
        GlsConfig {
            prior,
            tau_prior,
            lambda_prior,
            burn_in: 100,
            n_samples: 400,
            thin: 1,
            seed: 0,
            fixed_tau: None,
            pg_terms: 2,
            intercept_variance: 100.0,
        }
    }

    /// Bayesian ridge with `τ² ~ IG(1/2, 1/2)`.
    pub fn ridge_ig() -> Self {
        Self::base(Prior::Ridge, ScalePrior::inverse_gamma_half(), ScalePrior::HalfCauchy)
    }

    /// Bayesian ridge with `τ ~ C⁺(0, 1)`.
    pub fn ridge_hc() -> Self {
        Self::base(Prior::Ridge, ScalePrior::HalfCauchy, ScalePrior::HalfCauchy)
    }

    /// Horseshoe: half-Cauchy global and local scales.
    pub fn hs() -> Self {
        Self::base(Prior::Horseshoe, ScalePrior::HalfCauchy, ScalePrior::HalfCauchy)
    }

    /// Horseshoe with inverse-gamma global and local scales.
    pub fn hs_ig() -> Self {
        Self::base(
            Prior::Horseshoe,
            ScalePrior::inverse_gamma_half(),
            ScalePrior::inverse_gamma_half(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 || self.thin < 1 || self.pg_terms < 1 {
            return Err(Error::config("n_samples, thin and pg_terms must be >= 1"));
        }
        if !(self.intercept_variance > 0.0) {
            return Err(Error::config("intercept variance must be > 0"));
        }
        for p in [self.tau_prior, self.lambda_prior] {
            if let ScalePrior::InverseGamma { a, b } | ScalePrior::InverseGammaScale { a, b } = p {
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::config("inverse-gamma shape and scale must be > 0"));
                }
            }
        }
        if let Some(t) = self.fixed_tau {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::config("fixed tau must be > 0"));
            }
        }
        Ok(())
    }
}

/// Sampler state. Auxiliary variables of the half-Cauchy decompositions are
/// carried alongside the scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageState {
    pub b: CoefficientMatrix,
    /// PG auxiliaries, `n_rows × |X_c|`.
    pub omega: Vec<f64>,
    /// Local scales per design column (1 for ridge and for unpenalized columns).
    pub lambda: Vec<f64>,
    pub tau: f64,
    pub xi: f64,
    pub nu: Vec<f64>,
}

impl ShrinkageState {
    /// `B = 0`, unit scales, `ω = N/4`.
    pub fn initial(design: &DesignMatrix, cfg: &GlsConfig) -> Self {
        let c = design.n_values();
        let mut omega = vec![0.0; design.n_rows() * c];
        for i in 0..design.n_rows() {
            let total: f64 = design.row_counts(i).iter().sum();
            omega[i * c..(i + 1) * c].fill(total / 4.0);
        }
        ShrinkageState {
            b: CoefficientMatrix::zeros(design.n_cols(), c),
            omega,
            lambda: vec![1.0; design.n_cols()],
            tau: cfg.fixed_tau.unwrap_or(1.0),
            xi: 1.0,
            nu: vec![1.0; design.n_cols()],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.tau > 0.0
            && self.tau.is_finite()
            && self.lambda.iter().all(|&l| l > 0.0 && l.is_finite())
            && self.omega.iter().all(|&w| w >= 0.0 && w.is_finite())
            && self.b.values.iter().all(|v| v.is_finite())
    }
}

fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale).expect("positive IG parameters").sample(rng);
    1.0 / g
}

/// Draws a scale (and its auxiliary) from its prior.
fn prior_scale<R: Rng + ?Sized>(prior: ScalePrior, rng: &mut R) -> (f64, f64) {
    match prior {
        ScalePrior::HalfCauchy => {
            let aux = inv_gamma(0.5, 1.0, rng);
            (inv_gamma(0.5, 1.0 / aux, rng).sqrt(), aux)
        }
        ScalePrior::InverseGamma { a, b } => (inv_gamma(a, b, rng).sqrt(), 1.0),
        ScalePrior::InverseGammaScale { a, b } => (inv_gamma(a, b, rng), 1.0),
    }
}

/// Forward draw of the full state from the prior (data-free).
pub fn sample_prior<R: Rng + ?Sized>(design: &DesignMatrix, cfg: &GlsConfig, rng: &mut R) -> ShrinkageState {
    let mut state = ShrinkageState::initial(design, cfg);
    match cfg.fixed_tau {
        Some(t) => state.tau = t,
        None => (state.tau, state.xi) = prior_scale(cfg.tau_prior, rng),
    }
    let c = design.n_values();
    for j in 0..design.n_cols() {
        let sd = if !design.penalized()[j] {
            cfg.intercept_variance.sqrt()
        } else {
            if cfg.prior == Prior::Horseshoe {
                (state.lambda[j], state.nu[j]) = prior_scale(cfg.lambda_prior, rng);
            }
            state.lambda[j] * state.tau
        };
        for v in 0..c {
            let z: f64 = StandardNormal.sample(rng);
            state.b.values[j * c + v] = sd * z;
        }
    }
    state
}

/// One full sweep: for each child value, PG auxiliaries then the coefficient
/// column; then local and global scales.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ShrinkageState,
    design: &DesignMatrix,
    cfg: &GlsConfig,
    rng: &mut R,
) -> Result<()> {
    let c = design.n_values();
    let n = design.n_cols();
    let rows = design.n_rows();
    let mut eta = linear_predictor(&state.b, design)?;
    let totals: Vec<f64> = (0..rows).map(|i| design.row_counts(i).iter().sum()).collect();
    let mut factor = TreeFactor::new(design.col_parent(), 1);
    let mut offset = vec![0.0; rows];
    let mut others = vec![0.0; c.saturating_sub(1)];
    let mut rhs_own = vec![0.0; rows];
    let mut omega_k = vec![0.0; rows];

    if n > 0 {
        for k in 0..c {
            for i in 0..rows {
                let h = &eta[i * c..(i + 1) * c];
                let mut m = 0;
                for (l, &x) in h.iter().enumerate() {
                    if l != k {
                        others[m] = x;
                        m += 1;
                    }
                }
                offset[i] = if c > 1 { log_sum_exp(&others) } else { f64::NEG_INFINITY };
                let w = if totals[i] > 0.0 {
                    sample_pg_unchecked(totals[i], h[k] - offset[i], cfg.pg_terms, rng)
                } else {
                    0.0
                };
                state.omega[i * c + k] = w;
                omega_k[i] = w;
                let kappa = design.row_counts(i)[k] - totals[i] / 2.0;
                rhs_own[i] = kappa + if w > 0.0 { w * offset[i] } else { 0.0 };
            }
            let agg = design.subtree_sums(&omega_k, 1);
            let mut rhs = design.subtree_sums(&rhs_own, 1);
            let prior_prec: Vec<f64> = (0..n)
                .map(|j| {
                    if design.penalized()[j] {
                        1.0 / (state.lambda[j] * state.lambda[j] * state.tau * state.tau)
                    } else {
                        1.0 / cfg.intercept_variance
                    }
                })
                .collect();
            let mut ok = false;
            let mut extra = prior_prec.clone();
            let trace: f64 = agg.iter().zip(&prior_prec).map(|(a, p)| a + p).sum();
            for attempt in 0..=3 {
                if attempt > 0 {
                    let jitter = 1e-8 * trace / n as f64;
                    for e in &mut extra {
                        *e += jitter;
                    }
                }
                factor.assemble(&agg, &extra);
                if factor.factor() {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::numeric(format!(
                    "coefficient precision is not positive definite (tau={}, value {k})",
                    state.tau
                )));
            }
            factor.forward(&mut rhs);
            for r in rhs.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *r += z;
            }
            factor.backward(&mut rhs);
            for j in 0..n {
                state.b.values[j * c + k] = rhs[j];
            }
            for i in 0..rows {
                eta[i * c + k] = design.row(i).iter().map(|&j| rhs[j]).sum();
            }
        }
    }
    update_scales(state, design, cfg, rng);
    if !state.is_valid() {
        return Err(Error::numeric("sampler state left the valid region"));
    }
    Ok(())
}

/// Draws local scales (horseshoe only) and then the global scale from their
/// full conditionals given `B`.
pub fn update_scales<R: Rng + ?Sized>(
    state: &mut ShrinkageState,
    design: &DesignMatrix,
    cfg: &GlsConfig,
    rng: &mut R,
) {
    let c = design.n_values();
    let pen: Vec<usize> = (0..design.n_cols()).filter(|&j| design.penalized()[j]).collect();
    let sq: Vec<f64> = (0..design.n_cols())
        .map(|j| state.b.row(j).iter().map(|v| v * v).sum())
        .collect();
    if cfg.prior == Prior::Horseshoe {
        let t2 = state.tau * state.tau;
        for &j in &pen {
            let (l, aux) = draw_scale(cfg.lambda_prior, c as f64, sq[j] / t2, state.lambda[j], state.nu[j], rng);
            state.lambda[j] = l;
            state.nu[j] = aux;
        }
    }
    if let Some(t) = cfg.fixed_tau {
        state.tau = t;
        return;
    }
    let m = (pen.len() * c) as f64;
    let s: f64 = pen.iter().map(|&j| sq[j] / (state.lambda[j] * state.lambda[j])).sum();
    let (t, aux) = draw_scale(cfg.tau_prior, m, s, state.tau, state.xi, rng);
    state.tau = t;
    state.xi = aux;
}

/// Conditional draw of a scale `s` given `m` Gaussian coefficients with
/// variance `s²` whose squared sum is `ss`. Returns `(s, auxiliary)`.
fn draw_scale<R: Rng + ?Sized>(
    prior: ScalePrior,
    m: f64,
    ss: f64,
    current: f64,
    aux: f64,
    rng: &mut R,
) -> (f64, f64) {
    match prior {
        ScalePrior::HalfCauchy => {
            let s2 = inv_gamma((m + 1.0) / 2.0, 1.0 / aux + ss / 2.0, rng);
            let aux = inv_gamma(1.0, 1.0 + 1.0 / s2, rng);
            (s2.sqrt(), aux)
        }
        ScalePrior::InverseGamma { a, b } => (inv_gamma(a + m / 2.0, b + ss / 2.0, rng).sqrt(), aux),
        ScalePrior::InverseGammaScale { a, b } => {
            // log density of u = log s, including the Jacobian.
            let logp = |u: f64| -> f64 { -a * u - b * (-u).exp() - m * u - ss / 2.0 * (-2.0 * u).exp() };
            (slice_sample(logp, current.ln(), 1.0, rng).exp(), aux)
        }
    }
}

/// Univariate slice sampler with stepping out and shrinkage.
fn slice_sample<R: Rng + ?Sized>(logp: impl Fn(f64) -> f64, x0: f64, w: f64, rng: &mut R) -> f64 {
    let level = logp(x0) + rng.random::<f64>().ln();
    let mut lo = x0 - w * rng.random::<f64>();
    let mut hi = lo + w;
    for _ in 0..60 {
        if logp(lo) <= level {
            break;
        }
        lo -= w;
    }
    for _ in 0..60 {
        if logp(hi) <= level {
            break;
        }
        hi += w;
    }
    loop {
        let x = lo + (hi - lo) * rng.random::<f64>();
        if logp(x) > level {
            return x;
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-12 {
            return x0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub tau: f64,
    pub b_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Effective sample size of each retained θ cell (first
    /// [`MAX_ESS_CELLS`] cells).
    pub ess_theta: Vec<f64>,
    pub ess_log_tau: f64,
    pub mean_tau: f64,
    pub n_retained: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

impl ChainDiagnostics {
    pub fn min_ess(&self) -> f64 {
        self.ess_theta.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Columnar text dump: `iteration tau b_norm`.
    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration\ttau\tb_norm")?;
        for r in &self.trace {
            writeln!(w, "{}\t{:.10e}\t{:.10e}", r.iteration, r.tau, r.b_norm)?;
        }
        Ok(())
    }
}

pub const MAX_ESS_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFit {
    /// Posterior mean of `softmax(UB)` over retained draws.
    pub cpt: Cpt,
    pub posterior_mean_b: CoefficientMatrix,
    pub diagnostics: ChainDiagnostics,
}

/// Runs `burn_in + n_samples·thin` sweeps from [`ShrinkageState::initial`]
/// with a generator seeded from `cfg.seed`.
pub fn fit_bayes(design: &DesignMatrix, cfg: &GlsConfig) -> Result<BayesFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    fit_bayes_with_rng(design, cfg, &mut rng)
}

pub fn fit_bayes_with_rng<R: Rng + ?Sized>(design: &DesignMatrix, cfg: &GlsConfig, rng: &mut R) -> Result<BayesFit> {
    cfg.validate()?;
    let c = design.n_values();
    let cells = design.n_rows() * c;
    let tracked = cells.min(MAX_ESS_CELLS);
    let mut state = ShrinkageState::initial(design, cfg);
    let mut theta_sum = vec![0.0; cells];
    let mut b_sum = vec![0.0; state.b.values.len()];
    let mut series = vec![Vec::with_capacity(cfg.n_samples); tracked];
    let mut log_tau = Vec::with_capacity(cfg.n_samples);
    let mut trace = Vec::with_capacity(cfg.burn_in + cfg.n_samples * cfg.thin);
    let mut theta = vec![0.0; cells];
    let total = cfg.burn_in + cfg.n_samples * cfg.thin;
    for it in 1..=total {
        gibbs_sweep(&mut state, design, cfg, rng)?;
        trace.push(TraceRow {
            iteration: it,
            tau: state.tau,
            b_norm: state.b.frobenius_norm(),
        });
        if it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            let eta = linear_predictor(&state.b, design)?;
            for (h, t) in eta.chunks(c).zip(theta.chunks_mut(c)) {
                softmax_into(h, t);
            }
            for (s, t) in theta_sum.iter_mut().zip(&theta) {
                *s += t;
            }
            for (s, v) in b_sum.iter_mut().zip(&state.b.values) {
                *s += v;
            }
            for (cell, s) in series.iter_mut().enumerate() {
                s.push(theta[cell]);
            }
            log_tau.push(state.tau.ln());
        }
    }
    let kept = cfg.n_samples as f64;
    let mut mean: Vec<f64> = theta_sum.iter().map(|s| s / kept).collect();
    // Renormalize away accumulated rounding so rows stay stochastic.
    for row in mean.chunks_mut(c) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|t| *t /= s);
    }
    let mean_tau = log_tau.iter().map(|l| l.exp()).sum::<f64>() / kept;
    Ok(BayesFit {
        cpt: Cpt {
            n_rows: design.n_rows(),
            n_values: c,
            theta: mean,
        },
        posterior_mean_b: CoefficientMatrix {
            n_cols: design.n_cols(),
            n_values: c,
            values: b_sum.iter().map(|s| s / kept).collect(),
        },
        diagnostics: ChainDiagnostics {
            ess_theta: series.iter().map(|s| effective_sample_size(s)).collect(),
            ess_log_tau: effective_sample_size(&log_tau),
            mean_tau,
            n_retained: cfg.n_samples,
            trace,
        },
    })
}

/// Geyer's initial positive sequence estimate of effective sample size.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 1e-300) {
        return n as f64;
    }
    let acf = |lag: usize| -> f64 {
        (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = acf(2 * m) + acf(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau_int = (2.0 * sum - 1.0).max(1e-3);
    n as f64 / tau_int
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_design, predict_cpt, CptTree, DesignOptions};

    fn depth_one(counts: Vec<f64>) -> DesignMatrix {
        let tree = CptTree::from_cardinalities(2, vec![counts.len() / 2]);
        build_design(&tree, DesignOptions::default()).with_counts(counts).unwrap()
    }

    #[test]
    fn prior_only_sweeps_recover_standard_normal() {
        let d = depth_one(vec![0.0; 4]);
        let cfg = GlsConfig {
            fixed_tau: Some(1.0),
            ..GlsConfig::ridge_ig()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = ShrinkageState::initial(&d, &cfg);
        let n = 10_000;
        let mut sumsq = vec![0.0; 4];
        for _ in 0..n {
            gibbs_sweep(&mut state, &d, &cfg, &mut rng).unwrap();
            for (s, v) in sumsq.iter_mut().zip(&state.b.values) {
                *s += v * v;
            }
        }
        for s in sumsq {
            assert!((s / n as f64 - 1.0).abs() < 0.05, "variance {}", s / n as f64);
        }
    }

    #[test]
    fn separated_counts_push_theta_to_extremes() {
        let d = depth_one(vec![50.0, 0.0, 0.0, 50.0]);
        let fit = fit_bayes(&d, &GlsConfig { seed: 3, ..GlsConfig::ridge_ig() }).unwrap();
        assert!(fit.cpt.row(0)[0] > 0.8 && fit.cpt.row(1)[1] > 0.8);
        fit.cpt.validate().unwrap();
    }

    #[test]
    fn uniform_counts_give_uniform_theta() {
        let tree = CptTree::from_cardinalities(3, vec![2, 2]);
        let d = build_design(&tree, DesignOptions::default()).with_counts(vec![20.0; 12]).unwrap();
        let fit = fit_bayes(&d, &GlsConfig { seed: 9, ..GlsConfig::ridge_ig() }).unwrap();
        for t in &fit.cpt.theta {
            assert!((t - 1.0 / 3.0).abs() < 0.02, "{t}");
        }
    }

    #[test]
    fn chains_are_seed_reproducible() {
        let d = depth_one(vec![3.0, 1.0, 2.0, 5.0]);
        for cfg in [GlsConfig::ridge_ig(), GlsConfig::ridge_hc(), GlsConfig::hs(), GlsConfig::hs_ig()] {
            let cfg = GlsConfig { burn_in: 0, n_samples: 1, seed: 11, ..cfg };
            assert_eq!(fit_bayes(&d, &cfg).unwrap(), fit_bayes(&d, &cfg).unwrap());
            let long = GlsConfig { burn_in: 5, n_samples: 20, ..cfg };
            assert_eq!(fit_bayes(&d, &long).unwrap(), fit_bayes(&d, &long).unwrap());
        }
    }

    #[test]
    fn inverse_gamma_tau_update_with_zero_coefficients() {
        // With B = 0, τ² | B ~ IG(1/2 + M/2, 1/2); compare a KS statistic.
        let d = depth_one(vec![1.0; 4]);
        let cfg = GlsConfig::ridge_ig();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = ShrinkageState::initial(&d, &cfg);
        let n = 20_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                update_scales(&mut state, &d, &cfg, &mut rng);
                state.tau * state.tau
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        // M = 4 coefficients: IG(5/2, 1/2), i.e. 1/τ² ~ Gamma(5/2, rate 1/2) = χ²₅.
        let cdf = |x: f64| 1.0 - chi2_5_cdf(1.0 / x);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let f = cdf(x);
                (f - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / (n as f64).sqrt(), "KS {ks}");
    }

    /// Chi-square CDF with 5 degrees of freedom via the regularized lower
    /// incomplete gamma series `P(5/2, x/2)`.
    fn chi2_5_cdf(x: f64) -> f64 {
        let (a, h) = (2.5, x / 2.0);
        let ln_gamma_a1 = 3.323_350_970_447_842_6f64.ln();
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        while term > 1e-17 * sum {
            term *= h / (a + n);
            sum += term;
            n += 1.0;
        }
        (a * h.ln() - h - ln_gamma_a1).exp() * sum
    }

    #[test]
    fn posterior_mean_averages_theta_not_b() {
        let d = depth_one(vec![4.0, 1.0, 1.0, 3.0]);
        let fit = fit_bayes(&d, &GlsConfig { seed: 2, n_samples: 50, ..GlsConfig::ridge_ig() }).unwrap();
        let plug_in = predict_cpt(&fit.posterior_mean_b, &d).unwrap();
        // Softmax is non-linear, so the two differ.
        assert!(fit.cpt.theta.iter().zip(&plug_in.theta).any(|(a, b)| (a - b).abs() > 1e-6));
        for i in 0..2 {
            assert!((fit.cpt.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ess_of_iid_and_sticky_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let iid: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = effective_sample_size(&iid);
        assert!(e > 1500.0 && e < 2600.0, "{e}");
        let mut ar = vec![0.0; 2000];
        for t in 1..2000 {
            let z: f64 = StandardNormal.sample(&mut rng);
            ar[t] = 0.95 * ar[t - 1] + z;
        }
        assert!(effective_sample_size(&ar) < 200.0);
    }

    #[test]
    fn trace_dump_has_one_line_per_sweep() {
        let d = depth_one(vec![3.0, 1.0, 2.0, 5.0]);
        let fit = fit_bayes(&d, &GlsConfig { burn_in: 3, n_samples: 4, thin: 2, ..GlsConfig::ridge_ig() }).unwrap();
        let mut buf = Vec::new();
        fit.diagnostics.write_trace(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 + 8);
    }
}
