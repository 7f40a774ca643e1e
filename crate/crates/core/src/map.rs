//! Penalized-likelihood HLS: multinomial logistic regression on the sparse
//! tree design with ridge or lasso penalties.
//!
//! The objective is `NLL(B) + τ·pen(B)` where the NLL uses total (not
//! averaged) multinomial counts and `pen` skips unpenalized (intercept)
//! columns.

use serde::{Deserialize, Serialize};

use crate::data::stratified_folds;
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, softmax_into};
use crate::tree::{linear_predictor, predict_cpt, CoefficientMatrix, DesignMatrix};
use crate::treechol::TreeFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    Ridge,
    Lasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub objective: f64,
    pub iterations: usize,
    /// Max-abs (sub)gradient at exit.
    pub gradient_norm: f64,
    pub converged: bool,
    /// Objective after each accepted iteration, starting with the initial value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    pub fn ridge() -> Self {
        SolverOptions {
            tolerance: 1e-6,
            max_iter: 500,
        }
    }

    pub fn lasso() -> Self {
        SolverOptions {
            tolerance: 1e-5,
            max_iter: 500,
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::config(format!("tau must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

fn check_shape(design: &DesignMatrix, b: &CoefficientMatrix) -> Result<()> {
    if b.n_cols != design.n_cols() || b.n_values != design.n_values() {
        return Err(Error::contract("coefficient shape does not match the design"));
    }
    Ok(())
}

/// Multinomial negative log-likelihood of the design's counts under `B`.
pub fn negative_log_likelihood(design: &DesignMatrix, b: &CoefficientMatrix) -> Result<f64> {
    let eta = linear_predictor(b, design)?;
    Ok(nll_from_eta(design, &eta))
}

fn nll_from_eta(design: &DesignMatrix, eta: &[f64]) -> f64 {
    let c = design.n_values();
    let mut f = 0.0;
    for i in 0..design.n_rows() {
        let n = design.row_counts(i);
        let total: f64 = n.iter().sum();
        if total == 0.0 {
            continue;
        }
        let h = &eta[i * c..(i + 1) * c];
        f += total * log_sum_exp(h) - n.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
    }
    f
}

fn penalty_value(design: &DesignMatrix, b: &CoefficientMatrix, kind: Penalty) -> f64 {
    let mut s = 0.0;
    for (j, &pen) in design.penalized().iter().enumerate() {
        if pen {
            s += match kind {
                Penalty::Ridge => b.row(j).iter().map(|v| v * v).sum::<f64>(),
                Penalty::Lasso => b.row(j).iter().map(|v| v.abs()).sum::<f64>(),
            };
        }
    }
    s
}

/// Penalized objective `NLL(B) + τ·pen(B)`.
pub fn objective(design: &DesignMatrix, b: &CoefficientMatrix, tau: f64, kind: Penalty) -> Result<f64> {
    check_shape(design, b)?;
    Ok(negative_log_likelihood(design, b)? + tau * penalty_value(design, b, kind))
}

/// Gradient of the NLL plus `2τB` on penalized columns (the ridge gradient).
pub fn gradient(design: &DesignMatrix, b: &CoefficientMatrix, tau: f64) -> Result<Vec<f64>> {
    check_shape(design, b)?;
    let eta = linear_predictor(b, design)?;
    let (_, probs) = probabilities(design, &eta);
    let mut g = nll_gradient(design, &probs);
    add_ridge_gradient(design, b, tau, &mut g);
    Ok(g)
}

fn probabilities(design: &DesignMatrix, eta: &[f64]) -> (f64, Vec<f64>) {
    let c = design.n_values();
    let mut probs = vec![0.0; eta.len()];
    for (h, p) in eta.chunks(c).zip(probs.chunks_mut(c)) {
        softmax_into(h, p);
    }
    (nll_from_eta(design, eta), probs)
}

fn nll_gradient(design: &DesignMatrix, probs: &[f64]) -> Vec<f64> {
    let c = design.n_values();
    let mut resid = vec![0.0; probs.len()];
    for i in 0..design.n_rows() {
        let n = design.row_counts(i);
        let total: f64 = n.iter().sum();
        for v in 0..c {
            resid[i * c + v] = total * probs[i * c + v] - n[v];
        }
    }
    design.subtree_sums(&resid, c)
}

fn add_ridge_gradient(design: &DesignMatrix, b: &CoefficientMatrix, tau: f64, g: &mut [f64]) {
    let c = design.n_values();
    for (j, &pen) in design.penalized().iter().enumerate() {
        if pen {
            for v in 0..c {
                g[j * c + v] += 2.0 * tau * b.values[j * c + v];
            }
        }
    }
}

/// Subtree sums of the per-row Hessian blocks `N_i (diag p − p pᵀ)`.
fn hessian_blocks(design: &DesignMatrix, probs: &[f64]) -> Vec<f64> {
    let c = design.n_values();
    let mut own = vec![0.0; design.n_rows() * c * c];
    for i in 0..design.n_rows() {
        let total: f64 = design.row_counts(i).iter().sum();
        if total == 0.0 {
            continue;
        }
        let p = &probs[i * c..(i + 1) * c];
        let w = &mut own[i * c * c..(i + 1) * c * c];
        for a in 0..c {
            for b in 0..c {
                w[a * c + b] = total * (if a == b { p[a] } else { 0.0 } - p[a] * p[b]);
            }
        }
    }
    design.subtree_sums(&own, c * c)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn nonfinite(what: &str, value: f64) -> Error {
    Error::numeric(format!("{what} is not finite ({value}); coefficients overflowed"))
}

/// Ridge MAP fit with the default tolerance (max-abs gradient ≤ 1e-6, at
/// most 500 Newton iterations), starting from `B = 0`.
pub fn fit_ridge(design: &DesignMatrix, tau: f64) -> Result<(CoefficientMatrix, FitReport)> {
    fit_ridge_with(design, tau, None, SolverOptions::ridge())
}

/// Damped Newton (Levenberg–Marquardt) with Armijo backtracking. The Newton
/// system is solved with a zero-fill block Cholesky over the column tree.
/// Falls back to a gradient step when the damped Newton step fails. Also
/// stops, as converged, once the Newton decrement drops below `1e-14·(1+|f|)`,
/// which large-count fits reach before the absolute gradient tolerance.
pub fn fit_ridge_with(
    design: &DesignMatrix,
    tau: f64,
    init: Option<&CoefficientMatrix>,
    opts: SolverOptions,
) -> Result<(CoefficientMatrix, FitReport)> {
    check_tau(tau)?;
    let c = design.n_values();
    let n = design.n_cols();
    let mut b = match init {
        Some(b0) => {
            check_shape(design, b0)?;
            b0.clone()
        }
        None => CoefficientMatrix::zeros(n, c),
    };
    let eval = |b: &CoefficientMatrix| -> Result<(f64, Vec<f64>)> {
        let eta = linear_predictor(b, design)?;
        let (nll, probs) = probabilities(design, &eta);
        Ok((nll + tau * penalty_value(design, b, Penalty::Ridge), probs))
    };
    let (mut f, mut probs) = eval(&b)?;
    if !f.is_finite() {
        return Err(nonfinite("initial objective", f));
    }
    let mut trace = vec![f];
    let mut factor = TreeFactor::new(design.col_parent(), c);
    let mut mu = 0.0;
    let mut iterations = 0;
    let mut g;
    loop {
        g = nll_gradient(design, &probs);
        add_ridge_gradient(design, &b, tau, &mut g);
        let gmax = max_abs(&g);
        if !gmax.is_finite() {
            return Err(nonfinite("gradient", gmax));
        }
        if gmax <= opts.tolerance || n == 0 {
            return Ok((b, report(f, iterations, gmax, true, trace)));
        }
        if iterations >= opts.max_iter {
            return Ok((b, report(f, iterations, gmax, false, trace)));
        }
        iterations += 1;

        let agg = hessian_blocks(design, &probs);
        let scale: Vec<f64> = (0..n)
            .map(|j| (0..c).map(|a| agg[j * c * c + a * c + a]).sum::<f64>() / c as f64)
            .collect();
        let mut step = None;
        for _ in 0..8 {
            let extra: Vec<f64> = (0..n)
                .map(|j| {
                    let ridge = if design.penalized()[j] { 2.0 * tau } else { 0.0 };
                    // Tiny damping keeps the softmax gauge direction solvable.
                    ridge + mu + 1e-10 * (1.0 + scale[j])
                })
                .collect();
            factor.assemble(&agg, &extra);
            if factor.factor() {
                let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
                factor.solve(&mut d);
                if d.iter().all(|x| x.is_finite()) {
                    step = Some(d);
                    break;
                }
            }
            mu = (mu * 10.0).max(1e-8 * (1.0 + max_abs(&scale)));
        }

        let mut accepted = false;
        if let Some(d) = &step {
            // The predicted decrease is below the objective's resolution: no
            // further progress is representable.
            let decrement: f64 = -g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
            if (0.0..=1e-14 * (1.0 + f.abs())).contains(&decrement) {
                return Ok((b, report(f, iterations, gmax, true, trace)));
            }
        }
        if let Some(d) = step {
            if let Some((nb, nf, np, alpha)) = line_search(&b, &d, &g, f, &eval)? {
                b = nb;
                f = nf;
                probs = np;
                accepted = true;
                mu = if alpha == 1.0 { mu * 0.1 } else { (mu * 4.0).max(1e-8) };
                if mu < 1e-12 {
                    mu = 0.0;
                }
            } else {
                mu = (mu * 10.0).max(1e-6 * (1.0 + max_abs(&scale)));
            }
        }
        if !accepted {
            // Gradient step scaled by the largest curvature.
            let lip = 2.0 * tau + 1.0 + max_abs(&scale) * n.min(64) as f64;
            let d: Vec<f64> = g.iter().map(|x| -x / lip).collect();
            match line_search(&b, &d, &g, f, &eval)? {
                Some((nb, nf, np, _)) => {
                    b = nb;
                    f = nf;
                    probs = np;
                }
                None => {
                    // Rounding floor: no representable decrease is left.
                    return Ok((b, report(f, iterations, gmax, gmax <= opts.tolerance, trace)));
                }
            }
        }
        trace.push(f);
    }
}

type Eval<'a> = dyn Fn(&CoefficientMatrix) -> Result<(f64, Vec<f64>)> + 'a;

#[allow(clippy::type_complexity)]
fn line_search(
    b: &CoefficientMatrix,
    d: &[f64],
    g: &[f64],
    f: f64,
    eval: &Eval<'_>,
) -> Result<Option<(CoefficientMatrix, f64, Vec<f64>, f64)>> {
    let slope: f64 = g.iter().zip(d).map(|(a, b)| a * b).sum();
    if !(slope < 0.0) {
        return Ok(None);
    }
    let mut alpha = 1.0;
    for _ in 0..50 {
        let mut nb = b.clone();
        for (v, dv) in nb.values.iter_mut().zip(d) {
            *v += alpha * dv;
        }
        let (nf, np) = eval(&nb)?;
        if nf.is_finite() && nf <= f + 1e-4 * alpha * slope {
            return Ok(Some((nb, nf, np, alpha)));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

fn report(objective: f64, iterations: usize, gradient_norm: f64, converged: bool, trace: Vec<f64>) -> FitReport {
    FitReport {
        objective,
        iterations,
        gradient_norm,
        converged,
        trace,
    }
}

/// Lasso MAP fit: proximal Newton with an inner coordinate-descent solve of
/// the ℓ1-penalized quadratic model and Armijo backtracking on the full
/// objective. Stops when the subgradient optimality measure is ≤ 1e-5.
pub fn fit_lasso(design: &DesignMatrix, tau: f64) -> Result<(CoefficientMatrix, FitReport)> {
    fit_lasso_with(design, tau, None, SolverOptions::lasso())
}

pub fn fit_lasso_with(
    design: &DesignMatrix,
    tau: f64,
    init: Option<&CoefficientMatrix>,
    opts: SolverOptions,
) -> Result<(CoefficientMatrix, FitReport)> {
    check_tau(tau)?;
    let c = design.n_values();
    let n = design.n_cols();
    let mut b = match init {
        Some(b0) => {
            check_shape(design, b0)?;
            b0.clone()
        }
        None => CoefficientMatrix::zeros(n, c),
    };
    // Rows containing each column.
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..design.n_rows() {
        if design.row_counts(i).iter().sum::<f64>() > 0.0 {
            for &j in design.row(i) {
                col_rows[j].push(i);
            }
        }
    }
    let totals: Vec<f64> = (0..design.n_rows())
        .map(|i| design.row_counts(i).iter().sum())
        .collect();

    let full = |b: &CoefficientMatrix| -> Result<(f64, Vec<f64>)> {
        let eta = linear_predictor(b, design)?;
        let (nll, probs) = probabilities(design, &eta);
        Ok((nll + tau * penalty_value(design, b, Penalty::Lasso), probs))
    };
    let (mut f, mut probs) = full(&b)?;
    if !f.is_finite() {
        return Err(nonfinite("initial objective", f));
    }
    let mut trace = vec![f];
    let mut iterations = 0;
    loop {
        let g = nll_gradient(design, &probs);
        let opt = subgradient_norm(design, &b, &g, tau);
        if !opt.is_finite() {
            return Err(nonfinite("gradient", opt));
        }
        if opt <= opts.tolerance || n == 0 {
            return Ok((b, report(f, iterations, opt, true, trace)));
        }
        if iterations >= opts.max_iter {
            return Ok((b, report(f, iterations, opt, false, trace)));
        }
        iterations += 1;

        let agg = hessian_blocks(design, &probs);
        let d = lasso_direction(design, &b, &g, &probs, &agg, &col_rows, &totals, tau);
        // Armijo on F with the proximal-Newton decrease measure.
        let mut trial = b.clone();
        for (v, dv) in trial.values.iter_mut().zip(&d) {
            *v += dv;
        }
        let delta = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>()
            + tau * (penalty_value(design, &trial, Penalty::Lasso) - penalty_value(design, &b, Penalty::Lasso));
        let mut alpha = 1.0;
        let mut accepted = None;
        if delta < 0.0 {
            for _ in 0..50 {
                let mut nb = b.clone();
                for (v, dv) in nb.values.iter_mut().zip(&d) {
                    *v += alpha * dv;
                }
                let (nf, np) = full(&nb)?;
                if nf.is_finite() && nf <= f + 1e-4 * alpha * delta {
                    accepted = Some((nb, nf, np));
                    break;
                }
                alpha *= 0.5;
            }
        }
        match accepted {
            Some((nb, nf, np)) => {
                b = nb;
                f = nf;
                probs = np;
                trace.push(f);
            }
            None => return Ok((b, report(f, iterations, opt, false, trace))),
        }
    }
}

fn subgradient_norm(design: &DesignMatrix, b: &CoefficientMatrix, g: &[f64], tau: f64) -> f64 {
    let c = design.n_values();
    let mut worst: f64 = 0.0;
    for (j, &pen) in design.penalized().iter().enumerate() {
        for v in 0..c {
            let (gj, bj) = (g[j * c + v], b.values[j * c + v]);
            let r = if !pen {
                gj.abs()
            } else if bj != 0.0 {
                (gj + tau * bj.signum()).abs()
            } else {
                (gj.abs() - tau).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    worst
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[allow(clippy::too_many_arguments)]
fn lasso_direction(
    design: &DesignMatrix,
    b: &CoefficientMatrix,
    g: &[f64],
    probs: &[f64],
    agg: &[f64],
    col_rows: &[Vec<usize>],
    totals: &[f64],
    tau: f64,
) -> Vec<f64> {
    let c = design.n_values();
    let n = design.n_cols();
    let mut d = vec![0.0; n * c];
    let mut deta = vec![0.0; design.n_rows() * c];
    let mut pdot = vec![0.0; design.n_rows()];
    for _sweep in 0..200 {
        let mut biggest: f64 = 0.0;
        for j in 0..n {
            for v in 0..c {
                let mut grad = g[j * c + v];
                for &i in &col_rows[j] {
                    grad += totals[i] * probs[i * c + v] * (deta[i * c + v] - pdot[i]);
                }
                let h = agg[j * c * c + v * c + v] + 1e-10 * (1.0 + agg[j * c * c + v * c + v]);
                let cur = b.values[j * c + v] + d[j * c + v];
                let next = if design.penalized()[j] {
                    soft_threshold(cur - grad / h, tau / h)
                } else {
                    cur - grad / h
                };
                let step = next - cur;
                if step != 0.0 {
                    d[j * c + v] += step;
                    for &i in &col_rows[j] {
                        deta[i * c + v] += step;
                        pdot[i] += probs[i * c + v] * step;
                    }
                    biggest = biggest.max(step.abs());
                }
            }
        }
        if biggest < 1e-11 {
            break;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScoring {
    /// Held-out multinomial log loss.
    LogLoss,
    /// Held-out misclassification count, a generic library default.
    ZeroOne,
}

/// Internal cross-validation settings for choosing the ridge `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub scoring: CvScoring,
}

impl CvConfig {
    /// Evenly spaced grid over `[lo, hi]` scored by held-out log loss.
    pub fn interval(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo <= hi) || lo < 0.0 || points == 0 {
            return Err(Error::config(format!("bad CV interval [{lo}, {hi}] x {points}")));
        }
        let grid = if points == 1 {
            vec![lo]
        } else {
            (0..points)
                .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
                .collect()
        };
        Ok(CvConfig {
            grid,
            folds: 5,
            seed: 0,
            scoring: CvScoring::LogLoss,
        })
    }

    /// Ten log-spaced values over `[1e-4, 1e4]` chosen by held-out accuracy,
    /// as a stock logistic-regression CV routine would do out of the box.
    pub fn naive() -> Self {
        CvConfig {
            grid: (0..10).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 9.0)).collect(),
            folds: 5,
            seed: 0,
            scoring: CvScoring::ZeroOne,
        }
    }
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig::interval(0.0, 5.0, 11).expect("static interval")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub tau: f64,
    /// `(τ, summed held-out loss)` in grid order.
    pub scores: Vec<(f64, f64)>,
    pub fell_back: bool,
}

/// Chooses `τ` from the grid by internal cross-validation over the unit
/// observations behind the counts, then refits on all data. Equal scores go
/// to the larger `τ`. With fewer than `2·folds` observations the fit falls
/// back to `τ = 1`.
pub fn fit_ridge_cv(
    design: &DesignMatrix,
    cv: &CvConfig,
) -> Result<(CoefficientMatrix, FitReport, CvOutcome)> {
    if cv.grid.is_empty() || cv.grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::config("CV grid must be non-empty and non-negative"));
    }
    let c = design.n_values();
    let cells = design.n_rows() * c;
    let mut units = Vec::new();
    for (cell, &n) in design.counts().iter().enumerate() {
        for _ in 0..n.round() as usize {
            units.push(cell);
        }
    }
    if units.len() < 2 * cv.folds.max(2) {
        let (b, rep) = fit_ridge(design, 1.0)?;
        return Ok((b, rep, CvOutcome { tau: 1.0, scores: Vec::new(), fell_back: true }));
    }
    let plan = stratified_folds(&units, cells, cv.folds, cv.seed)?;

    let mut order: Vec<usize> = (0..cv.grid.len()).collect();
    order.sort_by(|&a, &b| cv.grid[b].total_cmp(&cv.grid[a]));
    let mut totals = vec![0.0; cv.grid.len()];
    for fold in 0..cv.folds {
        let mut test = vec![0.0; cells];
        for (u, &cell) in units.iter().enumerate() {
            if plan.assignment[u] == fold {
                test[cell] += 1.0;
            }
        }
        let train: Vec<f64> = design.counts().iter().zip(&test).map(|(a, t)| a - t).collect();
        let train_design = design.clone().with_counts(train)?;
        let mut warm: Option<CoefficientMatrix> = None;
        for &k in &order {
            let (b, _) = fit_ridge_with(&train_design, cv.grid[k], warm.as_ref(), SolverOptions::ridge())?;
            let cpt = predict_cpt(&b, design)?;
            totals[k] += held_out_loss(&cpt.theta, &test, c, cv.scoring);
            warm = Some(b);
        }
    }
    let mut best = order[0];
    for &k in &order[1..] {
        let margin = 1e-12 * totals[best].abs().max(1.0);
        if totals[k] < totals[best] - margin {
            best = k;
        }
    }
    let tau = cv.grid[best];
    let (b, rep) = fit_ridge(design, tau)?;
    let scores = cv.grid.iter().copied().zip(totals).collect();
    Ok((b, rep, CvOutcome { tau, scores, fell_back: false }))
}

fn held_out_loss(theta: &[f64], test: &[f64], c: usize, scoring: CvScoring) -> f64 {
    let mut loss = 0.0;
    for (t, n) in theta.chunks(c).zip(test.chunks(c)) {
        match scoring {
            CvScoring::LogLoss => {
                for (p, k) in t.iter().zip(n) {
                    if *k > 0.0 {
                        loss -= k * p.max(1e-300).ln();
                    }
                }
            }
            CvScoring::ZeroOne => {
                let arg = t
                    .iter()
                    .enumerate()
                    .fold(0, |best, (v, &p)| if p > t[best] { v } else { best });
                loss += n.iter().sum::<f64>() - n[arg];
            }
        }
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_design, CptTree, DesignOptions};
    use proptest::prelude::*;

    fn depth_one(counts: Vec<f64>, c: usize) -> DesignMatrix {
        let tree = CptTree::from_cardinalities(c, vec![counts.len() / c]);
        build_design(&tree, DesignOptions::default()).with_counts(counts).unwrap()
    }

    /// Dense brute-force gradient descent on the explicit 0/1 matrix.
    fn dense_gd(design: &DesignMatrix, tau: f64) -> Vec<f64> {
        let u = design.to_dense();
        let (l, n, c) = (design.n_rows(), design.n_cols(), design.n_values());
        let mut b = vec![0.0; n * c];
        let step = 1.0 / (design.total_count() * (n as f64) + 2.0 * tau + 1.0);
        for _ in 0..200_000 {
            let mut g = vec![0.0; n * c];
            for i in 0..l {
                let h: Vec<f64> = (0..c)
                    .map(|v| (0..n).map(|j| f64::from(u[i][j]) * b[j * c + v]).sum())
                    .collect();
                let z: f64 = h.iter().map(|x| x.exp()).sum();
                let total: f64 = design.row_counts(i).iter().sum();
                for j in 0..n {
                    if u[i][j] == 1 {
                        for v in 0..c {
                            g[j * c + v] += total * h[v].exp() / z - design.row_counts(i)[v];
                        }
                    }
                }
            }
            for j in 0..n * c {
                g[j] += 2.0 * tau * b[j];
            }
            if g.iter().all(|x| x.abs() < 1e-10) {
                break;
            }
            for j in 0..n * c {
                b[j] -= step * g[j];
            }
        }
        b
    }

    #[test]
    fn zero_parent_design_is_empty_fit() {
        let tree = CptTree::from_cardinalities(2, vec![]);
        let d = build_design(&tree, DesignOptions::default()).with_counts(vec![3.0, 1.0]).unwrap();
        let (b, rep) = fit_ridge(&d, 1.0).unwrap();
        assert_eq!(b.values.len(), 0);
        assert!(rep.converged);
        // With an unpenalized intercept the fit recovers the marginal.
        let di = build_design(&tree, DesignOptions { drop_last_column: true, intercept: true })
            .with_counts(vec![3.0, 1.0])
            .unwrap();
        let (b, _) = fit_ridge(&di, 1.0).unwrap();
        let cpt = predict_cpt(&b, &di).unwrap();
        assert!((cpt.theta[0] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn huge_tau_shrinks_to_uniform() {
        let d = depth_one(vec![9.0, 1.0, 0.0, 4.0, 2.0, 2.0], 2);
        let (b, _) = fit_ridge(&d, 1e8).unwrap();
        assert!(b.frobenius_norm() <= 1e-3);
        let cpt = predict_cpt(&b, &d).unwrap();
        assert!(cpt.theta.iter().all(|t| (t - 0.5).abs() < 1e-4));
    }

    #[test]
    fn depth_one_matches_dense_oracle() {
        let d = depth_one(vec![3.0, 1.0, 0.0, 4.0], 2);
        let (b, rep) = fit_ridge(&d, 1.0).unwrap();
        assert!(rep.converged && rep.gradient_norm <= 1e-6);
        let oracle = dense_gd(&d, 1.0);
        for (x, y) in b.values.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }

    #[test]
    fn lasso_kills_everything_at_large_tau() {
        let d = depth_one(vec![3.0, 1.0, 0.0, 4.0], 2);
        let (b, rep) = fit_lasso(&d, 100.0).unwrap();
        assert!(rep.converged);
        assert!(b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lasso_at_zero_matches_ridge_at_zero() {
        let tree = CptTree::from_cardinalities(2, vec![2, 2]);
        let d = build_design(&tree, DesignOptions::default())
            .with_counts(vec![3.0, 1.0, 2.0, 2.0, 1.0, 4.0, 5.0, 2.0])
            .unwrap();
        let (br, rr) = fit_ridge(&d, 0.0).unwrap();
        let (bl, rl) = fit_lasso(&d, 0.0).unwrap();
        assert!(rr.converged && rl.converged);
        let (tr, tl) = (predict_cpt(&br, &d).unwrap(), predict_cpt(&bl, &d).unwrap());
        for (a, b) in tr.theta.iter().zip(&tl.theta) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn lasso_depth_one_matches_dense_subgradient() {
        let d = depth_one(vec![6.0, 1.0, 1.0, 4.0, 2.0, 3.0], 2);
        let tau = 0.5;
        let (b, rep) = fit_lasso(&d, tau).unwrap();
        assert!(rep.converged);
        // Oracle: plain proximal gradient.
        let (n, c) = (d.n_cols(), 2);
        let mut x = vec![0.0; n * c];
        let step = 1.0 / (d.total_count() * n as f64);
        for _ in 0..400_000 {
            let bx = CoefficientMatrix { n_cols: n, n_values: c, values: x.clone() };
            let g = gradient(&d, &bx, 0.0).unwrap();
            for k in 0..n * c {
                x[k] = soft_threshold(x[k] - step * g[k], step * tau);
            }
        }
        // The l1 penalty is flat along the softmax gauge, so only theta is unique.
        let ox = CoefficientMatrix { n_cols: n, n_values: c, values: x };
        let (t1, t2) = (predict_cpt(&b, &d).unwrap(), predict_cpt(&ox, &d).unwrap());
        for (a, o) in t1.theta.iter().zip(&t2.theta) {
            assert!((a - o).abs() < 1e-4, "{a} vs {o}");
        }
        let (f1, f2) = (
            objective(&d, &b, tau, Penalty::Lasso).unwrap(),
            objective(&d, &ox, tau, Penalty::Lasso).unwrap(),
        );
        assert!(f1 <= f2 + 1e-8);
    }

    #[test]
    fn cv_grid_of_one_is_plain_fit() {
        let d = depth_one(vec![3.0, 1.0, 0.0, 4.0, 5.0, 2.0], 2);
        let cv = CvConfig { grid: vec![1.0], ..CvConfig::default() };
        let (b, _, out) = fit_ridge_cv(&d, &cv).unwrap();
        assert_eq!(out.tau, 1.0);
        assert_eq!(b, fit_ridge(&d, 1.0).unwrap().0);
    }

    #[test]
    fn cv_no_signal_picks_largest_tau() {
        let d = depth_one(vec![10.0, 10.0, 10.0, 10.0], 2);
        let (_, _, out) = fit_ridge_cv(&d, &CvConfig::default()).unwrap();
        assert_eq!(out.tau, 5.0);
    }

    #[test]
    fn cv_separable_picks_small_tau() {
        let d = depth_one(vec![20.0, 0.0, 0.0, 20.0], 2);
        let (_, _, out) = fit_ridge_cv(&d, &CvConfig::default()).unwrap();
        assert!(out.tau <= 0.5, "chose {}", out.tau);
    }

    #[test]
    fn cv_falls_back_on_tiny_data() {
        let d = depth_one(vec![1.0, 0.0, 0.0, 1.0], 2);
        let (_, _, out) = fit_ridge_cv(&d, &CvConfig::default()).unwrap();
        assert!(out.fell_back && out.tau == 1.0);
    }

    #[test]
    fn objective_is_monotone() {
        let tree = CptTree::from_cardinalities(3, vec![2, 3]);
        let counts: Vec<f64> = (0..18).map(|k| ((k * 7) % 5) as f64).collect();
        let d = build_design(&tree, DesignOptions::default()).with_counts(counts).unwrap();
        for tau in [0.0, 0.1, 1.0] {
            let (_, rep) = fit_ridge(&d, tau).unwrap();
            assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
            let (_, rep) = fit_lasso(&d, tau).unwrap();
            assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            counts in prop::collection::vec(0u8..6, 12),
            vals in prop::collection::vec(-1.0f64..1.0, 15),
            tau in 0.0f64..3.0,
        ) {
            let tree = CptTree::from_cardinalities(3, vec![2, 2]);
            let d = build_design(&tree, DesignOptions::default())
                .with_counts(counts.iter().map(|&x| f64::from(x)).collect())
                .unwrap();
            let b = CoefficientMatrix { n_cols: 5, n_values: 3, values: vals };
            let g = gradient(&d, &b, tau).unwrap();
            for k in 0..15 {
                let h = 1e-5;
                let mut up = b.clone();
                up.values[k] += h;
                let mut dn = b.clone();
                dn.values[k] -= h;
                let fd = (objective(&d, &up, tau, Penalty::Ridge).unwrap()
                    - objective(&d, &dn, tau, Penalty::Ridge).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0));
            }
        }
    }
}
