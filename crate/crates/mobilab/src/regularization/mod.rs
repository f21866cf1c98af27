//! Penalized first-step estimation: lasso and elastic net by coordinate
//! descent with penalty-exempt regressors, person-level cross-validation,
//! and postselection OLS.
//!
//! The solver minimizes
//!
//! ```text
//! (1/2n) ||y - X b||^2 + lambda * (alpha ||b_pen||_1 + (1-alpha)/2 ||b_pen||_2^2)
//! ```
//!
//! on (optionally) standardized columns, with covariance updates: the Gram
//! matrix is accumulated once and each coordinate update costs O(p).
//! Designs with absorbed person effects must be residualized first; by
//! Frisch-Waugh-Lovell this is equivalent to fitting the effects jointly.

pub mod candidates;

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::substream;

/// Penalty configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PenaltyConfig {
    /// Penalty weight, >= 0.
    pub lambda: f64,
    /// Elastic-net mixing in [0, 1]; 1 = lasso.
    pub alpha: f64,
    /// Column names exempt from the penalty.
    #[serde(default)]
    pub unpenalized: Vec<String>,
    /// Scale columns to unit variance before penalizing (coefficients are
    /// reported on the original scale either way).
    pub standardize: bool,
    pub max_iter: usize,
    /// Convergence: largest standardized-coefficient change in a sweep.
    pub tol: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            lambda: 0.0,
            alpha: 1.0,
            unpenalized: Vec::new(),
            standardize: true,
            max_iter: 100_000,
            tol: 1e-9,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidInput("tol must be > 0".into()));
        }
        Ok(())
    }
}

/// A converged coordinate-descent solution.
#[derive(Debug, Clone)]
pub struct PenalizedFit {
    pub names: Vec<String>,
    /// Coefficients on the original column scale.
    pub coefficients: Vec<f64>,
    /// Names of penalized columns with nonzero coefficients.
    pub selected: Vec<String>,
    pub lambda: f64,
    pub alpha: f64,
    pub n_selected: usize,
    pub objective: f64,
    pub n_sweeps: usize,
    /// Standardized-scale coefficients and the scales, for diagnostics.
    pub std_coefficients: Vec<f64>,
    pub scales: Vec<f64>,
    pub penalized: Vec<bool>,
}

/// Precomputed sufficient statistics of a (residualized) design.
pub struct GramData {
    pub p: usize,
    pub n: usize,
    /// X'X / n, row-major p x p (standardized scale).
    pub gram: Vec<f64>,
    /// X'y / n (standardized scale).
    pub xty: Vec<f64>,
    /// y'y / n.
    pub yty: f64,
    pub names: Vec<String>,
    pub scales: Vec<f64>,
}

/// Column scales: sqrt of mean square (unit scale for zero-variance columns).
fn column_scales(x: &[f64], n: usize, p: usize, standardize: bool) -> Vec<f64> {
    if !standardize {
        return vec![1.0; p];
    }
    let mut sums = vec![0.0f64; p];
    for r in 0..n {
        for j in 0..p {
            sums[j] += x[r * p + j] * x[r * p + j];
        }
    }
    sums.iter()
        .map(|&s| {
            let ms = s / n as f64;
            if ms > 1e-24 {
                ms.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Accumulate Gram statistics over fixed row chunks (deterministic order).
pub fn gram_data(
    x: &[f64],
    y: &[f64],
    p: usize,
    names: &[String],
    standardize: bool,
) -> GramData {
    let n = y.len();
    let scales = column_scales(x, n, p, standardize);
    const CHUNK: usize = 4096;
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>, f64)> = exec::map_indexed(n_chunks, |ci| {
        let lo = ci * CHUNK;
        let hi = ((ci + 1) * CHUNK).min(n);
        let mut g = vec![0.0; p * p];
        let mut c = vec![0.0; p];
        let mut yy = 0.0;
        let mut row = vec![0.0; p];
        for r in lo..hi {
            for j in 0..p {
                row[j] = x[r * p + j] / scales[j];
            }
            let yr = y[r];
            yy += yr * yr;
            for i in 0..p {
                let v = row[i];
                c[i] += v * yr;
                let gi = &mut g[i * p..(i + 1) * p];
                for j in i..p {
                    gi[j] += v * row[j];
                }
            }
        }
        (g, c, yy)
    });
    let mut gram = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    let mut yty = 0.0;
    for (g, c, yy) in &partials {
        for (a, b) in gram.iter_mut().zip(g.iter()) {
            *a += b;
        }
        for (a, b) in xty.iter_mut().zip(c.iter()) {
            *a += b;
        }
        yty += yy;
    }
    let nf = n as f64;
    for i in 0..p {
        for j in 0..i {
            gram[i * p + j] = gram[j * p + i];
        }
    }
    for v in gram.iter_mut() {
        *v /= nf;
    }
    for v in xty.iter_mut() {
        *v /= nf;
    }
    GramData { p, n, gram, xty, yty: yty / nf, names: names.to_vec(), scales }
}

/// The smallest penalty that zeroes every penalized coefficient (lasso).
pub fn lambda_max(g: &GramData, penalized: &[bool], alpha: f64) -> f64 {
    let a = alpha.max(1e-3);
    let mut m = 0.0f64;
    for j in 0..g.p {
        if penalized[j] {
            m = m.max(g.xty[j].abs());
        }
    }
    m / a
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

/// Coordinate descent on precomputed Gram statistics. `beta` (standardized
/// scale) is both the warm start and the output.
fn cd_solve(
    g: &GramData,
    penalized: &[bool],
    lambda: f64,
    alpha: f64,
    max_iter: usize,
    tol: f64,
    beta: &mut [f64],
) -> std::result::Result<(usize, Vec<f64>), (f64, Vec<f64>)> {
    let p = g.p;
    // q = Gram * beta, maintained incrementally.
    let mut q = vec![0.0; p];
    for j in 0..p {
        if beta[j] != 0.0 {
            let bj = beta[j];
            for k in 0..p {
                q[k] += g.gram[k * p + j] * bj;
            }
        }
    }
    let objective = |beta: &[f64], q: &[f64]| -> f64 {
        let mut fit = 0.5 * g.yty;
        let mut pen = 0.0;
        for j in 0..p {
            fit += 0.5 * beta[j] * q[j] - g.xty[j] * beta[j];
            if penalized[j] {
                pen += lambda * (alpha * beta[j].abs() + 0.5 * (1.0 - alpha) * beta[j] * beta[j]);
            }
        }
        fit + pen
    };
    let mut trace = Vec::new();
    for sweep in 0..max_iter {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let gjj = g.gram[j * p + j];
            if gjj <= 0.0 {
                continue;
            }
            // Partial residual correlation: x_j'(r + x_j b_j)/n.
            let z = g.xty[j] - q[j] + gjj * beta[j];
            let new = if penalized[j] {
                soft_threshold(z, alpha * lambda) / (gjj + (1.0 - alpha) * lambda)
            } else {
                z / gjj
            };
            let delta = new - beta[j];
            if delta != 0.0 {
                for k in 0..p {
                    q[k] += g.gram[k * p + j] * delta;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        trace.push(objective(beta, &q));
        if max_delta < tol {
            return Ok((sweep + 1, trace));
        }
    }
    Err((objective(beta, &q), trace))
}

/// Fit the elastic net on a residualized design.
///
/// Penalized coefficients are soft-thresholded; unpenalized columns update
/// without shrinkage. Convergence is declared when the largest coefficient
/// change in a sweep falls below `tol`; hitting `max_iter` first is an error
/// carrying the last iterate and the objective trace.
pub fn cd_fit(
    x: &[f64],
    y: &[f64],
    p: usize,
    names: &[String],
    config: &PenaltyConfig,
) -> Result<PenalizedFit> {
    config.validate()?;
    let g = gram_data(x, y, p, names, config.standardize);
    cd_fit_gram(&g, config)
}

/// As `cd_fit`, on precomputed Gram statistics.
pub fn cd_fit_gram(g: &GramData, config: &PenaltyConfig) -> Result<PenalizedFit> {
    config.validate()?;
    let penalized: Vec<bool> =
        g.names.iter().map(|n| !config.unpenalized.contains(n)).collect();
    let mut beta = vec![0.0; g.p];
    match cd_solve(g, &penalized, config.lambda, config.alpha, config.max_iter, config.tol, &mut beta)
    {
        Ok((n_sweeps, trace)) => {
            Ok(finish_fit(g, &penalized, config, beta, n_sweeps, *trace.last().unwrap()))
        }
        Err((last_objective, trace)) => Err(Error::NoConvergence {
            iters: config.max_iter,
            last_objective,
            coefficients: beta
                .iter()
                .zip(&g.scales)
                .map(|(b, s)| b / s)
                .collect(),
            objective_trace: trace,
        }),
    }
}

fn finish_fit(
    g: &GramData,
    penalized: &[bool],
    config: &PenaltyConfig,
    beta_std: Vec<f64>,
    n_sweeps: usize,
    objective: f64,
) -> PenalizedFit {
    let coefficients: Vec<f64> =
        beta_std.iter().zip(&g.scales).map(|(b, s)| b / s).collect();
    let selected: Vec<String> = (0..g.p)
        .filter(|&j| penalized[j] && beta_std[j] != 0.0)
        .map(|j| g.names[j].clone())
        .collect();
    PenalizedFit {
        names: g.names.clone(),
        n_selected: selected.len(),
        selected,
        coefficients,
        lambda: config.lambda,
        alpha: config.alpha,
        objective,
        n_sweeps,
        std_coefficients: beta_std,
        scales: g.scales.clone(),
        penalized: penalized.to_vec(),
    }
}

/// Largest violation of the stationarity conditions at the solution, on the
/// standardized scale: for penalized j, |x_j'r/n - (1-alpha) lambda b_j| must
/// not exceed alpha lambda when b_j = 0 and must equal sign(b_j) alpha lambda
/// otherwise; unpenalized columns must have zero gradient.
pub fn kkt_violation(x: &[f64], y: &[f64], p: usize, fit: &PenalizedFit) -> f64 {
    let n = y.len();
    // r = y - X b on the original scale equals y - Xs bs on the standardized.
    let mut grad = vec![0.0f64; p]; // x_j' r / n, standardized columns
    for r in 0..n {
        let mut fitted = 0.0;
        for j in 0..p {
            fitted += x[r * p + j] * fit.coefficients[j];
        }
        let e = y[r] - fitted;
        for j in 0..p {
            grad[j] += (x[r * p + j] / fit.scales[j]) * e;
        }
    }
    for v in grad.iter_mut() {
        *v /= n as f64;
    }
    let (l, a) = (fit.lambda, fit.alpha);
    let mut worst = 0.0f64;
    for j in 0..p {
        let b = fit.std_coefficients[j];
        let viol = if !fit.penalized[j] {
            grad[j].abs()
        } else if b == 0.0 {
            (grad[j].abs() - a * l).max(0.0)
        } else {
            (grad[j] - (1.0 - a) * l * b - b.signum() * a * l).abs()
        };
        worst = worst.max(viol);
    }
    worst
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Out-of-fold mean squared error surface over the (alpha, lambda) grids.
#[derive(Debug, Clone)]
pub struct CvSurface {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// mse[a][l] for alpha a, lambda l.
    pub mse: Vec<Vec<f64>>,
}

/// Default 50-point log-spaced lambda grid from lambda_max down by 1e-4.
pub fn default_lambda_grid(lmax: f64) -> Vec<f64> {
    let k = 50;
    (0..k)
        .map(|i| lmax * 10f64.powf(-4.0 * i as f64 / (k - 1) as f64))
        .collect()
}

/// Person-level k-fold cross-validation over the penalty grids.
///
/// Rows of one person never split across folds. Returns the config
/// minimizing mean out-of-fold squared error (ties: larger lambda, then
/// larger alpha) along with the full surface.
pub fn cv_select(
    x: &[f64],
    y: &[f64],
    p: usize,
    names: &[String],
    person_of_row: &[u32],
    lambda_grid: &[f64],
    alpha_grid: &[f64],
    k_folds: usize,
    seed: u64,
    base: &PenaltyConfig,
) -> Result<(PenaltyConfig, CvSurface)> {
    if k_folds < 2 {
        return Err(Error::InvalidInput("k_folds must be >= 2".into()));
    }
    if lambda_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::InvalidInput("empty penalty grid".into()));
    }
    let n = y.len();
    // Distinct persons in first-appearance order.
    let mut persons: Vec<u32> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for &pid in person_of_row {
            if seen.insert(pid) {
                persons.push(pid);
            }
        }
    }
    // Seeded shuffle, then round-robin fold assignment.
    let mut rng = substream(seed, "folds", 0);
    for k in (1..persons.len()).rev() {
        let j = rng.random_range(0..=k);
        persons.swap(k, j);
    }
    let fold_of_person: std::collections::HashMap<u32, usize> =
        persons.iter().enumerate().map(|(i, &pid)| (pid, i % k_folds)).collect();
    let fold_of_row: Vec<usize> = person_of_row.iter().map(|pid| fold_of_person[pid]).collect();

    // Global standardization, then exact per-fold Gram pieces.
    let scales = column_scales(x, n, p, base.standardize);
    let mut fold_n = vec![0usize; k_folds];
    for &f in &fold_of_row {
        fold_n[f] += 1;
    }
    if fold_n.iter().any(|&c| c == 0) {
        return Err(Error::EmptySample("a fold has zero rows".into()));
    }
    let mut fg = vec![vec![0.0f64; p * p]; k_folds];
    let mut fc = vec![vec![0.0f64; p]; k_folds];
    let mut fyy = vec![0.0f64; k_folds];
    {
        let mut row = vec![0.0; p];
        for r in 0..n {
            let f = fold_of_row[r];
            for j in 0..p {
                row[j] = x[r * p + j] / scales[j];
            }
            let yr = y[r];
            fyy[f] += yr * yr;
            let gm = &mut fg[f];
            let cv = &mut fc[f];
            for i in 0..p {
                cv[i] += row[i] * yr;
                for j in i..p {
                    gm[i * p + j] += row[i] * row[j];
                }
            }
        }
        for f in 0..k_folds {
            for i in 0..p {
                for j in 0..i {
                    fg[f][i * p + j] = fg[f][j * p + i];
                }
            }
        }
    }

    let penalized: Vec<bool> = names.iter().map(|nm| !base.unpenalized.contains(nm)).collect();
    // Descending lambda path per (alpha, fold) with warm starts.
    let mut lambdas: Vec<f64> = lambda_grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let folds: Vec<usize> = (0..k_folds).collect();
    let surfaces: Vec<Vec<Vec<f64>>> = exec::map_slice(&folds, |&f| {
        // Training Gram = total minus fold, rescaled to a mean.
        let ntr = (n - fold_n[f]) as f64;
        let mut gtr = vec![0.0; p * p];
        let mut ctr = vec![0.0; p];
        for of in 0..k_folds {
            if of == f {
                continue;
            }
            for (a, b) in gtr.iter_mut().zip(fg[of].iter()) {
                *a += b;
            }
            for (a, b) in ctr.iter_mut().zip(fc[of].iter()) {
                *a += b;
            }
        }
        let mut ytr = 0.0;
        for of in 0..k_folds {
            if of != f {
                ytr += fyy[of];
            }
        }
        for v in gtr.iter_mut() {
            *v /= ntr;
        }
        for v in ctr.iter_mut() {
            *v /= ntr;
        }
        let gd = GramData {
            p,
            n: n - fold_n[f],
            gram: gtr,
            xty: ctr,
            yty: ytr / ntr,
            names: names.to_vec(),
            scales: vec![1.0; p],
        };
        let mut out = vec![vec![f64::NAN; lambdas.len()]; alpha_grid.len()];
        for (ai, &alpha) in alpha_grid.iter().enumerate() {
            let mut beta = vec![0.0; p];
            for (li, &lambda) in lambdas.iter().enumerate() {
                let solved = cd_solve(
                    &gd,
                    &penalized,
                    lambda,
                    alpha,
                    base.max_iter,
                    base.tol,
                    &mut beta,
                );
                if solved.is_err() {
                    break; // leave NaN for the rest of the path
                }
                // Out-of-fold MSE from the fold pieces.
                let nf = fold_n[f] as f64;
                let mut q = 0.0;
                for i in 0..p {
                    if beta[i] == 0.0 {
                        continue;
                    }
                    let mut gi = 0.0;
                    for j in 0..p {
                        gi += fg[f][i * p + j] * beta[j];
                    }
                    q += beta[i] * gi - 2.0 * fc[f][i] * beta[i];
                }
                out[ai][li] = (fyy[f] + q) / nf;
            }
        }
        out
    });

    // Mean over folds; pick the minimizer.
    let mut mse = vec![vec![0.0f64; lambdas.len()]; alpha_grid.len()];
    for s in &surfaces {
        for a in 0..alpha_grid.len() {
            for l in 0..lambdas.len() {
                mse[a][l] += s[a][l] / k_folds as f64;
            }
        }
    }
    let mut best = (0usize, 0usize);
    let mut best_val = f64::INFINITY;
    for l in 0..lambdas.len() {
        for a in 0..alpha_grid.len() {
            let v = mse[a][l];
            if v.is_finite() && v < best_val - 1e-15 {
                best_val = v;
                best = (a, l);
            }
        }
    }
    if !best_val.is_finite() {
        return Err(Error::InvalidInput("cross-validation failed on every grid point".into()));
    }
    let mut cfg = base.clone();
    cfg.alpha = alpha_grid[best.0];
    cfg.lambda = lambdas[best.1];
    Ok((cfg, CvSurface { alphas: alpha_grid.to_vec(), lambdas, mse }))
}

use rand::Rng;

// ---------------------------------------------------------------------------
// Postselection OLS
// ---------------------------------------------------------------------------

/// Unpenalized OLS refit on the selected plus exempt columns. Returns the
/// full coefficient vector (zeros on unselected columns).
pub fn postselection_ols(
    x: &[f64],
    y: &[f64],
    p: usize,
    names: &[String],
    selected: &[String],
    unpenalized: &[String],
) -> Result<Vec<f64>> {
    let keep: Vec<usize> = (0..p)
        .filter(|&j| selected.contains(&names[j]) || unpenalized.contains(&names[j]))
        .collect();
    if keep.is_empty() {
        return Ok(vec![0.0; p]);
    }
    let n = y.len();
    // Drop zero-variance columns (e.g. residualized person-constant mains).
    let mut live = Vec::new();
    for &j in &keep {
        let ss: f64 = (0..n).map(|r| x[r * p + j] * x[r * p + j]).sum();
        if ss > 1e-18 * n as f64 {
            live.push(j);
        }
    }
    let pk = live.len();
    if pk == 0 {
        return Ok(vec![0.0; p]);
    }
    let mut xs = vec![0.0; n * pk];
    for r in 0..n {
        for (k, &j) in live.iter().enumerate() {
            xs[r * pk + k] = x[r * p + j];
        }
    }
    let sub_names: Vec<String> = live.iter().map(|&j| names[j].clone()).collect();
    let fit = crate::regression::solve::least_squares(&xs, y, pk, &sub_names)?;
    let mut out = vec![0.0; p];
    for (k, &j) in live.iter().enumerate() {
        out[j] = fit.beta[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_design(n: usize, p: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<String>) {
        use rand_distr::StandardNormal;
        let mut rng = substream(seed, "test-lasso", 0);
        let mut x = vec![0.0; n * p];
        for v in x.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        // y depends on the first two columns only.
        let mut y = vec![0.0; n];
        for r in 0..n {
            y[r] = 1.5 * x[r * p] - 0.8 * x[r * p + 1]
                + 0.5 * rng.sample::<f64, _>(StandardNormal);
        }
        let names = (0..p).map(|j| format!("x{j}")).collect();
        (x, y, names)
    }

    #[test]
    fn lambda_zero_matches_ols() {
        let (x, y, names) = toy_design(400, 6, 1);
        let cfg = PenaltyConfig { lambda: 0.0, ..Default::default() };
        let fit = cd_fit(&x, &y, 6, &names, &cfg).unwrap();
        let ols = crate::regression::solve::least_squares(&x, &y, 6, &names).unwrap();
        for j in 0..6 {
            assert!(
                (fit.coefficients[j] - ols.beta[j]).abs() < 1e-8,
                "col {j}: {} vs {}",
                fit.coefficients[j],
                ols.beta[j]
            );
        }
    }

    #[test]
    fn null_threshold_zeroes_everything() {
        let (x, y, names) = toy_design(300, 5, 2);
        let g = gram_data(&x, &y, 5, &names, true);
        let lmax = lambda_max(&g, &[true; 5], 1.0);
        let cfg = PenaltyConfig { lambda: lmax * 1.0001, ..Default::default() };
        let fit = cd_fit_gram(&g, &cfg).unwrap();
        assert_eq!(fit.n_selected, 0);
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn single_predictor_soft_threshold_closed_form() {
        // One standardized predictor, alpha = 1: the lasso solution is the
        // soft-thresholded OLS coefficient.
        use rand_distr::StandardNormal;
        let mut rng = substream(3, "test-lasso", 0);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> =
            x.iter().map(|v| 0.9 * v + 0.4 * rng.sample::<f64, _>(StandardNormal)).collect();
        let names = vec!["x0".to_string()];
        let g = gram_data(&x, &y, 1, &names, true);
        let b_ols = g.xty[0] / g.gram[0]; // standardized scale
        for lambda in [0.05, 0.2, 2.0] {
            let cfg = PenaltyConfig { lambda, ..Default::default() };
            let fit = cd_fit_gram(&g, &cfg).unwrap();
            let expect = (b_ols.abs() - lambda / g.gram[0]).max(0.0) * b_ols.signum();
            // gram[0] == 1 after standardization
            assert!(
                (fit.std_coefficients[0] - expect).abs() < 1e-10,
                "lambda {lambda}: {} vs {expect}",
                fit.std_coefficients[0]
            );
        }
    }

    #[test]
    fn kkt_holds_at_solution() {
        let (x, y, names) = toy_design(400, 8, 4);
        for (lambda_rel, alpha) in [(0.5, 1.0), (0.1, 0.75), (0.02, 0.5)] {
            let g = gram_data(&x, &y, 8, &names, true);
            let lmax = lambda_max(&g, &[true; 8], alpha);
            let cfg = PenaltyConfig { lambda: lambda_rel * lmax, alpha, ..Default::default() };
            let fit = cd_fit_gram(&g, &cfg).unwrap();
            let viol = kkt_violation(&x, &y, 8, &fit);
            assert!(viol <= 1e-6, "alpha {alpha} lambda {}: KKT violation {viol}", cfg.lambda);
        }
    }

    #[test]
    fn unpenalized_columns_are_unshrunk() {
        let (x, y, names) = toy_design(400, 6, 5);
        let g = gram_data(&x, &y, 6, &names, true);
        let lmax = lambda_max(&g, &[true; 6], 1.0);
        let cfg = PenaltyConfig {
            lambda: lmax * 2.0,
            unpenalized: vec!["x0".into()],
            ..Default::default()
        };
        let fit = cd_fit_gram(&g, &cfg).unwrap();
        // Every penalized coefficient zero; x0 close to its true loading.
        for j in 1..6 {
            assert_eq!(fit.coefficients[j], 0.0);
        }
        assert!((fit.coefficients[0] - 1.5).abs() < 0.15, "x0 = {}", fit.coefficients[0]);
        let viol = kkt_violation(&x, &y, 6, &fit);
        assert!(viol <= 1e-6);
    }

    #[test]
    fn warm_start_path_objective_is_monotone() {
        let (x, y, names) = toy_design(300, 6, 6);
        let g = gram_data(&x, &y, 6, &names, true);
        let lmax = lambda_max(&g, &[true; 6], 1.0);
        let lambdas = default_lambda_grid(lmax);
        let mut beta = vec![0.0; 6];
        let mut prev_beta = beta.clone();
        for (i, &l) in lambdas.iter().enumerate() {
            prev_beta.copy_from_slice(&beta);
            let (_, trace) =
                cd_solve(&g, &[true; 6], l, 1.0, 100_000, 1e-10, &mut beta).unwrap();
            if i > 0 {
                // Objective at the new solution <= objective of the previous
                // solution evaluated at the new lambda (first trace entry is
                // after one sweep from the warm start, already <= it).
                let obj_of = |b: &[f64]| -> f64 {
                    let mut fit = 0.5 * g.yty;
                    for j in 0..6 {
                        let mut gj = 0.0;
                        for k in 0..6 {
                            gj += g.gram[j * 6 + k] * b[k];
                        }
                        fit += 0.5 * b[j] * gj - g.xty[j] * b[j];
                        fit += l * b[j].abs();
                    }
                    fit
                };
                assert!(
                    obj_of(&beta) <= obj_of(&prev_beta) + 1e-12,
                    "lambda {l}: {} > {}",
                    obj_of(&beta),
                    obj_of(&prev_beta)
                );
            }
            let _ = trace;
        }
    }

    #[test]
    fn selection_invariant_to_column_rescaling() {
        let (mut x, y, names) = toy_design(400, 6, 7);
        let g = gram_data(&x, &y, 6, &names, true);
        let lmax = lambda_max(&g, &[true; 6], 1.0);
        let cfg = PenaltyConfig { lambda: 0.3 * lmax, ..Default::default() };
        let base = cd_fit_gram(&g, &cfg).unwrap();
        // Rescale column 1 by 1000: same selection set with standardize on.
        for r in 0..400 {
            x[r * 6 + 1] *= 1000.0;
        }
        let refit = cd_fit(&x, &y, 6, &names, &cfg).unwrap();
        assert_eq!(base.selected, refit.selected);
    }

    #[test]
    fn cv_single_point_grid_returns_it() {
        let (x, y, names) = toy_design(200, 4, 8);
        let person: Vec<u32> = (0..200u32).map(|r| r / 4).collect();
        let base = PenaltyConfig::default();
        let (cfg, surface) =
            cv_select(&x, &y, 4, &names, &person, &[0.123], &[1.0], 5, 42, &base).unwrap();
        assert_eq!(cfg.lambda, 0.123);
        assert_eq!(surface.lambdas, vec![0.123]);
    }

    #[test]
    fn cv_fold_assignment_deterministic() {
        let (x, y, names) = toy_design(200, 4, 9);
        let person: Vec<u32> = (0..200u32).map(|r| r / 2).collect();
        let base = PenaltyConfig::default();
        let g = gram_data(&x, &y, 4, &names, true);
        let grid = default_lambda_grid(lambda_max(&g, &[true; 4], 1.0));
        let a = cv_select(&x, &y, 4, &names, &person, &grid, &[1.0], 4, 7, &base).unwrap();
        let b = cv_select(&x, &y, 4, &names, &person, &grid, &[1.0], 4, 7, &base).unwrap();
        assert_eq!(a.0.lambda, b.0.lambda);
        assert_eq!(a.1.mse, b.1.mse);
    }

    #[test]
    fn cv_pure_noise_selects_near_null_model() {
        use rand_distr::StandardNormal;
        let mut hits = 0;
        let trials = 20;
        for seed in 0..trials {
            let n = 240;
            let p = 6;
            let mut rng = substream(1000 + seed, "test-noise", 0);
            let mut x = vec![0.0; n * p];
            for v in x.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
            let person: Vec<u32> = (0..n as u32).map(|r| r / 3).collect();
            let g = gram_data(&x, &y, p, &names, true);
            let grid = default_lambda_grid(lambda_max(&g, &[true; 6], 1.0));
            let base = PenaltyConfig::default();
            let (cfg, _) =
                cv_select(&x, &y, p, &names, &person, &grid, &[1.0], 5, seed, &base).unwrap();
            // Position of the selected lambda in the descending grid.
            let mut sorted = grid.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let pos = sorted.iter().position(|&l| l == cfg.lambda).unwrap();
            if pos < sorted.len() / 4 {
                hits += 1;
            }
        }
        assert!(hits * 10 >= trials * 8, "null model chosen in only {hits}/{trials} runs");
    }

    #[test]
    fn postselection_all_columns_equals_ols() {
        let (x, y, names) = toy_design(300, 5, 10);
        let beta = postselection_ols(&x, &y, 5, &names, &names.clone(), &[]).unwrap();
        let ols = crate::regression::solve::least_squares(&x, &y, 5, &names).unwrap();
        for j in 0..5 {
            assert!((beta[j] - ols.beta[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn postselection_from_lambda_zero_matches_cd() {
        let (x, y, names) = toy_design(300, 5, 11);
        let cfg = PenaltyConfig { lambda: 0.0, ..Default::default() };
        let fit = cd_fit(&x, &y, 5, &names, &cfg).unwrap();
        let beta = postselection_ols(&x, &y, 5, &names, &fit.selected, &[]).unwrap();
        for j in 0..5 {
            assert!((beta[j] - fit.coefficients[j]).abs() < 1e-8);
        }
    }
}
