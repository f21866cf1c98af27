//! Dense least squares via chunked Householder QR.
//!
//! Rows are absorbed in fixed-size chunks: each chunk is triangularized
//! independently and the per-chunk factors are merged in chunk order. The
//! chunk boundaries and merge order never depend on the thread count, so the
//! parallel and sequential builds produce bit-identical results.
//!
//! Normal equations are deliberately avoided; rank problems are detected from
//! the R diagonal with tolerance `RANK_TOL * max|R_ii|`.

use crate::error::{Error, Result};
use crate::exec;

/// Relative tolerance on the R diagonal for declaring a column dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Rows per QR chunk. Fixed so that results do not depend on parallelism.
const CHUNK_ROWS: usize = 8192;

/// Upper-triangular factor of `[X y]` plus the accumulated residual norm.
///
/// State is a `(p+1) x (p+1)` upper triangle stored column-major: the leading
/// `p x p` block is R, column `p` holds `Q'y` in its first `p` entries, and
/// entry `(p, p)` is the norm of the part of `y` orthogonal to the columns.
#[derive(Clone)]
pub struct QrAccum {
    p: usize,
    /// (p+1) x (p+1), column-major.
    tri: Vec<f64>,
}

impl QrAccum {
    pub fn new(p: usize) -> Self {
        QrAccum { p, tri: vec![0.0; (p + 1) * (p + 1)] }
    }

    /// Absorb `m` dense rows of `[x_1..x_p, y]`, each of length `p + 1`.
    pub fn absorb(&mut self, rows: &[f64]) {
        let w = self.p + 1;
        debug_assert_eq!(rows.len() % w, 0);
        let m = rows.len() / w;
        if m == 0 {
            return;
        }
        let nr = w + m;
        // Column-major workspace: current triangle on top, new rows below.
        let mut work = vec![0.0; nr * w];
        for c in 0..w {
            for r in 0..=c.min(w - 1) {
                work[c * nr + r] = self.tri[c * w + r];
            }
            for i in 0..m {
                work[c * nr + w + i] = rows[i * w + c];
            }
        }
        householder_upper(&mut work, nr, w);
        for c in 0..w {
            for r in 0..=c {
                self.tri[c * w + r] = work[c * nr + r];
            }
        }
        // Fold the rest of the y column into the residual norm slot.
        let ycol = &work[self.p * nr..(self.p + 1) * nr];
        let mut rho2 = ycol[self.p] * ycol[self.p];
        for &v in &ycol[w..] {
            rho2 += v * v;
        }
        self.tri[self.p * w + self.p] = rho2.sqrt();
    }

    /// Merge another accumulator (same p) by absorbing its triangle as rows.
    pub fn merge(&mut self, other: &QrAccum) {
        let w = self.p + 1;
        let mut rows = vec![0.0; w * w];
        for c in 0..w {
            for r in 0..=c {
                rows[r * w + c] = other.tri[c * w + r];
            }
        }
        self.absorb(&rows);
    }

    pub fn r_entry(&self, row: usize, col: usize) -> f64 {
        if row > col {
            0.0
        } else {
            self.tri[col * (self.p + 1) + row]
        }
    }

    pub fn qty(&self) -> Vec<f64> {
        (0..self.p).map(|r| self.tri[self.p * (self.p + 1) + r]).collect()
    }

    pub fn resid_norm(&self) -> f64 {
        self.tri[self.p * (self.p + 1) + self.p].abs()
    }

    /// Indices of columns whose R diagonal falls under the rank tolerance.
    pub fn deficient_columns(&self) -> Vec<usize> {
        let max_diag = (0..self.p)
            .map(|j| self.r_entry(j, j).abs())
            .fold(0.0_f64, f64::max);
        if max_diag == 0.0 {
            return (0..self.p).collect();
        }
        (0..self.p)
            .filter(|&j| self.r_entry(j, j).abs() <= RANK_TOL * max_diag)
            .collect()
    }

    /// Solve `R beta = Q'y` by back-substitution. Caller checks rank first.
    pub fn solve(&self) -> Vec<f64> {
        let p = self.p;
        let mut beta = self.qty();
        for j in (0..p).rev() {
            for k in (j + 1)..p {
                let r = self.r_entry(j, k);
                beta[j] -= r * beta[k];
            }
            beta[j] /= self.r_entry(j, j);
        }
        beta
    }

    /// `(X'X)^{-1} = R^{-1} R^{-T}`, returned dense row-major p x p.
    pub fn xtx_inv(&self) -> Vec<f64> {
        let p = self.p;
        // Columns of R^{-1} by back-substitution against unit vectors.
        let mut rinv = vec![0.0; p * p]; // column-major
        for c in 0..p {
            let col = &mut rinv[c * p..(c + 1) * p];
            col[c] = 1.0;
            for j in (0..=c).rev() {
                let mut v = col[j];
                for k in (j + 1)..=c {
                    v -= self.r_entry(j, k) * col[k];
                }
                col[j] = v / self.r_entry(j, j);
            }
        }
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                // (R^{-1} R^{-T})_{ij} = sum_k Rinv[i,k] * Rinv[j,k]
                for k in i.max(j)..p {
                    s += rinv[k * p + i] * rinv[k * p + j];
                }
                out[i * p + j] = s;
            }
        }
        out
    }
}

/// In-place Householder triangularization of a column-major `nr x nc` buffer,
/// eliminating all columns. Entries below the diagonal are left unspecified.
fn householder_upper(w: &mut [f64], nr: usize, nc: usize) {
    let mut v = vec![0.0; nr];
    for j in 0..nc.min(nr.saturating_sub(1)) {
        let alpha = w[j * nr + j];
        let mut sigma = 0.0;
        for r in (j + 1)..nr {
            let x = w[j * nr + r];
            sigma += x * x;
        }
        if sigma == 0.0 {
            continue;
        }
        let mu = (alpha * alpha + sigma).sqrt();
        let beta = if alpha <= 0.0 { mu } else { -mu };
        let tau = (beta - alpha) / beta;
        let denom = alpha - beta;
        v[j] = 1.0;
        for r in (j + 1)..nr {
            v[r] = w[j * nr + r] / denom;
        }
        w[j * nr + j] = beta;
        for c in (j + 1)..nc {
            let col = &mut w[c * nr..(c + 1) * nr];
            let mut s = col[j];
            for r in (j + 1)..nr {
                s += v[r] * col[r];
            }
            s *= tau;
            col[j] -= s;
            for r in (j + 1)..nr {
                col[r] -= s * v[r];
            }
        }
    }
}

/// Accumulate the QR factorization of `[X y]` over fixed-size row chunks.
///
/// `x` is row-major `n x p`. Chunk triangularizations run in parallel; the
/// merge is sequential in chunk order.
pub fn qr_over_rows(x: &[f64], y: &[f64], p: usize) -> QrAccum {
    let n = y.len();
    debug_assert_eq!(x.len(), n * p);
    if n == 0 {
        return QrAccum::new(p);
    }
    let w = p + 1;
    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let partials = exec::map_indexed(n_chunks, |ci| {
        let lo = ci * CHUNK_ROWS;
        let hi = ((ci + 1) * CHUNK_ROWS).min(n);
        let mut rows = vec![0.0; (hi - lo) * w];
        for (ri, r) in (lo..hi).enumerate() {
            rows[ri * w..ri * w + p].copy_from_slice(&x[r * p..(r + 1) * p]);
            rows[ri * w + p] = y[r];
        }
        let mut acc = QrAccum::new(p);
        acc.absorb(&rows);
        acc
    });
    let mut acc = QrAccum::new(p);
    for part in &partials {
        acc.merge(part);
    }
    acc
}

/// Heteroskedasticity-consistent meat `sum e_i^2 x_i x_i'` (row-major p x p),
/// accumulated over fixed chunks and summed in chunk order.
pub fn hc_meat(x: &[f64], resid: &[f64], p: usize) -> Vec<f64> {
    let n = resid.len();
    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let partials = exec::map_indexed(n_chunks, |ci| {
        let lo = ci * CHUNK_ROWS;
        let hi = ((ci + 1) * CHUNK_ROWS).min(n);
        let mut m = vec![0.0; p * p];
        for r in lo..hi {
            let e2 = resid[r] * resid[r];
            let row = &x[r * p..(r + 1) * p];
            for i in 0..p {
                let w = e2 * row[i];
                for j in i..p {
                    m[i * p + j] += w * row[j];
                }
            }
        }
        m
    });
    let mut meat = vec![0.0; p * p];
    for part in &partials {
        for (a, b) in meat.iter_mut().zip(part.iter()) {
            *a += b;
        }
    }
    for i in 0..p {
        for j in 0..i {
            meat[i * p + j] = meat[j * p + i];
        }
    }
    meat
}

/// Explain which earlier columns a rank-deficient column depends on:
/// solves `R[0..j,0..j] c = R[0..j,j]` and reports entries above tolerance.
pub fn dependency_set(acc: &QrAccum, j: usize) -> Vec<usize> {
    let mut c = vec![0.0; j];
    for r in 0..j {
        c[r] = acc.r_entry(r, j);
    }
    for r in (0..j).rev() {
        for k in (r + 1)..j {
            let coef = c[k];
            c[r] -= acc.r_entry(r, k) * coef;
        }
        let d = acc.r_entry(r, r);
        if d.abs() > 0.0 {
            c[r] /= d;
        }
    }
    let scale = c.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    (0..j).filter(|&r| c[r].abs() > 1e-6 * scale).collect()
}

/// Low-level OLS on a row-major design. Returns an error naming dependent
/// columns when the design is exactly collinear.
#[derive(Debug)]
pub struct LsqOut {
    pub beta: Vec<f64>,
    pub resid: Vec<f64>,
    pub rss: f64,
    pub xtx_inv: Vec<f64>,
}

pub fn least_squares(x: &[f64], y: &[f64], p: usize, names: &[String]) -> Result<LsqOut> {
    let n = y.len();
    if n <= p {
        return Err(Error::Underdetermined { n_obs: n, n_params: p });
    }
    let acc = qr_over_rows(x, y, p);
    let bad = acc.deficient_columns();
    if !bad.is_empty() {
        let mut set: Vec<String> = Vec::new();
        for &j in &bad {
            for dep in dependency_set(&acc, j) {
                let nm = names.get(dep).cloned().unwrap_or_else(|| format!("col{dep}"));
                if !set.contains(&nm) {
                    set.push(nm);
                }
            }
            let nm = names.get(j).cloned().unwrap_or_else(|| format!("col{j}"));
            if !set.contains(&nm) {
                set.push(nm);
            }
        }
        return Err(Error::Collinear(set));
    }
    let beta = acc.solve();
    let resid: Vec<f64> = exec::map_indexed(n, |r| {
        let row = &x[r * p..(r + 1) * p];
        let mut f = 0.0;
        for j in 0..p {
            f += row[j] * beta[j];
        }
        y[r] - f
    });
    let rss = resid.iter().map(|e| e * e).sum();
    Ok(LsqOut { beta, resid, rss, xtx_inv: acc.xtx_inv() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn exact_line() {
        // y = 1 + 2x
        let xs = [0.0, 1.0, 2.0, 3.0];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &v in &xs {
            x.extend_from_slice(&[1.0, v]);
            y.push(1.0 + 2.0 * v);
        }
        let out = least_squares(&x, &y, 2, &names(2)).unwrap();
        assert_relative_eq!(out.beta[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.beta[1], 2.0, epsilon = 1e-12);
        assert!(out.rss < 1e-20);
    }

    #[test]
    fn chunked_equals_single_shot() {
        // More rows than one chunk; compare against a plain normal-equations
        // solve on a well-conditioned system.
        let n = 3 * 8192 + 17;
        let mut x = Vec::with_capacity(n * 2);
        let mut y = Vec::with_capacity(n);
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..n {
            let v = next();
            x.extend_from_slice(&[1.0, v]);
            y.push(0.3 - 1.7 * v + 0.01 * next());
        }
        let out = least_squares(&x, &y, 2, &names(2)).unwrap();
        // Closed form simple regression.
        let xm = x.iter().skip(1).step_by(2).sum::<f64>() / n as f64;
        let ym = y.iter().sum::<f64>() / n as f64;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for i in 0..n {
            let d = x[i * 2 + 1] - xm;
            sxx += d * d;
            sxy += d * (y[i] - ym);
        }
        assert_relative_eq!(out.beta[1], sxy / sxx, epsilon = 1e-10);
        assert_relative_eq!(out.beta[0], ym - (sxy / sxx) * xm, epsilon = 1e-10);
    }

    #[test]
    fn duplicate_column_is_collinear() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let v = i as f64;
            x.extend_from_slice(&[1.0, v, v]);
            y.push(v * 2.0);
        }
        let err = least_squares(&x, &y, 3, &names(3)).unwrap_err();
        match err {
            crate::error::Error::Collinear(cols) => {
                assert!(cols.contains(&"x2".to_string()));
                assert!(cols.contains(&"x1".to_string()));
            }
            other => panic!("expected collinear error, got {other:?}"),
        }
    }

    #[test]
    fn xtx_inv_matches_direct_inverse_2x2() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..6 {
            let v = i as f64;
            x.extend_from_slice(&[1.0, v]);
            y.push(1.0 + v + if i % 2 == 0 { 0.1 } else { -0.1 });
        }
        let out = least_squares(&x, &y, 2, &names(2)).unwrap();
        // Direct X'X and inverse.
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for i in 0..6 {
            let v = x[i * 2 + 1];
            a += 1.0;
            b += v;
            d += v * v;
        }
        let det = a * d - b * b;
        assert_relative_eq!(out.xtx_inv[0], d / det, epsilon = 1e-12);
        assert_relative_eq!(out.xtx_inv[1], -b / det, epsilon = 1e-12);
        assert_relative_eq!(out.xtx_inv[3], a / det, epsilon = 1e-12);
    }
}
