//! Dense least squares by Householder QR.
//!
//! Columns whose remaining norm collapses during the factorisation are
//! treated as linearly dependent on earlier columns and get a zero
//! coefficient; callers decide whether that is an error.

/// Relative norm below which a column counts as dependent on earlier ones.
const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    /// One coefficient per input column; zero for dropped columns.
    pub coefficients: Vec<f64>,
    /// Columns found linearly dependent on earlier columns.
    pub dropped: Vec<usize>,
    /// Residual sum of squares.
    pub rss: f64,
}

impl LeastSquares {
    pub fn is_full_rank(&self) -> bool {
        self.dropped.is_empty()
    }
}

/// Minimise ‖A·β − y‖² for column-major `columns` (each of length `y.len()`).
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> LeastSquares {
    let n = y.len();
    let p = columns.len();
    debug_assert!(columns.iter().all(|c| c.len() == n));

    let original_norms: Vec<f64> = columns.iter().map(|c| norm(c)).collect();
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut b = y.to_vec();
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut dropped = Vec::new();

    for j in 0..p {
        let rank = kept.len();
        let tail_norm = if rank < n { norm(&a[j][rank..]) } else { 0.0 };
        if rank >= n || original_norms[j] == 0.0 || tail_norm <= DEPENDENCE_TOL * original_norms[j] {
            dropped.push(j);
            continue;
        }
        let x0 = a[j][rank];
        let alpha = if x0 >= 0.0 { -tail_norm } else { tail_norm };
        let mut v: Vec<f64> = a[j][rank..].to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            let reflect = |col: &mut [f64]| {
                let s: f64 = v.iter().zip(col.iter()).map(|(vi, ci)| vi * ci).sum();
                let f = 2.0 * s / vtv;
                for (ci, vi) in col.iter_mut().zip(&v) {
                    *ci -= f * vi;
                }
            };
            for col in a.iter_mut().skip(j + 1) {
                reflect(&mut col[rank..]);
            }
            reflect(&mut b[rank..]);
        }
        a[j][rank] = alpha;
        for x in a[j][rank + 1..].iter_mut() {
            *x = 0.0;
        }
        kept.push(j);
    }

    let mut coefficients = vec![0.0; p];
    for k in (0..kept.len()).rev() {
        let mut acc = b[k];
        for l in k + 1..kept.len() {
            acc -= a[kept[l]][k] * coefficients[kept[l]];
        }
        coefficients[kept[k]] = acc / a[kept[k]][k];
    }
    let rss = b[kept.len().min(n)..].iter().map(|x| x * x).sum();
    LeastSquares { coefficients, dropped, rss }
}

/// Ordinary least squares with an intercept, reporting fit quality.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub n: usize,
    pub dropped: Vec<usize>,
}

impl LinearFit {
    /// Coefficient of determination. A constant response fitted exactly
    /// reports 1.
    pub fn r_squared(&self) -> f64 {
        if self.tss == 0.0 {
            return if self.rss == 0.0 { 1.0 } else { 0.0 };
        }
        1.0 - self.rss / self.tss
    }

    /// `1 − (1 − R²)(n − 1)/(n − k − 1)` with `k` predictors.
    pub fn adjusted_r_squared(&self) -> f64 {
        let k = self.slopes.len() as f64;
        let n = self.n as f64;
        1.0 - (1.0 - self.r_squared()) * (n - 1.0) / (n - k - 1.0)
    }
}

/// Fit `y ≈ b0 + Σ bj·xj` given predictor columns.
pub fn fit_with_intercept(predictors: &[Vec<f64>], y: &[f64]) -> LinearFit {
    let n = y.len();
    let mut cols = Vec::with_capacity(predictors.len() + 1);
    cols.push(vec![1.0; n]);
    cols.extend(predictors.iter().cloned());
    let ls = least_squares(&cols, y);
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    LinearFit {
        intercept: ls.coefficients[0],
        slopes: ls.coefficients[1..].to_vec(),
        rss: ls.rss,
        tss,
        n,
        dropped: ls.dropped.into_iter().filter(|&j| j > 0).map(|j| j - 1).collect(),
    }
}

fn norm(v: &[f64]) -> f64 {
    // Scaled to avoid overflow on large meter readings.
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = fit_with_intercept(&[x], &y);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.slopes[0] - 2.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
        assert!((fit.adjusted_r_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_column_dropped() {
        let x: Vec<f64> = (0..10).map(|v| (v as f64).sin()).collect();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
        let fit = fit_with_intercept(&[x, x3], &y);
        assert_eq!(fit.dropped, vec![1]);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn overdetermined_residual() {
        // Points (0,0),(1,1),(2,1): least squares line y = 1/6 + x/2, RSS = 1/6.
        let ls = least_squares(&[vec![1.0; 3], vec![0.0, 1.0, 2.0]], &[0.0, 1.0, 1.0]);
        assert!((ls.coefficients[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((ls.coefficients[1] - 0.5).abs() < 1e-12);
        assert!((ls.rss - 1.0 / 6.0).abs() < 1e-12);
    }
}
