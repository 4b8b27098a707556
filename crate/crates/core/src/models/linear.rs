use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub ridge_lambda: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { ridge_lambda: 1.0 }
    }
}

/// Ridge regression on z-scored features with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Coefficients on the standardised features.
    pub coefs: Vec<f64>,
    /// Mean of the training target.
    pub intercept: f64,
}

impl LinearModel {
    /// Slopes in the original feature units.
    pub fn raw_slopes(&self) -> Vec<f64> {
        self.coefs
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| b / s)
            .collect()
    }

    /// Intercept in the original feature units.
    pub fn raw_intercept(&self) -> f64 {
        self.intercept
            - self
                .raw_slopes()
                .iter()
                .zip(&self.means)
                .map(|(b, m)| b * m)
                .sum::<f64>()
    }
}

impl Regressor for LinearModel {
    fn n_features(&self) -> usize {
        self.coefs.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for j in 0..self.coefs.len() {
            acc += self.coefs[j] * (row[j] - self.means[j]) / self.scales[j];
        }
        acc
    }
}

pub fn fit_linear(x: &Matrix, y: &[f64], params: &LinearParams) -> Result<LinearModel> {
    fit_weighted_ridge(x, y, None, params.ridge_lambda)
}

/// Weighted ridge: minimises `sum w_i (y_i - b0 - z_i.b)^2 + lambda |b|^2`
/// where `z` are features standardised with weighted statistics.
pub(crate) fn fit_weighted_ridge(
    x: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<LinearModel> {
    let (n, p) = (x.rows(), x.cols());
    if n == 0 || y.len() != n {
        return Err(Error::InvalidParams(format!(
            "linear fit needs matching non-empty data ({n} rows, {} targets)",
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!("ridge lambda {lambda}")));
    }
    let unit = vec![1.0; n];
    let w = weights.unwrap_or(&unit);
    let wsum: f64 = w.iter().sum();
    if !(wsum > 0.0) {
        return Err(Error::InvalidParams("weights sum to zero".into()));
    }

    let y_mean = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum::<f64>() / wsum;
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    for j in 0..p {
        let m = (0..n).map(|i| w[i] * x.get(i, j)).sum::<f64>() / wsum;
        let var = (0..n).map(|i| w[i] * (x.get(i, j) - m).powi(2)).sum::<f64>() / wsum;
        means[j] = m;
        if var > 0.0 {
            scales[j] = var.sqrt();
        }
    }

    // Normal equations on the standardised, centred design.
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    let mut z = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            z[j] = (x.get(i, j) - means[j]) / scales[j];
        }
        let r = y[i] - y_mean;
        for j in 0..p {
            let wz = w[i] * z[j];
            b[j] += wz * r;
            for k in 0..=j {
                a[j * p + k] += wz * z[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[k * p + j] = a[j * p + k];
        }
        a[j * p + j] += lambda;
    }
    let coefs = cholesky_solve(&mut a, &b, p)?;
    Ok(LinearModel {
        means,
        scales,
        coefs,
        intercept: y_mean,
    })
}

/// Solves the symmetric positive definite system `a x = b` in place.
fn cholesky_solve(a: &mut [f64], b: &[f64], p: usize) -> Result<Vec<f64>> {
    let max_diag = (0..p).map(|j| a[j * p + j]).fold(0.0f64, f64::max);
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > tol) {
            return Err(Error::SingularSystem);
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    let mut x = b.to_vec();
    for i in 0..p {
        let mut s = x[i];
        for k in 0..i {
            s -= a[i * p + k] * x[k];
        }
        x[i] = s / a[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = x[i];
        for k in i + 1..p {
            s -= a[k * p + i] * x[k];
        }
        x[i] = s / a[i * p + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn exact_line() {
        let m = fit_linear(&col(&[1.0, 2.0, 3.0]), &[2.0, 4.0, 6.0], &LinearParams { ridge_lambda: 0.0 })
            .unwrap();
        assert!((m.raw_slopes()[0] - 2.0).abs() < 1e-12);
        assert!(m.raw_intercept().abs() < 1e-12);
        assert!((m.predict_row(&[10.0]) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [2.0, 3.0], [4.0, 4.0], [0.0, 1.0]]).unwrap();
        let m = fit_linear(&x, &[7.0; 4], &LinearParams { ridge_lambda: 0.0 }).unwrap();
        assert!(m.coefs.iter().all(|b| *b == 0.0));
        assert_eq!(m.intercept, 7.0);
    }

    #[test]
    fn huge_lambda_shrinks_to_mean() {
        let m = fit_linear(&col(&[1.0, 2.0, 3.0]), &[2.0, 4.0, 9.0], &LinearParams { ridge_lambda: 1e12 })
            .unwrap();
        assert!(m.coefs[0].abs() < 1e-9);
        assert!((m.predict_row(&[100.0]) - 5.0).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            fit_linear(&x, &[1.0, 2.0, 3.0], &LinearParams { ridge_lambda: 0.0 }),
            Err(Error::SingularSystem)
        ));
        assert!(fit_linear(&x, &[1.0, 2.0, 3.0], &LinearParams { ridge_lambda: 0.1 }).is_ok());
        let constant = col(&[1.0, 1.0, 1.0]);
        assert!(matches!(
            fit_linear(&constant, &[1.0, 2.0, 3.0], &LinearParams { ridge_lambda: 0.0 }),
            Err(Error::SingularSystem)
        ));
    }
}
