//! Small dense least squares with an intercept.
//!
//! Fits are computed from a Householder QR factorization of the design
//! `[1, Z]`. A column whose pivot `|R_jj|` falls below `RANK_TOL` times the
//! column's own norm is reported as rank deficient; columns are never
//! dropped silently. Leverages are the squared row norms of the thin `Q`.

use crate::data::{NamedColumns, TrialDataset};
use crate::error::{Error, Result};

/// Relative pivot threshold for rank detection.
pub const RANK_TOL: f64 = 1e-10;

/// Leverages this close to 1 are treated as exactly 1.
pub const UNIT_LEVERAGE_TOL: f64 = 1e-10;

/// Least-squares solution on a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    /// Intercept first, then one slope per predictor.
    pub coefficients: Vec<f64>,
    /// Fitted values on the rows used for the fit.
    pub fitted: Vec<f64>,
    /// Hat-matrix diagonal on the rows used for the fit.
    pub leverages: Vec<f64>,
}

impl LeastSquares {
    pub fn predict(&self, z: impl IntoIterator<Item = f64>) -> f64 {
        let mut it = self.coefficients.iter();
        let mut value = *it.next().expect("intercept present");
        for (b, x) in it.zip(z) {
            value += b * x;
        }
        value
    }
}

/// Regress `y[rows]` on an intercept plus `columns[·][rows]`.
///
/// `names` label the predictor columns in rank-deficiency reports; `arm` is
/// echoed in errors (use 0 or 1 for arm fits, anything for pooled fits).
pub fn least_squares(
    columns: &[&[f64]],
    names: &[String],
    y: &[f64],
    rows: &[usize],
    arm: u8,
) -> Result<LeastSquares> {
    let m = rows.len();
    let k = columns.len() + 1;
    if m < k + 1 {
        return Err(Error::InsufficientArmSize {
            arm,
            n_arm: m,
            n_params: k - 1,
            required: k + 1,
        });
    }

    // Column-major m x k design.
    let mut a = vec![0.0; m * k];
    a[..m].fill(1.0);
    for (j, col) in columns.iter().enumerate() {
        let dst = &mut a[(j + 1) * m..(j + 2) * m];
        for (d, &r) in dst.iter_mut().zip(rows) {
            *d = col[r];
        }
    }
    let col_norms: Vec<f64> = (0..k).map(|j| norm(&a[j * m..(j + 1) * m])).collect();

    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut diag = vec![0.0; k];
    let mut deficient = Vec::new();
    for j in 0..k {
        let (head, tail) = a.split_at_mut((j + 1) * m);
        let col = &mut head[j * m + j..];
        let x_norm = norm(col);
        let alpha = if col[0] > 0.0 { -x_norm } else { x_norm };
        let mut v = col.to_vec();
        v[0] -= alpha;
        let v_norm2: f64 = v.iter().map(|x| x * x).sum();
        diag[j] = alpha;
        if !(x_norm > RANK_TOL * col_norms[j]) {
            deficient.push(j);
        }
        col[0] = alpha;
        col[1..].fill(0.0);
        if v_norm2 > 0.0 {
            for c in 0..(k - j - 1) {
                let target = &mut tail[c * m + j..(c + 1) * m];
                reflect(&v, v_norm2, target);
            }
        }
        reflectors.push(if v_norm2 > 0.0 { v } else { Vec::new() });
    }
    if !deficient.is_empty() {
        let columns = deficient
            .into_iter()
            .map(|j| if j == 0 { "(intercept)".to_string() } else { names.get(j - 1).cloned().unwrap_or_else(|| format!("#{j}")) })
            .collect();
        return Err(Error::RankDeficient { arm, columns });
    }

    // Q^T y
    let mut qty: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    for (j, v) in reflectors.iter().enumerate() {
        if !v.is_empty() {
            let v2: f64 = v.iter().map(|x| x * x).sum();
            reflect(v, v2, &mut qty[j..]);
        }
    }
    // Back substitution on R.
    let mut coefficients = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = qty[j];
        for c in (j + 1)..k {
            s -= a[c * m + j] * coefficients[c];
        }
        coefficients[j] = s / diag[j];
    }

    // Thin Q columns: Q e_j = H_0 ... H_{k-1} e_j.
    let mut leverages = vec![0.0; m];
    let mut q = vec![0.0; m];
    for j in 0..k {
        q.fill(0.0);
        q[j] = 1.0;
        for (h, v) in reflectors.iter().enumerate().rev() {
            if !v.is_empty() {
                let v2: f64 = v.iter().map(|x| x * x).sum();
                reflect(v, v2, &mut q[h..]);
            }
        }
        for (l, qi) in leverages.iter_mut().zip(&q) {
            *l += qi * qi;
        }
    }

    let fitted = rows
        .iter()
        .map(|&r| coefficients[0] + columns.iter().zip(&coefficients[1..]).map(|(c, b)| b * c[r]).sum::<f64>())
        .collect();

    Ok(LeastSquares {
        coefficients,
        fitted,
        leverages,
    })
}

fn norm(x: &[f64]) -> f64 {
    // Scaled to avoid overflow for large entries.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

fn reflect(v: &[f64], v_norm2: f64, target: &mut [f64]) {
    let s: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * s / v_norm2;
    for (t, vi) in target.iter_mut().zip(v) {
        *t -= f * vi;
    }
}

/// Per-arm OLS working model `ĥ_a`, evaluated at every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingModelFit {
    pub arm: u8,
    /// Intercept first.
    pub coefficients: Vec<f64>,
    /// Predictions for all `n` units, both arms.
    pub fitted_all: Vec<f64>,
    /// Hat-matrix diagonal, aligned with `rows`.
    pub leverages: Vec<f64>,
    /// Dataset indices of the arm's units, in dataset order.
    pub rows: Vec<usize>,
    pub n_arm: usize,
    /// Non-intercept predictor count.
    pub p_params: usize,
}

impl WorkingModelFit {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    pub fn max_leverage(&self) -> f64 {
        self.leverages.iter().copied().fold(0.0, f64::max)
    }

    /// Index (into the dataset) of the first unit with leverage 1, if any.
    pub fn unit_leverage(&self) -> Option<usize> {
        self.leverages
            .iter()
            .position(|&h| h >= 1.0 - UNIT_LEVERAGE_TOL)
            .map(|k| self.rows[k])
    }

    /// Residuals `y_i - ĥ_a(z_i)` for the arm's own units.
    pub fn residuals(&self, y: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&r| y[r] - self.fitted_all[r]).collect()
    }
}

/// Fits `y ~ 1 + predictors` on the units with `treatment == arm`.
pub fn fit_arm_raw(
    treatment: &[u8],
    y: &[f64],
    predictors: &NamedColumns,
    arm: u8,
) -> Result<WorkingModelFit> {
    let n = treatment.len();
    if y.len() != n || predictors.columns().iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch("predictor and outcome lengths differ".into()));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| treatment[i] == arm).collect();
    let cols: Vec<&[f64]> = predictors.columns().iter().map(Vec::as_slice).collect();
    let ls = least_squares(&cols, predictors.names(), y, &rows, arm)?;
    let fitted_all = (0..n)
        .map(|i| ls.predict(cols.iter().map(|c| c[i])))
        .collect();
    Ok(WorkingModelFit {
        arm,
        n_arm: rows.len(),
        p_params: cols.len(),
        coefficients: ls.coefficients,
        fitted_all,
        leverages: ls.leverages,
        rows,
    })
}

/// Fits the arm-`arm` working model on the named covariate/NCO columns.
pub fn fit_arm(data: &TrialDataset, arm: u8, predictor_columns: &[String]) -> Result<WorkingModelFit> {
    let columns = predictor_columns
        .iter()
        .map(|name| {
            data.covariates()
                .get(name)
                .or_else(|| data.ncos().get(name))
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let predictors = NamedColumns::new(predictor_columns.to_vec(), columns)?;
    fit_arm_raw(data.treatment(), data.outcome(), &predictors, arm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("z{j}")).collect()
    }

    #[test]
    fn three_point_design() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0];
        let ls = least_squares(&[&x], &names(1), &y, &[0, 1, 2], 1).unwrap();
        assert!(ls.coefficients[0].abs() < 1e-12);
        assert!((ls.coefficients[1] - 1.0).abs() < 1e-12);
        let expected = [5.0 / 6.0, 1.0 / 3.0, 5.0 / 6.0];
        for (h, e) in ls.leverages.iter().zip(expected) {
            assert!((h - e).abs() < 1e-12, "{h} vs {e}");
        }
    }

    #[test]
    fn intercept_only_is_arm_mean() {
        let y = [1.0, 4.0, 2.0, 9.0, 5.0];
        let ls = least_squares(&[], &[], &y, &[0, 1, 3, 4], 0).unwrap();
        assert!((ls.coefficients[0] - 19.0 / 4.0).abs() < 1e-12);
        for h in ls.leverages {
            assert!((h - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let c = [2.0; 4];
        let y = [1.0, 0.0, 3.0, 2.0];
        match least_squares(&[&x, &c], &names(2), &y, &[0, 1, 2, 3], 0) {
            Err(Error::RankDeficient { columns, .. }) => assert_eq!(columns, vec!["z1".to_string()]),
            other => panic!("{other:?}"),
        }
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!(matches!(
            least_squares(&[&x, &x2], &names(2), &y, &[0, 1, 2, 3], 0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn insufficient_rows() {
        let x = [1.0, 2.0];
        assert!(matches!(
            least_squares(&[&x], &names(1), &[1.0, 2.0], &[0, 1], 1),
            Err(Error::InsufficientArmSize { required: 3, .. })
        ));
    }

    #[test]
    fn arm_fit_predicts_every_unit() {
        let treatment = [1, 1, 1, 0, 0, 0, 1];
        let z = vec![0.5, 1.0, 2.5, -1.0, 0.0, 3.0, 4.0];
        let y = [1.0, 2.2, 4.9, 0.0, 1.0, 1.0, 8.1];
        let preds = NamedColumns::new(vec!["z".into()], vec![z.clone()]).unwrap();
        let fit = fit_arm_raw(&treatment, &y, &preds, 1).unwrap();
        assert_eq!(fit.rows, vec![0, 1, 2, 6]);
        assert_eq!(fit.fitted_all.len(), 7);
        for i in 0..7 {
            let p = fit.intercept() + fit.slopes()[0] * z[i];
            assert!((p - fit.fitted_all[i]).abs() < 1e-12);
        }
        let lev_sum: f64 = fit.leverages.iter().sum();
        assert!((lev_sum - 2.0).abs() < 1e-10);
        assert!(fit.unit_leverage().is_none());
    }
}
