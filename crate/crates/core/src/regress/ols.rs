use nalgebra::DMatrix;

use super::{coefficient_table, is_degenerate, least_squares, Backend, FitWarning, RegressError, RegressionFit};
use crate::stats::t_two_sided;

/// Ordinary least squares with classical t-tests on `n − k` degrees of freedom.
///
/// A zero residual sum of squares is not an error: the fit carries
/// [`FitWarning::DegenerateFit`] with zero standard errors and p-values of 0.
pub fn ols_fit(design: &DMatrix<f64>, y: &[f64]) -> Result<RegressionFit, RegressError> {
    let ls = least_squares(design, y)?;
    let (n, k) = design.shape();
    let df = n - k;
    let sigma2 = ls.rss / df as f64;
    let degenerate = is_degenerate(ls.rss, y);
    let variances: Vec<f64> = (0..k).map(|j| sigma2 * ls.xtx_inv[(j, j)]).collect();
    let coef: Vec<f64> = ls.coef.iter().copied().collect();
    let (se, tstat, pvalue) =
        coefficient_table(&coef, &variances, degenerate, |t| t_two_sided(t, df as f64));
    Ok(RegressionFit {
        coef,
        se,
        tstat,
        pvalue,
        residuals: ls.residuals.iter().copied().collect(),
        df_resid: df,
        backend: Backend::Ols,
        arima_order: None,
        hac_lag: None,
        warnings: if degenerate { vec![FitWarning::DegenerateFit] } else { vec![] },
    })
}
