//! Newey-West HAC covariance with the Bartlett kernel.
//!
//! ```text
//! Ŝ   = Ω̂₀ + Σ_{l=1..L} (1 − l/(L+1)) (Ω̂_l + Ω̂_lᵀ)
//! Ω̂_l = (1/n) Σ_{t>l} v_t v_{t−l}ᵀ,    v_t = x_t u_t
//! V   = n (XᵀX)⁻¹ Ŝ (XᵀX)⁻¹
//! ```
//!
//! No prewhitening. When `L` is not given it comes from the Newey-West (1994)
//! plug-in rule in [`nw_bandwidth`].

use nalgebra::DMatrix;

use super::{coefficient_table, is_degenerate, least_squares, Backend, FitWarning, RegressError, RegressionFit};
use crate::stats::t_two_sided;

/// Outcome of the automatic bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bandwidth {
    pub lag: usize,
    /// `s⁰ ≤ 0`; the lag was forced to 0.
    pub degenerate: bool,
}

/// Plug-in Bartlett bandwidth from the `n × k` score matrix.
pub fn nw_bandwidth(scores: &DMatrix<f64>) -> Result<Bandwidth, RegressError> {
    let n = scores.nrows();
    if n < 10 {
        return Err(RegressError::InsufficientData(format!(
            "bandwidth selection needs at least 10 observations, got {n}"
        )));
    }
    let f: Vec<f64> = (0..n).map(|t| scores.row(t).sum()).collect();
    let nf = n as f64;
    let m = (4.0 * (nf / 100.0).powf(2.0 / 9.0)).floor() as usize;
    let m = m.min(n - 1);
    let sigma: Vec<f64> = (0..=m)
        .map(|j| (j..n).map(|t| f[t] * f[t - j]).sum::<f64>() / nf)
        .collect();
    let s0 = sigma[0] + 2.0 * sigma[1..].iter().sum::<f64>();
    let s1 = 2.0 * sigma.iter().enumerate().skip(1).map(|(j, s)| j as f64 * s).sum::<f64>();
    if s0 <= 0.0 || !s0.is_finite() {
        return Ok(Bandwidth { lag: 0, degenerate: true });
    }
    let gamma = 1.1447 * ((s1 / s0).powi(2)).powf(1.0 / 3.0);
    let lag = (gamma * nf.powf(1.0 / 3.0)).floor();
    let lag = if lag.is_finite() { (lag.max(0.0) as usize).min(n - 1) } else { 0 };
    Ok(Bandwidth { lag, degenerate: false })
}

/// Bartlett-weighted long-run covariance `Ŝ` of the score rows.
pub fn hac_covariance(scores: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let (n, k) = scores.shape();
    let nf = n as f64;
    let mut s = scores.transpose() * scores / nf;
    for l in 1..=lag.min(n.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let mut omega = DMatrix::zeros(k, k);
        for t in l..n {
            for a in 0..k {
                let va = scores[(t, a)];
                for b in 0..k {
                    omega[(a, b)] += va * scores[(t - l, b)];
                }
            }
        }
        omega /= nf;
        s += (&omega + omega.transpose()) * w;
    }
    s
}

/// OLS coefficients with Newey-West robust t-tests (`n − k` df).
pub fn newey_west_fit(
    design: &DMatrix<f64>,
    y: &[f64],
    bandwidth: Option<usize>,
) -> Result<RegressionFit, RegressError> {
    let ls = least_squares(design, y)?;
    let (n, k) = design.shape();
    let mut scores = design.clone();
    for t in 0..n {
        let u = ls.residuals[t];
        scores.row_mut(t).scale_mut(u);
    }
    let mut warnings = Vec::new();
    let lag = match bandwidth {
        Some(l) => l.min(n - 1),
        None => {
            let bw = nw_bandwidth(&scores)?;
            if bw.degenerate {
                warnings.push(FitWarning::DegenerateScores);
            }
            bw.lag
        }
    };
    let s = hac_covariance(&scores, lag);
    let cov = &ls.xtx_inv * s * &ls.xtx_inv * n as f64;
    let degenerate = is_degenerate(ls.rss, y);
    if degenerate {
        warnings.push(FitWarning::DegenerateFit);
    }
    let df = n - k;
    let coef: Vec<f64> = ls.coef.iter().copied().collect();
    let variances: Vec<f64> = (0..k).map(|j| cov[(j, j)]).collect();
    let (se, tstat, pvalue) =
        coefficient_table(&coef, &variances, degenerate, |t| t_two_sided(t, df as f64));
    Ok(RegressionFit {
        coef,
        se,
        tstat,
        pvalue,
        residuals: ls.residuals.iter().copied().collect(),
        df_resid: df,
        backend: Backend::NeweyWest,
        arima_order: None,
        hac_lag: Some(lag),
        warnings,
    })
}

/// Robust covariance matrix itself, for callers that need more than the diagonal.
#[cfg(test)]
fn newey_west_covariance(
    design: &DMatrix<f64>,
    y: &[f64],
    lag: usize,
) -> Result<DMatrix<f64>, RegressError> {
    let ls = least_squares(design, y)?;
    let n = design.nrows();
    let mut scores = design.clone();
    for t in 0..n {
        scores.row_mut(t).scale_mut(ls.residuals[t]);
    }
    Ok(&ls.xtx_inv * hac_covariance(&scores, lag) * &ls.xtx_inv * n as f64)
}
