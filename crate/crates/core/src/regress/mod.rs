//! Regression backends and residual diagnostics.
//!
//! Three ways of testing a linear-model coefficient:
//!
//! - [`ols_fit`]: ordinary least squares with classical t-tests;
//! - [`newey_west_fit`]: the same coefficients with a Bartlett-kernel HAC
//!   covariance and automatic bandwidth;
//! - [`arima_errors_fit`]: regression with ARIMA errors, orders chosen by a
//!   KPSS test and stepwise AICc search, estimated by Gaussian maximum
//!   likelihood through a Kalman filter.

mod arima;
mod diagnostics;
mod hac;
mod ols;

pub use arima::{arima_errors_fit, arma_loglik, ArimaOrder, OrderSearchConfig};
pub use diagnostics::{acf, kpss_level, ljung_box, KPSS_CRITICAL_5PCT};
pub use hac::{hac_covariance, newey_west_fit, nw_bandwidth, Bandwidth};
pub use ols::ols_fit;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressError {
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("need more observations than columns ({n} rows, {k} columns)")]
    TooFewObservations { n: usize, k: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("likelihood optimisation failed for every candidate order")]
    NonConvergence,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("design has {design} rows but response has {response}")]
    ShapeMismatch { design: usize, response: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ols,
    NeweyWest,
    ArimaErrors,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Ols => "ols",
            Backend::NeweyWest => "newey_west",
            Backend::ArimaErrors => "arima_errors",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ols" => Ok(Backend::Ols),
            "newey-west" | "newey_west" | "nw" => Ok(Backend::NeweyWest),
            "arima" | "arima-errors" | "arima_errors" => Ok(Backend::ArimaErrors),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWarning {
    /// Zero residual sum of squares; standard errors are zero and p-values 0.
    DegenerateFit,
    /// Plug-in bandwidth selection saw a non-positive spectral estimate; L = 0 used.
    DegenerateScores,
}

/// Coefficient table and residuals of one regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Coefficients, intercept first.
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub tstat: Vec<f64>,
    pub pvalue: Vec<f64>,
    pub residuals: Vec<f64>,
    pub df_resid: usize,
    pub backend: Backend,
    /// `(p, d, q)` for the ARIMA backend.
    pub arima_order: Option<ArimaOrder>,
    /// Bartlett bandwidth used by the Newey-West backend.
    pub hac_lag: Option<usize>,
    pub warnings: Vec<FitWarning>,
}

/// `n × (1 + columns.len())` design with a leading intercept column.
pub fn design_with_intercept(columns: &[&[f64]]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] })
}

/// Least-squares pieces shared by the backends.
#[derive(Debug, Clone)]
pub(crate) struct LeastSquares {
    pub coef: DVector<f64>,
    /// `(XᵀX)⁻¹`
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

/// QR-based least squares with a column-scaled rank check.
pub(crate) fn least_squares(design: &DMatrix<f64>, y: &[f64]) -> Result<LeastSquares, RegressError> {
    let (n, k) = design.shape();
    if y.len() != n {
        return Err(RegressError::ShapeMismatch { design: n, response: y.len() });
    }
    if n <= k {
        return Err(RegressError::TooFewObservations { n, k });
    }
    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let col_norm = design.column(j).norm();
        if col_norm == 0.0 || r[(j, j)].abs() <= 1e-10 * col_norm {
            return Err(RegressError::RankDeficient);
        }
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let coef = r.solve_upper_triangular(&qty).ok_or(RegressError::RankDeficient)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(RegressError::RankDeficient)?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = yv - design * &coef;
    let rss = residuals.norm_squared();
    Ok(LeastSquares { coef, xtx_inv, residuals, rss })
}

/// Builds the coefficient table from a covariance diagonal, flagging
/// degenerate fits.
pub(crate) fn coefficient_table(
    coef: &[f64],
    variances: &[f64],
    degenerate: bool,
    pval: impl Fn(f64) -> f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut se = Vec::with_capacity(coef.len());
    let mut tstat = Vec::with_capacity(coef.len());
    let mut pvalue = Vec::with_capacity(coef.len());
    for (&b, &v) in coef.iter().zip(variances) {
        if degenerate {
            se.push(0.0);
            tstat.push(f64::INFINITY.copysign(b));
            pvalue.push(0.0);
        } else {
            let s = v.max(0.0).sqrt();
            let t = b / s;
            se.push(s);
            tstat.push(t);
            pvalue.push(if t.is_nan() { 1.0 } else { pval(t) });
        }
    }
    (se, tstat, pvalue)
}

pub(crate) fn is_degenerate(rss: f64, y: &[f64]) -> bool {
    let scale: f64 = y.iter().map(|v| v * v).sum();
    rss <= 1e-20 * (1.0 + scale)
}
