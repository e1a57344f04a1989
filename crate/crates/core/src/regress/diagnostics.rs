use super::RegressError;
use crate::stats::chi_square_sf;

/// 5% critical value of the KPSS level-stationarity statistic.
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;

/// Sample autocorrelation at `lag`.
pub fn acf(series: &[f64], lag: usize) -> Result<f64, RegressError> {
    let n = series.len();
    if lag == 0 || n <= lag {
        return Err(RegressError::InsufficientData(format!("acf lag {lag} needs n > lag, got {n}")));
    }
    let m = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|v| (v - m) * (v - m)).sum();
    if denom <= 0.0 {
        return Err(RegressError::ZeroVariance);
    }
    let num: f64 = (lag..n).map(|t| (series[t] - m) * (series[t - lag] - m)).sum();
    Ok(num / denom)
}

/// Ljung-Box portmanteau statistic and its chi-square p-value with `lag` df.
pub fn ljung_box(residuals: &[f64], lag: usize) -> Result<(f64, f64), RegressError> {
    let n = residuals.len();
    if lag == 0 || n <= lag + 1 {
        return Err(RegressError::InsufficientData(format!(
            "Ljung-Box with lag {lag} needs n > lag + 1, got {n}"
        )));
    }
    let nf = n as f64;
    let mut q = 0.0;
    for j in 1..=lag {
        let r = acf(residuals, j)?;
        q += r * r / (nf - j as f64);
    }
    q *= nf * (nf + 2.0);
    Ok((q, chi_square_sf(q, lag as f64)))
}

/// KPSS level-stationarity statistic with the short Bartlett lag
/// `⌊4 (n/100)^{1/4}⌋`.
pub fn kpss_level(series: &[f64]) -> Result<f64, RegressError> {
    let n = series.len();
    if n < 3 {
        return Err(RegressError::InsufficientData(format!("KPSS needs n ≥ 3, got {n}")));
    }
    let nf = n as f64;
    let m = series.iter().sum::<f64>() / nf;
    let e: Vec<f64> = series.iter().map(|v| v - m).collect();
    let lag = ((4.0 * (nf / 100.0).powf(0.25)).floor() as usize).min(n - 1);
    let gamma = |j: usize| (j..n).map(|t| e[t] * e[t - j]).sum::<f64>() / nf;
    let mut lrv = gamma(0);
    if lrv <= 0.0 {
        return Err(RegressError::ZeroVariance);
    }
    for j in 1..=lag {
        lrv += 2.0 * (1.0 - j as f64 / (lag as f64 + 1.0)) * gamma(j);
    }
    let mut partial = 0.0;
    let mut eta = 0.0;
    for v in &e {
        partial += v;
        eta += partial * partial;
    }
    Ok(eta / (nf * nf * lrv))
}
