//! De-trending and normalisation of outcome series.
//!
//! Each outcome series is replaced by the residuals of a lowess fit against its
//! collection index, then mapped to approximate normality with the
//! rank-quantile transform `Φ⁻¹((r_i − 0.5)/n)`.

use thiserror::Error;

use crate::stats::normal_quantile;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("lowess needs at least 10 points, got {0}")]
    TooFewPoints(usize),
    #[error("span must lie in (0, 1], got {0}")]
    InvalidSpan(f64),
}

/// Lowess settings. Defaults: span 2/3, three robustifying iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowessConfig {
    pub span: f64,
    pub robust_iters: usize,
}

impl Default for LowessConfig {
    fn default() -> Self {
        LowessConfig { span: 2.0 / 3.0, robust_iters: 3 }
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let a = 1.0 - u * u * u;
        a * a * a
    }
}

fn bisquare(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let a = 1.0 - u * u;
        a * a
    }
}

/// Number of points in each local neighbourhood.
pub(crate) fn neighbourhood_size(n: usize, span: f64) -> usize {
    ((span * n as f64 + 1e-7).floor() as usize).clamp(2, n)
}

/// Weighted local-linear estimate at index `i` (x values are `1..=n`).
fn local_fit(y: &[f64], i: usize, q: usize, robustness: &[f64]) -> f64 {
    let n = y.len();
    // q-th smallest distance from i among equally spaced points
    let mut lo = i;
    let mut hi = i;
    while hi - lo + 1 < q {
        if lo == 0 {
            hi += 1;
        } else if hi == n - 1 || i - (lo - 1) <= (hi + 1) - i {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    let h = (i - lo).max(hi - i) as f64;

    let mut sw = 0.0;
    let mut sx = 0.0;
    for j in lo..=hi {
        let w = tricube((j as f64 - i as f64).abs() / h) * robustness[j];
        sw += w;
        sx += w * j as f64;
    }
    if sw <= 0.0 {
        return y[i];
    }
    let xbar = sx / sw;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for j in lo..=hi {
        let w = tricube((j as f64 - i as f64).abs() / h) * robustness[j] / sw;
        let dx = j as f64 - xbar;
        sy += w * y[j];
        sxx += w * dx * dx;
        sxy += w * dx * y[j];
    }
    let range = (n - 1) as f64;
    if sxx.sqrt() > 1e-3 * range {
        sy + sxy / sxx * (i as f64 - xbar)
    } else {
        sy
    }
}

/// Lowess fitted values of `y` against its collection index.
pub fn lowess_smooth(y: &[f64], cfg: LowessConfig) -> Result<Vec<f64>, PreprocessError> {
    let n = y.len();
    if n < 10 {
        return Err(PreprocessError::TooFewPoints(n));
    }
    if !(cfg.span > 0.0 && cfg.span <= 1.0) {
        return Err(PreprocessError::InvalidSpan(cfg.span));
    }
    let q = neighbourhood_size(n, cfg.span);
    let mut robustness = vec![1.0; n];
    let mut fit: Vec<f64> = (0..n).map(|i| local_fit(y, i, q, &robustness)).collect();
    for _ in 0..cfg.robust_iters {
        let abs_res: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| (a - b).abs()).collect();
        let mean_abs = abs_res.iter().sum::<f64>() / n as f64;
        let scale = 6.0 * crate::stats::median(&abs_res).unwrap_or(0.0);
        if scale < 1e-7 * mean_abs || scale == 0.0 {
            break;
        }
        for (w, r) in robustness.iter_mut().zip(&abs_res) {
            *w = bisquare(r / scale);
        }
        fit = (0..n).map(|i| local_fit(y, i, q, &robustness)).collect();
    }
    Ok(fit)
}

/// Residuals `y − lowess(y)`.
pub fn lowess_detrend(y: &[f64], cfg: LowessConfig) -> Result<Vec<f64>, PreprocessError> {
    let fit = lowess_smooth(y, cfg)?;
    Ok(y.iter().zip(fit).map(|(a, b)| a - b).collect())
}

/// Midranks (1-based) with ties averaged.
pub fn midranks(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && y[order[j + 1]] == y[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-quantile normal transform `Φ⁻¹((r_i − 0.5)/n)` with midranks for ties.
pub fn rank_quantile_transform(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    midranks(y)
        .into_iter()
        .map(|r| {
            // evaluate the upper half through its mirror so that the output
            // is exactly antisymmetric
            let lower = r - 0.5;
            let upper = n - r + 0.5;
            if lower <= upper {
                normal_quantile(lower / n)
            } else {
                -normal_quantile(upper / n)
            }
        })
        .collect()
}

/// Outcome preprocessing applied per participant and feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// `None` skips de-trending.
    pub lowess: Option<LowessConfig>,
    pub rank_transform: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { lowess: Some(LowessConfig::default()), rank_transform: true }
    }
}

/// De-trend, then transform.
pub fn preprocess_outcome(y: &[f64], cfg: PreprocessConfig) -> Result<Vec<f64>, PreprocessError> {
    let detrended = match cfg.lowess {
        Some(l) => lowess_detrend(y, l)?,
        None => y.to_vec(),
    };
    Ok(if cfg.rank_transform { rank_quantile_transform(&detrended) } else { detrended })
}
