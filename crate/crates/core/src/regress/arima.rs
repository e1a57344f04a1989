//! Regression with ARIMA errors.
//!
//! `y = Xβ + η` with `η ~ ARIMA(p, d, q)`. The differencing order comes from a
//! KPSS level test on the OLS residuals (capped at one), `(p, q)` from a
//! stepwise AICc search, and the ARMA parameters from Gaussian maximum
//! likelihood. For fixed ARMA parameters the likelihood is evaluated by a
//! Kalman filter that whitens `y` and every column of `X` at once; `β` and the
//! innovation variance are then profiled out by least squares on the whitened
//! data, so only the ARMA parameters reach the optimiser.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::diagnostics::{kpss_level, KPSS_CRITICAL_5PCT};
use super::{least_squares, Backend, RegressError, RegressionFit};
use crate::stats::z_two_sided;

/// Largest partial autocorrelation the parameter map can produce.
const PACF_BOUND: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

/// Order selection settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSearchConfig {
    pub max_p: usize,
    pub max_q: usize,
    /// 0 disables the KPSS step.
    pub max_d: usize,
    /// Skip the search and fit this order.
    pub fixed: Option<ArimaOrder>,
    pub min_obs: usize,
}

impl Default for OrderSearchConfig {
    fn default() -> Self {
        OrderSearchConfig { max_p: 5, max_q: 5, max_d: 1, fixed: None, min_obs: 30 }
    }
}

impl OrderSearchConfig {
    pub fn fixed(order: ArimaOrder) -> Self {
        OrderSearchConfig { fixed: Some(order), ..Default::default() }
    }
}

/// AR coefficients from partial autocorrelations (Durbin-Levinson); the
/// result is stationary whenever every `|pacf| < 1`.
fn pacf_to_coef(pacf: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(pacf.len());
    for (k, &r) in pacf.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi
}

/// Maps unconstrained optimiser coordinates to a stationary AR part and an
/// invertible MA part.
fn unpack(u: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let squash = |v: &[f64]| v.iter().map(|x| PACF_BOUND * x.tanh()).collect::<Vec<_>>();
    let ar = pacf_to_coef(&squash(&u[..p]));
    let ma = pacf_to_coef(&squash(&u[p..])).into_iter().map(|c| -c).collect();
    (ar, ma)
}

/// Stationary state covariance `P = TPTᵀ + RRᵀ`.
fn stationary_covariance(t: &DMatrix<f64>, r: &DVector<f64>) -> Option<DMatrix<f64>> {
    let m = t.nrows();
    let lhs = DMatrix::identity(m * m, m * m) - t.kronecker(t);
    let rrt = r * r.transpose();
    let rhs = DVector::from_iterator(m * m, rrt.iter().copied());
    let sol = lhs.lu().solve(&rhs)?;
    let p = DMatrix::from_iterator(m, m, sol.iter().copied());
    Some((&p + p.transpose()) * 0.5)
}

/// Kalman whitening of the columns of `z` under a unit-variance ARMA model.
/// Returns standardized innovations and `Σ log F_t`.
fn whiten(z: &DMatrix<f64>, ar: &[f64], ma: &[f64]) -> Option<(DMatrix<f64>, f64)> {
    let (n, cols) = z.shape();
    let m = ar.len().max(ma.len() + 1);
    let mut tm = DMatrix::zeros(m, m);
    for (i, &a) in ar.iter().enumerate() {
        tm[(i, 0)] = a;
    }
    for i in 0..m - 1 {
        tm[(i, i + 1)] = 1.0;
    }
    let mut rv = DVector::zeros(m);
    rv[0] = 1.0;
    for (i, &b) in ma.iter().enumerate() {
        rv[i + 1] = b;
    }
    let p0 = stationary_covariance(&tm, &rv)?;

    // plain row-major buffers; this loop dominates the optimiser's cost
    let tt: Vec<f64> = (0..m * m).map(|k| tm[(k / m, k % m)]).collect();
    let rr: Vec<f64> = (0..m * m).map(|k| rv[k / m] * rv[k % m]).collect();
    let mut p: Vec<f64> = (0..m * m).map(|k| p0[(k / m, k % m)]).collect();
    let mut state = vec![0.0; m * cols];
    let mut next_state = vec![0.0; m * cols];
    let mut tp = vec![0.0; m * m];
    let mut gain = vec![0.0; m];
    let mut v = vec![0.0; cols];
    let mut out = DMatrix::zeros(n, cols);
    let mut sum_log_f = 0.0;
    let mut steady = false;

    for t in 0..n {
        let f = p[0];
        if !(f > 0.0) || !f.is_finite() {
            return None;
        }
        let sf = f.sqrt();
        for c in 0..cols {
            v[c] = z[(t, c)] - state[c];
            out[(t, c)] = v[c] / sf;
        }
        sum_log_f += f.ln();

        // K = T P[:,0] / F
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += tt[i * m + k] * p[k * m];
            }
            gain[i] = acc / f;
        }
        // a ← T a + K v
        for i in 0..m {
            for c in 0..cols {
                let mut acc = gain[i] * v[c];
                for k in 0..m {
                    acc += tt[i * m + k] * state[k * cols + c];
                }
                next_state[i * cols + c] = acc;
            }
        }
        std::mem::swap(&mut state, &mut next_state);

        if !steady {
            // P ← T P Tᵀ + RRᵀ − K Kᵀ F
            for i in 0..m {
                for j in 0..m {
                    let mut acc = 0.0;
                    for k in 0..m {
                        acc += tt[i * m + k] * p[k * m + j];
                    }
                    tp[i * m + j] = acc;
                }
            }
            let mut delta: f64 = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let mut acc = rr[i * m + j] - gain[i] * gain[j] * f;
                    for k in 0..m {
                        acc += tp[i * m + k] * tt[j * m + k];
                    }
                    delta = delta.max((acc - p[i * m + j]).abs());
                    p[i * m + j] = acc;
                }
            }
            steady = delta < 1e-14;
        }
    }
    Some((out, sum_log_f))
}

/// Profiled likelihood at fixed ARMA parameters.
#[derive(Debug, Clone)]
struct Profile {
    loglik: f64,
    beta: DVector<f64>,
    xtx_inv: DMatrix<f64>,
    sigma2: f64,
    innovations: Vec<f64>,
}

fn profile(y: &[f64], x: &DMatrix<f64>, ar: &[f64], ma: &[f64]) -> Option<Profile> {
    let n = y.len();
    let k = x.ncols();
    let z = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { y[i] } else { x[(i, j - 1)] });
    let (w, sum_log_f) = whiten(&z, ar, ma)?;
    let wy: Vec<f64> = w.column(0).iter().copied().collect();
    let (beta, xtx_inv, resid, rss) = if k == 0 {
        let rss = wy.iter().map(|v| v * v).sum::<f64>();
        (DVector::zeros(0), DMatrix::zeros(0, 0), wy, rss)
    } else {
        let wx = w.columns(1, k).into_owned();
        let ls = least_squares(&wx, &wy).ok()?;
        (ls.coef, ls.xtx_inv, ls.residuals.iter().copied().collect(), ls.rss)
    };
    let sigma2 = rss / n as f64;
    if !(sigma2 > 0.0) {
        return None;
    }
    let nf = n as f64;
    let loglik = -0.5 * (nf * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) + sum_log_f);
    loglik.is_finite().then_some(Profile { loglik, beta, xtx_inv, sigma2, innovations: resid })
}

/// Exact Gaussian log-likelihood of a zero-mean ARMA series at given parameters
/// and innovation variance.
pub fn arma_loglik(series: &[f64], ar: &[f64], ma: &[f64], sigma2: f64) -> Option<f64> {
    let z = DMatrix::from_column_slice(series.len(), 1, series);
    let (w, sum_log_f) = whiten(&z, ar, ma)?;
    let n = series.len() as f64;
    let ss: f64 = w.iter().map(|v| v * v).sum();
    Some(-0.5 * (n * (2.0 * std::f64::consts::PI * sigma2).ln() + sum_log_f + ss / sigma2))
}

/// Nelder-Mead minimiser; deterministic, no shared state.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[dim] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= 1e-10 * (values[0].abs() + 1e-10) && size < 1e-6 {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
        } else {
            let (xc, fc) = if fr < values[dim] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < values[dim].min(fr) {
                simplex[dim] = xc;
                values[dim] = fc;
            } else {
                for i in 1..=dim {
                    let shrunk: Vec<f64> =
                        simplex[i].iter().zip(&simplex[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best].clone(), values[best])
}

#[derive(Debug, Clone)]
struct Candidate {
    order: ArimaOrder,
    aicc: f64,
    profile: Profile,
}

fn fit_order(y: &[f64], x: &DMatrix<f64>, order: ArimaOrder) -> Option<Candidate> {
    let (p, q) = (order.p, order.q);
    let dim = p + q;
    let objective = |u: &[f64]| {
        let (ar, ma) = unpack(u, p);
        profile(y, x, &ar, &ma).map_or(f64::INFINITY, |pr| -pr.loglik)
    };
    let u = if dim == 0 {
        Vec::new()
    } else {
        let (u1, _) = nelder_mead(&objective, &vec![0.0; dim], 0.5, 400 * dim);
        let (u2, _) = nelder_mead(&objective, &u1, 0.1, 400 * dim);
        u2
    };
    let (ar, ma) = unpack(&u, p);
    let profile = profile(y, x, &ar, &ma)?;
    let n = y.len() as f64;
    let npar = (p + q + x.ncols() + 1) as f64;
    let aic = -2.0 * profile.loglik + 2.0 * npar;
    let denom = n - npar - 1.0;
    let aicc = if denom > 0.0 { aic + 2.0 * npar * (npar + 1.0) / denom } else { f64::INFINITY };
    Some(Candidate { order, aicc, profile })
}

fn stepwise_search(
    y: &[f64],
    x: &DMatrix<f64>,
    d: usize,
    cfg: &OrderSearchConfig,
) -> Option<Candidate> {
    let mut cache: BTreeMap<(usize, usize), Option<Candidate>> = BTreeMap::new();
    let eval = |p: usize, q: usize, cache: &mut BTreeMap<(usize, usize), Option<Candidate>>| {
        cache
            .entry((p, q))
            .or_insert_with(|| fit_order(y, x, ArimaOrder { p, d, q }))
            .clone()
    };
    let better = |a: &Candidate, b: &Option<Candidate>| b.as_ref().is_none_or(|b| a.aicc < b.aicc);

    let mut best: Option<Candidate> = None;
    for (p, q) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        if p > cfg.max_p || q > cfg.max_q {
            continue;
        }
        if let Some(c) = eval(p, q, &mut cache) {
            if c.aicc.is_finite() && better(&c, &best) {
                best = Some(c);
            }
        }
    }
    loop {
        let current = best.clone()?;
        let (p0, q0) = (current.order.p as isize, current.order.q as isize);
        let mut step: Option<Candidate> = None;
        for dp in -1..=1isize {
            for dq in -1..=1isize {
                let (p, q) = (p0 + dp, q0 + dq);
                if (dp == 0 && dq == 0) || p < 0 || q < 0 {
                    continue;
                }
                let (p, q) = (p as usize, q as usize);
                if p > cfg.max_p || q > cfg.max_q {
                    continue;
                }
                if let Some(c) = eval(p, q, &mut cache) {
                    if c.aicc.is_finite() && better(&c, &step) {
                        step = Some(c);
                    }
                }
            }
        }
        match step {
            Some(c) if c.aicc < current.aicc => best = Some(c),
            _ => return best,
        }
    }
}

/// Fits a regression with ARIMA errors, selecting the order unless fixed.
///
/// Coefficient tests are z-tests with standard errors from the inverse
/// information of `β` at the maximum-likelihood ARMA parameters. When the
/// errors are differenced the intercept is not identified: it is reported as
/// the mean level residual with infinite standard error and p-value 1.
pub fn arima_errors_fit(
    design: &DMatrix<f64>,
    y: &[f64],
    cfg: &OrderSearchConfig,
) -> Result<RegressionFit, RegressError> {
    let (n, k) = design.shape();
    if n < cfg.min_obs {
        return Err(RegressError::InsufficientData(format!(
            "regression with ARIMA errors needs at least {} observations, got {n}",
            cfg.min_obs
        )));
    }
    let ols = least_squares(design, y)?;

    let d = match cfg.fixed {
        Some(o) => o.d.min(1),
        None if cfg.max_d == 0 => 0,
        None => {
            let resid: Vec<f64> = ols.residuals.iter().copied().collect();
            match kpss_level(&resid) {
                Ok(stat) if stat > KPSS_CRITICAL_5PCT => 1,
                _ => 0,
            }
        }
    };

    // columns that survive differencing (constants drop out)
    let kept: Vec<usize> = if d == 0 {
        (0..k).collect()
    } else {
        (0..k)
            .filter(|&j| (1..n).any(|t| design[(t, j)] != design[(t - 1, j)]))
            .collect()
    };
    let (wy, wx) = if d == 0 {
        (y.to_vec(), design.clone())
    } else {
        let wy: Vec<f64> = (1..n).map(|t| y[t] - y[t - 1]).collect();
        let wx = DMatrix::from_fn(n - 1, kept.len(), |t, j| {
            design[(t + 1, kept[j])] - design[(t, kept[j])]
        });
        (wy, wx)
    };

    let best = match cfg.fixed {
        Some(o) => fit_order(&wy, &wx, ArimaOrder { d, ..o }),
        None => stepwise_search(&wy, &wx, d, cfg),
    }
    .ok_or(RegressError::NonConvergence)?;

    let prof = &best.profile;
    let mut coef = vec![0.0; k];
    let mut se = vec![f64::INFINITY; k];
    let mut tstat = vec![0.0; k];
    let mut pvalue = vec![1.0; k];
    for (slot, &j) in kept.iter().enumerate() {
        let b = prof.beta[slot];
        let s = (prof.sigma2 * prof.xtx_inv[(slot, slot)]).max(0.0).sqrt();
        coef[j] = b;
        se[j] = s;
        tstat[j] = b / s;
        pvalue[j] = if tstat[j].is_nan() { 1.0 } else { z_two_sided(tstat[j]) };
    }
    if d > 0 {
        for j in (0..k).filter(|j| !kept.contains(j)) {
            let level: f64 = (0..n)
                .map(|t| y[t] - kept.iter().map(|&c| design[(t, c)] * coef[c]).sum::<f64>())
                .sum::<f64>()
                / n as f64;
            // only a constant column can be dropped
            coef[j] = level / design[(0, j)];
        }
    }
    let n_eff = wy.len();
    let df = n_eff.saturating_sub(kept.len() + best.order.p + best.order.q);
    Ok(RegressionFit {
        coef,
        se,
        tstat,
        pvalue,
        residuals: prof.innovations.clone(),
        df_resid: df,
        backend: Backend::ArimaErrors,
        arima_order: Some(best.order),
        hac_lag: None,
        warnings: Vec::new(),
    })
}
