use medfx::regress::{
    acf, arima_errors_fit, design_with_intercept, hac_covariance, ljung_box, newey_west_fit, nw_bandwidth, ols_fit,
    ArimaOrder, OrderSearchConfig,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Stationary AR(1) with unit innovation variance.
fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let mut e = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
    (0..n)
        .map(|i| {
            if i > 0 {
                e = phi * e + rng.sample::<f64, _>(StandardNormal);
            }
            e
        })
        .collect()
}

#[test]
fn nw_mean_variance_tracks_ar1_long_run_variance() {
    let (n, phi, reps) = (2000, 0.5, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let ones = DMatrix::from_element(n, 1, 1.0);
    let mut total = 0.0;
    for _ in 0..reps {
        let y = ar1(&mut rng, n, phi);
        let fit = newey_west_fit(&ones, &y, None).unwrap();
        total += fit.se[0] * fit.se[0];
    }
    let marginal = 1.0 / (1.0 - phi * phi);
    let analytic = marginal * (1.0 + phi) / ((1.0 - phi) * n as f64);
    let ratio = total / reps as f64 / analytic;
    assert!((ratio - 1.0).abs() < 0.10, "ratio {ratio}");
}

#[test]
fn nw_se_matches_ols_on_iid_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 2000;
    let x = normals(&mut rng, n);
    let y: Vec<f64> = x.iter().map(|v| 0.5 * v + rng.sample::<f64, _>(StandardNormal)).collect();
    let d = design_with_intercept(&[&x]);
    let ols = ols_fit(&d, &y).unwrap();
    let nw = newey_west_fit(&d, &y, None).unwrap();
    for j in 0..2 {
        assert!((nw.se[j] / ols.se[j] - 1.0).abs() < 0.10);
    }
}

/// Plug-in bandwidth recomputed from its defining formula.
fn bandwidth_oracle(f: &[f64]) -> usize {
    let n = f.len() as f64;
    let m = (4.0 * (n / 100.0).powf(2.0 / 9.0)) as usize;
    let gamma = |j: usize| f[j..].iter().zip(f).map(|(a, b)| a * b).sum::<f64>() / n;
    let s0 = gamma(0) + 2.0 * (1..=m).map(gamma).sum::<f64>();
    let s1 = 2.0 * (1..=m).map(|j| j as f64 * gamma(j)).sum::<f64>();
    (1.1447 * (s1 / s0).abs().powf(2.0 / 3.0) * n.cbrt()).floor() as usize
}

#[test]
fn bandwidth_follows_plug_in_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for (n, phi) in [(100, 0.0), (250, 0.5), (500, 0.8), (1000, -0.3)] {
        let f = ar1(&mut rng, n, phi);
        let scores = DMatrix::from_column_slice(n, 1, &f);
        assert_eq!(nw_bandwidth(&scores).unwrap().lag, bandwidth_oracle(&f), "n={n} phi={phi}");
    }
}

#[test]
fn bandwidth_on_white_noise_scores() {
    // Under white noise each sample autocovariance is about N(0, s0^2/n), so
    // s1/s0 has sd 2*sqrt(sum j^2)/sqrt(n) over the m truncation lags. The
    // rule must keep the typical lag at or below the lag for a one-sd ratio.
    let n = 500usize;
    let m = (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)) as usize;
    let sd = 2.0 * ((1..=m).map(|j| (j * j) as f64).sum::<f64>() / n as f64).sqrt();
    let one_sd_lag = (1.1447 * sd.powf(2.0 / 3.0) * (n as f64).cbrt()).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut lags: Vec<usize> = (0..200)
        .map(|_| {
            let f = normals(&mut rng, n);
            nw_bandwidth(&DMatrix::from_column_slice(n, 1, &f)).unwrap().lag
        })
        .collect();
    lags.sort_unstable();
    let persistent = nw_bandwidth(&DMatrix::from_column_slice(n, 1, &ar1(&mut rng, n, 0.9))).unwrap().lag;
    assert!(lags[100] <= one_sd_lag, "median lag {} vs {one_sd_lag}", lags[100]);
    assert!(lags[180] < persistent);
}

#[test]
fn arima_picks_white_noise_and_covers_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let reps = 100;
    let (mut white, mut covered) = (0, 0);
    for _ in 0..reps {
        let x = normals(&mut rng, 300);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v + rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = arima_errors_fit(&design_with_intercept(&[&x]), &y, &OrderSearchConfig::default()).unwrap();
        if fit.arima_order == Some(ArimaOrder { p: 0, d: 0, q: 0 }) {
            white += 1;
        }
        if (fit.coef[1] - 1.0).abs() <= 1.959_964 * fit.se[1] {
            covered += 1;
        }
    }
    // AICc admits one spurious ARMA term with probability P(chi2_1 > 2) = 0.157
    // per direction, so about three quarters of white-noise fits stay at (0,0,0)
    assert!(white >= 65, "white-noise order chosen {white}/100");
    assert!((covered as f64 / reps as f64 - 0.95).abs() <= 0.06, "coverage {covered}/100");
}

#[test]
fn arima_detects_strong_ar1() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let reps = 50;
    let mut with_ar = 0;
    for _ in 0..reps {
        let x = normals(&mut rng, 300);
        let e = ar1(&mut rng, 300, 0.8);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + b).collect();
        let fit = arima_errors_fit(&design_with_intercept(&[&x]), &y, &OrderSearchConfig::default()).unwrap();
        if fit.arima_order.is_some_and(|o| o.p >= 1) {
            with_ar += 1;
        }
    }
    assert!(with_ar as f64 >= 0.9 * reps as f64, "p >= 1 in {with_ar}/{reps}");
}

#[test]
fn ljung_box_p_is_uniform_under_white_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let mut p: Vec<f64> = (0..1000).map(|_| ljung_box(&normals(&mut rng, 200), 1).unwrap().1).collect();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "KS distance {ks}");
}

#[test]
fn acf_of_iid_sample_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    assert!(acf(&normals(&mut rng, 1000), 1).unwrap().abs() < 0.1);
}

#[test]
fn acf_reference_values() {
    let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert!((acf(&alt, 1).unwrap() + 0.9).abs() < 1e-12);
    assert!(acf(&[2.0; 8], 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hac_covariance_is_symmetric_psd(seed in 0u64..1000, n in 12usize..80, lag in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * 3).map(|_| rng.sample(StandardNormal)).collect();
        let s = hac_covariance(&DMatrix::from_column_slice(n, 3, &data), lag);
        prop_assert!((&s - s.transpose()).amax() < 1e-12);
        let scale = s.amax().max(1.0);
        let eig = s.symmetric_eigen().eigenvalues;
        prop_assert!(eig.iter().all(|&v| v > -1e-10 * scale));
    }

    #[test]
    fn backends_share_coefficients(seed in 0u64..1000, n in 30usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normals(&mut rng, n);
        let y = normals(&mut rng, n);
        let d = design_with_intercept(&[&x]);
        let ols = ols_fit(&d, &y).unwrap();
        let nw = newey_west_fit(&d, &y, None).unwrap();
        let ar = arima_errors_fit(&d, &y, &OrderSearchConfig::fixed(ArimaOrder { p: 0, d: 0, q: 0 })).unwrap();
        for j in 0..2 {
            prop_assert!((ols.coef[j] - nw.coef[j]).abs() < 1e-8);
            prop_assert!((ols.coef[j] - ar.coef[j]).abs() < 1e-8);
        }
    }
}
