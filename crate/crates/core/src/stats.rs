//! Estimators and tests that tie simulated samples to their limit laws.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lattice::LatticePoint;

/// Terms kept in the Kolmogorov distribution series.
const KOLMOGOROV_TERMS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject_at_1pct: bool,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult {
            statistic,
            p_value,
            reject_at_1pct: p_value < 0.01,
        }
    }
}

/// Count, mean, covariance and coordinate ranges of a vector sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Unbiased (`m - 1`) covariance, row-major `d x d`.
    pub covariance: Vec<Vec<f64>>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl SampleSummary {
    pub fn from_vectors<V: AsRef<[f64]>>(samples: &[V]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::domain("empty sample"))?
            .as_ref();
        let d = first.len();
        let m = samples.len();
        let mut mean = vec![0.0; d];
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for s in samples {
            let s = s.as_ref();
            if s.len() != d {
                return Err(Error::domain("sample vectors differ in length"));
            }
            for i in 0..d {
                mean[i] += s[i];
                min[i] = min[i].min(s[i]);
                max[i] = max[i].max(s[i]);
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut covariance = vec![vec![0.0; d]; d];
        for s in samples {
            let s = s.as_ref();
            for i in 0..d {
                let di = s[i] - mean[i];
                for j in i..d {
                    covariance[i][j] += di * (s[j] - mean[j]);
                }
            }
        }
        let denom = (m.max(2) - 1) as f64;
        for i in 0..d {
            for j in i..d {
                covariance[i][j] /= denom;
                covariance[j][i] = covariance[i][j];
            }
        }
        Ok(SampleSummary {
            count: m,
            mean,
            covariance,
            min,
            max,
        })
    }

    /// Summary of `x / scale` for lattice samples.
    pub fn of_scaled_points(points: &[LatticePoint], scale: f64) -> Result<Self> {
        let v: Vec<Vec<f64>> = points
            .iter()
            .map(|p| p.iter().map(|&c| c as f64 / scale).collect())
            .collect();
        Self::from_vectors(&v)
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self, i: usize) -> f64 {
        self.covariance[i][i].sqrt()
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.covariance[i][j] / (self.std(i) * self.std(j))
    }

    /// Standard error of the mean of coordinate `i`.
    pub fn standard_error(&self, i: usize) -> f64 {
        self.std(i) / (self.count as f64).sqrt()
    }
}

/// Per-coordinate mean and spread of `X_n / n`.
pub fn velocity_estimate(endpoints: &[LatticePoint], steps: usize) -> Result<SampleSummary> {
    if steps == 0 {
        return Err(Error::domain("velocity needs n >= 1"));
    }
    SampleSummary::of_scaled_points(endpoints, steps as f64)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Upper tail `P(K > lambda)` of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.05 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=KOLMOGOROV_TERMS {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as usize % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sup distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / m) - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

/// One-sample Kolmogorov–Smirnov test against `N(0, sigma^2)` with the
/// asymptotic p-value. A constant sample is a valid (and rejected) input.
pub fn ks_normal_test(samples: &[f64], sigma: f64) -> Result<TestResult> {
    if samples.len() < 100 {
        return Err(Error::domain(format!(
            "KS test needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    let d = ks_statistic(samples, |x| normal_cdf(x / sigma));
    let lambda = (samples.len() as f64).sqrt() * d;
    Ok(TestResult::new(d, kolmogorov_survival(lambda)))
}

/// Sup distance between the empirical CDF of integer samples and a pmf on `{1, 2, ...}`.
pub fn ks_discrete_distance<F: Fn(u64) -> f64>(samples: &[u64], pmf: F) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let m = sorted.len() as f64;
    let top = *sorted.last().unwrap();
    let mut cdf = 0.0;
    let mut idx = 0;
    let mut dist: f64 = 0.0;
    for k in 1..=top {
        cdf += pmf(k);
        while idx < sorted.len() && sorted[idx] <= k {
            idx += 1;
        }
        dist = dist.max((idx as f64 / m - cdf).abs());
    }
    dist
}

fn fisher_z(r: f64, m: usize) -> f64 {
    let r = r.clamp(-0.999_999_999, 0.999_999_999);
    r.atanh() * ((m as f64) - 3.0).sqrt()
}

/// Joint test of zero off-diagonal correlation and equal axis variances.
///
/// Each correlation `rho_ij` and each Pitman–Morgan correlation
/// `corr(X_i + X_j, X_i - X_j)` is turned into a Fisher z-score; the statistic
/// is the largest `|z|` and the p-value is Bonferroni-corrected over all
/// `d(d-1)` component tests.
pub fn covariance_isotropy_test<V: AsRef<[f64]>>(samples: &[V]) -> Result<TestResult> {
    let summary = SampleSummary::from_vectors(samples)?;
    let d = summary.dimension();
    if d < 2 {
        return Err(Error::domain("isotropy test needs d >= 2"));
    }
    let m = summary.count;
    if m < 4 {
        return Err(Error::domain("isotropy test needs at least 4 samples"));
    }
    for i in 0..d {
        if summary.covariance[i][i] <= 0.0 {
            return Err(Error::DegenerateSample(format!("coordinate {} has zero variance", i + 1)));
        }
    }
    let mut max_z: f64 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            max_z = max_z.max(fisher_z(summary.correlation(i, j), m).abs());
            let (vi, vj, cij) = (
                summary.covariance[i][i],
                summary.covariance[j][j],
                summary.covariance[i][j],
            );
            // cov(Xi+Xj, Xi-Xj) = vi - vj
            let sum_var = vi + vj + 2.0 * cij;
            let diff_var = vi + vj - 2.0 * cij;
            if sum_var <= 0.0 || diff_var <= 0.0 {
                return Err(Error::DegenerateSample(format!(
                    "coordinates {} and {} are perfectly correlated",
                    i + 1,
                    j + 1
                )));
            }
            let r_pm = (vi - vj) / (sum_var * diff_var).sqrt();
            max_z = max_z.max(fisher_z(r_pm, m).abs());
        }
    }
    let tests = (d * (d - 1)) as f64;
    let p = tests * 2.0 * (1.0 - normal_cdf(max_z));
    Ok(TestResult::new(max_z, p))
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpSumRow {
    pub a: f64,
    pub sum: f64,
    /// `sum * a^d`
    pub scaled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpSumReport {
    pub dimension: usize,
    pub rows: Vec<ExpSumRow>,
    pub sup_scaled: f64,
    /// `scaled` at the last grid point over `scaled` at the first.
    pub ratio_last_first: f64,
    pub stable: bool,
}

/// `sum_{n >= 0} exp(-a 2^n) 2^{nd}`, dropping terms once they fall below `1e-18`
/// past the peak.
pub fn dyadic_exp_sum(a: f64, d: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0i32;
    loop {
        let scale = 2f64.powi(n);
        let term = (-a * scale).exp() * scale.powi(d as i32);
        // terms grow while a 2^n < d / ln 2
        let past_peak = a * scale > d as f64;
        if past_peak && term < 1e-18 {
            break;
        }
        sum += term;
        n += 1;
    }
    sum
}

/// Evaluates `sum(a) * a^d` over `a_grid` and flags it stable when the last
/// value is at most twice the first.
pub fn exp_sum_bound_check(a_grid: &[f64], d: usize) -> Result<ExpSumReport> {
    if a_grid.is_empty() {
        return Err(Error::domain("empty grid"));
    }
    if let Some(a) = a_grid.iter().find(|&&a| !(a > 0.0 && a <= 2.0)) {
        return Err(Error::domain(format!("grid value {a} outside (0, 2]")));
    }
    let rows: Vec<ExpSumRow> = a_grid
        .iter()
        .map(|&a| {
            let sum = dyadic_exp_sum(a, d);
            ExpSumRow {
                a,
                sum,
                scaled: sum * a.powi(d as i32),
            }
        })
        .collect();
    let sup_scaled = rows.iter().map(|r| r.scaled).fold(0.0, f64::max);
    let ratio = rows.last().unwrap().scaled / rows[0].scaled;
    Ok(ExpSumReport {
        dimension: d,
        stable: sup_scaled.is_finite() && ratio <= 2.0,
        rows,
        sup_scaled,
        ratio_last_first: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::ContinuousCDF;

    #[test]
    fn perfect_quantiles_pass() {
        let m = 1000;
        let normal = Normal::standard();
        let samples: Vec<f64> = (1..=m)
            .map(|i| normal.inverse_cdf((i as f64 - 0.5) / m as f64))
            .collect();
        let r = ks_normal_test(&samples, 1.0).unwrap();
        assert!(r.statistic <= 1.0 / (2.0 * m as f64) + 1e-6, "{}", r.statistic);
        assert!(r.p_value > 0.999);
        assert!(!r.reject_at_1pct);
    }

    #[test]
    fn constant_sample_is_rejected() {
        let r = ks_normal_test(&vec![0.0; 500], 1.0).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert!(r.reject_at_1pct);
    }

    #[test]
    fn ks_rejects_bad_input() {
        assert!(ks_normal_test(&[0.0; 10], 1.0).is_err());
        assert!(ks_normal_test(&[0.0; 200], 0.0).is_err());
    }

    #[test]
    fn kolmogorov_tail_values() {
        // P(K > 1.3581) = 0.05 and P(K > 1.6276) = 0.01
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_invariant_under_rescaling() {
        let samples: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) / 29.0).collect();
        let a = ks_normal_test(&samples, 1.0).unwrap();
        let scaled: Vec<f64> = samples.iter().map(|x| 3.5 * x).collect();
        let b = ks_normal_test(&scaled, 3.5).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
    }

    #[test]
    fn velocity_of_single_step() {
        let s = velocity_estimate(&[LatticePoint::from([1, 0, 0])], 1).unwrap();
        assert_eq!(s.mean, vec![1.0, 0.0, 0.0]);
        assert!(velocity_estimate(&[LatticePoint::from([1])], 0).is_err());
    }

    #[test]
    fn summary_covariance_is_symmetric_psd() {
        let samples: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 * 0.01])
            .collect();
        let s = SampleSummary::from_vectors(&samples).unwrap();
        for i in 0..3 {
            assert!(s.covariance[i][i] >= 0.0);
            for j in 0..3 {
                assert_eq!(s.covariance[i][j], s.covariance[j][i]);
            }
        }
        // 2x2 minors non-negative
        let c = &s.covariance;
        assert!(c[0][0] * c[1][1] - c[0][1] * c[1][0] >= -1e-10);
    }

    #[test]
    fn isotropy_rejects_rotated_anisotropic_gaussian() {
        use rand::SeedableRng;
        use rand_distr_free::gaussian_pair;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Vec<f64>> = (0..5000)
            .map(|_| {
                let (g1, g2) = gaussian_pair(&mut rng);
                let (u, v) = (2.0 * g1, g2);
                let s = std::f64::consts::FRAC_1_SQRT_2;
                vec![s * (u - v), s * (u + v)]
            })
            .collect();
        assert!(covariance_isotropy_test(&samples).unwrap().reject_at_1pct);

        let iso: Vec<Vec<f64>> = (0..5000)
            .map(|_| {
                let (g1, g2) = gaussian_pair(&mut rng);
                vec![g1, g2]
            })
            .collect();
        assert!(!covariance_isotropy_test(&iso).unwrap().reject_at_1pct);
    }

    #[test]
    fn isotropy_flags_degenerate_coordinates() {
        let samples: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, 0.0]).collect();
        assert!(matches!(
            covariance_isotropy_test(&samples),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn discrete_distance_of_exact_law_is_small() {
        // 1 x4, 2 x2, 3 x1, 4 x1 against 2^-k
        let samples = [1, 1, 1, 1, 2, 2, 3, 4];
        let d = ks_discrete_distance(&samples, |k| 0.5f64.powi(k as i32));
        assert!((d - 0.0625).abs() < 1e-12, "{d}");
    }

    #[test]
    fn exp_sum_direct_values() {
        // a = 2, d = 1: sum_n e^{-2^{n+1}} 2^n
        let direct: f64 = (0..10).map(|n| (-(2f64.powi(n + 1))).exp() * 2f64.powi(n)).sum();
        assert!((dyadic_exp_sum(2.0, 1) - direct).abs() < 1e-15);
        let grid: Vec<f64> = (0..=10).map(|k| 2f64.powi(-k)).collect();
        let sums: Vec<f64> = grid.iter().map(|&a| dyadic_exp_sum(a, 2)).collect();
        assert!(sums.windows(2).all(|w| w[1] > w[0]), "sum decreasing in a");
        let r = exp_sum_bound_check(&grid, 2).unwrap();
        assert!(r.stable, "{}", r.ratio_last_first);
        assert!(exp_sum_bound_check(&[3.0], 2).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s - 3.0).abs() < 1e-12 && (c + 2.0).abs() < 1e-12);
    }

    /// Box–Muller, enough for the test fixtures.
    mod rand_distr_free {
        use rand::Rng;
        pub fn gaussian_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let t = 2.0 * std::f64::consts::PI * u2;
            (r * t.cos(), r * t.sin())
        }
    }
}
