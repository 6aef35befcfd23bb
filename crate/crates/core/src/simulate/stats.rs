//! Sample summaries, Kolmogorov–Smirnov statistics and quantile–quantile
//! points.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A quantile–quantile pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QqPoint {
    pub theoretical: f64,
    pub sample: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std: f64,
    /// KS distance of the sample-standardized values to N(0, 1); `None` when
    /// the variance is zero.
    pub ks_normal: Option<f64>,
    /// KS distance to N(theory mean, theory variance), when supplied.
    pub ks_theory: Option<f64>,
    /// Sample-standardized order statistics against normal quantiles.
    pub qq: Vec<QqPoint>,
}

impl SummaryStats {
    pub fn is_degenerate(&self) -> bool {
        self.ks_normal.is_none()
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// One-sample KS distance of `(values - center) / scale` to N(0, 1).
pub fn ks_normal(values: &[f64], center: f64, scale: f64) -> f64 {
    let normal = standard_normal();
    let v = sorted(values);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf((x - center) / scale);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Sorted `(values - center) / scale` against `Φ⁻¹((i + ½)/n)`.
pub fn qq_points(values: &[f64], center: f64, scale: f64) -> Vec<QqPoint> {
    let normal = standard_normal();
    let v = sorted(values);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| QqPoint {
            theoretical: normal.inverse_cdf((i as f64 + 0.5) / n),
            sample: (x - center) / scale,
        })
        .collect()
}

/// Order statistics of two equally long samples paired up, both standardized
/// by the same `center` and `scale`.
pub fn qq_two_sample(a: &[f64], b: &[f64], center: f64, scale: f64) -> Result<Vec<QqPoint>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "two-sample qq needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    Ok(sorted(a)
        .into_iter()
        .zip(sorted(b))
        .map(|(x, y)| QqPoint {
            theoretical: (x - center) / scale,
            sample: (y - center) / scale,
        })
        .collect())
}

/// Largest `|sample - theoretical|` over the points.
pub fn max_qq_deviation(points: &[QqPoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.sample - p.theoretical).abs())
        .fold(0.0, f64::max)
}

/// Mean, variance, KS distances and qq points. Zero variance leaves the KS
/// fields `None`.
pub fn summarize(values: &[f64], theory: Option<(f64, f64)>) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("sample has non-finite values".into()));
    }
    let (mean, variance) = mean_and_variance(values);
    let std = variance.sqrt();
    let degenerate = !(std > 0.0);
    let ks = (!degenerate).then(|| ks_normal(values, mean, std));
    let qq = if degenerate { Vec::new() } else { qq_points(values, mean, std) };
    let ks_theory = match theory {
        Some((m, v)) if v > 0.0 => Some(ks_normal(values, m, v.sqrt())),
        _ => None,
    };
    Ok(SummaryStats {
        count: values.len(),
        mean,
        variance,
        std,
        ks_normal: ks,
        ks_theory,
        qq,
    })
}

/// Two-sample KS statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("two-sample KS needs nonempty samples".into()));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}
