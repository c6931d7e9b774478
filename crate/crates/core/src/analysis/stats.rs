//! Small descriptive statistics helpers.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Two-sided t-interval `mean ± t(n-1) · std / sqrt(n)`. Needs n >= 2.
pub fn t_interval(mean: f64, std: f64, n: u64, level: f64) -> Option<(f64, f64)> {
    if n < 2 || !(0.0..1.0).contains(&level) || !mean.is_finite() || !std.is_finite() {
        return None;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
    let q = t.inverse_cdf(0.5 + level / 2.0);
    let half = q * std / (n as f64).sqrt();
    Some((mean - half, mean + half))
}
