//! Log-log regressions over per-`n` medians.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SIZES: usize = 4;
pub const MIN_SEEDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(n, median)` pairs the line was fitted to.
    pub points: Vec<(usize, f64)>,
    pub bound: f64,
    pub pass: bool,
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2.0
    }
}

/// Groups `(n, value)` samples by `n` and takes medians; fails unless at
/// least `min_sizes` sizes have `min_seeds` samples each.
pub fn medians(samples: &[(usize, f64)], min_sizes: usize, min_seeds: usize) -> Result<Vec<(usize, f64)>> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(n, v) in samples {
        by_n.entry(n).or_default().push(v);
    }
    if by_n.len() < min_sizes {
        return Err(Error::Config(format!("need at least {min_sizes} sizes, got {}", by_n.len())));
    }
    if let Some((n, v)) = by_n.iter().find(|(_, v)| v.len() < min_seeds) {
        return Err(Error::Config(format!("n = {n} has {} samples, need {min_seeds}", v.len())));
    }
    Ok(by_n.into_iter().map(|(n, mut v)| (n, median(&mut v))).collect())
}

/// Least-squares line through `(ln n, ln y)`.
pub fn loglog_fit(points: &[(usize, f64)]) -> (f64, f64) {
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y.max(f64::MIN_POSITIVE).ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Passes iff the fitted exponent is at most `bound`; the intercept is
/// reported but never judged.
pub fn scaling_check(samples: &[(usize, f64)], bound: f64) -> Result<SlopeFit> {
    let points = medians(samples, MIN_SIZES, MIN_SEEDS)?;
    let (slope, intercept) = loglog_fit(&points);
    Ok(SlopeFit { slope, intercept, points, bound, pass: slope <= bound })
}

/// Constant `K` in `y ≈ K·f(n)`: least squares through the origin, and the
/// smallest `K` that bounds every point.
pub fn fit_constant(points: &[(usize, f64)], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let fs: Vec<f64> = points.iter().map(|&(n, _)| f(n as f64)).collect();
    let num: f64 = points.iter().zip(&fs).map(|(&(_, y), f)| y * f).sum();
    let den: f64 = fs.iter().map(|f| f * f).sum();
    let max = points.iter().zip(&fs).map(|(&(_, y), f)| y / f).fold(0.0, f64::max);
    (if den > 0.0 { num / den } else { 0.0 }, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(exp: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for n in [128usize, 256, 512, 1024] {
            for s in 0..10 {
                out.push((n, 3.0 * (n as f64).powf(exp) * (1.0 + 0.01 * s as f64)));
            }
        }
        out
    }

    #[test]
    fn slope_two_fails_a_bound_below_two() {
        let fit = scaling_check(&synthetic(2.0), 1.7).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9);
        assert!(!fit.pass);
    }

    #[test]
    fn slope_one_and_a_half_passes() {
        assert!(scaling_check(&synthetic(1.5), 1.7).unwrap().pass);
    }

    #[test]
    fn too_little_data_is_a_config_error() {
        let few: Vec<(usize, f64)> = synthetic(1.0).into_iter().filter(|&(n, _)| n < 1024).collect();
        assert!(matches!(scaling_check(&few, 2.0), Err(Error::Config(_))));
        let thin: Vec<(usize, f64)> = synthetic(1.0).into_iter().step_by(2).collect();
        assert!(matches!(scaling_check(&thin, 2.0), Err(Error::Config(_))));
    }

    #[test]
    fn constant_through_origin() {
        let pts = [(4usize, 8.0), (9, 18.0)];
        let (k, max) = fit_constant(&pts, |n| n);
        assert!((k - 2.0).abs() < 1e-12 && (max - 2.0).abs() < 1e-12);
    }
}
