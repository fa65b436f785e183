//! Monte Carlo frequencies with confidence intervals, and the deterministic
//! parallel sample map every estimator runs on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiMethod {
    Wilson,
    Wald,
}

/// A Bernoulli frequency `successes / samples` with a one-sigma error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub stderr: f64,
    pub successes: u64,
    pub samples: u64,
    pub method: CiMethod,
    pub seed: u64,
}

impl EstimateWithCI {
    /// Wilson score interval; `stderr` is its half-width at one sigma.
    pub fn wilson(successes: u64, samples: u64, seed: u64) -> Self {
        let (lo, hi) = wilson_interval(successes, samples, 1.0);
        EstimateWithCI {
            estimate: ratio(successes, samples),
            stderr: (hi - lo) / 2.0,
            successes,
            samples,
            method: CiMethod::Wilson,
            seed,
        }
    }

    pub fn wald(successes: u64, samples: u64, seed: u64) -> Self {
        let p = ratio(successes, samples);
        let stderr = if samples == 0 {
            0.5
        } else {
            (p * (1.0 - p) / samples as f64).sqrt()
        };
        EstimateWithCI {
            estimate: p,
            stderr,
            successes,
            samples,
            method: CiMethod::Wald,
            seed,
        }
    }

    pub fn from_indicators(hits: &[bool], seed: u64) -> Self {
        let k = hits.iter().filter(|&&h| h).count() as u64;
        Self::wilson(k, hits.len() as u64, seed)
    }

    /// Interval at `z` sigmas under the estimate's method.
    pub fn bounds(&self, z: f64) -> (f64, f64) {
        match self.method {
            CiMethod::Wilson => wilson_interval(self.successes, self.samples, z),
            CiMethod::Wald => (
                (self.estimate - z * self.stderr).max(0.0),
                (self.estimate + z * self.stderr).min(1.0),
            ),
        }
    }

    pub fn lower(&self, z: f64) -> f64 {
        self.bounds(z).0
    }

    pub fn upper(&self, z: f64) -> f64 {
        self.bounds(z).1
    }
}

fn ratio(k: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

/// Combined one-sigma error of a difference of independent estimates.
pub fn combined_sigma(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// `f(0), ..., f(count - 1)` evaluated on the current rayon pool, in index
/// order regardless of the number of workers.
pub fn sample_map<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Weighted least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the supplied point errors.
    pub slope_stderr: f64,
}

/// Fit with weights `1 / sigma_i^2`. Needs at least two distinct `x`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Option<LineFit> {
    if x.len() != y.len() || x.len() != sigma.len() || x.len() < 2 {
        return None;
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    if w.iter().any(|w| !w.is_finite()) {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    Some(LineFit {
        slope,
        intercept,
        slope_stderr: (sw / det).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_at_zero_successes() {
        for n in [1u64, 10, 1000] {
            let e = EstimateWithCI::wilson(0, n, 0);
            assert_eq!(e.estimate, 0.0);
            assert!((e.stderr - 1.0 / (2.0 * (n as f64 + 1.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn wilson_interval_contains_estimate_and_shrinks() {
        let a = wilson_interval(30, 100, 1.96);
        let b = wilson_interval(300, 1000, 1.96);
        assert!(a.0 < 0.3 && 0.3 < a.1);
        assert!(b.1 - b.0 < a.1 - a.0);
        // reference values for 30/100 at z = 1.96
        assert!((a.0 - 0.2189).abs() < 5e-4 && (a.1 - 0.3958).abs() < 5e-4);
    }

    #[test]
    fn wald_matches_binomial_formula() {
        let e = EstimateWithCI::wald(25, 100, 3);
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.method, CiMethod::Wald);
    }

    #[test]
    fn sample_map_is_ordered() {
        let v = sample_map(1000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == (i * i) as u64));
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|x| 1.5 * x - 2.0).collect();
        let f = weighted_line_fit(&x, &y, &[0.1, 0.2, 0.1, 0.3]).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!((f.intercept + 2.0).abs() < 1e-12);
        // equal weights: se = sigma / sqrt(sum (x - mean)^2)
        let g = weighted_line_fit(&x, &y, &[0.5; 4]).unwrap();
        assert!((g.slope_stderr - 0.5 / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn line_fit_rejects_degenerate_input() {
        assert!(weighted_line_fit(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_none());
        assert!(weighted_line_fit(&[1.0], &[0.0], &[1.0]).is_none());
    }
}
