//! Small regression and counting helpers shared by the Monte Carlo and covering code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Random stream for work item `index` under master seed `seed`.
///
/// Each item gets its own ChaCha stream, so results do not depend on how the
/// items are scheduled across threads.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope; `NaN` for exact fits through two points.
    pub slope_se: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    weighted_linear_fit(x, y, &vec![1.0; x.len()]).map(|mut f| {
        let n = x.len() as f64;
        // residual-based standard error for the unweighted case
        let xm = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - xm) * (v - xm)).sum();
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let e = b - (f.slope * a + f.intercept);
                e * e
            })
            .sum();
        f.slope_se = if n > 2.0 {
            (rss / (n - 2.0) / sxx).sqrt()
        } else {
            f64::NAN
        };
        f
    })
}

/// Weighted least squares with weights `w` (inverse variances). `slope_se` is
/// the model-based standard error `sqrt(1 / S_xx^w)`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() != w.len() || x.len() < 2 {
        return None;
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((&a, &b), &wt) in x.iter().zip(y).zip(w) {
        sxx += wt * (a - xm) * (a - xm);
        sxy += wt * (a - xm) * (b - ym);
        syy += wt * (b - ym) * (b - ym);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let r2 = if syy > 0.0 {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(LinearFit {
        slope,
        intercept,
        r2,
        slope_se: (1.0 / sxx).sqrt(),
    })
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn binomial_stderr(hits: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = hits as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Riemann zeta at an integer `s >= 2`, by direct summation with an integral tail.
pub fn zeta(s: u32) -> f64 {
    if s == 2 {
        return std::f64::consts::PI * std::f64::consts::PI / 6.0;
    }
    let s_f = s as f64;
    let n = 10_000u32;
    let mut sum = 0.0;
    for k in (1..=n).rev() {
        sum += (k as f64).powf(-s_f);
    }
    // Euler-Maclaurin tail
    let nf = n as f64;
    sum + nf.powf(1.0 - s_f) / (s_f - 1.0) - 0.5 * nf.powf(-s_f)
}
