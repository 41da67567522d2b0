//! Haar-random unimodular planar lattices and Monte Carlo estimates of cusp
//! measures, nondivergence fractions and core inclusion.
//!
//! Every sample `k` of a run with master seed `s` draws from its own stream
//! [`item_rng`]`(s, k)`, so results do not depend on the thread count.

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowPoint;
use crate::lattice::{shortest_vector_in, EnumConfig, Lattice, Norm, VectorSource};
use crate::stats::{binomial_stderr, item_rng, weighted_linear_fit, zeta};
use crate::weights::WeightVector;

/// Proposals allowed per accepted sample before the sampler gives up.
pub const MAX_PROPOSALS: u64 = 1_000_000;
/// Below this many hits a binomial confidence interval is not trusted.
pub const SMALL_COUNT: u64 = 20;

const Y_MIN: f64 = 0.866_025_403_784_438_6; // sqrt(3)/2

/// A point of `SL_2(R)/SL_2(Z)`: `rot(theta) [[1/sqrt y, x/sqrt y], [0, sqrt y]] Z^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaarSample {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Rejection-loop proposals used for this sample.
    #[serde(skip)]
    pub proposals: u64,
}

impl HaarSample {
    /// Row-major basis with columns as generators.
    pub fn basis(&self) -> [f64; 4] {
        let s = self.y.sqrt();
        let (a, b, d) = (1.0 / s, self.x / s, s);
        let (sn, cs) = self.theta.sin_cos();
        [cs * a, cs * b - sn * d, sn * a, sn * b + cs * d]
    }

    pub fn lattice(&self) -> Lattice {
        let b = self.basis();
        Lattice::from_row_major(2, b.to_vec()).expect("sampled basis is unimodular")
    }

    fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

impl VectorSource for HaarSample {
    fn dim(&self) -> usize {
        2
    }

    #[inline]
    fn vector(&self, c: &[i64], out: &mut [f64]) {
        let b = self.basis();
        let (p, q) = (c[0] as f64, c[1] as f64);
        out[0] = b[0].mul_add(p, b[1] * q);
        out[1] = b[2].mul_add(p, b[3] * q);
    }
}

/// Draws `(x, y)` with density proportional to `dx dy / y^2` on the standard
/// fundamental domain and `theta` uniformly on `[0, pi)`.
pub fn sample_sl2_haar<R: Rng + ?Sized>(rng: &mut R) -> Result<HaarSample> {
    for k in 1..=MAX_PROPOSALS {
        let u: f64 = rng.random();
        let y = Y_MIN / (1.0 - u);
        let x = rng.random::<f64>() - 0.5;
        if x * x + y * y >= 1.0 {
            let theta = rng.random::<f64>() * std::f64::consts::PI;
            return Ok(HaarSample {
                x,
                y,
                theta,
                proposals: k,
            });
        }
    }
    Err(Error::SamplerStall(MAX_PROPOSALS))
}

/// Whether the rotation angle is drawn or pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    #[default]
    Sampled,
    /// `theta = 0`. Only valid for rotation-invariant norms.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub eps: f64,
    pub n_samples: u64,
    pub hits: u64,
    pub mean: f64,
    pub stderr: f64,
    pub prediction: Option<f64>,
    /// Fewer than [`SMALL_COUNT`] hits; `stderr` is unreliable.
    pub small_count: bool,
}

impl MeasureEstimate {
    fn new(eps: f64, n: u64, hits: u64, prediction: Option<f64>) -> Self {
        Self {
            eps,
            n_samples: n,
            hits,
            mean: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            stderr: binomial_stderr(hits, n),
            prediction,
            small_count: hits < SMALL_COUNT,
        }
    }
}

/// Siegel prediction `2^d eps^d / (2 zeta(d))` for `mu(U_{i,j}(eps))`.
pub fn siegel_prediction(eps: f64, w: &WeightVector) -> Result<f64> {
    let d = w.d();
    if d != 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    Ok(siegel_box(eps, d))
}

fn siegel_box(eps: f64, d: usize) -> f64 {
    let e = eps.max(0.0);
    (2.0 * e).powi(d as i32) / (2.0 * zeta(d as u32))
}

/// Primitive-vector Siegel prediction for the ball of radius `eps` in `norm`.
fn prediction_for(eps: f64, norm: &Norm) -> f64 {
    match norm {
        Norm::Euclid => std::f64::consts::PI * eps.max(0.0).powi(2) / (2.0 * zeta(2)),
        Norm::Sup | Norm::Quasi(_) => siegel_box(eps, 2),
    }
}

/// Minimum of `norm` on each of `n` Haar samples, in sample order.
pub fn haar_minima(norm: &Norm, n: u64, seed: u64, theta: ThetaMode) -> Result<Vec<f64>> {
    if let Norm::Quasi(w) = norm {
        if w.d() != 2 {
            return Err(Error::UnsupportedDimension(w.d()));
        }
    }
    let cfg = EnumConfig::default();
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut s = sample_sl2_haar(&mut item_rng(seed, k))?;
            if theta == ThetaMode::Fixed {
                s = s.with_theta(0.0);
            }
            shortest_vector_in(&s, norm, &cfg).map(|v| v.length)
        })
        .collect()
}

/// Fraction of Haar samples with `delta_{i,j} < eps`.
pub fn estimate_mu_u(
    eps: f64,
    w: &WeightVector,
    n_samples: u64,
    seed: u64,
) -> Result<MeasureEstimate> {
    let mut v = estimate_mu_grid(
        &[eps],
        &Norm::Quasi(w.clone()),
        n_samples,
        seed,
        ThetaMode::Sampled,
    )?;
    Ok(v.remove(0))
}

/// Estimates for several radii on one common sample set.
pub fn estimate_mu_grid(
    eps: &[f64],
    norm: &Norm,
    n_samples: u64,
    seed: u64,
    theta: ThetaMode,
) -> Result<Vec<MeasureEstimate>> {
    if let Some(&e) = eps.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "eps must be nonnegative, got {e}"
        )));
    }
    let minima = haar_minima(norm, n_samples, seed, theta)?;
    Ok(eps
        .iter()
        .map(|&e| {
            let hits = minima.iter().filter(|&&m| m < e).count() as u64;
            MeasureEstimate::new(e, n_samples, hits, Some(prediction_for(e, norm)))
        })
        .collect())
}

/// Empirical tail `Pr[y >= c]` next to the value implied by the sampling density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub c: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerCalibration {
    pub n_samples: u64,
    pub acceptance_rate: f64,
    /// `(pi / 3) / (2 / sqrt 3)`, the domain share of the proposal strip.
    pub expected_acceptance: f64,
    pub tails: Vec<TailCheck>,
    pub max_delta_euclid: f64,
    pub minkowski_violations: u64,
}

/// `Pr[y >= c]` under `dx dy / y^2` on the fundamental domain, for `c >= 1`.
pub fn analytic_tail(c: f64) -> f64 {
    3.0 / (std::f64::consts::PI * c)
}

/// Draws `n` samples and summarizes acceptance rate, `y` tails and the
/// Minkowski bound `delta_euclid <= 2 / sqrt(pi)`.
pub fn sampler_calibration(n: u64, seed: u64, tail_points: &[f64]) -> Result<SamplerCalibration> {
    let cfg = EnumConfig::default();
    let draws: Vec<(HaarSample, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let s = sample_sl2_haar(&mut item_rng(seed, k))?;
            let d = shortest_vector_in(&s, &Norm::Euclid, &cfg)?.length;
            Ok((s, d))
        })
        .collect::<Result<_>>()?;
    let proposals: u64 = draws.iter().map(|(s, _)| s.proposals).sum();
    let bound = 2.0 / std::f64::consts::PI.sqrt() + 1e-9;
    let tails = tail_points
        .iter()
        .map(|&c| {
            let hits = draws.iter().filter(|(s, _)| s.y >= c).count() as u64;
            let empirical = hits as f64 / n.max(1) as f64;
            let stderr = binomial_stderr(hits, n);
            let analytic = analytic_tail(c);
            TailCheck {
                c,
                empirical,
                stderr,
                analytic,
                z: (empirical - analytic) / stderr,
            }
        })
        .collect();
    Ok(SamplerCalibration {
        n_samples: n,
        acceptance_rate: n as f64 / proposals.max(1) as f64,
        expected_acceptance: (std::f64::consts::PI / 3.0) / (2.0 / 3f64.sqrt()),
        tails,
        max_delta_euclid: draws.iter().map(|d| d.1).fold(0.0, f64::max),
        minkowski_violations: draws.iter().filter(|d| d.1 > bound).count() as u64,
    })
}

/// Log-log fit of cusp fractions against `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub eps_grid: Vec<f64>,
    pub fractions: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n_samples: u64,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: (f64, f64),
    pub ci_half_width: f64,
    /// The exponent `1 / (mn (d - 1))` the fractions are compared against.
    pub reference_exponent: f64,
}

/// Weighted log-log fit of `fractions` on `eps`. Each point is weighted by the
/// inverse delta-method variance `n f / (1 - f)` of `log f`.
pub fn fit_scaling(
    eps: &[f64],
    hits: &[u64],
    n: u64,
    reference_exponent: f64,
) -> Result<ScalingFit> {
    let fractions: Vec<f64> = hits.iter().map(|&h| h as f64 / n.max(1) as f64).collect();
    let stderrs: Vec<f64> = hits.iter().map(|&h| binomial_stderr(h, n)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (&e, &f) in eps.iter().zip(&fractions) {
        if f > 0.0 && f < 1.0 {
            xs.push(e.ln());
            ys.push(f.ln());
            ws.push(n as f64 * f / (1.0 - f));
        }
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} of {} grid points have fractions strictly between 0 and 1",
            xs.len(),
            eps.len()
        )));
    }
    let fit = weighted_linear_fit(&xs, &ys, &ws)
        .ok_or_else(|| Error::DegenerateFit("eps grid has no spread".into()))?;
    let half = 1.96 * fit.slope_se;
    Ok(ScalingFit {
        eps_grid: eps.to_vec(),
        fractions,
        stderrs,
        n_samples: n,
        slope: fit.slope,
        intercept: fit.intercept,
        slope_ci: (fit.slope - half, fit.slope + half),
        ci_half_width: half,
        reference_exponent,
    })
}

fn check_eps_grid(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::InvalidInput("eps grid is empty".into()));
    }
    if eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidInput("eps grid must lie in (0, 1)".into()));
    }
    if eps.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::InvalidInput(
            "eps grid must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Fractions of `h` uniform in the cube `||h||_inf < 2` with
/// `delta(g_t u_h x, sup) < eps`, and their log-log slope.
pub fn nondivergence_profile(
    x: &Lattice,
    w: &WeightVector,
    t: f64,
    eps_grid: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<ScalingFit> {
    check_eps_grid(eps_grid)?;
    if x.dim() != w.d() {
        return Err(Error::DimensionMismatch {
            expected: w.d(),
            got: x.dim(),
        });
    }
    let mn = w.m() * w.n();
    let cfg = EnumConfig::default();
    let minima: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = item_rng(seed, k);
            let h: Vec<f64> = (0..mn).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let p = FlowPoint::new(w, t, &h, Some(x));
            shortest_vector_in(&p, &Norm::Sup, &cfg).map(|v| v.length)
        })
        .collect::<Result<_>>()?;
    let hits: Vec<u64> = eps_grid
        .iter()
        .map(|&e| minima.iter().filter(|&&m| m < e).count() as u64)
        .collect();
    let reference = 1.0 / (mn as f64 * (w.d() - 1) as f64);
    fit_scaling(eps_grid, &hits, n_samples, reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub eps: f64,
    pub r: f64,
    pub c11: f64,
    /// `(2^alpha - 1) / (d C11) eps^{max(m,n)}`.
    pub admissible_r: f64,
    pub within_bound: bool,
    /// Haar samples in `U(eps/2)` that were perturbed.
    pub base_samples: u64,
    /// Haar draws needed to find them.
    pub draws: u64,
    pub pairs: u64,
    pub violations: u64,
    /// Largest `delta_{i,j}(g x) / eps` seen.
    pub max_ratio: f64,
    pub passed: bool,
}

/// Largest `r` for which `U(eps/2)` sits in the inner `r`-core of `U(eps)`.
pub fn admissible_radius(eps: f64, w: &WeightVector, c11: f64) -> f64 {
    let d = w.d() as f64;
    (2f64.powf(w.alpha()) - 1.0) / (d * c11) * eps.powi(w.m().max(w.n()) as i32)
}

fn op_norm(m: &Matrix2<f64>) -> f64 {
    m.singular_values().max()
}

/// `g = (I + r u R) / sqrt(det)` with `||R||_op = 1`, `u` uniform in `[0, 1]`,
/// redrawn until `max(||g - I||, ||g^-1 - I||) < c11 r`.
fn perturbation<R: Rng + ?Sized>(rng: &mut R, r: f64, c11: f64) -> Result<Matrix2<f64>> {
    if r == 0.0 {
        return Ok(Matrix2::identity());
    }
    let id = Matrix2::identity();
    for _ in 0..10_000 {
        let raw = Matrix2::from_fn(|_, _| 2.0 * rng.random::<f64>() - 1.0);
        let nrm = op_norm(&raw);
        if !(nrm > 0.0) {
            continue;
        }
        let u: f64 = rng.random();
        let g0 = id + raw * (r * u / nrm);
        let det = g0.determinant();
        if !(det > 0.0) {
            continue;
        }
        let g = g0 / det.sqrt();
        let Some(inv) = g.try_inverse() else { continue };
        if op_norm(&(g - id)).max(op_norm(&(inv - id))) < c11 * r {
            return Ok(g);
        }
    }
    Err(Error::SamplerStall(10_000))
}

/// Applies `n_perturb` small group elements to each of `n_samples` Haar
/// lattices in `U(eps/2)` and counts images that leave `U(eps)`.
pub fn core_inclusion_check(
    eps: f64,
    r: f64,
    w: &WeightVector,
    n_samples: u64,
    n_perturb: u64,
    c11: f64,
    seed: u64,
) -> Result<InclusionReport> {
    if w.d() != 2 {
        return Err(Error::UnsupportedDimension(w.d()));
    }
    if !(eps > 0.0) || !(r >= 0.0) || !(c11 > 0.0) {
        return Err(Error::InvalidInput("need eps > 0, r >= 0, c11 > 0".into()));
    }
    let norm = Norm::Quasi(w.clone());
    let cfg = EnumConfig::default();
    let max_draws = MAX_PROPOSALS;
    let per_sample: Vec<(u64, u64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = item_rng(seed, k);
            let mut draws = 0u64;
            let base = loop {
                draws += 1;
                if draws > max_draws {
                    return Err(Error::SamplerStall(max_draws));
                }
                let s = sample_sl2_haar(&mut rng)?;
                if shortest_vector_in(&s, &norm, &cfg)?.length < eps / 2.0 {
                    break s.lattice();
                }
            };
            let mut bad = 0;
            let mut worst = 0.0f64;
            for _ in 0..n_perturb {
                let g = perturbation(&mut rng, r, c11)?;
                let moved = base.transform(&DMatrix::from_column_slice(2, 2, g.as_slice()))?;
                let dw = shortest_vector_in(&moved, &norm, &cfg)?.length;
                worst = worst.max(dw / eps);
                if dw >= eps {
                    bad += 1;
                }
            }
            Ok((draws, bad, worst))
        })
        .collect::<Result<_>>()?;
    let admissible_r = admissible_radius(eps, w, c11);
    let violations = per_sample.iter().map(|p| p.1).sum();
    Ok(InclusionReport {
        eps,
        r,
        c11,
        admissible_r,
        within_bound: r < admissible_r,
        base_samples: n_samples,
        draws: per_sample.iter().map(|p| p.0).sum(),
        pairs: n_samples * n_perturb,
        violations,
        max_ratio: per_sample.iter().map(|p| p.2).fold(0.0, f64::max),
        passed: violations == 0,
    })
}
