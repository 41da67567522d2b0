//! The weighted diagonal flow `g_t`, unipotent embeddings `u_A`, orbit profiles
//! and the two-sided badly-approximable test.
//!
//! Under `g_t` every coordinate of a lattice vector is multiplied by
//! `e^{i_k t}` or `e^{-j_l t}`, so each quasinorm term `|v_k|^{1/(m i_k)}`
//! scales by `e^{t/m}` and each `|v_{m+l}|^{1/(n j_l)}` by `e^{-t/n}`. Between
//! two grid times `dt` apart, `delta_{i,j}` therefore moves by at most the
//! factor `exp(max(1/m, 1/n) dt)`; [`OrbitProfile::continuity_margin`] is that
//! factor.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{shortest_vector_in, EnumConfig, Lattice, Norm, VectorSource, MAX_DIM};
use crate::weights::WeightVector;

/// `g_t = diag(e^{i_1 t}, ..., e^{i_m t}, e^{-j_1 t}, ..., e^{-j_n t})`.
pub fn g_t(w: &WeightVector, t: f64) -> DMatrix<f64> {
    let diag: Vec<f64> = w.flow_exponents().map(|e| (e * t).exp()).collect();
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
}

/// `u_A = [[I_m, A], [0, I_n]]`.
pub fn u_a(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let mut u = DMatrix::identity(m + n, m + n);
    u.view_mut((0, m), (m, n)).copy_from(a);
    u
}

fn check_shape(a: &DMatrix<f64>, w: &WeightVector) -> Result<()> {
    if a.nrows() != w.m() || a.ncols() != w.n() {
        return Err(Error::DimensionMismatch {
            expected: w.m() * w.n(),
            got: a.nrows() * a.ncols(),
        });
    }
    Ok(())
}

/// Row-major copy of an `m x n` matrix.
pub(crate) fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            out.push(a[(r, c)]);
        }
    }
    out
}

/// The lattice `g_t u_h x`, with `x = Z^d` when no base is given.
///
/// Vectors are evaluated as `(e^{i_k t}(p_k + (h q)_k), e^{-j_l t} q_l)` with
/// fused multiply-adds, which keeps `p + h q` accurate even when `q` is large.
pub struct FlowPoint<'a> {
    m: usize,
    n: usize,
    h: &'a [f64],
    base: Option<&'a Lattice>,
    scale: [f64; MAX_DIM],
}

impl<'a> FlowPoint<'a> {
    /// `h` is row-major `m x n`.
    pub fn new(w: &WeightVector, t: f64, h: &'a [f64], base: Option<&'a Lattice>) -> Self {
        debug_assert_eq!(h.len(), w.m() * w.n());
        let mut scale = [1.0; MAX_DIM];
        for (s, e) in scale.iter_mut().zip(w.flow_exponents()) {
            *s = (e * t).exp();
        }
        Self {
            m: w.m(),
            n: w.n(),
            h,
            base,
            scale,
        }
    }
}

impl VectorSource for FlowPoint<'_> {
    fn dim(&self) -> usize {
        self.m + self.n
    }

    #[inline]
    fn vector(&self, coeffs: &[i64], out: &mut [f64]) {
        let (m, n) = (self.m, self.n);
        let mut w = [0.0; MAX_DIM];
        match self.base {
            Some(b) => b.vector(coeffs, &mut w[..m + n]),
            None => {
                for (x, &c) in w.iter_mut().zip(coeffs) {
                    *x = c as f64;
                }
            }
        }
        for k in 0..m {
            let mut acc = w[k];
            for l in 0..n {
                acc = self.h[k * n + l].mul_add(w[m + l], acc);
            }
            out[k] = self.scale[k] * acc;
        }
        for l in 0..n {
            out[m + l] = self.scale[m + l] * w[m + l];
        }
    }
}

/// Grid over which an orbit is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub weights: WeightVector,
    pub t_max: f64,
    pub dt: f64,
}

impl FlowSpec {
    pub const DEFAULT_T_MAX: f64 = 15.0;
    pub const DEFAULT_DT: f64 = 0.01;

    pub fn new(weights: WeightVector, t_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_max > 0.0) || dt > t_max || !t_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "need 0 < dt <= t_max, got dt = {dt}, t_max = {t_max}"
            )));
        }
        Ok(Self { weights, t_max, dt })
    }

    pub fn with_defaults(weights: WeightVector) -> Self {
        Self {
            weights,
            t_max: Self::DEFAULT_T_MAX,
            dt: Self::DEFAULT_DT,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let steps = (self.t_max / self.dt + 1e-9).floor() as usize;
        (0..=steps).map(|i| i as f64 * self.dt).collect()
    }

    /// Bound on the factor by which `delta_{i,j}` can change over one grid step.
    pub fn continuity_margin(&self) -> f64 {
        let m = self.weights.m() as f64;
        let n = self.weights.n() as f64;
        ((1.0 / m).max(1.0 / n) * self.dt).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub t: f64,
    pub delta_w: f64,
}

/// `delta_{i,j}(g_t u_A Z^d)` sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitProfile {
    pub samples: Vec<OrbitSample>,
    pub min_delta: f64,
    pub argmin_t: f64,
    pub continuity_margin: f64,
}

/// `delta_{i,j}` of the single lattice `g_t u_A Z^d`.
pub fn orbit_delta(a: &[f64], w: &WeightVector, t: f64, cfg: &EnumConfig) -> Result<f64> {
    let norm = Norm::Quasi(w.clone());
    let src = FlowPoint::new(w, t, a, None);
    shortest_vector_in(&src, &norm, cfg).map(|s| s.length)
}

pub fn orbit_profile(a: &DMatrix<f64>, flow: &FlowSpec, cfg: &EnumConfig) -> Result<OrbitProfile> {
    check_shape(a, &flow.weights)?;
    let h = row_major(a);
    let w = &flow.weights;
    let norm = Norm::Quasi(w.clone());
    let samples = flow
        .times()
        .into_par_iter()
        .map(|t| {
            let src = FlowPoint::new(w, t, &h, None);
            shortest_vector_in(&src, &norm, cfg).map(|s| OrbitSample {
                t,
                delta_w: s.length,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (argmin_t, min_delta) = samples.iter().fold((0.0, f64::INFINITY), |(bt, bd), s| {
        if s.delta_w < bd {
            (s.t, s.delta_w)
        } else {
            (bt, bd)
        }
    });
    Ok(OrbitProfile {
        samples,
        min_delta,
        argmin_t,
        continuity_margin: flow.continuity_margin(),
    })
}

/// `min ||A q + p||_i ||q||_j` over integer `q` with `1 <= ||q||_inf <= q_bound`,
/// taking for each `q` the coordinatewise nearest integer `p` to `-A q`.
///
/// Nearest `p` is optimal because `||.||_i` is a max of functions increasing in
/// each `|coordinate|`, and the coordinates of `A q + p` decouple in `p`.
pub fn direct_bad_constant(a: &DMatrix<f64>, w: &WeightVector, q_bound: u64) -> Result<f64> {
    check_shape(a, w)?;
    if q_bound == 0 {
        return Err(Error::InvalidInput("q_bound must be at least 1".into()));
    }
    let (m, n) = (w.m(), w.n());
    let h = row_major(a);
    let qb = q_bound as i64;
    let side = 2 * qb + 1;
    let total = (side as u128).pow(n as u32);
    if total > 1u128 << 40 {
        return Err(Error::BudgetExceeded {
            what: "q enumeration",
            requested: total.min(u64::MAX as u128) as u64,
            cap: 1 << 40,
        });
    }
    let inv_i: Vec<f64> = w.i().iter().map(|x| 1.0 / x).collect();
    let inv_j: Vec<f64> = w.j().iter().map(|x| 1.0 / x).collect();

    let value = |q: &[i64]| -> f64 {
        let mut pn = 0.0f64;
        for k in 0..m {
            let mut acc = 0.0f64;
            for l in 0..n {
                acc = h[k * n + l].mul_add(q[l] as f64, acc);
            }
            let dist = (acc - acc.round()).abs();
            let e = inv_i[k];
            pn = pn.max(if e == 1.0 { dist } else { dist.powf(e) });
        }
        let mut qn = 0.0f64;
        for l in 0..n {
            let a = q[l].unsigned_abs() as f64;
            let e = inv_j[l];
            qn = qn.max(if e == 1.0 { a } else { a.powf(e) });
        }
        pn * qn
    };

    if n == 1 {
        return Ok((1..=qb)
            .into_par_iter()
            .map(|q| value(&[q]))
            .reduce(|| f64::INFINITY, f64::min));
    }

    // Half of the box: the first nonzero coordinate of q is positive.
    let total = total as u64;
    Ok((0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut q = [0i64; MAX_DIM];
            for slot in q.iter_mut().take(n) {
                *slot = (idx % side as u64) as i64 - qb;
                idx /= side as u64;
            }
            match q[..n].iter().find(|&&x| x != 0) {
                Some(&f) if f > 0 => value(&q[..n]),
                _ => f64::INFINITY,
            }
        })
        .reduce(|| f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Bad,
    NotBad,
    Boundary,
}

/// Outcome of the dynamical test for `A in Bad_{i,j}(c)`.
///
/// `Bad` only certifies the window `[0, t_max]`: no grid point, widened by the
/// continuity margin, came within the threshold `epsilon = c^{1/d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadVerdict {
    pub classification: Classification,
    pub c_target: f64,
    pub epsilon: f64,
    pub c_direct: Option<f64>,
    pub orbit_min: f64,
    pub argmin_t: f64,
    pub margin: f64,
    pub t_max: f64,
}

/// Classifies from an already computed profile.
pub fn classify_profile(
    profile: &OrbitProfile,
    d: usize,
    c: f64,
    t_max: f64,
) -> Result<BadVerdict> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidInput(format!(
            "c must lie in (0, 1), got {c}"
        )));
    }
    let eps = c.powf(1.0 / d as f64);
    let margin = profile.continuity_margin;
    let min = profile.min_delta;
    let classification = if min / margin >= eps {
        Classification::Bad
    } else if min * margin < eps {
        Classification::NotBad
    } else {
        Classification::Boundary
    };
    Ok(BadVerdict {
        classification,
        c_target: c,
        epsilon: eps,
        c_direct: None,
        orbit_min: min,
        argmin_t: profile.argmin_t,
        margin,
        t_max,
    })
}

/// Dynamical side of the correspondence: `A in Bad_{i,j}(c)` iff the orbit of
/// `u_A Z^d` avoids `U_{i,j}(c^{1/d})`.
pub fn dani_classify(
    a: &DMatrix<f64>,
    c: f64,
    flow: &FlowSpec,
    cfg: &EnumConfig,
) -> Result<BadVerdict> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidInput(format!(
            "c must lie in (0, 1), got {c}"
        )));
    }
    let profile = orbit_profile(a, flow, cfg)?;
    classify_profile(&profile, flow.weights.d(), c, flow.t_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn w11() -> WeightVector {
        WeightVector::equal(1, 1).unwrap()
    }

    #[test]
    fn g_t_examples() {
        assert_eq!(g_t(&w11(), 0.0), DMatrix::identity(2, 2));
        let g = g_t(&w11(), 1.0);
        assert!((g[(0, 0)] - E).abs() < 1e-15 && (g[(1, 1)] - 1.0 / E).abs() < 1e-15);
        let w = WeightVector::new(vec![0.3, 0.7], vec![1.0]).unwrap();
        let g = g_t(&w, 2.0);
        assert!((g[(0, 0)] - 0.6f64.exp()).abs() < 1e-14);
        assert!((g[(1, 1)] - 1.4f64.exp()).abs() < 1e-14);
        assert!((g[(2, 2)] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn u_a_examples() {
        assert_eq!(u_a(&DMatrix::zeros(1, 1)), DMatrix::identity(2, 2));
        let phi1 = (5f64.sqrt() - 1.0) / 2.0;
        let u = u_a(&DMatrix::from_element(1, 1, phi1));
        assert_eq!(u, DMatrix::from_row_slice(2, 2, &[1.0, phi1, 0.0, 1.0]));
        let a = DMatrix::from_row_slice(2, 1, &[0.2, -0.4]);
        let u = u_a(&a);
        assert_eq!(u[(0, 2)], 0.2);
        assert_eq!(u[(1, 2)], -0.4);
        assert_eq!(u[(2, 2)], 1.0);
        assert_eq!(u[(2, 0)], 0.0);
        assert!((u.determinant() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flow_point_matches_dense_basis() {
        let w = WeightVector::new(vec![0.3, 0.7], vec![1.0]).unwrap();
        let a = DMatrix::from_row_slice(2, 1, &[0.37, -0.81]);
        let t = 1.3;
        let h = row_major(&a);
        let src = FlowPoint::new(&w, t, &h, None);
        let dense = Lattice::new(&(g_t(&w, t) * u_a(&a))).unwrap();
        let c = [3, -2, 5];
        let (mut v1, mut v2) = ([0.0; 3], [0.0; 3]);
        src.vector(&c, &mut v1);
        dense.vector(&c, &mut v2);
        for k in 0..3 {
            assert!((v1[k] - v2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_profile_is_exponential() {
        let flow = FlowSpec::with_defaults(w11());
        let p = orbit_profile(&DMatrix::zeros(1, 1), &flow, &EnumConfig::default()).unwrap();
        for s in p.samples.iter().step_by(97) {
            assert!((s.delta_w - (-s.t).exp()).abs() < 1e-12 * (-s.t).exp().max(1e-300) + 1e-15);
        }
        assert!((p.min_delta - (-15.0f64).exp()).abs() < 1e-15);
        assert!((p.continuity_margin - 0.01f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn rational_orbit_diverges() {
        let flow = FlowSpec::with_defaults(w11());
        let p = orbit_profile(
            &DMatrix::from_element(1, 1, 0.5),
            &flow,
            &EnumConfig::default(),
        )
        .unwrap();
        assert!(p.min_delta < 0.05);
    }

    #[test]
    fn direct_constant_examples() {
        let w = w11();
        assert_eq!(
            direct_bad_constant(&DMatrix::zeros(1, 1), &w, 50).unwrap(),
            0.0
        );
        // inf over q of q ||q alpha|| for alpha = phi - 1 is attained at q = 1
        let phi1 = (5f64.sqrt() - 1.0) / 2.0;
        let c = direct_bad_constant(&DMatrix::from_element(1, 1, phi1), &w, 1000).unwrap();
        assert!((c - (1.0 - phi1)).abs() < 1e-12);
    }

    #[test]
    fn nearest_p_matches_full_p_search() {
        let w = WeightVector::new(vec![0.4, 0.6], vec![0.5, 0.5]).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.31, 0.77, -0.52, 0.141]);
        let fast = direct_bad_constant(&a, &w, 4).unwrap();
        let mut slow = f64::INFINITY;
        for q1 in -4i64..=4 {
            for q2 in -4i64..=4 {
                if q1 == 0 && q2 == 0 {
                    continue;
                }
                for p1 in -12i64..=12 {
                    for p2 in -12i64..=12 {
                        let r1 = a[(0, 0)] * q1 as f64 + a[(0, 1)] * q2 as f64 + p1 as f64;
                        let r2 = a[(1, 0)] * q1 as f64 + a[(1, 1)] * q2 as f64 + p2 as f64;
                        let pn = r1.abs().powf(1.0 / 0.4).max(r2.abs().powf(1.0 / 0.6));
                        let qn = (q1.abs() as f64).powf(2.0).max((q2.abs() as f64).powf(2.0));
                        slow = slow.min(pn * qn);
                    }
                }
            }
        }
        assert!(
            (fast - slow).abs() < 1e-12 * slow.max(1.0),
            "{fast} vs {slow}"
        );
    }

    #[test]
    fn verdict_examples() {
        let flow = FlowSpec::with_defaults(w11());
        let cfg = EnumConfig::default();
        let phi1 = DMatrix::from_element(1, 1, (5f64.sqrt() - 1.0) / 2.0);
        assert_eq!(
            dani_classify(&phi1, 0.3, &flow, &cfg)
                .unwrap()
                .classification,
            Classification::Bad
        );
        assert_eq!(
            dani_classify(&phi1, 0.5, &flow, &cfg)
                .unwrap()
                .classification,
            Classification::NotBad
        );
        let half = DMatrix::from_element(1, 1, 0.5);
        assert_eq!(
            dani_classify(&half, 0.1, &flow, &cfg)
                .unwrap()
                .classification,
            Classification::NotBad
        );
        assert!(dani_classify(&half, 1.0, &flow, &cfg).is_err());
    }

    #[test]
    fn boundary_band() {
        let profile = OrbitProfile {
            samples: vec![],
            min_delta: 0.5,
            argmin_t: 0.0,
            continuity_margin: 1.01,
        };
        let v = classify_profile(&profile, 2, 0.25, 15.0).unwrap();
        assert_eq!(v.classification, Classification::Boundary);
        let v = classify_profile(&profile, 2, 0.2, 15.0).unwrap();
        assert_eq!(v.classification, Classification::Bad);
        let v = classify_profile(&profile, 2, 0.3, 15.0).unwrap();
        assert_eq!(v.classification, Classification::NotBad);
    }

    #[test]
    fn flow_spec_validation() {
        assert!(FlowSpec::new(w11(), 1.0, 0.0).is_err());
        assert!(FlowSpec::new(w11(), 1.0, 2.0).is_err());
        let f = FlowSpec::new(w11(), 1.0, 0.25).unwrap();
        assert_eq!(f.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
