//! Exact lattice minima by reduction followed by Fincke-Pohst enumeration.
//!
//! The search works in three passes:
//!
//! 1. LLL-reduce the basis in plain Euclidean coordinates and take the best
//!    basis vector as an incumbent bound `b`.
//! 2. Rescale coordinates so that the norm ball of radius `b` sits inside a
//!    round ellipsoid, and LLL-reduce again in the rescaled coordinates.
//! 3. Enumerate every coefficient vector inside that ellipsoid and evaluate the
//!    true norm on each candidate.
//!
//! Reduction only changes the basis, never the lattice, and every candidate is
//! re-evaluated through [`VectorSource::vector`], so the minimum is exact up to
//! the accuracy of that evaluation. All basis vectors are recomputed from their
//! integer coordinates after each reduction step to avoid drift.

use std::cmp::Ordering;

use super::{Norm, ShortVec, VectorSource, MAX_DIM};
use crate::error::{Error, Result};

const LLL_DELTA: f64 = 0.99;
const LLL_MAX_SWAPS: usize = 10_000;
// Relative widening of the enumeration radius; covers rounding in the Gram data.
const RADIUS_SLACK: f64 = 1e-7;
// Relative tolerance under which two lengths count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumConfig {
    /// Maximum number of enumeration-tree nodes before giving up.
    pub node_limit: u64,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self {
            node_limit: 100_000_000,
        }
    }
}

type Coeffs = [i64; MAX_DIM];
type Vector = [f64; MAX_DIM];

struct Reducer<'a, S: VectorSource + ?Sized> {
    src: &'a S,
    d: usize,
    inv_scale: Vector,
    // column k of the unimodular transform
    u: [Coeffs; MAX_DIM],
    b: [Vector; MAX_DIM],
}

impl<'a, S: VectorSource + ?Sized> Reducer<'a, S> {
    fn new(src: &'a S) -> Self {
        let d = src.dim();
        let mut u = [[0i64; MAX_DIM]; MAX_DIM];
        for (k, col) in u.iter_mut().enumerate().take(d) {
            col[k] = 1;
        }
        let mut r = Self {
            src,
            d,
            inv_scale: [1.0; MAX_DIM],
            u,
            b: [[0.0; MAX_DIM]; MAX_DIM],
        };
        for k in 0..d {
            r.refresh(k);
        }
        r
    }

    fn set_scale(&mut self, scales: &[f64]) {
        for (inv, s) in self.inv_scale.iter_mut().zip(&scales[..self.d]) {
            *inv = 1.0 / s;
        }
        for k in 0..self.d {
            self.refresh(k);
        }
    }

    fn raw(&self, k: usize) -> Vector {
        let mut v = [0.0; MAX_DIM];
        self.src.vector(&self.u[k][..self.d], &mut v[..self.d]);
        v
    }

    fn refresh(&mut self, k: usize) {
        let mut v = self.raw(k);
        for (x, s) in v.iter_mut().zip(&self.inv_scale).take(self.d) {
            *x *= s;
        }
        self.b[k] = v;
    }

    fn dot(&self, x: &Vector, y: &Vector) -> f64 {
        x[..self.d]
            .iter()
            .zip(&y[..self.d])
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Gram-Schmidt coefficients `mu` and squared lengths `bstar`.
    fn gram_schmidt(&self, mu: &mut [[f64; MAX_DIM]; MAX_DIM], bstar: &mut Vector) {
        let d = self.d;
        let mut star = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            let mut v = self.b[i];
            for j in 0..i {
                let m = if bstar[j] > 0.0 {
                    self.dot(&self.b[i], &star[j]) / bstar[j]
                } else {
                    0.0
                };
                mu[i][j] = m;
                for t in 0..d {
                    v[t] -= m * star[j][t];
                }
            }
            bstar[i] = self.dot(&v, &v);
            star[i] = v;
        }
    }

    fn lll(&mut self) {
        let d = self.d;
        let mut mu = [[0.0; MAX_DIM]; MAX_DIM];
        let mut bstar = [0.0; MAX_DIM];
        let mut k = 1;
        let mut swaps = 0;
        self.gram_schmidt(&mut mu, &mut bstar);
        while k < d && swaps < LLL_MAX_SWAPS {
            for j in (0..k).rev() {
                let r = mu[k][j].round();
                if r != 0.0 && r.abs() < 9.0e15 {
                    let ri = r as i64;
                    for t in 0..d {
                        self.u[k][t] -= ri * self.u[j][t];
                    }
                    self.refresh(k);
                    self.gram_schmidt(&mut mu, &mut bstar);
                }
            }
            let lhs = bstar[k];
            let rhs = (LLL_DELTA - mu[k][k - 1] * mu[k][k - 1]) * bstar[k - 1];
            if lhs >= rhs {
                k += 1;
            } else {
                self.u.swap(k, k - 1);
                self.b.swap(k, k - 1);
                self.gram_schmidt(&mut mu, &mut bstar);
                swaps += 1;
                k = (k - 1).max(1);
            }
        }
    }
}

/// Canonical sign: first nonzero coordinate positive.
fn canonicalize(c: &mut [i64]) {
    if let Some(&first) = c.iter().find(|&&x| x != 0) {
        if first < 0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Tie order on canonical coefficient vectors: compared from the last
/// coordinate backwards, so `e_1` precedes `e_2` on `Z^d`.
fn tie_order(a: &[i64], b: &[i64]) -> Ordering {
    a.iter().rev().cmp(b.iter().rev())
}

struct Best {
    d: usize,
    length: f64,
    coeffs: Coeffs,
    vec: Vector,
}

impl Best {
    fn offer(&mut self, length: f64, coeffs: &Coeffs, vec: &Vector) {
        let d = self.d;
        let better = if length < self.length * (1.0 - TIE_TOL) {
            true
        } else if length <= self.length * (1.0 + TIE_TOL) {
            tie_order(&coeffs[..d], &self.coeffs[..d]) == Ordering::Less
        } else {
            false
        };
        if better {
            self.coeffs = *coeffs;
            self.vec = *vec;
            self.length = length;
        }
    }
}

/// Exact minimum of `norm` over the nonzero vectors produced by `src`.
pub fn shortest_vector_in<S: VectorSource + ?Sized>(
    src: &S,
    norm: &Norm,
    cfg: &EnumConfig,
) -> Result<ShortVec> {
    let d = src.dim();
    if !(super::MIN_DIM..=MAX_DIM).contains(&d) {
        return Err(Error::UnsupportedDim(d));
    }
    norm.check_dim(d)?;

    let mut red = Reducer::new(src);
    red.lll();

    // incumbent from the reduced basis
    let mut best = Best {
        d,
        length: f64::INFINITY,
        coeffs: [0; MAX_DIM],
        vec: [0.0; MAX_DIM],
    };
    for k in 0..d {
        let v = red.raw(k);
        let mut c = red.u[k];
        canonicalize(&mut c[..d]);
        let sign_flip = c[..d] != red.u[k][..d];
        let mut v2 = v;
        if sign_flip {
            v2.iter_mut().for_each(|x| *x = -*x);
        }
        best.offer(norm.eval(&v2[..d]), &c, &v2);
    }
    if !(best.length > 0.0 && best.length.is_finite()) {
        return Err(Error::Rank);
    }

    let mut scales = [0.0; MAX_DIM];
    let rho = norm.enclosing_ellipsoid(best.length, d, &mut scales);
    if scales[..d].iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Domain("degenerate enumeration scale".into()));
    }
    red.set_scale(&scales[..d]);
    red.lll();

    // Cholesky of the scaled Gram matrix: ||B x||^2 = sum_i q_i (x_i + sum_{j>i} m_ij x_j)^2
    let mut mu = [[0.0; MAX_DIM]; MAX_DIM];
    let mut q = [0.0; MAX_DIM];
    red.gram_schmidt(&mut mu, &mut q);
    if q[..d].iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Rank);
    }
    let radius = rho * (1.0 + RADIUS_SLACK) + 1e-300;

    let mut x = [0i64; MAX_DIM];
    let mut nodes: u64 = 0;
    let mut scratch = Scratch {
        d,
        mu: &mu,
        q: &q,
        u: &red.u,
        src,
        norm,
        nodes: &mut nodes,
        limit: cfg.node_limit,
        best: &mut best,
    };
    scratch.descend(d - 1, radius, &mut x, true)?;

    let d_ = d;
    Ok(ShortVec {
        coeffs: best.coeffs[..d_].to_vec(),
        vec: best.vec[..d_].to_vec(),
        length: best.length,
    })
}

struct Scratch<'a, S: VectorSource + ?Sized> {
    d: usize,
    mu: &'a [[f64; MAX_DIM]; MAX_DIM],
    q: &'a Vector,
    u: &'a [Coeffs; MAX_DIM],
    src: &'a S,
    norm: &'a Norm,
    nodes: &'a mut u64,
    limit: u64,
    best: &'a mut Best,
}

impl<S: VectorSource + ?Sized> Scratch<'_, S> {
    /// Enumerates coordinate `i` given `x[i+1..]`; `rem` is the unused squared radius.
    /// While every higher coordinate is zero only `x_i >= 0` is visited (the
    /// other half is the negation).
    fn descend(&mut self, i: usize, rem: f64, x: &mut Coeffs, all_zero_above: bool) -> Result<()> {
        let d = self.d;
        let center: f64 = -((i + 1)..d)
            .map(|j| self.mu[j][i] * x[j] as f64)
            .sum::<f64>();
        let half = (rem / self.q[i]).sqrt();
        let mut lo = (center - half).ceil() as i64;
        let hi = (center + half).floor() as i64;
        if all_zero_above {
            lo = lo.max(0);
        }
        for xi in lo..=hi {
            *self.nodes += 1;
            if *self.nodes > self.limit {
                return Err(Error::EnumerationBudgetExceeded { limit: self.limit });
            }
            let diff = xi as f64 - center;
            let used = self.q[i] * diff * diff;
            if used > rem {
                continue;
            }
            x[i] = xi;
            let zero = all_zero_above && xi == 0;
            if i == 0 {
                if !zero {
                    self.leaf(x);
                }
            } else {
                self.descend(i - 1, rem - used, x, zero)?;
            }
        }
        x[i] = 0;
        Ok(())
    }

    fn leaf(&mut self, x: &Coeffs) {
        let d = self.d;
        let mut c = [0i64; MAX_DIM];
        for (k, &xk) in x.iter().enumerate().take(d) {
            if xk != 0 {
                for (ct, ut) in c.iter_mut().zip(&self.u[k][..d]) {
                    *ct += xk * ut;
                }
            }
        }
        canonicalize(&mut c[..d]);
        let mut v = [0.0; MAX_DIM];
        self.src.vector(&c[..d], &mut v[..d]);
        let len = self.norm.eval(&v[..d]);
        self.best.offer(len, &c, &v);
    }
}
