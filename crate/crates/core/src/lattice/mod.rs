//! Unimodular lattices in `R^d` and exact minima of norms over their nonzero vectors.

mod enumerate;
pub mod oracle;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightVector;

pub use enumerate::{shortest_vector_in, EnumConfig};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 5;
pub const DEFAULT_DET_TOL: f64 = 1e-9;

/// Anything that can produce the lattice vector with given integer coordinates.
///
/// Implementors should evaluate `vector` as accurately as they can; the
/// enumeration only uses floating-point geometry to bound the search, the
/// reported minimum always comes from `vector`.
pub trait VectorSource: Sync {
    fn dim(&self) -> usize;
    fn vector(&self, coeffs: &[i64], out: &mut [f64]);
}

/// A unimodular lattice `g Z^d`, stored as the basis matrix `g` (columns are generators).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeRepr", into = "LatticeRepr")]
pub struct Lattice {
    dim: usize,
    // row-major
    basis: Vec<f64>,
    tol: f64,
}

/// Wire form: `{"dim": d, "basis": [row-major d*d numbers]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeRepr {
    pub dim: usize,
    pub basis: Vec<f64>,
}

impl TryFrom<LatticeRepr> for Lattice {
    type Error = Error;
    fn try_from(r: LatticeRepr) -> Result<Self> {
        if r.basis.len() != r.dim * r.dim {
            return Err(Error::DimensionMismatch {
                expected: r.dim * r.dim,
                got: r.basis.len(),
            });
        }
        Lattice::from_row_major(r.dim, r.basis)
    }
}

impl From<Lattice> for LatticeRepr {
    fn from(l: Lattice) -> Self {
        LatticeRepr {
            dim: l.dim,
            basis: l.basis,
        }
    }
}

impl Lattice {
    /// Validates a square basis matrix with the default determinant tolerance.
    pub fn new(basis: &DMatrix<f64>) -> Result<Self> {
        Self::with_tol(basis, DEFAULT_DET_TOL)
    }

    pub fn with_tol(basis: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if !basis.is_square() {
            return Err(Error::DimensionMismatch {
                expected: basis.nrows(),
                got: basis.ncols(),
            });
        }
        let d = basis.nrows();
        if !(MIN_DIM..=MAX_DIM).contains(&d) {
            return Err(Error::UnsupportedDim(d));
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("basis has non-finite entries".into()));
        }
        let det = basis.determinant();
        if det == 0.0 || basis.rank(1e-14 * basis.amax().max(1.0)) < d {
            return Err(Error::Rank);
        }
        if (det - 1.0).abs() > tol {
            return Err(Error::Determinant { det, tol });
        }
        let mut rows = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                rows.push(basis[(r, c)]);
            }
        }
        Ok(Self {
            dim: d,
            basis: rows,
            tol,
        })
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Self::new(&DMatrix::from_row_slice(dim, dim, &data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: rows.iter().map(Vec::len).find(|&l| l != d).unwrap_or(d),
            });
        }
        Self::from_row_major(d, rows.concat())
    }

    /// The standard lattice `Z^d`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(&DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.basis[row * self.dim + col]
    }

    pub fn basis_row_major(&self) -> &[f64] {
        &self.basis
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.basis)
    }

    pub fn det(&self) -> f64 {
        self.matrix().determinant()
    }

    /// The lattice `g x` for a group element `g` given as a matrix.
    pub fn transform(&self, g: &DMatrix<f64>) -> Result<Self> {
        if g.nrows() != self.dim || g.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: g.nrows(),
            });
        }
        Self::with_tol(&(g * self.matrix()), self.tol)
    }
}

impl VectorSource for Lattice {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn vector(&self, coeffs: &[i64], out: &mut [f64]) {
        let d = self.dim;
        for (r, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.basis[r * d..(r + 1) * d];
            let mut acc = 0.0f64;
            for (&b, &c) in row.iter().zip(coeffs) {
                acc = b.mul_add(c as f64, acc);
            }
            *o = acc;
        }
    }
}

/// Norms for which the lattice minimum can be computed.
#[derive(Debug, Clone, PartialEq)]
pub enum Norm {
    Sup,
    Euclid,
    /// The `(i, j)`-quasinorm.
    Quasi(WeightVector),
}

impl Norm {
    #[inline]
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Norm::Sup => v.iter().fold(0.0f64, |a, x| a.max(x.abs())),
            Norm::Euclid => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Quasi(w) => w.quasinorm_unchecked(v),
        }
    }

    /// Writes per-axis scales `s` and returns `rho` such that
    /// `{||v|| <= b}` lies inside the ellipsoid `sum (v_k / s_k)^2 <= rho`.
    pub(crate) fn enclosing_ellipsoid(&self, b: f64, d: usize, scales: &mut [f64]) -> f64 {
        match self {
            Norm::Sup => {
                scales[..d].fill(b);
                d as f64
            }
            Norm::Euclid => {
                scales[..d].fill(b);
                1.0
            }
            Norm::Quasi(w) => {
                w.ball_half_widths(b, &mut scales[..d]);
                d as f64
            }
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if let Norm::Quasi(w) = self {
            if w.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: w.d(),
                });
            }
        }
        Ok(())
    }
}

/// A minimizing lattice vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortVec {
    /// Coordinates in the lattice basis; first nonzero entry is positive.
    pub coeffs: Vec<i64>,
    pub vec: Vec<f64>,
    pub length: f64,
}

/// Exact shortest nonzero vector of `lat` in the given norm.
pub fn shortest_vector(lat: &Lattice, norm: &Norm) -> Result<ShortVec> {
    shortest_vector_with(lat, norm, &EnumConfig::default())
}

pub fn shortest_vector_with(lat: &Lattice, norm: &Norm, cfg: &EnumConfig) -> Result<ShortVec> {
    norm.check_dim(lat.dim())?;
    shortest_vector_in(lat, norm, cfg)
}

/// `delta(x) = inf ||v||` over nonzero `v` in `x`.
pub fn delta(lat: &Lattice, norm: &Norm) -> Result<f64> {
    shortest_vector(lat, norm).map(|s| s.length)
}

/// `delta_{i,j}(x)`, the minimum of the weighted quasinorm over `x \ {0}`.
pub fn delta_weighted(lat: &Lattice, w: &WeightVector) -> Result<f64> {
    delta(lat, &Norm::Quasi(w.clone()))
}

/// Monomial shapes `(delta^d, delta^{d/(d-1)})` bracketing the injectivity radius
/// up to unspecified multiplicative constants.
pub fn injectivity_shape(delta_val: f64, d: usize) -> Result<(f64, f64)> {
    if !(delta_val > 0.0) {
        return Err(Error::Domain("delta must be positive".into()));
    }
    if d < 2 {
        return Err(Error::UnsupportedDim(d));
    }
    let d = d as f64;
    Ok((delta_val.powf(d), delta_val.powf(d / (d - 1.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn make_lattice_examples() {
        assert_eq!(Lattice::standard(2).unwrap().dim(), 2);
        assert!(Lattice::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.5]]).is_ok());
        assert!(matches!(
            Lattice::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]),
            Err(Error::Determinant { .. })
        ));
        assert!(matches!(
            Lattice::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]),
            Err(Error::Rank)
        ));
        assert!(matches!(
            Lattice::standard(6),
            Err(Error::UnsupportedDim(6))
        ));
    }

    #[test]
    fn json_roundtrip_is_row_major() {
        let l = Lattice::from_rows(&[vec![2.0, 1.0], vec![0.0, 0.5]]).unwrap();
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(s, r#"{"dim":2,"basis":[2.0,1.0,0.0,0.5]}"#);
        let back: Lattice = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
        assert!(serde_json::from_str::<Lattice>(r#"{"dim":2,"basis":[2,0,0,1]}"#).is_err());
    }

    #[test]
    fn shortest_vector_examples() {
        let z2 = Lattice::standard(2).unwrap();
        let s = shortest_vector(&z2, &Norm::Euclid).unwrap();
        assert_eq!(s.length, 1.0);
        assert_eq!(s.coeffs, vec![1, 0]);

        let stretched = Lattice::from_rows(&[vec![4.0, 0.0], vec![0.0, 0.25]]).unwrap();
        let s = shortest_vector(&stretched, &Norm::Sup).unwrap();
        assert_eq!(s.length, 0.25);
        assert_eq!(s.coeffs, vec![0, 1]);
    }

    #[test]
    fn delta_examples() {
        for d in 2..=5 {
            assert_eq!(
                delta(&Lattice::standard(d).unwrap(), &Norm::Sup).unwrap(),
                1.0
            );
        }
        let l = Lattice::from_rows(&[vec![E, 0.0], vec![0.0, 1.0 / E]]).unwrap();
        assert!((delta(&l, &Norm::Sup).unwrap() - 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn delta_weighted_examples() {
        let w = WeightVector::new(vec![0.3, 0.7], vec![1.0]).unwrap();
        assert_eq!(
            delta_weighted(&Lattice::standard(3).unwrap(), &w).unwrap(),
            1.0
        );
        let w11 = WeightVector::equal(1, 1).unwrap();
        let l = Lattice::from_rows(&[vec![E, 0.0], vec![0.0, 1.0 / E]]).unwrap();
        assert!((delta_weighted(&l, &w11).unwrap() - 1.0 / E).abs() < 1e-15);
        assert!(delta_weighted(&l, &w).is_err());
    }

    #[test]
    fn injectivity_shape_examples() {
        assert_eq!(injectivity_shape(1.0, 2).unwrap(), (1.0, 1.0));
        assert_eq!(injectivity_shape(0.5, 2).unwrap(), (0.25, 0.25));
        let (lo, hi) = injectivity_shape(0.5, 3).unwrap();
        assert!((lo - 0.125).abs() < 1e-15);
        assert!((hi - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert!(injectivity_shape(0.0, 2).is_err());
    }
}
