//! Weight vectors `(i, j)` and the weighted quasinorm on `R^m x R^n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// Weights for the rows (`i`, length `m`) and columns (`j`, length `n`) of a
/// system of linear forms. Both blocks are positive and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightRepr", into = "WeightRepr")]
pub struct WeightVector {
    i: Vec<f64>,
    j: Vec<f64>,
    alpha: f64,
    // exponent applied to |v_k| inside the quasinorm, 1/(m i_k) resp. 1/(n j_l)
    exps: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightRepr {
    i: Vec<f64>,
    j: Vec<f64>,
}

impl TryFrom<WeightRepr> for WeightVector {
    type Error = Error;
    fn try_from(r: WeightRepr) -> Result<Self> {
        WeightVector::new(r.i, r.j)
    }
}

impl From<WeightVector> for WeightRepr {
    fn from(w: WeightVector) -> Self {
        WeightRepr { i: w.i, j: w.j }
    }
}

impl WeightVector {
    pub fn new(i: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        if i.is_empty() || j.is_empty() {
            return Err(Error::InvalidWeights(
                "both blocks must be non-empty".into(),
            ));
        }
        if i.len() + j.len() > crate::lattice::MAX_DIM {
            return Err(Error::UnsupportedDim(i.len() + j.len()));
        }
        for (name, block) in [("i", &i), ("j", &j)] {
            if block.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidWeights(format!(
                    "{name} entries must be positive"
                )));
            }
            let s: f64 = block.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidWeights(format!("{name} sums to {s}, not 1")));
            }
        }
        let alpha = i
            .iter()
            .chain(j.iter())
            .copied()
            .fold(f64::INFINITY, f64::min);
        let m = i.len() as f64;
        let n = j.len() as f64;
        let exps = i
            .iter()
            .map(|&x| 1.0 / (m * x))
            .chain(j.iter().map(|&y| 1.0 / (n * y)))
            .collect();
        Ok(Self { i, j, alpha, exps })
    }

    /// Equal weights `(1/m, ..., 1/m)`, `(1/n, ..., 1/n)`; the quasinorm is then the sup norm.
    pub fn equal(m: usize, n: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m], vec![1.0 / n as f64; n])
    }

    pub fn m(&self) -> usize {
        self.i.len()
    }

    pub fn n(&self) -> usize {
        self.j.len()
    }

    pub fn d(&self) -> usize {
        self.i.len() + self.j.len()
    }

    pub fn i(&self) -> &[f64] {
        &self.i
    }

    pub fn j(&self) -> &[f64] {
        &self.j
    }

    /// Smallest of all weights.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Diagonal of `g_t`: `e^{i_k t}` on the first block, `e^{-j_l t}` on the second.
    pub fn flow_exponents(&self) -> impl Iterator<Item = f64> + '_ {
        self.i.iter().copied().chain(self.j.iter().map(|&y| -y))
    }

    /// Expansion rates `i_k + j_l` of the conjugation action on `M_{m,n}`, row-major.
    pub fn conjugation_rates(&self) -> Vec<f64> {
        self.i
            .iter()
            .flat_map(|&a| self.j.iter().map(move |&b| a + b))
            .collect()
    }

    /// Quasinorm exponents `m i_k` then `n j_l`.
    pub fn exponents(&self) -> &[f64] {
        &self.exps
    }

    /// Half-widths of the box `{v : ||v||_{i,j} <= b}`.
    pub(crate) fn ball_half_widths(&self, b: f64, out: &mut [f64]) {
        for (o, &e) in out.iter_mut().zip(&self.exps) {
            *o = if e == 1.0 { b } else { b.powf(1.0 / e) };
        }
    }

    /// Quasinorm without length checks; `v.len()` must equal `d`.
    #[inline]
    pub(crate) fn quasinorm_unchecked(&self, v: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for (&x, &e) in v.iter().zip(&self.exps) {
            let a = x.abs();
            let val = if e == 1.0 { a } else { a.powf(e) };
            if val > best {
                best = val;
            }
        }
        best
    }
}

/// `max(||p||_i^{1/m}, ||q||_j^{1/n})` with `p` the first `m` and `q` the last `n` coordinates.
pub fn quasinorm(v: &[f64], w: &WeightVector) -> Result<f64> {
    if v.len() != w.d() {
        return Err(Error::DimensionMismatch {
            expected: w.d(),
            got: v.len(),
        });
    }
    Ok(w.quasinorm_unchecked(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_simplex() {
        assert!(WeightVector::new(vec![0.5, 0.4], vec![1.0]).is_err());
        assert!(WeightVector::new(vec![1.0], vec![1.5, -0.5]).is_err());
        assert!(WeightVector::new(vec![], vec![1.0]).is_err());
    }

    #[test]
    fn alpha_is_min_weight() {
        let w = WeightVector::new(vec![0.3, 0.7], vec![1.0]).unwrap();
        assert_eq!(w.alpha(), 0.3);
        assert_eq!(w.d(), 3);
        assert_eq!(w.conjugation_rates(), vec![1.3, 1.7]);
    }

    #[test]
    fn quasinorm_examples() {
        let w11 = WeightVector::equal(1, 1).unwrap();
        assert_eq!(quasinorm(&[1.0, 0.0], &w11).unwrap(), 1.0);
        assert_eq!(quasinorm(&[3.0, 2.0], &w11).unwrap(), 3.0);

        let w21 = WeightVector::new(vec![0.5, 0.5], vec![1.0]).unwrap();
        let v = quasinorm(&[0.25, 0.1, 0.5], &w21).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(quasinorm(&[1.0, 0.0, 0.0], &w21).unwrap(), 1.0);

        assert!(matches!(
            quasinorm(&[1.0, 2.0], &w21),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn equal_weights_give_sup_norm() {
        let w = WeightVector::equal(2, 2).unwrap();
        let v = [0.3, -0.7, 0.2, 0.65];
        assert!((quasinorm(&v, &w).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn serde_validates() {
        let w: WeightVector = serde_json::from_str(r#"{"i":[0.3,0.7],"j":[1.0]}"#).unwrap();
        assert_eq!(w.m(), 2);
        assert!(serde_json::from_str::<WeightVector>(r#"{"i":[0.3,0.3],"j":[1.0]}"#).is_err());
    }
}
