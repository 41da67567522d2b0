//! Exhaustive search over a coefficient box. Independent of the reduction and
//! enumeration path; used by `--brute` and by the test suites as an oracle.

use super::{Norm, ShortVec, VectorSource, MAX_DIM};
use crate::error::{Error, Result};

/// Minimum of `norm` over `B c` for all nonzero `c` with `|c_k| <= bound`.
///
/// Ties keep the first vector met in the scan order (last coordinate slowest,
/// starting from the most negative), after canonicalizing the sign.
pub fn brute_force_shortest<S: VectorSource + ?Sized>(
    src: &S,
    norm: &Norm,
    bound: i64,
) -> Result<ShortVec> {
    let d = src.dim();
    if d == 0 || d > MAX_DIM {
        return Err(Error::UnsupportedDim(d));
    }
    let side = (2 * bound + 1) as u128;
    if side.pow(d as u32) > 2_000_000_000 {
        return Err(Error::BudgetExceeded {
            what: "brute-force box",
            requested: side.pow(d as u32).min(u64::MAX as u128) as u64,
            cap: 2_000_000_000,
        });
    }
    let mut c = vec![-bound; d];
    let mut v = vec![0.0; d];
    let mut best: Option<ShortVec> = None;
    loop {
        if c.iter().any(|&x| x != 0) && c.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0) {
            src.vector(&c, &mut v);
            let len = norm.eval(&v);
            if best.as_ref().is_none_or(|b| len < b.length) {
                best = Some(ShortVec {
                    coeffs: c.clone(),
                    vec: v.clone(),
                    length: len,
                });
            }
        }
        // odometer, first coordinate fastest
        let mut k = 0;
        loop {
            if k == d {
                return best.ok_or(Error::Rank);
            }
            if c[k] < bound {
                c[k] += 1;
                break;
            }
            c[k] = -bound;
            k += 1;
        }
    }
}
