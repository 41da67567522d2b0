//! Box-counting dimension of `E_N`, the reals in `(0, 1)` whose continued
//! fraction digits are all at most `N`.
//!
//! The depth-`n` cylinder `[a_1, ..., a_n]` has length `1 / (q_n (q_n + q_{n-1}))`.
//! The estimate is the exponent `s` at which `sum |I|^s` over depth `n + 1`
//! equals the same sum over depth `n`.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const CYLINDER_CAP: u64 = 100_000_000;
const CHUNK: usize = 4096;

fn push_leaves(n: u64, depth: u32, q: u64, q_prev: u64, out: &mut Vec<(u64, u64)>) {
    if depth == 0 {
        out.push((q, q_prev));
        return;
    }
    for a in 1..=n {
        push_leaves(n, depth - 1, a * q + q_prev, q, out);
    }
}

fn log_length(q: u64, q_prev: u64) -> f64 {
    -((q as f64).ln() + ((q + q_prev) as f64).ln())
}

/// Dimension estimate for `E_N` from cylinders of depth `depth` and `depth + 1`.
pub fn cf_digit_oracle(n: u64, depth: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("digit bound must be at least 1".into()));
    }
    if depth < 4 {
        return Err(Error::InvalidInput(format!(
            "depth must be at least 4, got {depth}"
        )));
    }
    let cells = (n as u128).pow(depth);
    if cells > CYLINDER_CAP as u128 {
        return Err(Error::BudgetExceeded {
            what: "cylinder enumeration",
            requested: cells.min(u64::MAX as u128) as u64,
            cap: CYLINDER_CAP,
        });
    }
    if n == 1 {
        return Ok(0.0);
    }
    // prefixes of length 1 in parallel; q_0 = 1, q_{-1} = 0
    let shallow: Vec<Vec<(u64, u64)>> = (1..=n)
        .into_par_iter()
        .map(|a| {
            let mut v = Vec::new();
            push_leaves(n, depth - 1, a, 1, &mut v);
            v
        })
        .collect();
    let shallow: Vec<(u64, u64)> = shallow.into_iter().flatten().collect();
    let here: Vec<f64> = shallow.iter().map(|&(q, p)| log_length(q, p)).collect();
    // Returns g(s) = ln sum_{n+1} |I|^s - ln sum_n |I|^s and g'(s). Children are
    // shorter than their parent, so the largest term of `here` bounds both sums.
    let eval = |s: f64| {
        let top = here.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(s * x));
        let parts: Vec<[f64; 4]> = shallow
            .par_chunks(CHUNK)
            .zip(here.par_chunks(CHUNK))
            .map(|(pairs, logs)| {
                let mut acc = [0.0; 4];
                let mut lq = vec![0.0; n as usize + 2];
                for (&(q, p), &x) in pairs.iter().zip(logs) {
                    let e = (s * x - top).exp();
                    acc[0] += e;
                    acc[1] += x * e;
                    // child [.., a] has length 1 / ((a q + p)((a + 1) q + p))
                    for (a, v) in lq.iter_mut().enumerate().skip(1) {
                        *v = ((a as u64 * q + p) as f64).ln();
                    }
                    for a in 1..=n as usize {
                        let y = -(lq[a] + lq[a + 1]);
                        let e = (s * y - top).exp();
                        acc[2] += e;
                        acc[3] += y * e;
                    }
                }
                acc
            })
            .collect();
        let mut tot = [0.0; 4];
        for p in &parts {
            for (t, v) in tot.iter_mut().zip(p) {
                *t += v;
            }
        }
        (tot[2].ln() - tot[0].ln(), tot[3] / tot[2] - tot[1] / tot[0])
    };
    // g(0) = ln N > 0 and g(1) < 0; g is decreasing. Newton inside a bracket.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut s = 0.5;
    for _ in 0..100 {
        let (g, dg) = eval(s);
        if g > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - g / dg;
        let next = if newton > lo && newton < hi && dg < 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() < 1e-15 || hi - lo < 1e-15 {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}
