//! Cube tessellations of `P = M_{m,n}(R)` and counts of Bowen boxes meeting a tile.
//!
//! Conjugation `h -> g_{-t} h g_t` multiplies coordinate `(k, l)` of `h` by
//! `e^{-(i_k + j_l) t}`, so a Bowen box `g_{-t} (V_r + gamma) g_t` is the tile
//! `V_r + gamma` shrunk coordinatewise about the origin. Boxes are open; two
//! intervals whose overlap is shorter than [`TOUCH_TOL`] times the tile side
//! are treated as touching, not intersecting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightVector;

/// Relative overlap below which two open intervals count as disjoint.
pub const TOUCH_TOL: f64 = 1e-9;
const BRUTE_CAP: u64 = 50_000_000;

/// Position of the base tile `V_r` relative to the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileOffset {
    /// `V_r = (-side/2, side/2)^L`.
    #[default]
    Centered,
    /// `V_r = (0, side)^L`.
    Corner,
}

impl TileOffset {
    /// Base interval in units of the side.
    pub fn unit_interval(self) -> (f64, f64) {
        match self {
            TileOffset::Centered => (-0.5, 0.5),
            TileOffset::Corner => (0.0, 1.0),
        }
    }
}

/// Open cube of side `r / (4 sqrt L)` and its translates by `side Z^L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tessellation {
    pub l: usize,
    pub r: f64,
    pub side: f64,
    pub offset: TileOffset,
}

impl Tessellation {
    pub fn new(l: usize, r: f64) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidInput("L must be at least 1".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!("r must be positive, got {r}")));
        }
        Ok(Self {
            l,
            r,
            side: r / (4.0 * (l as f64).sqrt()),
            offset: TileOffset::Centered,
        })
    }

    pub fn with_offset(mut self, offset: TileOffset) -> Self {
        self.offset = offset;
        self
    }

    /// `nu(V_r) = side^L`.
    pub fn volume(&self) -> f64 {
        self.side.powi(self.l as i32)
    }

    /// Index `gamma` of the closed tile containing `p`; points on a shared face
    /// go to the tile with the larger index.
    pub fn tile_of(&self, p: &[f64]) -> Vec<i64> {
        let (a, _) = self.offset.unit_interval();
        p.iter()
            .map(|&x| (x / self.side - a).floor() as i64)
            .collect()
    }

    /// Closed tile `[lo, hi]` in one coordinate for index `g`.
    pub fn tile_bounds(&self, g: i64) -> (f64, f64) {
        let (a, b) = self.offset.unit_interval();
        (self.side * (g as f64 + a), self.side * (g as f64 + b))
    }

    fn check(&self, w: &WeightVector) -> Result<()> {
        if self.l != w.m() * w.n() {
            return Err(Error::DimensionMismatch {
                expected: w.m() * w.n(),
                got: self.l,
            });
        }
        Ok(())
    }
}

/// `min (i_k + j_l)`, the slowest conjugation rate on `P`.
pub fn lambda0(w: &WeightVector) -> f64 {
    w.conjugation_rates()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// `max (i_k + j_l)`.
pub fn lambda_max(w: &WeightVector) -> f64 {
    w.conjugation_rates().into_iter().fold(0.0, f64::max)
}

/// Per-coordinate contraction factors `e^{-(i_k + j_l) t}`, row-major.
pub fn contraction(w: &WeightVector, t: f64) -> Vec<f64> {
    w.conjugation_rates()
        .iter()
        .map(|l| (-l * t).exp())
        .collect()
}

/// `nu(V_r) / nu(g_{-t} V_r g_t) = e^{(m + n) t}`.
pub fn volume_ratio(w: &WeightVector, t: f64) -> f64 {
    (w.conjugation_rates().iter().sum::<f64>() * t).exp()
}

/// Integers `g` with `f (I + g)` meeting `I`, for `I` the base unit interval.
pub(crate) fn axis_range(f: f64, offset: TileOffset) -> (i64, i64) {
    match offset {
        TileOffset::Centered => {
            let m = (0.5 - TOUCH_TOL) / f + 0.5;
            let top = m.ceil() as i64 - 1;
            (-top, top)
        }
        TileOffset::Corner => {
            let lo = TOUCH_TOL / f - 1.0;
            let hi = (1.0 - TOUCH_TOL) / f;
            (lo.floor() as i64 + 1, hi.ceil() as i64 - 1)
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "t must be nonnegative, got {t}"
        )));
    }
    Ok(())
}

/// `#S_{r,t}`, the number of tiles whose Bowen box meets `V_r`.
pub fn count_s_rt(tess: &Tessellation, w: &WeightVector, t: f64) -> Result<u64> {
    tess.check(w)?;
    check_t(t)?;
    let mut total: u64 = 1;
    for f in contraction(w, t) {
        let (lo, hi) = axis_range(f, tess.offset);
        let n = (hi - lo + 1).max(0) as u64;
        total = total.checked_mul(n).ok_or(Error::BudgetExceeded {
            what: "S_{r,t} count",
            requested: u64::MAX,
            cap: u64::MAX,
        })?;
    }
    Ok(total)
}

/// `#S_{r,t}` by testing every `gamma` with `|gamma_k| <= ceil(e^{lambda_k t}) + 2`
/// for intersection with `V_r` directly.
pub fn count_s_rt_brute(tess: &Tessellation, w: &WeightVector, t: f64) -> Result<u64> {
    tess.check(w)?;
    check_t(t)?;
    let f = contraction(w, t);
    let bounds: Vec<i64> = f.iter().map(|x| (1.0 / x).ceil() as i64 + 2).collect();
    let cells = bounds
        .iter()
        .try_fold(1u64, |acc, &b| acc.checked_mul(2 * b as u64 + 1))
        .unwrap_or(u64::MAX);
    if cells > BRUTE_CAP {
        return Err(Error::BudgetExceeded {
            what: "brute-force S_{r,t} box",
            requested: cells,
            cap: BRUTE_CAP,
        });
    }
    let (base_lo, base_hi) = tess.tile_bounds(0);
    let meets = |k: usize, g: i64| {
        let (lo, hi) = tess.tile_bounds(g);
        let a = (f[k] * lo).max(base_lo);
        let b = (f[k] * hi).min(base_hi);
        b - a > TOUCH_TOL * tess.side
    };
    let l = tess.l;
    let mut g: Vec<i64> = bounds.iter().map(|b| -b).collect();
    let mut count = 0;
    loop {
        if (0..l).all(|k| meets(k, g[k])) {
            count += 1;
        }
        let mut k = 0;
        loop {
            if k == l {
                return Ok(count);
            }
            if g[k] < bounds[k] {
                g[k] += 1;
                break;
            }
            g[k] = -bounds[k];
            k += 1;
        }
    }
}

/// `nu(V_r)/nu(g_{-t} V_r g_t) (1 + K3 e^{-lambda0 t} / nu(V_r))`.
pub fn tile_count_bound(
    tess: &Tessellation,
    w: &WeightVector,
    t: f64,
    k3: f64,
    lambda0: f64,
) -> f64 {
    volume_ratio(w, t) * (1.0 + k3 * (-lambda0 * t).exp() / tess.volume())
}

/// `(3^L - 1) nu(V_r)`, a boundary constant valid for both offsets.
///
/// Each axis meets at most `e^{lambda_k t} + 2` tiles and
/// `prod (1 + a_k) - 1 <= (3^L - 1) a / 2` for `0 <= a_k <= a <= 2`.
pub fn analytic_k3(tess: &Tessellation) -> f64 {
    (3f64.powi(tess.l as i32) - 1.0) * tess.volume()
}

/// Smallest `K3` that makes the bound hold on one `(tessellation, weights, t)`.
pub fn required_k3(tess: &Tessellation, w: &WeightVector, t: f64) -> Result<f64> {
    let count = count_s_rt(tess, w, t)? as f64;
    let excess = count / volume_ratio(w, t) - 1.0;
    Ok((excess * tess.volume() * (lambda0(w) * t).exp()).max(0.0))
}

/// Largest required `K3` over a sweep.
pub fn calibrate_k3(sweep: &[(Tessellation, WeightVector, f64)]) -> Result<f64> {
    sweep.iter().try_fold(0.0f64, |acc, (tess, w, t)| {
        Ok(acc.max(required_k3(tess, w, *t)?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w11() -> WeightVector {
        WeightVector::equal(1, 1).unwrap()
    }

    #[test]
    fn sides() {
        assert!((Tessellation::new(1, 0.4).unwrap().side - 0.1).abs() < 1e-15);
        assert!((Tessellation::new(4, 0.8).unwrap().side - 0.1).abs() < 1e-15);
        assert!(Tessellation::new(0, 1.0).is_err());
        assert!(Tessellation::new(1, 0.0).is_err());
    }

    #[test]
    fn time_zero_counts_one() {
        for off in [TileOffset::Centered, TileOffset::Corner] {
            let tess = Tessellation::new(1, 0.5).unwrap().with_offset(off);
            assert_eq!(count_s_rt(&tess, &w11(), 0.0).unwrap(), 1);
            assert_eq!(count_s_rt_brute(&tess, &w11(), 0.0).unwrap(), 1);
        }
    }

    #[test]
    fn ten_fold_contraction() {
        let t = 10f64.ln() / 2.0;
        let corner = Tessellation::new(1, 0.4)
            .unwrap()
            .with_offset(TileOffset::Corner);
        assert_eq!(count_s_rt(&corner, &w11(), t).unwrap(), 10);
        assert_eq!(count_s_rt_brute(&corner, &w11(), t).unwrap(), 10);
        let centered = Tessellation::new(1, 0.4).unwrap();
        assert_eq!(count_s_rt(&centered, &w11(), t).unwrap(), 11);
        assert_eq!(count_s_rt_brute(&centered, &w11(), t).unwrap(), 11);
    }

    #[test]
    fn lambda_values() {
        let w = WeightVector::new(vec![0.3, 0.7], vec![1.0]).unwrap();
        assert!((lambda0(&w) - 1.3).abs() < 1e-15);
        assert!((lambda_max(&w) - 1.7).abs() < 1e-15);
        assert!((volume_ratio(&w, 1.0) - 3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn bound_at_time_zero() {
        let tess = Tessellation::new(1, 0.4).unwrap();
        let b = tile_count_bound(&tess, &w11(), 0.0, 0.3, 2.0);
        assert!((b - (1.0 + 0.3 / 0.1)).abs() < 1e-12);
    }

    #[test]
    fn corner_bound_with_k3_side() {
        let tess = Tessellation::new(1, 0.4)
            .unwrap()
            .with_offset(TileOffset::Corner);
        for k in 1..=10 {
            let t = 0.5 * k as f64;
            let n = count_s_rt(&tess, &w11(), t).unwrap() as f64;
            assert!(n <= tile_count_bound(&tess, &w11(), t, tess.side, 2.0));
        }
    }

    #[test]
    fn tiling_covers_square() {
        use rand::Rng;
        let tess = Tessellation::new(2, 0.9).unwrap();
        let mut rng = crate::stats::item_rng(3, 0);
        for _ in 0..10_000 {
            let p = [
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
            ];
            let g = tess.tile_of(&p);
            let mut owners = 0;
            for d0 in -1..=1 {
                for d1 in -1..=1 {
                    let (a0, b0) = tess.tile_bounds(g[0] + d0);
                    let (a1, b1) = tess.tile_bounds(g[1] + d1);
                    if a0 < p[0] && p[0] < b0 && a1 < p[1] && p[1] < b1 {
                        owners += 1;
                    }
                }
            }
            let (a0, b0) = tess.tile_bounds(g[0]);
            let (a1, b1) = tess.tile_bounds(g[1]);
            assert!(a0 <= p[0] && p[0] <= b0 && a1 <= p[1] && p[1] <= b1);
            assert!(owners <= 1);
        }
    }
}
