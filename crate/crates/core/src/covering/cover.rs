//! Iterated survivor covers and box-counting fits.
//!
//! A box at level `k` is a nominal Bowen box `o + f^k V_r` together with a clip
//! box, its intersection with all ancestors. Children of a box are the tiles of
//! the once-more conjugated tessellation that meet it, placed relative to the
//! parent's nominal origin, so the nominal children cover the nominal parent
//! and clipping keeps every child inside its parent.
//!
//! A child at level `k + 1` is discarded only when its whole box is certified
//! to be in `U(eps)` at time `(k + 1) t`: with `S` from [`safety_factor`],
//! `delta_{i,j}(g_T u_{h_c} x0) < eps / S` at the box center forces
//! `delta_{i,j} < eps` on the box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tess::{axis_range, contraction, count_s_rt, Tessellation, TileOffset, TOUCH_TOL};
use crate::error::{Error, Result};
use crate::flow::FlowPoint;
use crate::lattice::{shortest_vector_in, EnumConfig, Lattice, Norm};
use crate::stats::linear_fit;
use crate::weights::WeightVector;

pub const DEFAULT_BOX_CAP: u64 = 10_000_000;
// parents expanded between budget checks
const EXPAND_BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverConfig {
    /// Target constant; the forbidden set is `U(c^{1/d})`.
    pub c: f64,
    pub r: f64,
    pub t: f64,
    pub k_max: usize,
    pub offset: TileOffset,
    pub box_cap: u64,
    /// Fail with `BudgetExceeded` instead of truncating at `box_cap`.
    pub strict_budget: bool,
    /// Return the boxes of every level, not only the counts.
    pub keep_boxes: bool,
}

impl CoverConfig {
    pub fn new(c: f64, r: f64, t: f64, k_max: usize) -> Self {
        Self {
            c,
            r,
            t,
            k_max,
            offset: TileOffset::Centered,
            box_cap: DEFAULT_BOX_CAP,
            strict_budget: false,
            keep_boxes: false,
        }
    }
}

/// Axis-aligned closed box given by center and half-sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverBox {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
}

impl CoverBox {
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.center
            .iter()
            .zip(&self.half)
            .zip(p)
            .all(|((c, h), x)| (x - c).abs() <= h + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverLevel {
    pub k: usize,
    /// Diameter of a nominal level-`k` box.
    pub box_size: f64,
    pub count: u64,
    /// Empty unless boxes were kept for this level.
    pub boxes: Vec<CoverBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorCover {
    pub levels: Vec<CoverLevel>,
    pub truncated: bool,
    pub eps: f64,
    pub safety: f64,
    /// Center test threshold `eps / safety`.
    pub threshold: f64,
    /// Children per box before the survival test, `#S_{r,t}`.
    pub branching: u64,
    pub nesting_violations: u64,
}

/// Smallest `S >= 1` with `(e/S)^{m i_k} + (s/2) sum_l (e/S)^{n j_l} <= e^{m i_k}`
/// for every `k`, where `s` is the tile side.
pub fn safety_factor(w: &WeightVector, eps: f64, side: f64) -> f64 {
    let ex = w.exponents();
    let (pe, qe) = ex.split_at(w.m());
    let ok = |s: f64| {
        let e = eps / s;
        let spill: f64 = qe.iter().map(|&b| e.powf(b)).sum::<f64>() * side / 2.0;
        pe.iter().all(|&a| e.powf(a) + spill <= eps.powf(a))
    };
    let mut hi = 2.0;
    while !ok(hi) {
        hi *= 2.0;
    }
    let mut lo = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Flat storage of boxes: nominal origin, clip lower corner, clip upper corner.
struct Boxes {
    l: usize,
    data: Vec<f64>,
}

impl Boxes {
    fn len(&self) -> usize {
        self.data.len() / (3 * self.l)
    }

    fn export(&self) -> Vec<CoverBox> {
        let l = self.l;
        self.data
            .chunks(3 * l)
            .map(|b| {
                let (lo, hi) = (&b[l..2 * l], &b[2 * l..]);
                CoverBox {
                    center: lo.iter().zip(hi).map(|(a, c)| 0.5 * (a + c)).collect(),
                    half: lo.iter().zip(hi).map(|(a, c)| 0.5 * (c - a)).collect(),
                }
            })
            .collect()
    }
}

/// Runs the cover on `h` in `V_r` for the points `u_h x0`.
pub fn survivor_cover(
    x0: &Lattice,
    w: &WeightVector,
    cfg: &CoverConfig,
    enum_cfg: &EnumConfig,
) -> Result<SurvivorCover> {
    if x0.dim() != w.d() {
        return Err(Error::DimensionMismatch {
            expected: w.d(),
            got: x0.dim(),
        });
    }
    if !(cfg.c > 0.0 && cfg.c < 1.0) {
        return Err(Error::InvalidInput(format!(
            "c must lie in (0, 1), got {}",
            cfg.c
        )));
    }
    if !(cfg.t > 0.0 && cfg.t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "t must be positive, got {}",
            cfg.t
        )));
    }
    if cfg.k_max == 0 {
        return Err(Error::InvalidInput("k_max must be at least 1".into()));
    }
    let l = w.m() * w.n();
    let tess = Tessellation::new(l, cfg.r)?.with_offset(cfg.offset);
    let side = tess.side;
    let eps = cfg.c.powf(1.0 / w.d() as f64);
    let safety = safety_factor(w, eps, side);
    let threshold = eps / safety;
    let f = contraction(w, cfg.t);
    let branching = count_s_rt(&tess, w, cfg.t)?;
    let ranges: Vec<(i64, i64)> = f.iter().map(|&x| axis_range(x, cfg.offset)).collect();
    let (a, b) = cfg.offset.unit_interval();

    let size = |k: usize| side * f.iter().map(|x| x.powi(2 * k as i32)).sum::<f64>().sqrt();
    let mut level0 = Vec::with_capacity(3 * l);
    level0.extend(std::iter::repeat_n(0.0, l));
    level0.extend(std::iter::repeat_n(side * a, l));
    level0.extend(std::iter::repeat_n(side * b, l));
    let mut current = Boxes { l, data: level0 };
    let mut levels = vec![CoverLevel {
        k: 0,
        box_size: size(0),
        count: 1,
        boxes: if cfg.keep_boxes {
            current.export()
        } else {
            Vec::new()
        },
    }];
    let mut truncated = false;
    let mut nesting_violations = 0;

    for k in 0..cfg.k_max {
        if current.len() == 0 {
            levels.push(CoverLevel {
                k: k + 1,
                box_size: size(k + 1),
                count: 0,
                boxes: Vec::new(),
            });
            continue;
        }
        let time = (k + 1) as f64 * cfg.t;
        // child side per axis at level k + 1
        let scale: Vec<f64> = f.iter().map(|x| side * x.powi(k as i32 + 1)).collect();
        let mut next = Vec::new();
        let mut over = false;
        for block in current.data.chunks(3 * l * EXPAND_BLOCK) {
            let expanded: Vec<Result<(Vec<f64>, u64)>> = block
                .par_chunks(3 * l)
                .map(|parent| {
                    expand(
                        parent,
                        l,
                        &ranges,
                        &scale,
                        (a, b),
                        w,
                        time,
                        x0,
                        threshold,
                        enum_cfg,
                    )
                })
                .collect();
            for e in expanded {
                let (kids, bad) = e?;
                nesting_violations += bad;
                next.extend(kids);
            }
            if (next.len() / (3 * l)) as u64 > cfg.box_cap {
                over = true;
                break;
            }
        }
        let count = (next.len() / (3 * l)) as u64;
        if over {
            if cfg.strict_budget {
                return Err(Error::BudgetExceeded {
                    what: "survivor boxes",
                    requested: count,
                    cap: cfg.box_cap,
                });
            }
            truncated = true;
            break;
        }
        current = Boxes { l, data: next };
        levels.push(CoverLevel {
            k: k + 1,
            box_size: size(k + 1),
            count,
            boxes: if cfg.keep_boxes {
                current.export()
            } else {
                Vec::new()
            },
        });
    }
    Ok(SurvivorCover {
        levels,
        truncated,
        eps,
        safety,
        threshold,
        branching,
        nesting_violations,
    })
}

#[allow(clippy::too_many_arguments)]
fn expand(
    parent: &[f64],
    l: usize,
    ranges: &[(i64, i64)],
    scale: &[f64],
    (a, b): (f64, f64),
    w: &WeightVector,
    time: f64,
    x0: &Lattice,
    threshold: f64,
    enum_cfg: &EnumConfig,
) -> Result<(Vec<f64>, u64)> {
    let (origin, rest) = parent.split_at(l);
    let (plo, phi) = rest.split_at(l);
    let mut out = Vec::new();
    let mut violations = 0;
    let mut g: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut child = vec![0.0; 3 * l];
    let mut center = vec![0.0; l];
    'outer: loop {
        let mut empty = false;
        for kk in 0..l {
            let o = origin[kk] + scale[kk] * g[kk] as f64;
            let lo = (o + scale[kk] * a).max(plo[kk]);
            let hi = (o + scale[kk] * b).min(phi[kk]);
            if hi - lo <= TOUCH_TOL * scale[kk] {
                empty = true;
            }
            child[kk] = o;
            child[l + kk] = lo;
            child[2 * l + kk] = hi;
            center[kk] = 0.5 * (lo + hi);
        }
        if !empty {
            let p = FlowPoint::new(w, time, &center, Some(x0));
            let d = shortest_vector_in(&p, &Norm::Quasi(w.clone()), enum_cfg)?.length;
            if d >= threshold {
                if (0..l).any(|kk| child[l + kk] < plo[kk] || child[2 * l + kk] > phi[kk]) {
                    violations += 1;
                }
                out.extend_from_slice(&child);
            }
        }
        let mut kk = 0;
        loop {
            if kk == l {
                break 'outer;
            }
            if g[kk] < ranges[kk].1 {
                g[kk] += 1;
                break;
            }
            g[kk] = ranges[kk].0;
            kk += 1;
        }
    }
    Ok((out, violations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub levels_used: Vec<usize>,
    pub log_counts: Vec<f64>,
    pub log_inv_sizes: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares slope of `log count` against `log(1 / size)` over the levels
/// from `skip` on that have a positive count.
pub fn box_dimension_fit(counts: &[u64], sizes: &[f64], skip: usize) -> Result<DimensionEstimate> {
    if counts.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            got: sizes.len(),
        });
    }
    let used: Vec<usize> = (skip..counts.len())
        .filter(|&k| counts[k] > 0 && sizes[k] > 0.0)
        .collect();
    if used.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 levels with positive counts, have {}",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|&k| -sizes[k].ln()).collect();
    let ys: Vec<f64> = used.iter().map(|&k| (counts[k] as f64).ln()).collect();
    let fit =
        linear_fit(&xs, &ys).ok_or_else(|| Error::DegenerateFit("sizes do not vary".into()))?;
    Ok(DimensionEstimate {
        levels_used: used,
        log_counts: ys,
        log_inv_sizes: xs,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
    })
}

impl SurvivorCover {
    /// Box-counting fit over the levels, skipping the first `skip`.
    pub fn dimension(&self, skip: usize) -> Result<DimensionEstimate> {
        let counts: Vec<u64> = self.levels.iter().map(|l| l.count).collect();
        let sizes: Vec<f64> = self.levels.iter().map(|l| l.box_size).collect();
        box_dimension_fit(&counts, &sizes, skip)
    }

    pub fn counts(&self) -> Vec<u64> {
        self.levels.iter().map(|l| l.count).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::u_a;
    use nalgebra::DMatrix;

    fn golden_base() -> Lattice {
        let a0 = (5f64.sqrt() - 1.0) / 2.0;
        Lattice::standard(2)
            .unwrap()
            .transform(&u_a(&DMatrix::from_element(1, 1, a0)))
            .unwrap()
    }

    #[test]
    fn safety_equal_weights() {
        let w = WeightVector::equal(1, 1).unwrap();
        assert!((safety_factor(&w, 0.5, 0.125) - 1.0625).abs() < 1e-12);
        let w2 = WeightVector::new(vec![0.3, 0.7], vec![1.0]).unwrap();
        let s = safety_factor(&w2, 0.6, 0.1);
        assert!(s > 1.0);
        let e = 0.6 / s;
        for (k, a) in w2.exponents()[..2].iter().enumerate() {
            let lhs = e.powf(*a) + 0.05 * e.powf(w2.exponents()[2]);
            assert!(lhs <= 0.6f64.powf(*a) * (1.0 + 1e-9), "{k}");
        }
    }

    #[test]
    fn cantor_fit() {
        let counts: Vec<u64> = (1..=6).map(|k| 1u64 << k).collect();
        let sizes: Vec<f64> = (1..=6).map(|k| 3f64.powi(-k)).collect();
        let d = box_dimension_fit(&counts, &sizes, 0).unwrap();
        assert!((d.slope - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            box_dimension_fit(&counts[..2], &sizes[..2], 0),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn first_level_matches_center_orbits() {
        let w = WeightVector::equal(1, 1).unwrap();
        let x0 = Lattice::from_rows(&[vec![0.05, 0.0], vec![0.0, 20.0]]).unwrap();
        let mut cfg = CoverConfig::new(0.2, 0.5, 1.0, 1);
        cfg.keep_boxes = true;
        let cover = survivor_cover(&x0, &w, &cfg, &EnumConfig::default()).unwrap();
        let tess = Tessellation::new(1, 0.5).unwrap();
        let f = (-2.0f64).exp();
        let (lo, hi) = axis_range(f, TileOffset::Centered);
        let mut direct = 0;
        for g in lo..=hi {
            let a = (tess.side * f * (g as f64 - 0.5)).max(-tess.side / 2.0);
            let b = (tess.side * f * (g as f64 + 0.5)).min(tess.side / 2.0);
            let h = [0.5 * (a + b)];
            let p = FlowPoint::new(&w, 1.0, &h, Some(&x0));
            let d = shortest_vector_in(&p, &Norm::Quasi(w.clone()), &EnumConfig::default())
                .unwrap()
                .length;
            if d >= cover.threshold {
                direct += 1;
            }
        }
        assert_eq!(cover.levels[1].count, direct);
        assert_eq!(cover.levels[1].boxes.len() as u64, direct);
    }

    #[test]
    fn nested_and_antimonotone() {
        let w = WeightVector::equal(1, 1).unwrap();
        let x0 = golden_base();
        let mut prev = u64::MAX;
        for c in [0.05, 0.15, 0.25, 0.35] {
            let cfg = CoverConfig::new(c, 0.5, 1.0, 4);
            let cover = survivor_cover(&x0, &w, &cfg, &EnumConfig::default()).unwrap();
            assert_eq!(cover.nesting_violations, 0);
            let last = cover.levels.last().unwrap().count;
            assert!(last <= prev);
            prev = last;
        }
    }

    #[test]
    fn truncation_sets_flag() {
        let w = WeightVector::equal(1, 1).unwrap();
        let mut cfg = CoverConfig::new(0.05, 0.5, 1.0, 6);
        cfg.box_cap = 30;
        let cover = survivor_cover(&golden_base(), &w, &cfg, &EnumConfig::default()).unwrap();
        assert!(cover.truncated);
        assert!(cover.levels.iter().all(|l| l.count <= 30));
        cfg.strict_budget = true;
        assert!(matches!(
            survivor_cover(&golden_base(), &w, &cfg, &EnumConfig::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
