//! Tessellations of `P = M_{m,n}(R)`, Bowen-box counts, survivor covers,
//! box-counting fits, closed-form bounds and a continued-fraction oracle.

mod cf;
mod cover;
mod tess;

pub use cf::{cf_digit_oracle, CYLINDER_CAP};
pub use cover::{
    box_dimension_fit, safety_factor, survivor_cover, CoverBox, CoverConfig, CoverLevel,
    DimensionEstimate, SurvivorCover, DEFAULT_BOX_CAP,
};
pub use tess::{
    analytic_k3, calibrate_k3, contraction, count_s_rt, count_s_rt_brute, lambda0, lambda_max,
    required_k3, tile_count_bound, volume_ratio, Tessellation, TileOffset, TOUCH_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the covering estimate. None of them is determined by first
/// principles; they are inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverConstants {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub lambda1: f64,
    pub lambda_max: f64,
    pub l: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    /// The base `1 - K1 mu + K2 e^{-lambda1 t} / r^L` was negative and set to 0.
    pub clamped: bool,
}

/// `K0 e^{L k lambda_max t} max(0, 1 - K1 mu + K2 e^{-lambda1 t} / r^L)^k`.
pub fn covering_bound(r: f64, t: f64, k: u32, mu: f64, c: &CoverConstants) -> BoundValue {
    let base = covering_base(r, t, mu, c);
    let clamped = base < 0.0;
    let growth = (c.l as f64 * k as f64 * c.lambda_max * t).exp();
    BoundValue {
        value: c.k0 * growth * base.max(0.0).powi(k as i32),
        clamped,
    }
}

/// `1 - K1 mu + K2 e^{-lambda1 t} / r^L`, unclamped.
pub fn covering_base(r: f64, t: f64, mu: f64, c: &CoverConstants) -> f64 {
    1.0 - c.k1 * mu + c.k2 * (-c.lambda1 * t).exp() / r.powi(c.l as i32)
}

/// `L + ln(base) / t`.
pub fn dim_upper_formula(l: usize, t: f64, base: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::Domain(format!("base must be positive, got {base}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    Ok(l as f64 + base.ln() / t)
}

/// `a + ((L + q) / lambda1) ln(1 / (r mu))`.
pub fn optimal_t(a: f64, l: usize, q: f64, lambda1: f64, r: f64, mu: f64) -> Result<f64> {
    if !(lambda1 > 0.0) || !(r * mu > 0.0) {
        return Err(Error::Domain("need lambda1 > 0 and r mu > 0".into()));
    }
    Ok(a + (l as f64 + q) / lambda1 * (1.0 / (r * mu)).ln())
}
