//! Numerics for orbits of weighted diagonal flows on the space of unimodular
//! lattices `SL_d(R)/SL_d(Z)`, `2 <= d <= 5`.
//!
//! * [`lattice`]: bases, exact shortest vectors, the cusp functions `delta` and `delta_{i,j}`.
//! * [`flow`]: `g_t`, `u_A`, orbit profiles and the badly-approximable test.
//! * [`haar`]: Haar Monte Carlo on `SL_2(R)/SL_2(Z)` and the measure checks built on it.
//! * [`covering`]: tessellations of `M_{m,n}`, Bowen boxes, survivor covers and
//!   box-counting dimension estimates, plus a continued-fraction oracle.

// `!(x > 0.0)` also rejects NaN, which is the point of every such check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covering;
pub mod error;
pub mod flow;
pub mod haar;
pub mod lattice;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use haar::{
    estimate_mu_u, sample_sl2_haar, siegel_prediction, HaarSample, MeasureEstimate, ScalingFit,
};
pub use lattice::{
    delta, delta_weighted, injectivity_shape, shortest_vector, EnumConfig, Lattice, Norm, ShortVec,
};
pub use weights::{quasinorm, WeightVector};
