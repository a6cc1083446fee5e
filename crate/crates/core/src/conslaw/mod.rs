//! Shock-curve budgets for 1-D scalar conservation laws with uniformly
//! convex flux: mollify a compactly supported BV datum, thin the zero set
//! of `[f'(u_delta)]''` through the scalar perturbation machinery,
//! reconstruct a C2 speed profile, invert through `f'`, and evaluate the
//! entropy solution by the Lax-Oleinik formula to count shocks.

mod datum;
mod flux;
mod solution;
mod speed;

pub use datum::{mollify, mollifier_cdf, mollifier_kernel, BVDatum, SmoothDatum};
pub use flux::FluxFunction;
pub use solution::{
    lax_oleinik_eval, EntropySolution, InitialDatum, Shock, ShockScan,
};
pub use speed::{
    corollary_budget, count_inflections, invert_speed, phi_bound, pipeline,
    psi_hdelta_lower_bound, reconstruct_speed, speed_second_derivative, thin_zero_set,
    PhiBound, PipelineResult, ReconstructedDatum, ThinnedSpeed,
};
