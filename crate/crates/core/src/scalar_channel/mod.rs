//! Per-coordinate machinery of the two-parameter exponential family built on
//! an atomic prior: tilted moments, the dual map, relative entropy, AMP
//! denoisers and the scalar-channel Bayes risk.

mod channel;
mod prior;
mod quadrature;
mod tilt;

pub use channel::{channel_stats, denoise, mmse, ChannelStats};
pub use prior::{Prior, PriorKind, PriorSpec};
pub use quadrature::{
    GaussHermite, QuadratureConfig, QuadratureSpec, DEFAULT_CHANNEL_NODES, DEFAULT_PRIOR_NODES,
};
pub use tilt::{
    dual_solve, envelopes, gamma_region, inclusion_probability, neg_entropy, neg_entropy_at,
    project_interior, tilted_moments, DualPair, GammaRegion, MomentPair, TiltedSummary,
    BOUNDARY_TOL, DUAL_CAP, DUAL_RESIDUAL_TOL,
};

pub(crate) use tilt::tilted_first_two;
