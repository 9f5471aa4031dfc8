//! Densities, distribution functions, quantiles and random variates used by
//! the likelihood, the proposals and the simulators.

pub mod gpd;
pub mod mixture;
pub mod sampling;
pub mod special;

pub use gpd::{gpd_cdf, gpd_logpdf, gpd_quantile, GpdParams, XI_EPS};
pub use mixture::{
    gamma_mix_cdf, mix_quantile, normal_mix_cdf, BulkKind, BulkParams, Components, GammaComponent,
    NormalComponent,
};
pub use sampling::{sample_dirichlet, sample_gamma_meanshape, sample_trunc_normal};
