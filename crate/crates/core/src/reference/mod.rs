//! Closed forms and asymptotic reference quantities.

pub mod clt;
pub mod gamma;
pub mod hitting;
pub mod special;

pub use clt::{gamma_m, local_clt_scan, CltReport};
pub use gamma::{gamma_kernel, GammaKernelSpec};
pub use hitting::{annulus_exit, bm_hit_ball, poisson_kernel, srw_hit_ball_empirical};
