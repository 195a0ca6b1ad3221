//! Numerical machinery for Schrödinger perturbations of subordinator
//! transition densities.
//!
//! The crate is `no_std` (it needs `alloc`) and purely computational:
//!
//! - [`specfun`]: erfc, gamma and the tilted upper incomplete gamma `Γ_λ(a, z)`.
//! - [`kernels`]: inverse Gaussian densities `p(t, z)`, dilations `ρ_c`, the
//!   Gaussian kernel `g_c`, general α-stable subordinator densities.
//! - [`quad`]: adaptive Gauss–Kronrod quadrature with declared endpoint
//!   singularities, semi-infinite ranges and nested space-time integrals.
//! - [`fourg`]: the constants `l(α)`, `M`, `D`, `D′` and pointwise 4G / 3G checks.
//! - [`potentials`]: potential descriptors and the Kato-type functionals
//!   `I_r(q)`, `N_h^c(q)` with admissibility certificates.
//! - [`perturb`]: the perturbation series `p̃ = Σ p_n`, perturbation-formula
//!   residuals, majorization bounds and bridge ratios.
//! - [`generators`]: Weyl derivatives and integrals, subordinator generators and
//!   fundamental-solution residuals.
//! - [`mc`]: a Monte Carlo oracle built on counter-based random streams.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub(crate) mod mathx;
pub(crate) mod optimize;

pub mod fourg;
pub mod generators;
pub mod kernels;
pub mod mc;
pub mod perturb;
pub mod potentials;
pub mod quad;
pub mod specfun;

pub use error::{Error, Result};
pub use kernels::{DilatedKernel, KernelParams, SpaceTimePoint};
pub use potentials::PotentialSpec;
pub use quad::{QuadConfig, QuadResult};
