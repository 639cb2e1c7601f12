//! Special functions, circular statistics and transforms shared by every
//! other module. Everything here is pure and thread-safe.

mod bessel;
mod circular;
mod dft;

pub use bessel::{bessel_ratio, log_i0, BesselRatioLut};
pub(crate) use bessel::bessel_ratio_unchecked;
pub use circular::{
    circular_mean_of_product, von_mises_pdf, wrap_phase, wrapped_gaussian_pdf, VonMisesMessage,
    WrappedGaussianParams,
};
pub use dft::{dft, idft, Dft};
