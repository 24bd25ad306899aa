//! Fractional Sobolev quadratic forms computed two ways: Fourier-multiplier
//! sums and hypersingular kernel quadrature.

pub mod cli;
pub mod experiments;
pub mod expr;
pub mod grid;
pub mod kernel_form;
pub mod special_functions;
pub mod spectral_form;
