//! Weighted reverse convolution.
//!
//! Recovers a high-resolution feature map `X` from a strided circular
//! convolution `Y = (X ⊗ K)↓s` by minimizing a spatially weighted data term
//! plus a weighted Tikhonov prior around `X0`, in closed form via the FFT.
//!
//! Alongside the closed-form solver the crate carries everything needed to
//! check it: a dense least-squares oracle, the forward operator in both a
//! spatial and a spectral form, the Converse2D and Wiener reductions, and a
//! projector that measures how close an attention matrix is to being
//! block-circulant.

pub mod bccb;
pub mod bench;
pub mod error;
pub mod fft;
pub mod forward;
pub mod objectives;
pub mod oracle;
pub mod solver;
pub mod synth;
pub mod tensor;
pub mod weights;
pub mod wrct;

pub use error::{Result, WrcError};
pub use forward::{forward_adjoint, forward_spatial, forward_spectral, ForwardSpec};
pub use solver::{
    converse2d_solve, objective_gradient, objective_value, wiener_solve, wrc_solve, wrc_solve_s1,
    wrc_solve_with, Solution, SolveOptions, WrcProblem,
};
pub use tensor::{FeatureMap, Kernel, Shape, Spectrum, WeightField, WeightRole};
