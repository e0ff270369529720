//! Numerical verification of the gap property for the linearized operators
//! of the focusing 3D NLS ground state: soliton by Petviashvili iteration,
//! matrix-free Birman-Schwinger operators and their top eigenvalues.

pub mod birman_schwinger;
pub mod eigensolver;
pub mod error;
pub mod gap;
pub mod grid;
pub mod io;
pub mod soliton;
pub mod special;

pub use birman_schwinger::{apply_bs, make_bs_operator, BSOperator, Sign};
pub use eigensolver::{cluster_multiplicities, top_eigs, top_eigs_from, EigenOptions, EigenSet, LinearOperator};
pub use error::{Error, Result};
pub use gap::{
    beta_scan, find_beta_star, gap_check, locate_crossing, table_crossing, BetaScan, BetaStar, CubicFit, GapParams,
    GapReport, GapSolver, ScanMode, ScanRow,
};
pub use grid::{fft3, ifft3, inner_product, l2_norm, make_grid, spectral_derivative, Axis, GridSpec, RealField, Spectrum};
pub use soliton::{solve_soliton, SolitonParams, SolitonResult, Termination};
pub use special::{greens_weights, sine_integral, GreenWeights};
