// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod kernels;
pub mod quad;
pub mod quadrature;
pub mod nonlocal;
pub mod solver;
pub mod energy;
pub mod extension;

pub use error::{Error, Result};
pub use grid::{Grid, Grid1D, Grid2D, GridFn, Tail};
pub use kernels::{KernelSpec, Profile};
pub use quadrature::{build_quadrature, QuadratureTable, Scheme};
pub use nonlocal::{apply_l, apply_t, dirichlet_form, Mode, OperatorHandle};
pub use solver::{linearized_eigen, solve_layer, Nonlinearity, SolveReport, StabilityReport};
pub use energy::{cutoff_pair_integrals, energy, energy_scan, log_cutoff, poincare_check, EnergyReport, GammaDecomposition, PoincareReport, SlopeFit};
pub use extension::{calibrate_d_alpha, extend, ExtensionField, MonotoneFunctional, YMesh};
