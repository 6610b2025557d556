//! Shared fixtures for the benchmarks.

use jumpdiff_core::quadrature::cutoff_for;
use jumpdiff_core::{build_quadrature, Grid, Grid1D, Grid2D, GridFn, KernelSpec, OperatorHandle, Tail};

/// Mixed operator with a fractional kernel of order `alpha` on `[-L, L]`
/// with `points` nodes; the interaction reach is the grid diameter.
pub fn operator_1d(alpha: f64, half_width: f64, points: usize, c: f64) -> (Grid, OperatorHandle) {
    let grid: Grid = Grid1D::new(half_width, points).expect("valid grid").into();
    let spec = KernelSpec::fractional(1, alpha);
    let q = build_quadrature(&spec, &grid, cutoff_for(&spec, grid.spacing().0, 2.0 * half_width)).expect("quadrature");
    (grid, OperatorHandle::mixed(q, c).expect("operator"))
}

/// Truncated kernel of range `delta0` on a square grid.
pub fn operator_2d(half_width: f64, points: usize, delta0: f64, c: f64) -> (Grid, OperatorHandle) {
    let grid: Grid = Grid2D::square(half_width, points).expect("valid grid").into();
    let spec = KernelSpec::truncated(2, 1.0, 1.0, delta0);
    let q = build_quadrature(&spec, &grid, cutoff_for(&spec, grid.spacing().0, 0.0)).expect("quadrature");
    (grid, OperatorHandle::mixed(q, c).expect("operator"))
}

pub fn tanh_layer(grid: Grid) -> GridFn {
    GridFn::from_fn(grid, Tail::layer(), |p| (p[0] / std::f64::consts::SQRT_2).tanh())
}
