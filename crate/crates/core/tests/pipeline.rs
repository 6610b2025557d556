use std::f64::consts::SQRT_2;

use jumpdiff_core::extension::{two_weight_igamma, WeightExponent};
use jumpdiff_core::quadrature::cutoff_for;
use jumpdiff_core::*;

fn operator(spec: &KernelSpec, grid: Grid, reach: f64, c: f64, mode: Mode) -> OperatorHandle {
    let q = build_quadrature(spec, &grid, cutoff_for(spec, grid.spacing().0, reach)).unwrap();
    OperatorHandle::new(q, c, mode).unwrap()
}

fn layer(op: &OperatorHandle, grid: Grid1D) -> GridFn {
    let init = GridFn::from_fn(grid, Tail::layer(), |p| (p[0] / SQRT_2).tanh());
    let rep = solve_layer(op, &Nonlinearity::allen_cahn(), &init, 1e-10).unwrap();
    assert!(rep.monotone && rep.final_residual <= 1e-10);
    rep.solution
}

#[test]
fn local_layer_energy_matches_classical_value() {
    let grid = Grid1D::new(20.0, 801).unwrap();
    let op = operator(&KernelSpec::fractional(1, 1.0), grid.into(), 0.0, 0.0, Mode::Mixed);
    let u = layer(&op, grid);
    let e = energy(&u, &op, &Nonlinearity::allen_cahn(), 20.0).unwrap();
    assert!((e.total - 2.0 * SQRT_2 / 3.0).abs() < 1e-3, "{}", e.total);
    assert_eq!(e.sob_nonlocal, 0.0);
    assert!((e.total - e.sob_local - e.pot).abs() < 1e-14);
}

#[test]
fn mixed_operator_symbol_on_cosine() {
    let grid: Grid = Grid1D::new(40.0, 4097).unwrap().into();
    let spec = KernelSpec::fractional(1, 1.0);
    let q = build_quadrature(&spec, &grid, cutoff_for(&spec, grid.spacing().0, 200.0))
        .unwrap()
        .taper(50.0)
        .unwrap();
    let op = OperatorHandle::mixed(q, 1.0).unwrap();
    let u = GridFn::from_fn(grid, Tail::analytic(|p| p[0].cos(), 0.0), |p| p[0].cos());
    let tu = apply_t(&u, &op).unwrap();
    let err = tu.values.iter().zip(&u.values).map(|(t, c)| (t - 2.0 * c).abs()).fold(0.0, f64::max);
    assert!(err <= 2e-3, "{err}");
}

#[test]
fn truncated_kernel_on_quadratic() {
    let grid: Grid = Grid1D::new(5.0, 201).unwrap().into();
    let spec = KernelSpec::truncated(1, 1.0, 1.0, 1.0);
    let q = build_quadrature(&spec, &grid, cutoff_for(&spec, grid.spacing().0, 0.0)).unwrap();
    let u = GridFn::from_fn(grid, Tail::analytic(|p| p[0] * p[0], 0.0), |p| p[0] * p[0]);
    let lu = apply_l(&u, &q).unwrap();
    assert!(lu.values.iter().all(|v| (v - 2.0).abs() < 1e-9), "{:?}", &lu.values[..3]);
}

#[test]
fn layer_pipeline_end_to_end() {
    let grid = Grid1D::new(20.0, 401).unwrap();
    let op = operator(&KernelSpec::fractional(1, 1.0), grid.into(), 40.0, 0.5, Mode::Mixed);
    let nl = Nonlinearity::allen_cahn();
    let u = layer(&op, grid);

    let fit = energy_scan(&u, &op, &nl, &[2.0, 4.0, 8.0, 16.0]).unwrap();
    assert!(fit.reports.windows(2).all(|w| w[1].total > w[0].total));
    let l4 = linearized_eigen(&op, &nl, &u, 4.0).unwrap().lambda1;
    let l8 = linearized_eigen(&op, &nl, &u, 8.0).unwrap().lambda1;
    assert!(l8 <= l4 && l8 >= -1e-6);

    let v = extend(&u, 1.0).unwrap();
    assert_eq!(v.trace(), &u.values[..]);
    let ham = jumpdiff_core::extension::hamiltonian_residual(&v, 0.5, &nl).unwrap();
    assert!(ham.max_abs() < 1e-3);
    assert!(ham.oscillation(10.0) < 0.1 * ham.unscaled_oscillation(10.0));
}

#[test]
fn two_weight_functional_for_a_sum_of_orders() {
    let grid = Grid1D::new(20.0, 401).unwrap();
    let spec = KernelSpec::sum(KernelSpec::fractional(1, 0.8), KernelSpec::fractional(1, 1.4));
    let op = operator(&spec, grid.into(), 40.0, 1.0, Mode::NonlocalOnly);
    let u = layer(&op, grid);
    let nl = Nonlinearity::allen_cahn();
    let (v1, v2) = (extend(&u, 0.8).unwrap(), extend(&u, 1.4).unwrap());
    let radii = [2.0, 4.0, 6.0, 8.0];
    let f = two_weight_igamma(&v1, &v2, &nl, 1.4, &radii, WeightExponent::Standard).unwrap();
    assert!(f.is_monotone(), "{:?}", f.values);
    assert!(f.derivative_mismatch() < 2e-3, "{}", f.derivative_mismatch());
    assert!(f.inequality_held().iter().all(|&h| h));
    let doubled = two_weight_igamma(&v1, &v2, &nl, 1.4, &radii, WeightExponent::Doubled);
    assert!(matches!(doubled, Err(Error::Unsupported(_))));
}
