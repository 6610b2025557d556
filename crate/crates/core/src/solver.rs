//! Damped Newton for `Δu + cL[u] + f(u) = 0`, the linearized operator and the
//! stability diagnostics.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_param, Error, Result};
use crate::grid::{Grid, GridFn, Tail};
use crate::nonlocal::{apply_t, assemble_t, dirichlet_parts, OperatorHandle, Stencil};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `f`, `f'` and `F` with `F' = −f`, plus the well constants `u±`.
#[derive(Clone)]
pub struct Nonlinearity {
    pub name: String,
    f: Scalar,
    df: Scalar,
    potential: Scalar,
    pub wells: (f64, f64),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("wells", &self.wells)
            .finish()
    }
}

impl Nonlinearity {
    /// Validates `F' = −f` and `F' ≈ f'` by central differences on
    /// `[-2, 2]`, and `F(u±) = 0`.
    pub fn new(
        name: &str,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        potential: impl Fn(f64) -> f64 + Send + Sync + 'static,
        wells: (f64, f64),
    ) -> Result<Self> {
        let nl = Self {
            name: name.to_string(),
            f: Arc::new(f),
            df: Arc::new(df),
            potential: Arc::new(potential),
            wells,
        };
        let d = 1e-5;
        for k in 0..=40 {
            let u = -2.0 + 0.1 * k as f64;
            let dp = (nl.potential(u + d) - nl.potential(u - d)) / (2.0 * d);
            let scale = 1.0 + nl.f(u).abs();
            check_param("F", u, (dp + nl.f(u)).abs() <= 1e-6 * scale, "F' differs from -f")?;
            let dd = (nl.f(u + d) - nl.f(u - d)) / (2.0 * d);
            check_param("f'", u, (dd - nl.df(u)).abs() <= 1e-6 * (1.0 + dd.abs()), "inconsistent derivative")?;
        }
        for w in [wells.0, wells.1] {
            check_param("wells", w, nl.potential(w).abs() <= 1e-12, "F must vanish at the wells")?;
        }
        Ok(nl)
    }

    /// `f(u) = u − u³`, `F(u) = ¼(1 − u²)²`, wells `±1`.
    pub fn allen_cahn() -> Self {
        Self::new(
            "allen_cahn",
            |u| u - u * u * u,
            |u| 1.0 - 3.0 * u * u,
            |u| 0.25 * (1.0 - u * u).powi(2),
            (-1.0, 1.0),
        )
        .expect("Allen-Cahn is consistent")
    }

    /// `f(u) = −u + u³`, `F(u) = ½u² − ¼u⁴`: decaying bumps around `0`.
    pub fn focusing() -> Self {
        Self::new(
            "focusing",
            |u| -u + u * u * u,
            |u| -1.0 + 3.0 * u * u,
            |u| 0.5 * u * u - 0.25 * u.powi(4),
            (0.0, 0.0),
        )
        .expect("focusing cubic is consistent")
    }

    /// `f ≡ 0` with `F ≡ 0`, used to probe `T_h` itself.
    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, |_| 0.0, |_| 0.0, (0.0, 0.0)).expect("consistent")
    }

    /// Linear `f(u) = s u` with `F = −s u²/2`.
    pub fn linear(s: f64) -> Self {
        Self::new(
            "linear",
            move |u| s * u,
            move |_| s,
            move |u| -0.5 * s * u * u,
            (0.0, 0.0),
        )
        .expect("linear nonlinearity is consistent")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "allen_cahn" => Ok(Self::allen_cahn()),
            "focusing" => Ok(Self::focusing()),
            other => Err(Error::Unsupported(format!("unknown nonlinearity {other:?}"))),
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn df(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    pub fn potential(&self, u: f64) -> f64 {
        (self.potential)(u)
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFn,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub radius: f64,
    pub lambda1: f64,
    /// Nonnegative, unit norm in discrete `L²(B_R)`, zero outside `B_R`.
    pub eigenfunction: GridFn,
    pub residual: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub tikhonov: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            max_halvings: 8,
            tikhonov: 1e-10,
        }
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Monotonicity along the first axis with `m_tol = 1e-10·max|u|`.
pub fn is_monotone(u: &GridFn) -> bool {
    let m_tol = 1e-10 * u.max_abs();
    let (nx, ny) = u.grid.shape();
    (0..ny).all(|j| {
        (0..nx - 1).all(|i| u.values[u.grid.index(i + 1, j)] - u.values[u.grid.index(i, j)] > -m_tol)
    })
}

/// `G(u) = −T_h u + f(u)` as a vector.
pub fn residual(op: &OperatorHandle, nl: &Nonlinearity, u: &GridFn) -> Result<DVector<f64>> {
    let t = apply_t(u, op)?;
    Ok(DVector::from_iterator(
        u.grid.len(),
        t.values.iter().zip(&u.values).map(|(tv, x)| -tv + nl.f(*x)),
    ))
}

pub fn solve_layer(op: &OperatorHandle, nl: &Nonlinearity, init: &GridFn, tol: f64) -> Result<SolveReport> {
    solve_layer_with(op, nl, init, tol, NewtonOptions::default())
}

pub fn solve_layer_with(
    op: &OperatorHandle,
    nl: &Nonlinearity,
    init: &GridFn,
    tol: f64,
    opts: NewtonOptions,
) -> Result<SolveReport> {
    check_param("tol", tol, tol > 0.0, "must be positive")?;
    let (a, b) = assemble_t(op, init)?;
    let n = init.grid.len();
    let mut x = DVector::from_vec(init.values.clone());
    let g_of = |x: &DVector<f64>| -> DVector<f64> {
        let mut g = -(&a * x + &b);
        for k in 0..n {
            g[k] += nl.f(x[k]);
        }
        g
    };
    let mirror = odd_mirror(nl, init);
    let mut g = g_of(&x);
    let mut res = max_abs(&g);
    let mut iterations = 0;
    while res > tol {
        if iterations == opts.max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual: res,
            });
        }
        let mut jac = -a.clone();
        for k in 0..n {
            jac[(k, k)] += nl.df(x[k]);
        }
        let step = match jac.clone().lu().solve(&(-&g)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                for k in 0..n {
                    jac[(k, k)] += opts.tikhonov;
                }
                match jac.lu().solve(&(-&g)) {
                    Some(s) if s.iter().all(|v| v.is_finite()) => s,
                    _ => return Err(Error::SingularJacobian),
                }
            }
        };
        let step = match &mirror {
            // the translation mode is nearly neutral, so roundoff would
            // otherwise shift an odd layer off the origin
            Some(m) => DVector::from_fn(n, |k, _| 0.5 * (step[k] - step[m[k]])),
            None => step,
        };
        let mut t = 1.0;
        let mut trial = &x + &step;
        let mut g_trial = g_of(&trial);
        let mut halvings = 0;
        while max_abs(&g_trial) >= res && halvings < opts.max_halvings {
            t *= 0.5;
            trial = &x + t * &step;
            g_trial = g_of(&trial);
            halvings += 1;
        }
        x = trial;
        g = g_trial;
        res = max_abs(&g);
        iterations += 1;
    }
    let solution = GridFn::new(init.grid, x.iter().copied().collect(), init.tail.clone())?;
    Ok(SolveReport {
        monotone: is_monotone(&solution),
        solution,
        newton_iterations: iterations,
        final_residual: res,
    })
}

/// Reflection `x₁ → −x₁` as an index map, if the data are odd under it:
/// odd `f`, opposite side tails and an odd initial guess.
fn odd_mirror(nl: &Nonlinearity, init: &GridFn) -> Option<Vec<usize>> {
    let Tail::Sides { left, right } = init.tail else {
        return None;
    };
    if left != -right {
        return None;
    }
    let odd_f = (0..=20).all(|k| {
        let u = 0.1 * k as f64;
        (nl.f(u) + nl.f(-u)).abs() <= 1e-14 * (1.0 + nl.f(u).abs())
    });
    if !odd_f {
        return None;
    }
    let (nx, _) = init.grid.shape();
    let map: Vec<usize> = (0..init.grid.len())
        .map(|k| {
            let (i, j) = init.grid.coords(k);
            init.grid.index(nx - 1 - i, j)
        })
        .collect();
    let tol = 1e-13 * init.max_abs().max(1.0);
    map.iter()
        .enumerate()
        .all(|(k, &m)| (init.values[k] + init.values[m]).abs() <= tol)
        .then_some(map)
}

/// Indices of grid nodes strictly inside `B_R`.
pub fn ball_nodes(grid: &Grid, radius: f64) -> Result<Vec<usize>> {
    let hw = grid.min_half_width();
    if radius > hw {
        return Err(Error::RadiusOutsideGrid {
            radius,
            half_width: hw,
        });
    }
    Ok((0..grid.len()).filter(|&k| grid.radius_of(k) < radius).collect())
}

/// Symmetric matrix of `T_h − diag f'(u)` on the nodes of `B_R` with zero
/// exterior values.
pub fn linearized_matrix(op: &OperatorHandle, nl: &Nonlinearity, u: &GridFn, nodes: &[usize]) -> Result<DMatrix<f64>> {
    let zero = GridFn {
        grid: u.grid,
        values: vec![0.0; u.grid.len()],
        tail: Tail::Constant(0.0),
    };
    let (a, _) = assemble_t(op, &zero)?;
    let m = nodes.len();
    Ok(DMatrix::from_fn(m, m, |r, c| {
        let v = a[(nodes[r], nodes[c])];
        if r == c {
            v - nl.df(u.values[nodes[r]])
        } else {
            v
        }
    }))
}

fn rayleigh(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x)) / x.dot(x)
}

fn single_signed(x: &DVector<f64>) -> bool {
    let mx = max_abs(x);
    let pos = x.iter().all(|v| *v >= -1e-8 * mx);
    let neg = x.iter().all(|v| *v <= 1e-8 * mx);
    pos || neg
}

/// Smallest eigenpair of a symmetric matrix: shifted inverse iteration from
/// the Gershgorin lower bound, then Rayleigh-quotient refinement; a dense
/// symmetric eigensolve is the fallback.
pub fn smallest_eigenpair(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Err(Error::EigenFailure("empty matrix".into()));
    }
    let gersh = (0..n)
        .map(|i| m[(i, i)] - (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let scale = m.abs().max().max(1.0);
    let shift = gersh - 1e-3 * scale;
    let shifted = m - DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = rayleigh(m, &x);
    let mut converged = false;
    for _ in 0..2000 {
        let Some(y) = lu.solve(&x) else { break };
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        x = y / norm;
        lambda = rayleigh(m, &x);
        let r = (m * &x - lambda * &x).norm();
        if r <= 1e-11 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        for _ in 0..6 {
            let sh = m - DMatrix::identity(n, n) * lambda;
            let Some(y) = sh.lu().solve(&x) else { break };
            let norm = y.norm();
            if !norm.is_finite() || norm == 0.0 {
                break;
            }
            x = y / norm;
            lambda = rayleigh(m, &x);
            if (m * &x - lambda * &x).norm() <= 1e-11 * scale {
                converged = true;
                break;
            }
        }
    }
    if converged && single_signed(&x) {
        return Ok((lambda, x));
    }
    let eig = SymmetricEigen::new(m.clone());
    let (k, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .ok_or_else(|| Error::EigenFailure("no eigenvalues".into()))?;
    Ok((lam, eig.eigenvectors.column(k).into_owned()))
}

pub fn linearized_eigen(op: &OperatorHandle, nl: &Nonlinearity, u: &GridFn, radius: f64) -> Result<StabilityReport> {
    let nodes = ball_nodes(&u.grid, radius)?;
    if nodes.is_empty() {
        return Err(Error::EigenFailure(format!("no nodes inside radius {radius}")));
    }
    let m = linearized_matrix(op, nl, u, &nodes)?;
    let (lambda1, mut x) = smallest_eigenpair(&m)?;
    if x.sum() < 0.0 {
        x = -x;
    }
    let vol = u.grid.cell_volume();
    x /= (x.norm_squared() * vol).sqrt();
    let residual = max_abs(&(&m * &x - lambda1 * &x));
    let mut values = vec![0.0; u.grid.len()];
    for (r, &k) in nodes.iter().enumerate() {
        values[k] = x[r];
    }
    Ok(StabilityReport {
        radius,
        lambda1,
        eigenfunction: GridFn {
            grid: u.grid,
            values,
            tail: Tail::Constant(0.0),
        },
        residual,
        nodes: nodes.len(),
    })
}

fn potential_term(nl: &Nonlinearity, u: &GridFn, zeta: &GridFn) -> f64 {
    u.values
        .iter()
        .zip(&zeta.values)
        .map(|(x, z)| nl.df(*x) * z * z)
        .sum::<f64>()
        * u.grid.cell_volume()
}

/// `½∫|∇ζ|² + (c/2)∬(ζ(x)−ζ(y))²J − ∫f'(u)ζ²`.
pub fn stability_quadratic_form(op: &OperatorHandle, nl: &Nonlinearity, u: &GridFn, zeta: &GridFn) -> Result<f64> {
    let (local, nonlocal) = dirichlet_parts(zeta, zeta, op)?;
    Ok(0.5 * local + op.c * nonlocal - potential_term(nl, u, zeta))
}

/// Same form with coefficient 1 on the gradient term, i.e. `I(ζ, ζ) − ∫f'(u)ζ²`.
pub fn stability_quadratic_form_full(op: &OperatorHandle, nl: &Nonlinearity, u: &GridFn, zeta: &GridFn) -> Result<f64> {
    let (local, nonlocal) = dirichlet_parts(zeta, zeta, op)?;
    Ok(local + op.c * nonlocal - potential_term(nl, u, zeta))
}

/// Forward-difference derivative along `axis` (0 or 1).
pub fn forward_derivative(u: &GridFn, axis: usize) -> GridFn {
    let (hx, hy) = u.grid.spacing();
    let h = if axis == 0 { hx } else { hy };
    let values = (0..u.grid.len())
        .map(|k| {
            let (i, j) = u.grid.coords(k);
            let (i, j) = (i as isize, j as isize);
            let next = if axis == 0 { u.at(i + 1, j) } else { u.at(i, j + 1) };
            (next - u.values[k]) / h
        })
        .collect();
    GridFn {
        grid: u.grid,
        values,
        tail: Tail::Constant(0.0),
    }
}

/// `max_x |div(φ²∇σ) + c Σ_y (σ(y)−σ(x)) φ(x)φ(y) J(x−y)|` with `σ = ψ/φ`.
///
/// Face coefficients are `φ(x)φ(y)`, so each term equals
/// `W_xy [φ(x)ψ(y) − ψ(x)φ(y)]`; ghost values come from the tails of `φ`, `ψ`.
pub fn quotient_residual(phi: &GridFn, psi: &GridFn, op: &OperatorHandle) -> Result<f64> {
    if phi.grid != psi.grid {
        return Err(Error::GridMismatch("phi and psi live on different grids".into()));
    }
    if let Some((k, v)) = phi.values.iter().enumerate().find(|(_, v)| v.abs() < 1e-12) {
        return Err(Error::VanishingDenominator { index: k, value: *v });
    }
    let q = &op.quadrature;
    q.check_grid(&phi.grid)?;
    let grid = phi.grid;
    let st = Stencil::new(q);
    let pad = st.reach.max(1);
    let ep = phi.extended(pad);
    let es = psi.extended(pad);
    let (hx, hy) = grid.spacing();
    let mut local: Vec<([isize; 2], f64)> = vec![([1, 0], 1.0 / (hx * hx)), ([-1, 0], 1.0 / (hx * hx))];
    if grid.dim() == 2 {
        local.push(([0, 1], 1.0 / (hy * hy)));
        local.push(([0, -1], 1.0 / (hy * hy)));
    }
    let (pl, pr) = phi.tail.far_values();
    let (sl, sr) = psi.tail.far_values();
    let mut worst: f64 = 0.0;
    for k in 0..grid.len() {
        let (i, j) = grid.coords(k);
        let (i, j) = (i as isize, j as isize);
        let (p0, s0) = (phi.values[k], psi.values[k]);
        let cross = |o: [isize; 2]| {
            let (ii, jj) = (i + o[0], j + o[1]);
            let sigma_diff = es.get(ii, jj) / ep.get(ii, jj) - s0 / p0;
            if sigma_diff.is_finite() {
                p0 * ep.get(ii, jj) * sigma_diff
            } else {
                p0 * es.get(ii, jj) - s0 * ep.get(ii, jj)
            }
        };
        let mut r = 0.0;
        if op.has_local() {
            for &(o, w) in &local {
                r += w * cross(o);
            }
        }
        let mut nl = 0.0;
        for &(o, w) in &st.offsets {
            nl += w * cross(o);
        }
        nl += st.half_tail * ((p0 * sl - s0 * pl) + (p0 * sr - s0 * pr));
        r += op.c * nl;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid1D, Grid2D};
    use crate::kernels::KernelSpec;
    use crate::nonlocal::Mode;
    use crate::quadrature::{build_quadrature, cutoff_for};
    use std::f64::consts::SQRT_2;

    fn layer_setup(c: f64, spec: &KernelSpec, l: f64, h: f64) -> (OperatorHandle, GridFn) {
        let g = Grid1D::with_spacing(l, h).unwrap();
        let hh = g.spacing();
        let cutoff = cutoff_for(spec, hh, 2.0 * l);
        let q = build_quadrature(spec, &g.into(), cutoff).unwrap();
        let op = OperatorHandle::mixed(q, c).unwrap();
        let init = GridFn::from_fn(g, Tail::layer(), |p| (p[0] / SQRT_2).tanh());
        (op, init)
    }

    #[test]
    fn nonlinearity_validation() {
        let ac = Nonlinearity::allen_cahn();
        assert_eq!(ac.potential(1.0), 0.0);
        assert_eq!(ac.potential(-1.0), 0.0);
        assert!(Nonlinearity::new("bad", |u| u, |_| 1.0, |u| u * u, (0.0, 0.0)).is_err());
        assert!(Nonlinearity::new("bad", |u| -u, |_| -1.0, |u| 0.5 * u * u + 1.0, (0.0, 0.0)).is_err());
        assert!(Nonlinearity::by_name("nope").is_err());
    }

    #[test]
    fn local_layer_converges_quickly_to_tanh() {
        let (op, init) = layer_setup(0.0, &KernelSpec::fractional(1, 1.0), 20.0, 0.05);
        let rep = solve_layer(&op, &Nonlinearity::allen_cahn(), &init, 1e-10).unwrap();
        assert!(rep.newton_iterations <= 3, "{}", rep.newton_iterations);
        assert!(rep.monotone);
        let g = rep.solution.grid.axis(0);
        let c = g.center();
        assert!(rep.solution.values[c].abs() < 1e-12, "{}", rep.solution.values[c]);
        let slope = (rep.solution.values[c + 1] - rep.solution.values[c - 1]) / (2.0 * g.spacing());
        assert!((slope - 1.0 / SQRT_2).abs() < 1e-3, "{slope}");
    }

    #[test]
    fn exact_solution_takes_no_steps() {
        let (op, init) = layer_setup(0.0, &KernelSpec::fractional(1, 1.0), 10.0, 0.1);
        let nl = Nonlinearity::allen_cahn();
        let rep = solve_layer(&op, &nl, &init, 1e-11).unwrap();
        let again = solve_layer(&op, &nl, &rep.solution, 1e-10).unwrap();
        assert_eq!(again.newton_iterations, 0);
    }

    #[test]
    fn nonlocal_layer_is_odd_and_monotone() {
        let (op, init) = layer_setup(0.5, &KernelSpec::fractional(1, 1.0), 15.0, 0.1);
        let rep = solve_layer(&op, &Nonlinearity::allen_cahn(), &init, 1e-10).unwrap();
        assert!(rep.monotone);
        let v = &rep.solution.values;
        let n = v.len();
        // reflected solve agrees: u(−x) = −u(x)
        for i in 0..n {
            assert!((v[i] + v[n - 1 - i]).abs() < 1e-9);
        }
    }

    #[test]
    fn translation_mode_and_shifted_spectrum() {
        let (op, init) = layer_setup(0.0, &KernelSpec::fractional(1, 1.0), 20.0, 0.1);
        let nl = Nonlinearity::allen_cahn();
        let rep = solve_layer(&op, &nl, &init, 1e-10).unwrap();
        let st = linearized_eigen(&op, &nl, &rep.solution, 15.0).unwrap();
        assert!(st.lambda1 > -1e-9 && st.lambda1 < 5e-3, "{}", st.lambda1);
        assert!(st.eigenfunction.values.iter().all(|v| *v >= -1e-8));
        assert!(st.residual < 1e-8);

        let shifted = Nonlinearity::linear(-1.0);
        let st = linearized_eigen(&op, &shifted, &rep.solution, 10.0).unwrap();
        assert!(st.lambda1 >= 1.0 - 1e-12);
    }

    #[test]
    fn stability_form_examples() {
        let g = Grid1D::with_spacing(15.0, 0.05).unwrap();
        let spec = KernelSpec::fractional(1, 1.0);
        let q = build_quadrature(&spec, &g.into(), cutoff_for(&spec, g.spacing(), 30.0)).unwrap();
        let op = OperatorHandle::mixed(q.clone(), 0.0).unwrap();
        let nl = Nonlinearity::allen_cahn();
        let u0 = GridFn::constant(g, 0.0);
        let zero = GridFn::constant(g, 0.0);
        assert_eq!(stability_quadratic_form(&op, &nl, &u0, &zero).unwrap(), 0.0);
        let s = 2.0;
        let zeta = GridFn::from_fn(g, Tail::zero(), |p| (-p[0] * p[0] / (2.0 * s * s)).exp());
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let expect = 0.5 * pi_sqrt / (2.0 * s) - s * pi_sqrt;
        let gap = stability_quadratic_form(&op, &nl, &u0, &zeta).unwrap();
        assert!(gap < 0.0);
        assert!((gap - expect).abs() < 1e-3, "{gap} vs {expect}");
        let _ = Mode::Mixed;
    }

    #[test]
    fn quotient_residual_trivial_cases() {
        let (op, init) = layer_setup(0.25, &KernelSpec::fractional(1, 1.5), 8.0, 0.1);
        let nl = Nonlinearity::allen_cahn();
        let rep = solve_layer(&op, &nl, &init, 1e-10).unwrap();
        let phi = forward_derivative(&rep.solution, 0);
        assert!(quotient_residual(&phi, &phi, &op).unwrap() < 1e-12);
        let psi = phi.with_values(phi.values.iter().map(|v| 3.0 * v).collect());
        assert!(quotient_residual(&phi, &psi, &op).unwrap() < 1e-11);
        let bad = phi.with_values(vec![0.0; phi.values.len()]);
        assert!(quotient_residual(&bad, &phi, &op).is_err());
    }

    #[test]
    fn tilted_layer_quotient_residual_shrinks() {
        let res = |n: usize| {
            let g = Grid2D::square(2.0, n).unwrap();
            let h = g.x.spacing();
            let spec = KernelSpec::truncated(2, 1.0, 1.0, 0.5);
            let q = build_quadrature(&spec, &g.into(), cutoff_for(&spec, h, 0.0)).unwrap();
            let op = OperatorHandle::mixed(q, 0.0).unwrap();
            let prof = |p: [f64; 2]| ((0.8 * p[0] + 0.6 * p[1]) / SQRT_2).tanh();
            let d = move |p: [f64; 2], axis: usize| {
                let mut e = p;
                e[axis] += h;
                (prof(e) - prof(p)) / h
            };
            let phi = GridFn::from_fn(g, Tail::analytic(move |p| d(p, 1), 0.0), move |p| d(p, 1));
            let dir = move |p: [f64; 2]| 0.6 * d(p, 0) + 0.8 * d(p, 1);
            let psi = GridFn::from_fn(g, Tail::analytic(dir, 0.0), dir);
            quotient_residual(&phi, &psi, &op).unwrap()
        };
        let (r1, r2) = (res(21), res(41));
        assert!(r2 < 0.75 * r1, "{r1} {r2}");
    }
}
