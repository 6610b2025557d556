//! Extension of a radial trace `u(|x|)` in two dimensions.
//!
//! With `ρ = y q` the extension is `v = τ + ∫₀^∞ (Ū(r, y q) − τ) ω(q) dq`
//! where `ω(q) = α q (1 + q²)^{−α/2−1}` has unit mass and `Ū(r, ρ)` is the
//! mean of `u` over the circle of radius `ρ` around a point at distance `r`.

use rayon::prelude::*;

use super::identities::MonotoneFunctional;
use super::{calibrate_d_alpha, cell_weights, check_order, PointValue, YMesh};
use crate::error::{check_param, Error, Result};
use crate::grid::{Grid, GridFn};
use crate::quad::gl8;
use crate::solver::Nonlinearity;

/// Clamped cubic spline of an even profile on `r_k = k Δr`, with `u' = 0`
/// at both ends and `u = τ` beyond the last node.
#[derive(Debug, Clone)]
struct Profile {
    dr: f64,
    values: Vec<f64>,
    second: Vec<f64>,
    tau: f64,
}

impl Profile {
    fn new(dr: f64, values: Vec<f64>, tau: f64) -> Self {
        let n = values.len();
        // Tridiagonal system for the second derivatives with zero end slopes.
        let mut diag = vec![4.0; n];
        diag[0] = 2.0;
        diag[n - 1] = 2.0;
        let mut rhs: Vec<f64> = (0..n)
            .map(|k| {
                let prev = if k == 0 { values[1] } else { values[k - 1] };
                let next = if k == n - 1 { values[n - 2] } else { values[k + 1] };
                match k {
                    0 => 6.0 * (values[1] - values[0]) / (dr * dr),
                    _ if k == n - 1 => 6.0 * (values[n - 2] - values[n - 1]) / (dr * dr),
                    _ => 6.0 * (next - 2.0 * values[k] + prev) / (dr * dr),
                }
            })
            .collect();
        let off = 1.0;
        for k in 1..n {
            let m = off / diag[k - 1];
            diag[k] -= m * off;
            rhs[k] -= m * rhs[k - 1];
        }
        let mut second = vec![0.0; n];
        second[n - 1] = rhs[n - 1] / diag[n - 1];
        for k in (0..n - 1).rev() {
            second[k] = (rhs[k] - off * second[k + 1]) / diag[k];
        }
        Self {
            dr,
            values,
            second,
            tau,
        }
    }

    fn end(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dr
    }

    /// `(u(s), u'(s))`.
    fn eval(&self, s: f64) -> (f64, f64) {
        if s >= self.end() {
            return (self.tau, 0.0);
        }
        let h = self.dr;
        let k = ((s / h).floor() as usize).min(self.values.len() - 2);
        let b = s / h - k as f64;
        let a = 1.0 - b;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.second[k], self.second[k + 1]);
        let u = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let du = (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (u, du)
    }
}

/// Weighted-harmonic extension of a radial trace in two dimensions.
#[derive(Debug, Clone)]
pub struct RadialExtension {
    profile: Profile,
    pub alpha: f64,
    pub a: f64,
    pub d_alpha: f64,
    pub tau: f64,
    angles: usize,
}

impl RadialExtension {
    pub fn new(dr: f64, values: Vec<f64>, tau: f64, alpha: f64) -> Result<Self> {
        check_order(alpha)?;
        check_param("dr", dr, dr > 0.0, "spacing must be positive")?;
        if values.len() < 4 {
            return Err(Error::InvalidGrid("a radial profile needs at least four samples".into()));
        }
        Ok(Self {
            profile: Profile::new(dr, values, tau),
            alpha,
            a: 1.0 - alpha,
            d_alpha: calibrate_d_alpha(alpha)?,
            tau,
            angles: 64,
        })
    }

    /// Profile along the positive first axis of a 2D grid function.
    pub fn from_axis(u: &GridFn, alpha: f64) -> Result<Self> {
        let (g, tau) = radial_source(u)?;
        let c = g.x.center();
        let values = (c..g.x.n_points()).map(|i| u.values[u.grid.index(i, g.y.center())]).collect();
        Self::new(g.x.spacing(), values, tau, alpha)
    }

    /// Profile along the diagonal `x₁ = x₂`, spacing `√2 h`.
    pub fn from_diagonal(u: &GridFn, alpha: f64) -> Result<Self> {
        let (g, tau) = radial_source(u)?;
        let (cx, cy) = (g.x.center(), g.y.center());
        let n = (g.x.n_points() - cx).min(g.y.n_points() - cy);
        let values = (0..n).map(|k| u.values[u.grid.index(cx + k, cy + k)]).collect();
        Self::new(std::f64::consts::SQRT_2 * g.x.spacing(), values, tau, alpha)
    }

    /// Circle means of `u`, `∂_r u` and `∂_ρ u` at centre distance `r`, radius `ρ`.
    fn circle_means(&self, r: f64, rho: f64) -> (f64, f64, f64) {
        let n = self.angles;
        let (mut m, mut mr, mut mrho) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let th = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            let c = th.cos();
            let s = (r * r + rho * rho + 2.0 * r * rho * c).max(0.0).sqrt();
            let (u, du) = self.profile.eval(s);
            m += u;
            if s > 1e-12 {
                mr += du * (r + rho * c) / s;
                mrho += du * (rho + r * c) / s;
            }
        }
        let n = n as f64;
        (m / n, mr / n, mrho / n)
    }

    /// `(v, ∂_r v, y^a ∂_y v)` at `(r, y)`, `y > 0`.
    pub fn eval(&self, r: f64, y: f64) -> Result<PointValue> {
        check_param("y", y, y > 0.0, "point evaluation needs y > 0")?;
        let alpha = self.alpha;
        // Ū = τ once the circle clears the profile support.
        let rho_max = r + self.profile.end();
        let omega = |rho: f64| {
            let q = rho / y;
            alpha * q * (1.0 + q * q).powf(-0.5 * alpha - 1.0) / y
        };
        let mut edges = vec![0.0];
        let mut e = (0.5 * y).min(4.0 * self.profile.dr).min(rho_max);
        while e < rho_max {
            edges.push(e);
            let grow = (0.5 * e).min(4.0 * self.profile.dr);
            e = (e + grow).min(rho_max);
        }
        edges.push(rho_max);
        edges.dedup();
        let g = gl8();
        let (mut v, mut vr, mut vy) = (0.0, 0.0, 0.0);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            for (x, wt) in g.nodes.iter().zip(&g.weights) {
                let rho = 0.5 * (a + b) + half * x;
                let k = omega(rho) * wt * half;
                let (m, mr, mrho) = self.circle_means(r, rho);
                v += (m - self.tau) * k;
                vr += mr * k;
                vy += mrho * rho / y * k;
            }
        }
        Ok(PointValue {
            v: self.tau + v,
            v_x: vr,
            flux: y.powf(self.a) * vy,
        })
    }

    /// `(u(r), u'(r))` of the spline trace.
    pub fn trace(&self, r: f64) -> (f64, f64) {
        self.profile.eval(r)
    }
}

fn radial_source(u: &GridFn) -> Result<(crate::grid::Grid2D, f64)> {
    let g = match &u.grid {
        Grid::Two(g) => *g,
        Grid::One(_) => return Err(Error::Unsupported("radial extension expects a 2D grid".into())),
    };
    let (lo, hi) = u.tail.far_values();
    if lo != hi {
        return Err(Error::Unsupported("radial data needs a single far value".into()));
    }
    Ok((g, lo))
}

/// `I(r) = d (∂_r v)² + c ∫₀^∞ y^a [(∂_r v)² − (∂_y v)²] dy − 2d F(v)` for a
/// radial trace in two dimensions, expected nonincreasing within `tol`.
pub fn radial_monotonicity_2d(
    v: &RadialExtension,
    c: f64,
    nl: &Nonlinearity,
    radii: &[f64],
    mesh: &YMesh,
    tol: f64,
) -> Result<MonotoneFunctional> {
    check_param("c", c, c >= 0.0, "coupling must be non-negative")?;
    if radii.len() < 2 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter {
            name: "radii",
            value: radii.first().copied().unwrap_or(f64::NAN),
            reason: "need at least two strictly increasing radii",
        });
    }
    let end = v.profile.end();
    if let Some(&r) = radii.iter().find(|&&r| !(0.0..=end).contains(&r)) {
        return Err(Error::RadiusOutsideGrid { radius: r, half_width: end });
    }
    let ys = mesh.levels();
    let wa: Vec<(f64, f64)> = ys.windows(2).map(|w| cell_weights(w[0], w[1], v.a)).collect();
    let wb: Vec<(f64, f64)> = ys.windows(2).map(|w| cell_weights(w[0], w[1], -v.a)).collect();
    let values: Result<Vec<f64>> = radii
        .par_iter()
        .map(|&r| {
            let (u, ur) = v.trace(r);
            let mut ga = vec![ur * ur];
            let mut gb = vec![0.0];
            for &y in &ys[1..] {
                let p = v.eval(r, y)?;
                ga.push(p.v_x * p.v_x);
                gb.push(p.flux * p.flux);
            }
            gb[0] = gb[1];
            let mut w = 0.0;
            for j in 0..ys.len() - 1 {
                w += wa[j].0 * ga[j] + wa[j].1 * ga[j + 1] - wb[j].0 * gb[j] - wb[j].1 * gb[j + 1];
            }
            Ok(v.d_alpha * ur * ur + c * w - 2.0 * v.d_alpha * nl.potential(u))
        })
        .collect();
    Ok(MonotoneFunctional {
        radii: radii.to_vec(),
        values: values?,
        derivative_numeric: Vec::new(),
        derivative_formula: Vec::new(),
        inequality: Vec::new(),
        nondecreasing: false,
        tolerance: tol,
    })
}
