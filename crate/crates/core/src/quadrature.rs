//! Quadrature tables that turn `L` into a discrete convolution with a
//! near-origin second-difference term and a far-field tail correction.
//!
//! At a node `x` the discrete operator reads
//!
//! ```text
//! L_h u(x) = Σ_{k≠0} w_k (u(x+kh) − u(x)) + near · D²u(x) + Σ_sides (a_side − u(x)) · tail_mass/2
//! ```
//!
//! where `D²` is the 1D second difference or the 2D five-point Laplacian.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_param, Error, Result};
use crate::grid::Grid;
use crate::kernels::{KernelSpec, RadialKernel};
use crate::quad::{gl16, gl8};

/// How the 1D weights are formed. 2D tables always use cell averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Product integration: `δu(z)/z²` is interpolated by hat functions on the
    /// nodes `kh`, giving second-order accuracy for every `α < 2`.
    #[default]
    Hat,
    /// `w_k = ∫_{cell k} J`, with `near = ½ ∫_{|z|<h/2} z² J`.
    CellAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTable {
    pub spec: KernelSpec,
    pub kernel: RadialKernel,
    pub dim: usize,
    pub h: f64,
    pub cutoff: usize,
    pub scheme: Scheme,
    /// 1D: `weights[k]` for `k = 0..=K` (`weights[0] = 0`).
    /// 2D: `weights[(k1+K) + (2K+1)(k2+K)]`, zero at the origin.
    pub weights: Vec<f64>,
    pub near_origin_coeff: f64,
    /// `∫ J` over the region not covered by the weights.
    pub tail_mass: f64,
}

impl QuadratureTable {
    /// Weight of offset `k` (1D).
    #[inline]
    pub fn weight(&self, k: isize) -> f64 {
        let k = k.unsigned_abs();
        if k > self.cutoff {
            0.0
        } else {
            self.weights[k]
        }
    }

    /// Weight of offset `(k1, k2)` (2D).
    #[inline]
    pub fn weight2(&self, k1: isize, k2: isize) -> f64 {
        let kk = self.cutoff as isize;
        if k1.abs() > kk || k2.abs() > kk {
            return 0.0;
        }
        let side = 2 * self.cutoff + 1;
        self.weights[(k1 + kk) as usize + side * (k2 + kk) as usize]
    }

    /// Offsets with nonzero effective pair weight (the near term folded into
    /// the nearest neighbours), listed once per unordered pair `{0, k}` with
    /// `k` in the positive half-space.
    pub fn pair_offsets(&self) -> Vec<([isize; 2], f64)> {
        let h2 = self.h * self.h;
        let kk = self.cutoff as isize;
        let mut out = Vec::new();
        if self.dim == 1 {
            for k in 1..=kk {
                let mut w = self.weight(k);
                if k == 1 {
                    w += self.near_origin_coeff / h2;
                }
                if w != 0.0 {
                    out.push(([k, 0], w));
                }
            }
        } else {
            for k2 in 0..=kk {
                for k1 in -kk..=kk {
                    if k2 == 0 && k1 <= 0 {
                        continue;
                    }
                    let mut w = self.weight2(k1, k2);
                    if (k1.abs() + k2.abs()) == 1 {
                        w += self.near_origin_coeff / h2;
                    }
                    if w != 0.0 {
                        out.push(([k1, k2], w));
                    }
                }
            }
        }
        out
    }

    /// `Σ_{k≠0} w_k |kh|² + 2·near` (1D) or `Σ w_k |kh|² + 4·near` (2D): the
    /// discrete second moment of the table.
    pub fn second_moment(&self) -> f64 {
        let h2 = self.h * self.h;
        self.pair_offsets()
            .iter()
            .map(|(k, w)| 2.0 * w * ((k[0] * k[0] + k[1] * k[1]) as f64) * h2)
            .sum()
    }

    /// Blends the pair weights smoothly to zero between `start` and the reach
    /// `K h` and moves the removed mass into `tail_mass`. For functions that
    /// oscillate around their far mean this turns the truncation error from
    /// `O(R^{-n-α})` into a smooth, rapidly decaying one.
    pub fn taper(mut self, start: f64) -> Result<Self> {
        let reach = self.cutoff as f64 * self.h;
        check_param("start", start, start > 0.0 && start < reach, "must lie inside the reach")?;
        let keep = |r: f64| {
            if r <= start {
                1.0
            } else if r >= reach {
                0.0
            } else {
                let s = (r - start) / (reach - start);
                let (a, b) = ((-1.0 / s).exp(), (-1.0 / (1.0 - s)).exp());
                b / (a + b)
            }
        };
        let kk = self.cutoff as isize;
        let mut removed = 0.0;
        if self.dim == 1 {
            for k in 1..=kk {
                let w = &mut self.weights[k as usize];
                let drop = *w * (1.0 - keep(k as f64 * self.h));
                *w -= drop;
                removed += 2.0 * drop;
            }
        } else {
            let side = 2 * self.cutoff + 1;
            for k2 in -kk..=kk {
                for k1 in -kk..=kk {
                    let idx = (k1 + kk) as usize + side * (k2 + kk) as usize;
                    let r = (k1 as f64).hypot(k2 as f64) * self.h;
                    let w = &mut self.weights[idx];
                    let drop = *w * (1.0 - keep(r));
                    *w -= drop;
                    removed += drop;
                }
            }
        }
        self.tail_mass += removed;
        Ok(self)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        let (hx, hy) = grid.spacing();
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch(format!(
                "{}D table on a {}D grid",
                self.dim,
                grid.dim()
            )));
        }
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !same(hx, self.h) || (self.dim == 2 && !same(hy, self.h)) {
            return Err(Error::GridMismatch(format!(
                "table spacing {} differs from grid spacing ({hx}, {hy})",
                self.h
            )));
        }
        Ok(())
    }
}

/// Smallest cutoff whose reach covers the kernel support, or `reach / h` for
/// kernels with unbounded support.
pub fn cutoff_for(spec: &KernelSpec, h: f64, reach: f64) -> usize {
    match spec.support_radius() {
        Some(d) => (d / h).ceil() as usize + 1,
        None => (reach / h).ceil().max(1.0) as usize,
    }
}

/// Builds the default table: hat weights in 1D, cell averages in 2D.
pub fn build_quadrature(spec: &KernelSpec, grid: &Grid, cutoff: usize) -> Result<QuadratureTable> {
    let scheme = Scheme::Hat;
    build_quadrature_with(spec, grid, cutoff, scheme)
}

pub fn build_quadrature_with(
    spec: &KernelSpec,
    grid: &Grid,
    cutoff: usize,
    scheme: Scheme,
) -> Result<QuadratureTable> {
    let kernel = spec.radial()?;
    if kernel.n != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "{}-dimensional kernel on a {}D grid",
            kernel.n,
            grid.dim()
        )));
    }
    check_param("cutoff", cutoff as f64, cutoff >= 1, "must be at least 1")?;
    let (hx, hy) = grid.spacing();
    let (weights, near, tail, scheme) = if grid.dim() == 1 {
        let (w, n, t) = match scheme {
            Scheme::Hat => hat_weights(&kernel, hx, cutoff),
            Scheme::CellAverage => cell_weights_1d(&kernel, hx, cutoff),
        };
        (w, n, t, scheme)
    } else {
        if (hx - hy).abs() > 1e-12 * hx {
            return Err(Error::Unsupported("2D quadrature needs equal spacings".into()));
        }
        let (w, n, t) = cell_weights_2d(&kernel, hx, cutoff);
        (w, n, t, Scheme::CellAverage)
    };
    let table = QuadratureTable {
        spec: spec.clone(),
        kernel,
        dim: grid.dim(),
        h: hx,
        cutoff,
        scheme,
        weights,
        near_origin_coeff: near,
        tail_mass: tail,
    };
    if table.weights.iter().any(|w| !w.is_finite() || *w < -1e-14)
        || !table.near_origin_coeff.is_finite()
        || !table.tail_mass.is_finite()
    {
        return Err(Error::Unsupported("kernel produced non-finite or negative weights".into()));
    }
    Ok(table)
}

fn hat_weights(k: &RadialKernel, h: f64, cutoff: usize) -> (Vec<f64>, f64, f64) {
    // W_j = ∫ hat_j(z) z² J(z) dz over z > 0; w_j = W_j / (jh)².
    let rising = |j: usize| {
        let (a, b) = ((j - 1) as f64 * h, j as f64 * h);
        (k.moment(a, b, 3.0) - a * k.moment(a, b, 2.0)) / h
    };
    let falling = |j: usize| {
        let (b, c) = (j as f64 * h, (j + 1) as f64 * h);
        (c * k.moment(b, c, 2.0) - k.moment(b, c, 3.0)) / h
    };
    let mut weights: Vec<f64> = (0..=cutoff)
        .into_par_iter()
        .map(|j| {
            if j == 0 {
                return 0.0;
            }
            let mut big_w = rising(j);
            if j < cutoff {
                big_w += falling(j);
            }
            big_w / ((j as f64 * h).powi(2))
        })
        .collect();
    weights[0] = 0.0;
    let near = falling(0);
    let reach = cutoff as f64 * h;
    let tail = 2.0 * k.moment(reach, f64::INFINITY, 0.0);
    (weights, near, tail)
}

fn cell_weights_1d(k: &RadialKernel, h: f64, cutoff: usize) -> (Vec<f64>, f64, f64) {
    let weights: Vec<f64> = (0..=cutoff)
        .into_par_iter()
        .map(|j| {
            if j == 0 {
                0.0
            } else {
                k.moment((j as f64 - 0.5) * h, (j as f64 + 0.5) * h, 0.0)
            }
        })
        .collect();
    let near = k.moment(0.0, 0.5 * h, 2.0);
    let tail = 2.0 * k.moment((cutoff as f64 + 0.5) * h, f64::INFINITY, 0.0);
    (weights, near, tail)
}

fn cell_weights_2d(k: &RadialKernel, h: f64, cutoff: usize) -> (Vec<f64>, f64, f64) {
    let kk = cutoff as isize;
    let side = 2 * cutoff + 1;
    let breaks = k.breakpoints();
    // One octant, then reflect.
    let mut weights = vec![0.0; side * side];
    let octant: Vec<(isize, isize)> = (0..=kk)
        .flat_map(|a| (0..=a).map(move |b| (a, b)))
        .filter(|&(a, _)| a > 0)
        .collect();
    let values: Vec<f64> = octant
        .par_iter()
        .map(|&(a, b)| {
            let (x0, y0) = ((a as f64 - 0.5) * h, (b as f64 - 0.5) * h);
            cell_integral(k, &breaks, x0, x0 + h, y0, y0 + h, 0)
        })
        .collect();
    for (&(a, b), &v) in octant.iter().zip(&values) {
        for (p, q) in [(a, b), (b, a)] {
            for sp in [-1, 1] {
                for sq in [-1, 1] {
                    let (i, j) = (sp * p, sq * q);
                    weights[(i + kk) as usize + side * (j + kk) as usize] = v;
                }
            }
        }
    }
    // near = ½ ∫_{cell0} z₁² J = ¼ ∫_{cell0} |z|² J over the square of half-side h/2.
    let half = 0.5 * h;
    let near = 2.0
        * gl16().integrate(0.0, FRAC_PI_4, |t| k.moment(0.0, half / t.cos(), 3.0));
    let s = (cutoff as f64 + 0.5) * h;
    let tail = 8.0 * gl16().integrate(0.0, FRAC_PI_4, |t| k.moment(s / t.cos(), f64::INFINITY, 1.0));
    (weights, near, tail)
}

/// `∫∫ J` over a rectangle away from the origin; cells crossed by a
/// breakpoint circle are bisected.
fn cell_integral(k: &RadialKernel, breaks: &[f64], x0: f64, x1: f64, y0: f64, y1: f64, depth: u32) -> f64 {
    let rmin = dist_to_rect(x0, x1, y0, y1);
    let rmax = [x0, x1]
        .iter()
        .flat_map(|x| [y0, y1].map(|y| x.hypot(y)))
        .fold(0.0, f64::max);
    let crossed = breaks.iter().any(|&r| r > rmin && r < rmax);
    if crossed && depth < 6 {
        let (xm, ym) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        return cell_integral(k, breaks, x0, xm, y0, ym, depth + 1)
            + cell_integral(k, breaks, xm, x1, y0, ym, depth + 1)
            + cell_integral(k, breaks, x0, xm, ym, y1, depth + 1)
            + cell_integral(k, breaks, xm, x1, ym, y1, depth + 1);
    }
    let gl = gl8();
    gl.integrate(y0, y1, |y| gl.integrate(x0, x1, |x| k.value(x.hypot(y))))
}

fn dist_to_rect(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let dx = if x0 > 0.0 { x0 } else if x1 < 0.0 { -x1 } else { 0.0 };
    let dy = if y0 > 0.0 { y0 } else if y1 < 0.0 { -y1 } else { 0.0 };
    dx.hypot(dy)
}
