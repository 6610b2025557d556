//! Weighted half-space extension `v(x, y)` of a one-dimensional trace.
//!
//! `v` solves `div(y^a ∇v) = 0` with `a = 1 − α` and `v(·, 0) = u`; it is the
//! convolution of `u` with the kernel `p y^α (t² + y²)^{−(1+α)/2}`. The trace
//! is reconstructed piecewise linearly between nodes and equals the tail
//! limits outside the grid, so every level is a closed-form sum over cells.

mod identities;
mod radial;

pub use identities::{
    hamiltonian_residual, modica_check, pohozaev_and_igamma, radial_monotonicity, two_weight_igamma,
    HamiltonianReport, ModicaReport, MonotoneFunctional, WeightExponent,
};
pub use radial::{radial_monotonicity_2d, RadialExtension};

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use statrs::function::beta::{beta, beta_reg};

use crate::error::{check_param, Error, Result};
use crate::grid::{Grid, Grid1D, GridFn, Tail};
use crate::kernels::KernelSpec;
use crate::nonlocal::apply_l;
use crate::quadrature::{build_quadrature, cutoff_for};

pub(crate) fn check_order(alpha: f64) -> Result<()> {
    check_param("alpha", alpha, alpha > 0.0 && alpha < 2.0, "order must lie in (0, 2)")
}

/// Nodes `0 = y₀ < y₁ < …` of the vertical mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct YMesh {
    levels: Vec<f64>,
}

impl YMesh {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 3 || levels[0] != 0.0 {
            return Err(Error::InvalidGrid("y mesh needs y₀ = 0 and at least three levels".into()));
        }
        if levels.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidGrid("y levels must increase strictly".into()));
        }
        Ok(Self { levels })
    }

    /// `y_j = top·(j/M)^{2/α}` for `j ≤ M`, then geometric with `ratio` up to `y_max`.
    pub fn graded(alpha: f64, top: f64, graded: usize, ratio: f64, y_max: f64) -> Result<Self> {
        check_order(alpha)?;
        check_param("ratio", ratio, ratio > 1.0, "geometric ratio must exceed 1")?;
        check_param("top", top, top > 0.0 && y_max >= top, "need 0 < top ≤ y_max")?;
        if graded < 2 {
            return Err(Error::InvalidGrid("graded part needs at least two steps".into()));
        }
        let mut levels: Vec<f64> = (0..=graded)
            .map(|j| top * (j as f64 / graded as f64).powf(2.0 / alpha))
            .collect();
        let mut y = top;
        while y < y_max {
            y = (y * ratio).min(y_max);
            levels.push(y);
        }
        Self::new(levels)
    }

    /// Default mesh for trace spacing `h`: first step `≈ h²`, graded steps
    /// `O(h)` up to `y = 8`, relative steps `O(h)` beyond, top `10^{6/α}`.
    pub fn for_spacing(alpha: f64, h: f64) -> Result<Self> {
        check_order(alpha)?;
        check_param("h", h, h > 0.0 && h < 1.0, "spacing must lie in (0, 1)")?;
        let top = 8.0;
        let by_first = (top / (h * h)).powf(alpha / 2.0).ceil();
        let by_step = (2.0 * top / (alpha * 4.0 * h)).ceil();
        let graded = by_first.max(by_step).max(16.0) as usize;
        let ratio = 1.0 + (2.0 * h).min(0.25);
        let y_max = 10f64.powf((6.0 / alpha).clamp(6.0, 12.0));
        Self::graded(alpha, top, graded, ratio, y_max)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top(&self) -> f64 {
        *self.levels.last().expect("non-empty mesh")
    }

    /// Weights `w_j` with `Σ w_j g(y_j) = ∫₀^{y_max} y^s g dy` for `g`
    /// piecewise linear on the mesh; requires `s > −1`.
    pub fn product_weights(&self, s: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.levels.len()];
        for j in 0..self.levels.len() - 1 {
            let (w0, w1) = cell_weights(self.levels[j], self.levels[j + 1], s);
            w[j] += w0;
            w[j + 1] += w1;
        }
        w
    }
}

/// `∫_{y0}^{y1} y^s ℓ(y) dy` for the linear `ℓ` with `ℓ(y0) = 1, ℓ(y1) = 0`
/// (first) and its mirror (second).
pub(crate) fn cell_weights(y0: f64, y1: f64, s: f64) -> (f64, f64) {
    let len = y1 - y0;
    let (m0, m1) = if y0 > 0.0 && len < 1e-3 * y0 {
        // Midpoint expansion avoids cancellation in thin cells far from 0.
        let ym = 0.5 * (y0 + y1);
        let base = ym.powf(s) * len;
        let curv = s * (s - 1.0) * ym.powf(s - 2.0) * len.powi(3) / 24.0;
        let m0 = base + curv;
        let m1 = ym * base + (s + 1.0) * s * ym.powf(s - 1.0) * len.powi(3) / 24.0;
        (m0, m1)
    } else {
        let m0 = (y1.powf(s + 1.0) - y0.powf(s + 1.0)) / (s + 1.0);
        let m1 = (y1.powf(s + 2.0) - y0.powf(s + 2.0)) / (s + 2.0);
        (m0, m1)
    };
    ((y1 * m0 - m1) / len, (m1 - y0 * m0) / len)
}

/// One-dimensional kernel `P_y(t) = p y^α (t² + y²)^{−(1+α)/2}` and the
/// closed forms used to integrate piecewise-linear data against it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Poisson1D {
    alpha: f64,
    p: f64,
}

/// `C(t) − ½`, `∂_y C`, the first-moment antiderivative `M` (with `M' = tP`),
/// `∂_y M` and `P` itself, at one `(t, y)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelValues {
    pub s: f64,
    pub s_y: f64,
    pub m: f64,
    pub m_y: f64,
    pub p: f64,
}

impl Poisson1D {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            p: 1.0 / beta(0.5, 0.5 * alpha),
        }
    }

    pub fn density(&self, t: f64, y: f64) -> f64 {
        self.p * y.powf(self.alpha) * (t * t + y * y).powf(-0.5 * (1.0 + self.alpha))
    }

    /// Odd part of the distribution function, `C(t) − ½ ∈ (−½, ½)`.
    pub fn half_cdf(&self, t: f64, y: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let r2 = t * t + y * y;
        let x = t * t / r2;
        let b = 0.5 * self.alpha;
        let i = if x < 0.5 {
            beta_reg(0.5, b, x)
        } else {
            1.0 - beta_reg(b, 0.5, y * y / r2)
        };
        0.5 * t.signum() * i
    }

    pub fn values(&self, t: f64, y: f64) -> KernelValues {
        let alpha = self.alpha;
        let r2 = t * t + y * y;
        let p = self.density(t, y);
        let s = self.half_cdf(t, y);
        let s_y = -t * p / y;
        let big_l = r2.ln();
        let b = 0.5 * (1.0 - alpha);
        let g = if b.abs() < 1e-12 {
            0.5 * big_l
        } else {
            (b * big_l).exp_m1() / (2.0 * b)
        };
        let ya = y.powf(alpha);
        let m = self.p * ya * g;
        let m_y = self.p * (alpha * ya / y * g + ya * y * (b * big_l).exp() / r2);
        KernelValues { s, s_y, m, m_y, p }
    }
}

/// Values and derivatives of the extension at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub v: f64,
    pub v_x: f64,
    /// Weighted flux `y^a ∂_y v`.
    pub flux: f64,
}

/// Extension of a 1D trace on a tensor mesh `x_i × y_j`.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    pub grid: Grid1D,
    pub y: YMesh,
    pub alpha: f64,
    /// Weight exponent `a = 1 − α`.
    pub a: f64,
    /// Boundary constant in `−lim y^a ∂_y v = d_α (−Δ)^{α/2} u`.
    pub d_alpha: f64,
    /// Trace limits `(x → −∞, x → +∞)`.
    pub tau: (f64, f64),
    trace: Vec<f64>,
    v: Vec<f64>,
    vx: Vec<f64>,
    flux: Vec<f64>,
}

impl ExtensionField {
    /// Builds the tables on `mesh`; `d_alpha` is taken from [`calibrate_d_alpha`].
    pub fn new(u: &GridFn, alpha: f64, mesh: YMesh) -> Result<Self> {
        check_order(alpha)?;
        let grid = match &u.grid {
            Grid::One(g) => *g,
            Grid::Two(_) => return Err(Error::Unsupported("the tensor extension needs a 1D trace".into())),
        };
        u.validate()?;
        let tau = u.tail.far_values();
        let d_alpha = calibrate_d_alpha(alpha)?;
        let nx = grid.n_points();
        let h = grid.spacing();
        let trace = u.values.clone();
        let slopes: Vec<f64> = trace.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let kernel = Poisson1D::new(alpha);
        let a = 1.0 - alpha;
        let ys = mesh.levels().to_vec();
        let ext = u.extended(1);

        let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = ys
            .par_iter()
            .enumerate()
            .map(|(j, &y)| {
                if j == 0 {
                    let vx = (0..nx as isize)
                        .map(|i| (ext.get(i + 1, 0) - ext.get(i - 1, 0)) / (2.0 * h))
                        .collect();
                    return (trace.clone(), vx, Vec::new());
                }
                level(&kernel, &trace, &slopes, tau, h, y, a)
            })
            .collect();

        let ny = ys.len();
        let mut v = Vec::with_capacity(ny * nx);
        let mut vx = Vec::with_capacity(ny * nx);
        let mut flux = Vec::with_capacity(ny * nx);
        for (j, (rv, rx, rf)) in rows.iter().enumerate() {
            v.extend_from_slice(rv);
            vx.extend_from_slice(rx);
            if j == 0 {
                // The first cell carries the level-1 flux; it is O(y₁) wide.
                flux.extend_from_slice(&rows[1].2);
            } else {
                flux.extend_from_slice(rf);
            }
        }
        Ok(Self {
            grid,
            y: mesh,
            alpha,
            a,
            d_alpha,
            tau,
            trace,
            v,
            vx,
            flux,
        })
    }

    pub fn nx(&self) -> usize {
        self.grid.n_points()
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.nx() + i]
    }

    pub fn v_x(&self, i: usize, j: usize) -> f64 {
        self.vx[j * self.nx() + i]
    }

    /// `y^a ∂_y v` at node `(x_i, y_j)`.
    pub fn flux(&self, i: usize, j: usize) -> f64 {
        self.flux[j * self.nx() + i]
    }

    /// Level `j` of `v` as a slice over `x`.
    pub fn level(&self, j: usize) -> &[f64] {
        let nx = self.nx();
        &self.v[j * nx..(j + 1) * nx]
    }

    /// Closed-form evaluation at an arbitrary point with `y > 0`.
    pub fn eval(&self, x: f64, y: f64) -> Result<PointValue> {
        check_param("y", y, y > 0.0, "point evaluation needs y > 0")?;
        let kernel = Poisson1D::new(self.alpha);
        let h = self.grid.spacing();
        let nodes = self.grid.nodes();
        let kv: Vec<KernelValues> = nodes.iter().map(|&xi| kernel.values(x - xi, y)).collect();
        let n = nodes.len();
        let (tl, tr) = self.tau;
        let mut v = tl * (0.5 - kv[0].s) + tr * (0.5 + kv[n - 1].s);
        let mut vx = (self.trace[0] - tl) * kv[0].p + (tr - self.trace[n - 1]) * kv[n - 1].p;
        let mut vy = -tl * kv[0].s_y + tr * kv[n - 1].s_y;
        for k in 0..n - 1 {
            let m = (self.trace[k + 1] - self.trace[k]) / h;
            let base = self.trace[k] + m * (x - nodes[k]);
            let dc = kv[k].s - kv[k + 1].s;
            v += base * dc - m * (kv[k].m - kv[k + 1].m);
            vx += m * dc;
            vy += base * (kv[k].s_y - kv[k + 1].s_y) - m * (kv[k].m_y - kv[k + 1].m_y);
        }
        Ok(PointValue {
            v,
            v_x: vx,
            flux: y.powf(self.a) * vy,
        })
    }

    /// `y^{−a} div(y^a ∇v)` by second differences at interior nodes whose
    /// neighbouring y-steps differ by less than 50%, up to `max_y`.
    pub fn divergence_residual(&self, max_y: f64) -> f64 {
        let nx = self.nx();
        let h = self.grid.spacing();
        let ys = self.y.levels();
        let mut worst: f64 = 0.0;
        for j in 1..ys.len() - 1 {
            if ys[j + 1] > max_y {
                break;
            }
            let (ym, y0, yp) = (ys[j - 1], ys[j], ys[j + 1]);
            let ratio = (yp - y0) / (y0 - ym);
            if !(2.0 / 3.0..=1.5).contains(&ratio) {
                continue;
            }
            for i in 1..nx - 1 {
                let vxx = (self.v(i + 1, j) - 2.0 * self.v(i, j) + self.v(i - 1, j)) / (h * h);
                // Flux differences at the half levels.
                let fp = 0.5 * (y0 + yp);
                let fm = 0.5 * (ym + y0);
                let qp = fp.powf(self.a) * (self.v(i, j + 1) - self.v(i, j)) / (yp - y0);
                let qm = fm.powf(self.a) * (self.v(i, j) - self.v(i, j - 1)) / (y0 - ym);
                let div = (qp - qm) / (fp - fm) + y0.powf(self.a) * vxx;
                worst = worst.max((div / y0.powf(self.a)).abs());
            }
        }
        worst
    }
}

/// One `y > 0` level: `(v, v_x, y^a v_y)` at every node.
fn level(
    kernel: &Poisson1D,
    trace: &[f64],
    slopes: &[f64],
    tau: (f64, f64),
    h: f64,
    y: f64,
    a: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = trace.len() as isize;
    // kv[m + n − 1] holds the values at offset t = m h, m ∈ [−(n−1), n−1].
    let kv: Vec<KernelValues> = (-(n - 1)..n).map(|m| kernel.values(m as f64 * h, y)).collect();
    let at = |m: isize| &kv[(m + n - 1) as usize];
    let (tl, tr) = tau;
    let ya = y.powf(a);
    let mut v = vec![0.0; n as usize];
    let mut vx = vec![0.0; n as usize];
    let mut fl = vec![0.0; n as usize];
    for i in 0..n {
        let first = at(i);
        let last = at(i - (n - 1));
        let mut sv = tl * (0.5 - first.s) + tr * (0.5 + last.s);
        let mut sx = (trace[0] - tl) * first.p + (tr - trace[(n - 1) as usize]) * last.p;
        let mut sy = -tl * first.s_y + tr * last.s_y;
        for k in 0..n - 1 {
            let (k0, k1) = (at(i - k), at(i - k - 1));
            let m = slopes[k as usize];
            let base = trace[k as usize] + m * (i - k) as f64 * h;
            let dc = k0.s - k1.s;
            sv += base * dc - m * (k0.m - k1.m);
            sx += m * dc;
            sy += base * (k0.s_y - k1.s_y) - m * (k0.m_y - k1.m_y);
        }
        v[i as usize] = sv;
        vx[i as usize] = sx;
        fl[i as usize] = ya * sy;
    }
    (v, vx, fl)
}

/// Extends `u` on the default mesh for its spacing.
pub fn extend(u: &GridFn, alpha: f64) -> Result<ExtensionField> {
    check_order(alpha)?;
    let h = u.grid.spacing().0;
    ExtensionField::new(u, alpha, YMesh::for_spacing(alpha, h.min(0.5))?)
}

/// Result of calibrating `d_α` on a Gaussian test trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub d_alpha: f64,
    /// Largest relative deviation of the pointwise ratio from `d_alpha`.
    pub spread: f64,
    pub samples: usize,
}

/// `d_α` with `−lim y^a ∂_y v = d_α (−Δ)^{α/2} u`, from the trace `exp(−(λx)²)`.
///
/// The weighted one-sided quotient `D(y) = α (v(x, y) − u(x)) / y^α` is
/// extrapolated to `y → 0` through `D = D₀ + B y^{2−α} + C y²`.
pub fn calibrate_with_scale(alpha: f64, lambda: f64) -> Result<Calibration> {
    check_order(alpha)?;
    check_param("lambda", lambda, lambda > 0.25 && lambda < 4.0, "scale must lie in (1/4, 4)")?;
    let h = 0.01 / lambda;
    let half_width = 12.0 / lambda;
    let grid = Grid1D::with_spacing(half_width, h)?;
    let u = GridFn::from_fn(grid, Tail::Constant(0.0), |p| (-(lambda * p[0]).powi(2)).exp());
    let spec = KernelSpec::fractional(1, alpha);
    let q = build_quadrature(&spec, &u.grid, cutoff_for(&spec, h, 2.0 * half_width))?;
    let lu = apply_l(&u, &q)?;
    let field = ExtensionField {
        grid,
        y: YMesh::new(vec![0.0, 1.0, 2.0])?,
        alpha,
        a: 1.0 - alpha,
        d_alpha: f64::NAN,
        tau: (0.0, 0.0),
        trace: u.values.clone(),
        v: Vec::new(),
        vx: Vec::new(),
        flux: Vec::new(),
    };
    let peak = lu.max_abs();
    let y0 = 0.05 / lambda;
    let (e1, e2) = (2.0 - alpha, 2.0);
    let ys = [y0, 2.0 * y0, 4.0 * y0];
    let centre = grid.center() as isize;
    let reach = (1.5 / lambda / h) as isize;
    let picks: Vec<usize> = (-reach..=reach)
        .step_by(5)
        .map(|k| (centre + k) as usize)
        .filter(|&i| lu.values[i].abs() >= 0.2 * peak)
        .collect();
    let ratios: Vec<(f64, f64)> = picks
        .par_iter()
        .map(|&i| {
            let x = grid.node(i as isize);
            let d: Vec<f64> = ys
                .iter()
                .map(|&y| {
                    let pv = field.eval(x, y).expect("y > 0");
                    alpha * (pv.v - u.values[i]) / y.powf(alpha)
                })
                .collect();
            let d0 = extrapolate3(&ys, &d, e1, e2);
            // −lim y^a v_y = −D₀ and (−Δ)^{α/2}u = −Lu.
            (-d0, -lu.values[i])
        })
        .collect();
    let num: f64 = ratios.iter().map(|(a, b)| a * b).sum();
    let den: f64 = ratios.iter().map(|(_, b)| b * b).sum();
    let d_alpha = num / den;
    let spread = ratios
        .iter()
        .map(|(a, b)| (a / b - d_alpha).abs() / d_alpha.abs())
        .fold(0.0, f64::max);
    if !(d_alpha > 0.0) || spread > 0.05 {
        return Err(Error::Calibration(format!(
            "ratio spread {spread:.3e} around d = {d_alpha:.6} for alpha = {alpha}"
        )));
    }
    Ok(Calibration {
        d_alpha,
        spread,
        samples: ratios.len(),
    })
}

/// Value at 0 of `D₀ + B y^{e1} + C y^{e2}` through three samples.
fn extrapolate3(ys: &[f64; 3], d: &[f64], e1: f64, e2: f64) -> f64 {
    let m = nalgebra::Matrix3::from_fn(|r, c| match c {
        0 => 1.0,
        1 => ys[r].powf(e1),
        _ => ys[r].powf(e2),
    });
    let rhs = nalgebra::Vector3::new(d[0], d[1], d[2]);
    m.lu().solve(&rhs).map(|s| s[0]).unwrap_or(f64::NAN)
}

/// Calibrated `d_α`, memoized per order.
pub fn calibrate_d_alpha(alpha: f64) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    check_order(alpha)?;
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&d) = cache.lock().expect("calibration cache").get(&alpha.to_bits()) {
        return Ok(d);
    }
    let d = calibrate_with_scale(alpha, 1.0)?.d_alpha;
    cache.lock().expect("calibration cache").insert(alpha.to_bits(), d);
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::function::gamma::gamma;

    fn closed_form_d(alpha: f64) -> f64 {
        2f64.powf(1.0 - alpha) * gamma(1.0 - alpha / 2.0) / gamma(alpha / 2.0)
    }

    fn coarse_mesh(alpha: f64) -> YMesh {
        YMesh::graded(alpha, 4.0, 24, 1.3, 1e4).unwrap()
    }

    #[test]
    fn kernel_has_unit_mass_and_matches_classical_case() {
        let k = Poisson1D::new(1.0);
        let y = 0.7;
        let t = 1.3;
        assert!((k.density(t, y) - y / (std::f64::consts::PI * (t * t + y * y))).abs() < 1e-14);
        assert!((k.half_cdf(t, y) - (t / y).atan() / std::f64::consts::PI).abs() < 1e-13);
        for alpha in [0.3, 1.0, 1.7] {
            let k = Poisson1D::new(alpha);
            // Mass beyond t is p (y/t)^α / α to leading order.
            let t = 1e6;
            let beyond = 0.5 - k.half_cdf(t, 1.0);
            assert!((beyond * alpha / (k.p * t.powf(-alpha)) - 1.0).abs() < 1e-3);
            let d = 1e-6;
            for t in [-2.0, 0.3, 5.0] {
                let kv = k.values(t, 0.8);
                let dm = (k.values(t + d, 0.8).m - k.values(t - d, 0.8).m) / (2.0 * d);
                assert!((dm - t * kv.p).abs() < 1e-7, "M' = tP");
                let ds = (k.half_cdf(t + d, 0.8) - k.half_cdf(t - d, 0.8)) / (2.0 * d);
                assert!((ds - kv.p).abs() < 1e-7, "C' = P");
                let dsy = (k.half_cdf(t, 0.8 + d) - k.half_cdf(t, 0.8 - d)) / (2.0 * d);
                assert!((dsy - kv.s_y).abs() < 1e-7);
                let dmy = (k.values(t, 0.8 + d).m - k.values(t, 0.8 - d).m) / (2.0 * d);
                assert!((dmy - kv.m_y).abs() < 1e-6 * (1.0 + dmy.abs()));
            }
        }
    }

    #[test]
    fn product_weights_integrate_powers() {
        let mesh = coarse_mesh(0.5);
        for s in [-0.5, 0.0, 0.5] {
            let w = mesh.product_weights(s);
            let lin: f64 = w.iter().zip(mesh.levels()).map(|(w, y)| w * (2.0 - 3.0 * y)).sum();
            let top = mesh.top();
            let exact = 2.0 * top.powf(s + 1.0) / (s + 1.0) - 3.0 * top.powf(s + 2.0) / (s + 2.0);
            assert!((lin - exact).abs() < 1e-9 * exact.abs());
        }
    }

    #[test]
    fn constants_extend_to_themselves() {
        let g = Grid1D::new(5.0, 41).unwrap();
        let u = GridFn::constant(g, 0.7);
        let f = ExtensionField::new(&u, 0.8, coarse_mesh(0.8)).unwrap();
        for j in 0..f.y.len() {
            for i in 0..f.nx() {
                assert!((f.v(i, j) - 0.7).abs() < 1e-8);
                assert!(f.v_x(i, j).abs() < 1e-8);
                assert!(f.flux(i, j).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rows_have_unit_mass_at_every_level() {
        // The extension of the constant 1 is the row sum of the discrete kernel.
        let g = Grid1D::new(3.0, 31).unwrap();
        let u = GridFn::new(g, vec![1.0; 31], Tail::Sides { left: 1.0, right: 1.0 }).unwrap();
        for alpha in [0.4, 1.0, 1.6] {
            let f = ExtensionField::new(&u, alpha, coarse_mesh(alpha)).unwrap();
            let worst = (0..f.y.len())
                .flat_map(|j| f.level(j).to_vec())
                .map(|v| (v - 1.0).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "alpha {alpha}: {worst:e}");
        }
    }

    #[test]
    fn cosine_extends_harmonically() {
        let half_width = 200.0 * std::f64::consts::PI;
        let g = Grid1D::with_spacing(half_width, 0.02).unwrap();
        let u = GridFn::from_fn(g, Tail::Constant(0.0), |p| p[0].cos());
        let f = ExtensionField::new(&u, 1.0, YMesh::new(vec![0.0, 0.25, 0.5, 1.0, 2.0]).unwrap()).unwrap();
        let c = g.center();
        for j in 1..f.y.len() {
            let y = f.y.levels()[j];
            for di in [0usize, 40, 77] {
                let x = g.node((c + di) as isize);
                let want = (-y).exp() * x.cos();
                // Truncating the periodic trace costs O(y / L²).
                assert!((f.v(c + di, j) - want).abs() < 1e-4, "y {y} x {x}");
                assert!((f.v_x(c + di, j) + (-y).exp() * x.sin()).abs() < 1e-4);
                assert!((f.flux(c + di, j) + want).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn point_evaluation_matches_tables() {
        let g = Grid1D::new(6.0, 61).unwrap();
        let u = GridFn::from_fn(g, Tail::layer(), |p| p[0].tanh());
        let f = ExtensionField::new(&u, 0.7, coarse_mesh(0.7)).unwrap();
        for j in [1, 5, 20] {
            let y = f.y.levels()[j];
            for i in [0, 17, 30, 60] {
                let pv = f.eval(f.grid.node(i as isize), y).unwrap();
                assert!((pv.v - f.v(i, j)).abs() < 1e-12);
                assert!((pv.v_x - f.v_x(i, j)).abs() < 1e-10);
                assert!((pv.flux - f.flux(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn divergence_residual_shrinks_under_refinement() {
        let mut last = f64::INFINITY;
        for n in [41usize, 81, 161] {
            let g = Grid1D::new(4.0, n).unwrap();
            let h = g.spacing();
            let u = GridFn::from_fn(g, Tail::layer(), |p| p[0].tanh());
            let levels: Vec<f64> = (0..=40).map(|j| 1.0 + j as f64 * h).collect();
            let mesh = YMesh::new([vec![0.0], levels].concat()).unwrap();
            let f = ExtensionField::new(&u, 0.6, mesh).unwrap();
            let r = f.divergence_residual(1.0 + 40.0 * h);
            assert!(r < last / 3.0, "n {n}: {r:e} after {last:e}");
            last = r;
        }
    }

    #[test]
    fn trace_is_recovered_as_y_vanishes() {
        let g = Grid1D::new(6.0, 121).unwrap();
        let u = GridFn::from_fn(g, Tail::layer(), |p| p[0].tanh());
        let f = ExtensionField::new(&u, 1.0, coarse_mesh(1.0)).unwrap();
        for i in [10usize, 60, 100] {
            let x = g.node(i as isize);
            let e1 = (f.eval(x, 1e-3).unwrap().v - u.values[i]).abs();
            let e2 = (f.eval(x, 5e-4).unwrap().v - u.values[i]).abs();
            assert!(e1 < 5e-3 && e2 < 0.75 * e1 + 1e-12, "{e1:e} {e2:e}");
        }
    }

    #[test]
    fn calibration_recovers_the_dirichlet_to_neumann_constant() {
        let c1 = calibrate_with_scale(1.0, 1.0).unwrap();
        assert!((c1.d_alpha - 1.0).abs() < 0.02, "{c1:?}");
        for alpha in [0.5, 1.5] {
            let c = calibrate_with_scale(alpha, 1.0).unwrap();
            let want = closed_form_d(alpha);
            assert!((c.d_alpha - want).abs() < 0.02 * want, "alpha {alpha}: {c:?} vs {want}");
        }
    }

    #[test]
    fn calibration_is_scale_free() {
        let a = calibrate_with_scale(0.8, 1.0).unwrap().d_alpha;
        let b = calibrate_with_scale(0.8, 2.0).unwrap().d_alpha;
        assert!((a - b).abs() < 0.01 * a);
    }

    #[test]
    fn rejects_bad_orders() {
        let g = Grid1D::new(2.0, 11).unwrap();
        let u = GridFn::constant(g, 0.0);
        assert!(extend(&u, 2.5).is_err());
        assert!(extend(&u, 0.0).is_err());
        assert!(calibrate_d_alpha(-1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn maximum_principle(coeffs in proptest::collection::vec(-1.0f64..1.0, 4), alpha in prop_oneof![Just(0.5), Just(1.0), Just(1.5)]) {
            let g = Grid1D::new(4.0, 33).unwrap();
            let u = GridFn::from_fn(g, Tail::Constant(0.0), |p| {
                let x = p[0];
                (coeffs[0] + coeffs[1] * x + coeffs[2] * (2.0 * x).sin() + coeffs[3] * x.cos()) * (-x * x / 4.0).exp()
            });
            let hi = u.values.iter().cloned().fold(0.0, f64::max);
            let lo = u.values.iter().cloned().fold(0.0, f64::min);
            let f = ExtensionField::new(&u, alpha, coarse_mesh(alpha)).unwrap();
            for j in 0..f.y.len() {
                for &v in f.level(j) {
                    prop_assert!(v <= hi + 1e-10 && v >= lo - 1e-10);
                }
            }
        }
    }
}
