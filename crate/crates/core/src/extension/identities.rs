//! Identities satisfied by extensions of solved traces: the Hamiltonian
//! first integral, the Modica bound, and the monotone functionals in `r`
//! and `R`.

use rayon::prelude::*;

use super::{cell_weights, ExtensionField};
use crate::error::{check_param, Error, Result};
use crate::quad::{gl16, GaussLegendre};
use crate::solver::Nonlinearity;

/// Largest admissible extrapolated y-tail.
pub const TAIL_BUDGET: f64 = 1e-3;

/// `∫_{y_M}^∞ y^s g dy` from a power law through the last two levels.
fn tail(ys: &[f64], g: &[f64], s: f64) -> f64 {
    let n = ys.len() - 1;
    let (g1, g2) = (g[n - 1], g[n]);
    // Rounding noise of a flat column; y_max^{s+1} g stays below 1e-12.
    if g2 <= 1e-28 {
        return 0.0;
    }
    if g1 <= g2 {
        return f64::INFINITY;
    }
    let decay = (g1 / g2).ln() / (ys[n] / ys[n - 1]).ln() - s;
    if decay <= 1.0 {
        return f64::INFINITY;
    }
    g2 * ys[n].powf(s + 1.0) / (decay - 1.0)
}

/// Cumulative `∫₀^{y_j} (y^{s_a} g_a − y^{s_b} g_b) dy` plus the tail pair.
fn cumulative(ys: &[f64], wa: &[(f64, f64)], wb: &[(f64, f64)], ga: &[f64], gb: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(ys.len());
    let mut acc = 0.0;
    out.push(0.0);
    for j in 0..ys.len() - 1 {
        acc += wa[j].0 * ga[j] + wa[j].1 * ga[j + 1] - wb[j].0 * gb[j] - wb[j].1 * gb[j + 1];
        out.push(acc);
    }
    out
}

fn cells(ys: &[f64], s: f64) -> Vec<(f64, f64)> {
    ys.windows(2).map(|w| cell_weights(w[0], w[1], s)).collect()
}

/// Per-node `W(x) = ∫₀^∞ y^a (v_x² − v_y²) dy`, its cumulative profile when
/// asked for, and the largest tail correction.
struct WColumns {
    total: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
    tail_bound: f64,
}

fn w_columns(v: &ExtensionField, keep_cumulative: bool) -> Result<WColumns> {
    let ys = v.y.levels();
    let wa = cells(ys, v.a);
    let wb = cells(ys, -v.a);
    let nx = v.nx();
    let cols: Vec<(f64, Vec<f64>, f64)> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let ga: Vec<f64> = (0..ys.len()).map(|j| v.v_x(i, j).powi(2)).collect();
            let gb: Vec<f64> = (0..ys.len()).map(|j| v.flux(i, j).powi(2)).collect();
            let cum = cumulative(ys, &wa, &wb, &ga, &gb);
            let ta = tail(ys, &ga, v.a);
            let tb = tail(ys, &gb, -v.a);
            let total = cum[ys.len() - 1] + ta - tb;
            (total, if keep_cumulative { cum } else { Vec::new() }, ta.abs() + tb.abs())
        })
        .collect();
    let tail_bound = cols.iter().map(|c| c.2).fold(0.0, f64::max);
    if !(tail_bound <= TAIL_BUDGET) {
        return Err(Error::TailBudget {
            tail: tail_bound,
            budget: TAIL_BUDGET,
        });
    }
    Ok(WColumns {
        total: cols.iter().map(|c| c.0).collect(),
        cumulative: cols.into_iter().map(|c| c.1).collect(),
        tail_bound,
    })
}

/// Hamiltonian `d (∂_x v)² + c W − 2d [F(v) − F(τ)]` along the trace.
#[derive(Debug, Clone)]
pub struct HamiltonianReport {
    pub x: Vec<f64>,
    /// The identity with `c` multiplying the y-integral.
    pub residual: Vec<f64>,
    /// The same bracket with the y-integral not scaled by `c`.
    pub unscaled: Vec<f64>,
    pub tail_bound: f64,
}

impl HamiltonianReport {
    pub fn max_abs(&self) -> f64 {
        self.residual.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    fn spread(values: &[f64], x: &[f64], window: f64) -> f64 {
        let inside = values.iter().zip(x).filter(|(_, x)| x.abs() <= window).map(|(v, _)| *v);
        let (lo, hi) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// `max − min` of the residual over `|x| ≤ window`.
    pub fn oscillation(&self, window: f64) -> f64 {
        Self::spread(&self.residual, &self.x, window)
    }

    pub fn unscaled_oscillation(&self, window: f64) -> f64 {
        Self::spread(&self.unscaled, &self.x, window)
    }
}

pub fn hamiltonian_residual(v: &ExtensionField, c: f64, nl: &Nonlinearity) -> Result<HamiltonianReport> {
    check_param("c", c, c >= 0.0, "coupling must be non-negative")?;
    let w = w_columns(v, false)?;
    let d = v.d_alpha;
    let f_tau = nl.potential(v.tau.1);
    let trace = v.trace();
    let mut residual = Vec::with_capacity(v.nx());
    let mut unscaled = Vec::with_capacity(v.nx());
    for (i, &t) in trace.iter().enumerate() {
        let base = d * v.v_x(i, 0).powi(2) - 2.0 * d * (nl.potential(t) - f_tau);
        residual.push(base + c * w.total[i]);
        unscaled.push(base + w.total[i]);
    }
    Ok(HamiltonianReport {
        x: v.grid.nodes(),
        residual,
        unscaled,
        tail_bound: w.tail_bound,
    })
}

/// `2d[F(v) − F(τ)] − d v_x² − c ∫₀^y t^a (v_x² − v_y²) dt` on the tensor mesh.
#[derive(Debug, Clone)]
pub struct ModicaReport {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major by level: `margin[j * nx + i]`.
    pub margin: Vec<f64>,
    /// Largest Hamiltonian residual, the discretization-error estimate.
    pub eps_disc: f64,
}

impl ModicaReport {
    pub fn min_margin(&self) -> f64 {
        self.margin.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// The bound holds up to three times the discretization estimate.
    pub fn holds(&self) -> bool {
        self.min_margin() >= -3.0 * self.eps_disc
    }
}

pub fn modica_check(v: &ExtensionField, c: f64, nl: &Nonlinearity) -> Result<ModicaReport> {
    check_param("c", c, c >= 0.0, "coupling must be non-negative")?;
    let nx = v.nx();
    if let Some(i) = (1..nx - 1).find(|&i| !(v.v_x(i, 0) > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "trace slope",
            value: v.v_x(i, 0),
            reason: "the trace must be increasing",
        });
    }
    let w = w_columns(v, true)?;
    let d = v.d_alpha;
    let f_tau = nl.potential(v.tau.1);
    let trace = v.trace();
    let ny = v.y.len();
    let mut margin = vec![0.0; ny * nx];
    let mut eps: f64 = 0.0;
    for i in 0..nx {
        let base = 2.0 * d * (nl.potential(trace[i]) - f_tau) - d * v.v_x(i, 0).powi(2);
        eps = eps.max((base - c * w.total[i]).abs());
        for j in 0..ny {
            margin[j * nx + i] = base - c * w.cumulative[i][j];
        }
    }
    Ok(ModicaReport {
        x: v.grid.nodes(),
        y: v.y.levels().to_vec(),
        margin,
        eps_disc: eps,
    })
}

/// Samples of a functional on a radius ladder, with optional derivative checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneFunctional {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Centered differences of `values` (empty when not computed).
    pub derivative_numeric: Vec<f64>,
    /// The closed derivative formula at each radius (empty when not computed).
    pub derivative_formula: Vec<f64>,
    /// `(lhs, rhs)` of the sufficient condition `lhs ≥ rhs` for nondecrease.
    pub inequality: Vec<(f64, f64)>,
    /// Expected direction.
    pub nondecreasing: bool,
    pub tolerance: f64,
}

impl MonotoneFunctional {
    /// Largest step against the expected direction (0 when monotone).
    pub fn worst_violation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| if self.nondecreasing { w[0] - w[1] } else { w[1] - w[0] })
            .fold(0.0, f64::max)
    }

    pub fn is_monotone(&self) -> bool {
        self.worst_violation() <= self.tolerance
    }

    /// `max |num − formula| / max |formula|`.
    pub fn derivative_mismatch(&self) -> f64 {
        let scale = self.derivative_formula.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let err = self
            .derivative_numeric
            .iter()
            .zip(&self.derivative_formula)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            err
        } else {
            err / scale
        }
    }

    pub fn inequality_held(&self) -> Vec<bool> {
        self.inequality.iter().map(|(l, r)| l >= r).collect()
    }
}

fn check_ladder(radii: &[f64]) -> Result<()> {
    if radii.len() < 2 {
        return Err(Error::TooFewRadii {
            needed: 2,
            got: radii.len(),
        });
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter {
            name: "radii",
            value: radii[0],
            reason: "radii must increase strictly",
        });
    }
    Ok(())
}

/// `I(r) = d (∂_r v)² + c W − 2d F(v)` along `x = r ≥ 0` of an even 1D trace.
pub fn radial_monotonicity(
    v: &ExtensionField,
    c: f64,
    nl: &Nonlinearity,
    radii: &[f64],
    tol: f64,
) -> Result<MonotoneFunctional> {
    check_ladder(radii)?;
    let half_width = v.grid.half_width();
    if let Some(&r) = radii.iter().find(|&&r| !(0.0..=half_width).contains(&r)) {
        return Err(Error::RadiusOutsideGrid { radius: r, half_width });
    }
    let h = hamiltonian_residual(v, c, nl)?;
    let shift = -2.0 * v.d_alpha * nl.potential(v.tau.1);
    let dx = v.grid.spacing();
    let values = radii
        .iter()
        .map(|&r| {
            let s = (r + half_width) / dx;
            let i = (s.floor() as usize).min(v.nx() - 2);
            let t = s - i as f64;
            (1.0 - t) * h.residual[i] + t * h.residual[i + 1] + shift
        })
        .collect();
    Ok(MonotoneFunctional {
        radii: radii.to_vec(),
        values,
        derivative_numeric: Vec::new(),
        derivative_formula: Vec::new(),
        inequality: Vec::new(),
        nondecreasing: false,
        tolerance: tol,
    })
}

/// Half-disk integrals of one extension with weight `y^w`.
struct HalfDisk<'a> {
    v: &'a ExtensionField,
    weight: f64,
    wa: Vec<(f64, f64)>,
    wb: Vec<(f64, f64)>,
}

impl<'a> HalfDisk<'a> {
    fn new(v: &'a ExtensionField, weight: f64) -> Result<Self> {
        // |∇v|² y^w = y^w v_x² + y^{w−2a} (y^a v_y)².
        let sb = weight - 2.0 * v.a;
        if !(sb > -1.0) || !(weight > -1.0) {
            return Err(Error::Unsupported(format!(
                "weight exponent {weight} makes the energy diverge at y = 0 (flux exponent {sb})"
            )));
        }
        let ys = v.y.levels();
        Ok(Self {
            v,
            weight,
            wa: cells(ys, weight),
            wb: cells(ys, sb),
        })
    }

    fn flux_exponent(&self) -> f64 {
        self.weight - 2.0 * self.v.a
    }

    /// `∫₀^{top} y^w |∇v|²` in the column at `x` (cubic interpolation across nodes).
    fn column(&self, x: f64, top: f64) -> f64 {
        let v = self.v;
        let ys = v.y.levels();
        let h = v.grid.spacing();
        let s = (x + v.grid.half_width()) / h;
        let i0 = (s.floor() as isize).clamp(1, v.nx() as isize - 3);
        let t = s - i0 as f64;
        // Lagrange weights on nodes i0−1 … i0+2.
        let l = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        let at = |j: usize| {
            let mut gx = 0.0;
            let mut gf = 0.0;
            for (k, lk) in l.iter().enumerate() {
                let i = (i0 - 1 + k as isize) as usize;
                gx += lk * v.v_x(i, j);
                gf += lk * v.flux(i, j);
            }
            (gx * gx, gf * gf)
        };
        let mut acc = 0.0;
        let mut prev = at(0);
        for j in 0..ys.len() - 1 {
            if ys[j] >= top {
                break;
            }
            let next = at(j + 1);
            if ys[j + 1] <= top {
                acc += self.wa[j].0 * prev.0 + self.wa[j].1 * next.0 + self.wb[j].0 * prev.1 + self.wb[j].1 * next.1;
            } else {
                let u = (top - ys[j]) / (ys[j + 1] - ys[j]);
                let mid = (prev.0 + u * (next.0 - prev.0), prev.1 + u * (next.1 - prev.1));
                let (a0, a1) = cell_weights(ys[j], top, self.weight);
                let (b0, b1) = cell_weights(ys[j], top, self.flux_exponent());
                acc += a0 * prev.0 + a1 * mid.0 + b0 * prev.1 + b1 * mid.1;
            }
            prev = next;
        }
        acc
    }

    /// `∫_{B_R^+} y^w |∇v|²` with `x = R cos θ`.
    fn energy(&self, big_r: f64) -> f64 {
        let panels = 8;
        let g = gl16();
        let width = std::f64::consts::PI / panels as f64;
        (0..panels)
            .into_par_iter()
            .map(|p| {
                g.integrate(p as f64 * width, (p + 1) as f64 * width, |th| {
                    let (s, c) = th.sin_cos();
                    self.column(big_r * c, big_r * s) * big_r * s
                })
            })
            .sum()
    }

    /// `∫_{∂⁺B_R} y^w (∂_ν v)² ds`, with `θ = (π/2) s^q` clustering nodes
    /// toward both ends of the arc.
    fn normal_flux(&self, big_r: f64) -> Result<f64> {
        let v = self.v;
        let q = 1.0 / (1.0 + self.weight);
        let g = GaussLegendre::new(16);
        let panels = 4;
        let mut nodes = Vec::new();
        for p in 0..panels {
            let (a, b) = (p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
            for (x, w) in g.nodes.iter().zip(&g.weights) {
                let s = a + 0.5 * (b - a) * (x + 1.0);
                let th = std::f64::consts::FRAC_PI_2 * s.powf(q);
                let jac = std::f64::consts::FRAC_PI_2 * q * s.powf(q - 1.0) * 0.5 * (b - a) * w;
                nodes.push((th, jac));
                nodes.push((std::f64::consts::PI - th, jac));
            }
        }
        let terms: Result<Vec<f64>> = nodes
            .par_iter()
            .map(|&(th, jac)| {
                let (s, c) = th.sin_cos();
                let y = big_r * s;
                let pv = v.eval(big_r * c, y)?;
                let vy = pv.flux / y.powf(v.a);
                let dn = c * pv.v_x + s * vy;
                Ok(y.powf(self.weight) * dn * dn * big_r * jac)
            })
            .collect();
        Ok(terms?.iter().sum())
    }
}

/// Trace integrals `∫_{−R}^{R} u_x²` and `∫_{−R}^{R} F(u)` of the
/// piecewise-linear interpolants, and `u_x(R)² + u_x(−R)²`.
fn trace_integrals(v: &ExtensionField, nl: &Nonlinearity, big_r: f64) -> (f64, f64, f64) {
    let h = v.grid.spacing();
    let x0 = -v.grid.half_width();
    let trace = v.trace();
    let slope: Vec<f64> = (0..v.nx()).map(|i| v.v_x(i, 0)).collect();
    let interp = |vals: &[f64], x: f64| {
        let s = (x - x0) / h;
        let i = (s.floor() as usize).min(vals.len() - 2);
        let t = s - i as f64;
        (1.0 - t) * vals[i] + t * vals[i + 1]
    };
    let g3 = GaussLegendre::new(3);
    let mut d = 0.0;
    let mut p = 0.0;
    let mut a = -big_r;
    while a < big_r {
        let cell_end = x0 + (((a - x0) / h).floor() + 1.0) * h;
        let b = cell_end.min(big_r);
        if b - a > 1e-14 {
            d += g3.integrate(a, b, |x| interp(&slope, x).powi(2));
            p += g3.integrate(a, b, |x| nl.potential(interp(trace, x)));
        }
        a = b.max(a + 1e-14);
    }
    let ur2 = interp(&slope, big_r).powi(2) + interp(&slope, -big_r).powi(2);
    (d, p, ur2)
}

fn check_radii(v: &ExtensionField, radii: &[f64], delta: f64) -> Result<()> {
    check_ladder(radii)?;
    let half_width = v.grid.half_width();
    let limit = half_width - 3.0 * v.grid.spacing();
    if let Some(&r) = radii.iter().find(|&&r| !(r - delta > 0.0 && r + delta <= limit)) {
        return Err(Error::RadiusOutsideGrid { radius: r, half_width });
    }
    Ok(())
}

/// `I_γ(R) = R^{γ−1}[(c/d) E + D + 2P]` with `E = ∫_{B_R^+} y^a|∇v|²`,
/// `D = ∫_{B_R} u_x²`, `P = ∫_{B_R} F(u)` for a 1D trace.
///
/// The derivative formula checked against centered differences is
/// `R^{2−γ} I' = (c/d)[(γ−α)E + 2R ∫_{∂⁺} y^a v_ν²] + (γ−2)D + 2R Σ u_r² + 2γP`,
/// and the sufficient condition for nondecrease is `2γP ≥ (c/d)(α−γ)E + (2−γ)D`.
pub fn pohozaev_and_igamma(
    v: &ExtensionField,
    c: f64,
    nl: &Nonlinearity,
    gamma: f64,
    radii: &[f64],
) -> Result<MonotoneFunctional> {
    check_param("gamma", gamma, gamma > 0.0 && gamma <= 2.0, "gamma must lie in (0, 2]")?;
    check_param("c", c, c >= 0.0, "coupling must be non-negative")?;
    let delta = 2.0 * v.grid.spacing();
    check_radii(v, radii, delta)?;
    let disk = HalfDisk::new(v, v.a)?;
    let kappa = c / v.d_alpha;
    let functional = |r: f64| {
        let (d, p, _) = trace_integrals(v, nl, r);
        r.powf(gamma - 1.0) * (kappa * disk.energy(r) + d + 2.0 * p)
    };
    let mut values = Vec::new();
    let mut numeric = Vec::new();
    let mut formula = Vec::new();
    let mut inequality = Vec::new();
    for &r in radii {
        values.push(functional(r));
        numeric.push((functional(r + delta) - functional(r - delta)) / (2.0 * delta));
        let e = disk.energy(r);
        let b = disk.normal_flux(r)?;
        let (d, p, ur2) = trace_integrals(v, nl, r);
        let rhs = kappa * ((gamma - v.alpha) * e + 2.0 * r * b) + (gamma - 2.0) * d + 2.0 * r * ur2 + 2.0 * gamma * p;
        formula.push(rhs / r.powf(2.0 - gamma));
        inequality.push((2.0 * gamma * p, kappa * (v.alpha - gamma) * e + (2.0 - gamma) * d));
    }
    Ok(finish(radii, values, numeric, formula, inequality))
}

fn finish(
    radii: &[f64],
    values: Vec<f64>,
    numeric: Vec<f64>,
    formula: Vec<f64>,
    inequality: Vec<(f64, f64)>,
) -> MonotoneFunctional {
    // Three times the derivative disagreement, integrated over the widest gap.
    let gap = radii.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let err = numeric.iter().zip(&formula).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    MonotoneFunctional {
        radii: radii.to_vec(),
        values,
        derivative_numeric: numeric,
        derivative_formula: formula,
        inequality,
        nondecreasing: true,
        tolerance: 3.0 * err * gap,
    }
}

/// Exponent convention for the two-weight functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightExponent {
    /// `a_i = 1 − α_i`, matching each extension.
    #[default]
    Standard,
    /// `a_i = 1 − 2α_i`.
    Doubled,
}

/// `I(R) = R^{γ−1}[Σ_i E_i/d_i + 2P]` for the sum of two fractional
/// operators without diffusion, `v_i` the extension of the common trace of
/// order `α_i`. The derivative formula is
/// `R^{2−γ} I' = Σ_i [(γ−α_i)E_i + 2R ∫_{∂⁺} y^{a_i} (∂_ν v_i)²]/d_i + 2γP`.
pub fn two_weight_igamma(
    v1: &ExtensionField,
    v2: &ExtensionField,
    nl: &Nonlinearity,
    gamma: f64,
    radii: &[f64],
    exponent: WeightExponent,
) -> Result<MonotoneFunctional> {
    check_param("gamma", gamma, gamma > 0.0 && gamma <= 2.0, "gamma must lie in (0, 2]")?;
    if v1.grid != v2.grid || v1.trace().iter().zip(v2.trace()).any(|(a, b)| (a - b).abs() > 1e-14) {
        return Err(Error::GridMismatch("the two extensions must share their trace".into()));
    }
    let delta = 2.0 * v1.grid.spacing();
    check_radii(v1, radii, delta)?;
    let weight = |v: &ExtensionField| match exponent {
        WeightExponent::Standard => v.a,
        WeightExponent::Doubled => 1.0 - 2.0 * v.alpha,
    };
    let disks = [HalfDisk::new(v1, weight(v1))?, HalfDisk::new(v2, weight(v2))?];
    let fields = [v1, v2];
    let functional = |r: f64| {
        let (_, p, _) = trace_integrals(v1, nl, r);
        let e: f64 = disks.iter().zip(&fields).map(|(k, v)| k.energy(r) / v.d_alpha).sum();
        r.powf(gamma - 1.0) * (e + 2.0 * p)
    };
    let mut values = Vec::new();
    let mut numeric = Vec::new();
    let mut formula = Vec::new();
    let mut inequality = Vec::new();
    for &r in radii {
        values.push(functional(r));
        numeric.push((functional(r + delta) - functional(r - delta)) / (2.0 * delta));
        let (_, p, _) = trace_integrals(v1, nl, r);
        let mut rhs = 2.0 * gamma * p;
        let mut against = 0.0;
        for (k, v) in disks.iter().zip(&fields) {
            let e = k.energy(r);
            rhs += ((gamma - v.alpha) * e + 2.0 * r * k.normal_flux(r)?) / v.d_alpha;
            against += (v.alpha - gamma) * e / v.d_alpha;
        }
        formula.push(rhs / r.powf(2.0 - gamma));
        inequality.push((2.0 * gamma * p, against));
    }
    Ok(finish(radii, values, numeric, formula, inequality))
}
