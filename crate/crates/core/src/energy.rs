//! Energy split on balls, growth-exponent fits, the logarithmic cutoff and
//! its pair integrals over the symmetric domain decomposition, and the
//! Poincaré-type inequality for stable solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_param, Error, Result};
use crate::grid::{gradient, gradient_extended, sz_geometry, Grid, GridFn, Tail};
use crate::kernels::{sphere_area, KernelSpec};
use crate::nonlocal::{OperatorHandle, Stencil};
use crate::solver::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub radius: f64,
    pub sob_local: f64,
    pub sob_nonlocal: f64,
    pub pot: f64,
    pub total: f64,
}

fn check_radius(grid: &Grid, radius: f64) -> Result<()> {
    let hw = grid.min_half_width();
    if !(radius > 0.0) || radius > hw * (1.0 + 1e-12) {
        return Err(Error::RadiusOutsideGrid {
            radius,
            half_width: hw,
        });
    }
    Ok(())
}

fn radius_at(grid: &Grid, i: isize, j: isize) -> f64 {
    let p = grid.position(i, j);
    p[0].hypot(p[1])
}

/// Local gradient energy on edges whose midpoint lies in `B_R`, nonlocal
/// energy on every pair with at least one endpoint in `B_R` (pairs reaching
/// beyond the stencil use the far values and the tail mass), potential by
/// the node sum over `B_R`.
pub fn energy(u: &GridFn, op: &OperatorHandle, nl: &Nonlinearity, radius: f64) -> Result<EnergyReport> {
    let grid = u.grid;
    check_radius(&grid, radius)?;
    op.quadrature.check_grid(&grid)?;
    let inside = |r: f64| r <= radius * (1.0 + 1e-12);
    let st = Stencil::new(&op.quadrature);
    let ext = u.extended(st.reach.max(1));
    let (hx, hy) = grid.spacing();
    let two_d = grid.dim() == 2;
    let (al, ar) = u.tail.far_values();
    let vol = grid.cell_volume();

    let parts: Vec<(f64, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = grid.coords(k);
            let (i, j) = (i as isize, j as isize);
            let p = grid.position(i, j);
            let u0 = u.values[k];
            let mut local = 0.0;
            if op.has_local() {
                let mut axes = vec![((1isize, 0isize), hx)];
                if two_d {
                    axes.push(((0, 1), hy));
                }
                for ((ex, ey), hh) in axes {
                    // edges leaving this node forward, plus the one entering from a ghost
                    for (a, b) in [((i, j), (i + ex, j + ey)), ((i - ex, j - ey), (i, j))] {
                        if a != (i, j) && grid.contains(a.0, a.1) {
                            continue;
                        }
                        let (pa, pb) = (grid.position(a.0, a.1), grid.position(b.0, b.1));
                        let mid = (0.5 * (pa[0] + pb[0])).hypot(0.5 * (pa[1] + pb[1]));
                        if inside(mid) {
                            let d = (ext.get(b.0, b.1) - ext.get(a.0, a.1)) / hh;
                            local += 0.5 * d * d;
                        }
                    }
                }
            }
            let here = inside(p[0].hypot(p[1]));
            let mut nonlocal = 0.0;
            for &(o, w) in st.half() {
                let (fi, fj) = (i + o[0], j + o[1]);
                if here || inside(radius_at(&grid, fi, fj)) {
                    let d = ext.get(fi, fj) - u0;
                    nonlocal += w * d * d;
                }
                let (bi, bj) = (i - o[0], j - o[1]);
                if !grid.contains(bi, bj) && (here || inside(radius_at(&grid, bi, bj))) {
                    let d = u0 - ext.get(bi, bj);
                    nonlocal += w * d * d;
                }
            }
            let mut pot = 0.0;
            if here {
                nonlocal += st.half_tail * ((u0 - al).powi(2) + (u0 - ar).powi(2));
                pot = nl.potential(u0);
            }
            (local, nonlocal, pot)
        })
        .collect();
    let (mut local, mut nonlocal, mut pot) = (0.0, 0.0, 0.0);
    for (a, b, c) in parts {
        local += a;
        nonlocal += b;
        pot += c;
    }
    // (c/2)∬ over ordered pairs = c · Σ over unordered pairs
    let (sob_local, sob_nonlocal, pot) = (vol * local, op.c * vol * nonlocal, vol * pot);
    Ok(EnergyReport {
        radius,
        sob_local,
        sob_nonlocal,
        pot,
        total: sob_local + sob_nonlocal + pot,
    })
}

/// Least-squares fit of `log total` against `log R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub exponent: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub radii: Vec<f64>,
    pub reports: Vec<EnergyReport>,
    /// Slope of `log(total / (R^{n-1} log R))`; near zero or negative when the
    /// energy is `O(R^{n-1} log R)`.
    pub log_corrected_exponent: f64,
}

/// `(slope, intercept, rms residual)` of the least-squares line through `(x, y)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "points",
            value: x.len() as f64,
            reason: "need at least two matching samples",
        });
    }
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "x",
            value: mx,
            reason: "abscissae must not all coincide",
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok((slope, intercept, rms))
}

pub fn energy_scan(u: &GridFn, op: &OperatorHandle, nl: &Nonlinearity, radii: &[f64]) -> Result<SlopeFit> {
    if radii.len() < 4 {
        return Err(Error::TooFewRadii {
            needed: 4,
            got: radii.len(),
        });
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] <= 1.0 {
        return Err(Error::InvalidParameter {
            name: "radii",
            value: radii[0],
            reason: "must be increasing and larger than 1",
        });
    }
    let reports = radii
        .iter()
        .map(|&r| energy(u, op, nl, r))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = reports.iter().find(|r| !(r.total > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "total",
            value: bad.total,
            reason: "energy must be positive to fit a growth exponent",
        });
    }
    let n1 = u.grid.dim() as f64 - 1.0;
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = reports.iter().map(|r| r.total.ln()).collect();
    let lc: Vec<f64> = reports
        .iter()
        .map(|r| (r.total / (r.radius.powf(n1) * r.radius.ln())).ln())
        .collect();
    let (exponent, intercept, rms_residual) = fit_line(&lx, &ly)?;
    let (log_corrected_exponent, _, _) = fit_line(&lx, &lc)?;
    Ok(SlopeFit {
        exponent,
        intercept,
        rms_residual,
        radii: radii.to_vec(),
        reports,
        log_corrected_exponent,
    })
}

/// `η(r)`: ½ on `r ≤ √R`, `(log R − log r)/log R` up to `R`, then 0.
pub fn log_cutoff_value(radius: f64, r: f64) -> f64 {
    if r <= radius.sqrt() {
        0.5
    } else if r < radius {
        (radius.ln() - r.ln()) / radius.ln()
    } else {
        0.0
    }
}

pub fn log_cutoff(grid: impl Into<Grid>, radius: f64) -> Result<GridFn> {
    check_param("R", radius, radius > 1.0, "must exceed 1")?;
    Ok(GridFn::from_fn(grid, Tail::Constant(0.0), |p| {
        log_cutoff_value(radius, p[0].hypot(p[1]))
    }))
}

/// The six pair regions built from `B_inner ⊂ B_outer`: with `A` the annulus
/// and `E` the exterior, `Γ¹ = B×A`, `Γ² = A×A`, `Γ³ = E×A`, `Γ⁴ = B×E`,
/// `Γ⁵ = B×B`, `Γ⁶ = E×E`. Balls are open, so every point has one zone.
/// The union covers `ℝⁿ×ℝⁿ` once the regions are symmetrized under `(x,y) ↦ (y,x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaDecomposition {
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Zone {
    Ball,
    Annulus,
    Exterior,
}

/// `(anchor zone, partner zone)` of each region.
const REGION_ZONES: [(Zone, Zone); 6] = [
    (Zone::Ball, Zone::Annulus),
    (Zone::Annulus, Zone::Annulus),
    (Zone::Exterior, Zone::Annulus),
    (Zone::Ball, Zone::Exterior),
    (Zone::Ball, Zone::Ball),
    (Zone::Exterior, Zone::Exterior),
];

impl GammaDecomposition {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        check_param("inner", inner, inner > 0.0, "must be positive")?;
        check_param("outer", outer, outer > inner, "must exceed the inner radius")?;
        Ok(Self { inner, outer })
    }

    /// Radii `(R, 2R)`.
    pub fn standard(radius: f64) -> Result<Self> {
        Self::new(radius, 2.0 * radius)
    }

    /// Radii `(√R, R)`, matched to the logarithmic cutoff.
    pub fn for_cutoff(radius: f64) -> Result<Self> {
        check_param("R", radius, radius > 1.0, "must exceed 1")?;
        Self::new(radius.sqrt(), radius)
    }

    fn zone(&self, p: &[f64]) -> Zone {
        let r = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r < self.inner {
            Zone::Ball
        } else if r < self.outer {
            Zone::Annulus
        } else {
            Zone::Exterior
        }
    }

    /// Whether `(x, y) ∈ Γ^i`, `i = 1..=6`, as an ordered pair.
    pub fn contains(&self, i: usize, x: &[f64], y: &[f64]) -> bool {
        (1..=6).contains(&i) && REGION_ZONES[i - 1] == (self.zone(x), self.zone(y))
    }

    /// Membership of `(x, y)` in each symmetrized region `Γ^i ∪ swap(Γ^i)`.
    pub fn memberships(&self, x: &[f64], y: &[f64]) -> [bool; 6] {
        let mut out = [false; 6];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.contains(i + 1, x, y) || self.contains(i + 1, y, x);
        }
        out
    }

    fn band(&self, zone: Zone) -> (f64, f64) {
        match zone {
            Zone::Ball => (0.0, self.inner),
            Zone::Annulus => (self.inner, self.outer),
            Zone::Exterior => (self.outer, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate {
        value: 0.0,
        std_err: 0.0,
        samples: 0,
    };
}

/// `I_i = ∬_{Γ^i ∩ {|x−y| ≤ δ}} [η(x)−η(y)]² J(x−y)` in `near[i-1]` and the
/// same over `|x−y| > δ` in `far[i-1]`, for the decomposition `(√R, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffIntegrals {
    pub radius: f64,
    pub split: f64,
    pub near: [Estimate; 6],
    pub far: [Estimate; 6],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            samples: 200_000,
            seed: 20_240_917,
        }
    }
}

/// Split radius between the near and far pieces: `δ₀` when the kernel has one, else 1.
pub fn split_radius(spec: &KernelSpec) -> f64 {
    match spec {
        KernelSpec::Truncated { delta0, .. } | KernelSpec::Decay { delta0, .. } => *delta0,
        KernelSpec::Sum { first, second } => split_radius(first).max(split_radius(second)),
        _ => 1.0,
    }
}

fn uniform_in_band(rng: &mut ChaCha8Rng, n: usize, a: f64, b: f64) -> Vec<f64> {
    if n == 1 {
        let r = a + rng.random::<f64>() * (b - a);
        vec![if rng.random::<bool>() { r } else { -r }]
    } else {
        let r = (a * a + rng.random::<f64>() * (b * b - a * a)).sqrt();
        let t = std::f64::consts::TAU * rng.random::<f64>();
        vec![r * t.cos(), r * t.sin()]
    }
}

fn direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n == 1 {
        vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]
    } else {
        let t = std::f64::consts::TAU * rng.random::<f64>();
        vec![t.cos(), t.sin()]
    }
}

fn band_volume(n: usize, a: f64, b: f64) -> f64 {
    sphere_area(n) * (b.powi(n as i32) - a.powi(n as i32)) / n as f64
}

/// Importance-sampled Monte Carlo over `(anchor, z)`: the anchor is uniform
/// in the bounded zone of the region (restricted to the reachable band when
/// `|z|` is bounded) and `|z|` follows a power density matched to the
/// kernel's singularity (near) or tail (far). Regions whose reachable band
/// is empty, or where `η(x) = η(y)` identically, return exact zeros.
pub fn cutoff_pair_integrals(spec: &KernelSpec, radius: f64, opts: &McOptions) -> Result<CutoffIntegrals> {
    spec.validate()?;
    let n = spec.dimension();
    if n > 2 {
        return Err(Error::Unsupported("cutoff integrals are implemented for n ≤ 2".into()));
    }
    let dec = GammaDecomposition::for_cutoff(radius)?;
    let split = split_radius(spec);
    check_param("samples", opts.samples as f64, opts.samples >= 100, "need at least 100 samples")?;
    let kernel = spec.radial()?;
    let orders = spec.orders();
    let a_max = orders.iter().cloned().fold(0.0, f64::max);
    let a_min = orders.iter().cloned().fold(2.0, f64::min);
    let support = kernel.support.unwrap_or(f64::INFINITY);

    let tasks: Vec<(usize, bool)> = (0..6).flat_map(|i| [(i, true), (i, false)]).collect();
    let results: Vec<Estimate> = tasks
        .par_iter()
        .map(|&(region, near)| {
            let (zlo, zhi) = if near { (0.0, split.min(support)) } else { (split, support) };
            if !(zhi > zlo) || region >= 4 {
                // Γ⁵, Γ⁶: η is constant on both factors
                return Estimate::ZERO;
            }
            let (az, pz) = REGION_ZONES[region];
            // anchor in the bounded zone; Γ³ swaps so that its annulus point anchors
            let (anchor_zone, partner_zone) = if az == Zone::Exterior { (pz, az) } else { (az, pz) };
            let (mut lo, mut hi) = dec.band(anchor_zone);
            let (plo, phi) = dec.band(partner_zone);
            if zhi.is_finite() {
                lo = lo.max(plo - zhi);
                hi = hi.min(phi + zhi);
            }
            if !(hi > lo) {
                return Estimate::ZERO;
            }
            let anchor_vol = band_volume(n, lo, hi);
            // proposal q(ρ): near ∝ ρ^{1−a_max} on (0, zhi]; far ∝ ρ^{−1−a_min/2} on (zlo, ∞)
            let (pn, far_b) = (2.0 - a_max, 0.5 * a_min);
            let task_seed = opts.seed ^ ((region as u64 * 2 + near as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..opts.samples {
                let x = uniform_in_band(&mut rng, n, lo, hi);
                let (rho, inv_q) = if near {
                    let rho = zhi * rng.random::<f64>().powf(1.0 / pn);
                    (rho, zhi.powf(pn) / pn * rho.powf(1.0 - pn))
                } else {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let rho = zlo * u.powf(-1.0 / far_b);
                    (rho, rho.powf(1.0 + far_b) / (far_b * zlo.powf(far_b)))
                };
                if !(rho > 0.0) || !rho.is_finite() || (!near && rho >= zhi) {
                    continue;
                }
                let e = direction(&mut rng, n);
                let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + rho * b).collect();
                if dec.zone(&y) != partner_zone {
                    continue;
                }
                let rx = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                let ry = y.iter().map(|c| c * c).sum::<f64>().sqrt();
                let d = log_cutoff_value(radius, rx) - log_cutoff_value(radius, ry);
                let w = anchor_vol * sphere_area(n) * rho.powi(n as i32 - 1) * kernel.value(rho) * inv_q * d * d;
                s1 += w;
                s2 += w * w;
            }
            let m = opts.samples as f64;
            let mean = s1 / m;
            let var = (s2 / m - mean * mean).max(0.0);
            Estimate {
                value: mean,
                std_err: (var / m).sqrt(),
                samples: opts.samples,
            }
        })
        .collect();
    let mut near = [Estimate::ZERO; 6];
    let mut far = [Estimate::ZERO; 6];
    for (&(region, is_near), est) in tasks.iter().zip(results) {
        if is_near {
            near[region] = est;
        } else {
            far[region] = est;
        }
    }
    Ok(CutoffIntegrals {
        radius,
        split,
        near,
        far,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub curvature: f64,
    pub tangential: f64,
    pub a_term: f64,
    pub gradient_cutoff: f64,
    pub b_term: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub g_tol: f64,
}

/// Both sides of the Poincaré-type inequality with cutoff `η`:
///
/// ```text
/// ∫ (|∇u|²κ² + |∇_T|∇u||²) η² + (c/2) ∬ A_y [η²(x) + η²(x+y)] J(y)
///     ≤ ∫ |∇u|²|∇η|² + (c/2) ∬ B_y [η(x) − η(x+y)]² J(y)
/// ```
///
/// with `A_y = |∇u(x)||∇u(x+y)| − ∇u(x)·∇u(x+y)` and `B_y = |∇u(x)||∇u(x+y)|`.
/// Pair sums run over the table's offsets (gradients at ghost nodes come
/// from the tails); pairs beyond the stencil carry no gradient.
pub fn poincare_check(u: &GridFn, op: &OperatorHandle, eta: &GridFn, g_tol: f64) -> Result<PoincareReport> {
    if u.grid != eta.grid {
        return Err(Error::GridMismatch("u and η live on different grids".into()));
    }
    check_param("g_tol", g_tol, g_tol > 0.0, "must be positive")?;
    op.quadrature.check_grid(&u.grid)?;
    let grid = u.grid;
    let vol = grid.cell_volume();
    let geom = sz_geometry(u, g_tol)?;
    let (mut curvature, mut tangential) = (0.0, 0.0);
    for p in &geom.points {
        let e2 = eta.values[p.index].powi(2);
        curvature += p.kappa2 * p.grad_norm * p.grad_norm * e2 * vol;
        tangential += p.tangential * e2 * vol;
    }
    let gu = gradient(u);
    let ge = gradient(eta);
    let gradient_cutoff: f64 = gu
        .iter()
        .zip(&ge)
        .map(|(a, b)| (a[0] * a[0] + a[1] * a[1]) * (b[0] * b[0] + b[1] * b[1]))
        .sum::<f64>()
        * vol;

    let st = Stencil::new(&op.quadrature);
    let ring = st.reach;
    let eu = u.extended(ring + 1);
    let ee = eta.extended(ring);
    let gext = gradient_extended(u, &eu, ring);
    let (nx, _) = grid.shape();
    let stride = nx + 2 * ring;
    let ry = if grid.dim() == 2 { ring } else { 0 };
    let gat = |i: isize, j: isize| gext[(i + ring as isize) as usize + stride * (j + ry as isize) as usize];
    let pairs: Vec<(f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = grid.coords(k);
            let (i, j) = (i as isize, j as isize);
            let g0 = gat(i, j);
            let n0 = g0[0].hypot(g0[1]);
            let e0 = eta.values[k];
            let (mut a, mut b) = (0.0, 0.0);
            for &(o, w) in &st.offsets {
                let (ii, jj) = (i + o[0], j + o[1]);
                let g1 = gat(ii, jj);
                let n1 = g1[0].hypot(g1[1]);
                let e1 = ee.get(ii, jj);
                let prod = n0 * n1;
                if n0 > g_tol {
                    let ay = (prod - (g0[0] * g1[0] + g0[1] * g1[1])).max(0.0);
                    a += ay * (e0 * e0 + e1 * e1) * w;
                }
                b += prod * (e0 - e1).powi(2) * w;
            }
            (a, b)
        })
        .collect();
    let (mut a_sum, mut b_sum) = (0.0, 0.0);
    for (a, b) in pairs {
        a_sum += a;
        b_sum += b;
    }
    let a_term = 0.5 * op.c * a_sum * vol;
    let b_term = 0.5 * op.c * b_sum * vol;
    let lhs = curvature + tangential + a_term;
    let rhs = gradient_cutoff + b_term;
    Ok(PoincareReport {
        curvature,
        tangential,
        a_term,
        gradient_cutoff,
        b_term,
        lhs,
        rhs,
        margin: rhs - lhs,
        g_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid1D, Grid2D};
    use crate::nonlocal::dirichlet_parts;
    use crate::quad::gl16;
    use crate::quadrature::{build_quadrature, cutoff_for};
    use proptest::prelude::*;

    fn op1(spec: &KernelSpec, g: Grid1D, c: f64, reach: f64) -> OperatorHandle {
        let q = build_quadrature(spec, &g.into(), cutoff_for(spec, g.spacing(), reach)).unwrap();
        OperatorHandle::mixed(q, c).unwrap()
    }

    fn layer(g: Grid1D) -> GridFn {
        GridFn::from_fn(g, Tail::layer(), |p| (p[0] / 2f64.sqrt()).tanh())
    }

    #[test]
    fn ground_state_has_no_energy() {
        let g = Grid1D::new(5.0, 101).unwrap();
        let op = op1(&KernelSpec::fractional(1, 0.7), g, 1.0, 10.0);
        let u = GridFn::constant(g, 1.0);
        let e = energy(&u, &op, &Nonlinearity::allen_cahn(), 3.0).unwrap();
        assert_eq!((e.sob_local, e.sob_nonlocal, e.pot, e.total), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn local_layer_energy_matches_closed_form() {
        let g = Grid1D::new(15.0, 1501).unwrap();
        let op = op1(&KernelSpec::fractional(1, 1.0), g, 0.0, 1.0);
        let e = energy(&layer(g), &op, &Nonlinearity::allen_cahn(), 12.0).unwrap();
        let exact = 2.0 * 2f64.sqrt() / 3.0;
        assert!((e.total - exact).abs() < 1e-3, "{e:?}");
        // equipartition ½u'² = F along the exact profile
        assert!((e.sob_local - e.pot).abs() < 1e-3);
        assert_eq!(e.sob_nonlocal, 0.0);
    }

    #[test]
    fn full_ball_nonlocal_part_matches_form() {
        let g = Grid1D::new(6.0, 121).unwrap();
        let op = op1(&KernelSpec::fractional(1, 0.8), g, 0.7, 20.0);
        let u = layer(g);
        let e = energy(&u, &op, &Nonlinearity::allen_cahn(), 6.0).unwrap();
        let (_, nonlocal) = dirichlet_parts(&u, &u, &op).unwrap();
        assert!((e.sob_nonlocal - 0.7 * nonlocal).abs() < 1e-12 * nonlocal);
    }

    #[test]
    fn scan_rejects_few_radii() {
        let g = Grid1D::new(6.0, 121).unwrap();
        let op = op1(&KernelSpec::fractional(1, 0.8), g, 0.7, 20.0);
        let r = energy_scan(&layer(g), &op, &Nonlinearity::allen_cahn(), &[2.0, 3.0, 4.0]);
        assert!(matches!(r, Err(Error::TooFewRadii { .. })));
        assert!(energy(&layer(g), &op, &Nonlinearity::allen_cahn(), 7.0).is_err());
    }

    #[test]
    fn fit_line_recovers_power_law() {
        let x: Vec<f64> = [10.0f64, 20.0, 40.0, 80.0].iter().map(|r| r.ln()).collect();
        let y: Vec<f64> = x.iter().map(|l| 0.5 * l + 1.25).collect();
        let (s, b, rms) = fit_line(&x, &y).unwrap();
        assert!((s - 0.5).abs() < 1e-12 && (b - 1.25).abs() < 1e-12 && rms < 1e-12);
    }

    #[test]
    fn log_cutoff_branches() {
        let r = 16.0f64;
        assert_eq!(log_cutoff_value(r, 4.0), 0.5);
        assert_eq!(log_cutoff_value(r, 16.0), 0.0);
        assert!((log_cutoff_value(r, r.powf(0.75)) - 0.25).abs() < 1e-15);
        // continuous at √R from the log branch
        assert!((log_cutoff_value(r, 4.0 + 1e-12) - 0.5).abs() < 1e-12);
        assert!(log_cutoff(Grid1D::new(20.0, 41).unwrap(), 1.0).is_err());
    }

    #[test]
    fn regions_partition_pair_space() {
        let dec = GammaDecomposition::standard(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let p: Vec<f64> = (0..4).map(|_| 16.0 * (rng.random::<f64>() - 0.5)).collect();
            let m = dec.memberships(&p[..2], &p[2..]);
            assert_eq!(m.iter().filter(|b| **b).count(), 1, "{p:?}");
        }
    }

    fn truncated2(delta0: f64) -> KernelSpec {
        KernelSpec::truncated(2, 1.0, 1.0, delta0)
    }

    #[test]
    fn cutoff_integrals_structural_zeros() {
        let opts = McOptions {
            samples: 20_000,
            seed: 3,
        };
        let ci = cutoff_pair_integrals(&truncated2(1.0), 16.0, &opts).unwrap();
        for i in [4, 5] {
            assert_eq!(ci.near[i], Estimate::ZERO);
            assert_eq!(ci.far[i], Estimate::ZERO);
        }
        // 16 − 4 > δ₀: no pair of Γ⁴ has |x−y| ≤ δ₀
        assert_eq!(ci.near[3].value, 0.0);
        // finite range: nothing beyond δ₀
        assert!(ci.far.iter().all(|e| e.value == 0.0));
        assert!(ci.near[1].value > 0.0 && ci.near[0].value > 0.0 && ci.near[2].value > 0.0);
        // a wide kernel reaches from B_√R into the exterior
        let wide = cutoff_pair_integrals(&truncated2(14.0), 16.0, &opts).unwrap();
        assert!(wide.near[3].value > 0.0);
    }

    #[test]
    fn cutoff_integrals_are_seed_deterministic() {
        let opts = McOptions {
            samples: 5_000,
            seed: 11,
        };
        let a = cutoff_pair_integrals(&truncated2(1.0), 9.0, &opts).unwrap();
        let b = cutoff_pair_integrals(&truncated2(1.0), 9.0, &opts).unwrap();
        assert_eq!(a, b);
    }

    /// Product Gauss quadrature in 1D, where `Γ²` near the diagonal is a
    /// union of strips.
    fn i2_oracle_1d(radius: f64, delta: f64) -> f64 {
        let (a, b) = (radius.sqrt(), radius);
        let j = |z: f64| z.powf(-2.0);
        let eta = |r: f64| log_cutoff_value(radius, r.abs());
        let g = gl16();
        let panels = 400;
        let mut total = 0.0;
        // x in (a, b); y = x + z with |z| ≤ δ and y in (a, b); the mirrored
        // half of the annulus contributes the same
        for p in 0..panels {
            let (x0, x1) = (a + (b - a) * p as f64 / panels as f64, a + (b - a) * (p + 1) as f64 / panels as f64);
            let inner = |x: f64| {
                let (lo, hi) = ((a - x).max(-delta), (b - x).min(delta));
                let mut s = 0.0;
                for (zl, zh) in [(lo, 0.0f64.min(hi)), (0.0f64.max(lo), hi)] {
                    if zh > zl {
                        s += g.integrate(zl, zh, |z| if z == 0.0 { 0.0 } else { (eta(x) - eta(x + z)).powi(2) * j(z) });
                    }
                }
                s
            };
            total += g.integrate(x0, x1, inner);
        }
        2.0 * total
    }

    #[test]
    fn near_annulus_integral_matches_quadrature_in_1d() {
        let spec = KernelSpec::truncated(1, 1.0, 1.0, 1.0);
        let opts = McOptions {
            samples: 200_000,
            seed: 5,
        };
        let ci = cutoff_pair_integrals(&spec, 25.0, &opts).unwrap();
        let exact = i2_oracle_1d(25.0, 1.0);
        let est = ci.near[1];
        assert!((est.value - exact).abs() < 3.0 * est.std_err + 1e-6 * exact, "{est:?} vs {exact}");
    }

    #[test]
    fn poincare_trivial_cases() {
        let g = Grid2D::square(6.0, 25).unwrap();
        let spec = truncated2(1.5);
        let q = build_quadrature(&spec, &g.into(), cutoff_for(&spec, g.x.spacing(), 0.0)).unwrap();
        let op = OperatorHandle::mixed(q, 0.5).unwrap();
        let u = GridFn::from_fn(g, Tail::layer(), |p| (p[0] / 2f64.sqrt()).tanh());
        let eta = log_cutoff(g, 5.0).unwrap();
        let gt = crate::grid::default_gradient_tolerance(&u);
        let rep = poincare_check(&u, &op, &eta, gt).unwrap();
        assert!(rep.a_term.abs() < 1e-14 && rep.curvature.abs() < 1e-14 && rep.tangential.abs() < 1e-14, "{rep:?}");
        assert!(rep.rhs > 0.0 && rep.margin > 0.0);
        let zero = GridFn::constant(g, 0.0);
        let rep0 = poincare_check(&u, &op, &zero, gt).unwrap();
        assert_eq!((rep0.lhs, rep0.rhs), (0.0, 0.0));
    }

    #[test]
    fn curved_profile_has_positive_a_term() {
        let g = Grid2D::square(6.0, 25).unwrap();
        let spec = truncated2(1.5);
        let q = build_quadrature(&spec, &g.into(), cutoff_for(&spec, g.x.spacing(), 0.0)).unwrap();
        let op = OperatorHandle::mixed(q, 0.5).unwrap();
        let u = GridFn::from_fn(g, Tail::Constant(0.0), |p| (-(p[0] * p[0] + p[1] * p[1]) / 4.0).exp());
        let eta = log_cutoff(g, 5.0).unwrap();
        let rep = poincare_check(&u, &op, &eta, 1e-8).unwrap();
        assert!(rep.a_term > 0.0 && rep.curvature > 0.0);
        for v in [rep.curvature, rep.tangential, rep.a_term, rep.gradient_cutoff, rep.b_term] {
            assert!(v >= 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn energy_parts_grow_with_radius(alpha in 0.3f64..1.8, c in 0.0f64..2.0, r1 in 1.0f64..4.0, dr in 0.1f64..3.0) {
            let g = Grid1D::new(8.0, 161).unwrap();
            let op = op1(&KernelSpec::fractional(1, alpha), g, c, 20.0);
            let u = layer(g);
            let nl = Nonlinearity::allen_cahn();
            let a = energy(&u, &op, &nl, r1).unwrap();
            let b = energy(&u, &op, &nl, r1 + dr).unwrap();
            prop_assert!(b.sob_local >= a.sob_local && b.sob_nonlocal >= a.sob_nonlocal && b.pot >= a.pot);
            prop_assert!((a.total - a.sob_local - a.sob_nonlocal - a.pot).abs() < 1e-14 * a.total.max(1.0));
        }

        #[test]
        fn a_y_is_nonnegative(g0 in prop::array::uniform2(-3.0f64..3.0), g1 in prop::array::uniform2(-3.0f64..3.0)) {
            let a = g0[0].hypot(g0[1]) * g1[0].hypot(g1[1]) - (g0[0] * g1[0] + g0[1] * g1[1]);
            prop_assert!(a >= -1e-12);
        }
    }
}
