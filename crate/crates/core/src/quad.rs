//! Small one-dimensional quadrature toolbox shared by the kernel, quadrature
//! and extension modules.

use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

pub fn gl16() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl8() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(8))
}

/// Adaptive Gauss–Legendre: compares one 16-point panel against two halves
/// and recurses until the tolerance is met. The tolerance never drops below
/// roundoff relative to `∫|f|`, so cancelling integrands terminate.
pub fn adaptive<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, whole: f64, tol: f64, floor: f64, depth: u32) -> f64 {
        let gl = gl16();
        let m = 0.5 * (a + b);
        let left = gl.integrate(a, m, f);
        let right = gl.integrate(m, b, f);
        let both = left + right;
        if depth == 0 || (both - whole).abs() <= tol.max(floor) {
            both
        } else {
            rec(f, a, m, left, 0.5 * tol, 0.5 * floor, depth - 1)
                + rec(f, m, b, right, 0.5 * tol, 0.5 * floor, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let whole = gl16().integrate(a, b, f);
    let floor = 4e-15 * gl16().integrate(a, b, move |x| f(x).abs());
    rec(f, a, b, whole, tol, floor, 30)
}

/// `∫_a^b ρ^m dρ` for `0 ≤ a ≤ b ≤ ∞` (the caller guarantees convergence).
pub fn power_integral(a: f64, b: f64, m: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if (m + 1.0).abs() < 1e-14 {
        return (b / a).ln();
    }
    let e = m + 1.0;
    let hi = if b.is_infinite() { 0.0 } else { b.powf(e) };
    let lo = if a == 0.0 { 0.0 } else { a.powf(e) };
    (hi - lo) / e
}

/// `∫_a^b g(ρ) ρ^m dρ` for a smooth bounded `g` on a finite interval.
///
/// When `a = 0` the weak singularity `ρ^m`, `m > -1`, is removed with the
/// substitution `ρ = b s^{1/(m+1)}`.
pub fn weighted_moment<G: Fn(f64) -> f64 + Copy>(g: G, a: f64, b: f64, m: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a == 0.0 {
        let q = 1.0 / (m + 1.0);
        let scale = b.powf(m + 1.0) * q;
        return scale * adaptive(move |s: f64| g(b * s.powf(q)), 0.0, 1.0, 1e-13);
    }
    adaptive(move |r: f64| g(r) * r.powf(m), a, b, 1e-14 * power_integral(a, b, m).abs().max(1e-300))
}
