//! Jump-kernel catalog. Every kernel is radial and is represented internally
//! as a finite sum of power-law pieces `coeff · cos(ω ρ)? · ρ^e` supported on
//! `[rmin, rmax]`, which makes all radial moments and ring masses either
//! closed-form or one-dimensional quadratures.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{check_param, Error, Result};
use crate::quad::{adaptive, gl16, power_integral, weighted_moment};

/// Bounded even profile `c(z)` of an elliptic kernel, evaluated at `|z|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `mean + amplitude · cos(frequency · |z|)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        frequency: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `C(n, α) |z|^{-n-α}`.
    Fractional { n: usize, alpha: f64 },
    /// Finite-range kernel. The representative is `Λ |z|^{-n-α} 1_{|z| ≤ δ₀}`,
    /// which satisfies the two-sided bound with `λ |z|^{-n-β}` on `|z| ≤ δ₁`.
    Truncated {
        n: usize,
        alpha: f64,
        beta: f64,
        lambda: f64,
        big_lambda: f64,
        delta0: f64,
        delta1: f64,
    },
    /// `Λ |z|^{-n-α}` for `|z| ≤ δ₀`, continued by `λ' |z|^{-n-θ}` with
    /// `λ' = Λ δ₀^{θ-α}` so the kernel is continuous at `δ₀`.
    Decay {
        n: usize,
        alpha: f64,
        beta: f64,
        lambda: f64,
        big_lambda: f64,
        delta0: f64,
        theta: f64,
        c_d: f64,
    },
    /// `c(z) |z|^{-n-α}` with `λ ≤ c ≤ Λ`; `profile = None` means `c ≡ (λ+Λ)/2`.
    Elliptic {
        n: usize,
        alpha: f64,
        lambda: f64,
        big_lambda: f64,
        #[serde(default)]
        profile: Option<Profile>,
    },
    Sum {
        first: Box<KernelSpec>,
        second: Box<KernelSpec>,
    },
}

/// One radial piece `coeff · [cos(freq ρ)] · ρ^exponent` on `[rmin, rmax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub coeff: f64,
    pub exponent: f64,
    pub rmin: f64,
    pub rmax: f64,
    pub freq: Option<f64>,
}

impl Piece {
    fn value(&self, r: f64) -> f64 {
        if r < self.rmin || r > self.rmax {
            return 0.0;
        }
        let osc = self.freq.map_or(1.0, |w| (w * r).cos());
        self.coeff * osc * r.powf(self.exponent)
    }

    /// `∫_a^b ρ^m · piece(ρ) dρ`.
    fn moment(&self, a: f64, b: f64, m: f64) -> f64 {
        let lo = a.max(self.rmin);
        let hi = b.min(self.rmax);
        if hi <= lo || self.coeff == 0.0 {
            return 0.0;
        }
        let e = m + self.exponent;
        match self.freq {
            None => self.coeff * power_integral(lo, hi, e),
            Some(w) => self.coeff * osc_moment(w, e, lo, hi),
        }
    }
}

/// `∫_lo^hi cos(ω ρ) ρ^e dρ`, with an asymptotic expansion for `hi = ∞`.
fn osc_moment(w: f64, e: f64, lo: f64, hi: f64) -> f64 {
    if hi.is_infinite() {
        let b = lo.max(100.0 * (e.abs() + 12.0) / w);
        return osc_moment(w, e, lo, b) + osc_tail(w, e, b);
    }
    let half_period = PI / w;
    let mut total = 0.0;
    let mut start = lo;
    if lo == 0.0 {
        let s = hi.min(half_period);
        total += weighted_moment(|r| (w * r).cos(), 0.0, s, e);
        start = s;
    }
    while start < hi {
        let end = (start + half_period).min(hi);
        let f = |r: f64| (w * r).cos() * r.powf(e);
        // far from the origin the power factor is smooth on a half period
        if start > 8.0 * (e.abs() + 1.0) * (end - start) {
            total += gl16().integrate(start, end, f);
        } else {
            let scale = start.powf(e).abs().max(end.powf(e).abs()) * (end - start);
            total += adaptive(f, start, end, 1e-14 * scale);
        }
        start = end;
    }
    total
}

/// `∫_B^∞ cos(ω ρ) ρ^e dρ` for `ω B ≫ |e|` by repeated integration by parts.
fn osc_tail(w: f64, e: f64, b: f64) -> f64 {
    let phase = Complex::new((w * b).cos(), (w * b).sin());
    let iw = Complex::new(0.0, w);
    let mut term = -phase * b.powf(e) / iw;
    let mut sum = term;
    for k in 1..16 {
        let ek = e - (k - 1) as f64;
        term = -term * ek / (iw * b);
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sum.re
}

/// Surface measure of the unit sphere in `ℝⁿ` (`ω₁ = 2`, `ω₂ = 2π`).
pub fn sphere_area(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * PI.powf(nf / 2.0) / gamma(nf / 2.0)
}

/// `C(n, α) = α 2^{α-1} π^{-n/2} Γ((n+α)/2) / Γ(1-α/2)`.
pub fn normalization_constant(n: usize, alpha: f64) -> Result<f64> {
    check_param("alpha", alpha, alpha > 0.0 && alpha < 2.0, "must lie in (0, 2)")?;
    check_param("n", n as f64, n >= 1, "dimension must be positive")?;
    let nf = n as f64;
    Ok(alpha * 2f64.powf(alpha - 1.0) * PI.powf(-nf / 2.0) * gamma((nf + alpha) / 2.0)
        / gamma(1.0 - alpha / 2.0))
}

fn check_order(name: &'static str, v: f64) -> Result<()> {
    check_param(name, v, v > 0.0 && v < 2.0, "must lie in (0, 2)")
}

fn check_dim(n: usize) -> Result<()> {
    check_param("n", n as f64, n == 1 || n == 2, "only dimensions 1 and 2 are supported")
}

impl KernelSpec {
    pub fn fractional(n: usize, alpha: f64) -> Self {
        KernelSpec::Fractional { n, alpha }
    }

    /// Truncated kernel with `λ = Λ` and `β = α`, `δ₁ = δ₀`.
    pub fn truncated(n: usize, alpha: f64, big_lambda: f64, delta0: f64) -> Self {
        KernelSpec::Truncated {
            n,
            alpha,
            beta: alpha,
            lambda: big_lambda,
            big_lambda,
            delta0,
            delta1: delta0,
        }
    }

    pub fn sum(first: KernelSpec, second: KernelSpec) -> Self {
        KernelSpec::Sum {
            first: Box::new(first),
            second: Box::new(second),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            KernelSpec::Fractional { n, .. }
            | KernelSpec::Truncated { n, .. }
            | KernelSpec::Decay { n, .. }
            | KernelSpec::Elliptic { n, .. } => *n,
            KernelSpec::Sum { first, .. } => first.dimension(),
        }
    }

    /// Orders `α` of the singular parts (two for sums).
    pub fn orders(&self) -> Vec<f64> {
        match self {
            KernelSpec::Fractional { alpha, .. }
            | KernelSpec::Truncated { alpha, .. }
            | KernelSpec::Decay { alpha, .. }
            | KernelSpec::Elliptic { alpha, .. } => vec![*alpha],
            KernelSpec::Sum { first, second } => {
                let mut v = first.orders();
                v.extend(second.orders());
                v
            }
        }
    }

    /// Radius beyond which `J ≡ 0`, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            KernelSpec::Truncated { delta0, .. } => Some(*delta0),
            KernelSpec::Sum { first, second } => {
                Some(first.support_radius()?.max(second.support_radius()?))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Fractional { n, alpha } => {
                check_dim(n)?;
                check_order("alpha", alpha)
            }
            KernelSpec::Truncated {
                n,
                alpha,
                beta,
                lambda,
                big_lambda,
                delta0,
                delta1,
            } => {
                check_dim(n)?;
                check_order("alpha", alpha)?;
                check_order("beta", beta)?;
                check_param("lambda", lambda, lambda > 0.0, "must be positive")?;
                check_param("big_lambda", big_lambda, big_lambda >= lambda, "must be >= lambda")?;
                check_param("delta1", delta1, delta1 > 0.0, "must be positive")?;
                check_param("delta0", delta0, delta0 >= delta1, "must be >= delta1")?;
                check_param("beta", beta, beta <= alpha, "representative needs beta <= alpha")?;
                check_param(
                    "lambda",
                    lambda,
                    lambda * delta1.powf(alpha - beta) <= big_lambda * (1.0 + 1e-12),
                    "lower bound exceeds the representative on the delta1 ball",
                )
            }
            KernelSpec::Decay {
                n,
                alpha,
                beta,
                lambda,
                big_lambda,
                delta0,
                theta,
                c_d,
            } => {
                check_dim(n)?;
                check_order("alpha", alpha)?;
                check_order("beta", beta)?;
                check_param("lambda", lambda, lambda > 0.0, "must be positive")?;
                check_param("big_lambda", big_lambda, big_lambda >= lambda, "must be >= lambda")?;
                check_param("delta0", delta0, delta0 > 0.0, "must be positive")?;
                check_param("theta", theta, theta > 0.0, "must be positive")?;
                check_param("beta", beta, beta <= alpha, "representative needs beta <= alpha")?;
                check_param(
                    "lambda",
                    lambda,
                    lambda * delta0.powf(alpha - beta) <= big_lambda * (1.0 + 1e-12),
                    "lower bound exceeds the representative on the delta0 ball",
                )?;
                let lp = big_lambda * delta0.powf(theta - alpha);
                let needed = lp * sphere_area(n) * (1.0 - 2f64.powf(-theta)) / theta;
                check_param("c_d", c_d, c_d >= needed * (1.0 - 1e-12), "too small for the ring-mass bound")
            }
            KernelSpec::Elliptic {
                n,
                alpha,
                lambda,
                big_lambda,
                profile,
            } => {
                check_dim(n)?;
                check_order("alpha", alpha)?;
                check_param("lambda", lambda, lambda > 0.0, "must be positive")?;
                check_param("big_lambda", big_lambda, big_lambda >= lambda, "must be >= lambda")?;
                let (lo, hi) = match profile {
                    None => {
                        let m = 0.5 * (lambda + big_lambda);
                        (m, m)
                    }
                    Some(Profile::Constant { value }) => (value, value),
                    Some(Profile::Cosine {
                        mean,
                        amplitude,
                        frequency,
                    }) => {
                        check_param("frequency", frequency, frequency > 0.0, "must be positive")?;
                        (mean - amplitude.abs(), mean + amplitude.abs())
                    }
                };
                check_param("profile", lo, lo >= lambda * (1.0 - 1e-12), "drops below lambda")?;
                check_param("profile", hi, hi <= big_lambda * (1.0 + 1e-12), "exceeds big_lambda")
            }
            KernelSpec::Sum {
                ref first,
                ref second,
            } => {
                first.validate()?;
                second.validate()?;
                if first.dimension() != second.dimension() {
                    return Err(Error::InvalidParameter {
                        name: "n",
                        value: second.dimension() as f64,
                        reason: "sum parts must share the dimension",
                    });
                }
                Ok(())
            }
        }
    }

    /// Power-law pieces of the radial profile `J(ρ)`.
    pub fn pieces(&self) -> Result<Vec<Piece>> {
        self.validate()?;
        let mut out = Vec::new();
        self.push_pieces(&mut out);
        Ok(out)
    }

    fn push_pieces(&self, out: &mut Vec<Piece>) {
        let full = |coeff: f64, exponent: f64| Piece {
            coeff,
            exponent,
            rmin: 0.0,
            rmax: f64::INFINITY,
            freq: None,
        };
        match *self {
            KernelSpec::Fractional { n, alpha } => {
                let c = normalization_constant(n, alpha).expect("validated");
                out.push(full(c, -(n as f64) - alpha));
            }
            KernelSpec::Truncated {
                n,
                alpha,
                big_lambda,
                delta0,
                ..
            } => out.push(Piece {
                rmax: delta0,
                ..full(big_lambda, -(n as f64) - alpha)
            }),
            KernelSpec::Decay {
                n,
                alpha,
                big_lambda,
                delta0,
                theta,
                ..
            } => {
                let nf = n as f64;
                out.push(Piece {
                    rmax: delta0,
                    ..full(big_lambda, -nf - alpha)
                });
                out.push(Piece {
                    rmin: delta0,
                    ..full(big_lambda * delta0.powf(theta - alpha), -nf - theta)
                });
            }
            KernelSpec::Elliptic {
                n,
                alpha,
                lambda,
                big_lambda,
                profile,
            } => {
                let e = -(n as f64) - alpha;
                match profile {
                    None => out.push(full(0.5 * (lambda + big_lambda), e)),
                    Some(Profile::Constant { value }) => out.push(full(value, e)),
                    Some(Profile::Cosine {
                        mean,
                        amplitude,
                        frequency,
                    }) => {
                        out.push(full(mean, e));
                        out.push(Piece {
                            freq: Some(frequency),
                            ..full(amplitude, e)
                        });
                    }
                }
            }
            KernelSpec::Sum {
                ref first,
                ref second,
            } => {
                first.push_pieces(out);
                second.push_pieces(out);
            }
        }
    }

    /// Compiled radial form used by the quadrature and energy code.
    pub fn radial(&self) -> Result<RadialKernel> {
        Ok(RadialKernel {
            n: self.dimension(),
            pieces: self.pieces()?,
            support: self.support_radius(),
        })
    }
}

/// Radial kernel `J(z) = j(|z|)` as a sum of pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialKernel {
    pub n: usize,
    pub pieces: Vec<Piece>,
    pub support: Option<f64>,
}

impl RadialKernel {
    /// `j(ρ)` for `ρ > 0`.
    pub fn value(&self, r: f64) -> f64 {
        self.pieces.iter().map(|p| p.value(r)).sum()
    }

    /// `∫_a^b ρ^m j(ρ) dρ` (finite whenever the exponents allow it).
    pub fn moment(&self, a: f64, b: f64, m: f64) -> f64 {
        self.pieces.iter().map(|p| p.moment(a, b, m)).sum()
    }

    /// Mass of `J` over the shell `a < |z| < b`.
    pub fn shell_mass(&self, a: f64, b: f64) -> f64 {
        sphere_area(self.n) * self.moment(a, b, self.n as f64 - 1.0)
    }

    /// `∫_{a<|z|<b} |z|^m J(z) dz`.
    pub fn shell_moment(&self, a: f64, b: f64, m: f64) -> f64 {
        sphere_area(self.n) * self.moment(a, b, self.n as f64 - 1.0 + m)
    }

    /// Radii where a piece starts or ends (quadrature breakpoints).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| [p.rmin, p.rmax])
            .filter(|r| *r > 0.0 && r.is_finite())
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }
}

/// Pointwise `J(z)`; `z` must have the kernel's dimension and be nonzero.
pub fn kernel_value(spec: &KernelSpec, z: &[f64]) -> Result<f64> {
    if z.len() != spec.dimension() {
        return Err(Error::GridMismatch(format!(
            "displacement of dimension {} for a {}-dimensional kernel",
            z.len(),
            spec.dimension()
        )));
    }
    let r = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(spec.radial()?.value(r))
}

/// `∫_{r<|z|<2r} J(z) dz`.
pub fn ring_mass(spec: &KernelSpec, r: f64) -> Result<f64> {
    check_param("r", r, r > 0.0, "must be positive")?;
    Ok(spec.radial()?.shell_mass(r, 2.0 * r))
}
