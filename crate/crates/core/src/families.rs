//! Closed-form parametric families.
//!
//! On the line: semicircle, arcsine, Bernoulli, Dirac, Cauchy, the three
//! free stable cases, free Lévy–Khintchine generators and the free
//! Poisson / binomial laws. On the circle: point masses and the
//! multiplicative Lévy–Khintchine exponent, together with the ψ/Σ series
//! calculus behind `⊠`.
//!
//! The free Poisson law appears under two names. `free_poisson` uses the
//! R-transform `λ(z+t)/(1-tz)`, whose linear coefficient is `λ(1+t²)`;
//! `free_poisson_limit` is the limit of the free binomial laws, with
//! R-transform `λt/(1-tz)` and `C_2 = λt²`. Their second cumulants differ
//! by `λ` for every `t`; [`free_poisson_comparison`] reports the gap.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::cumulants::{c2m, m2c, CumulantSeq};
use crate::error::{Error, Result};
use crate::measures::{CircleMomentSeq, MomentSeq};
use crate::series::TruncatedSeries;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub enum StableCase {
    /// `R(z) = e^{iπθ} z^{α-1}`, `1 < α <= 2`, `α-2 <= θ <= 0`.
    One { alpha: f64, theta: f64 },
    /// `R(z) = a + b log z`, `a ∈ ℂ⁺ ∪ ℝ`, `b >= -Im(a)/π`.
    Two { a: Complex64, b: f64 },
    /// `R(z) = e^{iπθ} z^{α-1}`, `0 < α < 1`, `1 <= θ <= 1+α`.
    Three { alpha: f64, theta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    /// Variance `σ`; R-transform `σz`.
    Semicircle { sigma: f64 },
    Arcsine { a: f64, b: f64 },
    /// `(1-p) δ_{x0} + p δ_{x1}`.
    Bernoulli { p: f64, x0: f64, x1: f64 },
    Dirac { a: f64 },
    Cauchy { loc: f64, scale: f64 },
    FreeStable(StableCase),
    /// `R(z) = α + Σ_j w_j (z + t_j)/(1 - t_j z)` for the finite positive
    /// measure `ν = Σ w_j δ_{t_j}`.
    FreeLK { alpha: f64, nu: Vec<(f64, f64)> },
    FreePoisson { lambda: f64, t: f64 },
    FreePoissonLimit { lambda: f64, t: f64 },
    FreeBinomial { n: u32, lambda: f64, t: f64 },
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond { Ok(()) } else { Err(Error::InvalidArgument(msg())) }
}

fn finite(vals: &[f64]) -> bool {
    vals.iter().all(|v| v.is_finite())
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Semicircle { .. } => "semicircle",
            FamilySpec::Arcsine { .. } => "arcsine",
            FamilySpec::Bernoulli { .. } => "bernoulli",
            FamilySpec::Dirac { .. } => "dirac",
            FamilySpec::Cauchy { .. } => "cauchy",
            FamilySpec::FreeStable(_) => "free_stable",
            FamilySpec::FreeLK { .. } => "freeLK",
            FamilySpec::FreePoisson { .. } => "free_poisson",
            FamilySpec::FreePoissonLimit { .. } => "free_poisson_limit",
            FamilySpec::FreeBinomial { .. } => "free_binomial",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FamilySpec::Semicircle { sigma } => check(sigma > 0.0 && sigma.is_finite(), || format!("semicircle sigma={sigma} must be positive")),
            FamilySpec::Arcsine { a, b } => check(finite(&[a, b]) && a < b, || format!("arcsine needs a < b, got ({a}, {b})")),
            FamilySpec::Bernoulli { p, x0, x1 } => check(finite(&[x0, x1]) && (0.0..=1.0).contains(&p), || format!("bernoulli p={p} outside [0,1]")),
            FamilySpec::Dirac { a } => check(a.is_finite(), || "dirac location must be finite".into()),
            FamilySpec::Cauchy { loc, scale } => check(loc.is_finite() && scale > 0.0 && scale.is_finite(), || format!("cauchy scale={scale} must be positive")),
            FamilySpec::FreeStable(StableCase::One { alpha, theta }) => check(
                alpha > 1.0 && alpha <= 2.0 && theta >= alpha - 2.0 && theta <= 0.0,
                || format!("stable case 1 needs 1<α<=2 and α-2<=θ<=0, got α={alpha}, θ={theta}"),
            ),
            FamilySpec::FreeStable(StableCase::Two { a, b }) => check(
                finite(&[a.re, a.im, b]) && a.im >= 0.0 && b >= -a.im / PI,
                || format!("stable case 2 needs Im a >= 0 and b >= -Im(a)/π, got a={a}, b={b}"),
            ),
            FamilySpec::FreeStable(StableCase::Three { alpha, theta }) => check(
                alpha > 0.0 && alpha < 1.0 && theta >= 1.0 && theta <= 1.0 + alpha,
                || format!("stable case 3 needs 0<α<1 and 1<=θ<=1+α, got α={alpha}, θ={theta}"),
            ),
            FamilySpec::FreeLK { alpha, ref nu } => {
                check(alpha.is_finite(), || "freeLK alpha must be finite".into())?;
                for &(t, w) in nu {
                    check(t.is_finite() && w.is_finite() && w >= 0.0, || format!("freeLK atom ({t}, {w}) must have finite location and nonnegative weight"))?;
                }
                Ok(())
            }
            FamilySpec::FreePoisson { lambda, t } | FamilySpec::FreePoissonLimit { lambda, t } => {
                check(lambda > 0.0 && finite(&[lambda, t]), || format!("free poisson needs λ > 0, got {lambda}"))
            }
            FamilySpec::FreeBinomial { n, lambda, t } => check(
                n >= 1 && lambda >= 0.0 && lambda <= n as f64 && t.is_finite(),
                || format!("free binomial needs n >= 1 and 0 <= λ <= n, got n={n}, λ={lambda}"),
            ),
        }
    }

    /// The same law as a Lévy–Khintchine generator, when it has one
    /// with finitely many atoms.
    fn as_lk(&self) -> Option<(f64, Vec<(f64, f64)>)> {
        match *self {
            FamilySpec::Semicircle { sigma } => Some((0.0, vec![(0.0, sigma)])),
            FamilySpec::Dirac { a } => Some((a, vec![])),
            FamilySpec::FreeLK { alpha, ref nu } => Some((alpha, nu.clone())),
            FamilySpec::FreePoisson { lambda, t } => Some((0.0, vec![(t, lambda)])),
            _ => None,
        }
    }
}

fn lk_r(alpha: f64, nu: &[(f64, f64)], z: Complex64) -> Result<Complex64> {
    let mut r = Complex64::new(alpha, 0.0);
    for &(t, w) in nu {
        let den = 1.0 - t * z;
        if den.norm() < 1e-14 {
            return Err(Error::InvalidArgument(format!("z={z} is the pole 1/t of the atom at t={t}")));
        }
        r += w * (z + t) / den;
    }
    Ok(r)
}

/// R-transform of `(1-p) δ_{x0} + p δ_{x1}`, the branch with `K(z) ~ 1/z`.
fn bernoulli_r(p: f64, x0: f64, x1: f64, z: Complex64) -> Complex64 {
    let s = x0 + x1;
    let q = (1.0 - p) * x1 + p * x0;
    let d = (z * s + 1.0).powi(2) - 4.0 * z * (z * x0 * x1 + q);
    // ((zs+1) + sqrt(d) - 2) / (2z) rewritten without the cancellation at z = 0
    s / 2.0 + (2.0 * s + z * (s * s - 4.0 * x0 * x1) - 4.0 * q) / (2.0 * (d.sqrt() + 1.0))
}

fn stable_power(alpha: f64, theta: f64, z: Complex64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidArgument("stable R-transform is singular at z = 0".into()));
    }
    if z.im == 0.0 && z.re < 0.0 {
        return Err(Error::InvalidArgument(format!("z={z} lies on the branch cut of z^(α-1)")));
    }
    Ok((I * PI * theta).exp() * z.powf(alpha - 1.0))
}

/// Closed-form R-transform. For the Cauchy law the value depends on the
/// half-plane: `loc - i·scale` below the real axis, `loc + i·scale` above.
pub fn family_r(spec: &FamilySpec, z: Complex64) -> Result<Complex64> {
    spec.validate()?;
    if let Some((alpha, nu)) = spec.as_lk() {
        return lk_r(alpha, &nu, z);
    }
    match *spec {
        FamilySpec::Arcsine { a, b } => {
            let c = 0.5 * (a + b);
            let r = 0.5 * (b - a);
            // c + (sqrt(1 + r²z²) - 1)/z
            let w = (1.0 + r * r * z * z).sqrt();
            Ok(c + r * r * z / (w + 1.0))
        }
        FamilySpec::Bernoulli { p, x0, x1 } => Ok(bernoulli_r(p, x0, x1, z)),
        FamilySpec::Cauchy { loc, scale } => {
            if z.im > 0.0 {
                Ok(Complex64::new(loc, scale))
            } else {
                Ok(Complex64::new(loc, -scale))
            }
        }
        FamilySpec::FreeStable(StableCase::One { alpha, theta }) | FamilySpec::FreeStable(StableCase::Three { alpha, theta }) => {
            stable_power(alpha, theta, z)
        }
        FamilySpec::FreeStable(StableCase::Two { a, b }) => {
            if z == Complex64::new(0.0, 0.0) || (z.im == 0.0 && z.re < 0.0) {
                return Err(Error::InvalidArgument(format!("log z undefined on the branch cut at z={z}")));
            }
            Ok(a + b * z.ln())
        }
        FamilySpec::FreePoissonLimit { lambda, t } => {
            let den = 1.0 - t * z;
            if den.norm() < 1e-14 {
                return Err(Error::InvalidArgument(format!("z={z} is the pole 1/t")));
            }
            Ok(lambda * t / den)
        }
        FamilySpec::FreeBinomial { n, lambda, t } => Ok(n as f64 * bernoulli_r(lambda / n as f64, 0.0, t, z)),
        _ => unreachable!("handled through the Lévy–Khintchine form"),
    }
}

/// Closed-form Cauchy transform `G(ζ)` and its derivative, for the
/// families that have one.
pub fn family_g(spec: &FamilySpec, zeta: Complex64) -> Result<(Complex64, Complex64)> {
    spec.validate()?;
    if zeta.im == 0.0 {
        return Err(Error::InvalidArgument(format!("Cauchy transform needs ζ off the real axis, got {zeta}")));
    }
    match *spec {
        FamilySpec::Semicircle { sigma } => {
            let r = 2.0 * sigma.sqrt();
            let g = (zeta - (zeta - r).sqrt() * (zeta + r).sqrt()) / (2.0 * sigma);
            Ok((g, g / (2.0 * sigma * g - zeta)))
        }
        FamilySpec::Arcsine { a, b } => {
            let g = 1.0 / ((zeta - a).sqrt() * (zeta - b).sqrt());
            Ok((g, -0.5 * g * (1.0 / (zeta - a) + 1.0 / (zeta - b))))
        }
        FamilySpec::Bernoulli { p, x0, x1 } => {
            let mut g = Complex64::new(0.0, 0.0);
            let mut dg = Complex64::new(0.0, 0.0);
            for (x, w) in [(x0, 1.0 - p), (x1, p)] {
                let u = 1.0 / (zeta - x);
                g += w * u;
                dg -= w * u * u;
            }
            Ok((g, dg))
        }
        FamilySpec::Dirac { a } => {
            let u = 1.0 / (zeta - a);
            Ok((u, -u * u))
        }
        FamilySpec::Cauchy { loc, scale } => {
            let shift = if zeta.im > 0.0 { scale } else { -scale };
            let g = 1.0 / (zeta - loc + I * shift);
            Ok((g, -g * g))
        }
        _ => Err(Error::Unsupported(format!("no closed-form Cauchy transform for {}", spec.name()))),
    }
}

/// Support bounds used to choose continuation heights and grids.
pub fn family_support(spec: &FamilySpec) -> Option<(f64, f64)> {
    match *spec {
        FamilySpec::Semicircle { sigma } => Some((-2.0 * sigma.sqrt(), 2.0 * sigma.sqrt())),
        FamilySpec::Arcsine { a, b } => Some((a, b)),
        FamilySpec::Bernoulli { x0, x1, .. } => Some((x0.min(x1), x0.max(x1))),
        FamilySpec::Dirac { a } => Some((a, a)),
        _ => None,
    }
}

/// Closed-form density of the semicircle, arcsine and Cauchy laws.
pub fn family_density(spec: &FamilySpec, x: f64) -> Result<f64> {
    spec.validate()?;
    match *spec {
        FamilySpec::Semicircle { sigma } => {
            let d = 4.0 * sigma - x * x;
            Ok(if d > 0.0 { d.sqrt() / (2.0 * PI * sigma) } else { 0.0 })
        }
        FamilySpec::Arcsine { a, b } => Ok(if x > a && x < b { 1.0 / (PI * ((x - a) * (b - x)).sqrt()) } else { 0.0 }),
        FamilySpec::Cauchy { loc, scale } => Ok(scale / (PI * ((x - loc).powi(2) + scale * scale))),
        _ => Err(Error::Unsupported(format!("no closed-form density for {}", spec.name()))),
    }
}

fn binom_half(k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (0.5 - j as f64) / (j + 1) as f64)
}

/// Free cumulants `C_1..C_K`, the Taylor coefficients of `R` at 0.
pub fn family_cumulants(spec: &FamilySpec, order: usize) -> Result<CumulantSeq> {
    spec.validate()?;
    let heavy = || Error::Unsupported(format!("{} has no moments", spec.name()));
    let c: Vec<f64> = match *spec {
        FamilySpec::Arcsine { a, b } => {
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            (1..=order)
                .map(|n| match n {
                    1 => c,
                    n if n % 2 == 0 => binom_half(n / 2) * r.powi(n as i32),
                    _ => 0.0,
                })
                .collect()
        }
        FamilySpec::Bernoulli { p, x0, x1 } => bernoulli_cumulants(p, x0, x1, order),
        FamilySpec::Cauchy { .. } => return Err(heavy()),
        FamilySpec::FreeStable(StableCase::One { alpha: 2.0, theta }) => {
            // α = 2 forces θ = 0: the variance-one semicircle
            debug_assert_eq!(theta, 0.0);
            (1..=order).map(|n| if n == 2 { 1.0 } else { 0.0 }).collect()
        }
        FamilySpec::FreeStable(_) => return Err(heavy()),
        FamilySpec::FreePoissonLimit { lambda, t } => (1..=order).map(|n| lambda * t.powi(n as i32)).collect(),
        FamilySpec::FreeBinomial { n, lambda, t } => bernoulli_cumulants(lambda / n as f64, 0.0, t, order)
            .into_iter()
            .map(|c| c * n as f64)
            .collect(),
        _ => {
            let (alpha, nu) = spec.as_lk().expect("remaining families are Lévy–Khintchine");
            (1..=order)
                .map(|n| {
                    nu.iter()
                        .map(|&(t, w)| if n == 1 { w * t } else { w * (1.0 + t * t) * t.powi(n as i32 - 2) })
                        .sum::<f64>()
                        + if n == 1 { alpha } else { 0.0 }
                })
                .collect()
        }
    };
    Ok(CumulantSeq::new(c))
}

fn bernoulli_cumulants(p: f64, x0: f64, x1: f64, order: usize) -> Vec<f64> {
    let m = MomentSeq::new((1..=order as i32).map(|n| (1.0 - p) * x0.powi(n) + p * x1.powi(n)).collect());
    m2c(&m).values().to_vec()
}

pub fn family_moments(spec: &FamilySpec, order: usize) -> Result<MomentSeq> {
    Ok(c2m(&family_cumulants(spec, order)?))
}

/// The two readings of the free Poisson law side by side.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FreePoissonComparison {
    pub lambda: f64,
    pub t: f64,
    pub binomial_n: u32,
    /// Cumulants from `λ(z+t)/(1-tz)`.
    pub r_transform_cumulants: Vec<f64>,
    /// Cumulants of the free binomial law with `n` factors.
    pub binomial_cumulants: Vec<f64>,
    /// Cumulants of the `n → ∞` limit, `λ t^k`.
    pub limit_cumulants: Vec<f64>,
    /// `C_2` of the R-transform reading minus `C_2` of the binomial limit.
    pub c2_gap: f64,
    pub agree: bool,
}

pub fn free_poisson_comparison(lambda: f64, t: f64, n: u32, order: usize) -> Result<FreePoissonComparison> {
    let order = order.max(2);
    let stated = family_cumulants(&FamilySpec::FreePoisson { lambda, t }, order)?;
    let binomial = family_cumulants(&FamilySpec::FreeBinomial { n, lambda, t }, order)?;
    let limit = family_cumulants(&FamilySpec::FreePoissonLimit { lambda, t }, order)?;
    let c2_gap = stated.get(2) - limit.get(2);
    Ok(FreePoissonComparison {
        lambda,
        t,
        binomial_n: n,
        agree: c2_gap.abs() <= 1e-12 * (1.0 + lambda),
        c2_gap,
        r_transform_cumulants: stated.values().to_vec(),
        binomial_cumulants: binomial.values().to_vec(),
        limit_cumulants: limit.values().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CircleFamilySpec {
    Atom { omega: Complex64 },
    /// `Σ(z) = exp(iα + Σ_j w_j (1 + ζ_j z)/(1 - ζ_j z))`.
    MultLK { alpha: f64, nu: Vec<(Complex64, f64)> },
}

impl CircleFamilySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CircleFamilySpec::Atom { omega } => check((omega.norm() - 1.0).abs() <= 1e-12, || format!("atom {omega} is not on the unit circle")),
            CircleFamilySpec::MultLK { alpha, nu } => {
                check(alpha.is_finite(), || "alpha must be finite".into())?;
                for &(zeta, w) in nu {
                    check((zeta.norm() - 1.0).abs() <= 1e-12, || format!("ν atom {zeta} is not on the unit circle"))?;
                    check(w >= 0.0 && w.is_finite(), || format!("ν weight {w} must be nonnegative"))?;
                }
                Ok(())
            }
        }
    }

    pub fn moments(&self, order: usize) -> Result<CircleMomentSeq> {
        self.validate()?;
        match self {
            CircleFamilySpec::Atom { omega } => CircleMomentSeq::from_atoms(&[(*omega, 1.0)], order),
            CircleFamilySpec::MultLK { .. } => Err(Error::Unsupported("multLK is available through Σ only".into())),
        }
    }
}

/// `ψ(z) = Σ_{n>=1} m_n z^n`, truncated at the order of `m`.
pub fn psi_series(m: &CircleMomentSeq) -> TruncatedSeries<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0)];
    c.extend_from_slice(m.values());
    TruncatedSeries::from_coeffs(c, m.order())
}

/// `Σ(z) = χ(z)/z` where `χ` reverses `ψ/(1+ψ)`; order `K-1`.
pub fn sigma_series(m: &CircleMomentSeq) -> Result<TruncatedSeries<Complex64>> {
    if m.order() == 0 {
        return Err(Error::InvalidArgument("Σ needs at least one moment".into()));
    }
    if m.get(1).norm() == 0.0 {
        return Err(Error::ZeroMean);
    }
    let psi = psi_series(m);
    let one = TruncatedSeries::one(m.order());
    let chi = psi.mul(&one.add(&psi)?.reciprocal()?)?;
    let rev = chi.reversion()?;
    Ok(TruncatedSeries::from_coeffs(rev.coeffs()[1..].to_vec(), m.order() - 1))
}

/// Moments of `μ ⊠ ν` up to order `K` from `Σ_{μ⊠ν} = Σ_μ Σ_ν`.
pub fn mult_convolve(a: &CircleMomentSeq, b: &CircleMomentSeq, order: usize) -> Result<CircleMomentSeq> {
    if order == 0 || a.order() < order || b.order() < order {
        return Err(Error::OrderMismatch(a.order().min(b.order()), order));
    }
    let trunc = |m: &CircleMomentSeq| CircleMomentSeq::new(m.values()[..order].to_vec());
    let sa = sigma_series(&trunc(a)?)?;
    let sb = sigma_series(&trunc(b)?)?;
    let sigma = sa.mul(&sb)?;
    let mut zs = vec![Complex64::new(0.0, 0.0)];
    zs.extend_from_slice(sigma.coeffs());
    let chi = TruncatedSeries::from_coeffs(zs, order).reversion()?;
    let one = TruncatedSeries::one(order);
    let psi = chi.mul(&one.sub(&chi)?.reciprocal()?)?;
    CircleMomentSeq::new(psi.coeffs()[1..].to_vec())
}

/// Evaluates `Σ(z)` of a multiplicative Lévy–Khintchine spec at `|z| < 1`.
pub fn mult_lk_sigma(spec: &CircleFamilySpec, z: Complex64) -> Result<Complex64> {
    spec.validate()?;
    if z.norm() >= 1.0 {
        return Err(Error::InvalidArgument(format!("Σ needs |z| < 1, got {z}")));
    }
    match spec {
        CircleFamilySpec::MultLK { alpha, nu } => {
            let mut u = I * *alpha;
            for &(zeta, w) in nu {
                let den = 1.0 - zeta * z;
                if den.norm() < 1e-14 {
                    return Err(Error::InvalidArgument(format!("z={z} is singular for the atom {zeta}")));
                }
                u += w * (1.0 + zeta * z) / den;
            }
            Ok(u.exp())
        }
        CircleFamilySpec::Atom { omega } => Ok(1.0 / *omega),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Taylor coefficients of R by the trapezoid rule on a small circle.
    fn contour_coefficients(spec: &FamilySpec, order: usize, radius: f64) -> Vec<Complex64> {
        let n = 512;
        (1..=order)
            .map(|k| {
                // C_k is the coefficient of z^{k-1}
                let mut acc = c(0.0, 0.0);
                for j in 0..n {
                    let z = radius * (I * (2.0 * PI * (j as f64 + 0.5) / n as f64)).exp();
                    acc += family_r(spec, z).unwrap() / z.powi(k as i32 - 1);
                }
                acc / n as f64
            })
            .collect()
    }

    fn grid(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                c(3.0 * (2.0 * PI * t).cos() * (1.0 - t), -0.05 - 2.0 * t)
            })
            .collect()
    }

    #[test]
    fn r_transform_examples() {
        assert_eq!(family_r(&FamilySpec::Dirac { a: 1.25 }, c(0.3, -0.2)).unwrap(), c(1.25, 0.0));
        let lk = FamilySpec::FreeLK { alpha: 0.0, nu: vec![(0.0, 0.7)] };
        let stable = FamilySpec::FreeStable(StableCase::One { alpha: 2.0, theta: 0.0 });
        for z in grid(20) {
            assert!(close(family_r(&lk, z).unwrap(), 0.7 * z, 1e-15));
            assert!(close(family_r(&stable, z).unwrap(), z, 1e-12));
            assert!(close(
                family_r(&stable, z).unwrap(),
                family_r(&FamilySpec::Semicircle { sigma: 1.0 }, z).unwrap(),
                1e-12
            ));
        }
    }

    #[test]
    fn bernoulli_r_matches_displayed_k() {
        let spec = FamilySpec::Bernoulli { p: 0.5, x0: 0.0, x1: 1.0 };
        for z in [c(0.0, -0.3), c(0.2, -0.1), c(-0.4, -0.5)] {
            let k = (z + 1.0 + (1.0 + z * z).sqrt()) / (2.0 * z);
            assert!(close(family_r(&spec, z).unwrap() + 1.0 / z, k, 1e-14));
            // and K really inverts G
            let (g, _) = family_g(&spec, k).unwrap();
            assert!(close(g, z, 1e-13));
        }
    }

    #[test]
    fn contour_oracle_matches_cumulants() {
        let specs = [
            FamilySpec::Semicircle { sigma: 0.7 },
            FamilySpec::Arcsine { a: -0.5, b: 2.0 },
            FamilySpec::Bernoulli { p: 0.3, x0: -1.0, x1: 2.0 },
            FamilySpec::FreeLK { alpha: 0.4, nu: vec![(0.5, 1.0), (-1.2, 0.3)] },
            FamilySpec::FreePoisson { lambda: 2.0, t: 0.8 },
            FamilySpec::FreePoissonLimit { lambda: 2.0, t: 0.8 },
            FamilySpec::FreeBinomial { n: 5, lambda: 1.5, t: 0.9 },
        ];
        for spec in &specs {
            let oracle = contour_coefficients(spec, 7, 0.3);
            let closed = family_cumulants(spec, 7).unwrap();
            for (k, o) in oracle.iter().enumerate() {
                assert!(o.im.abs() < 1e-12, "{spec:?} k={}", k + 1);
                assert!((o.re - closed.get(k + 1)).abs() < 1e-10 * (1.0 + o.re.abs()), "{spec:?} C_{}: {o} vs {}", k + 1, closed.get(k + 1));
            }
        }
    }

    #[test]
    fn density_examples() {
        assert!((family_density(&FamilySpec::Semicircle { sigma: 1.0 }, 0.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!((family_density(&FamilySpec::Arcsine { a: 0.0, b: 2.0 }, 1.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!((family_density(&FamilySpec::Cauchy { loc: 0.0, scale: 1.0 }, 0.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert_eq!(family_density(&FamilySpec::Semicircle { sigma: 1.0 }, 2.5).unwrap(), 0.0);
        assert!(family_density(&FamilySpec::Bernoulli { p: 0.5, x0: 0.0, x1: 1.0 }, 0.5).is_err());
    }

    #[test]
    fn semicircle_moments_catalan_and_by_integration() {
        let m = family_moments(&FamilySpec::Semicircle { sigma: 1.0 }, 6).unwrap();
        assert_eq!(m.values(), &[0.0, 1.0, 0.0, 2.0, 0.0, 5.0]);
        // Gauss–Chebyshev style check: substitute x = 2 sin θ, midpoint rule in θ
        let n = 4000;
        for k in 1..=6 {
            let mut acc = 0.0;
            for j in 0..n {
                let th = -PI / 2.0 + PI * (j as f64 + 0.5) / n as f64;
                let x = 2.0 * th.sin();
                acc += x.powi(k) * family_density(&FamilySpec::Semicircle { sigma: 1.0 }, x).unwrap() * 2.0 * th.cos();
            }
            acc *= PI / n as f64;
            assert!((acc - m.get(k as usize)).abs() < 1e-6, "k={k}");
        }
        for sigma in [0.25, 1.0, 3.0] {
            let m = family_moments(&FamilySpec::Semicircle { sigma }, 8).unwrap();
            let cum = m2c(&m);
            for k in 1..=8 {
                let want = if k == 2 { sigma } else { 0.0 };
                assert!((cum.get(k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn arcsine_is_bernoulli_square() {
        let arc = family_moments(&FamilySpec::Arcsine { a: 0.0, b: 2.0 }, 8).unwrap();
        let bern = MomentSeq::new(vec![0.5; 8]);
        let conv = crate::cumulants::free_add_convolve(&bern, &bern).unwrap();
        for k in 1..=8 {
            assert!((arc.get(k) - conv.get(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn free_binomial_examples() {
        let m = family_moments(&FamilySpec::FreeBinomial { n: 1, lambda: 0.5, t: 1.0 }, 6).unwrap();
        for k in 1..=6 {
            assert!((m.get(k) - 0.5).abs() < 1e-14);
        }
        let (lambda, t) = (2.0, 1.5);
        let c = family_cumulants(&FamilySpec::FreeBinomial { n: 10_000, lambda, t }, 4).unwrap();
        assert!((c.get(2) - lambda * t * t).abs() <= 1e-3 * lambda * t * t);
        assert!((c.get(2) - lambda * t * t * (1.0 - lambda / 10_000.0)).abs() < 1e-9);
    }

    #[test]
    fn free_poisson_readings_differ() {
        let cmp = free_poisson_comparison(2.0, 1.5, 10_000, 4).unwrap();
        assert!((cmp.r_transform_cumulants[0] - 3.0).abs() < 1e-15);
        assert!((cmp.r_transform_cumulants[1] - 2.0 * (1.0 + 2.25)).abs() < 1e-14);
        assert!((cmp.limit_cumulants[1] - 4.5).abs() < 1e-14);
        assert!(!cmp.agree);
        assert!((cmp.c2_gap - 2.0).abs() < 1e-12);
        // the gap is λ for every t, including t = 0
        assert!((free_poisson_comparison(0.7, 0.0, 100, 4).unwrap().c2_gap - 0.7).abs() < 1e-15);
    }

    #[test]
    fn lk_values_lie_in_the_lower_half_plane() {
        let spec = FamilySpec::FreeLK { alpha: -0.3, nu: vec![(0.0, 1.0), (2.0, 0.5), (-0.7, 0.2)] };
        for k in 0..50 {
            let t = k as f64 / 50.0;
            let z = c(4.0 * (t - 0.5), -(0.01 + 3.0 * t * t));
            assert!(family_r(&spec, z).unwrap().im <= 0.0);
        }
        let mut last = f64::INFINITY;
        for y in [1e-1, 1e-2, 1e-3] {
            let v = (y * family_r(&spec, c(0.0, -y)).unwrap()).norm();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn stable_validation() {
        assert!(FamilySpec::FreeStable(StableCase::One { alpha: 1.5, theta: -0.3 }).validate().is_ok());
        assert!(FamilySpec::FreeStable(StableCase::One { alpha: 1.5, theta: 0.3 }).validate().is_err());
        assert!(FamilySpec::FreeStable(StableCase::Three { alpha: 0.5, theta: 1.2 }).validate().is_ok());
        assert!(FamilySpec::FreeStable(StableCase::Three { alpha: 0.5, theta: 1.6 }).validate().is_err());
        assert!(FamilySpec::FreeStable(StableCase::Two { a: c(0.0, 1.0), b: -0.2 }).validate().is_ok());
        assert!(FamilySpec::FreeStable(StableCase::Two { a: c(0.0, 1.0), b: -0.5 }).validate().is_err());
        let s = FamilySpec::FreeStable(StableCase::Two { a: c(1.0, 0.5), b: 0.1 });
        assert!(close(family_r(&s, c(0.0, -1.0)).unwrap(), c(1.0, 0.5 - 0.05 * PI), 1e-15));
        assert!(family_moments(&FamilySpec::FreeStable(StableCase::One { alpha: 1.5, theta: -0.2 }), 4).is_err());
        assert!(family_moments(&FamilySpec::Cauchy { loc: 0.0, scale: 1.0 }, 4).is_err());
    }

    #[test]
    fn cauchy_transforms() {
        let sc = FamilySpec::Semicircle { sigma: 1.0 };
        for z in [c(0.5, 1e-3), c(-3.0, 0.2), c(1.0, -2.0), c(10.0, 5.0)] {
            let (g, dg) = family_g(&sc, z).unwrap();
            assert!(close(g * g - z * g + 1.0, c(0.0, 0.0), 1e-12));
            assert!(g.im * z.im < 0.0);
            let h = 1e-6;
            let fd = (family_g(&sc, z + h).unwrap().0 - family_g(&sc, z - h).unwrap().0) / (2.0 * h);
            assert!(close(dg, fd, 1e-6 * (1.0 + dg.norm())));
        }
        let arc = FamilySpec::Arcsine { a: 0.0, b: 2.0 };
        let z = c(2.0, 1e-3);
        let want = 1.0 / (z * (z - 2.0)).sqrt();
        assert!(close(family_g(&arc, z).unwrap().0, want, 1e-12));
        let cau = FamilySpec::Cauchy { loc: 0.0, scale: 1.0 };
        assert!(close(family_g(&cau, c(0.0, 1.0)).unwrap().0, c(0.0, -0.5), 1e-15));
        assert!(close(family_g(&cau, c(0.0, -1.0)).unwrap().0, c(0.0, 0.5), 1e-15));
        let bern = FamilySpec::Bernoulli { p: 0.5, x0: 0.0, x1: 1.0 };
        let z = c(0.0, 2.0);
        assert!(close(family_g(&bern, z).unwrap().0, (z - 0.5) / (z * (z - 1.0)), 1e-15));
    }

    fn circ(vals: &[(f64, f64)]) -> CircleMomentSeq {
        CircleMomentSeq::new(vals.iter().map(|&(a, b)| c(a, b)).collect()).unwrap()
    }

    #[test]
    fn psi_and_sigma_examples() {
        let omega = (I * 0.7).exp();
        let atom = CircleFamilySpec::Atom { omega }.moments(5).unwrap();
        let psi = psi_series(&atom);
        for n in 1..=5 {
            assert!(close(*psi.coeff(n), omega.powi(n as i32), 1e-14));
        }
        let sigma = sigma_series(&atom).unwrap();
        assert!(close(*sigma.coeff(0), 1.0 / omega, 1e-14));
        for k in 1..sigma.coeffs().len() {
            assert!(sigma.coeff(k).norm() < 1e-13);
        }
        let zero = circ(&[(0.0, 0.0); 4]);
        assert!(psi_series(&zero).coeffs().iter().all(|v| v.norm() == 0.0));
        assert_eq!(sigma_series(&zero), Err(Error::ZeroMean));
        let p = 0.3;
        let mix = CircleMomentSeq::from_atoms(&[(c(1.0, 0.0), p), (c(-1.0, 0.0), 1.0 - p)], 4).unwrap();
        let want = [2.0 * p - 1.0, 1.0, 2.0 * p - 1.0, 1.0];
        for (n, w) in want.iter().enumerate() {
            assert!(close(*psi_series(&mix).coeff(n + 1), c(*w, 0.0), 1e-14));
        }
        assert!(close(*sigma_series(&mix).unwrap().coeff(0), c(1.0 / (2.0 * p - 1.0), 0.0), 1e-14));
    }

    #[test]
    fn multiplicative_convolution_examples() {
        let w1 = (I * 0.4).exp();
        let w2 = (I * -1.1).exp();
        let a = CircleFamilySpec::Atom { omega: w1 }.moments(5).unwrap();
        let b = CircleFamilySpec::Atom { omega: w2 }.moments(5).unwrap();
        let ab = mult_convolve(&a, &b, 5).unwrap();
        for n in 1..=5 {
            assert!(close(ab.get(n), (w1 * w2).powi(n as i32), 1e-12));
        }
        let x = circ(&[(0.3, 0.1), (0.2, -0.4), (0.1, 0.1), (-0.2, 0.0)]);
        let y = circ(&[(-0.5, 0.2), (0.3, 0.3), (0.0, -0.1), (0.1, 0.2)]);
        let xy = mult_convolve(&x, &y, 4).unwrap();
        let (a1, a2, b1, b2) = (x.get(1), x.get(2), y.get(1), y.get(2));
        assert!(close(xy.get(1), a1 * b1, 1e-15));
        assert!(close(xy.get(2), a2 * b1 * b1 + a1 * a1 * b2 - a1 * a1 * b1 * b1, 1e-14));
    }

    #[test]
    fn mult_convolve_against_word_moments() {
        // φ((uv)^3) for free unitaries from the mixed-moment machinery, using
        // the circle moments as the marginal moment sequences.
        use crate::cumulants::{mixed_moment, FreeFamilySpec};
        let x = circ(&[(0.3, 0.1), (0.2, -0.4), (0.1, 0.1)]);
        let y = circ(&[(-0.5, 0.2), (0.3, 0.3), (0.0, -0.1)]);
        let cum = |m: &CircleMomentSeq| m2c(&MomentSeq::new(m.values().to_vec()));
        let fam = FreeFamilySpec::new().with("U", cum(&x)).with("V", cum(&y));
        let xy = mult_convolve(&x, &y, 3).unwrap();
        for (n, word) in ["UV", "UVUV", "UVUVUV"].iter().enumerate() {
            let want = mixed_moment(&fam, &word.parse().unwrap()).unwrap();
            assert!(close(xy.get(n + 1), want, 1e-13), "{word}");
        }
    }

    #[test]
    fn mult_lk_sigma_examples() {
        let trivial = CircleFamilySpec::MultLK { alpha: 0.0, nu: vec![] };
        let rot = CircleFamilySpec::MultLK { alpha: 0.8, nu: vec![] };
        let spread = CircleFamilySpec::MultLK { alpha: 0.3, nu: vec![(c(1.0, 0.0), 0.4), ((I * 2.0).exp(), 0.7)] };
        for k in 0..30 {
            let z = 0.9 * (k as f64 / 30.0) * (I * (0.7 * k as f64)).exp();
            assert_eq!(mult_lk_sigma(&trivial, z).unwrap(), c(1.0, 0.0));
            assert!((mult_lk_sigma(&rot, z).unwrap().norm() - 1.0).abs() < 1e-15);
            assert!(mult_lk_sigma(&spread, z).unwrap().norm() >= 1.0);
        }
        assert!(mult_lk_sigma(&spread, c(1.0, 0.0)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn circle_seq(k: usize) -> impl Strategy<Value = CircleMomentSeq> {
            prop::collection::vec((0.1f64..1.0, -1.2f64..1.2), 1..=4)
                .prop_map(move |v| {
                    let total: f64 = v.iter().map(|a| a.0).sum();
                    let atoms: Vec<_> = v.iter().map(|&(w, th)| (Complex64::from_polar(1.0, th), w / total)).collect();
                    CircleMomentSeq::from_atoms(&atoms, k).unwrap()
                })
                .prop_filter("first moment bounded away from 0", |m| m.get(1).norm() > 0.2)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn commutative_associative_with_identity(a in circle_seq(6), b in circle_seq(6), d in circle_seq(6)) {
                let ab = mult_convolve(&a, &b, 6).unwrap();
                let ba = mult_convolve(&b, &a, 6).unwrap();
                let ab_d = mult_convolve(&ab, &d, 6).unwrap();
                let a_bd = mult_convolve(&a, &mult_convolve(&b, &d, 6).unwrap(), 6).unwrap();
                let one = CircleFamilySpec::Atom { omega: c(1.0, 0.0) }.moments(6).unwrap();
                let a1 = mult_convolve(&a, &one, 6).unwrap();
                for n in 1..=6 {
                    prop_assert!(close(ab.get(n), ba.get(n), 1e-10));
                    prop_assert!(close(ab_d.get(n), a_bd.get(n), 1e-10));
                    prop_assert!(close(a1.get(n), a.get(n), 1e-10));
                }
            }
        }
    }
}
