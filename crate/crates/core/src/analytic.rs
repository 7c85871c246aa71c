//! Cauchy transforms, K/R inversion, additive free convolution through
//! subordination, density recovery and the eigenvector transition kernel.
//!
//! `μ ⊞ ν` is computed from the subordination pair `(ω₁, ω₂)`:
//!
//! ```text
//! G_μ(ω₁) = G_ν(ω₂) = g,      ω₁ + ω₂ = ζ + 1/g,
//! ```
//!
//! which is `K_μ(g) + K_ν(g) - 1/g = ζ` with `K_μ(g) = ω₁`, `K_ν(g) = ω₂`.
//! The pair is found by damped Newton, continued down from a height where
//! `ω₁ ≈ ζ - m₁(ν)` and `ω₂ ≈ ζ - m₁(μ)`. `ω₁` is the subordination
//! function `F` with `G_μ ∘ F = G_{μ⊞ν}`. If Newton cannot follow the path,
//! the solver falls back to the fixed-point iteration
//! `ω₁ ← ζ + h_ν(ζ + h_μ(ω₁))`, `h = 1/G - id`, which converges on `ℂ⁺`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Diagnostic, Error, Result};
use crate::families::{family_g, family_moments, family_support, FamilySpec};
use crate::measures::{moments_of, AtomicMeasure, GridDensity, MomentSeq, UniformGrid};

/// Lowest `Im ζ` accepted by [`conv_g`] and friends.
pub const IM_FLOOR: f64 = 1e-4;
pub const CONV_RESIDUAL_TOL: f64 = 1e-10;
pub const K_RESIDUAL_TOL: f64 = 1e-12;
pub const MIN_EPSILON: f64 = 1e-6;
const MAX_NEWTON: usize = 60;
const MAX_FIXED_POINT: usize = 400_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Repr {
    Atomic(AtomicMeasure),
    Grid(GridDensity),
    Family(FamilySpec),
}

/// A measure that can evaluate its Cauchy transform, with support bounds
/// cached for continuation heights.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureHandle {
    repr: Repr,
    bounds: (f64, f64),
    center: f64,
}

impl MeasureHandle {
    pub fn atomic(m: AtomicMeasure) -> Self {
        let lo = m.atoms().first().map(|a| a.0).unwrap_or(0.0);
        let hi = m.atoms().last().map(|a| a.0).unwrap_or(0.0);
        let center = m.mean();
        Self { repr: Repr::Atomic(m), bounds: (lo, hi), center }
    }

    pub fn grid(d: GridDensity) -> Self {
        let lo = d.x0();
        let hi = d.x(d.len() - 1);
        let mass = d.mass();
        let center = if mass > 0.0 { d.integrate(|x| x) / mass } else { 0.5 * (lo + hi) };
        Self { repr: Repr::Grid(d), bounds: (lo, hi), center }
    }

    /// Families with a closed-form Cauchy transform: semicircle, arcsine,
    /// Bernoulli, Dirac and Cauchy.
    pub fn family(spec: FamilySpec) -> Result<Self> {
        family_g(&spec, Complex64::new(0.0, 1.0))?;
        let (bounds, center) = match spec {
            FamilySpec::Cauchy { loc, scale } => ((loc - scale, loc + scale), loc),
            _ => {
                let b = family_support(&spec).expect("closed-form families are compactly supported");
                (b, family_moments(&spec, 1)?.get(1))
            }
        };
        Ok(Self { repr: Repr::Family(spec), bounds, center })
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Mean, or the location parameter for the Cauchy law.
    pub fn center(&self) -> f64 {
        self.center
    }

    fn scale(&self) -> f64 {
        self.bounds.0.abs().max(self.bounds.1.abs()).max(self.bounds.1 - self.bounds.0)
    }

    pub fn moments(&self, order: usize) -> Result<MomentSeq> {
        match &self.repr {
            Repr::Atomic(m) => moments_of(m, order),
            Repr::Grid(d) => moments_of(d, order),
            Repr::Family(s) => family_moments(s, order),
        }
    }

    /// `(G(ζ), G'(ζ))`.
    pub fn g_and_derivative(&self, zeta: Complex64) -> Result<(Complex64, Complex64)> {
        if zeta.im == 0.0 || !zeta.re.is_finite() || !zeta.im.is_finite() {
            return Err(Error::InvalidArgument(format!("Cauchy transform needs ζ off the real axis, got {zeta}")));
        }
        match &self.repr {
            Repr::Atomic(m) => {
                let mut g = Complex64::new(0.0, 0.0);
                let mut dg = Complex64::new(0.0, 0.0);
                for &(x, w) in m.atoms() {
                    let u = 1.0 / (zeta - x);
                    g += w * u;
                    dg -= w * u * u;
                }
                Ok((g, dg))
            }
            Repr::Grid(d) => {
                if zeta.im < 0.0 {
                    let (g, dg) = grid_g(d, zeta.conj());
                    Ok((g.conj(), dg.conj()))
                } else {
                    Ok(grid_g(d, zeta))
                }
            }
            Repr::Family(s) => family_g(s, zeta),
        }
    }
}

/// Exact transform of the piecewise-linear interpolant of a grid density,
/// normalized to mass one. `Im ζ > 0`.
fn grid_g(d: &GridDensity, zeta: Complex64) -> (Complex64, Complex64) {
    let h = d.step();
    let ps = d.ps();
    let mut g = Complex64::new(0.0, 0.0);
    let mut dg = Complex64::new(0.0, 0.0);
    for i in 0..ps.len().saturating_sub(1) {
        let (p0, p1) = (ps[i], ps[i + 1]);
        if p0 == 0.0 && p1 == 0.0 {
            continue;
        }
        let s = (p1 - p0) / h;
        let xm = d.x(i) + 0.5 * h;
        let um = zeta - xm;
        let r = 0.5 * h / um;
        if r.norm() < 0.1 {
            // expand 1/(u_m - τ) in τ/u_m over τ ∈ [-h/2, h/2]
            let pm = 0.5 * (p0 + p1);
            let r2 = r * r;
            let mut rk = r; // r^{k+1} for even k
            let mut sg = Complex64::new(0.0, 0.0);
            let mut sd = Complex64::new(0.0, 0.0);
            for k in (0..12).step_by(2) {
                let kf = k as f64;
                // even k: p_m 2 (h/2)^{k+1} / ((k+1) u^{k+1})
                sg += pm * 2.0 * rk / (kf + 1.0);
                // odd k+1: s 2 (h/2)^{k+3} / ((k+3) u^{k+2})
                sg += s * 2.0 * rk * r * (0.5 * h) / (kf + 3.0);
                // derivative: -(k+1) τ^k / u^{k+2}
                sd -= pm * 2.0 * rk / um;
                sd -= s * 2.0 * (kf + 2.0) * rk * r * (0.5 * h) / ((kf + 3.0) * um);
                rk *= r2;
            }
            g += sg;
            dg += sd;
        } else {
            let u0 = zeta - d.x(i);
            let u1 = zeta - d.x(i + 1);
            let a = p0 + s * u0;
            let l = (u0 / u1).ln();
            g += a * l - s * h;
            dg -= a * (1.0 / u1 - 1.0 / u0) - s * l;
        }
    }
    let mass = d.mass();
    (g / mass, dg / mass)
}

pub fn cauchy_g(h: &MeasureHandle, zeta: Complex64) -> Result<Complex64> {
    Ok(h.g_and_derivative(zeta)?.0)
}

/// Truncated cone `{ |Re z| < α |Im z|, Im z < 0, |z| <= β }` where
/// K-inversion is trusted.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for DomainParams {
    fn default() -> Self {
        Self { alpha: 4.0, beta: 0.5 }
    }
}

impl DomainParams {
    pub fn contains(&self, z: Complex64) -> bool {
        z.im < 0.0 && z.re.abs() < self.alpha * z.im.abs() && z.norm() <= self.beta
    }
}

fn newton_g_inverse(h: &MeasureHandle, target: Complex64, mut w: Complex64) -> (Complex64, f64, usize) {
    let mut res = f64::INFINITY;
    let mut it = 0;
    while it < MAX_NEWTON {
        it += 1;
        let Ok((g, dg)) = h.g_and_derivative(w) else { break };
        let e = g - target;
        res = e.norm();
        if res <= 0.1 * K_RESIDUAL_TOL || dg.norm() == 0.0 {
            break;
        }
        let step = e / dg;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = w - lambda * step;
            if cand.im > 0.0 {
                if let Ok((gc, _)) = h.g_and_derivative(cand) {
                    if (gc - target).norm() < res {
                        w = cand;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if let Ok((g, _)) = h.g_and_derivative(w) {
        res = (g - target).norm();
    }
    (w, res, it)
}

/// `K(z)`: the `w ∈ ℂ⁺` with `G(w) = z`, continued from `w ≈ 1/z + m₁`
/// along the ray through `z`.
pub fn k_eval(h: &MeasureHandle, z: Complex64, dom: &DomainParams) -> Result<Complex64> {
    if !dom.contains(z) {
        return Err(Error::InvalidArgument(format!(
            "z={z} lies outside the cone |Re z| < {} |Im z|, Im z < 0, |z| <= {}",
            dom.alpha, dom.beta
        )));
    }
    let height = 10.0 * (1.0 + h.scale() + (h.center()).abs());
    let mut s = (1.0 / (height * z.norm())).min(1.0);
    let mut w = 1.0 / (s * z) + h.center();
    let mut total = 0;
    let mut ratio = 2.0f64;
    loop {
        let (cand, res, it) = newton_g_inverse(h, s * z, w);
        total += it;
        if res <= K_RESIDUAL_TOL && cand.im > 0.0 {
            w = cand;
            if s >= 1.0 {
                return Ok(w);
            }
            s = (s * ratio).min(1.0);
            ratio = (ratio * 1.5).min(2.0);
        } else {
            // retreat and take a shorter step
            s /= ratio;
            ratio = ratio.sqrt();
            if ratio < 1.0 + 1e-6 {
                return Err(Error::NonConvergence(Diagnostic {
                    solver: "k_eval".into(),
                    query: [z.re, z.im],
                    residual: res,
                    iterations: total,
                    flags: vec!["continuation stalled".into()],
                }));
            }
            s = (s * ratio).min(1.0);
        }
    }
}

/// `R(z) = K(z) - 1/z`.
pub fn r_eval(h: &MeasureHandle, z: Complex64, dom: &DomainParams) -> Result<Complex64> {
    Ok(k_eval(h, z, dom)? - 1.0 / z)
}

/// Full output of the subordination solve at one point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvSolution {
    pub zeta: Complex64,
    /// `G_{μ⊞ν}(ζ)`.
    pub g: Complex64,
    pub omega1: Complex64,
    pub omega2: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub flags: Vec<String>,
}

struct Pair<'a> {
    a: &'a MeasureHandle,
    b: &'a MeasureHandle,
}

impl Pair<'_> {
    /// Residuals `(E₁, E₂)` and `g`.
    fn residual(&self, zeta: Complex64, w1: Complex64, w2: Complex64) -> Option<(Complex64, Complex64, Complex64, Complex64, Complex64)> {
        let (ga, dga) = self.a.g_and_derivative(w1).ok()?;
        let (gb, dgb) = self.b.g_and_derivative(w2).ok()?;
        let e1 = ga - gb;
        let e2 = w1 + w2 - zeta - 1.0 / ga;
        Some((e1, e2, ga, dga, dgb))
    }

    fn norm(e1: Complex64, e2: Complex64) -> f64 {
        e1.norm().max(e2.norm())
    }

    fn newton(&self, zeta: Complex64, mut w1: Complex64, mut w2: Complex64) -> (Complex64, Complex64, f64, usize) {
        let floor = zeta.im * (1.0 - 1e-9) - 1e-12;
        let Some((mut e1, mut e2, mut ga, mut dga, mut dgb)) = self.residual(zeta, w1, w2) else {
            return (w1, w2, f64::INFINITY, 0);
        };
        let mut res = Self::norm(e1, e2);
        let mut it = 0;
        while it < MAX_NEWTON && res > 1e-15 * (1.0 + zeta.norm()) {
            it += 1;
            let j21 = 1.0 + dga / (ga * ga);
            let det = dga + dgb * j21;
            if det.norm() == 0.0 || !det.is_finite() {
                break;
            }
            let d1 = (e1 + dgb * e2) / det;
            let d2 = (dga * e2 - j21 * e1) / det;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let (c1, c2) = (w1 - lambda * d1, w2 - lambda * d2);
                if c1.im > floor && c2.im > floor {
                    if let Some(r) = self.residual(zeta, c1, c2) {
                        let rn = Self::norm(r.0, r.1);
                        if rn < res {
                            (w1, w2) = (c1, c2);
                            (e1, e2, ga, dga, dgb) = r;
                            res = rn;
                            accepted = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (w1, w2, res, it)
    }

    fn fixed_point(&self, zeta: Complex64, mut w1: Complex64) -> Option<(Complex64, Complex64, usize)> {
        let h = |m: &MeasureHandle, w: Complex64| -> Option<Complex64> { Some(1.0 / m.g_and_derivative(w).ok()?.0 - w) };
        for it in 1..=MAX_FIXED_POINT {
            let w2 = zeta + h(self.a, w1)?;
            let next = zeta + h(self.b, w2)?;
            let done = (next - w1).norm() <= 1e-15 * (1.0 + next.norm());
            w1 = next;
            if done {
                let w2 = zeta + h(self.a, w1)?;
                return Some((w1, w2, it));
            }
        }
        let w2 = zeta + h(self.a, w1)?;
        Some((w1, w2, MAX_FIXED_POINT))
    }
}

fn check_query(zeta: Complex64) -> Result<()> {
    if !(zeta.im >= IM_FLOOR) || !zeta.re.is_finite() || !zeta.im.is_finite() {
        return Err(Error::InvalidArgument(format!("query ζ={zeta} must satisfy Im ζ >= {IM_FLOOR}")));
    }
    Ok(())
}

/// Solves the subordination system at `ζ ∈ ℂ⁺`, `Im ζ >= 1e-4`.
pub fn conv_solve(a: &MeasureHandle, b: &MeasureHandle, zeta: Complex64) -> Result<ConvSolution> {
    check_query(zeta)?;
    let pair = Pair { a, b };
    let top = (10.0f64).max(10.0 * (a.scale() + b.scale() + a.center().abs() + b.center().abs()));
    let mut flags = Vec::new();
    let mut total = 0;

    let mut y = top.max(zeta.im);
    let start = Complex64::new(zeta.re, y);
    let mut w1 = start - b.center();
    let mut w2 = start - a.center();
    let mut factor = 0.5f64;
    let mut continued = true;
    loop {
        let z = Complex64::new(zeta.re, y);
        let (c1, c2, res, it) = pair.newton(z, w1, w2);
        total += it;
        let ok = res <= 1e-3 * CONV_RESIDUAL_TOL * (1.0 + z.norm()) && c1.im >= z.im * (1.0 - 1e-9) && c2.im >= z.im * (1.0 - 1e-9);
        if ok {
            (w1, w2) = (c1, c2);
            if y <= zeta.im {
                break;
            }
            let next = (y * factor).max(zeta.im);
            y = next;
            factor = (factor * factor.sqrt()).max(0.25);
        } else {
            let prev = y / factor;
            factor = factor.sqrt();
            if factor > 0.999 || prev > top * 1.0001 {
                continued = false;
                break;
            }
            y = (prev * factor).max(zeta.im);
        }
    }

    if !continued {
        flags.push("fixed-point fallback".into());
        let (f1, _, it) = pair.fixed_point(zeta, zeta - b.center()).ok_or_else(|| non_convergence(zeta, f64::NAN, total, &flags))?;
        total += it;
        let w2_guess = zeta + 1.0 / a.g_and_derivative(f1)?.0 - f1;
        let (c1, c2, _, it) = pair.newton(zeta, f1, w2_guess);
        total += it;
        (w1, w2) = (c1, c2);
    }

    let (e1, e2, ga, _, _) = pair.residual(zeta, w1, w2).ok_or_else(|| non_convergence(zeta, f64::NAN, total, &flags))?;
    let residual = Pair::norm(e1, e2);
    if !(residual <= CONV_RESIDUAL_TOL) {
        return Err(non_convergence(zeta, residual, total, &flags));
    }
    if ga.im > 0.0 {
        flags.push("branch: Im g > 0".into());
        return Err(non_convergence(zeta, residual, total, &flags));
    }
    Ok(ConvSolution { zeta, g: b.g_and_derivative(w2)?.0, omega1: w1, omega2: w2, residual, iterations: total, flags })
}

fn non_convergence(zeta: Complex64, residual: f64, iterations: usize, flags: &[String]) -> Error {
    Error::NonConvergence(Diagnostic {
        solver: "conv_g".into(),
        query: [zeta.re, zeta.im],
        residual,
        iterations,
        flags: flags.to_vec(),
    })
}

/// `G_{a⊞b}(ζ)`.
pub fn conv_g(a: &MeasureHandle, b: &MeasureHandle, zeta: Complex64) -> Result<Complex64> {
    Ok(conv_solve(a, b, zeta)?.g)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SubordinationResult {
    pub zeta: Complex64,
    pub f: Complex64,
    /// `|G_a(F(ζ)) - G_{a⊞b}(ζ)|`.
    pub residual: f64,
    pub iterations: usize,
    pub flags: Vec<String>,
}

/// The subordination function `F` with `G_a ∘ F = G_{a⊞b}`.
pub fn subordination_f(a: &MeasureHandle, b: &MeasureHandle, zeta: Complex64) -> Result<SubordinationResult> {
    let sol = conv_solve(a, b, zeta)?;
    let residual = (cauchy_g(a, sol.omega1)? - sol.g).norm();
    let mut flags = sol.flags;
    if sol.omega1.im < zeta.im - 1e-9 {
        flags.push("Im F < Im ζ".into());
    }
    Ok(SubordinationResult { zeta, f: sol.omega1, residual, iterations: sol.iterations, flags })
}

/// Evaluation heights for Stieltjes inversion, extrapolated to 0.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpsilonSchedule {
    eps: Vec<f64>,
    weights: Vec<f64>,
}

impl EpsilonSchedule {
    /// Strictly decreasing heights, each at least `1e-6`.
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::InvalidArgument("empty ε schedule".into()));
        }
        if eps.iter().any(|&e| !(e >= MIN_EPSILON) || !e.is_finite()) || eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(format!("ε schedule {eps:?} must be strictly decreasing and >= {MIN_EPSILON}")));
        }
        // Lagrange weights L_j(0): the polynomial through (ε_j, p_j) evaluated at 0
        let weights = (0..eps.len())
            .map(|j| {
                (0..eps.len())
                    .filter(|&k| k != j)
                    .map(|k| eps[k] / (eps[k] - eps[j]))
                    .product()
            })
            .collect();
        Ok(Self { eps, weights })
    }

    /// `{4h, 2h, h}` with `h = 2·step`.
    pub fn for_step(step: f64) -> Result<Self> {
        Self::from_base(2.0 * step)
    }

    /// `{4e, 2e, e}`.
    pub fn from_base(e: f64) -> Result<Self> {
        Self::new(vec![4.0 * e, 2.0 * e, e])
    }

    pub fn heights(&self) -> &[f64] {
        &self.eps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StieltjesResult {
    pub density: GridDensity,
    /// `1 - mass` of the recovered density on the grid.
    pub mass_defect: f64,
    /// Number of grid nodes where the extrapolated value was negative.
    pub clipped: usize,
}

/// `p(x) = -(1/π) Im G(x + iε)`, extrapolated to `ε = 0` and clipped at 0.
pub fn stieltjes_density<F>(g: F, grid: &UniformGrid, schedule: &EpsilonSchedule) -> Result<StieltjesResult>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let raw: Vec<f64> = grid
        .points()
        .into_par_iter()
        .map(|x| {
            let mut p = 0.0;
            for (&e, &w) in schedule.eps.iter().zip(&schedule.weights) {
                p += w * (-g(Complex64::new(x, e))?.im / std::f64::consts::PI);
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let clipped = raw.iter().filter(|&&p| p < 0.0).count();
    let ps: Vec<f64> = raw.into_iter().map(|p| p.max(0.0)).collect();
    let density = GridDensity::with_mass_tolerance(grid.start, grid.step(), ps, 1.0)?;
    let mass_defect = 1.0 - density.mass();
    Ok(StieltjesResult { density, mass_defect, clipped })
}

/// Density of `a ⊞ b` on `grid` by Stieltjes inversion of [`conv_g`].
pub fn conv_density(a: &MeasureHandle, b: &MeasureHandle, grid: &UniformGrid, schedule: &EpsilonSchedule) -> Result<StieltjesResult> {
    stieltjes_density(|z| conv_g(a, b, z), grid, schedule)
}

/// `k(x, du)`: Stieltjes inversion of `ζ ↦ 1/(F(ζ) - x)`.
pub fn markov_kernel_density(
    a: &MeasureHandle,
    b: &MeasureHandle,
    x: f64,
    grid: &UniformGrid,
    schedule: &EpsilonSchedule,
) -> Result<StieltjesResult> {
    let (lo, hi) = a.bounds();
    let in_support = match a.repr() {
        Repr::Atomic(m) => m.atoms().iter().any(|&(t, _)| (t - x).abs() <= 1e-9),
        _ => x >= lo - 1e-9 && x <= hi + 1e-9,
    };
    if !in_support {
        return Err(Error::InvalidArgument(format!("x={x} is not in the support of the first measure")));
    }
    stieltjes_density(|z| Ok(1.0 / (conv_solve(a, b, z)?.omega1 - x)), grid, schedule)
}
