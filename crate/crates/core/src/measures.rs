//! Concrete probability measures on the line and on the unit circle.
//!
//! [`AtomicMeasure`] holds exact atoms (empirical spectra, Bernoulli laws),
//! [`GridDensity`] holds sampled densities such as those recovered by
//! Stieltjes inversion. Both expose moments and distribution functions
//! through [`RealMeasure`].
//!
//! Classical cumulants follow the normalization
//! `log ∫ e^{itx} μ(dx) = Σ σ_n (it)^n`, i.e. `σ_n = κ_n / n!` where `κ_n`
//! is the usual cumulant.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::TruncatedSeries;

/// Atoms closer than this are merged on construction.
pub const ATOM_MERGE_TOL: f64 = 1e-9;
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
pub const DEFAULT_MASS_TOL: f64 = 0.01;
/// Eigenvalue slack for the Hankel positivity test.
pub const HANKEL_SLACK: f64 = 1e-10;
pub const MAX_CONVOLUTION_ATOMS: usize = 1_000_000;

/// Common interface of the real-line measure representations.
pub trait RealMeasure {
    fn moments(&self, order: usize) -> Result<MomentSeq>;
    /// `μ((-∞, x])`.
    fn cdf(&self, x: f64) -> f64;
    /// `μ((-∞, x))`.
    fn cdf_left(&self, x: f64) -> f64;
    /// Points between which the distribution function is affine.
    fn breakpoints(&self) -> Vec<f64>;
    fn support(&self) -> (f64, f64);
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    /// Validates and merges `(location, weight)` pairs.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidMeasure(format!("bad atom ({x}, {w})")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms: merge_atoms(atoms) })
    }

    /// Uniform weights on the given points (an empirical distribution).
    pub fn empirical(points: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidMeasure("no points".into()));
        }
        let w = 1.0 / points.len() as f64;
        let atoms: Vec<_> = points.iter().map(|&x| (x, w)).collect();
        for &(x, _) in &atoms {
            if !x.is_finite() {
                return Err(Error::InvalidMeasure(format!("non-finite point {x}")));
            }
        }
        Ok(Self { atoms: merge_atoms(atoms) })
    }

    pub fn dirac(a: f64) -> Self {
        Self { atoms: vec![(a, 1.0)] }
    }

    /// `(1-p) δ_{x0} + p δ_{x1}`.
    pub fn bernoulli(p: f64, x0: f64, x1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidMeasure(format!("bernoulli p={p} outside [0,1]")));
        }
        let atoms: Vec<_> = [(x0, 1.0 - p), (x1, p)].into_iter().filter(|a| a.1 > 0.0).collect();
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, w)| x * w).sum()
    }

    /// Image under `x -> s x + t`.
    pub fn affine_map(&self, s: f64, t: f64) -> Self {
        let atoms = self.atoms.iter().map(|&(x, w)| (s * x + t, w)).collect();
        Self { atoms: merge_atoms(atoms) }
    }

    /// Image of the product measure under `(x, y) -> x + y`.
    pub fn classical_convolve(&self, other: &AtomicMeasure) -> Result<Self> {
        let size = self.len().saturating_mul(other.len());
        if size > MAX_CONVOLUTION_ATOMS {
            return Err(Error::Range(format!(
                "classical convolution would create {size} atoms (limit {MAX_CONVOLUTION_ATOMS})"
            )));
        }
        let mut atoms = Vec::with_capacity(size);
        for &(x, w) in &self.atoms {
            for &(y, v) in &other.atoms {
                atoms.push((x + y, w * v));
            }
        }
        Ok(Self { atoms: merge_atoms(atoms) })
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * f(x)).sum()
    }
}

fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    let mut group_start = f64::NEG_INFINITY;
    let mut sum_xw = 0.0;
    for (x, w) in atoms {
        match out.last_mut() {
            Some(last) if x - group_start <= ATOM_MERGE_TOL => {
                sum_xw += x * w;
                last.1 += w;
                last.0 = sum_xw / last.1;
            }
            _ => {
                group_start = x;
                sum_xw = x * w;
                out.push((x, w));
            }
        }
    }
    out
}

impl RealMeasure for AtomicMeasure {
    fn moments(&self, order: usize) -> Result<MomentSeq> {
        if order < 1 {
            return Err(Error::InvalidArgument("moment order must be at least 1".into()));
        }
        let mut m = vec![0.0; order];
        for &(x, w) in &self.atoms {
            let mut p = w;
            for mk in m.iter_mut() {
                p *= x;
                *mk += p;
            }
        }
        Ok(MomentSeq::new(m))
    }

    fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 <= x);
        self.atoms[..k].iter().map(|a| a.1).sum::<f64>().min(1.0)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 < x);
        self.atoms[..k].iter().map(|a| a.1).sum::<f64>().min(1.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.0).collect()
    }

    fn support(&self) -> (f64, f64) {
        (self.atoms[0].0, self.atoms[self.atoms.len() - 1].0)
    }
}

/// Uniform grid `start, start + step, ..., end` with `n >= 2` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub end: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 || !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidArgument(format!("bad grid {start}:{end}:{n}")));
        }
        Ok(Self { start, end, n })
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }
}

impl std::str::FromStr for UniformGrid {
    type Err = Error;

    /// Parses `a:b:n`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("grid must look like a:b:n, got {s:?}")));
        }
        let f = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}")));
        let n = parts[2].trim().parse::<usize>().map_err(|e| Error::Parse(format!("{:?}: {e}", parts[2])))?;
        Self::new(f(parts[0])?, f(parts[1])?, n)
    }
}

/// A density sampled on a uniform grid, integrated by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    x0: f64,
    step: f64,
    ps: Vec<f64>,
    mass_tolerance: f64,
}

impl GridDensity {
    pub fn new(x0: f64, step: f64, ps: Vec<f64>) -> Result<Self> {
        Self::with_mass_tolerance(x0, step, ps, DEFAULT_MASS_TOL)
    }

    /// Accepts total mass within `1 ± mass_tolerance`.
    pub fn with_mass_tolerance(x0: f64, step: f64, ps: Vec<f64>, mass_tolerance: f64) -> Result<Self> {
        if ps.len() < 2 || !(step > 0.0) || !x0.is_finite() {
            return Err(Error::InvalidMeasure("grid density needs at least two nodes and a positive step".into()));
        }
        if let Some(bad) = ps.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidMeasure(format!("density value {bad} is negative or not finite")));
        }
        let g = Self { x0, step, ps, mass_tolerance };
        let mass = g.mass();
        if (mass - 1.0).abs() > mass_tolerance {
            return Err(Error::InvalidMeasure(format!(
                "trapezoid mass {mass} outside 1 ± {mass_tolerance}"
            )));
        }
        Ok(g)
    }

    /// Samples a density function on a grid.
    pub fn sample(grid: &UniformGrid, f: impl Fn(f64) -> f64, mass_tolerance: f64) -> Result<Self> {
        Self::with_mass_tolerance(grid.start, grid.step(), grid.points().into_iter().map(f).collect(), mass_tolerance)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn mass_tolerance(&self) -> f64 {
        self.mass_tolerance
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.ps.len()).map(|i| self.x(i)).collect()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.step
    }

    pub fn len(&self) -> usize {
        self.ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ps.is_empty()
    }

    pub fn grid(&self) -> UniformGrid {
        UniformGrid { start: self.x0, end: self.x(self.len() - 1), n: self.len() }
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.ps.len() {
            0.5 * self.step
        } else {
            self.step
        }
    }

    /// `∫ f(x) p(x) dx` by the trapezoid rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        (0..self.len()).map(|i| self.trapezoid_weight(i) * self.ps[i] * f(self.x(i))).sum()
    }

    pub fn mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    /// Mass of `[a, b]` with the density linearly interpolated between nodes.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.raw_cumulative(b) - self.raw_cumulative(a)
    }

    fn cumulative_nodes(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        c.push(0.0);
        for w in self.ps.windows(2) {
            acc += 0.5 * self.step * (w[0] + w[1]);
            c.push(acc);
        }
        c
    }

    fn raw_cumulative(&self, x: f64) -> f64 {
        let last = self.x(self.len() - 1);
        let c = self.cumulative_nodes();
        if x <= self.x0 {
            return 0.0;
        }
        if x >= last {
            return c[c.len() - 1];
        }
        let u = (x - self.x0) / self.step;
        let i = (u.floor() as usize).min(self.len() - 2);
        let t = x - self.x(i);
        // exact integral of the linear interpolant over [x_i, x]
        let slope = (self.ps[i + 1] - self.ps[i]) / self.step;
        c[i] + self.ps[i] * t + 0.5 * slope * t * t
    }

    /// Image under `x -> s x + t` (`s != 0`).
    pub fn affine_map(&self, s: f64, t: f64) -> Result<Self> {
        if s == 0.0 {
            return Err(Error::InvalidArgument("a density has no image under a constant map".into()));
        }
        let mut ps: Vec<f64> = self.ps.iter().map(|p| p / s.abs()).collect();
        let mut x0 = s * self.x0 + t;
        if s < 0.0 {
            ps.reverse();
            x0 = s * self.x(self.len() - 1) + t;
        }
        Ok(Self { x0, step: self.step * s.abs(), ps, mass_tolerance: self.mass_tolerance })
    }
}

impl RealMeasure for GridDensity {
    fn moments(&self, order: usize) -> Result<MomentSeq> {
        if order < 1 {
            return Err(Error::InvalidArgument("moment order must be at least 1".into()));
        }
        Ok(MomentSeq::new((1..=order).map(|n| self.integrate(|x| x.powi(n as i32))).collect()))
    }

    /// Piecewise-linear in `x` between nodes, normalized by the trapezoid mass.
    fn cdf(&self, x: f64) -> f64 {
        let c = self.cumulative_nodes();
        let total = c[c.len() - 1];
        if total <= 0.0 {
            return 0.0;
        }
        let last = self.x(self.len() - 1);
        if x <= self.x0 {
            return 0.0;
        }
        if x >= last {
            return 1.0;
        }
        let u = (x - self.x0) / self.step;
        let i = (u.floor() as usize).min(self.len() - 2);
        let t = (x - self.x(i)) / self.step;
        ((c[i] + t * (c[i + 1] - c[i])) / total).clamp(0.0, 1.0)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.xs()
    }

    fn support(&self) -> (f64, f64) {
        (self.x0, self.x(self.len() - 1))
    }
}

/// Moments `m_1..m_K` (with `m_0 = 1` implicit).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeq<S = f64> {
    m: Vec<S>,
}

impl<S: Scalar> MomentSeq<S> {
    pub fn new(m: Vec<S>) -> Self {
        Self { m }
    }

    pub fn order(&self) -> usize {
        self.m.len()
    }

    /// `m_n`, with `m_0 = 1`.
    pub fn get(&self, n: usize) -> S {
        if n == 0 {
            S::one()
        } else {
            self.m[n - 1].clone()
        }
    }

    pub fn values(&self) -> &[S] {
        &self.m
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self { m: self.m[..order.min(self.m.len())].to_vec() }
    }

    /// Moments of `sX + t`: `m_n' = Σ_k C(n,k) s^k t^{n-k} m_k`.
    pub fn affine(&self, s: &S, t: &S) -> Self {
        let k = self.order();
        let mut out = Vec::with_capacity(k);
        for n in 1..=k {
            let mut acc = S::zero();
            let mut binom = S::one();
            for j in 0..=n {
                if j > 0 {
                    binom = binom * S::from_i64((n - j + 1) as i64) / S::from_i64(j as i64);
                }
                acc = acc + binom.clone() * pow(s, j) * pow(t, n - j) * self.get(j);
            }
            out.push(acc);
        }
        Self { m: out }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> MomentSeq<T> {
        MomentSeq { m: self.m.iter().map(f).collect() }
    }
}

pub(crate) fn pow<S: Scalar>(x: &S, n: usize) -> S {
    let mut acc = S::one();
    for _ in 0..n {
        acc = acc * x.clone();
    }
    acc
}

/// Complex moments `m_n = ∫ ξ^n dμ(ξ)` of a measure on the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleMomentSeq {
    m: Vec<Complex64>,
}

impl CircleMomentSeq {
    pub fn new(m: Vec<Complex64>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::InvalidMeasure("need at least one moment".into()));
        }
        if let Some((i, v)) = m.iter().enumerate().find(|(_, v)| !(v.norm() <= 1.0 + 1e-12)) {
            return Err(Error::InvalidMeasure(format!("|m_{}| = {} exceeds 1", i + 1, v.norm())));
        }
        Ok(Self { m })
    }

    /// Moments of `Σ w_j δ_{ω_j}` on the circle.
    pub fn from_atoms(atoms: &[(Complex64, f64)], order: usize) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL || atoms.iter().any(|a| a.1 <= 0.0) {
            return Err(Error::InvalidMeasure("circle atoms need positive weights summing to 1".into()));
        }
        if let Some(a) = atoms.iter().find(|a| (a.0.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidMeasure(format!("atom {} is not on the unit circle", a.0)));
        }
        let m = (1..=order)
            .map(|n| atoms.iter().map(|&(z, w)| z.powu(n as u32) * w).sum())
            .collect();
        Self::new(m)
    }

    pub fn order(&self) -> usize {
        self.m.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.m
    }

    pub fn get(&self, n: usize) -> Complex64 {
        if n == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            self.m[n - 1]
        }
    }
}

pub fn moments_of(measure: &dyn RealMeasure, order: usize) -> Result<MomentSeq> {
    measure.moments(order)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HankelReport {
    pub psd: bool,
    /// Smallest eigenvalue of `[m_{i+j}]_{0 <= i,j <= K/2}`.
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of the `x²`-localizing matrix `[m_{i+j+2}]`, when defined.
    pub shifted_min_eigenvalue: Option<f64>,
}

/// Positive-semidefiniteness of the Hankel moment matrix (a necessary
/// condition for `m` to come from a probability measure on the line),
/// together with the `x²`-localizing matrix `[m_{i+j+2}]`.
pub fn hankel_psd(m: &MomentSeq) -> Result<HankelReport> {
    if m.order() < 2 {
        return Err(Error::InvalidArgument("Hankel test needs at least two moments".into()));
    }
    let r = m.order() / 2;
    let min_eig = |dim: usize, shift: usize| -> f64 {
        let h = DMatrix::from_fn(dim, dim, |i, j| m.get(i + j + shift));
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let main = min_eig(r + 1, 0);
    let shifted = (r >= 1 && 2 * (r - 1) + 2 <= m.order()).then(|| min_eig(r, 2));
    let psd = main >= -HANKEL_SLACK && shifted.is_none_or(|s| s >= -HANKEL_SLACK);
    Ok(HankelReport { psd, min_eigenvalue: main, shifted_min_eigenvalue: shifted })
}

/// `σ_1..σ_K` with `log(1 + Σ m_n u^n / n!) = Σ σ_n u^n`.
pub fn classical_cumulants<S: Scalar>(m: &MomentSeq<S>) -> Result<Vec<S>> {
    let k = m.order();
    let mut coeffs = Vec::with_capacity(k + 1);
    coeffs.push(S::one());
    let mut fact = S::one();
    for n in 1..=k {
        fact = fact * S::from_i64(n as i64);
        coeffs.push(m.get(n) / fact.clone());
    }
    let log = TruncatedSeries::new(coeffs)?.log()?;
    Ok(log.into_coeffs().into_iter().skip(1).collect())
}

/// Usual cumulants `κ_n = n! σ_n`.
pub fn kappa_from_sigma<S: Scalar>(sigma: &[S]) -> Vec<S> {
    let mut fact = S::one();
    sigma
        .iter()
        .enumerate()
        .map(|(i, s)| {
            fact = fact.clone() * S::from_i64(i as i64 + 1);
            s.clone() * fact.clone()
        })
        .collect()
}

pub fn classical_convolve(a: &AtomicMeasure, b: &AtomicMeasure) -> Result<AtomicMeasure> {
    a.classical_convolve(b)
}

/// `sup_x |F_a(x) - F_b(x)|`, evaluated at both one-sided limits of every
/// breakpoint of either distribution function.
pub fn kolmogorov_distance(a: &dyn RealMeasure, b: &dyn RealMeasure) -> f64 {
    kolmogorov_distance_with_slack(a, b, 0.0)
}

/// Kolmogorov distance that forgives horizontal displacements up to
/// `slack`: the smallest `ε` with `F_a(x - s) - ε <= F_b(x) <= F_a(x + s) + ε`.
/// With `slack = 0` this is the Kolmogorov distance; a small positive
/// slack absorbs eigenvalue round-off around exact atoms.
pub fn kolmogorov_distance_with_slack(a: &dyn RealMeasure, b: &dyn RealMeasure, slack: f64) -> f64 {
    let bp_a = a.breakpoints();
    let bp_b = b.breakpoints();
    let mut best: f64 = 0.0;
    // F_b(x) - F_a(x + s): breakpoints of b and of a shifted by -s
    for &x in bp_b.iter().chain(bp_a.iter().map(|y| y - slack).collect::<Vec<_>>().iter()) {
        best = best.max(b.cdf(x) - a.cdf(x + slack));
        best = best.max(b.cdf_left(x) - a.cdf_left(x + slack));
    }
    // F_a(x - s) - F_b(x): breakpoints of b and of a shifted by +s
    for &x in bp_b.iter().chain(bp_a.iter().map(|y| y + slack).collect::<Vec<_>>().iter()) {
        best = best.max(a.cdf(x - slack) - b.cdf(x));
        best = best.max(a.cdf_left(x - slack) - b.cdf_left(x));
    }
    best.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn bern() -> AtomicMeasure {
        AtomicMeasure::bernoulli(0.5, 0.0, 1.0).unwrap()
    }

    fn arcsine_density(x: f64) -> f64 {
        if x <= 0.0 || x >= 2.0 {
            0.0
        } else {
            1.0 / (std::f64::consts::PI * (x * (2.0 - x)).sqrt())
        }
    }

    #[test]
    fn construction_merges_and_validates() {
        let m = AtomicMeasure::new(vec![(1.0, 0.25), (0.0, 0.5), (1.0 + 1e-12, 0.25)]).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.atoms()[1].1 - 0.5).abs() < 1e-15);
        assert!(AtomicMeasure::new(vec![(0.0, 0.5)]).is_err());
        assert!(AtomicMeasure::new(vec![(0.0, 1.5), (1.0, -0.5)]).is_err());
        assert!(AtomicMeasure::new(vec![]).is_err());
        assert!(GridDensity::new(0.0, 1.0, vec![0.5, -0.1, 0.5]).is_err());
        assert!(GridDensity::new(0.0, 1.0, vec![0.0, 0.2, 0.0]).is_err());
    }

    #[test]
    fn moments_examples() {
        assert_eq!(AtomicMeasure::dirac(0.0).moments(4).unwrap().values(), &[0.0; 4]);
        assert_eq!(bern().moments(3).unwrap().values(), &[0.5, 0.5, 0.5]);
        assert!(bern().moments(0).is_err());
        // arcsine density on [0,2] after the substitution x = 1 - cos θ is
        // smooth, so a coarse θ-quadrature is an independent oracle
        let oracle = |n: i32| -> f64 {
            let steps = 20000;
            let h = std::f64::consts::PI / steps as f64;
            (0..steps).map(|i| (1.0 - ((i as f64 + 0.5) * h).cos()).powi(n) * h).sum::<f64>()
                / std::f64::consts::PI
        };
        assert!((oracle(1) - 1.0).abs() < 1e-9);
        assert!((oracle(2) - 1.5).abs() < 1e-9);
        assert!((oracle(3) - 2.5).abs() < 1e-9);
        // trapezoid on a grid that excludes the integrable endpoint singularities
        let grid = UniformGrid::new(0.0, 2.0, 200_001).unwrap();
        let g = GridDensity::sample(&grid, arcsine_density, 0.02).unwrap();
        let m = g.moments(3).unwrap();
        for (got, want) in m.values().iter().zip([1.0, 1.5, 2.5]) {
            assert!((got - want).abs() < 2e-2, "{got} vs {want}");
        }
    }

    #[test]
    fn hankel_examples() {
        assert!(hankel_psd(&bern().moments(4).unwrap()).unwrap().psd);
        let neg = hankel_psd(&MomentSeq::new(vec![0.0, -1.0])).unwrap();
        assert!(!neg.psd);
        assert!(neg.min_eigenvalue < 0.0);
        // moments induced by halving the free cumulants (1/2, 1/4, 0, -1/16)
        // of Bernoulli(1/2): m = (1/4, 3/16, 7/64, 13/256)
        let halved = MomentSeq::new(vec![0.25, 3.0 / 16.0, 7.0 / 64.0, 13.0 / 256.0]);
        assert!(!hankel_psd(&halved).unwrap().psd);
    }

    #[test]
    fn classical_cumulant_examples() {
        let s = classical_cumulants(&AtomicMeasure::dirac(3.0).moments(5).unwrap()).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14);
        assert!(s[1..].iter().all(|v| v.abs() < 1e-12));
        let m = MomentSeq::new(vec![rat(1, 2); 4]);
        let s: Vec<BigRational> = classical_cumulants(&m).unwrap();
        assert_eq!(s[0], rat(1, 2));
        assert_eq!(s[1], rat(1, 8));
        let kappa = kappa_from_sigma(&s);
        assert_eq!(kappa[1], rat(1, 4));
        assert_eq!(kappa[3], rat(-1, 8));
    }

    #[test]
    fn classical_convolution_examples() {
        let a = AtomicMeasure::dirac(2.0);
        let b = AtomicMeasure::dirac(-0.5);
        assert_eq!(classical_convolve(&a, &b).unwrap(), AtomicMeasure::dirac(1.5));
        let c = classical_convolve(&bern(), &bern()).unwrap();
        assert_eq!(c.atoms(), &[(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)]);
        assert_eq!(classical_convolve(&bern(), &AtomicMeasure::dirac(0.0)).unwrap(), bern());
        let big = AtomicMeasure::empirical(&(0..2000).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        assert!(classical_convolve(&big, &big).is_err());
    }

    #[test]
    fn kolmogorov_examples() {
        let d0 = AtomicMeasure::dirac(0.0);
        let d1 = AtomicMeasure::dirac(1.0);
        assert_eq!(kolmogorov_distance(&bern(), &bern()), 0.0);
        assert_eq!(kolmogorov_distance(&d0, &d1), 1.0);
        assert_eq!(kolmogorov_distance(&d0, &bern()), 0.5);
        let nudged = AtomicMeasure::dirac(1e-13);
        assert_eq!(kolmogorov_distance(&d0, &nudged), 1.0);
        assert_eq!(kolmogorov_distance_with_slack(&d0, &nudged, 1e-9), 0.0);
    }

    #[test]
    fn kolmogorov_against_density() {
        let grid = UniformGrid::new(-1.0, 1.0, 2001).unwrap();
        let uniform = GridDensity::sample(&grid, |_| 0.5, 1e-9).unwrap();
        // uniform on [-1,1] vs δ_0: CDF jumps from 1/2 to 1 at 0
        assert!((kolmogorov_distance(&uniform, &AtomicMeasure::dirac(0.0)) - 0.5).abs() < 1e-12);
        let pts: Vec<f64> = (0..1000).map(|i| -1.0 + (2 * i + 1) as f64 / 1000.0).collect();
        let emp = AtomicMeasure::empirical(&pts).unwrap();
        // midpoint samples: the empirical CDF straddles the uniform one by half a jump
        assert!((kolmogorov_distance(&uniform, &emp) - 0.0005).abs() < 1e-9);
    }

    #[test]
    fn affine_examples() {
        assert_eq!(bern().affine_map(1.0, 0.0), bern());
        assert_eq!(AtomicMeasure::dirac(1.0).affine_map(2.0, 3.0), AtomicMeasure::dirac(5.0));
        let grid = UniformGrid::new(0.0, 1.0, 101).unwrap();
        let g = GridDensity::sample(&grid, |x| 2.0 * x, 1e-3).unwrap();
        let h = g.affine_map(-2.0, 1.0).unwrap();
        assert!((h.mass() - 1.0).abs() < 1e-3);
        let (mg, mh) = (g.moments(1).unwrap().get(1), h.moments(1).unwrap().get(1));
        assert!((mh - (-2.0 * mg + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn circle_moments_validate() {
        assert!(CircleMomentSeq::new(vec![Complex64::new(1.1, 0.0)]).is_err());
        let w = Complex64::from_polar(1.0, 0.3);
        let m = CircleMomentSeq::from_atoms(&[(w, 1.0)], 3).unwrap();
        assert!((m.get(3) - w.powu(3)).norm() < 1e-15);
    }

    fn atomic_strategy() -> impl Strategy<Value = AtomicMeasure> {
        prop::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 1..6).prop_map(|v| {
            let total: f64 = v.iter().map(|a| a.1).sum();
            let mut atoms: Vec<_> = v.into_iter().map(|(x, w)| (x, w / total)).collect();
            let s: f64 = atoms.iter().map(|a| a.1).sum();
            atoms[0].1 += 1.0 - s;
            AtomicMeasure::new(atoms).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn convolution_moments_follow_binomial_expansion(a in atomic_strategy(), b in atomic_strategy()) {
            let c = classical_convolve(&a, &b).unwrap();
            let (ma, mb, mc) = (a.moments(6).unwrap(), b.moments(6).unwrap(), c.moments(6).unwrap());
            for n in 1..=6usize {
                let mut binom = 1.0;
                let mut want = 0.0;
                for k in 0..=n {
                    if k > 0 { binom = binom * (n - k + 1) as f64 / k as f64; }
                    want += binom * ma.get(k) * mb.get(n - k);
                }
                prop_assert!((mc.get(n) - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
        }

        #[test]
        fn classical_cumulants_add(a in atomic_strategy(), b in atomic_strategy()) {
            let c = classical_convolve(&a, &b).unwrap();
            let sa = classical_cumulants(&a.moments(6).unwrap()).unwrap();
            let sb = classical_cumulants(&b.moments(6).unwrap()).unwrap();
            let sc = classical_cumulants(&c.moments(6).unwrap()).unwrap();
            for n in 0..6 {
                prop_assert!((sc[n] - sa[n] - sb[n]).abs() <= 1e-10 * sc[n].abs().max(1.0));
            }
        }

        #[test]
        fn hankel_accepts_genuine_measures(a in atomic_strategy(), k in 2usize..=10) {
            let rep = hankel_psd(&a.moments(k).unwrap()).unwrap();
            prop_assert!(rep.psd, "{:?}", rep);
        }

        #[test]
        fn kolmogorov_is_a_metric(a in atomic_strategy(), b in atomic_strategy(), c in atomic_strategy()) {
            let ab = kolmogorov_distance(&a, &b);
            prop_assert_eq!(ab, kolmogorov_distance(&b, &a));
            prop_assert!(ab <= kolmogorov_distance(&a, &c) + kolmogorov_distance(&c, &b) + 1e-15);
            prop_assert_eq!(kolmogorov_distance(&a, &a), 0.0);
        }

        #[test]
        fn affine_moments(a in atomic_strategy(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
            let mapped = a.affine_map(s, t).moments(4).unwrap();
            let via_formula = a.moments(4).unwrap().affine(&s, &t);
            prop_assert!((mapped.get(1) - (s * a.mean() + t)).abs() < 1e-12);
            for n in 1..=4 {
                prop_assert!((mapped.get(n) - via_formula.get(n)).abs() < 1e-9 * mapped.get(n).abs().max(1.0));
            }
        }
    }
}
