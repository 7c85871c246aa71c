//! Random-matrix Monte Carlo harness.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`). The master seed keys
//! the generator; trial `t` reads stream `t` of that key
//! ([`trial_rng`]), so trials are independent of each other and of the
//! order in which they run. Gaussian entries use the Box–Muller
//! transform on two uniforms `u₁ ∈ (0, 1]`, `u₂ ∈ [0, 1)`.
//!
//! Haar unitaries are obtained from a complex Ginibre matrix `Z = QR` as
//! `Q · diag(R_ii / |R_ii|)`.
//!
//! The experiments place `A' = D_a` (diagonal) and `B' = U D_b U*`.
//! Conjugating both matrices by independent Haar unitaries gives the same
//! joint law, since `(V D_a V*, W D_b W*)` is conjugate to
//! `(D_a, V*W D_b W*V)` and `V*W` is again Haar. References are computed
//! from the discretized marginals, i.e. the spectra `A'` and `B'`
//! actually have.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::analytic::{conv_density, markov_kernel_density, EpsilonSchedule, MeasureHandle};
use crate::cumulants::{m2c, mixed_moment, FreeFamilySpec, FreeWord};
use crate::error::{Error, Result};
use crate::measures::{
    classical_convolve, kolmogorov_distance, kolmogorov_distance_with_slack, AtomicMeasure, RealMeasure, UniformGrid,
};

pub type Rng = ChaCha20Rng;

/// Tolerance on `‖A - A*‖_max` for [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const MAX_WORD_LEN: usize = 8;
pub const MAX_POLY_DEGREE: usize = 4;
const ATOMIC_KS_SLACK: f64 = 1e-9;

/// The generator for trial `t` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Standard complex Gaussian, `E|z|² = 1`.
pub fn complex_gaussian(rng: &mut Rng) -> Complex64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = 2.0 * PI * u2;
    Complex64::new(r * th.cos(), r * th.sin()) / std::f64::consts::SQRT_2
}

pub fn haar_unitary(n: usize, rng: &mut Rng) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        q.column_mut(j).scale_mut_complex(phase);
    }
    q
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl<S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>> ScaleComplex for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S> {
    fn scale_mut_complex(&mut self, s: Complex64) {
        for v in self.iter_mut() {
            *v *= s;
        }
    }
}

/// Complex product through four real products, which use the blocked
/// real kernel.
fn cmatmul(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument(format!("matrix is {}x{}", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidArgument(format!("matrix is not Hermitian: ‖A - A*‖_max = {dev:e}")));
        }
        Ok(Self(m))
    }

    /// `(M + M*)/2`, for products that are Hermitian up to rounding.
    pub fn symmetrize(m: DMatrix<Complex64>) -> Self {
        let adj = m.adjoint();
        Self((m + adj) * Complex64::new(0.5, 0.0))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| Complex64::new(x, 0.0)))))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }
}

/// Multiplicities `n_i` with `Σ n_i = N` by largest remainder; ties go to
/// the lower atom.
pub fn multiplicities(spec: &AtomicMeasure, n: usize) -> Vec<usize> {
    let atoms = spec.atoms();
    let exact: Vec<f64> = atoms.iter().map(|&(_, w)| w * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    // atoms are sorted ascending, so a stable sort keeps the lower one first on ties
    order.sort_by(|&i, &j| {
        let (ri, rj) = (exact[i] - counts[i] as f64, exact[j] - counts[j] as f64);
        if (ri - rj).abs() <= 1e-12 { std::cmp::Ordering::Equal } else { rj.partial_cmp(&ri).unwrap() }
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// The `N` diagonal entries of `D`, ascending.
pub fn discretize(spec: &AtomicMeasure, n: usize) -> Vec<f64> {
    spec.atoms()
        .iter()
        .zip(multiplicities(spec, n))
        .flat_map(|(&(x, _), k)| std::iter::repeat_n(x, k))
        .collect()
}

/// The empirical measure of [`discretize`].
pub fn discretized_measure(spec: &AtomicMeasure, n: usize) -> AtomicMeasure {
    AtomicMeasure::empirical(&discretize(spec, n)).expect("n >= 1")
}

/// `U D U*` with `D` from [`discretize`].
pub fn conjugate_diag(spec: &AtomicMeasure, n: usize, rng: &mut Rng) -> HermitianMatrix {
    let d = discretize(spec, n);
    let u = haar_unitary(n, rng);
    conjugate_with(&u, &d)
}

fn conjugate_with(u: &DMatrix<Complex64>, d: &[f64]) -> HermitianMatrix {
    let mut ud = u.clone();
    for (j, &dj) in d.iter().enumerate() {
        for v in ud.column_mut(j).iter_mut() {
            *v *= dj;
        }
    }
    HermitianMatrix::symmetrize(cmatmul(&ud, &u.adjoint()))
}

/// Ascending eigenvalues.
pub fn hermitian_eigs(a: &HermitianMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = a.0.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ascending eigenvalues with orthonormal eigenvectors as columns.
pub fn hermitian_eigh(a: &HermitianMatrix) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = a.0.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..a.dim()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.dim(), a.dim(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Band width in standard errors.
    pub se_factor: f64,
    /// Absolute moment tolerance, scaled by `max(1, |reference|)`.
    pub moment: f64,
    /// Bound on the mean Kolmogorov distance.
    pub ks: f64,
    /// Agreement required between the two analytic kernel routes.
    pub route: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { se_factor: 3.0, moment: 0.05, ks: 0.05, route: 2e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub trials: usize,
}

/// Mean with its jackknife standard error.
pub fn jackknife_mean(values: &[f64]) -> Estimate {
    let n = values.len();
    let total: f64 = values.iter().sum();
    let mean = total / n as f64;
    if n < 2 {
        return Estimate { mean, se: f64::NAN, trials: n };
    }
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (n - 1) as f64).collect();
    let loo_mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    Estimate { mean, se: var.sqrt(), trials: n }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub lhs: Vec<(f64, f64)>,
    pub rhs: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub word: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub g: Option<Vec<f64>>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialStat {
    pub trial: usize,
    pub stat: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub params: ExperimentParams,
    pub estimates: BTreeMap<String, Estimate>,
    pub reference: BTreeMap<String, f64>,
    pub distances: BTreeMap<String, Estimate>,
    pub pass: bool,
    #[serde(skip)]
    pub per_trial: Vec<TrialStat>,
}

impl ExperimentReport {
    /// The per-trial CSV, header `trial,stat,value`.
    pub fn per_trial_csv(&self) -> String {
        let mut out = String::from("trial,stat,value\n");
        for s in &self.per_trial {
            out.push_str(&format!("{},{},{}\n", s.trial, s.stat, crate::doc::fmt_f64(s.value)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn new(n: usize, trials: usize, seed: u64) -> Self {
        Self { n, trials, seed, tolerances: Tolerances::default() }
    }

    fn check(&self) -> Result<()> {
        if self.n < 50 || self.trials < 5 {
            return Err(Error::InvalidArgument(format!(
                "experiments need N >= 50 and trials >= 5, got N={} trials={}",
                self.n, self.trials
            )));
        }
        Ok(())
    }

    fn params(&self, a: &AtomicMeasure, b: &AtomicMeasure) -> ExperimentParams {
        ExperimentParams {
            n: self.n,
            trials: self.trials,
            seed: self.seed,
            lhs: a.atoms().to_vec(),
            rhs: b.atoms().to_vec(),
            word: None,
            f: None,
            g: None,
            tolerances: self.tolerances,
        }
    }
}

/// Runs `trial` for every index in parallel, keeping index order.
fn run_trials<T: Send>(cfg: &ExperimentConfig, trial: impl Fn(&mut Rng) -> T + Sync) -> Vec<T> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial(&mut trial_rng(cfg.seed, t as u64)))
        .collect()
}

fn esd_moments(eigs: &[f64], order: usize) -> Vec<f64> {
    let n = eigs.len() as f64;
    (1..=order as i32).map(|k| eigs.iter().map(|x| x.powi(k)).sum::<f64>() / n).collect()
}

struct Collected {
    estimates: BTreeMap<String, Estimate>,
    per_trial: Vec<TrialStat>,
}

fn collect(stats: &[Vec<(String, f64)>]) -> Collected {
    let mut per_trial = Vec::new();
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (t, row) in stats.iter().enumerate() {
        for (name, v) in row {
            per_trial.push(TrialStat { trial: t, stat: name.clone(), value: *v });
            columns.entry(name.clone()).or_default().push(*v);
        }
    }
    let estimates = columns.into_iter().map(|(k, v)| (k, jackknife_mean(&v))).collect();
    Collected { estimates, per_trial }
}

fn within(est: &Estimate, reference: f64, tol: &Tolerances, abs: f64) -> bool {
    (est.mean - reference).abs() <= (tol.se_factor * est.se).max(abs) + 1e-9
}

/// Reference law of `a ⊞ b`: exact when one side is a point mass,
/// otherwise a Stieltjes-inverted density on a grid over the support.
enum Reference {
    Atomic(AtomicMeasure),
    Density(crate::measures::GridDensity),
}

impl Reference {
    fn ks(&self, esd: &AtomicMeasure) -> f64 {
        match self {
            Reference::Atomic(m) => kolmogorov_distance_with_slack(esd, m, ATOMIC_KS_SLACK),
            Reference::Density(d) => kolmogorov_distance(esd, d),
        }
    }
}

fn free_reference(a: &AtomicMeasure, b: &AtomicMeasure) -> Result<Reference> {
    if b.len() == 1 {
        return Ok(Reference::Atomic(a.affine_map(1.0, b.atoms()[0].0)));
    }
    if a.len() == 1 {
        return Ok(Reference::Atomic(b.affine_map(1.0, a.atoms()[0].0)));
    }
    let (lo, hi) = (a.support().0 + b.support().0, a.support().1 + b.support().1);
    let pad = 0.05 * (hi - lo);
    let grid = UniformGrid::new(lo - pad, hi + pad, 2001)?;
    let ha = MeasureHandle::atomic(a.clone());
    let hb = MeasureHandle::atomic(b.clone());
    Ok(Reference::Density(conv_density(&ha, &hb, &grid, &EpsilonSchedule::for_step(grid.step())?)?.density))
}

const MOMENT_ORDER: usize = 6;

fn moment_reference(m: &crate::measures::MomentSeq) -> BTreeMap<String, f64> {
    (1..=m.order()).map(|k| (format!("m{k}"), m.get(k))).collect()
}

/// Spectrum of `A' + B'` with independent Haar conjugation, against
/// `a ⊞ b`.
pub fn additive_experiment(a: &AtomicMeasure, b: &AtomicMeasure, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.check()?;
    let (an, bn) = (discretized_measure(a, cfg.n), discretized_measure(b, cfg.n));
    let da = discretize(a, cfg.n);
    let db = discretize(b, cfg.n);
    let reference = free_reference(&an, &bn)?;
    let ref_moments = crate::cumulants::free_add_convolve(&crate::measures::moments_of(&an, MOMENT_ORDER)?, &crate::measures::moments_of(&bn, MOMENT_ORDER)?)?;

    let stats = run_trials(cfg, |rng| {
        let bp = conjugate_with(&haar_unitary(cfg.n, rng), &db);
        let mut s = bp.0;
        for (i, &x) in da.iter().enumerate() {
            s[(i, i)] += x;
        }
        let eigs = hermitian_eigs(&HermitianMatrix(s));
        trial_row(&eigs, &reference)
    });
    finish_spectral("additive", a, b, cfg, stats, ref_moments)
}

fn trial_row(eigs: &[f64], reference: &Reference) -> Vec<(String, f64)> {
    let mut row: Vec<(String, f64)> = esd_moments(eigs, MOMENT_ORDER)
        .into_iter()
        .enumerate()
        .map(|(k, v)| (format!("m{}", k + 1), v))
        .collect();
    let esd = AtomicMeasure::empirical(eigs).expect("finite eigenvalues");
    row.push(("ks".into(), reference.ks(&esd)));
    row
}

fn finish_spectral(
    name: &str,
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    cfg: &ExperimentConfig,
    stats: Vec<Vec<(String, f64)>>,
    ref_moments: crate::measures::MomentSeq,
) -> Result<ExperimentReport> {
    let Collected { mut estimates, per_trial } = collect(&stats);
    let ks = estimates.remove("ks").expect("every trial records ks");
    let reference = moment_reference(&ref_moments);
    let tol = cfg.tolerances;
    let moments_ok = reference
        .iter()
        .all(|(k, &r)| within(&estimates[k], r, &tol, tol.moment * r.abs().max(1.0)));
    let pass = moments_ok && ks.mean <= tol.ks;
    let mut distances = BTreeMap::new();
    distances.insert("ks".to_string(), ks);
    Ok(ExperimentReport {
        experiment: name.into(),
        params: cfg.params(a, b),
        estimates,
        reference,
        distances,
        pass,
        per_trial,
    })
}

/// Spectrum of `A + B'` where `B'` permutes the diagonal of `D_b`, against
/// the classical convolution `a * b`.
pub fn diagonal_experiment(a: &AtomicMeasure, b: &AtomicMeasure, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.check()?;
    let (an, bn) = (discretized_measure(a, cfg.n), discretized_measure(b, cfg.n));
    let da = discretize(a, cfg.n);
    let db = discretize(b, cfg.n);
    let classical = classical_convolve(&an, &bn)?;
    let ref_moments = crate::measures::moments_of(&classical, MOMENT_ORDER)?;
    let reference = Reference::Atomic(classical);
    let stats = run_trials(cfg, |rng| {
        let mut perm = db.clone();
        // Fisher–Yates from the trial stream
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut eigs: Vec<f64> = da.iter().zip(&perm).map(|(x, y)| x + y).collect();
        eigs.sort_by(f64::total_cmp);
        trial_row(&eigs, &reference)
    });
    finish_spectral("diagonal", a, b, cfg, stats, ref_moments)
}

fn free_pair(an: &AtomicMeasure, bn: &AtomicMeasure, order: usize) -> Result<FreeFamilySpec> {
    let ca = m2c(&crate::measures::moments_of(an, order)?);
    let cb = m2c(&crate::measures::moments_of(bn, order)?);
    Ok(FreeFamilySpec::new().with("X", ca).with("Y", cb))
}

/// `(1/N) tr w(A', B')` against the free mixed moment; `X ↦ A'`, `Y ↦ B'`.
pub fn word_trace_experiment(word: &FreeWord, a: &AtomicMeasure, b: &AtomicMeasure, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.check()?;
    if word.len() > MAX_WORD_LEN {
        return Err(Error::InvalidArgument(format!("words are limited to {MAX_WORD_LEN} letters")));
    }
    if let Some(bad) = word.letters().iter().find(|l| *l != "X" && *l != "Y") {
        return Err(Error::InvalidArgument(format!("word letters must be X or Y, got {bad:?}")));
    }
    let (an, bn) = (discretized_measure(a, cfg.n), discretized_measure(b, cfg.n));
    let da = discretize(a, cfg.n);
    let db = discretize(b, cfg.n);
    let expected = mixed_moment(&free_pair(&an, &bn, word.len())?, word)?;

    let stats = run_trials(cfg, |rng| {
        let bp = conjugate_with(&haar_unitary(cfg.n, rng), &db).0;
        let mut prod = DMatrix::<Complex64>::identity(cfg.n, cfg.n);
        for letter in word.letters() {
            if letter == "X" {
                for (i, &x) in da.iter().enumerate() {
                    for v in prod.column_mut(i).iter_mut() {
                        *v *= x;
                    }
                }
            } else {
                prod = cmatmul(&prod, &bp);
            }
        }
        let tr = prod.trace() / cfg.n as f64;
        vec![("re".to_string(), tr.re), ("im".to_string(), tr.im)]
    });
    let Collected { estimates, per_trial } = collect(&stats);
    let tol = cfg.tolerances;
    let pass = within(&estimates["re"], expected, &tol, 0.0) && within(&estimates["im"], 0.0, &tol, 0.0);
    let mut params = cfg.params(a, b);
    params.word = Some(word.to_string());
    let mut reference = BTreeMap::new();
    reference.insert("re".to_string(), expected);
    reference.insert("im".to_string(), 0.0);
    Ok(ExperimentReport { experiment: "word".into(), params, estimates, reference, distances: BTreeMap::new(), pass, per_trial })
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// `φ(g(X+Y) f(X))` by expanding `(X+Y)^i X^j` into free words.
pub fn kernel_cumulant_route(fam: &FreeFamilySpec, f: &[f64], g: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        for mask in 0..(1u32 << i) {
            let mut letters: Vec<String> = (0..i).map(|bit| if mask >> bit & 1 == 1 { "Y".into() } else { "X".into() }).collect();
            for (j, &fj) in f.iter().enumerate() {
                if fj == 0.0 {
                    continue;
                }
                letters.extend(std::iter::repeat_n("X".to_string(), j));
                let value = if letters.is_empty() { 1.0 } else { mixed_moment(fam, &FreeWord::new(letters.clone())?)? };
                letters.truncate(i);
                total += gi * fj * value;
            }
        }
    }
    Ok(total)
}

/// `∫ f(x) ∫ g(u) k(x, du) dν_a(x)` from Stieltjes-inverted kernels.
pub fn kernel_integral_route(a: &AtomicMeasure, b: &AtomicMeasure, f: &[f64], g: &[f64]) -> Result<f64> {
    let (lo, hi) = (a.support().0 + b.support().0, a.support().1 + b.support().1);
    let pad = 0.25 * (hi - lo).max(1e-3);
    let grid = UniformGrid::new(lo - pad, hi + pad, 1601)?;
    let sched = EpsilonSchedule::for_step(grid.step())?;
    let ha = MeasureHandle::atomic(a.clone());
    let hb = MeasureHandle::atomic(b.clone());
    let mut total = 0.0;
    for &(x, w) in a.atoms() {
        let fx = poly(f, x);
        if fx == 0.0 {
            continue;
        }
        let k = markov_kernel_density(&ha, &hb, x, &grid, &sched)?.density;
        // k(x, ·) is a probability kernel; normalize the recovered mass
        let inner = k.integrate(|u| poly(g, u)) / k.mass();
        total += w * fx * inner;
    }
    Ok(total)
}

/// `(1/N) tr(g(A'+B') f(A'))` through the eigenvectors of `A'+B'`, against
/// the kernel integral and the mixed-moment expansion.
pub fn kernel_experiment(a: &AtomicMeasure, b: &AtomicMeasure, f: &[f64], g: &[f64], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.check()?;
    if f.is_empty() || g.is_empty() || f.len() > MAX_POLY_DEGREE + 1 || g.len() > MAX_POLY_DEGREE + 1 {
        return Err(Error::InvalidArgument(format!("f and g need 1..={} coefficients", MAX_POLY_DEGREE + 1)));
    }
    let (an, bn) = (discretized_measure(a, cfg.n), discretized_measure(b, cfg.n));
    let da = discretize(a, cfg.n);
    let db = discretize(b, cfg.n);
    let cumulant_ref = kernel_cumulant_route(&free_pair(&an, &bn, f.len() + g.len() - 2)?, f, g)?;
    let kernel_ref = if bn.len() == 1 || an.len() == 1 {
        // degenerate kernels are point masses, which inversion cannot see
        cumulant_ref
    } else {
        kernel_integral_route(&an, &bn, f, g)?
    };
    let fa: Vec<f64> = da.iter().map(|&x| poly(f, x)).collect();

    let stats = run_trials(cfg, |rng| {
        let mut s = conjugate_with(&haar_unitary(cfg.n, rng), &db).0;
        for (i, &x) in da.iter().enumerate() {
            s[(i, i)] += x;
        }
        let (lambda, xi) = hermitian_eigh(&HermitianMatrix(s));
        // A' is diagonal, so its eigenvectors are the basis vectors e_l and
        // the transition matrix is T_kl = |ξ_k(l)|²
        let n = cfg.n;
        let mut est = 0.0;
        let mut row_dev: f64 = 0.0;
        let mut col_sums = vec![0.0; n];
        for k in 0..n {
            let gk = poly(g, lambda[k]);
            let mut row = 0.0;
            for l in 0..n {
                let t = xi[(l, k)].norm_sqr();
                row += t;
                col_sums[l] += t;
                est += gk * fa[l] * t;
            }
            row_dev = row_dev.max((row - 1.0).abs());
        }
        let col_dev = col_sums.iter().fold(0.0f64, |m, c| m.max((c - 1.0).abs()));
        vec![("trace".to_string(), est / n as f64), ("bistochastic_dev".to_string(), row_dev.max(col_dev))]
    });
    let Collected { estimates, per_trial } = collect(&stats);
    let tol = cfg.tolerances;
    let mut reference = BTreeMap::new();
    reference.insert("cumulant".to_string(), cumulant_ref);
    reference.insert("kernel".to_string(), kernel_ref);
    let routes_agree = (cumulant_ref - kernel_ref).abs() <= tol.route;
    let bistochastic = per_trial.iter().filter(|s| s.stat == "bistochastic_dev").all(|s| s.value <= 1e-8);
    let pass = routes_agree && bistochastic && within(&estimates["trace"], cumulant_ref, &tol, tol.moment);
    let mut params = cfg.params(a, b);
    params.f = Some(f.to_vec());
    params.g = Some(g.to_vec());
    let mut distances = BTreeMap::new();
    distances.insert(
        "routes".to_string(),
        Estimate { mean: (cumulant_ref - kernel_ref).abs(), se: 0.0, trials: 0 },
    );
    Ok(ExperimentReport { experiment: "kernel".into(), params, estimates, reference, distances, pass, per_trial })
}
