//! Truncated formal power series `c_0 + c_1 z + ... + c_K z^K`.
//!
//! All operations keep the truncation order of their inputs and refuse to
//! combine series of different orders. Scalar kinds are separated at the
//! type level through [`Scalar`].

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, ScalarKind};

#[derive(Clone, PartialEq)]
pub struct TruncatedSeries<S> {
    coeffs: Vec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpLog {
    Exp,
    Log,
}

impl<S: Scalar> TruncatedSeries<S> {
    /// Builds a series from `c_0..c_K`; the order is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<S>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Series("a series needs at least the constant term".into()));
        }
        Ok(Self { coeffs })
    }

    /// Builds a series of the given order, padding with zeros or truncating.
    pub fn from_coeffs(mut coeffs: Vec<S>, order: usize) -> Self {
        coeffs.resize(order + 1, S::zero());
        Self { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self { coeffs: vec![S::zero(); order + 1] }
    }

    pub fn constant(c: S, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = c;
        s
    }

    pub fn one(order: usize) -> Self {
        Self::constant(S::one(), order)
    }

    /// The series `z`.
    pub fn identity(order: usize) -> Self {
        let mut s = Self::zero(order);
        if order >= 1 {
            s.coeffs[1] = S::one();
        }
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn kind(&self) -> ScalarKind {
        S::KIND
    }

    pub fn coeff(&self, i: usize) -> &S {
        &self.coeffs[i]
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<S> {
        self.coeffs
    }

    pub fn with_order(&self, order: usize) -> Self {
        Self::from_coeffs(self.coeffs.clone(), order)
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch(self.order(), other.order()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        })
    }

    pub fn scale(&self, s: &S) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect() }
    }

    /// Cauchy product truncated at the common order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let k = self.order();
        let mut out = vec![S::zero(); k + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().take(k + 1 - i).enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Self { coeffs: out }
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn reciprocal(&self) -> Result<Self> {
        let c0 = &self.coeffs[0];
        if c0.is_zero() {
            return Err(Error::Series("reciprocal of a series with zero constant term".into()));
        }
        let inv0 = S::one() / c0.clone();
        let mut b: Vec<S> = Vec::with_capacity(self.coeffs.len());
        b.push(inv0.clone());
        for n in 1..=self.order() {
            let mut acc = S::zero();
            for k in 1..=n {
                acc = acc + self.coeffs[k].clone() * b[n - k].clone();
            }
            b.push(-(acc * inv0.clone()));
        }
        Ok(Self { coeffs: b })
    }

    /// `self ∘ g`, evaluated by Horner's scheme in the series ring.
    pub fn compose(&self, g: &Self) -> Result<Self> {
        self.check_order(g)?;
        if !g.coeffs[0].is_zero() {
            return Err(Error::Series("inner series of a composition must vanish at 0".into()));
        }
        let k = self.order();
        let mut acc = Self::constant(self.coeffs[k].clone(), k);
        for i in (0..k).rev() {
            acc = acc.mul_unchecked(g);
            acc.coeffs[0] = acc.coeffs[0].clone() + self.coeffs[i].clone();
        }
        Ok(acc)
    }

    /// Compositional inverse `g` with `self ∘ g = z + O(z^{K+1})`.
    ///
    /// Coefficients are fixed one at a time: with `g` known to degree
    /// `n - 1`, the degree-`n` coefficient of `f ∘ g` is linear in `g_n`
    /// with slope `f_1`.
    pub fn reversion(&self) -> Result<Self> {
        let k = self.order();
        if !self.coeffs[0].is_zero() {
            return Err(Error::Series("reversion needs a zero constant term".into()));
        }
        if k == 0 {
            return Ok(Self::zero(0));
        }
        let f1 = self.coeffs[1].clone();
        if f1.is_zero() {
            return Err(Error::Series("reversion needs a nonzero linear term".into()));
        }
        let mut g = Self::zero(k);
        g.coeffs[1] = S::one() / f1.clone();
        for n in 2..=k {
            let partial = self.compose(&g)?;
            g.coeffs[n] = -(partial.coeffs[n].clone() / f1.clone());
        }
        Ok(g)
    }

    pub fn derivative(&self) -> Self {
        let k = self.order();
        let mut out = vec![S::zero(); k + 1];
        for n in 1..=k {
            out[n - 1] = self.coeffs[n].clone() * S::from_i64(n as i64);
        }
        Self { coeffs: out }
    }

    /// Formal exponential. Uses `n b_n = Σ_{k=1}^{n} k a_k b_{n-k}`.
    pub fn exp(&self) -> Result<Self> {
        let b0 = self.coeffs[0].exp_value().ok_or_else(|| {
            Error::Series("exp of a series whose constant term has no exact exponential".into())
        })?;
        let k = self.order();
        let mut b = Vec::with_capacity(k + 1);
        b.push(b0);
        for n in 1..=k {
            let mut acc = S::zero();
            for j in 1..=n {
                acc = acc + S::from_i64(j as i64) * self.coeffs[j].clone() * b[n - j].clone();
            }
            b.push(acc / S::from_i64(n as i64));
        }
        Ok(Self { coeffs: b })
    }

    /// Formal logarithm of a series with constant term 1.
    pub fn log(&self) -> Result<Self> {
        if self.coeffs[0] != S::one() {
            return Err(Error::Series("log needs constant term 1".into()));
        }
        let k = self.order();
        let mut l = vec![S::zero(); k + 1];
        for n in 1..=k {
            let mut acc = S::from_i64(n as i64) * self.coeffs[n].clone();
            for j in 1..n {
                acc = acc - S::from_i64(j as i64) * l[j].clone() * self.coeffs[n - j].clone();
            }
            l[n] = acc / S::from_i64(n as i64);
        }
        Ok(Self { coeffs: l })
    }

    pub fn exp_log(&self, direction: ExpLog) -> Result<Self> {
        match direction {
            ExpLog::Exp => self.exp(),
            ExpLog::Log => self.log(),
        }
    }

    /// Integer power by repeated multiplication.
    pub fn powi(&self, p: usize) -> Self {
        let mut acc = Self::one(self.order());
        for _ in 0..p {
            acc = acc.mul_unchecked(self);
        }
        acc
    }

    /// Maps coefficients into another scalar kind.
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> TruncatedSeries<T> {
        TruncatedSeries { coeffs: self.coeffs.iter().map(f).collect() }
    }

    /// Evaluates the truncated polynomial at a complex point.
    pub fn eval_complex(&self, z: num_complex::Complex64) -> num_complex::Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(num_complex::Complex64::new(0.0, 0.0), |acc, c| acc * z + c.to_complex())
    }
}

impl<S: Scalar + fmt::Display> fmt::Display for TruncatedSeries<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match i {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})z")?,
                _ => write!(f, "({c})z^{i}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " + O(z^{})", self.order() + 1)
    }
}

impl<S: Scalar> fmt::Debug for TruncatedSeries<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedSeries")
            .field("kind", &S::KIND)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}
