//! Free cumulants and the non-crossing moment calculus.
//!
//! Moments and free cumulants are related by
//! `m_n = Σ_{π ∈ NC(n)} Π_{V ∈ π} C_{|V|}`. Three routes compute the
//! inverse map:
//!
//! * [`Route::Series`] matches coefficients in `M(w) = 1 + Σ_s C_s (w M(w))^s`
//!   where `M(w) = Σ m_n w^n`, the generating-function form of `G K(G) = ζ G`;
//! * [`Route::Subtraction`] peels lower non-crossing terms off `m_n`;
//! * [`Route::Moebius`] sums `μ(π, 1_n) Π m_{|V|}` over `NC(n)`.
//!
//! All three are generic over [`Scalar`], so on rational input they agree
//! exactly.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::measures::{hankel_psd, HankelReport, MomentSeq};
use crate::ncpart::{enumerate_nc, moebius_to_top_kreweras, NCIndex};
use crate::scalar::Scalar;
use crate::series::TruncatedSeries;

/// Largest order handled by the enumeration-based routes.
pub const NC_ROUTE_MAX_ORDER: usize = 12;
/// Orders up to this value are cross-checked by the enumeration routes in
/// [`m2c_checked`].
pub const CROSS_CHECK_MAX_ORDER: usize = 9;

/// Free cumulants `C_1..C_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSeq<S = f64> {
    c: Vec<S>,
}

impl<S: Scalar> CumulantSeq<S> {
    pub fn new(c: Vec<S>) -> Self {
        Self { c }
    }

    pub fn order(&self) -> usize {
        self.c.len()
    }

    /// `C_n` for `1 <= n <= K`.
    pub fn get(&self, n: usize) -> S {
        self.c[n - 1].clone()
    }

    pub fn values(&self) -> &[S] {
        &self.c
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self { c: self.c[..order.min(self.c.len())].to_vec() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch(self.order(), other.order()));
        }
        Ok(Self { c: self.c.iter().zip(&other.c).map(|(a, b)| a.clone() + b.clone()).collect() })
    }

    pub fn scale(&self, t: &S) -> Self {
        Self { c: self.c.iter().map(|v| v.clone() * t.clone()).collect() }
    }

    /// Cumulants of `sX + t`: `C_1 -> s C_1 + t`, `C_n -> s^n C_n`.
    pub fn affine(&self, s: &S, t: &S) -> Self {
        let mut pow = S::one();
        let c = self
            .c
            .iter()
            .enumerate()
            .map(|(i, v)| {
                pow = pow.clone() * s.clone();
                let scaled = v.clone() * pow.clone();
                if i == 0 { scaled + t.clone() } else { scaled }
            })
            .collect();
        Self { c }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> CumulantSeq<T> {
        CumulantSeq { c: self.c.iter().map(f).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Series,
    Subtraction,
    Moebius,
}

impl std::str::FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "series" => Ok(Route::Series),
            "b" | "subtraction" => Ok(Route::Subtraction),
            "moebius" | "mobius" => Ok(Route::Moebius),
            other => Err(Error::Parse(format!("unknown route {other:?} (expected a, b or moebius)"))),
        }
    }
}

/// Per-`n` summary of `NC(n)`: for every block-size type, the number of
/// partitions of that type and the sum of their Möbius values.
struct NcTypes {
    entries: Vec<TypeEntry>,
}

struct TypeEntry {
    sizes: Vec<usize>,
    count: i64,
    moebius_sum: i64,
    is_top: bool,
}

static NC_INDEX: [OnceLock<Arc<NCIndex>>; NC_ROUTE_MAX_ORDER + 1] = [const { OnceLock::new() }; NC_ROUTE_MAX_ORDER + 1];
static NC_TYPES: [OnceLock<Arc<NcTypes>>; NC_ROUTE_MAX_ORDER + 1] = [const { OnceLock::new() }; NC_ROUTE_MAX_ORDER + 1];

pub(crate) fn nc_index(n: usize) -> Result<Arc<NCIndex>> {
    if n == 0 || n > NC_ROUTE_MAX_ORDER {
        return Err(Error::Range(format!("non-crossing routes support orders 1..={NC_ROUTE_MAX_ORDER}, got {n}")));
    }
    Ok(NC_INDEX[n].get_or_init(|| Arc::new(enumerate_nc(n).expect("n within range"))).clone())
}

fn nc_types(n: usize) -> Result<Arc<NcTypes>> {
    let index = nc_index(n)?;
    Ok(NC_TYPES[n]
        .get_or_init(|| {
            let mut map: HashMap<Vec<usize>, (i64, i64)> = HashMap::new();
            for p in index.iter() {
                let mut sizes: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
                sizes.sort_unstable();
                let mu = moebius_to_top_kreweras(&p).expect("enumerated partitions are non-crossing");
                let e = map.entry(sizes).or_insert((0, 0));
                e.0 += 1;
                e.1 += mu;
            }
            let mut entries: Vec<TypeEntry> = map
                .into_iter()
                .map(|(sizes, (count, moebius_sum))| TypeEntry { is_top: sizes == [n], sizes, count, moebius_sum })
                .collect();
            entries.sort_by(|a, b| a.sizes.cmp(&b.sizes));
            Arc::new(NcTypes { entries })
        })
        .clone())
}

fn moment_series<S: Scalar>(m: &MomentSeq<S>, known: usize, order: usize) -> TruncatedSeries<S> {
    // w M(w) with M(w) = 1 + m_1 w + ... + m_known w^known
    let mut c = vec![S::zero(); order + 1];
    for (n, slot) in c.iter_mut().enumerate().skip(1) {
        if n - 1 <= known {
            *slot = m.get(n - 1);
        }
    }
    TruncatedSeries::from_coeffs(c, order)
}

fn m2c_series<S: Scalar>(m: &MomentSeq<S>) -> CumulantSeq<S> {
    let k = m.order();
    let p = moment_series(m, k, k);
    let mut powers = Vec::with_capacity(k + 1);
    powers.push(TruncatedSeries::one(k));
    for s in 1..=k {
        let next = powers[s - 1].mul(&p).expect("same order");
        powers.push(next);
    }
    let mut c: Vec<S> = Vec::with_capacity(k);
    for n in 1..=k {
        let mut acc = m.get(n);
        for s in 1..n {
            acc = acc - c[s - 1].clone() * powers[s].coeff(n).clone();
        }
        c.push(acc);
    }
    CumulantSeq::new(c)
}

fn m2c_subtraction<S: Scalar>(m: &MomentSeq<S>) -> Result<CumulantSeq<S>> {
    let k = m.order();
    let mut c: Vec<S> = Vec::with_capacity(k);
    for n in 1..=k {
        let types = nc_types(n)?;
        let mut acc = m.get(n);
        for e in types.entries.iter().filter(|e| !e.is_top) {
            let mut term = S::from_i64(e.count);
            for &s in &e.sizes {
                term = term * c[s - 1].clone();
            }
            acc = acc - term;
        }
        c.push(acc);
    }
    Ok(CumulantSeq::new(c))
}

/// `C_n = Σ_{π ∈ NC(n)} μ(π, 1_n) Π_{V ∈ π} m_{|V|}`, for `K <= 12`.
pub fn m2c_moebius<S: Scalar>(m: &MomentSeq<S>) -> Result<CumulantSeq<S>> {
    let k = m.order();
    if k > NC_ROUTE_MAX_ORDER {
        return Err(Error::Range(format!("Möbius route supports K <= {NC_ROUTE_MAX_ORDER}, got {k}")));
    }
    let mut c = Vec::with_capacity(k);
    for n in 1..=k {
        let types = nc_types(n)?;
        let mut acc = S::zero();
        for e in &types.entries {
            if e.moebius_sum == 0 {
                continue;
            }
            let mut term = S::from_i64(e.moebius_sum);
            for &s in &e.sizes {
                term = term * m.get(s);
            }
            acc = acc + term;
        }
        c.push(acc);
    }
    Ok(CumulantSeq::new(c))
}

/// Free cumulants by the series route (any order).
pub fn m2c<S: Scalar>(m: &MomentSeq<S>) -> CumulantSeq<S> {
    m2c_series(m)
}

pub fn m2c_route<S: Scalar>(m: &MomentSeq<S>, route: Route) -> Result<CumulantSeq<S>> {
    match route {
        Route::Series => Ok(m2c_series(m)),
        Route::Subtraction => m2c_subtraction(m),
        Route::Moebius => m2c_moebius(m),
    }
}

/// Series route, cross-checked against both enumeration routes when
/// `K <= 9`. Exact kinds must agree exactly; floating kinds are compared
/// with a relative tolerance.
pub fn m2c_checked<S: Scalar>(m: &MomentSeq<S>, tol: impl Fn(&S, &S) -> bool) -> Result<CumulantSeq<S>> {
    let a = m2c_series(m);
    if m.order() <= CROSS_CHECK_MAX_ORDER {
        for route in [Route::Subtraction, Route::Moebius] {
            let b = m2c_route(m, route)?;
            for (n, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
                if !tol(x, y) {
                    return Err(Error::InvalidArgument(format!(
                        "route disagreement at C_{}: {x:?} vs {y:?} ({route:?})",
                        n + 1
                    )));
                }
            }
        }
    }
    Ok(a)
}

/// Moments from free cumulants: `m_n = Σ_{π ∈ NC(n)} Π C_{|V|}`, computed
/// through `M = 1 + Σ_s C_s (w M)^s` one coefficient at a time.
pub fn c2m<S: Scalar>(c: &CumulantSeq<S>) -> MomentSeq<S> {
    let k = c.order();
    let mut m: MomentSeq<S> = MomentSeq::new(Vec::with_capacity(k));
    for n in 1..=k {
        // m_1..m_{n-1} are known; (w M)^s at degree n needs only those
        let p = moment_series(&m, n - 1, n);
        let mut power = TruncatedSeries::one(n);
        let mut acc = S::zero();
        for s in 1..=n {
            power = power.mul(&p).expect("same order");
            acc = acc + c.get(s) * power.coeff(n).clone();
        }
        let mut values = m.values().to_vec();
        values.push(acc);
        m = MomentSeq::new(values);
    }
    m
}

/// Moments of `μ ⊞ ν` from the moments of `μ` and `ν`: free cumulants add.
pub fn free_add_convolve<S: Scalar>(a: &MomentSeq<S>, b: &MomentSeq<S>) -> Result<MomentSeq<S>> {
    if a.order() != b.order() {
        return Err(Error::OrderMismatch(a.order(), b.order()));
    }
    Ok(c2m(&m2c(a).add(&m2c(b))?))
}

/// Cumulants of the `t`-th free convolution power: `t C_n`. Accepts real
/// `t >= 1` and integers `t >= 0`; other values belong to [`compress`].
pub fn free_power(c: &CumulantSeq<f64>, t: f64) -> Result<CumulantSeq<f64>> {
    let integer = t >= 0.0 && t.fract() == 0.0;
    if !(t >= 1.0 || integer) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "free power t={t} must be >= 1 or a nonnegative integer"
        )));
    }
    Ok(c.scale(&t))
}

/// Integer free convolution power for any scalar kind.
pub fn free_power_int<S: Scalar>(c: &CumulantSeq<S>, n: u32) -> CumulantSeq<S> {
    c.scale(&S::from_i64(n as i64))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Compression {
    pub t: f64,
    pub cumulants: Vec<f64>,
    pub moments: Vec<f64>,
    pub hankel: HankelReport,
    pub feasible: bool,
}

/// Scales the cumulants by `t > 0` and reports whether the induced moments
/// pass the Hankel positivity test. For `t >= 1` the answer is always
/// positive for a genuine measure; below 1 it depends on the measure.
pub fn compress(c: &CumulantSeq<f64>, t: f64) -> Result<Compression> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("compression parameter t={t} must be positive")));
    }
    let scaled = c.scale(&t);
    let moments = c2m(&scaled);
    let hankel = hankel_psd(&moments)?;
    Ok(Compression {
        t,
        cumulants: scaled.values().to_vec(),
        moments: moments.values().to_vec(),
        feasible: hankel.psd,
        hankel,
    })
}

/// A monomial in free variables, one label per letter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FreeWord {
    letters: Vec<String>,
}

impl FreeWord {
    pub fn new(letters: Vec<String>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidArgument("a word needs at least one letter".into()));
        }
        Ok(Self { letters })
    }

    pub fn letters(&self) -> &[String] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

impl std::str::FromStr for FreeWord {
    type Err = Error;

    /// One character per letter, whitespace ignored: `"XYXY"`.
    fn from_str(s: &str) -> Result<Self> {
        Self::new(s.chars().filter(|c| !c.is_whitespace()).map(String::from).collect())
    }
}

impl std::fmt::Display for FreeWord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letters.concat())
    }
}

/// Marginal free cumulants of a family of free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeFamilySpec<S = f64> {
    marginals: BTreeMap<String, CumulantSeq<S>>,
}

impl<S: Scalar> FreeFamilySpec<S> {
    pub fn new() -> Self {
        Self { marginals: BTreeMap::new() }
    }

    pub fn with(mut self, label: &str, c: CumulantSeq<S>) -> Self {
        self.marginals.insert(label.to_string(), c);
        self
    }

    pub fn get(&self, label: &str) -> Option<&CumulantSeq<S>> {
        self.marginals.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.marginals.keys().map(String::as_str)
    }
}

impl<S: Scalar> Default for FreeFamilySpec<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// `φ(a_1 ... a_n)` for free variables: mixed cumulants vanish, so only
/// partitions whose blocks are monochromatic in the word contribute, each
/// with `Π_V C_{|V|}(label of V)`.
pub fn mixed_moment<S: Scalar>(fam: &FreeFamilySpec<S>, w: &FreeWord) -> Result<S> {
    let n = w.len();
    if n > NC_ROUTE_MAX_ORDER {
        return Err(Error::Range(format!("mixed moments support words up to length {NC_ROUTE_MAX_ORDER}")));
    }
    let mut colors = Vec::with_capacity(n);
    let mut marginals = Vec::new();
    for letter in w.letters() {
        let c = fam
            .get(letter)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown label {letter:?}")))?;
        let uses = w.letters().iter().filter(|l| *l == letter).count();
        if c.order() < uses {
            return Err(Error::Range(format!(
                "marginal {letter:?} has order {} but occurs {uses} times in the word",
                c.order()
            )));
        }
        let idx = match marginals.iter().position(|(l, _)| l == letter) {
            Some(i) => i,
            None => {
                marginals.push((letter.clone(), c));
                marginals.len() - 1
            }
        };
        colors.push(idx);
    }
    let index = nc_index(n)?;
    let mut total = S::zero();
    'partitions: for i in 0..index.len() {
        let labels = index.labels(i);
        let blocks = labels.iter().max().unwrap() + 1;
        let mut color = vec![usize::MAX; blocks];
        let mut size = vec![0usize; blocks];
        for (pos, &b) in labels.iter().enumerate() {
            if color[b] == usize::MAX {
                color[b] = colors[pos];
            } else if color[b] != colors[pos] {
                continue 'partitions;
            }
            size[b] += 1;
        }
        let mut term = S::one();
        for b in 0..blocks {
            term = term * marginals[color[b]].1.get(size[b]);
        }
        total = total + term;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncpart::Partition;
    use crate::scalar::rat;
    use num_rational::BigRational;
    use proptest::prelude::*;

    type Q = BigRational;

    fn qm(v: &[(i64, i64)]) -> MomentSeq<Q> {
        MomentSeq::new(v.iter().map(|&(n, d)| rat(n, d)).collect())
    }

    fn bern_q(k: usize) -> MomentSeq<Q> {
        MomentSeq::new(vec![rat(1, 2); k])
    }

    /// Brute force: m_n = Σ over all NC(n) of Π C_{|V|}, enumerating partitions directly.
    fn c2m_bruteforce(c: &CumulantSeq<Q>) -> Vec<Q> {
        (1..=c.order())
            .map(|n| {
                enumerate_nc(n)
                    .unwrap()
                    .iter()
                    .map(|p: Partition| {
                        p.blocks().iter().fold(rat(1, 1), |acc, b| acc * c.get(b.len()))
                    })
                    .fold(rat(0, 1), |a, b| a + b)
            })
            .collect()
    }

    #[test]
    fn low_order_formulas() {
        let m = qm(&[(3, 2), (-1, 3), (5, 7)]);
        let (m1, m2, m3) = (m.get(1), m.get(2), m.get(3));
        let c = m2c(&m);
        assert_eq!(c.get(1), m1.clone());
        assert_eq!(c.get(2), m2.clone() - m1.clone() * m1.clone());
        assert_eq!(
            c.get(3),
            m3.clone() - rat(3, 1) * m1.clone() * m2.clone() + rat(2, 1) * m1.clone() * m1.clone() * m1.clone()
        );
        let back = c2m(&c);
        assert_eq!(back.get(1), c.get(1));
        assert_eq!(back.get(2), c.get(2) + c.get(1) * c.get(1));
        assert_eq!(back.get(3), c.get(3) + rat(3, 1) * c.get(1) * c.get(2) + c.get(1) * c.get(1) * c.get(1));
    }

    #[test]
    fn bernoulli_cumulants() {
        let c = m2c(&bern_q(4));
        assert_eq!(c.values(), &[rat(1, 2), rat(1, 4), rat(0, 1), rat(-1, 16)]);
    }

    #[test]
    fn semicircle_cumulants() {
        let m = qm(&[(0, 1), (1, 1), (0, 1), (2, 1), (0, 1), (5, 1)]);
        let c = m2c(&m);
        assert_eq!(c.values(), &[rat(0, 1), rat(1, 1), rat(0, 1), rat(0, 1), rat(0, 1), rat(0, 1)]);
        assert_eq!(c2m(&c), m);
    }

    #[test]
    fn c2m_examples() {
        assert_eq!(c2m(&CumulantSeq::new(vec![rat(7, 3)])).values(), &[rat(7, 3)]);
        let doubled = CumulantSeq::new(vec![rat(1, 1), rat(1, 2), rat(0, 1)]);
        assert_eq!(c2m(&doubled).values(), &[rat(1, 1), rat(3, 2), rat(5, 2)]);
        let sigma = rat(3, 4);
        let mut c = vec![rat(0, 1); 6];
        c[1] = sigma.clone();
        let m = c2m(&CumulantSeq::new(c));
        for k in 1..=3usize {
            let cat = crate::ncpart::catalan(k as u32).unwrap() as i64;
            assert_eq!(m.get(2 * k), rat(cat, 1) * crate::measures::pow(&sigma, k));
            assert_eq!(m.get(2 * k - 1), rat(0, 1));
        }
    }

    #[test]
    fn c2m_matches_partition_bruteforce() {
        let c = CumulantSeq::new(vec![rat(1, 3), rat(-2, 5), rat(7, 2), rat(1, 9), rat(-3, 4), rat(2, 1), rat(5, 6)]);
        assert_eq!(c2m(&c).values(), c2m_bruteforce(&c).as_slice());
    }

    #[test]
    fn moebius_route_low_orders() {
        let m = qm(&[(2, 3), (5, 4), (-1, 2)]);
        let c = m2c_moebius(&m).unwrap();
        let (m1, m2, m3) = (m.get(1), m.get(2), m.get(3));
        assert_eq!(c.get(2), m2.clone() - m1.clone() * m1.clone());
        assert_eq!(c.get(3), m3 - rat(3, 1) * m1.clone() * m2 + rat(2, 1) * m1.clone() * m1.clone() * m1);
        assert!(m2c_moebius(&MomentSeq::new(vec![0.0; 13])).is_err());
    }

    #[test]
    fn moebius_route_order_twelve() {
        let m = MomentSeq::new((1..=12).map(|i| rat(i as i64 % 5 - 2, (i as i64 % 3) + 1)).collect());
        assert_eq!(m2c_moebius(&m).unwrap(), m2c(&m));
        assert_eq!(m2c_route(&m, Route::Subtraction).unwrap(), m2c(&m));
    }

    #[test]
    fn free_convolution_examples() {
        let a = free_add_convolve(&bern_q(4), &bern_q(4)).unwrap();
        assert_eq!(a.values(), &[rat(1, 1), rat(3, 2), rat(5, 2), rat(35, 8)]);
        let da = MomentSeq::new((1..=5).map(|n| crate::measures::pow(&rat(2, 3), n)).collect::<Vec<Q>>());
        let db = MomentSeq::new((1..=5).map(|n| crate::measures::pow(&rat(-5, 2), n)).collect::<Vec<Q>>());
        let sum = free_add_convolve(&da, &db).unwrap();
        let want: Vec<Q> = (1..=5).map(|n| crate::measures::pow(&rat(-11, 6), n)).collect();
        assert_eq!(sum.values(), want.as_slice());
        let sc = |s: Q| c2m(&CumulantSeq::new(vec![rat(0, 1), s, rat(0, 1), rat(0, 1), rat(0, 1), rat(0, 1)]));
        assert_eq!(free_add_convolve(&sc(rat(1, 3)), &sc(rat(1, 2))).unwrap(), sc(rat(5, 6)));
        assert!(free_add_convolve(&bern_q(3), &bern_q(4)).is_err());
    }

    #[test]
    fn free_power_examples() {
        let c = m2c(&MomentSeq::new(vec![0.5; 4]));
        assert_eq!(free_power(&c, 1.0).unwrap(), c);
        assert_eq!(free_power(&c, 2.0).unwrap().values(), &[1.0, 0.5, 0.0, -0.125]);
        assert!(free_power(&c, 0.5).is_err());
        assert!(free_power(&c, 0.0).is_ok());
        // integer powers against repeated convolution
        let cq = m2c(&bern_q(5));
        let by_power = c2m(&free_power_int(&cq, 3));
        let mut by_conv = bern_q(5);
        for _ in 0..2 {
            by_conv = free_add_convolve(&by_conv, &bern_q(5)).unwrap();
        }
        assert_eq!(by_power, by_conv);
    }

    #[test]
    fn compression_examples() {
        let c = m2c(&MomentSeq::new(vec![0.5; 4]));
        for t in [1.0, 1.5, 2.0, 5.0] {
            assert!(compress(&c, t).unwrap().feasible, "t={t}");
        }
        let half = compress(&c, 0.5).unwrap();
        assert!(!half.feasible);
        assert_eq!(half.moments, vec![0.25, 3.0 / 16.0, 7.0 / 64.0, 13.0 / 256.0]);
        let sc = CumulantSeq::new(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        for t in [0.1, 0.5, 1.0, 3.0] {
            assert!(compress(&sc, t).unwrap().feasible);
        }
        assert!(compress(&c, 0.0).is_err());
    }

    #[test]
    fn mixed_moment_examples() {
        let x = m2c(&qm(&[(1, 3), (1, 2), (2, 5), (1, 1)]));
        let y = m2c(&qm(&[(-2, 1), (5, 1), (-1, 1), (3, 1)]));
        let fam = FreeFamilySpec::new().with("X", x.clone()).with("Y", y.clone());
        let xy = mixed_moment(&fam, &"XY".parse().unwrap()).unwrap();
        assert_eq!(xy, rat(1, 3) * rat(-2, 1));
        let (a1, a2, b1, b2) = (rat(1, 3), rat(1, 2), rat(-2, 1), rat(5, 1));
        let want = a2.clone() * b1.clone() * b1.clone() + a1.clone() * a1.clone() * b2
            - a1.clone() * a1 * b1.clone() * b1;
        assert_eq!(mixed_moment(&fam, &"XYXY".parse().unwrap()).unwrap(), want);
        let bern = FreeFamilySpec::new().with("X", m2c(&bern_q(4))).with("Y", m2c(&bern_q(4)));
        assert_eq!(mixed_moment(&bern, &"XYXY".parse().unwrap()).unwrap(), rat(3, 16));
        assert!(mixed_moment(&fam, &"XZ".parse().unwrap()).is_err());
        assert!(mixed_moment(&fam, &"XYXYXXX".parse().unwrap()).is_err());
    }

    #[test]
    fn single_letter_words_reproduce_moments() {
        let c = CumulantSeq::new(vec![rat(1, 2), rat(-1, 3), rat(2, 1), rat(1, 7), rat(0, 1), rat(-5, 2)]);
        let fam = FreeFamilySpec::new().with("A", c.clone());
        let m = c2m(&c);
        for n in 1..=6 {
            let w = FreeWord::new(vec!["A".to_string(); n]).unwrap();
            assert_eq!(mixed_moment(&fam, &w).unwrap(), m.get(n));
        }
    }

    #[test]
    fn label_swap_symmetry_on_palindromes() {
        let c = m2c(&qm(&[(1, 2), (3, 4), (-1, 5), (2, 1), (1, 1), (4, 3)]));
        let fam = FreeFamilySpec::new().with("X", c.clone()).with("Y", c);
        for w in ["XYX", "XYYX", "XXYXX", "YXXXY", "XYXYX"] {
            let swapped: String = w.chars().map(|ch| if ch == 'X' { 'Y' } else { 'X' }).collect();
            assert_eq!(
                mixed_moment(&fam, &w.parse().unwrap()).unwrap(),
                mixed_moment(&fam, &swapped.parse().unwrap()).unwrap()
            );
        }
    }

    #[test]
    fn free_clt_against_semicircle() {
        // centered Bernoulli(1/2): ±1/2, variance 1/4
        let centered = MomentSeq::new(vec![0.5; 6]).affine(&1.0, &-0.5);
        let c = m2c(&centered);
        let semicircle = c2m(&CumulantSeq::new(vec![0.0, 0.25, 0.0, 0.0, 0.0, 0.0]));
        for n in [10u32, 100, 1000] {
            let sum = c2m(&free_power_int(&c, n));
            let scaled = sum.affine(&(1.0 / (n as f64).sqrt()), &0.0);
            for k in 1..=6 {
                assert!((scaled.get(k) - semicircle.get(k)).abs() <= 3.0 / n as f64, "n={n} k={k}");
            }
        }
        // repeated convolution agrees with the cumulant power at n = 10
        let mut rep = centered.clone();
        for _ in 1..10 {
            rep = free_add_convolve(&rep, &centered).unwrap();
        }
        let power = c2m(&free_power_int(&c, 10));
        for k in 1..=6 {
            assert!((rep.get(k) - power.get(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn free_lln_cumulant_rate() {
        let c = m2c(&AtomicMoments::bern3());
        for n in [10.0f64, 100.0, 1000.0] {
            let scaled = c.scale(&n).affine(&(1.0 / n), &0.0);
            assert!((scaled.get(1) - c.get(1)).abs() < 1e-14);
            for k in 2..=6 {
                let rate = n.powi(1 - k as i32);
                assert!((scaled.get(k) - c.get(k) * rate).abs() <= 1e-12 * rate);
            }
        }
    }

    struct AtomicMoments;
    impl AtomicMoments {
        fn bern3() -> MomentSeq {
            // (0.3, 1.7) with weights (0.6, 0.4)
            MomentSeq::new((1..=6).map(|n| 0.6 * 0.3f64.powi(n) + 0.4 * 1.7f64.powi(n)).collect())
        }
    }

    fn rational_moments(max_k: usize) -> impl Strategy<Value = MomentSeq<Q>> {
        (1..=max_k).prop_flat_map(|k| {
            prop::collection::vec((-9i64..=9, 1i64..=5), k)
                .prop_map(|v| MomentSeq::new(v.into_iter().map(|(n, d)| rat(n, d)).collect()))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn three_routes_agree_exactly(m in rational_moments(8)) {
            let a = m2c(&m);
            prop_assert_eq!(&m2c_route(&m, Route::Subtraction).unwrap(), &a);
            prop_assert_eq!(&m2c_moebius(&m).unwrap(), &a);
            prop_assert_eq!(c2m(&a), m);
        }

        #[test]
        fn cumulants_linearize_free_convolution((a, b) in (1usize..=8).prop_flat_map(|k| {
            let s = prop::collection::vec((-9i64..=9, 1i64..=5), k)
                .prop_map(|v| MomentSeq::new(v.into_iter().map(|(n, d)| rat(n, d)).collect::<Vec<Q>>()));
            (s.clone(), s)
        })) {
            let conv = free_add_convolve(&a, &b).unwrap();
            prop_assert_eq!(m2c(&conv), m2c(&a).add(&m2c(&b)).unwrap());
        }
    }

    #[test]
    fn checked_route_accepts_floats() {
        let m = MomentSeq::new(vec![0.5, 0.5, 0.5, 0.5, 0.5]);
        let c = m2c_checked(&m, |a: &f64, b: &f64| (a - b).abs() <= 1e-12).unwrap();
        assert!((c.get(4) + 1.0 / 16.0).abs() < 1e-15);
    }
}
