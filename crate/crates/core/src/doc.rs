//! Document formats: measure specs (JSON), grid densities (CSV) and the
//! number formatting shared by every emitted document.
//!
//! A measure spec is one of
//!
//! ```json
//! {"type":"atomic","atoms":[[x,w],...]}
//! {"type":"grid","x0":...,"step":...,"ps":[...]}
//! {"type":"moments","m":[...]}
//! {"type":"family","name":...,"params":{...}}
//! ```
//!
//! plus two circle forms used by `⊠`:
//! `{"type":"circle_moments","m":[[re,im],...]}` and
//! `{"type":"circle_atomic","atoms":[[re,im,w],...]}`.
//!
//! Lines starting with `#` are comments in both JSON and CSV inputs; the
//! command-line tool writes its run header that way.

use std::io;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analytic::MeasureHandle;
use crate::cumulants::CumulantSeq;
use crate::error::{Error, Result};
use crate::families::{family_moments, FamilySpec, StableCase};
use crate::measures::{moments_of, AtomicMeasure, CircleMomentSeq, GridDensity, MomentSeq, DEFAULT_MASS_TOL};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON formatter writing every float with [`fmt_f64`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with full-precision floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// Drops `#` comment lines.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with('#')).collect::<Vec<_>>().join("\n")
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(&strip_comments(text)).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasureSpec {
    Atomic { atoms: Vec<[f64; 2]> },
    Grid { x0: f64, step: f64, ps: Vec<f64> },
    Moments { m: Vec<f64> },
    Family { name: String, params: Map<String, Value> },
    CircleMoments { m: Vec<[f64; 2]> },
    CircleAtomic { atoms: Vec<[f64; 3]> },
}

/// A validated measure spec.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Atomic(AtomicMeasure),
    Grid(GridDensity),
    Moments(MomentSeq),
    Family(FamilySpec),
    Circle(CircleMomentSeq),
    CircleAtomic(Vec<(Complex64, f64)>),
}

impl MeasureSpec {
    pub fn parse(text: &str) -> Result<Self> {
        from_json(text)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    pub fn resolve(&self) -> Result<Measure> {
        Ok(match self {
            MeasureSpec::Atomic { atoms } => Measure::Atomic(AtomicMeasure::new(atoms.iter().map(|a| (a[0], a[1])).collect())?),
            MeasureSpec::Grid { x0, step, ps } => Measure::Grid(GridDensity::new(*x0, *step, ps.clone())?),
            MeasureSpec::Moments { m } => Measure::Moments(MomentSeq::new(m.clone())),
            MeasureSpec::Family { name, params } => Measure::Family(family_from_params(name, params)?),
            MeasureSpec::CircleMoments { m } => {
                Measure::Circle(CircleMomentSeq::new(m.iter().map(|v| Complex64::new(v[0], v[1])).collect())?)
            }
            MeasureSpec::CircleAtomic { atoms } => {
                let atoms: Vec<(Complex64, f64)> = atoms.iter().map(|a| (Complex64::new(a[0], a[1]), a[2])).collect();
                // validate through a first moment
                CircleMomentSeq::from_atoms(&atoms, 1)?;
                Measure::CircleAtomic(atoms)
            }
        })
    }

    pub fn from_atomic(m: &AtomicMeasure) -> Self {
        MeasureSpec::Atomic { atoms: m.atoms().iter().map(|&(x, w)| [x, w]).collect() }
    }

    pub fn from_grid(d: &GridDensity) -> Self {
        MeasureSpec::Grid { x0: d.x0(), step: d.step(), ps: d.ps().to_vec() }
    }

    pub fn from_moments(m: &MomentSeq) -> Self {
        MeasureSpec::Moments { m: m.values().to_vec() }
    }

    pub fn from_family(spec: &FamilySpec) -> Self {
        MeasureSpec::Family { name: spec.name().to_string(), params: family_to_params(spec) }
    }

    pub fn from_circle_moments(m: &CircleMomentSeq) -> Self {
        MeasureSpec::CircleMoments { m: m.values().iter().map(|z| [z.re, z.im]).collect() }
    }
}

impl Measure {
    /// Moments `m_1..m_K` of a measure on the line.
    pub fn moments(&self, order: usize) -> Result<MomentSeq> {
        match self {
            Measure::Atomic(m) => moments_of(m, order),
            Measure::Grid(d) => moments_of(d, order),
            Measure::Moments(m) => {
                if m.order() < order {
                    return Err(Error::OrderMismatch(m.order(), order));
                }
                Ok(m.truncate(order))
            }
            Measure::Family(s) => family_moments(s, order),
            Measure::Circle(_) | Measure::CircleAtomic(_) => Err(Error::InvalidArgument("circle measure where a measure on the line is needed".into())),
        }
    }

    pub fn circle_moments(&self, order: usize) -> Result<CircleMomentSeq> {
        match self {
            Measure::Circle(m) => {
                if m.order() < order {
                    return Err(Error::OrderMismatch(m.order(), order));
                }
                CircleMomentSeq::new(m.values()[..order].to_vec())
            }
            Measure::CircleAtomic(atoms) => CircleMomentSeq::from_atoms(atoms, order),
            _ => Err(Error::InvalidArgument("measure on the line where a circle measure is needed".into())),
        }
    }

    /// A handle for the analytic layer; moment sequences have none.
    pub fn handle(&self) -> Result<MeasureHandle> {
        match self {
            Measure::Atomic(m) => Ok(MeasureHandle::atomic(m.clone())),
            Measure::Grid(d) => Ok(MeasureHandle::grid(d.clone())),
            Measure::Family(s) => MeasureHandle::family(s.clone()),
            Measure::Moments(_) => Err(Error::Unsupported("a moment sequence has no Cauchy transform; use the moment route".into())),
            Measure::Circle(_) | Measure::CircleAtomic(_) => Err(Error::Unsupported("circle measures live at the series level only".into())),
        }
    }

    pub fn atomic(&self) -> Result<&AtomicMeasure> {
        match self {
            Measure::Atomic(m) => Ok(m),
            _ => Err(Error::InvalidArgument("an atomic measure spec is required".into())),
        }
    }
}

fn param(params: &Map<String, Value>, key: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Parse(format!("missing numeric parameter {key:?}")))
}

fn param_or(params: &Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    if params.contains_key(key) { param(params, key) } else { Ok(default) }
}

fn check_keys(name: &str, params: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Parse(format!("unknown parameter {k:?} for family {name:?} (expected {allowed:?})"))),
        None => Ok(()),
    }
}

/// Builds a [`FamilySpec`] from the `name`/`params` pair of a measure spec.
pub fn family_from_params(name: &str, params: &Map<String, Value>) -> Result<FamilySpec> {
    let keys = |allowed: &[&str]| check_keys(name, params, allowed);
    let spec = match name {
        "semicircle" => {
            keys(&["sigma"])?;
            FamilySpec::Semicircle { sigma: param(params, "sigma")? }
        }
        "arcsine" => {
            keys(&["a", "b"])?;
            FamilySpec::Arcsine { a: param(params, "a")?, b: param(params, "b")? }
        }
        "bernoulli" => {
            keys(&["p", "x0", "x1"])?;
            FamilySpec::Bernoulli { p: param(params, "p")?, x0: param_or(params, "x0", 0.0)?, x1: param_or(params, "x1", 1.0)? }
        }
        "dirac" => {
            keys(&["a"])?;
            FamilySpec::Dirac { a: param(params, "a")? }
        }
        "cauchy" => {
            keys(&["loc", "scale"])?;
            FamilySpec::Cauchy { loc: param_or(params, "loc", 0.0)?, scale: param(params, "scale")? }
        }
        "free_stable" => {
            let case = params.get("case").and_then(Value::as_u64).ok_or_else(|| Error::Parse("free_stable needs an integer \"case\"".into()))?;
            match case {
                1 | 3 => {
                    keys(&["case", "alpha", "theta"])?;
                    let (alpha, theta) = (param(params, "alpha")?, param(params, "theta")?);
                    FamilySpec::FreeStable(if case == 1 { StableCase::One { alpha, theta } } else { StableCase::Three { alpha, theta } })
                }
                2 => {
                    keys(&["case", "a_re", "a_im", "b"])?;
                    FamilySpec::FreeStable(StableCase::Two {
                        a: Complex64::new(param(params, "a_re")?, param_or(params, "a_im", 0.0)?),
                        b: param(params, "b")?,
                    })
                }
                other => return Err(Error::Parse(format!("free_stable case must be 1, 2 or 3, got {other}"))),
            }
        }
        "freeLK" => {
            keys(&["alpha", "nu"])?;
            let nu = match params.get("nu") {
                None => Vec::new(),
                Some(v) => serde_json::from_value::<Vec<[f64; 2]>>(v.clone())
                    .map_err(|e| Error::Parse(format!("freeLK nu must be [[t, w], ...]: {e}")))?
                    .into_iter()
                    .map(|a| (a[0], a[1]))
                    .collect(),
            };
            FamilySpec::FreeLK { alpha: param_or(params, "alpha", 0.0)?, nu }
        }
        "free_poisson" | "free_poisson_limit" => {
            keys(&["lambda", "t"])?;
            let (lambda, t) = (param(params, "lambda")?, param_or(params, "t", 1.0)?);
            if name == "free_poisson" { FamilySpec::FreePoisson { lambda, t } } else { FamilySpec::FreePoissonLimit { lambda, t } }
        }
        "free_binomial" => {
            keys(&["n", "lambda", "t"])?;
            let n = params.get("n").and_then(Value::as_u64).ok_or_else(|| Error::Parse("free_binomial needs an integer \"n\"".into()))?;
            let n = u32::try_from(n).map_err(|_| Error::Parse(format!("free_binomial n={n} is too large")))?;
            FamilySpec::FreeBinomial { n, lambda: param(params, "lambda")?, t: param_or(params, "t", 1.0)? }
        }
        other => return Err(Error::Parse(format!("unknown family {other:?}"))),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn family_to_params(spec: &FamilySpec) -> Map<String, Value> {
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    match spec {
        FamilySpec::Semicircle { sigma } => put("sigma", (*sigma).into()),
        FamilySpec::Arcsine { a, b } => {
            put("a", (*a).into());
            put("b", (*b).into());
        }
        FamilySpec::Bernoulli { p, x0, x1 } => {
            put("p", (*p).into());
            put("x0", (*x0).into());
            put("x1", (*x1).into());
        }
        FamilySpec::Dirac { a } => put("a", (*a).into()),
        FamilySpec::Cauchy { loc, scale } => {
            put("loc", (*loc).into());
            put("scale", (*scale).into());
        }
        FamilySpec::FreeStable(StableCase::One { alpha, theta }) | FamilySpec::FreeStable(StableCase::Three { alpha, theta }) => {
            put("case", if matches!(spec, FamilySpec::FreeStable(StableCase::One { .. })) { 1 } else { 3 }.into());
            put("alpha", (*alpha).into());
            put("theta", (*theta).into());
        }
        FamilySpec::FreeStable(StableCase::Two { a, b }) => {
            put("case", 2.into());
            put("a_re", a.re.into());
            put("a_im", a.im.into());
            put("b", (*b).into());
        }
        FamilySpec::FreeLK { alpha, nu } => {
            put("alpha", (*alpha).into());
            put("nu", Value::Array(nu.iter().map(|&(t, w)| Value::Array(vec![t.into(), w.into()])).collect()));
        }
        FamilySpec::FreePoisson { lambda, t } | FamilySpec::FreePoissonLimit { lambda, t } => {
            put("lambda", (*lambda).into());
            put("t", (*t).into());
        }
        FamilySpec::FreeBinomial { n, lambda, t } => {
            put("n", (*n).into());
            put("lambda", (*lambda).into());
            put("t", (*t).into());
        }
    }
    m
}

/// `{"type":"cumulants","c":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "cumulants")]
pub struct CumulantDoc {
    pub c: Vec<f64>,
}

impl CumulantDoc {
    pub fn new(c: &CumulantSeq) -> Self {
        Self { c: c.values().to_vec() }
    }

    pub fn to_seq(&self) -> CumulantSeq {
        CumulantSeq::new(self.c.clone())
    }
}

/// `x,p` CSV with one row per grid node.
pub fn grid_to_csv(d: &GridDensity) -> String {
    let mut out = String::from("x,p\n");
    for (i, p) in d.ps().iter().enumerate() {
        out.push_str(&fmt_f64(d.x(i)));
        out.push(',');
        out.push_str(&fmt_f64(*p));
        out.push('\n');
    }
    out
}

/// Parses an `x,p` CSV; `x` must be uniformly spaced.
pub fn grid_from_csv(text: &str) -> Result<GridDensity> {
    grid_from_csv_with_tolerance(text, DEFAULT_MASS_TOL)
}

pub fn grid_from_csv_with_tolerance(text: &str, mass_tolerance: f64) -> Result<GridDensity> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some("x,p") => {}
        other => return Err(Error::Parse(format!("expected header \"x,p\", found {other:?}"))),
    }
    let mut xs = Vec::new();
    let mut ps = Vec::new();
    for (row, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let (Some(x), Some(p), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse(format!("row {}: expected two fields in {line:?}", row + 1)));
        };
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)));
        xs.push(parse(x)?);
        ps.push(parse(p)?);
    }
    if xs.len() < 2 {
        return Err(Error::Parse("a grid density needs at least two rows".into()));
    }
    let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    for (i, &x) in xs.iter().enumerate() {
        if (x - (xs[0] + step * i as f64)).abs() > 1e-9 * (1.0 + x.abs()) {
            return Err(Error::Parse(format!("row {}: x={x} breaks the uniform spacing", i + 1)));
        }
    }
    GridDensity::with_mass_tolerance(xs[0], step, ps, mass_tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::UniformGrid;
    use proptest::prelude::*;

    #[test]
    fn full_precision_numbers() {
        let s = to_json(&serde_json::json!({"x": 0.1, "n": 3, "v": [1.0, -2.5e-300]})).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
        assert_eq!(back["n"].as_u64(), Some(3));
        assert_eq!(back["v"][1].as_f64(), Some(-2.5e-300));
    }

    #[test]
    fn measure_spec_examples() {
        let spec = MeasureSpec::parse(r#"{"type":"atomic","atoms":[[0,0.5],[1,0.5]]}"#).unwrap();
        let m = spec.resolve().unwrap();
        assert_eq!(m.moments(3).unwrap().values(), &[0.5, 0.5, 0.5]);
        let fam = MeasureSpec::parse("# comment\n{\"type\":\"family\",\"name\":\"semicircle\",\"params\":{\"sigma\":1}}").unwrap();
        assert_eq!(fam.resolve().unwrap(), Measure::Family(FamilySpec::Semicircle { sigma: 1.0 }));
        assert!(MeasureSpec::parse(r#"{"type":"family","name":"semicircle","params":{"sigma":1,"mu":2}}"#).unwrap().resolve().is_err());
        assert!(MeasureSpec::parse(r#"{"type":"family","name":"nope","params":{}}"#).unwrap().resolve().is_err());
        assert!(MeasureSpec::parse(r#"{"type":"atomic","atoms":[[0,0.5]]}"#).unwrap().resolve().is_err());
        assert!(MeasureSpec::parse(r#"{"type":"blob"}"#).is_err());
        let lk = MeasureSpec::parse(r#"{"type":"family","name":"freeLK","params":{"alpha":0.5,"nu":[[0,1],[2,0.5]]}}"#).unwrap();
        assert_eq!(lk.resolve().unwrap(), Measure::Family(FamilySpec::FreeLK { alpha: 0.5, nu: vec![(0.0, 1.0), (2.0, 0.5)] }));
    }

    #[test]
    fn every_family_round_trips() {
        let specs = vec![
            FamilySpec::Semicircle { sigma: 0.3 },
            FamilySpec::Arcsine { a: -1.0, b: 2.0 },
            FamilySpec::Bernoulli { p: 0.2, x0: -1.0, x1: 3.0 },
            FamilySpec::Dirac { a: 0.1 },
            FamilySpec::Cauchy { loc: 1.0, scale: 0.5 },
            FamilySpec::FreeStable(StableCase::One { alpha: 1.5, theta: -0.25 }),
            FamilySpec::FreeStable(StableCase::Two { a: Complex64::new(0.5, 1.0), b: 0.1 }),
            FamilySpec::FreeStable(StableCase::Three { alpha: 0.5, theta: 1.25 }),
            FamilySpec::FreeLK { alpha: 0.1, nu: vec![(0.5, 2.0)] },
            FamilySpec::FreePoisson { lambda: 2.0, t: 1.5 },
            FamilySpec::FreePoissonLimit { lambda: 2.0, t: 1.5 },
            FamilySpec::FreeBinomial { n: 7, lambda: 2.0, t: 1.5 },
        ];
        for s in specs {
            let doc = MeasureSpec::from_family(&s).to_json().unwrap();
            assert_eq!(MeasureSpec::parse(&doc).unwrap().resolve().unwrap(), Measure::Family(s));
        }
    }

    #[test]
    fn circle_specs() {
        let m = MeasureSpec::parse(r#"{"type":"circle_atomic","atoms":[[1,0,0.5],[0,1,0.5]]}"#).unwrap().resolve().unwrap();
        let c = m.circle_moments(2).unwrap();
        assert!((c.get(1) - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        let doc = MeasureSpec::from_circle_moments(&c).to_json().unwrap();
        assert_eq!(MeasureSpec::parse(&doc).unwrap().resolve().unwrap(), Measure::Circle(c));
        assert!(MeasureSpec::parse(r#"{"type":"circle_moments","m":[[2,0]]}"#).unwrap().resolve().is_err());
    }

    #[test]
    fn grid_csv_round_trip() {
        let grid = UniformGrid::new(-1.0, 1.0, 201).unwrap();
        let d = GridDensity::sample(&grid, |x| 0.75 * (1.0 - x * x), 0.01).unwrap();
        let csv = grid_to_csv(&d);
        assert!(csv.starts_with("x,p\n"));
        let back = grid_from_csv(&format!("# header\n{csv}")).unwrap();
        assert_eq!(back.ps(), d.ps());
        assert!((back.x0() - d.x0()).abs() < 1e-15 && (back.step() - d.step()).abs() < 1e-15);
        assert!(grid_from_csv("x,p\n0,1\n1,1\n3,1\n").is_err());
        assert!(grid_from_csv("a,b\n0,1\n").is_err());
    }

    proptest! {
        #[test]
        fn atomic_and_moment_specs_round_trip(raw in prop::collection::vec((-1e3f64..1e3, 0.01f64..1.0), 1..8), m in prop::collection::vec(-1e6f64..1e6, 1..10)) {
            let total: f64 = raw.iter().map(|a| a.1).sum();
            let atoms: Vec<[f64; 2]> = raw.iter().map(|&(x, w)| [x, w / total]).collect();
            let spec = MeasureSpec::Atomic { atoms };
            prop_assert_eq!(MeasureSpec::parse(&spec.to_json().unwrap()).unwrap(), spec);
            let ms = MeasureSpec::Moments { m };
            prop_assert_eq!(MeasureSpec::parse(&ms.to_json().unwrap()).unwrap(), ms);
        }
    }
}
