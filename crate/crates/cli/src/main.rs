use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freeconv::analytic::{conv_density, markov_kernel_density, EpsilonSchedule, MeasureHandle, StieltjesResult};
use freeconv::cumulants::{free_add_convolve, m2c_route, FreeWord, Route};
use freeconv::doc::{self, CumulantDoc, Measure, MeasureSpec};
use freeconv::families::{family_cumulants, family_moments, family_r, free_poisson_comparison, mult_convolve, FamilySpec};
use freeconv::measures::UniformGrid;
use freeconv::ncpart::{catalan, enumerate_nc, moebius_to_top_kreweras};
use freeconv::rmt::{self, ExperimentConfig, ExperimentReport, Tolerances};
use freeconv::{Complex64, Error};
use serde::Serialize;
use serde_json::{json, Value};

const DEFAULT_ORDER: usize = 8;
const DEFAULT_GRID_POINTS: usize = 400;

/// Free convolution toolkit: cumulants, analytic convolution, density
/// recovery and random-matrix checks.
#[derive(Debug, Parser)]
#[command(name = "freeconv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Non-crossing partitions of {1..n}.
    Nc(NcArgs),
    /// Free cumulants of a measure.
    Cumulants(CumulantsArgs),
    /// Free additive or multiplicative convolution.
    Convolve(ConvolveArgs),
    /// Density of a measure by Stieltjes inversion.
    Density(DensityArgs),
    /// Moments, cumulants and R-transform samples of a named family.
    Family(FamilyArgs),
    /// Random-matrix Monte Carlo experiment.
    Simulate(SimulateArgs),
    /// Transition kernel density of the subordination map at a point.
    Kernel(KernelArgs),
}

#[derive(Debug, Args, Serialize)]
struct Output {
    /// Write the main document here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
struct NcMode {
    /// One partition per line, as {{1,3},{2}}.
    #[arg(long)]
    list: bool,
    /// Catalan number |NC(n)|.
    #[arg(long)]
    count: bool,
    /// Each partition with mu(pi, 1_n), tab-separated.
    #[arg(long)]
    moebius: bool,
}

#[derive(Debug, Args, Serialize)]
struct NcArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    #[serde(flatten)]
    mode: NcMode,
    #[command(flatten)]
    #[serde(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct CumulantsArgs {
    /// Measure-spec JSON file.
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// a (series), b (subtraction) or moebius.
    #[arg(long, default_value = "a")]
    route: String,
    #[command(flatten)]
    #[serde(flatten)]
    output: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Op {
    Add,
    Mult,
}

#[derive(Debug, Args, Serialize)]
struct GridOpts {
    /// Grid as a:b:n; defaults to the padded support with 400 points.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Smallest inversion height; defaults to twice the grid step.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct ConvolveArgs {
    #[arg(long, value_enum)]
    op: Op,
    #[arg(long)]
    lhs: PathBuf,
    #[arg(long)]
    rhs: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Also recover the density of lhs ⊞ rhs analytically.
    #[arg(long)]
    analytic: bool,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridOpts,
    /// Where the analytic density CSV goes (required with --analytic).
    #[arg(long, requires = "analytic")]
    csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct DensityArgs {
    #[arg(long)]
    measure: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridOpts,
    #[command(flatten)]
    #[serde(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct FamilyArgs {
    #[arg(long)]
    name: String,
    /// Parameters as a JSON object, e.g. '{"sigma":1}'.
    #[arg(long, default_value = "{}")]
    params: String,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// R-transform sample point re,im (repeatable).
    #[arg(long = "at", value_name = "RE,IM")]
    at: Vec<String>,
    /// For free_poisson: compare against the n-fold free binomial.
    #[arg(long, value_name = "N")]
    compare_binomial: Option<u32>,
    #[command(flatten)]
    #[serde(flatten)]
    output: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Experiment {
    Additive,
    Diagonal,
    Word,
    Kernel,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    #[arg(long = "N", default_value_t = 500)]
    #[serde(rename = "N")]
    n: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Atomic measure-spec file for A.
    #[arg(long)]
    lhs: PathBuf,
    /// Atomic measure-spec file for B.
    #[arg(long)]
    rhs: PathBuf,
    /// Word in the letters X and Y (word experiment).
    #[arg(long)]
    word: Option<String>,
    /// Polynomial coefficients c0,c1,... of f (kernel experiment).
    #[arg(long, allow_hyphen_values = true)]
    f: Option<String>,
    /// Polynomial coefficients of g (kernel experiment).
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// Tolerances as JSON, fields se_factor, moment, ks, route.
    #[arg(long)]
    tolerances: Option<String>,
    /// Also write the per-trial CSV here.
    #[arg(long)]
    per_trial: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct KernelArgs {
    #[arg(long)]
    lhs: PathBuf,
    #[arg(long)]
    rhs: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridOpts,
    #[command(flatten)]
    #[serde(flatten)]
    output: Output,
}

/// Failure split by exit status: 2 for bad input, 1 for a solver that
/// gave up.
enum Failure {
    Usage(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence(_) => Failure::Numeric(e),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Run<T> {
    Err(Failure::Usage(msg.into()))
}

/// The first output line: artifact version, verb, resolved options, seed.
fn header(command: &Command) -> String {
    let value = serde_json::to_value(command).expect("options serialize");
    let (verb, options) = value.as_object().and_then(|o| o.iter().next()).map(|(k, v)| (k.clone(), v.clone())).expect("externally tagged");
    let seed = options.get("seed").cloned().unwrap_or(Value::Null);
    let h = json!({"artifact": "freeconv", "version": env!("CARGO_PKG_VERSION"), "verb": verb, "options": options, "seed": seed});
    format!("# {}\n", doc::to_json(&h).expect("header serializes"))
}

fn read_spec(path: &Path) -> Run<Measure> {
    let text = fs::read_to_string(path).or_else(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(MeasureSpec::parse(&text)?.resolve()?)
}

fn parse_grid(s: &str) -> Run<UniformGrid> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        return usage(format!("--grid wants a:b:n, got {s:?}"));
    };
    let bad = || Failure::Usage(format!("--grid wants a:b:n, got {s:?}"));
    let (a, b) = (a.parse::<f64>().map_err(|_| bad())?, b.parse::<f64>().map_err(|_| bad())?);
    Ok(UniformGrid::new(a, b, n.parse().map_err(|_| bad())?)?)
}

fn resolve_grid(opts: &GridOpts, (lo, hi): (f64, f64)) -> Run<UniformGrid> {
    match &opts.grid {
        Some(s) => parse_grid(s),
        None => {
            let pad = (0.05 * (hi - lo)).max(0.1);
            Ok(UniformGrid::new(lo - pad, hi + pad, DEFAULT_GRID_POINTS)?)
        }
    }
}

fn schedule(opts: &GridOpts, grid: &UniformGrid) -> Run<EpsilonSchedule> {
    Ok(match opts.epsilon {
        Some(e) => EpsilonSchedule::from_base(e)?,
        None => EpsilonSchedule::for_step(grid.step())?,
    })
}

/// Cauchy handles report loc ± scale; a default grid needs more room.
fn plot_bounds(h: &MeasureHandle) -> (f64, f64) {
    let (lo, hi) = h.bounds();
    match h.repr() {
        freeconv::analytic::Repr::Family(FamilySpec::Cauchy { .. }) => {
            let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            (c - 10.0 * r, c + 10.0 * r)
        }
        _ => (lo, hi),
    }
}

fn density_csv(head: &str, r: &StieltjesResult) -> String {
    eprintln!("{}", doc::to_json(&json!({"mass_defect": r.mass_defect, "clipped": r.clipped})).unwrap_or_default());
    format!("{head}{}", doc::grid_to_csv(&r.density))
}

fn parse_coeffs(flag: &str, s: &str) -> Run<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().or_else(|_| usage(format!("--{flag} wants comma-separated numbers, got {s:?}"))))
        .collect()
}

fn parse_point(s: &str) -> Run<Complex64> {
    let c = parse_coeffs("at", s)?;
    match c[..] {
        [re, im] => Ok(Complex64::new(re, im)),
        _ => usage(format!("--at wants re,im, got {s:?}")),
    }
}

fn run_nc(a: &NcArgs, head: &str) -> Run<String> {
    let mut out = head.to_string();
    if a.mode.count {
        let n = u32::try_from(a.n).or_else(|_| usage("--n is too large"))?;
        out.push_str(&format!("{}\n", catalan(n)?));
        return Ok(out);
    }
    let idx = enumerate_nc(a.n)?;
    for p in idx.iter() {
        if a.mode.moebius {
            out.push_str(&format!("{p}\t{}\n", moebius_to_top_kreweras(&p)?));
        } else {
            out.push_str(&format!("{p}\n"));
        }
    }
    Ok(out)
}

fn run_cumulants(a: &CumulantsArgs, head: &str) -> Run<String> {
    let route: Route = a.route.parse().or_else(|e: Error| usage(e.to_string()))?;
    let m = read_spec(&a.measure)?.moments(a.order)?;
    let c = m2c_route(&m, route)?;
    Ok(format!("{head}{}\n", doc::to_json(&CumulantDoc::new(&c))?))
}

fn run_convolve(a: &ConvolveArgs, head: &str) -> Run<String> {
    let (lhs, rhs) = (read_spec(&a.lhs)?, read_spec(&a.rhs)?);
    let spec = match a.op {
        Op::Add => MeasureSpec::from_moments(&free_add_convolve(&lhs.moments(a.order)?, &rhs.moments(a.order)?)?),
        Op::Mult => {
            if a.analytic {
                return usage("--analytic is only available for --op add");
            }
            MeasureSpec::from_circle_moments(&mult_convolve(&lhs.circle_moments(a.order)?, &rhs.circle_moments(a.order)?, a.order)?)
        }
    };
    if a.analytic {
        let Some(csv) = &a.csv else {
            return usage("--analytic needs --csv FILE for the density");
        };
        let (ha, hb) = (lhs.handle()?, rhs.handle()?);
        let ((la, ua), (lb, ub)) = (plot_bounds(&ha), plot_bounds(&hb));
        let grid = resolve_grid(&a.grid, (la + lb, ua + ub))?;
        let r = conv_density(&ha, &hb, &grid, &schedule(&a.grid, &grid)?)?;
        write_file(csv, &density_csv(head, &r))?;
    }
    Ok(format!("{head}{}\n", spec.to_json()?))
}

fn run_density(a: &DensityArgs, head: &str) -> Run<String> {
    let h = read_spec(&a.measure)?.handle()?;
    let grid = resolve_grid(&a.grid, plot_bounds(&h))?;
    let r = freeconv::analytic::stieltjes_density(|z| freeconv::analytic::cauchy_g(&h, z), &grid, &schedule(&a.grid, &grid)?)?;
    Ok(density_csv(head, &r))
}

fn run_family(a: &FamilyArgs, head: &str) -> Run<String> {
    let params: serde_json::Map<String, Value> =
        serde_json::from_str(&a.params).or_else(|e| usage(format!("--params must be a JSON object: {e}")))?;
    let spec = doc::family_from_params(&a.name, &params)?;
    let points = if a.at.is_empty() {
        (1..=4).map(|k| Complex64::new(0.0, -0.05 * k as f64)).collect()
    } else {
        a.at.iter().map(|s| parse_point(s)).collect::<Run<Vec<_>>>()?
    };
    let r_samples = points
        .iter()
        .map(|&z| Ok([z.re, z.im, family_r(&spec, z)?.re, family_r(&spec, z)?.im]))
        .collect::<Run<Vec<_>>>()?;
    // heavy-tailed laws have no moments; they still get R samples
    let moments = family_moments(&spec, a.order).ok().map(|m| m.values().to_vec());
    let cumulants = family_cumulants(&spec, a.order).ok().map(|c| c.values().to_vec());
    let mut report = json!({
        "measure": MeasureSpec::from_family(&spec),
        "moments": moments,
        "cumulants": cumulants,
        "r_samples": r_samples,
    });
    if let Some(n) = a.compare_binomial {
        let FamilySpec::FreePoisson { lambda, t } = spec else {
            return usage("--compare-binomial applies to free_poisson only");
        };
        report["free_poisson_comparison"] = serde_json::to_value(free_poisson_comparison(lambda, t, n, a.order)?).expect("comparison serializes");
    }
    Ok(format!("{head}{}\n", doc::to_json(&report)?))
}

fn run_simulate(a: &SimulateArgs, head: &str) -> Run<String> {
    let (lhs, rhs) = (read_spec(&a.lhs)?, read_spec(&a.rhs)?);
    let (lhs, rhs) = (lhs.atomic()?, rhs.atomic()?);
    let mut cfg = ExperimentConfig::new(a.n, a.trials, a.seed);
    if let Some(t) = &a.tolerances {
        cfg.tolerances = serde_json::from_str::<Tolerances>(t).or_else(|e| usage(format!("--tolerances: {e}")))?;
    }
    let report: ExperimentReport = match a.experiment {
        Experiment::Additive => rmt::additive_experiment(lhs, rhs, &cfg)?,
        Experiment::Diagonal => rmt::diagonal_experiment(lhs, rhs, &cfg)?,
        Experiment::Word => {
            let Some(w) = &a.word else { return usage("--experiment word needs --word") };
            rmt::word_trace_experiment(&w.parse::<FreeWord>()?, lhs, rhs, &cfg)?
        }
        Experiment::Kernel => {
            let (Some(f), Some(g)) = (&a.f, &a.g) else { return usage("--experiment kernel needs --f and --g") };
            rmt::kernel_experiment(lhs, rhs, &parse_coeffs("f", f)?, &parse_coeffs("g", g)?, &cfg)?
        }
    };
    if let Some(path) = &a.per_trial {
        write_file(path, &format!("{head}{}", report.per_trial_csv()))?;
    }
    Ok(format!("{head}{}\n", doc::to_json(&report)?))
}

fn run_kernel(a: &KernelArgs, head: &str) -> Run<String> {
    let (ha, hb) = (read_spec(&a.lhs)?.handle()?, read_spec(&a.rhs)?.handle()?);
    let ((la, ua), (lb, ub)) = (plot_bounds(&ha), plot_bounds(&hb));
    let grid = resolve_grid(&a.grid, (la + lb, ua + ub))?;
    let r = markov_kernel_density(&ha, &hb, a.x, &grid, &schedule(&a.grid, &grid)?)?;
    Ok(density_csv(head, &r))
}

fn write_file(path: &Path, text: &str) -> Run<()> {
    fs::write(path, text).or_else(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn output_of(command: &Command) -> &Output {
    match command {
        Command::Nc(a) => &a.output,
        Command::Cumulants(a) => &a.output,
        Command::Convolve(a) => &a.output,
        Command::Density(a) => &a.output,
        Command::Family(a) => &a.output,
        Command::Simulate(a) => &a.output,
        Command::Kernel(a) => &a.output,
    }
}

fn run(command: &Command) -> Run<()> {
    let head = header(command);
    let text = match command {
        Command::Nc(a) => run_nc(a, &head)?,
        Command::Cumulants(a) => run_cumulants(a, &head)?,
        Command::Convolve(a) => run_convolve(a, &head)?,
        Command::Density(a) => run_density(a, &head)?,
        Command::Family(a) => run_family(a, &head)?,
        Command::Simulate(a) => run_simulate(a, &head)?,
        Command::Kernel(a) => run_kernel(a, &head)?,
    };
    match &output_of(command).out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("freeconv: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("freeconv: {e}");
            if let Error::NonConvergence(d) = &e {
                eprintln!("{}", doc::to_json(d).unwrap_or_default());
            }
            ExitCode::from(1)
        }
    }
}
