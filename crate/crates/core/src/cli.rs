//! Command-line front end.
//!
//! Every numeric setting is resolved as flag > `--config` file > default.
//! Config files are flat `key=value`; model keys are shared with
//! [`ModelConfig`], run keys use the flag name with `-` replaced by `_`.
//! Each output file gets a `<file>.manifest` sidecar in the same format, which
//! can be fed back through `--config` to rerun.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::crossing::{self, CrossingEstimate, McSettings};
use crate::error::{invalid, Error};
use crate::lyapunov::{certify_drift, select_constants, GridSpec};
use crate::model::config::{ModelConfig, KEYS};
use crate::model::{ModelSpec, State};
use crate::pde::{self, Grid1D, Observable, PdeSolution};
use crate::simulate::{self, path_seed, BinAxis, EnsembleStat, SimConfig};

pub const THREADS_ENV: &str = "PENOSC_THREADS";
pub const TABLE4_N: [u32; 6] = [2, 5, 10, 50, 100, 1000];

/// Manifest bookkeeping keys, accepted and skipped when a manifest is reused
/// as a config file.
const RESERVED: [&str; 4] = ["subcommand", "version", "output", "duration_s"];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "penosc", version, about = "Penalized non-smooth stochastic oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Euler-Maruyama trajectory as `t,<state>` CSV.
    Simulate(SimulateArgs),
    /// Histogram of a long path after burn-in.
    Invariant(InvariantArgs),
    /// Grid certification of the Lyapunov drift bound. Exits 1 on violations.
    DriftCheck(DriftArgs),
    /// Feynman-Kac mean and variance fields at y = 0.
    Pde(PdeArgs),
    /// `v(0, T)` for n in 2, 5, 10, 50, 100, 1000.
    Table4(Table4Args),
    /// Diffusion coefficient from the slope of `v(0, tau)`.
    Gamma(GammaArgs),
    /// Threshold-crossing probabilities over a T grid.
    Crossing(CrossingArgs),
    /// PDE and Monte Carlo variance curves on a log time grid.
    Fig2a(Fig2aArgs),
    /// Crossing curves for several p and the limiting curve.
    Fig2b(Fig2bArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout if absent, no manifest then).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// epp, fp or op [fp]
    #[arg(long)]
    model: Option<String>,
    /// Penalization level [100]
    #[arg(long)]
    n: Option<u32>,
    /// Damping C_b [1]
    #[arg(long)]
    cb: Option<f64>,
    /// zero or quadratic [quadratic]
    #[arg(long)]
    potential: Option<String>,
    /// Quadratic stiffness [1]
    #[arg(long)]
    k: Option<f64>,
    /// white, ou or kt [white]
    #[arg(long)]
    noise: Option<String>,
    /// OU mean reversion [1]
    #[arg(long = "theta-v")]
    theta_v: Option<f64>,
    /// OU inverse temperature [2]
    #[arg(long)]
    beta: Option<f64>,
    /// Kanai-Tajimi stiffness [1]
    #[arg(long = "kt-k")]
    kt_k: Option<f64>,
    /// Kanai-Tajimi damping [1]
    #[arg(long = "kt-gamma0")]
    kt_gamma0: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Time step [1e-3 for n <= 100, else 1e-4]
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon [10]
    #[arg(long = "T")]
    t: Option<f64>,
    /// Base seed [0]
    #[arg(long)]
    seed: Option<u64>,
    /// Store every k-th step [1]
    #[arg(long)]
    stride: Option<usize>,
    /// Initial state, comma separated in column order [origin]
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<String>,
}

#[derive(Args, Debug)]
struct InvariantArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon [10000]
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Burn-in as a fraction of T [0.1]
    #[arg(long = "burn-in")]
    burn_in: Option<f64>,
    /// Bins per axis [40]
    #[arg(long)]
    bins: Option<usize>,
    /// Lower edge of every axis [-2]
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    /// Upper edge of every axis [2]
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    /// Histogrammed components [y,x]
    #[arg(long)]
    components: Option<String>,
}

#[derive(Args, Debug)]
struct DriftArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Multiple of each constant's lower bound [1.01]
    #[arg(long)]
    margin: Option<f64>,
    /// Grid is [-w, w]^d [10]
    #[arg(long = "half-width")]
    half_width: Option<f64>,
    /// Nodes per axis [101]
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Half width of the y domain [10]
    #[arg(long = "L")]
    l: Option<f64>,
    /// Grid nodes [2001]
    #[arg(long = "N")]
    nodes: Option<usize>,
    /// Time step [1e-3]
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug)]
struct PdeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    /// Penalization level [100]
    #[arg(long)]
    n: Option<u32>,
    /// Horizon [100]
    #[arg(long = "T")]
    t: Option<f64>,
    /// identity, square, indicator:a,b or constant:c [identity]
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// Log-spaced output times [100]
    #[arg(long)]
    checkpoints: Option<usize>,
    /// First output time [0.01]
    #[arg(long = "t-min")]
    t_min: Option<f64>,
    /// Also write `y,w,v` at each output time to `<out>.tau_<k>.csv`
    #[arg(long)]
    snapshots: bool,
}

#[derive(Args, Debug)]
struct Table4Args {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    /// Horizon [100]
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
}

#[derive(Args, Debug)]
struct GammaArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    n: Option<u32>,
    /// Horizon [100]
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// Fit over [window T, T] [0.5]
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Args, Debug)]
struct CrossingArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    /// Threshold [0.6]
    #[arg(long)]
    b: Option<f64>,
    /// Largest T of the grid [20]
    #[arg(long = "T")]
    t: Option<f64>,
    /// Grid points T/k, 2T/k, ..., T [20]
    #[arg(long = "t-points")]
    t_points: Option<usize>,
    /// Time scale, required for mc and both
    #[arg(long)]
    p: Option<f64>,
    /// Monte Carlo paths [10000]
    #[arg(long = "M")]
    m: Option<usize>,
    /// mc, asymptotic or both [asymptotic]
    #[arg(long)]
    method: Option<String>,
    /// Monte Carlo step [1e-2]
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use this gamma^2 instead of solving for it
    #[arg(long = "gamma-sq")]
    gamma_sq: Option<f64>,
}

#[derive(Args, Debug)]
struct Fig2aArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    n: Option<u32>,
    /// Monte Carlo paths [100000]
    #[arg(long)]
    paths: Option<usize>,
    /// Log-spaced times in [0.1, 10] [20]
    #[arg(long)]
    taus: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct Fig2bArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long = "t-points")]
    t_points: Option<usize>,
    /// Comma separated p values [1,10,100,1000]
    #[arg(long)]
    ps: Option<String>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "gamma-sq")]
    gamma_sq: Option<f64>,
}

/// Float formatting for every CSV: 17 significant digits, exact round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Config file entries plus the resolved values that end up in the manifest.
struct Settings {
    file: BTreeMap<String, (usize, String)>,
    used: BTreeSet<String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    fn load(subcommand: &str, path: Option<&Path>) -> CliResult<Self> {
        let mut file = BTreeMap::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                    line: i + 1,
                    message: format!("expected key=value, got '{line}'"),
                })?;
                let (k, v) = (k.trim().to_string(), v.trim().to_string());
                if k == "subcommand" && v != subcommand {
                    return Err(Error::Config {
                        line: i + 1,
                        message: format!("file is for '{v}', not '{subcommand}'"),
                    }
                    .into());
                }
                file.insert(k, (i + 1, v));
            }
        }
        Ok(Self {
            file,
            used: BTreeSet::new(),
            resolved: Vec::new(),
        })
    }

    fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T> {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some((line, raw)) => raw.parse().map_err(|_| Error::Config {
                    line: *line,
                    message: format!("cannot parse {key}='{raw}'"),
                })?,
                None => default,
            },
        };
        self.resolved.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    fn get_opt<T: FromStr + Display + Clone>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>> {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some((line, raw)) => Some(raw.parse().map_err(|_| Error::Config {
                    line: *line,
                    message: format!("cannot parse {key}='{raw}'"),
                })?),
                None => None,
            },
        };
        if let Some(x) = &v {
            self.resolved.push((key.to_string(), x.to_string()));
        }
        Ok(v)
    }

    fn model(&mut self, flags: &ModelArgs) -> CliResult<ModelConfig> {
        let mut cfg = ModelConfig::default();
        for key in KEYS {
            if let Some((line, raw)) = self.file.get(key) {
                self.used.insert(key.to_string());
                cfg.set(key, raw).map_err(|e| Error::Config {
                    line: *line,
                    message: e.to_string(),
                })?;
            }
        }
        let pairs: [(&str, Option<String>); 10] = [
            ("model", flags.model.clone()),
            ("n", flags.n.map(|v| v.to_string())),
            ("cb", flags.cb.map(|v| v.to_string())),
            ("potential", flags.potential.clone()),
            ("k", flags.k.map(|v| v.to_string())),
            ("noise", flags.noise.clone()),
            ("theta_v", flags.theta_v.map(|v| v.to_string())),
            ("beta", flags.beta.map(|v| v.to_string())),
            ("kt_k", flags.kt_k.map(|v| v.to_string())),
            ("kt_gamma0", flags.kt_gamma0.map(|v| v.to_string())),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for line in cfg.to_text().lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.resolved.push((k.to_string(), v.to_string()));
            }
        }
        Ok(cfg)
    }

    fn grid(&mut self, flags: &GridArgs, t_end: f64) -> CliResult<Grid1D> {
        let l = self.get("L", flags.l, 10.0)?;
        let nodes = self.get("N", flags.nodes, 2001)?;
        let dt = self.get("dt", flags.dt, 1e-3)?;
        Ok(Grid1D::new(l, nodes, dt, t_end)?)
    }

    fn observable(&mut self, flag: Option<String>) -> CliResult<Observable> {
        let s = self.get("g", flag, "identity".to_string())?;
        Ok(Observable::parse(&s)?)
    }

    /// Rejects config keys nobody asked for; model keys are always tolerated.
    fn finish(&self) -> CliResult<()> {
        let used = &self.used;
        for (k, (line, _)) in &self.file {
            if !used.contains(k) && !KEYS.contains(&k.as_str()) && !RESERVED.contains(&k.as_str()) {
                return Err(Error::Config {
                    line: *line,
                    message: format!("unknown key '{k}'"),
                }
                .into());
            }
        }
        Ok(())
    }
}

struct Run {
    subcommand: &'static str,
    settings: Settings,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(subcommand: &'static str, common: &Common) -> CliResult<Self> {
        Ok(Self {
            subcommand,
            settings: Settings::load(subcommand, common.config.as_deref())?,
            started: Instant::now(),
            outputs: Vec::new(),
        })
    }

    /// Writes `body` to `path` (or stdout) and remembers it for the manifest.
    fn emit(&mut self, path: Option<&Path>, body: &str) -> CliResult<()> {
        match path {
            Some(p) => {
                std::fs::write(p, body)?;
                self.outputs.push(p.to_path_buf());
            }
            None => print!("{body}"),
        }
        Ok(())
    }

    fn manifest_text(&self, extra: &[(String, String)]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "subcommand={}", self.subcommand);
        let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.settings.resolved {
            let _ = writeln!(s, "{k}={v}");
        }
        let outs: Vec<String> = self.outputs.iter().map(|p| p.display().to_string()).collect();
        let _ = writeln!(s, "output={}", outs.join(","));
        for (k, v) in extra {
            let _ = writeln!(s, "# {k}={v}");
        }
        let _ = writeln!(s, "duration_s={:.3}", self.started.elapsed().as_secs_f64());
        s
    }

    /// One manifest per output file, all with the same content.
    fn finish(self, extra: &[(String, String)]) -> CliResult<()> {
        self.settings.finish()?;
        let text = self.manifest_text(extra);
        for p in &self.outputs {
            std::fs::write(manifest_path(p), &text)?;
        }
        Ok(())
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("cannot parse {what} entry '{t}'")))
        })
        .collect()
}

/// Parses `argv` (program name first) and runs the subcommand. Returns 0 on
/// success, 1 on domain errors or drift violations, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Invariant(a) => cmd_invariant(a),
        Command::DriftCheck(a) => cmd_drift(a),
        Command::Pde(a) => cmd_pde(a),
        Command::Table4(a) => cmd_table4(a),
        Command::Gamma(a) => cmd_gamma(a),
        Command::Crossing(a) => cmd_crossing(a),
        Command::Fig2a(a) => cmd_fig2a(a),
        Command::Fig2b(a) => cmd_fig2b(a),
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<i32> {
    let mut run = Run::new("simulate", &a.common)?;
    let st = &mut run.settings;
    let spec = st.model(&a.model)?.build()?;
    let dt = st.get("dt", a.dt, simulate::default_dt(spec.n.get()))?;
    let t = st.get("T", a.t, 10.0)?;
    let seed = st.get("seed", a.seed, 0u64)?;
    let stride = st.get("stride", a.stride, 1usize)?;
    let z0 = match st.get_opt("z0", a.z0)? {
        Some(s) => State::from_slice(&parse_list::<f64>(&s, "z0")?)?,
        None => State::origin(spec.dimension())?,
    };
    let cfg = SimConfig::new(dt, t, seed, z0).with_stride(stride);
    let traj = simulate::simulate_path(&spec, &cfg)?;
    let mut body = String::new();
    let _ = writeln!(body, "t,{}", State::column_names(spec.dimension()).join(","));
    for (t, z) in traj.times.iter().zip(&traj.states) {
        body.push_str(&fmt_f64(*t));
        for v in z.as_slice() {
            body.push(',');
            body.push_str(&fmt_f64(*v));
        }
        body.push('\n');
    }
    run.emit(a.common.out.as_deref(), &body)?;
    run.finish(&[("model_digest".into(), traj.model_digest)])?;
    Ok(0)
}

fn cmd_invariant(a: InvariantArgs) -> CliResult<i32> {
    let mut run = Run::new("invariant", &a.common)?;
    let st = &mut run.settings;
    let spec = st.model(&a.model)?.build()?;
    let dt = st.get("dt", a.dt, simulate::default_dt(spec.n.get()))?;
    let t = st.get("T", a.t, 1e4)?;
    let seed = st.get("seed", a.seed, 0u64)?;
    let burn = st.get("burn_in", a.burn_in, 0.1)?;
    let bins = st.get("bins", a.bins, 40usize)?;
    let lo = st.get("lo", a.lo, -2.0)?;
    let hi = st.get("hi", a.hi, 2.0)?;
    let comps = st.get("components", a.components, "y,x".to_string())?;
    let names = State::column_names(spec.dimension());
    let mut axes = Vec::new();
    for c in comps.split(',').map(str::trim) {
        let idx = names
            .iter()
            .position(|n| *n == c)
            .ok_or_else(|| invalid(format!("component '{c}' not in {names:?}")))?;
        axes.push(BinAxis::new(idx, lo, hi, bins));
    }
    let cfg = SimConfig::new(dt, t, seed, State::origin(spec.dimension())?);
    let hist = simulate::empirical_invariant_density(&spec, &cfg, burn * t, &axes)?;
    let mut body = String::new();
    let heads: Vec<String> = axes
        .iter()
        .map(|ax| format!("{}_center", names[ax.component]))
        .collect();
    let _ = writeln!(body, "{},count,density", heads.join(","));
    for (b, (&count, &dens)) in hist.counts.iter().zip(&hist.density).enumerate() {
        for (ax, i) in axes.iter().zip(hist.bin_index(b)) {
            body.push_str(&fmt_f64(ax.center(i)));
            body.push(',');
        }
        let _ = writeln!(body, "{count},{}", fmt_f64(dens));
    }
    run.emit(a.common.out.as_deref(), &body)?;
    run.finish(&[
        ("samples".into(), hist.samples.to_string()),
        ("mass_in_grid".into(), hist.mass().to_string()),
    ])?;
    Ok(0)
}

fn cmd_drift(a: DriftArgs) -> CliResult<i32> {
    let mut run = Run::new("drift-check", &a.common)?;
    let st = &mut run.settings;
    let spec = st.model(&a.model)?.build()?;
    let margin = st.get("margin", a.margin, 1.01)?;
    let hw = st.get("half_width", a.half_width, 10.0)?;
    let points = st.get("points", a.points, 101usize)?;
    let c = select_constants(&spec, margin)?;
    let report = certify_drift(&c, &spec, &GridSpec::symmetric(hw, points))?;
    let dim = spec.dimension();
    let mut body = String::new();
    let _ = writeln!(body, "{},value,bound,slack", State::column_names(dim).join(","));
    let mut row = |z: &State, value: f64, bound: f64| {
        for v in z.as_slice() {
            body.push_str(&fmt_f64(*v));
            body.push(',');
        }
        let _ = writeln!(body, "{},{},{}", fmt_f64(value), fmt_f64(bound), fmt_f64(bound - value));
    };
    if report.violations.is_empty() {
        // no violations: report the point where the drift is largest
        let z = report.argmax;
        row(&z, report.sup_value, crate::lyapunov::closed_form_bound(&c, &z));
    } else {
        for v in &report.violations {
            row(&v.point, v.value, v.bound);
        }
    }
    run.emit(a.common.out.as_deref(), &body)?;
    let passed = report.passed();
    run.finish(&[
        ("grid".into(), report.grid.clone()),
        ("points".into(), report.points.to_string()),
        ("violations".into(), report.violation_count.to_string()),
        ("inferred_c".into(), report.inferred_c().to_string()),
        ("min_slack".into(), report.min_slack.to_string()),
        ("delta".into(), c.delta.to_string()),
        ("epsilon".into(), c.epsilon.to_string()),
    ])?;
    if !passed {
        eprintln!(
            "{} of {} grid points violate the drift bound",
            report.violation_count, report.points
        );
        return Ok(1);
    }
    Ok(0)
}

fn cmd_pde(a: PdeArgs) -> CliResult<i32> {
    let mut run = Run::new("pde", &a.common)?;
    let st = &mut run.settings;
    let n = st.get("n", a.n, 100u32)?;
    let t = st.get("T", a.t, 100.0)?;
    let grid = st.grid(&a.grid, t)?;
    let g = st.observable(a.g)?;
    let count = st.get("checkpoints", a.checkpoints, 100usize)?;
    let t_min = st.get("t_min", a.t_min, 0.01)?;
    if a.snapshots && a.common.out.is_none() {
        return Err(CliError::Usage("--snapshots needs --out".into()));
    }
    st.resolved.push(("snapshots".into(), a.snapshots.to_string()));
    let taus = pde::log_checkpoints(&grid, t_min, count);
    let marks: Vec<f64> = if a.snapshots { taus.clone() } else { Vec::new() };
    let sol = pde::solve_v(&grid, n, &|y| g.eval(y), &marks)?;
    let mut body = String::from("tau,w0,v0\n");
    for &tau in &taus {
        let _ = writeln!(
            body,
            "{},{},{}",
            fmt_f64(tau),
            fmt_f64(sol.w0_at(tau)),
            fmt_f64(sol.v0_at(tau))
        );
    }
    run.emit(a.common.out.as_deref(), &body)?;
    if let Some(out) = a.common.out.as_deref() {
        let ys = grid.ys();
        for (k, snap) in sol.snapshots.iter().enumerate() {
            let mut s = String::from("y,w,v\n");
            for (i, y) in ys.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", fmt_f64(*y), fmt_f64(snap.w[i]), fmt_f64(snap.v[i]));
            }
            run.emit(Some(&with_suffix(out, &format!(".tau_{k}.csv"))), &s)?;
        }
    }
    run.finish(&[("grid".into(), grid.describe())])?;
    Ok(0)
}

/// Runs the variance solve for every `n` concurrently.
pub fn table4_solutions(grid: &Grid1D, g: Observable, ns: &[u32]) -> crate::Result<Vec<PdeSolution>> {
    ns.par_iter()
        .map(|&n| pde::solve_v(grid, n, &|y| g.eval(y), &[]))
        .collect()
}

fn cmd_table4(a: Table4Args) -> CliResult<i32> {
    let mut run = Run::new("table4", &a.common)?;
    let st = &mut run.settings;
    let t = st.get("T", a.t, 100.0)?;
    let grid = st.grid(&a.grid, t)?;
    let g = st.observable(a.g)?;
    let sols = table4_solutions(&grid, g, &TABLE4_N)?;
    let mut body = String::from("n,v0T\n");
    for (n, sol) in TABLE4_N.iter().zip(&sols) {
        let _ = writeln!(body, "{n},{}", fmt_f64(sol.v0_at(t)));
    }
    run.emit(a.common.out.as_deref(), &body)?;
    run.finish(&[("grid".into(), grid.describe())])?;
    Ok(0)
}

/// `gamma^2` for friction at level `n` from a variance solve on `grid`.
pub fn compute_gamma_sq(grid: &Grid1D, n: u32, g: Observable, window: f64) -> crate::Result<pde::GammaEstimate> {
    let sol = pde::solve_v(grid, n, &|y| g.eval(y), &[])?;
    pde::gamma_from_v(&sol, window)
}

fn cmd_gamma(a: GammaArgs) -> CliResult<i32> {
    let mut run = Run::new("gamma", &a.common)?;
    let st = &mut run.settings;
    let n = st.get("n", a.n, 100u32)?;
    let t = st.get("T", a.t, 100.0)?;
    let grid = st.grid(&a.grid, t)?;
    let g = st.observable(a.g)?;
    let window = st.get("window", a.window, 0.5)?;
    let est = compute_gamma_sq(&grid, n, g, window)?;
    let mut body = String::from("n,gamma_sq,gamma,intercept,window_start,window_end,residual\n");
    let _ = writeln!(
        body,
        "{n},{},{},{},{},{},{}",
        fmt_f64(est.gamma_sq),
        fmt_f64(est.gamma()),
        fmt_f64(est.intercept),
        fmt_f64(est.window.0),
        fmt_f64(est.window.1),
        fmt_f64(est.residual)
    );
    run.emit(a.common.out.as_deref(), &body)?;
    run.finish(&[("grid".into(), est.grid.clone())])?;
    Ok(0)
}

fn t_grid(t_max: f64, points: usize) -> CliResult<Vec<f64>> {
    if points == 0 || !(t_max > 0.0) {
        return Err(invalid("T grid needs T > 0 and at least one point").into());
    }
    Ok((1..=points).map(|k| t_max * k as f64 / points as f64).collect())
}

fn crossing_rows(body: &mut String, rows: &[CrossingEstimate]) {
    for e in rows {
        let _ = writeln!(
            body,
            "{},{},{},{}",
            fmt_f64(e.t),
            fmt_f64(e.probability),
            fmt_f64(e.stderr),
            e.method.label()
        );
    }
}

/// gamma^2 on the standard grid (T = 100, fit over the last half).
fn default_gamma_sq(n: u32) -> crate::Result<f64> {
    Ok(compute_gamma_sq(&Grid1D::standard(100.0)?, n, Observable::Identity, 0.5)?.gamma_sq)
}

fn cmd_crossing(a: CrossingArgs) -> CliResult<i32> {
    let mut run = Run::new("crossing", &a.common)?;
    let st = &mut run.settings;
    let method = st.get("method", a.method, "asymptotic".to_string())?;
    let (mc, asym) = match method.as_str() {
        "mc" => (true, false),
        "asymptotic" => (false, true),
        "both" => (true, true),
        other => return Err(CliError::Usage(format!("unknown method '{other}'"))),
    };
    let p = st.get_opt("p", a.p)?;
    if mc && p.is_none() {
        return Err(CliError::Usage(format!("--method {method} needs --p")));
    }
    let n = st.get("n", a.n, 100u32)?;
    let b = st.get("b", a.b, 0.6)?;
    let t = st.get("T", a.t, 20.0)?;
    let points = st.get("t_points", a.t_points, 20usize)?;
    let grid = t_grid(t, points)?;
    let mut body = String::from("T,estimate,stderr,method\n");
    if mc {
        let paths = st.get("M", a.m, 10_000usize)?;
        let dt = st.get("dt", a.dt, 1e-2)?;
        let seed = st.get("seed", a.seed, 0u64)?;
        let spec = ModelSpec::friction_1d(n)?;
        let rows = crossing::crossing_curve(
            &spec,
            b,
            p.expect("checked above"),
            Observable::Identity,
            &grid,
            &McSettings { paths, dt, seed },
        )?;
        crossing_rows(&mut body, &rows);
    }
    if asym {
        let gamma_sq = match st.get_opt("gamma_sq", a.gamma_sq)? {
            Some(v) => v,
            None => {
                let v = default_gamma_sq(n)?;
                st.resolved.push(("gamma_sq".into(), v.to_string()));
                v
            }
        };
        let rows = grid
            .iter()
            .map(|&tt| crossing::asymptotic_from_gamma_sq(gamma_sq, b, tt))
            .collect::<crate::Result<Vec<_>>>()?;
        crossing_rows(&mut body, &rows);
    }
    run.emit(a.common.out.as_deref(), &body)?;
    run.finish(&[])?;
    Ok(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig2aConfig {
    pub grid: Grid1D,
    pub n: u32,
    pub paths: usize,
    pub taus: usize,
    pub seed: u64,
    pub mc_dt: f64,
}

#[derive(Clone, Debug)]
pub struct Fig2aData {
    pub taus: Vec<f64>,
    pub pde: Vec<f64>,
    pub mc: Vec<EnsembleStat>,
}

/// `count` log-spaced times in `[lo, hi]` snapped to multiples of `dt`.
pub fn log_grid(lo: f64, hi: f64, count: usize, dt: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(count);
    for j in 0..count {
        let frac = if count > 1 { j as f64 / (count - 1) as f64 } else { 1.0 };
        let t = ((lo * (hi / lo).powf(frac) / dt).round() * dt).max(dt);
        if out.last().is_none_or(|&l| t > l + 0.5 * dt) {
            out.push(t);
        }
    }
    out
}

/// PDE curve `v(0, tau)` and its Monte Carlo counterpart for friction with
/// `g = identity`, on a shared log grid over `[0.1, T]`.
pub fn fig2a_pipeline(cfg: &Fig2aConfig) -> crate::Result<Fig2aData> {
    let taus = log_grid(0.1, cfg.grid.t_end, cfg.taus, cfg.grid.dt);
    let sol = pde::solve_v(&cfg.grid, cfg.n, &|y| y, &[])?;
    let spec = ModelSpec::friction_1d(cfg.n)?;
    let sim = SimConfig::new(cfg.mc_dt, cfg.grid.t_end, cfg.seed, State::origin(spec.dimension())?);
    let mc = simulate::variance_curve(&spec, &sim, cfg.paths, &taus, |z| z.y())?;
    Ok(Fig2aData {
        pde: taus.iter().map(|&t| sol.v0_at(t)).collect(),
        taus,
        mc,
    })
}

fn cmd_fig2a(a: Fig2aArgs) -> CliResult<i32> {
    let mut run = Run::new("fig2a", &a.common)?;
    let st = &mut run.settings;
    let n = st.get("n", a.n, 100u32)?;
    let grid = {
        let l = st.get("L", a.grid.l, 10.0)?;
        let nodes = st.get("N", a.grid.nodes, 2001)?;
        let dt = st.get("dt", a.grid.dt, 1e-3)?;
        Grid1D::new(l, nodes, dt, 10.0)?
    };
    let paths = st.get("paths", a.paths, 100_000usize)?;
    let taus = st.get("taus", a.taus, 20usize)?;
    let seed = st.get("seed", a.seed, 0u64)?;
    let cfg = Fig2aConfig {
        grid,
        n,
        paths,
        taus,
        seed,
        mc_dt: grid.dt,
    };
    let data = fig2a_pipeline(&cfg)?;
    let base = a.common.out.clone().unwrap_or_else(|| PathBuf::from("fig2a"));
    let mut pde_csv = String::from("tau,v0\n");
    let mut mc_csv = String::from("tau,v0,stderr\n");
    for (i, &t) in data.taus.iter().enumerate() {
        let _ = writeln!(pde_csv, "{},{}", fmt_f64(t), fmt_f64(data.pde[i]));
        let _ = writeln!(
            mc_csv,
            "{},{},{}",
            fmt_f64(t),
            fmt_f64(data.mc[i].estimate),
            fmt_f64(data.mc[i].stderr)
        );
    }
    run.emit(Some(&with_suffix(&base, "_pde.csv")), &pde_csv)?;
    run.emit(Some(&with_suffix(&base, "_mc.csv")), &mc_csv)?;
    run.finish(&[])?;
    Ok(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig2bConfig {
    pub n: u32,
    pub b: f64,
    pub t_grid: Vec<f64>,
    pub ps: Vec<f64>,
    pub mc: McSettings,
    /// Solved on the standard grid when `None`.
    pub gamma_sq: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Fig2bData {
    pub gamma_sq: f64,
    /// `(label, curve)`: one per `p`, then `wstar`.
    pub series: Vec<(String, Vec<CrossingEstimate>)>,
}

/// Crossing curves for each `p` plus the limit `W*(b / gamma, T)`. Each `p`
/// uses its own seed stream derived from the base seed.
pub fn fig2b_pipeline(cfg: &Fig2bConfig) -> crate::Result<Fig2bData> {
    let gamma_sq = match cfg.gamma_sq {
        Some(v) => v,
        None => default_gamma_sq(cfg.n)?,
    };
    let spec = ModelSpec::friction_1d(cfg.n)?;
    let mut series = Vec::new();
    for (j, &p) in cfg.ps.iter().enumerate() {
        let mc = McSettings {
            seed: path_seed(cfg.mc.seed, 1_000_000 + j as u64),
            ..cfg.mc
        };
        let rows = crossing::crossing_curve(&spec, cfg.b, p, Observable::Identity, &cfg.t_grid, &mc)?;
        series.push((format!("p={p}"), rows));
    }
    let limit = cfg
        .t_grid
        .iter()
        .map(|&t| crossing::asymptotic_from_gamma_sq(gamma_sq, cfg.b, t))
        .collect::<crate::Result<Vec<_>>>()?;
    series.push(("wstar".to_string(), limit));
    Ok(Fig2bData { gamma_sq, series })
}

fn cmd_fig2b(a: Fig2bArgs) -> CliResult<i32> {
    let mut run = Run::new("fig2b", &a.common)?;
    let st = &mut run.settings;
    let n = st.get("n", a.n, 100u32)?;
    let b = st.get("b", a.b, 0.6)?;
    let t = st.get("T", a.t, 20.0)?;
    let points = st.get("t_points", a.t_points, 20usize)?;
    let ps = parse_list::<f64>(&st.get("ps", a.ps, "1,10,100,1000".to_string())?, "ps")?;
    let paths = st.get("M", a.m, 10_000usize)?;
    let dt = st.get("dt", a.dt, 1e-2)?;
    let seed = st.get("seed", a.seed, 0u64)?;
    let gamma_sq = st.get_opt("gamma_sq", a.gamma_sq)?;
    let cfg = Fig2bConfig {
        n,
        b,
        t_grid: t_grid(t, points)?,
        ps,
        mc: McSettings { paths, dt, seed },
        gamma_sq,
    };
    let data = fig2b_pipeline(&cfg)?;
    if gamma_sq.is_none() {
        st.resolved.push(("gamma_sq".into(), data.gamma_sq.to_string()));
    }
    let mut body = String::from("series,T,estimate,stderr,method\n");
    for (label, rows) in &data.series {
        for e in rows {
            let _ = writeln!(
                body,
                "{label},{},{},{},{}",
                fmt_f64(e.t),
                fmt_f64(e.probability),
                fmt_f64(e.stderr),
                e.method.label()
            );
        }
    }
    run.emit(a.common.out.as_deref(), &body)?;
    run.finish(&[])?;
    Ok(0)
}
