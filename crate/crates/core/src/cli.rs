//! Command-line front end.
//!
//! Every run resolves its arguments into a [`RunConfig`]. With `--out` the
//! CSV goes to that path and the config to `<path>.config.json`; otherwise
//! CSV goes to stdout. Human-readable summaries go to stderr. `--replay`
//! runs a saved config again.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::blowup::{blowup_sweep, compute_l_n, default_b, penalty_factor_log, verify_blowup_exact, BlowupCheck};
use crate::capacity::{capacity, Dmc, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::exponent::{log_grid, region, theta_direct_detailed, theta_with, ExponentResult, Method, ThetaOptions};
use crate::io::{fmt_num, resolve_channel, resolve_source, write_atomic, Csv, Document};
use crate::probcore::{JointPmf, Pmf};
use crate::rng::StreamRng;
use crate::sequence::{SequenceSet, SequenceSpace};
use crate::simulator::{
    blow_up_rule, converse_check, exact_errors, exponent_estimate, monte_carlo_errors, reliable_set,
    truncated_measure, tuned_likelihood_instance, Encoder, ErrorEstimate, EstimateMethod, TestInstance,
};

/// Bundled n = 4 instance: DSBS(0.1) observed through BSC(0.1), identity encoder.
pub const DEMO_DOCUMENT: &str = include_str!("../data/demo_n4.json");

pub const THREADS_ENV: &str = "NOISY_TAI_THREADS";

pub const CONFIG_VERSION: u32 = 1;

const SET_STREAM: u64 = 0x5345_5400;

#[derive(Debug, Parser)]
#[command(name = "noisy-tai", version, about = "Error exponents for testing against independence over a noisy channel")]
struct Cli {
    /// Write CSV here (atomically) and the resolved config to `<out>.config.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write the resolved config to this path.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    /// Show summaries in bits. Files always hold nats.
    #[arg(long, global = true)]
    bits: bool,
    /// Worker threads; defaults to $NOISY_TAI_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress the summary on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Run a saved config instead of a subcommand.
    #[arg(long, conflicts_with = "save_config")]
    replay: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

/// A fully resolved run. Replaying it reproduces the CSV byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub units: Units,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Nats,
    Bits,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Capacity of a discrete memoryless channel.
    Capacity(CapacityArgs),
    /// Optimal type-II exponent theta(P_UV, C).
    Exponent(ExponentArgs),
    /// theta over a grid of capacities.
    Region(RegionArgs),
    /// Exact Hamming blow-up probabilities against the lemma bound.
    Blowup(BlowupArgs),
    /// Type-I/II errors of tuned likelihood-threshold tests.
    Simulate(SimulateArgs),
    /// Measure-change and converse checks on a small instance.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityArgs {
    /// `bsc:<p>`, `bec:<e>` or a document with a "channel" matrix.
    pub channel: String,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaArgs {
    /// `dsbs:<p>` or a document with a "joint" matrix.
    #[arg(long, default_value = "dsbs:0.1")]
    pub source: String,
    /// Multiplier grid: `lo:hi:points` (log-spaced) or a comma list.
    #[arg(long, default_value = "0.01:100:40")]
    pub mu_grid: String,
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plain grid minimum, without the cutting-plane refinement.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentArgs {
    #[command(flatten)]
    pub theta: ThetaArgs,
    /// Channel capacity in nats.
    #[arg(long, conflicts_with = "channel", required_unless_present = "channel")]
    pub capacity: Option<f64>,
    /// Derive the capacity from this channel instead.
    #[arg(long)]
    pub channel: Option<String>,
    /// Also run the brute-force grid search.
    #[arg(long)]
    pub oracle: bool,
    /// Simplex step of the brute-force search.
    #[arg(long, default_value_t = 0.02)]
    pub grid_step: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionArgs {
    #[command(flatten)]
    pub theta: ThetaArgs,
    /// Capacities in nats: `lo:hi:points` (linear) or a comma list.
    #[arg(long, default_value = "0:0.7:15")]
    pub c_grid: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub alphabet_size: usize,
    /// Letter probabilities, comma separated; uniform when omitted.
    #[arg(long)]
    pub pmf: Option<String>,
    /// `random:<p>,<seed>` or a JSON file holding a list of words such as
    /// `["0110", "1011"]`, character i being position i.
    #[arg(long, default_value = "random:0.1,0")]
    pub set: String,
    /// A single radius or `sweep` for 0..=n.
    #[arg(long, default_value = "sweep")]
    pub l: String,
    /// Target error for l_n.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// b(n) in the definition of l_n; ln n when omitted.
    #[arg(long)]
    pub b: Option<f64>,
    /// Channel whose output size and smallest positive transition enter
    /// the penalty factor.
    #[arg(long, default_value = "bsc:0.1")]
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Instance document, or `demo` for the bundled instance.
    #[arg(long, default_value = "demo")]
    pub config: String,
    /// Blocklengths, comma separated; the document's `n` when omitted.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Enumerate exactly instead of sampling.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 0.3)]
    pub target_alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Blow each acceptance region up by this Hamming radius.
    #[arg(long)]
    pub blowup_l: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    /// Instance document, or `demo` for the bundled instance.
    #[arg(long, default_value = "demo")]
    pub config: String,
    /// Blocklength for the measure-change checks; the document's `n` when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.35)]
    pub gamma: f64,
    /// Type-I target of the tuned rule; must not exceed epsilon.
    #[arg(long, default_value_t = 0.3)]
    pub target_alpha: f64,
    /// Blocklengths of the exact converse regression.
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,10")]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub slack: f64,
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub summary: String,
    /// False only when `verify` finds a failing check.
    pub passed: bool,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_refusal() {
        EXIT_REFUSED
    } else {
        EXIT_INVALID
    }
}

/// Parses `args`, runs, writes artifacts and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_cli(cli: Cli) -> Result<i32> {
    let config = match (&cli.replay, cli.command) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
            let mut cfg: RunConfig =
                serde_json::from_str(&text).map_err(|e| Error::Document(e.to_string()))?;
            if cfg.version != CONFIG_VERSION {
                return Err(Error::Document(format!("unsupported config version {}", cfg.version)));
            }
            if cli.bits {
                cfg.units = Units::Bits;
            }
            cfg
        }
        (None, Some(command)) => RunConfig {
            version: CONFIG_VERSION,
            units: if cli.bits { Units::Bits } else { Units::Nats },
            command,
        }
        .resolved()?,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter("--replay takes no subcommand".into()));
        }
        (None, None) => {
            return Err(Error::InvalidParameter("a subcommand or --replay is required".into()));
        }
    };
    configure_threads(cli.threads)?;

    let outcome = dispatch(&config)?;
    let config_text = config.to_text();
    match &cli.out {
        Some(path) => {
            write_atomic(path, outcome.csv.as_bytes())?;
            write_atomic(&config_path(path), config_text.as_bytes())?;
        }
        None => print!("{}", outcome.csv),
    }
    if let Some(path) = &cli.save_config {
        write_atomic(path, config_text.as_bytes())?;
    }
    if !cli.quiet {
        eprint!("{}", outcome.summary);
    }
    Ok(if outcome.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// `<out>.config.json`.
pub fn config_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::InvalidParameter(format!("{THREADS_ENV}={v:?} is not a thread count"))
            })?),
            _ => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidParameter("thread count must be positive".into()));
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

impl RunConfig {
    /// Fills defaults that depend on the input documents.
    pub fn resolved(mut self) -> Result<Self> {
        match &mut self.command {
            Command::Simulate(a) if a.n_list.is_empty() => {
                a.n_list = vec![instance_document(&a.config)?.n.ok_or_else(|| {
                    Error::InvalidParameter("no --n-list and the document has no \"n\"".into())
                })?];
            }
            Command::Verify(a) if a.n.is_none() => {
                a.n = Some(instance_document(&a.config)?.n.ok_or_else(|| {
                    Error::InvalidParameter("no --n and the document has no \"n\"".into())
                })?);
            }
            Command::Blowup(a) if a.b.is_none() => a.b = Some(default_b(a.n)),
            _ => {}
        }
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configs always serialize");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))
    }
}

pub fn dispatch(config: &RunConfig) -> Result<Outcome> {
    let units = config.units;
    match &config.command {
        Command::Capacity(a) => run_capacity(a, units),
        Command::Exponent(a) => run_exponent(a, units),
        Command::Region(a) => run_region(a, units),
        Command::Blowup(a) => run_blowup(a, units),
        Command::Simulate(a) => run_simulate(a, units),
        Command::Verify(a) => run_verify(a, units),
    }
}

fn show(x: f64, units: Units) -> String {
    match units {
        Units::Nats => format!("{x:.6} nats"),
        Units::Bits => format!("{:.6} bits", x / std::f64::consts::LN_2),
    }
}

fn parse_list(spec: &str, what: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidParameter(format!("bad number {s:?} in {what}")))
        })
        .collect()
}

/// `lo:hi:points` or a comma list.
fn parse_grid(spec: &str, what: &str, logarithmic: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [lo, hi, pts] => {
            let lo = parse_list(lo, what)?[0];
            let hi = parse_list(hi, what)?[0];
            let pts: usize = pts
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad point count in {what}")))?;
            if pts == 0 || hi < lo || (logarithmic && lo <= 0.0) {
                return Err(Error::InvalidParameter(format!("{what} {spec:?} is empty or inverted")));
            }
            if logarithmic {
                Ok(log_grid(lo, hi, pts))
            } else if pts == 1 {
                Ok(vec![lo])
            } else {
                Ok((0..pts)
                    .map(|i| lo + (hi - lo) * i as f64 / (pts - 1) as f64)
                    .collect())
            }
        }
        [list] => parse_list(list, what),
        _ => Err(Error::InvalidParameter(format!("{what} {spec:?} is neither lo:hi:points nor a list"))),
    }
}

fn theta_options(a: &ThetaArgs) -> Result<ThetaOptions> {
    let grid = parse_grid(&a.mu_grid, "--mu-grid", true)?;
    if grid.iter().any(|m| *m <= 0.0) {
        return Err(Error::InvalidParameter("--mu-grid values must be positive".into()));
    }
    if a.restarts == 0 {
        return Err(Error::InvalidParameter("--restarts must be positive".into()));
    }
    let mut opts = ThetaOptions::default().with_restarts(a.restarts, a.seed);
    opts.mu_grid = grid;
    opts.refine = !a.no_refine;
    Ok(opts)
}

fn run_capacity(a: &CapacityArgs, units: Units) -> Result<Outcome> {
    let dmc = Dmc::new(resolve_channel(&a.channel)?);
    let res = capacity(&dmc, a.tol)?;
    let labels: Vec<String> = (0..dmc.n_inputs())
        .map(|x| format!("p_x_{}", dmc.transition().input_alphabet().label(x)))
        .collect();
    let mut header = vec!["capacity_nats", "iterations", "gap"];
    header.extend(labels.iter().map(String::as_str));
    let mut csv = Csv::new(&header);
    let mut row = vec![fmt_num(res.value), res.iterations.to_string(), fmt_num(res.gap)];
    row.extend(res.input_dist.as_slice().iter().map(|p| fmt_num(*p)));
    csv.row(&row);

    let mut summary = format!(
        "capacity: {:.6} nats / {:.6} bits\n",
        res.value,
        res.value / std::f64::consts::LN_2
    );
    if units == Units::Bits {
        summary = format!("capacity: {}\n", show(res.value, units));
    }
    let dist: Vec<String> = res.input_dist.as_slice().iter().map(|p| format!("{p:.6}")).collect();
    summary.push_str(&format!("input distribution: [{}]\n", dist.join(", ")));
    summary.push_str(&format!("iterations: {} (gap {:.2e})\n", res.iterations, res.gap));
    Ok(Outcome {
        csv: csv.as_str().into(),
        summary,
        passed: true,
    })
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Lagrangian => "lagrangian",
        Method::BruteForce => "brute_force",
    }
}

fn run_exponent(a: &ExponentArgs, units: Units) -> Result<Outcome> {
    let source = resolve_source(&a.theta.source)?;
    let c = match (a.capacity, &a.channel) {
        (Some(c), None) => c,
        (None, Some(ch)) => capacity(&Dmc::new(resolve_channel(ch)?), DEFAULT_TOL)?.value,
        _ => return Err(Error::InvalidParameter("give exactly one of --capacity and --channel".into())),
    };
    let opts = theta_options(&a.theta)?;
    let mut results: Vec<ExponentResult> = vec![theta_with(&source, c, &opts)?];
    if a.oracle {
        results.push(theta_direct_detailed(&source, c, a.grid_step)?);
    }
    let mut csv = Csv::new(&["capacity_nats", "theta_nats", "best_mu", "method"]);
    let mut summary = String::new();
    for r in &results {
        csv.row(&[fmt_num(c), fmt_num(r.theta), fmt_num(r.best_mu), method_name(r.method).into()]);
        summary.push_str(&format!(
            "theta ({}): {}\n",
            method_name(r.method),
            if r.theta == 0.0 { "0".into() } else { show(r.theta, units) }
        ));
    }
    Ok(Outcome {
        csv: csv.as_str().into(),
        summary,
        passed: true,
    })
}

fn run_region(a: &RegionArgs, units: Units) -> Result<Outcome> {
    let source = resolve_source(&a.theta.source)?;
    let grid = parse_grid(&a.c_grid, "--c-grid", false)?;
    let reg = region(&source, &grid, &theta_options(&a.theta)?)?;
    let mut csv = Csv::new(&["capacity_nats", "theta_nats", "best_mu"]);
    for p in &reg.points {
        csv.row(&[fmt_num(p.capacity), fmt_num(p.theta), fmt_num(p.best_mu)]);
    }
    let mut summary = format!("{} points\n", reg.points.len());
    if let Some(last) = reg.points.last() {
        summary.push_str(&format!("theta at C = {}: {}\n", show(last.capacity, units), show(last.theta, units)));
    }
    for c in &reg.corrections {
        summary.push_str(&format!("concavity correction at row {}: {:.3e}\n", c.index, c.magnitude));
    }
    Ok(Outcome {
        csv: csv.as_str().into(),
        summary,
        passed: true,
    })
}

fn blowup_set(spec: &str, space: SequenceSpace) -> Result<SequenceSet> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let (p, seed) = rest
            .split_once(',')
            .ok_or_else(|| Error::InvalidParameter("--set random:<p>,<seed>".into()))?;
        let p = parse_list(p, "--set")?[0];
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad seed {seed:?} in --set")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("set density {p} not in [0, 1]")));
        }
        let mut rng = StreamRng::new(seed, SET_STREAM, 0);
        return Ok(SequenceSet::from_predicate(space, |_| rng.bernoulli(p)));
    }
    let text = std::fs::read_to_string(spec).map_err(|e| Error::Document(format!("{spec}: {e}")))?;
    let words: Vec<String> = serde_json::from_str(&text).map_err(|e| Error::Document(format!("{spec}: {e}")))?;
    let mut indices = Vec::with_capacity(words.len());
    for w in &words {
        let digits: Option<Vec<usize>> = w
            .chars()
            .map(|ch| ch.to_digit(36).map(|d| d as usize))
            .collect();
        let digits = digits
            .filter(|d| d.len() == space.n())
            .ok_or_else(|| Error::Document(format!("word {w:?} is not a length-{} word", space.n())))?;
        indices.push(space.index_of(&digits)?);
    }
    SequenceSet::from_indices(space, indices)
}

fn run_blowup(a: &BlowupArgs, _units: Units) -> Result<Outcome> {
    if a.n == 0 {
        return Err(Error::InvalidParameter("--n must be positive".into()));
    }
    let pmf = match &a.pmf {
        Some(s) => Pmf::new(parse_list(s, "--pmf")?)?,
        None => Pmf::uniform(a.alphabet_size)?,
    };
    if pmf.len() != a.alphabet_size {
        return Err(Error::AlphabetMismatch(format!(
            "--pmf has {} letters but --alphabet-size is {}",
            pmf.len(),
            a.alphabet_size
        )));
    }
    let space = SequenceSpace::new(a.alphabet_size, a.n)?;
    let set = blowup_set(&a.set, space)?;
    if set.is_empty() {
        return Err(Error::InvalidParameter("the set is empty, so the lemma says nothing".into()));
    }
    let checks: Vec<BlowupCheck> = if a.l == "sweep" {
        blowup_sweep(&pmf, a.n, &set, a.n)?
    } else {
        let l: usize = a
            .l
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("--l {:?} is neither an integer nor sweep", a.l)))?;
        vec![verify_blowup_exact(&pmf, a.n, &set, l)?]
    };
    let mut csv = Csv::new(&["l", "exact_prob", "lemma_bound", "vacuous_flag"]);
    for c in &checks {
        csv.row(&[c.l.to_string(), fmt_num(c.exact), fmt_num(c.bound.value), c.bound.vacuous.to_string()]);
    }
    let b = a.b.unwrap_or_else(|| default_b(a.n));
    let params = compute_l_n(a.n, a.epsilon, b)?;
    let dmc = Dmc::new(resolve_channel(&a.channel)?);
    let penalty = penalty_factor_log(a.n, params.l_n, dmc.n_outputs(), dmc.p_floor())?;
    let violations = checks.iter().filter(|c| !c.holds()).count();
    let summary = format!(
        "|D| = {} of {}, P(D) = {:.6}\nl_n = {} (b = {:.6}, eps' = {:.6})\npenalty-factor log: {}\nlemma violations: {}\n",
        set.len(),
        space.total(),
        checks.first().map_or(0.0, |c| c.prob_d),
        params.l_n,
        params.b_of_n,
        params.eps_prime,
        fmt_num(penalty),
        violations
    );
    Ok(Outcome {
        csv: csv.as_str().into(),
        summary,
        passed: true,
    })
}

/// The document for `demo` or a path.
pub fn instance_document(spec: &str) -> Result<Document> {
    if spec == "demo" {
        Document::parse(DEMO_DOCUMENT)
    } else {
        Document::load(Path::new(spec))
    }
}

struct Instance {
    source: JointPmf,
    dmc: Dmc,
    map: crate::probcore::CondPmf,
}

fn load_instance(spec: &str) -> Result<Instance> {
    let doc = instance_document(spec)?;
    let source = doc.source()?;
    let channel = doc.channel()?;
    let map = doc.encoder(source.n_rows(), channel.n_inputs())?;
    Ok(Instance {
        source,
        dmc: Dmc::new(channel),
        map,
    })
}

fn tuned(inst: &Instance, n: usize, target_alpha: f64) -> Result<TestInstance> {
    let encoder = Encoder::symbolwise(inst.map.clone(), n)?;
    Ok(tuned_likelihood_instance(&inst.source, &inst.dmc, encoder, target_alpha)?.0)
}

fn run_simulate(a: &SimulateArgs, units: Units) -> Result<Outcome> {
    if a.n_list.is_empty() || a.n_list.contains(&0) {
        return Err(Error::InvalidParameter("--n-list needs positive blocklengths".into()));
    }
    if !a.exact && a.trials == 0 {
        return Err(Error::InvalidParameter("--trials must be positive".into()));
    }
    let inst = load_instance(&a.config)?;
    let mut csv = Csv::new(&["n", "alpha", "beta", "beta_exponent", "method", "ci"]);
    let mut summary = String::new();
    for &n in &a.n_list {
        let mut t = tuned(&inst, n, a.target_alpha)?;
        if let Some(l) = a.blowup_l {
            let explicit = crate::simulator::DecisionRule::Explicit(t.rule.materialize()?);
            t = t.with_rule(blow_up_rule(&explicit, l)?)?;
        }
        let est: ErrorEstimate = if a.exact {
            exact_errors(&t)?
        } else {
            monte_carlo_errors(&t, a.trials, a.seed)?
        };
        let method = match est.method {
            EstimateMethod::Exact => "exact",
            EstimateMethod::MonteCarlo { .. } => "monte_carlo",
        };
        csv.row(&[
            n.to_string(),
            fmt_num(est.alpha),
            fmt_num(est.beta),
            fmt_num(est.beta_exponent),
            method.into(),
            fmt_num(est.ci_halfwidth),
        ]);
        summary.push_str(&format!(
            "n = {n}: alpha = {:.6}, beta = {:.6e}, -ln(beta)/n = {}\n",
            est.alpha,
            est.beta,
            show(est.beta_exponent, units)
        ));
    }
    Ok(Outcome {
        csv: csv.as_str().into(),
        summary,
        passed: true,
    })
}

fn run_verify(a: &VerifyArgs, units: Units) -> Result<Outcome> {
    let n = a
        .n
        .ok_or_else(|| Error::InvalidParameter("verify needs a blocklength".into()))?;
    if !(a.epsilon > 0.0 && a.epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be in (0, 1), got {}", a.epsilon)));
    }
    let inst = load_instance(&a.config)?;
    let mut csv = Csv::new(&["check", "value", "bound", "pass"]);
    let mut all = true;
    let mut row = |csv: &mut Csv, name: &str, value: f64, bound: f64, pass: bool| {
        all &= pass;
        csv.row(&[name.into(), fmt_num(value), fmt_num(bound), pass.to_string()]);
    };

    let t = tuned(&inst, n, a.target_alpha)?;
    let errs = exact_errors(&t)?;
    row(&mut csv, "type_one_error", errs.alpha, a.epsilon, errs.alpha <= a.epsilon);

    let set = reliable_set(&t, a.gamma)?;
    row(&mut csv, "reliable_set_lower_bound", set.prob, set.lower_bound, set.bound_holds());
    let rep = truncated_measure(&t, &set, a.epsilon)?;
    let target = (1.0 - a.epsilon) / (1.0 + a.epsilon);
    row(&mut csv, "reliable_set_probability", rep.prob_b, target, rep.prob_bound_holds);
    row(&mut csv, "conditioning_v", rep.max_ratio_v, 1.0 / rep.prob_b, rep.conditioning_holds());
    row(&mut csv, "domination_v", rep.max_ratio_v, rep.factor, rep.domination_v_holds());
    row(&mut csv, "domination_y", rep.max_ratio_y, rep.factor, rep.domination_y_holds());
    row(&mut csv, "kl_identity", rep.kl, -rep.prob_b.ln(), rep.kl_identity_holds());
    row(&mut csv, "kl_bound", rep.kl, rep.factor.ln(), rep.kl_bound_holds());
    row(&mut csv, "markov_v_x_given_u", rep.markov_vx, 0.0, rep.markov_vx.abs() <= 1e-9);
    if let Some(m) = rep.markov_vy {
        row(&mut csv, "markov_v_y_given_u", m, 0.0, m.abs() <= 1e-9);
    }

    let c = capacity(&inst.dmc, DEFAULT_TOL)?.value;
    let opts = ThetaOptions::default().with_restarts(a.restarts, a.seed);
    let th = theta_with(&inst.source, c, &opts)?.theta;
    let mut points = Vec::with_capacity(a.n_list.len());
    for &m in &a.n_list {
        points.push((m, exact_errors(&tuned(&inst, m, a.target_alpha)?)?.beta));
    }
    let fit = exponent_estimate(&points)?;
    let conv = converse_check(fit.slope, th, a.slack)?;
    row(&mut csv, "converse_slope", fit.slope, th + a.slack, conv.pass);

    let summary = format!(
        "n = {n}: alpha = {:.6}, P(B) = {:.6}, KL = {}\ntheta = {}, fitted exponent = {}\n{}\n",
        errs.alpha,
        rep.prob_b,
        show(rep.kl, units),
        show(th, units),
        show(fit.slope, units),
        if all { "all checks pass" } else { "some checks FAILED" }
    );
    Ok(Outcome {
        csv: csv.as_str().into(),
        summary,
        passed: all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        let cli = Cli::try_parse_from(std::iter::once("noisy-tai").chain(args.iter().copied())).unwrap();
        RunConfig {
            version: CONFIG_VERSION,
            units: Units::Nats,
            command: cli.command.unwrap(),
        }
        .resolved()
        .unwrap()
    }

    #[test]
    fn capacity_of_bsc() {
        let out = dispatch(&parse(&["capacity", "bsc:0.1"])).unwrap();
        assert!(out.summary.contains("0.368064 nats / 0.531004 bits"), "{}", out.summary);
        assert!(out.csv.starts_with("capacity_nats,iterations,gap,p_x_0,p_x_1\n"));
    }

    #[test]
    fn zero_capacity_prints_zero() {
        let out = dispatch(&parse(&["exponent", "--capacity", "0"])).unwrap();
        assert!(out.summary.starts_with("theta (lagrangian): 0\n"), "{}", out.summary);
        assert!(out.csv.lines().nth(1).unwrap().starts_with("0,0,"));
    }

    #[test]
    fn demo_verifies() {
        let out = dispatch(&parse(&["verify"])).unwrap();
        assert!(out.passed, "{}", out.csv);
        assert!(out.csv.starts_with("check,value,bound,pass\n"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = parse(&["simulate", "--exact"]);
        match &cfg.command {
            Command::Simulate(a) => assert_eq!(a.n_list, vec![4]),
            other => panic!("{other:?}"),
        }
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(dispatch(&cfg).unwrap(), dispatch(&RunConfig::parse(&cfg.to_text()).unwrap()).unwrap());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:3", "g", false).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.5,2", "g", true).unwrap(), vec![0.5, 2.0]);
        assert!(parse_grid("0:1:3", "g", true).is_err());
        assert!(parse_grid("1:2", "g", false).is_err());
    }

    #[test]
    fn blowup_csv() {
        let out = dispatch(&parse(&["blowup", "--n", "6", "--set", "random:0.2,3"])).unwrap();
        let lines: Vec<&str> = out.csv.lines().collect();
        assert_eq!(lines[0], "l,exact_prob,lemma_bound,vacuous_flag");
        assert_eq!(lines.len(), 8);
        assert!(out.summary.contains("lemma violations: 0"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["noisy-tai", "--help"]), EXIT_OK);
        assert_eq!(main_with_args(["noisy-tai", "frobnicate"]), EXIT_INVALID);
        assert_eq!(main_with_args(["noisy-tai", "-q", "capacity", "bsc:1.5"]), EXIT_INVALID);
        assert_eq!(
            main_with_args(["noisy-tai", "-q", "blowup", "--n", "40", "--set", "random:0.5,0"]),
            EXIT_REFUSED
        );
    }
}
