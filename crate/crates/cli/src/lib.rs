//! Commands behind the `copula-ot` binary.
//!
//! Exit codes: 0 success, 1 verification violation, 2 parse or validation
//! failure, 3 pair cap exceeded, 4 extremal copula, 5 epsilon schedule
//! exhausted.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use copula_ot::counterexample::{gap_search, GapPoint, GapSearch, SearchOptions};
use copula_ot::instances::campaign_instance;
use copula_ot::transport::{exact_ot_capped, DEFAULT_PAIR_CAP};
use copula_ot::{
    diamond, plan_cost, validate_plan, Copula, CostSpec, Error, MultivariateMeasure, TransportPlan,
};
use rayon::prelude::*;

mod copula_arg;

pub use copula_arg::{CopulaArg, ParseCopulaArgError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_EXTREMAL: i32 = 4;
pub const EXIT_EXHAUSTED: i32 = 5;

pub const VERIFY_HEADER: &str = "instance,n,p,diamond_cost,exact_cost,rel_err";
pub const CURVE_HEADER: &str = "epsilon,diamond_cost,alt_cost,gap,exact_cost";

#[derive(Debug, Parser)]
#[command(
    name = "copula-ot",
    version,
    about = "Wasserstein costs between measures sharing a copula"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cost of the quantile coupling through a shared copula.
    Diamond(DiamondArgs),
    /// Exact optimal transport cost.
    Exact(ExactArgs),
    /// Compare the quantile coupling with exact OT on random instances.
    Verify(VerifyArgs),
    /// Search for an instance where the quantile coupling is not optimal.
    Counterexample(CounterexampleArgs),
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
}

#[derive(Debug, Args)]
pub struct DiamondArgs {
    /// independence, comonotone, countermonotone, checkerboard:<path> or a path.
    #[arg(long, default_value = "independence")]
    pub copula: CopulaArg,
    /// Resolution of the builtin independence checkerboard.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Source measure; only its marginals are used.
    #[arg(long)]
    pub mu: PathBuf,
    /// Target measure; only its marginals are used.
    #[arg(long)]
    pub rho: PathBuf,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, value_name = "PATH")]
    pub emit_plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub rho: PathBuf,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, value_name = "PATH")]
    pub emit_plan: Option<PathBuf>,
    /// Largest allowed `|supp mu| * |supp rho|`.
    #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
    pub max_pairs: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Instances per (n, p) setting.
    #[arg(long, default_value_t = 200)]
    pub instances: u64,
    /// Dimensions to run; repeatable.
    #[arg(long, default_values_t = [2, 3])]
    pub n: Vec<usize>,
    /// Exponents p = q to run; repeatable.
    #[arg(long, default_values_t = [1.0, 2.0, 3.0])]
    pub p: Vec<f64>,
    /// Smoke mode: run the single pair (P, Q) instead of p = q.
    #[arg(long, num_args = 2, value_names = ["P", "Q"])]
    pub allow_pq: Option<Vec<f64>>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
    pub max_pairs: usize,
}

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    #[arg(long, default_value = "independence")]
    pub copula: CopulaArg,
    /// Resolution for builtin copulas (monotone ones are discretized at k).
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    /// Dimension for builtin copulas.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Directory receiving report.json and gap_curve.csv; the report goes to
    /// stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Attach the exact optimum when the pair count is at most this.
    #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
    pub max_pairs: usize,
}

/// Settings of a verification campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub instances: u64,
    pub dims: Vec<usize>,
    /// `(p, q)` settings.
    pub exponents: Vec<(f64, f64)>,
    pub max_pairs: usize,
    /// Largest accepted `|diamond - exact| / max(1, exact)`.
    pub rel_opt: f64,
    /// Largest accepted mass discrepancy of the quantile coupling's projections.
    pub mass: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            instances: 200,
            dims: vec![2, 3],
            exponents: vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)],
            max_pairs: DEFAULT_PAIR_CAP,
            rel_opt: 1e-8,
            mass: 1e-12,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.rel_opt > 0.0 && self.mass > 0.0) {
            return Err(CliError::invalid("tolerances must be positive"));
        }
        if self.max_pairs == 0 {
            return Err(CliError::invalid("--max-pairs must be positive"));
        }
        if self.dims.contains(&0) {
            return Err(CliError::invalid("--n must be positive"));
        }
        for &(p, q) in &self.exponents {
            CostSpec::new(p, q)?;
        }
        Ok(())
    }
}

impl TryFrom<&VerifyArgs> for RunConfig {
    type Error = CliError;

    fn try_from(args: &VerifyArgs) -> Result<Self, CliError> {
        let exponents = match &args.allow_pq {
            Some(pq) => vec![(pq[0], pq[1])],
            None => args.p.iter().map(|&p| (p, p)).collect(),
        };
        let config = RunConfig {
            seed: args.seed,
            instances: args.instances,
            dims: args.n.clone(),
            exponents,
            max_pairs: args.max_pairs,
            out: args.out.clone(),
            ..RunConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::SizeCap { .. } => EXIT_CAP,
            Error::NoViolatingPair => EXIT_EXTREMAL,
            Error::ScheduleExhausted(_) => EXIT_EXHAUSTED,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

/// `%.12g`-style rendering.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let rounded: f64 = sci.parse().expect("float formatting roundtrips");
        return format!("{}", rounded + 0.0);
    }
    let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
    format!("{mantissa}e{exp}")
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn read_measure(path: &Path) -> Result<MultivariateMeasure, CliError> {
    MultivariateMeasure::from_json_str(&read(path)?)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn load_copula(arg: &CopulaArg, n: usize, k: usize) -> Result<Copula, CliError> {
    let copula = match arg {
        CopulaArg::File(path) => Copula::from_json_str(&read(path)?)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?,
        builtin => builtin.builtin(n, k).expect("not a file")?,
    };
    if copula.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: copula.dim(),
        }
        .into());
    }
    Ok(copula)
}

fn cost_report(
    out: &mut impl Write,
    spec: &CostSpec,
    cost: f64,
    plan: &TransportPlan,
) -> Result<(), CliError> {
    let text = format!(
        "p = {}\nq = {}\ncost = {}\nw = {}\nplan_entries = {}\n",
        sig12(spec.p()),
        sig12(spec.q()),
        sig12(cost),
        sig12(cost.max(0.0).powf(1.0 / spec.p())),
        plan.len()
    );
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::invalid(format!("stdout: {e}")))
}

pub fn run_diamond(args: &DiamondArgs, out: &mut impl Write) -> Result<i32, CliError> {
    let spec = CostSpec::new(args.cost.p, args.cost.q)?;
    let mu = read_measure(&args.mu)?;
    let rho = read_measure(&args.rho)?;
    if mu.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: rho.dim(),
        }
        .into());
    }
    let copula = load_copula(&args.copula, mu.dim(), args.k)?;
    let plan = diamond(&copula, &mu.marginals(), &rho.marginals())?;
    if let Some(path) = &args.emit_plan {
        write(path, &plan.to_json_string())?;
    }
    cost_report(out, &spec, plan_cost(&plan, &spec), &plan)?;
    Ok(EXIT_OK)
}

pub fn run_exact(args: &ExactArgs, out: &mut impl Write) -> Result<i32, CliError> {
    let spec = CostSpec::new(args.cost.p, args.cost.q)?;
    let mu = read_measure(&args.mu)?;
    let rho = read_measure(&args.rho)?;
    let solved = exact_ot_capped(&mu, &rho, &spec, args.max_pairs)?;
    if let Some(path) = &args.emit_plan {
        write(path, &solved.plan.to_json_string())?;
    }
    cost_report(out, &spec, solved.value, &solved.plan)?;
    Ok(EXIT_OK)
}

/// One line of the verification CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub instance: u64,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub diamond_cost: f64,
    pub exact_cost: f64,
    pub rel_err: f64,
    /// Projections of the quantile coupling match both measures.
    pub feasible: bool,
}

impl VerifyRow {
    /// NaN errors fail.
    pub fn passes(&self, rel_opt: f64) -> bool {
        self.feasible && self.rel_err <= rel_opt
    }
}

pub fn verify_row(
    config: &RunConfig,
    n: usize,
    (p, q): (f64, f64),
    instance: u64,
) -> copula_ot::Result<VerifyRow> {
    let spec = CostSpec::new(p, q)?;
    let inst = campaign_instance(config.seed, n, instance);
    let plan = diamond(&inst.copula, &inst.mu_marginals, &inst.rho_marginals)?;
    let feasible = plan.source().weight_discrepancy(&inst.mu) <= config.mass
        && plan.target().weight_discrepancy(&inst.rho) <= config.mass
        && validate_plan(&plan, &inst.mu, &inst.rho);
    let diamond_cost = plan_cost(&plan, &spec);
    let exact_cost = exact_ot_capped(&inst.mu, &inst.rho, &spec, config.max_pairs)?.value;
    Ok(VerifyRow {
        instance,
        n,
        p,
        q,
        diamond_cost,
        exact_cost,
        rel_err: (diamond_cost - exact_cost).abs() / exact_cost.abs().max(1.0),
        feasible,
    })
}

/// All rows of a campaign, ordered by `(n, exponent, instance)`.
pub fn verify_rows(config: &RunConfig) -> copula_ot::Result<Vec<VerifyRow>> {
    let mut jobs = Vec::new();
    for &n in &config.dims {
        for &pq in &config.exponents {
            jobs.extend((0..config.instances).map(|i| (n, pq, i)));
        }
    }
    jobs.par_iter()
        .map(|&(n, pq, i)| verify_row(config, n, pq, i))
        .collect()
}

pub fn verify_csv(rows: &[VerifyRow]) -> String {
    let mut csv = String::from(VERIFY_HEADER);
    csv.push('\n');
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.instance, r.n, r.p, r.diamond_cost, r.exact_cost, r.rel_err
        );
    }
    csv
}

pub fn run_verify(config: &RunConfig, out: &mut impl Write) -> Result<i32, CliError> {
    config.validate()?;
    let rows = verify_rows(config)?;
    let csv = verify_csv(&rows);
    match &config.out {
        Some(path) => write(path, &csv)?,
        None => out
            .write_all(csv.as_bytes())
            .map_err(|e| CliError::invalid(format!("stdout: {e}")))?,
    }
    let offenders: Vec<&VerifyRow> = rows.iter().filter(|r| !r.passes(config.rel_opt)).collect();
    let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    eprintln!("verify: {} rows, max rel_err {}", rows.len(), sig12(worst));
    for r in &offenders {
        eprintln!(
            "violation: instance {} n={} p={} q={} rel_err={} feasible={}",
            r.instance,
            r.n,
            r.p,
            r.q,
            sig12(r.rel_err),
            r.feasible
        );
    }
    Ok(if offenders.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

pub fn curve_csv(curve: &[GapPoint]) -> String {
    let mut csv = String::from(CURVE_HEADER);
    csv.push('\n');
    for pt in curve {
        let exact = pt.exact_cost.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            pt.epsilon, pt.diamond_cost, pt.alt_cost, pt.gap, exact
        );
    }
    csv
}

fn emit_search(
    search: &GapSearch,
    dir: Option<&Path>,
    out: &mut impl Write,
) -> Result<(), CliError> {
    let json = search.report.to_json_string();
    let io = |e: std::io::Error| CliError::invalid(format!("output: {e}"));
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io)?;
            write(&dir.join("report.json"), &(json + "\n"))?;
            write(&dir.join("gap_curve.csv"), &curve_csv(&search.curve))?;
            let r = &search.report;
            writeln!(
                out,
                "pair = ({}, {})\nepsilon = {}\ndiamond_cost = {}\nalt_cost = {}\ngap = {}",
                r.pair.0,
                r.pair.1,
                sig12(r.epsilon),
                sig12(r.diamond_cost),
                sig12(r.alt_cost),
                sig12(r.gap)
            )
            .map_err(io)
        }
        None => writeln!(out, "{json}").map_err(io),
    }
}

pub fn run_counterexample(
    args: &CounterexampleArgs,
    out: &mut impl Write,
) -> Result<i32, CliError> {
    let (p, q) = (args.cost.p, args.cost.q);
    CostSpec::new(p, q)?;
    if p == q {
        return Err(Error::EqualExponents.into());
    }
    if args.k == 0 {
        return Err(CliError::invalid("--k must be positive"));
    }
    let copula = match &args.copula {
        CopulaArg::File(path) => Copula::from_json_str(&read(path)?)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?,
        builtin => load_copula(builtin, args.n, args.k)?,
    };
    if copula.dim() < 2 {
        return Err(CliError::invalid("the construction needs n >= 2"));
    }
    let options = SearchOptions {
        resolution: args.k,
        exact_cap: args.max_pairs,
        ..SearchOptions::default()
    };
    match gap_search(&copula, p, q, &options) {
        Ok(search) => {
            emit_search(&search, args.out.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Err(Error::ScheduleExhausted(search)) => {
            emit_search(&search, args.out.as_deref(), out)?;
            eprintln!(
                "largest gap {} at epsilon {}",
                sig12(search.report.gap),
                sig12(search.report.epsilon)
            );
            Err(Error::ScheduleExhausted(search).into())
        }
        Err(err) => Err(err.into()),
    }
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn run(cli: &Cli, out: &mut impl Write) -> i32 {
    let result = match &cli.command {
        Command::Diamond(args) => run_diamond(args, out),
        Command::Exact(args) => run_exact(args, out),
        Command::Verify(args) => {
            RunConfig::try_from(args).and_then(|config| run_verify(&config, out))
        }
        Command::Counterexample(args) => run_counterexample(args, out),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message);
            err.code
        }
    }
}
