//! Command-line front end.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 input or budget error,
//! 3 resource cap.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cohomology::{
    check_cocycle_all_pairs, check_integrated_identity, check_logdet_chain_rule, check_mixture_identity, make_cochain,
    solve_discrete_nullspace, IdentityCase, IdentityReport, MixtureRule, NullspaceReport, Params,
    DEFAULT_CLOSURE_CAP, DEFAULT_NULLSPACE_TOL,
};
use crate::error::{Error, Result};
use crate::io::{load_laws, load_structure, read_json, to_json};
use crate::kde::{run_report, write_rows_csv, write_rows_long_csv, BandwidthRule, KdeConfig, KdeReport, Target};
use crate::laws::{GaussianLaw, Law, MixedLaw};
use crate::mc::{self, McBudget, DEFAULT_MC_BUDGET};
use crate::random;
use crate::structures::{coordinate_lattice, partition_lattice, validate_structure, InformationStructure, ObjId, Sector};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CAP: i32 = 3;

/// Failing cases listed in summary reports.
const MAX_LISTED_FAILURES: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "infocoh", version, about = "Verify cocycle identities for entropy-type functionals on information structures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Seed of every random choice and Monte Carlo stream.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo samples per estimate.
    #[arg(long, default_value_t = DEFAULT_MC_BUDGET)]
    pub budget: usize,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads (0: one per core). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cocycle condition of a cochain over every pair of a discrete structure.
    VerifyDiscrete(VerifyDiscrete),
    /// Log-det chain rule, dimension additivity and the cocycle condition on
    /// a subspace structure; optionally the mixed-sector check.
    VerifyGaussian(VerifyGaussian),
    /// Two-route and posterior-entropy identities on mixed laws.
    MixtureIdentity(MixtureIdentity),
    /// Kernel density convergence table and slope tests.
    KdeConverge(KdeConverge),
    /// Closure, constraint system and nullspace for local cocycles.
    SolveNullspace(SolveNullspace),
    /// Structure axioms report.
    ValidateStructure(ValidateStructure),
}

#[derive(Debug, Args)]
pub struct VerifyDiscrete {
    #[command(flatten)]
    pub common: Common,
    /// Structure JSON (default: partition lattice of a 4-set).
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// Laws JSON on the finest observable (default: random exact laws).
    #[arg(long)]
    pub laws: Option<PathBuf>,
    /// Number of random laws when --laws is absent.
    #[arg(long, default_value_t = 100)]
    pub n_laws: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Entropy weight of the cochain.
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Replace `b` at one generator, as `INDEX:VALUE` (repeatable).
    #[arg(long = "override", value_name = "INDEX:B")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct VerifyGaussian {
    #[command(flatten)]
    pub common: Common,
    /// Structure JSON (default: coordinate subspaces of R^3).
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// Gaussian laws JSON on the largest subspace (default: random).
    #[arg(long)]
    pub laws: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n_laws: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Also check the cochain `(a, b, c)` across sectors on random mixed
    /// laws, with this `b`.
    #[arg(long)]
    pub mixed_b: Option<f64>,
    /// Extension of the cochain to mixtures for the mixed-sector check.
    #[arg(long, value_enum, default_value_t = RuleArg::EntropyExtension)]
    pub mixture_rule: RuleArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Derived,
    EntropyExtension,
}

impl From<RuleArg> for MixtureRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Derived => MixtureRule::Derived,
            RuleArg::EntropyExtension => MixtureRule::EntropyExtension,
        }
    }
}

#[derive(Debug, Args)]
pub struct MixtureIdentity {
    #[command(flatten)]
    pub common: Common,
    /// Mixed laws JSON (default: random suite).
    #[arg(long)]
    pub laws: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub suite_size: usize,
    #[arg(long, default_value_t = 2)]
    pub max_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub max_components: usize,
    /// Random suite with one block per law.
    #[arg(long)]
    pub single_component: bool,
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Dimension weight (default: ½ log 2πe, the entropy cochain).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Derived)]
    pub mixture_rule: RuleArg,
}

#[derive(Debug, Args)]
pub struct KdeConverge {
    #[command(flatten)]
    pub common: Common,
    /// Target JSON (default: standard gaussian of dimension --dim).
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',', default_value = "100,300,1000,3000,10000")]
    pub schedule: Vec<usize>,
    /// `power:SCALE:EXPONENT` or `const:H` (default: n^(-1/(d+4))).
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Candidate constants as `a,b,c` (repeatable; default (1,1,0),
    /// (0,1,0), (½,1,0)).
    #[arg(long = "candidate", value_name = "A,B,C")]
    pub candidates: Vec<String>,
    /// Plot-ready long CSV (one row per n and metric).
    #[arg(long)]
    pub long: bool,
}

#[derive(Debug, Args)]
pub struct SolveNullspace {
    #[command(flatten)]
    pub common: Common,
    /// Discrete structure JSON (default: partition lattice of a 4-set).
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// Seed laws JSON on the finest observable (default: every law with
    /// weights in (1/denominator)Z).
    #[arg(long)]
    pub laws: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub denominator: u32,
    /// Relative singular-value cutoff.
    #[arg(long, default_value_t = DEFAULT_NULLSPACE_TOL)]
    pub tol: f64,
    /// Bound on the entropy vector's constraint residual.
    #[arg(long, default_value_t = 1e-9)]
    pub residual_tol: f64,
    #[arg(long, default_value_t = DEFAULT_CLOSURE_CAP)]
    pub cap: usize,
    /// Write the constraint matrix as `row col value` triplets.
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Basis vectors included in the report.
    #[arg(long, default_value_t = 3)]
    pub basis_sample: usize,
}

#[derive(Debug, Args)]
pub struct ValidateStructure {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub structure: PathBuf,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ClosureExplosion { .. } => EXIT_CAP,
        Error::DivergentAction(_) => EXIT_FAIL,
        _ => EXIT_INPUT,
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::VerifyDiscrete(c) => &c.common,
        Command::VerifyGaussian(c) => &c.common,
        Command::MixtureIdentity(c) => &c.common,
        Command::KdeConverge(c) => &c.common,
        Command::SolveNullspace(c) => &c.common,
        Command::ValidateStructure(c) => &c.common,
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let common = common(&cli.command);
    if common.budget == 0 {
        return Err(Error::BudgetTooSmall { requested: 0, minimum: mc::MIN_MC_BUDGET });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| Error::InvalidLaw(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::VerifyDiscrete(c) => verify_discrete(c),
        Command::VerifyGaussian(c) => verify_gaussian(c),
        Command::MixtureIdentity(c) => mixture_identity(c),
        Command::KdeConverge(c) => kde_converge(c),
        Command::SolveNullspace(c) => solve_nullspace(c),
        Command::ValidateStructure(c) => validate(c),
    })
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidLaw(format!("tolerance must be positive, got {tol}")))
    }
}

fn emit(common: &Common, json: &str, csv: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut sink: Box<dyn Write> = match &common.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match common.format {
        Format::Json => sink.write_all(json.as_bytes())?,
        Format::Csv => csv(&mut sink)?,
    }
    sink.flush()?;
    Ok(())
}

fn write_cases_csv(cases: &[IdentityCase], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["descriptor", "lhs", "lhs_se", "rhs", "rhs_se", "residual", "residual_se", "tolerance", "passed"])?;
    for c in cases {
        w.write_record([
            c.descriptor.clone(),
            c.lhs.value.to_string(),
            c.lhs.std_error.to_string(),
            c.rhs.value.to_string(),
            c.rhs.std_error.to_string(),
            c.residual.to_string(),
            c.residual_std_error.to_string(),
            c.tolerance.to_string(),
            c.passed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Identity suite condensed to counts, the worst case and failures.
#[derive(Debug, Serialize)]
pub struct SuiteSummary {
    pub tag: String,
    pub cases: usize,
    pub failed: usize,
    pub max_residual: f64,
    pub passed: bool,
    pub worst: Option<IdentityCase>,
    pub failures: Vec<IdentityCase>,
}

impl SuiteSummary {
    fn from_report(r: &IdentityReport) -> Self {
        let failures: Vec<IdentityCase> = r.cases.iter().filter(|c| !c.passed).cloned().collect();
        let worst = r
            .cases
            .iter()
            .max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
            .cloned();
        Self {
            tag: r.tag.clone(),
            cases: r.cases.len(),
            failed: failures.len(),
            max_residual: r.max_residual,
            passed: r.passed,
            worst,
            failures: failures.into_iter().take(MAX_LISTED_FAILURES).collect(),
        }
    }
}

fn finest(s: &InformationStructure) -> Result<ObjId> {
    s.ids()
        .find(|&x| s.coarser_monoid(x).len() == s.len())
        .ok_or_else(|| Error::InvalidStructure("structure has no finest observable".into()))
}

fn require_sector(s: &InformationStructure, sector: Sector) -> Result<()> {
    if s.sector() == sector {
        Ok(())
    } else {
        Err(Error::InvalidSector(format!("expected a {sector:?} structure, got {:?}", s.sector())))
    }
}

fn require_valid(s: &InformationStructure) -> Result<()> {
    let report = validate_structure(s);
    if report.passed {
        return Ok(());
    }
    let failed: Vec<String> =
        report.checks.iter().filter(|c| c.required && !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    Err(Error::InvalidStructure(failed.join("; ")))
}

fn parse_override(s: &str) -> Result<(usize, f64)> {
    let bad = || Error::InvalidLaw(format!("override must be INDEX:VALUE, got {s:?}"));
    let (i, v) = s.split_once(':').ok_or_else(bad)?;
    Ok((i.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
}

#[derive(Debug, Serialize)]
struct DiscreteRun {
    command: &'static str,
    objects: usize,
    laws: usize,
    tol: f64,
    seed: u64,
    b: f64,
    overrides: Vec<(usize, f64)>,
    report: SuiteSummary,
}

fn verify_discrete(c: &VerifyDiscrete) -> Result<i32> {
    check_tol(c.tol)?;
    let s = match &c.structure {
        Some(p) => load_structure(p)?,
        None => partition_lattice(4)?,
    };
    require_sector(&s, Sector::Discrete)?;
    require_valid(&s)?;
    let x = finest(&s)?;
    let n = s.object(x).n_blocks();
    let laws = match &c.laws {
        Some(p) => load_laws(p)?,
        None => {
            let mut rng = mc::rng_for(c.common.seed, 0);
            (0..c.n_laws).map(|_| Law::Discrete(random::exact_law(&mut rng, n, 6))).collect()
        }
    };
    let params = Params::new(0.5, c.b, 0.0);
    let mut cochain = make_cochain(params.a, params.b, params.c);
    let mut overrides = Vec::new();
    for o in &c.overrides {
        let (i, b) = parse_override(o)?;
        if i >= s.len() {
            return Err(Error::InvalidStructure(format!("override index {i} outside the structure")));
        }
        cochain = cochain.with_override(ObjId(i), Params { b, ..params });
        overrides.push((i, b));
    }
    let budget = McBudget::new(c.common.budget, c.common.seed);
    let report = check_cocycle_all_pairs(&cochain, &s, x, &laws, c.tol, &budget)?;
    let run = DiscreteRun {
        command: "verify-discrete",
        objects: s.len(),
        laws: laws.len(),
        tol: c.tol,
        seed: c.common.seed,
        b: c.b,
        overrides,
        report: SuiteSummary::from_report(&report),
    };
    emit(&c.common, &to_json(&run)?, |w| write_cases_csv(&report.cases, w))?;
    Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Debug, Serialize)]
struct GaussianRun {
    command: &'static str,
    objects: usize,
    laws: usize,
    tol: f64,
    seed: u64,
    a: f64,
    c: f64,
    chain_rule: SuiteSummary,
    cocycle: SuiteSummary,
    mixed: Option<IdentityReport>,
    passed: bool,
}

fn verify_gaussian(c: &VerifyGaussian) -> Result<i32> {
    check_tol(c.tol)?;
    let s = match &c.structure {
        Some(p) => load_structure(p)?,
        None => coordinate_lattice(3)?,
    };
    require_sector(&s, Sector::Continuous)?;
    require_valid(&s)?;
    let x = finest(&s)?;
    let d = s.object(x).continuous_dim();
    let gaussians: Vec<GaussianLaw> = match &c.laws {
        Some(p) => load_laws(p)?
            .into_iter()
            .map(|l| match l {
                Law::Gaussian(g) => Ok(g),
                other => Err(Error::NotGaussian(other.kind())),
            })
            .collect::<Result<_>>()?,
        None => {
            let mut rng = mc::rng_for(c.common.seed, 0);
            (0..c.n_laws).map(|_| random::gaussian(&mut rng, d)).collect()
        }
    };
    let mut chain = Vec::new();
    for y in s.coarser_monoid(x) {
        chain.push(check_logdet_chain_rule(&s, x, y, &gaussians, c.tol)?);
    }
    let chain = IdentityReport::merge("logdet-chain-rule", chain);
    let laws: Vec<Law> = gaussians.into_iter().map(Law::Gaussian).collect();
    let budget = McBudget::new(c.common.budget, c.common.seed);
    let cocycle = check_cocycle_all_pairs(&make_cochain(c.a, 0.0, c.c), &s, x, &laws, c.tol, &budget)?;
    let mixed = match c.mixed_b {
        Some(b) => {
            budget.check()?;
            let cochain = make_cochain(c.a, b, c.c).with_rule(c.mixture_rule.into());
            let mut rng = mc::rng_for(c.common.seed, 1);
            let mut reports = Vec::new();
            for i in 0..4u64 {
                let law = random::mixed_law(&mut rng, 1 + (i as usize % 2), 2 + i as usize % 3);
                reports.push(check_mixture_identity(&cochain, &law, &budget.derive(i))?);
            }
            Some(IdentityReport::merge("two-route-mixture", reports))
        }
        None => None,
    };
    let passed = chain.passed && cocycle.passed && mixed.as_ref().is_none_or(|m| m.passed);
    let run = GaussianRun {
        command: "verify-gaussian",
        objects: s.len(),
        laws: laws.len(),
        tol: c.tol,
        seed: c.common.seed,
        a: c.a,
        c: c.c,
        chain_rule: SuiteSummary::from_report(&chain),
        cocycle: SuiteSummary::from_report(&cocycle),
        mixed: mixed.clone(),
        passed,
    };
    let mut all = chain.cases.clone();
    all.extend(cocycle.cases.iter().cloned());
    if let Some(m) = &mixed {
        all.extend(m.cases.iter().cloned());
    }
    emit(&c.common, &to_json(&run)?, |w| write_cases_csv(&all, w))?;
    Ok(if passed { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Debug, Serialize)]
struct MixtureRun {
    command: &'static str,
    laws: usize,
    budget: usize,
    seed: u64,
    params: Params,
    rule: MixtureRule,
    two_route: IdentityReport,
    posterior_entropy: IdentityReport,
    passed: bool,
}

/// Random mixed laws: dimension in `1..=max_dim`, blocks in
/// `1..=max_components`, one gaussian per block.
pub fn mixture_suite(seed: u64, size: usize, max_dim: usize, max_components: usize) -> Vec<MixedLaw> {
    let mut rng = mc::rng_for(seed, 0);
    (0..size)
        .map(|_| {
            let d = rand::Rng::random_range(&mut rng, 1..=max_dim.max(1));
            let k = rand::Rng::random_range(&mut rng, 1..=max_components.max(1));
            random::mixed_law(&mut rng, d, k)
        })
        .collect()
}

fn mixture_identity(c: &MixtureIdentity) -> Result<i32> {
    let budget = McBudget::new(c.common.budget, c.common.seed);
    budget.check()?;
    let laws: Vec<MixedLaw> = match &c.laws {
        Some(p) => load_laws(p)?
            .into_iter()
            .map(|l| match l {
                Law::Mixed(m) => Ok(m),
                other => Err(Error::InvalidLaw(format!("expected mixed laws, got {}", other.kind()))),
            })
            .collect::<Result<_>>()?,
        None => {
            let k = if c.single_component { 1 } else { c.max_components };
            mixture_suite(c.common.seed, c.suite_size, c.max_dim, k)
        }
    };
    let params = Params::new(c.a, c.b, c.c.unwrap_or(Params::entropy().c));
    let cochain = make_cochain(params.a, params.b, params.c).with_rule(c.mixture_rule.into());
    let mut two_route = Vec::new();
    let mut posterior = Vec::new();
    for (i, law) in laws.iter().enumerate() {
        let b = budget.derive(i as u64);
        two_route.push(check_mixture_identity(&cochain, law, &b.derive(1))?);
        posterior.push(check_integrated_identity(law, &b.derive(2))?);
    }
    let label = |r: IdentityReport, i: usize| IdentityReport::new(&r.tag, r.cases.into_iter().map(|mut k| {
        k.descriptor = format!("law {i}: {}", k.descriptor);
        k
    }).collect());
    let two_route = IdentityReport::merge("two-route-mixture", two_route.into_iter().enumerate().map(|(i, r)| label(r, i)).collect());
    let posterior = IdentityReport::merge("posterior-entropy-identity", posterior.into_iter().enumerate().map(|(i, r)| label(r, i)).collect());
    let passed = two_route.passed && posterior.passed;
    let run = MixtureRun {
        command: "mixture-identity",
        laws: laws.len(),
        budget: budget.samples,
        seed: budget.seed,
        params,
        rule: cochain.rule,
        two_route,
        posterior_entropy: posterior,
        passed,
    };
    let mut all = run.two_route.cases.clone();
    all.extend(run.posterior_entropy.cases.iter().cloned());
    emit(&c.common, &to_json(&run)?, |w| write_cases_csv(&all, w))?;
    Ok(if passed { EXIT_PASS } else { EXIT_FAIL })
}

fn parse_bandwidth(s: &str) -> Result<BandwidthRule> {
    let bad = || Error::InvalidLaw(format!("bandwidth must be power:SCALE:EXPONENT or const:H, got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let rule = match parts.as_slice() {
        ["power", scale, exponent] => BandwidthRule::Power { scale: num(scale)?, exponent: num(exponent)? },
        ["const", h] => BandwidthRule::Constant { h: num(h)? },
        _ => return Err(bad()),
    };
    rule.check()?;
    Ok(rule)
}

fn parse_candidate(s: &str) -> Result<Params> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidLaw(format!("candidate must be a,b,c, got {s:?}")))?;
    match v.as_slice() {
        [a, b, c] => Ok(Params::new(*a, *b, *c)),
        _ => Err(Error::InvalidLaw(format!("candidate must be a,b,c, got {s:?}"))),
    }
}

#[derive(Debug, Serialize)]
struct KdeRun<'a> {
    command: &'static str,
    passed: bool,
    #[serde(flatten)]
    report: &'a KdeReport,
}

fn kde_converge(c: &KdeConverge) -> Result<i32> {
    let target = match &c.target {
        Some(p) => read_json::<Target>(p)?,
        None => Target::standard_gaussian(c.dim),
    };
    let mut cfg = KdeConfig::new(target, c.schedule.clone());
    cfg.seed = c.common.seed;
    cfg.budget = c.common.budget;
    if let Some(b) = &c.bandwidth {
        cfg.bandwidth = parse_bandwidth(b)?;
    }
    if !c.candidates.is_empty() {
        cfg.candidates = c.candidates.iter().map(|s| parse_candidate(s)).collect::<Result<_>>()?;
    }
    let report = run_report(&cfg)?;
    if !report.validity.valid {
        eprintln!("note: bandwidth rule does not satisfy h_n -> 0 and n h_n^d -> inf; J_n need not vanish");
    }
    if report.slopes.is_empty() {
        eprintln!("note: fewer than 4 rows, slope tests skipped");
    }
    let passed = report.slopes_pass();
    let json = to_json(&KdeRun { command: "kde-converge", passed, report: &report })?;
    emit(&c.common, &json, |w| if c.long { write_rows_long_csv(&report.rows, w) } else { write_rows_csv(&report.rows, w) })?;
    Ok(if passed { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Debug, Serialize)]
struct NullspaceRun {
    command: &'static str,
    seeds: usize,
    residual_tol: f64,
    passed: bool,
    #[serde(flatten)]
    report: NullspaceReport,
}

fn solve_nullspace(c: &SolveNullspace) -> Result<i32> {
    check_tol(c.tol)?;
    check_tol(c.residual_tol)?;
    let s = match &c.structure {
        Some(p) => load_structure(p)?,
        None => partition_lattice(4)?,
    };
    require_sector(&s, Sector::Discrete)?;
    require_valid(&s)?;
    let x = finest(&s)?;
    let seeds = match &c.laws {
        Some(p) => load_laws(p)?
            .into_iter()
            .map(|l| match l {
                Law::Discrete(d) => Ok(d),
                other => Err(Error::InvalidLaw(format!("seeds must be discrete, got {}", other.kind()))),
            })
            .collect::<Result<Vec<_>>>()?,
        None => {
            if c.denominator == 0 {
                return Err(Error::InvalidLaw("denominator must be positive".into()));
            }
            random::lattice_laws(s.object(x).n_blocks(), c.denominator)
        }
    };
    let (problem, mut report) = solve_discrete_nullspace(&s, x, &seeds, c.tol, c.cap)?;
    if let Some(p) = &c.triplets {
        problem.write_triplets(p)?;
    }
    report.basis.truncate(c.basis_sample);
    let passed = report.entropy_residual <= c.residual_tol;
    let run = NullspaceRun { command: "solve-nullspace", seeds: seeds.len(), residual_tol: c.residual_tol, passed, report };
    emit(&c.common, &to_json(&run)?, |w| write_nullspace_csv(&run, w))?;
    Ok(if passed { EXIT_PASS } else { EXIT_FAIL })
}

fn write_nullspace_csv(run: &NullspaceRun, out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["closure_size", "constraints", "rank", "dimension", "entropy_residual", "entropy_projection_residual", "passed"])?;
    let r = &run.report;
    w.write_record([
        r.closure_size.to_string(),
        r.constraints.to_string(),
        r.rank.to_string(),
        r.dimension.to_string(),
        r.entropy_residual.to_string(),
        r.entropy_projection_residual.to_string(),
        run.passed.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn validate(c: &ValidateStructure) -> Result<i32> {
    let s = load_structure(Path::new(&c.structure))?;
    let report = validate_structure(&s);
    emit(&c.common, &to_json(&report)?, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check", "required", "passed", "detail"])?;
        for k in &report.checks {
            w.write_record([k.name.clone(), k.required.to_string(), k.passed.to_string(), k.detail.clone()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        assert_eq!(parse_override("3:2.5").unwrap(), (3, 2.5));
        assert!(parse_override("x").is_err());
        assert_eq!(parse_bandwidth("power:1:0.2").unwrap(), BandwidthRule::Power { scale: 1.0, exponent: 0.2 });
        assert_eq!(parse_bandwidth("const:0.5").unwrap(), BandwidthRule::Constant { h: 0.5 });
        assert!(parse_bandwidth("const:-1").is_err());
        assert_eq!(parse_candidate("0.5, 1, 0").unwrap(), Params::new(0.5, 1.0, 0.0));
        assert!(parse_candidate("1,2").is_err());
    }

    #[test]
    fn exit_codes_follow_error_kinds() {
        assert_eq!(exit_code(&Error::ClosureExplosion { cap: 1 }), EXIT_CAP);
        assert_eq!(exit_code(&Error::BudgetTooSmall { requested: 1, minimum: 2 }), EXIT_INPUT);
        assert_eq!(main_with(["infocoh", "verify-discrete", "--structure", "/nonexistent.json"]), EXIT_INPUT);
        assert_eq!(main_with(["infocoh", "no-such-command"]), EXIT_INPUT);
    }
}
