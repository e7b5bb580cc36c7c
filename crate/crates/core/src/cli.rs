//! Command-line front end.
//!
//! Every subcommand prints one JSON report on stdout and exits with 0 when all
//! checks pass, 1 when a check fails and 2 on usage or input errors. Wall-clock
//! timing goes to stderr so reports stay byte-identical across runs.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::chain::{assert_detailed_balance, gibbs_stationarity_residual};
use crate::collision::validate_energy_preservation;
use crate::document::parse_model;
use crate::entropy::average_entropy_production;
use crate::error::{Error, Result};
use crate::export::{read_csv, read_json, write_csv, write_json};
use crate::ft::{verify_joint_ft, verify_partial_decomposition, verify_product_relation, verify_route_equivalence};
use crate::heat::{system_path_bound, exact_backward_joint, exact_forward_joint, single_collision_distribution, Direction, JointHeatDistribution};
use crate::model::Model;
use crate::sampler::{empirical_joint, integral_ft_estimate, run_sampler, SamplerConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Unitarity tolerance used by `validate`.
const UNITARITY_TOLERANCE: f64 = 1e-10;
/// Sample mean of `exp(-sigma)` must lie within this many standard errors of 1.
const INTEGRAL_FT_SIGMAS: f64 = 5.0;

#[derive(Parser, Debug)]
#[command(name = "seqheat", version, about = "Joint heat statistics of sequential collision chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Model document (JSON).
    model: PathBuf,
    /// Overrides the model's log-residual tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Overrides the model's enumeration cap (number of paths).
    #[arg(long)]
    cap: Option<u64>,
    /// Overrides the model's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Unitarity, energy preservation and detailed balance of every collision.
    Validate(Common),
    /// Writes the exact forward and backward joint heat distributions.
    Exact {
        #[command(flatten)]
        common: Common,
        /// Forward distribution path; the backward one goes next to it with
        /// `.backward` before the extension.
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the extension of `--out`, else csv.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Joint and product fluctuation relations, partial decomposition and
    /// route equivalence.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Previously exported forward distribution to check instead of
        /// recomputing it.
        #[arg(long, requires = "backward")]
        forward: Option<PathBuf>,
        #[arg(long, requires = "forward")]
        backward: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the forward joint heat distribution.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        shots: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Writes one JSON line per shot.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Writes the empirical distribution.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Mean entropy production computed three independent ways.
    Entropy(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Exact { .. } => "exact",
            Command::Verify { .. } => "verify",
            Command::Sample { .. } => "sample",
            Command::Entropy(_) => "entropy",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Validate(c) | Command::Entropy(c) => c,
            Command::Exact { common, .. } | Command::Verify { common, .. } | Command::Sample { common, .. } => common,
        }
    }
}

struct Loaded {
    model: Model,
    tolerance: f64,
    detailed_balance_tolerance: f64,
    seed: u64,
    seed_source: &'static str,
}

fn load(common: &Common) -> Result<Loaded> {
    let text = std::fs::read_to_string(&common.model)?;
    let mut config = parse_model(&text)?;
    let seed_source = match common.seed {
        Some(s) => {
            config.master_seed = s;
            "flag"
        }
        None => "model",
    };
    if let Some(cap) = common.cap {
        config.enumeration_cap = cap;
    }
    if let Some(t) = common.tolerance {
        config.tolerance = t;
    }
    config.validate()?;
    Ok(Loaded {
        model: Model::build(&config)?,
        tolerance: config.tolerance,
        detailed_balance_tolerance: config.detailed_balance_tolerance,
        seed: config.master_seed,
        seed_source,
    })
}

fn format_for(path: &Path, explicit: Option<Format>) -> Format {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
        _ => Format::Csv,
    })
}

/// `dist.csv` -> `dist.backward.csv`.
pub fn backward_path(forward: &Path) -> PathBuf {
    let stem = forward.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match forward.extension() {
        Some(ext) => format!("{stem}.backward.{}", ext.to_string_lossy()),
        None => format!("{stem}.backward"),
    };
    forward.with_file_name(name)
}

fn write_distribution(dist: &JointHeatDistribution, path: &Path, format: Format) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(dist, &mut out)?,
        Format::Json => write_json(dist, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn read_distribution(path: &Path, direction: Direction, model: &Model) -> Result<JointHeatDistribution> {
    let input = BufReader::new(File::open(path)?);
    let dist = match format_for(path, None) {
        Format::Csv => read_csv(input, direction, Some(model.system_spectrum()))?,
        Format::Json => read_json(input)?,
    };
    if dist.direction() != direction {
        return Err(Error::Validation(format!("{} holds a {} distribution, expected {direction}", path.display(), dist.direction())));
    }
    if dist.collisions() != model.len() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            found: dist.collisions(),
        });
    }
    Ok(dist)
}

fn check(name: &str, passed: bool, details: impl serde::Serialize) -> Result<Value> {
    Ok(json!({"name": name, "passed": passed, "details": serde_json::to_value(details)?}))
}

fn validate(l: &Loaded) -> Result<Vec<Value>> {
    let mut checks = Vec::new();
    let system = l.model.system_spectrum();
    for c in l.model.collisions() {
        let ep = validate_energy_preservation(&c.unitary, UNITARITY_TOLERANCE);
        checks.push(check(&format!("energy_preservation[{}]", c.index), ep.passed, &ep)?);
        let stochastic = c.propagator.stochasticity_residual();
        checks.push(check(
            &format!("stochasticity[{}]", c.index),
            stochastic <= UNITARITY_TOLERANCE,
            json!({"residual": stochastic, "tolerance": UNITARITY_TOLERANCE}),
        )?);
        let db = assert_detailed_balance(&c.propagator, c.beta, system, l.detailed_balance_tolerance);
        checks.push(check(&format!("detailed_balance[{}]", c.index), db.passed, &db)?);
        let ancilla_gibbs = crate::thermal::gibbs_state(system, c.beta)?;
        let stationary = gibbs_stationarity_residual(&c.propagator, &ancilla_gibbs)?;
        checks.push(check(
            &format!("gibbs_stationarity[{}]", c.index),
            stationary <= l.detailed_balance_tolerance,
            json!({"residual": stationary, "tolerance": l.detailed_balance_tolerance}),
        )?);
    }
    Ok(checks)
}

fn verify(l: &Loaded, files: Option<(&Path, &Path)>) -> Result<Vec<Value>> {
    let model = &l.model;
    let (fwd, bwd, source) = match files {
        Some((f, b)) => (read_distribution(f, Direction::Forward, model)?, read_distribution(b, Direction::Backward, model)?, "files"),
        None => (exact_forward_joint(model)?, exact_backward_joint(model)?, "exact"),
    };
    let mut checks = Vec::new();
    let joint = verify_joint_ft(&fwd, &bwd, &model.betas(), model.system_beta(), l.tolerance)?;
    checks.push(check("joint_ft", joint.passed, json!({"source": source, "report": joint}))?);
    let singles = (1..=model.len()).map(|i| single_collision_distribution(model, i)).collect::<Result<Vec<_>>>()?;
    let product = verify_product_relation(&fwd, &bwd, &singles, l.tolerance)?;
    checks.push(check("product_relation", product.passed, &product)?);
    if model.len() >= 2 {
        let partial = verify_partial_decomposition(model, l.tolerance)?;
        checks.push(check("partial_decomposition", partial.passed, &partial)?);
    }
    let routes = verify_route_equivalence(model, crate::ft::ROUTE_TOLERANCE)?;
    checks.push(check("route_equivalence", routes.passed, &routes)?);
    Ok(checks)
}

fn report(command: &Command, args: &[String], l: &Loaded, checks: Vec<Value>, extra: Value) -> Value {
    let passed = checks.iter().all(|c| c["passed"] == json!(true));
    let mut out = json!({
        "command": command.name(),
        "arguments": args,
        "model": command.common().model.display().to_string(),
        "collisions": l.model.len(),
        "seed": {"value": l.seed, "source": l.seed_source},
        "checks": checks,
        "passed": passed,
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut out, extra) {
        map.extend(more);
    }
    out
}

fn execute(command: &Command, args: &[String]) -> Result<Value> {
    let l = load(command.common())?;
    let model = &l.model;
    let (checks, extra) = match command {
        Command::Validate(_) => (validate(&l)?, json!({})),
        Command::Exact { out, format, .. } => {
            let format = format_for(out, *format);
            let fwd = exact_forward_joint(model)?;
            let bwd = exact_backward_joint(model)?;
            let back_path = backward_path(out);
            write_distribution(&fwd, out, format)?;
            write_distribution(&bwd, &back_path, format)?;
            let summary = |d: &JointHeatDistribution, p: &Path| {
                json!({"path": p.display().to_string(), "entries": d.len(), "total_mass": d.total_mass(), "pruned_mass": d.pruned_mass()})
            };
            (Vec::new(), json!({"forward": summary(&fwd, out), "backward": summary(&bwd, &back_path)}))
        }
        Command::Verify { forward, backward, .. } => {
            let files = forward.as_deref().zip(backward.as_deref());
            (verify(&l, files)?, json!({}))
        }
        Command::Sample { shots, workers, dump, out, format, .. } => {
            let config = SamplerConfig {
                shots: *shots,
                master_seed: l.seed,
                workers: *workers,
            };
            let outcome = match dump {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(path)?);
                    let o = run_sampler(model, &config, Some(&mut w))?;
                    w.flush()?;
                    o
                }
                None => run_sampler(model, &config, None)?,
            };
            let (mean, se) = integral_ft_estimate(&outcome, &model.betas(), model.system_beta());
            let within = (mean - 1.0).abs() <= INTEGRAL_FT_SIGMAS * se.max(f64::EPSILON);
            let checks = vec![check(
                "integral_ft",
                within,
                json!({"mean": mean, "standard_error": se, "allowed_sigmas": INTEGRAL_FT_SIGMAS}),
            )?];
            let empirical = empirical_joint(&outcome)?;
            if let Some(path) = out {
                write_distribution(&empirical.distribution, path, format_for(path, *format))?;
            }
            let exact_tv = if system_path_bound(model) <= model.enumeration_cap() as f64 {
                Some(empirical.distribution.total_variation(&exact_forward_joint(model)?))
            } else {
                None
            };
            let extra = json!({
                "shots": outcome.shots,
                "workers": workers,
                "distinct_tuples": outcome.counts.len(),
                "total_variation_to_exact": exact_tv,
            });
            (checks, extra)
        }
        Command::Entropy(_) => {
            let r = average_entropy_production(model, l.tolerance)?;
            (vec![check("entropy_production", r.passed, &r)?], json!({}))
        }
    };
    Ok(report(command, args, &l, checks, extra))
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Consistency(_) | Error::Validation(_) => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and writes the report.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(stderr, "{text}") } else { write!(stdout, "{text}") };
            return code;
        }
    };
    let echo: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let started = Instant::now();
    let result = execute(&cli.command, &echo);
    let _ = writeln!(stderr, "{} finished in {:.3} s", cli.command.name(), started.elapsed().as_secs_f64());
    match result {
        Ok(report) => {
            let passed = report["passed"] == json!(true);
            match serde_json::to_string_pretty(&report) {
                Ok(text) => {
                    let _ = writeln!(stdout, "{text}");
                }
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return EXIT_USAGE;
                }
            }
            if passed {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code_for(&e)
        }
    }
}
