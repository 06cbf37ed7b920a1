use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entangle_core::experiment::{omega_from_spec, run_experiment, ExperimentConfig, OmegaSpec, OutputFormat, TestSet};
use entangle_core::io::{read_json, to_json_string, vector_from_json, MatrixJson};
use entangle_core::separability::{
    decide_state, separable_sample, verify_product_decomposition, witness_from_pure, ProductDecomposition,
};
use entangle_core::states::{purify, state_from_tuple, tuple_from_state, DensityMatrix, MarginalState};
use entangle_core::stiefel::{sample_haar_tuple, tuple_rank_with_tol, IsometryTuple, SeededRng};
use entangle_core::tensor::max_abs_diff;
use entangle_core::wedge::{wedge_invariants, witness_tuple};
use entangle_core::{Error, Result, DEFAULT_REL_TOL};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "entangle", version, about = "Random state extensions, wedge invariants, and separability tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit sampled tuples, states, or product decompositions as JSON.
    Sample(SampleArgs),
    /// Verdict and wedge invariants for a tuple or state file.
    Analyze(AnalyzeArgs),
    /// Run a seeded Monte Carlo experiment.
    Experiment(ExperimentArgs),
    /// Witness operator and Schmidt bound for a pure state.
    Witness(WitnessArgs),
    /// Check a product decomposition against a state.
    VerifyDecomposition(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Haar,
    Separable,
    Witness,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Tuple,
    State,
    Decomposition,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First RNG stream; sample `k` uses stream `stream + k`.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// With a count above one the output is a JSON array.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, value_enum, default_value_t = Kind::Haar)]
    kind: Kind,
    #[arg(long, value_enum, default_value_t = Emit::Tuple)]
    emit: Emit,
    #[arg(long, default_value = "maximally-mixed")]
    omega: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, conflicts_with = "state", required_unless_present = "state")]
    tuple: Option<PathBuf>,
    #[arg(long)]
    state: Option<PathBuf>,
    /// `m,n`; overrides the dims stored in the state file.
    #[arg(long)]
    dims: Option<String>,
    /// Marginal used to form the state of a tuple.
    #[arg(long, default_value = "maximally-mixed")]
    omega: String,
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    rel_tol: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON configuration; replaces the sampling flags but not --out, --format, or --workers.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    m: Option<usize>,
    /// One rank or a comma-separated list.
    #[arg(long, visible_alias = "r-list", required_unless_present = "config")]
    r: Option<String>,
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "maximally-mixed")]
    omega: String,
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    rel_tol: f64,
    /// Comma-separated subset of wedge,ppt,ball.
    #[arg(long, default_value = "wedge,ppt,ball")]
    tests: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct WitnessArgs {
    /// Pure state vector as a matrix JSON column.
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    dims: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    decomposition: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

fn parse_dims(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [m, n] => match (m.parse(), n.parse()) {
            (Ok(m), Ok(n)) if m > 0 && n > 0 => Ok((m, n)),
            _ => Err(Error::Parse(format!("invalid dims '{text}'"))),
        },
        _ => Err(Error::Parse(format!("dims must be 'm,n', got '{text}'"))),
    }
}

fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Parse(format!("invalid rank list '{text}'"))))
        .collect()
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = to_json_string(value)?;
    emit_text(&text, out)
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut body = text.to_string();
            if !body.ends_with('\n') {
                body.push('\n');
            }
            fs::write(path, body)?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            match writeln!(stdout, "{}", text.trim_end()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn sample(args: &SampleArgs) -> Result<Value> {
    let omega = omega_from_spec(&args.omega.parse()?, args.n)?;
    let xi = purify(&omega);
    let mut items = Vec::new();
    for k in 0..args.count {
        let mut rng = SeededRng::new(args.seed, args.stream + k);
        let (tuple, decomposition) = match args.kind {
            Kind::Haar => (sample_haar_tuple(args.n, args.m, args.r, &mut rng)?, None),
            Kind::Witness => (witness_tuple(args.n, args.m, args.r)?, None),
            Kind::Separable => {
                let (t, d) = separable_sample(&omega, args.r, args.m, &mut rng)?;
                (t, Some(d))
            }
        };
        let item = match args.emit {
            Emit::Tuple => serde_json::to_value(&tuple)?,
            Emit::State => serde_json::to_value(state_from_tuple(&tuple, &xi)?.to_json(Some((args.m, args.n))))?,
            Emit::Decomposition => match decomposition {
                Some(d) => serde_json::to_value(d)?,
                None => return Err(Error::Precondition("decompositions exist only for --kind separable".into())),
            },
        };
        items.push(item);
    }
    Ok(if items.len() == 1 { items.remove(0) } else { Value::Array(items) })
}

fn analyze(args: &AnalyzeArgs) -> Result<Value> {
    let dims = args.dims.as_deref().map(parse_dims).transpose()?;
    let (verdict, wedge, tuple_rank, state_rank) = if let Some(path) = &args.tuple {
        let v: IsometryTuple = read_json(path)?;
        let omega = omega_from_spec(&args.omega.parse()?, v.n())?;
        let rho = state_from_tuple(&v, &purify(&omega))?;
        let inv = wedge_invariants(&v, args.rel_tol)?;
        let verdict = decide_state(&rho, v.m(), v.n(), Some(inv.clone()))?;
        (verdict, Some(inv), Some(tuple_rank_with_tol(&v, args.rel_tol)), rho.rank_with_tol(args.rel_tol))
    } else {
        let path = args.state.as_ref().expect("clap requires --tuple or --state");
        let (rho, stored) = DensityMatrix::from_json(read_json(path)?)?;
        let (m, n) = dims
            .or(stored)
            .ok_or_else(|| Error::Parse("state file has no dims; pass --dims m,n".into()))?;
        if m * n != rho.dim() {
            return Err(Error::Shape(format!("dims {m},{n} do not match a {0}x{0} state", rho.dim())));
        }
        let omega = MarginalState::new(rho.marginal(m, n)?);
        let rank = rho.rank_with_tol(args.rel_tol);
        // The wedge invariant needs a tuple, which exists for faithful marginals.
        let inv = if omega.is_faithful() {
            let v = tuple_from_state(&rho, rank, &purify(&omega))?;
            Some(wedge_invariants(&v, args.rel_tol)?)
        } else {
            None
        };
        (decide_state(&rho, m, n, inv.clone())?, inv, None, rank)
    };
    let mut value = serde_json::to_value(&verdict)?;
    let map = value.as_object_mut().expect("verdict serializes as an object");
    map.insert("wedge".into(), serde_json::to_value(&wedge)?);
    map.insert("state_rank".into(), json!(state_rank));
    if let Some(rank) = tuple_rank {
        map.insert("tuple_rank".into(), json!(rank));
    }
    Ok(value)
}

fn experiment(args: &ExperimentArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => read_json::<ExperimentConfig>(path)?,
        None => {
            let r_list = parse_list(args.r.as_deref().expect("clap requires --r"))?;
            let mut cfg = ExperimentConfig::new(
                args.n.expect("clap requires --n"),
                args.m.expect("clap requires --m"),
                r_list,
                args.samples,
                args.seed,
            );
            cfg.omega = args.omega.parse::<OmegaSpec>()?;
            cfg.rel_tol = args.rel_tol;
            cfg.tests = args.tests.parse::<TestSet>()?;
            cfg
        }
    };
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(format) = &args.format {
        cfg.format = format.parse::<OutputFormat>()?;
    }
    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let report = run_experiment(&cfg, workers)?;
    emit_text(&report.render(cfg.format)?, cfg.out.as_deref())
}

fn witness(args: &WitnessArgs) -> Result<Value> {
    let json: MatrixJson = read_json(&args.state)?;
    let stored = json.dims.map(|[m, n]| (m, n));
    let zeta = vector_from_json(json)?;
    let (m, n) = args
        .dims
        .as_deref()
        .map(parse_dims)
        .transpose()?
        .or(stored)
        .ok_or_else(|| Error::Parse("vector file has no dims; pass --dims m,n".into()))?;
    let w = witness_from_pure(&zeta, m, n)?;
    Ok(json!({
        "alpha": w.alpha,
        "value_on_state": w.value_on_vector(&zeta),
        "operator": MatrixJson::from(&w.operator).with_dims(m, n),
    }))
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let (rho, _) = DensityMatrix::from_json(read_json(&args.state)?)?;
    let d: ProductDecomposition = read_json(&args.decomposition)?;
    let valid = verify_product_decomposition(&rho, &d, args.tol);
    let deviation = if rho.dim() == d.m() * d.n() {
        json!(max_abs_diff(rho.matrix(), &d.matrix()))
    } else {
        Value::Null
    };
    println!("{}", json!({ "valid": valid, "max_deviation": deviation, "tol": args.tol }));
    Ok(valid)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sample(args) => emit(&sample(&args)?, args.out.as_deref())?,
        Command::Analyze(args) => emit(&analyze(&args)?, None)?,
        Command::Experiment(args) => experiment(&args)?,
        Command::Witness(args) => emit(&witness(&args)?, None)?,
        Command::VerifyDecomposition(args) => {
            if !verify(&args)? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end(), 1),
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => fail(e.kind(), &e.to_string(), if e.is_resource_guard() { 2 } else { 1 }),
    }
}
