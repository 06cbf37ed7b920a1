//! Seeded Monte Carlo campaigns over random rank-`r` extensions of a marginal.
//!
//! Sample `i` of every rank uses RNG stream `i` under the master seed, so a
//! report depends only on its configuration and never on the worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_json;
use crate::separability::{ball_test, ppt_test, wedge_certificate, PPT_EXACT_MAX_DIM};
use crate::states::{purify, state_from_tuple, DensityMatrix, MarginalState, Purification};
use crate::stiefel::{sample_haar_tuple, tuple_rank_with_tol, SeededRng};
use crate::tensor::{c, trace, ComplexMatrix, DEFAULT_REL_TOL};
use crate::wedge::wedge_invariants;

/// Isotropic floor mixed into random faithful marginals.
pub const OMEGA_FLOOR: f64 = 1e-6;

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OmegaSpec {
    MaximallyMixed,
    RandomFaithful(u64),
    File(PathBuf),
}

impl FromStr for OmegaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "maximally-mixed" {
            return Ok(Self::MaximallyMixed);
        }
        if let Some(seed) = s.strip_prefix("random-faithful:") {
            return seed
                .parse()
                .map(Self::RandomFaithful)
                .map_err(|_| Error::Parse(format!("invalid seed in omega spec '{s}'")));
        }
        if let Some(path) = s.strip_prefix("file:") {
            if !path.is_empty() {
                return Ok(Self::File(PathBuf::from(path)));
            }
        }
        Err(Error::Parse(format!(
            "omega spec '{s}' is not maximally-mixed, random-faithful:SEED, or file:PATH"
        )))
    }
}

impl fmt::Display for OmegaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MaximallyMixed => write!(f, "maximally-mixed"),
            Self::RandomFaithful(seed) => write!(f, "random-faithful:{seed}"),
            Self::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

impl TryFrom<String> for OmegaSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OmegaSpec> for String {
    fn from(spec: OmegaSpec) -> String {
        spec.to_string()
    }
}

/// Which tests an experiment runs on each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TestSet {
    pub wedge: bool,
    pub ppt: bool,
    pub ball: bool,
}

impl Default for TestSet {
    fn default() -> Self {
        Self {
            wedge: true,
            ppt: true,
            ball: true,
        }
    }
}

impl TestSet {
    fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut set = Self {
            wedge: false,
            ppt: false,
            ball: false,
        };
        for name in names {
            match name.trim() {
                "wedge" => set.wedge = true,
                "ppt" => set.ppt = true,
                "ball" => set.ball = true,
                other => return Err(Error::Parse(format!("unknown test '{other}'"))),
            }
        }
        Ok(set)
    }

    pub fn names(&self) -> Vec<&'static str> {
        [(self.wedge, "wedge"), (self.ppt, "ppt"), (self.ball, "ball")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect()
    }
}

impl FromStr for TestSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_names(s.split(','))
    }
}

impl TryFrom<Vec<String>> for TestSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::from_names(names.iter().map(String::as_str))
    }
}

impl From<TestSet> for Vec<String> {
    fn from(set: TestSet) -> Self {
        set.names().into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Parse(format!("unknown format '{other}'"))),
        }
    }
}

fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub r_list: Vec<usize>,
    pub samples: u64,
    pub master_seed: u64,
    pub omega: OmegaSpec,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub tests: TestSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(n: usize, m: usize, r_list: Vec<usize>, samples: u64, master_seed: u64) -> Self {
        Self {
            n,
            m,
            r_list,
            samples,
            master_seed,
            omega: OmegaSpec::MaximallyMixed,
            rel_tol: DEFAULT_REL_TOL,
            tests: TestSet::default(),
            out: None,
            format: OutputFormat::Json,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        if n < 2 || m < n {
            return Err(Error::Precondition(format!("experiments need m >= n >= 2, got (n, m) = ({n}, {m})")));
        }
        if self.r_list.is_empty() {
            return Err(Error::Precondition("r_list is empty".into()));
        }
        if let Some(&r) = self.r_list.iter().find(|&&r| r == 0 || r > m * n) {
            return Err(Error::Precondition(format!("r = {r} is outside 1..={}", m * n)));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::Precondition(format!("invalid rel_tol {}", self.rel_tol)));
        }
        Ok(())
    }
}

pub fn omega_from_spec(spec: &OmegaSpec, n: usize) -> Result<MarginalState> {
    let omega = match spec {
        OmegaSpec::MaximallyMixed => MarginalState::maximally_mixed(n),
        OmegaSpec::RandomFaithful(seed) => {
            let mut rng = SeededRng::new(*seed, 0);
            let g = rng.ginibre(n, n);
            let gg = &g * g.adjoint();
            let scale = (1.0 - n as f64 * OMEGA_FLOOR) / trace(&gg).re;
            let rho = gg * c(scale) + ComplexMatrix::identity(n, n) * c(OMEGA_FLOOR);
            MarginalState::new(DensityMatrix::new(rho)?)
        }
        OmegaSpec::File(path) => {
            let (rho, _) = DensityMatrix::from_json(read_json(path)?)?;
            MarginalState::new(rho)
        }
    };
    if omega.n() != n {
        return Err(Error::Shape(format!("omega is {0}x{0}, expected {n}x{n}", omega.n())));
    }
    if !omega.is_faithful() {
        return Err(Error::NotFaithful(omega.density().min_eigenvalue()));
    }
    Ok(omega)
}

/// Everything recorded about one sample.
#[derive(Debug, Clone, Copy)]
struct SampleOutcome {
    tuple_rank: usize,
    state_rank: usize,
    wedge_entangled: bool,
    margin_w: Option<f64>,
    margin_w_star: Option<f64>,
    npt: bool,
    ppt_exact_separable: bool,
    ball_separable: bool,
}

impl SampleOutcome {
    fn entangled(&self) -> bool {
        self.wedge_entangled || self.npt
    }

    fn separable(&self) -> bool {
        self.ppt_exact_separable || self.ball_separable
    }
}

fn run_sample(cfg: &ExperimentConfig, xi: &Purification, r: usize, index: u64) -> Result<SampleOutcome> {
    let mut rng = SeededRng::new(cfg.master_seed, index);
    let v = sample_haar_tuple(cfg.n, cfg.m, r, &mut rng)?;
    let rho = state_from_tuple(&v, xi)?;
    let mut out = SampleOutcome {
        tuple_rank: tuple_rank_with_tol(&v, cfg.rel_tol),
        state_rank: rho.rank_with_tol(cfg.rel_tol),
        wedge_entangled: false,
        margin_w: None,
        margin_w_star: None,
        npt: false,
        ppt_exact_separable: false,
        ball_separable: false,
    };
    if cfg.tests.wedge {
        let inv = wedge_invariants(&v, cfg.rel_tol)?;
        out.wedge_entangled = wedge_certificate(&inv).is_some();
        out.margin_w = (inv.w > 1).then(|| inv.margin_w());
        out.margin_w_star = (inv.w_star > 1).then(|| inv.margin_w_star());
    }
    if cfg.tests.ppt {
        let ppt = ppt_test(&rho, cfg.m, cfg.n)?;
        out.npt = ppt.entangled;
        out.ppt_exact_separable = ppt.exact_separable;
    }
    if cfg.tests.ball {
        out.ball_separable = ball_test(&rho, cfg.m, cfg.n)?.separable;
    }
    if out.entangled() && out.separable() {
        return Err(Error::Numerical("entanglement and separability both certified".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonInterval {
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval at 95%; `[0, 1]` when there are no trials.
pub fn wilson_interval(successes: u64, trials: u64) -> WilsonInterval {
    if trials == 0 {
        return WilsonInterval { lower: 0.0, upper: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    WilsonInterval {
        lower: (center - half).max(0.0),
        upper: (center + half).min(1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub r: usize,
    pub samples: u64,
    /// Tuple rank to sample count.
    pub rank_histogram: BTreeMap<usize, u64>,
    /// Samples where the state rank differs from the tuple rank.
    pub state_rank_mismatches: u64,
    pub wedge_entangled: u64,
    pub npt: u64,
    pub ball_separable: u64,
    pub ppt_exact_separable: u64,
    /// Wedge-certified samples with a PPT state, counted only where PPT is complete.
    pub wedge_without_npt: u64,
    pub entangled: u64,
    pub separable: u64,
    pub undecided: u64,
    pub entangled_fraction: f64,
    pub entangled_ci: WilsonInterval,
    /// The tests behind `entangled`, e.g. `ppt-exact` or `wedge+ppt`.
    pub entangled_test: String,
    pub min_margin_w: Option<f64>,
    pub min_margin_w_star: Option<f64>,
}

/// Commutative tally over samples.
#[derive(Debug, Clone, Default)]
struct Tally {
    rank_histogram: BTreeMap<usize, u64>,
    state_rank_mismatches: u64,
    wedge_entangled: u64,
    npt: u64,
    ball_separable: u64,
    ppt_exact_separable: u64,
    wedge_without_npt: u64,
    entangled: u64,
    separable: u64,
    min_margin_w: Option<f64>,
    min_margin_w_star: Option<f64>,
}

fn min_option(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Tally {
    fn add(&mut self, s: &SampleOutcome, ppt_complete: bool) {
        *self.rank_histogram.entry(s.tuple_rank).or_default() += 1;
        self.state_rank_mismatches += u64::from(s.tuple_rank != s.state_rank);
        self.wedge_entangled += u64::from(s.wedge_entangled);
        self.npt += u64::from(s.npt);
        self.ball_separable += u64::from(s.ball_separable);
        self.ppt_exact_separable += u64::from(s.ppt_exact_separable);
        self.wedge_without_npt += u64::from(s.wedge_entangled && ppt_complete && !s.npt);
        self.entangled += u64::from(s.entangled());
        self.separable += u64::from(s.separable());
        self.min_margin_w = min_option(self.min_margin_w, s.margin_w);
        self.min_margin_w_star = min_option(self.min_margin_w_star, s.margin_w_star);
    }
}

fn entangled_test_label(cfg: &ExperimentConfig) -> String {
    if cfg.tests.ppt && cfg.m * cfg.n <= PPT_EXACT_MAX_DIM {
        return "ppt-exact".into();
    }
    let names: Vec<&str> = [(cfg.tests.wedge, "wedge"), (cfg.tests.ppt, "ppt")]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub version: String,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<RankRecord>,
    pub provenance: Provenance,
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

/// Runs the campaign on `workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let omega = omega_from_spec(&cfg.omega, cfg.n)?;
    let xi = purify(&omega);
    let pool = build_pool(workers)?;
    let ppt_complete = cfg.tests.ppt && cfg.m * cfg.n <= PPT_EXACT_MAX_DIM;

    let mut records = Vec::with_capacity(cfg.r_list.len());
    for &r in &cfg.r_list {
        let outcomes: Vec<Result<SampleOutcome>> = pool.install(|| {
            (0..cfg.samples)
                .into_par_iter()
                .map(|i| {
                    run_sample(cfg, &xi, r, i).map_err(|source| Error::AtSample {
                        r,
                        index: i,
                        source: Box::new(source),
                    })
                })
                .collect()
        });
        let mut tally = Tally::default();
        for outcome in outcomes {
            tally.add(&outcome?, ppt_complete);
        }
        records.push(RankRecord {
            r,
            samples: cfg.samples,
            rank_histogram: tally.rank_histogram,
            state_rank_mismatches: tally.state_rank_mismatches,
            wedge_entangled: tally.wedge_entangled,
            npt: tally.npt,
            ball_separable: tally.ball_separable,
            ppt_exact_separable: tally.ppt_exact_separable,
            wedge_without_npt: tally.wedge_without_npt,
            entangled: tally.entangled,
            separable: tally.separable,
            undecided: cfg.samples - tally.entangled - tally.separable,
            entangled_fraction: if cfg.samples == 0 {
                0.0
            } else {
                tally.entangled as f64 / cfg.samples as f64
            },
            entangled_ci: wilson_interval(tally.entangled, cfg.samples),
            entangled_test: entangled_test_label(cfg),
            min_margin_w: tally.min_margin_w,
            min_margin_w_star: tally.min_margin_w_star,
        });
    }

    Ok(ExperimentReport {
        records,
        provenance: Provenance {
            config: cfg.clone(),
            seed: cfg.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    n: usize,
    m: usize,
    r: usize,
    samples: u64,
    seed: u64,
    omega: String,
    rel_tol: f64,
    tests: String,
    version: &'a str,
    rank_histogram: String,
    state_rank_mismatches: u64,
    wedge_entangled: u64,
    npt: u64,
    ball_separable: u64,
    ppt_exact_separable: u64,
    wedge_without_npt: u64,
    entangled: u64,
    separable: u64,
    undecided: u64,
    entangled_fraction: f64,
    ci_lower: f64,
    ci_upper: f64,
    entangled_test: &'a str,
    min_margin_w: Option<f64>,
    min_margin_w_star: Option<f64>,
}

impl ExperimentReport {
    /// One row per rank, each carrying the full configuration.
    pub fn to_csv(&self) -> Result<String> {
        let cfg = &self.provenance.config;
        let mut writer = csv::Writer::from_writer(Vec::new());
        for rec in &self.records {
            let histogram: Vec<String> = rec.rank_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            writer
                .serialize(CsvRow {
                    n: cfg.n,
                    m: cfg.m,
                    r: rec.r,
                    samples: rec.samples,
                    seed: self.provenance.seed,
                    omega: cfg.omega.to_string(),
                    rel_tol: cfg.rel_tol,
                    tests: cfg.tests.names().join(","),
                    version: &self.provenance.version,
                    rank_histogram: histogram.join(";"),
                    state_rank_mismatches: rec.state_rank_mismatches,
                    wedge_entangled: rec.wedge_entangled,
                    npt: rec.npt,
                    ball_separable: rec.ball_separable,
                    ppt_exact_separable: rec.ppt_exact_separable,
                    wedge_without_npt: rec.wedge_without_npt,
                    entangled: rec.entangled,
                    separable: rec.separable,
                    undecided: rec.undecided,
                    entangled_fraction: rec.entangled_fraction,
                    ci_lower: rec.entangled_ci.lower,
                    ci_upper: rec.entangled_ci.upper,
                    entangled_test: &rec.entangled_test,
                    min_margin_w: rec.min_margin_w,
                    min_margin_w_star: rec.min_margin_w_star,
                })
                .map_err(|e| Error::Parse(format!("csv: {e}")))?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Parse(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(format!("csv: {e}")))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => crate::io::to_json_string(self),
            OutputFormat::Csv => self.to_csv(),
        }
    }

    pub fn record(&self, r: usize) -> Option<&RankRecord> {
        self.records.iter().find(|rec| rec.r == r)
    }
}
