//! Seeded Monte Carlo experiments and their serialized reports.
//!
//! Run `k` of a batch always draws from substream `(seed, Runs, k)`, and
//! shards are merged with integer-only accumulators, so a report depends on
//! the seed and configuration but not on the number of worker threads.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bloch::{UnitVec3, Vec3};
use crate::oracle::{self, JointDistribution};
use crate::povm::{read_povm, Povm, PovmError, USER_EPS};
use crate::protocol::{blockcoded_cost, run_protocol, ProtocolError, DEFAULT_MAX_ROUNDS};
use crate::seeding::{Domain, SeedTree};
use crate::stats::{dprime_entropy_sum, Accumulator, RunReport, StatsError};

/// Runs per work unit. Fixed so shard boundaries do not depend on threads.
const RUN_CHUNK: u64 = 4096;
/// Entropy samples per work unit; chunk `c` draws from `(seed, Entropy, c)`.
const ENTROPY_CHUNK: u64 = 1 << 16;

pub const DEFAULT_ENTROPY_SAMPLES: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid POVM for {party}: {source}")]
    Povm {
        party: &'static str,
        #[source]
        source: PovmError,
    },
    #[error("protocol failure in run {run}: {source}")]
    Protocol {
        run: u64,
        #[source]
        source: ProtocolError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl ExperimentError {
    /// Process exit code: 2 configuration, 3 POVM validation, 4 protocol failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Povm { .. } => 3,
            ExperimentError::Protocol { .. } | ExperimentError::Stats(_) => 4,
        }
    }
}

/// Where a party's POVM comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PovmSource {
    File(PathBuf),
    Random(usize),
    Projective(UnitVec3),
    Sic,
}

impl FromStr for PovmSource {
    type Err = String;

    /// Grammar: `sic`, `random:<n>` with `n >= 2`, `projective:<x>,<y>,<z>`
    /// (normalized), anything else is a file path.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "sic" {
            return Ok(PovmSource::Sic);
        }
        if let Some(n) = s.strip_prefix("random:") {
            let n: usize = n.trim().parse().map_err(|_| format!("bad outcome count in `{s}`"))?;
            if n < 2 {
                return Err(format!("`{s}`: a POVM needs at least 2 outcomes"));
            }
            return Ok(PovmSource::Random(n));
        }
        if let Some(rest) = s.strip_prefix("projective:") {
            let parts: Vec<f64> = rest
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| format!("bad direction in `{s}`"))?;
            let [x, y, z] = parts[..] else {
                return Err(format!("`{s}`: direction needs exactly 3 components"));
            };
            let dir = Vec3::new(x, y, z)
                .normalized()
                .ok_or_else(|| format!("`{s}`: direction must be nonzero and finite"))?;
            return Ok(PovmSource::Projective(dir));
        }
        Ok(PovmSource::File(PathBuf::from(s)))
    }
}

impl fmt::Display for PovmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PovmSource::File(p) => write!(f, "{}", p.display()),
            PovmSource::Random(n) => write!(f, "random:{n}"),
            PovmSource::Projective(u) => {
                let v = u.as_vec();
                write!(f, "projective:{},{},{}", v.x, v.y, v.z)
            }
            PovmSource::Sic => f.write_str("sic"),
        }
    }
}

impl Serialize for PovmSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    fn name(self) -> &'static str {
        match self {
            Party::Alice => "povm_a",
            Party::Bob => "povm_b",
        }
    }

    fn domain(self) -> Domain {
        match self {
            Party::Alice => Domain::PovmA,
            Party::Bob => Domain::PovmB,
        }
    }
}

impl PovmSource {
    /// Builds the POVM. `random:n` draws from the party's own substream of `seed`.
    pub fn resolve(&self, party: Party, seed: u64, eps: f64) -> Result<Povm, ExperimentError> {
        match self {
            PovmSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
                read_povm(&text, eps).map_err(|source| ExperimentError::Povm {
                    party: party.name(),
                    source,
                })
            }
            PovmSource::Random(n) => {
                let mut rng = SeedTree::new(seed).stream(party.domain(), 0);
                Ok(Povm::random(*n, &mut rng))
            }
            PovmSource::Projective(dir) => Ok(Povm::projective(*dir)),
            PovmSource::Sic => Ok(Povm::sic_tetrahedron()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(format!("unknown format `{s}` (expected json or csv)")),
        }
    }
}

/// Everything that determines a report, plus `parallelism`, which does not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u64,
    pub povm_a: PovmSource,
    pub povm_b: PovmSource,
    pub povm_eps: f64,
    pub max_rounds: u32,
    pub entropy_samples: u64,
    #[serde(skip)]
    pub parallelism: usize,
}

impl ExperimentConfig {
    pub fn new(povm_a: PovmSource, povm_b: PovmSource) -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 1_000_000,
            povm_a,
            povm_b,
            povm_eps: USER_EPS,
            max_rounds: DEFAULT_MAX_ROUNDS,
            entropy_samples: DEFAULT_ENTROPY_SAMPLES,
            parallelism: 1,
        }
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_owned()));
        if self.trials < 1 {
            return bad("trials must be at least 1");
        }
        if !(self.povm_eps > 0.0 && self.povm_eps.is_finite()) {
            return bad("povm-eps must be positive");
        }
        if self.max_rounds < 1 {
            return bad("max-rounds must be at least 1");
        }
        if self.entropy_samples < 1 {
            return bad("entropy-samples must be at least 1");
        }
        if self.parallelism < 1 {
            return bad("parallelism must be at least 1");
        }
        Ok(())
    }

    pub fn resolve_povms(&self) -> Result<(Povm, Povm), ExperimentError> {
        Ok((
            self.povm_a.resolve(Party::Alice, self.seed, self.povm_eps)?,
            self.povm_b.resolve(Party::Bob, self.seed, self.povm_eps)?,
        ))
    }
}

fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ExperimentError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `trials` independent protocol executions; run `k` uses stream
/// `(seed, domain, k)`. Must be called inside the worker pool.
pub fn run_batch(
    a: &Povm,
    b: &Povm,
    seeds: SeedTree,
    domain: Domain,
    trials: u64,
    max_rounds: u32,
) -> Result<Accumulator, ExperimentError> {
    let chunks = trials.div_ceil(RUN_CHUNK);
    let shards: Vec<Result<Accumulator, ExperimentError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(a.len(), b.len());
            for run in c * RUN_CHUNK..((c + 1) * RUN_CHUNK).min(trials) {
                let mut rng = seeds.stream(domain, run);
                let t = run_protocol(a, b, &mut rng, max_rounds)
                    .map_err(|source| ExperimentError::Protocol { run, source })?;
                acc.push(&t)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::new(a.len(), b.len());
    for shard in shards {
        total.merge(&shard?);
    }
    Ok(total)
}

/// Estimates the conditional entropy of `d′` from `samples` draws of shared
/// directions, chunked over substreams `(seed, Entropy, c)`. Must be called
/// inside the worker pool.
pub fn dprime_entropy(seeds: SeedTree, samples: u64) -> f64 {
    let chunks = samples.div_ceil(ENTROPY_CHUNK);
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = ENTROPY_CHUNK.min(samples - c * ENTROPY_CHUNK);
            dprime_entropy_sum(len, &mut seeds.stream(Domain::Entropy, c))
        })
        .collect();
    sums.iter().sum::<f64>() / samples as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub povm_a: Vec<[f64; 3]>,
    pub povm_b: Vec<[f64; 3]>,
    #[serde(flatten)]
    pub report: RunReport,
}

fn povm_rows(p: &Povm) -> Vec<[f64; 3]> {
    p.elements().iter().map(|b| b.to_array()).collect()
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulationReport, ExperimentError> {
    cfg.check()?;
    let (a, b) = cfg.resolve_povms()?;
    let seeds = SeedTree::new(cfg.seed);
    let (acc, h) = with_pool(cfg.parallelism, || {
        let acc = run_batch(&a, &b, seeds, Domain::Runs, cfg.trials, cfg.max_rounds);
        (acc, dprime_entropy(seeds, cfg.entropy_samples))
    })?;
    let report = acc?.finish(&oracle::joint(&a, &b), h)?;
    Ok(SimulationReport {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        povm_a: povm_rows(&a),
        povm_b: povm_rows(&b),
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub povm_a: Vec<[f64; 3]>,
    pub povm_b: Vec<[f64; 3]>,
    pub joint: JointDistribution,
    pub marginal_a: Vec<f64>,
    pub marginal_b: Vec<f64>,
}

pub fn oracle_report(a: &Povm, b: &Povm) -> OracleReport {
    OracleReport {
        povm_a: povm_rows(a),
        povm_b: povm_rows(b),
        joint: oracle::joint(a, b),
        marginal_a: oracle::marginal(a),
        marginal_b: oracle::marginal(b),
    }
}

/// One correlation term of a CHSH estimate.
#[derive(Debug, Clone, Serialize)]
pub struct ChshTerm {
    pub label: &'static str,
    pub alice: Vec3,
    pub bob: Vec3,
    pub trials: u64,
    pub correlation: f64,
    pub standard_error: f64,
    pub oracle: f64,
    pub mean_rounds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChshReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub trials_per_setting: u64,
    pub terms: Vec<ChshTerm>,
    pub s: f64,
    pub s_standard_error: f64,
    pub oracle_s: f64,
}

/// Estimates `S = E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)` by running the
/// protocol on projective POVMs; setting pair `n` uses streams
/// `(seed, ChshSetting(n), k)`.
pub fn chsh_experiment(
    settings: [UnitVec3; 4],
    trials: u64,
    seed: u64,
    max_rounds: u32,
    parallelism: usize,
) -> Result<ChshReport, ExperimentError> {
    if trials < 1 {
        return Err(ExperimentError::Config("trials must be at least 1".into()));
    }
    let [a, a2, b, b2] = settings;
    let pairs = [("ab", a, b, 1.0), ("ab'", a, b2, 1.0), ("a'b", a2, b, 1.0), ("a'b'", a2, b2, -1.0)];
    let seeds = SeedTree::new(seed);
    let accs = with_pool(parallelism, || {
        pairs
            .iter()
            .enumerate()
            .map(|(n, &(_, x, y, _))| {
                let (pa, pb) = (Povm::projective(x), Povm::projective(y));
                run_batch(&pa, &pb, seeds, Domain::ChshSetting(n as u8), trials, max_rounds)
            })
            .collect::<Vec<_>>()
    })?;

    let mut terms = Vec::with_capacity(4);
    let (mut s, mut var) = (0.0, 0.0);
    for (acc, &(label, x, y, sign)) in accs.into_iter().zip(&pairs) {
        let acc = acc?;
        let n = acc.runs() as f64;
        let rep = acc.finish(&oracle::joint(&Povm::projective(x), &Povm::projective(y)), 0.0)?;
        let c = &rep.empirical.counts;
        let e = (c[0][0] as f64 + c[1][1] as f64 - c[0][1] as f64 - c[1][0] as f64) / n;
        let se = ((1.0 - e * e).max(0.0) / n).sqrt();
        s += sign * e;
        var += se * se;
        terms.push(ChshTerm {
            label,
            alice: x.as_vec(),
            bob: y.as_vec(),
            trials,
            correlation: e,
            standard_error: se,
            oracle: oracle::correlation(x, y),
            mean_rounds: rep.mean_rounds,
        });
    }
    Ok(ChshReport {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        trials_per_setting: trials,
        terms,
        s,
        s_standard_error: var.sqrt(),
        oracle_s: oracle::chsh(a, a2, b, b2),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub mean_rounds: f64,
    pub plain_bits: f64,
    pub mean_bits_a_to_b: f64,
    pub mean_bits_b_to_a: f64,
    pub acceptance_rate: f64,
    pub dprime_one_rate: f64,
    pub h_dprime: f64,
    pub blockcoded_bits: f64,
    pub round_histogram: Vec<u64>,
    /// `round_frequencies[k - 1]` estimates `P(rounds = k)`, ideally `2^-k`.
    pub round_frequencies: Vec<f64>,
}

pub fn cost(cfg: &ExperimentConfig) -> Result<CostReport, ExperimentError> {
    let sim = simulate(cfg)?;
    let r = sim.report;
    let n = r.trials as f64;
    Ok(CostReport {
        tool: sim.tool,
        version: sim.version,
        config: sim.config,
        mean_rounds: r.mean_rounds,
        plain_bits: r.mean_bits,
        mean_bits_a_to_b: r.mean_bits_a_to_b,
        mean_bits_b_to_a: r.mean_bits_b_to_a,
        acceptance_rate: r.acceptance_rate,
        dprime_one_rate: r.dprime_one_rate,
        h_dprime: r.h_dprime,
        blockcoded_bits: blockcoded_cost(r.mean_rounds, r.h_dprime),
        round_frequencies: r.round_histogram.iter().map(|&c| c as f64 / n).collect(),
        round_histogram: r.round_histogram,
    })
}

/// Validates a POVM file, returning the parsed POVM.
pub fn validate_file(path: &std::path::Path, eps: f64) -> Result<Povm, ExperimentError> {
    PovmSource::File(path.to_owned()).resolve(Party::Alice, 0, eps)
}

/// A report that can be written as JSON or as a one-row CSV table.
pub trait Report: Serialize {
    fn csv_fields(&self) -> Vec<(String, String)>;

    fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            OutputFormat::Csv => {
                let (header, row): (Vec<String>, Vec<String>) = self.csv_fields().into_iter().unzip();
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&header).expect("in-memory write");
                w.write_record(&row).expect("in-memory write");
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
            }
        }
    }
}

fn field(name: impl Into<String>, value: impl ToString) -> (String, String) {
    (name.into(), value.to_string())
}

fn matrix_fields<'a>(prefix: &'a str, m: &'a [Vec<f64>]) -> impl Iterator<Item = (String, String)> + 'a {
    m.iter().enumerate().flat_map(move |(i, row)| {
        row.iter()
            .enumerate()
            .map(move |(j, x)| field(format!("{prefix}_{i}_{j}"), x))
    })
}

fn vector_fields<'a, T: fmt::Display + 'a>(
    prefix: &'a str,
    v: &'a [T],
) -> impl Iterator<Item = (String, String)> + 'a {
    v.iter().enumerate().map(move |(k, x)| field(format!("{prefix}_{k}"), x))
}

fn config_fields(c: &ExperimentConfig) -> Vec<(String, String)> {
    vec![
        field("seed", c.seed),
        field("trials", c.trials),
        field("povm_a", &c.povm_a),
        field("povm_b", &c.povm_b),
        field("povm_eps", c.povm_eps),
        field("max_rounds", c.max_rounds),
        field("entropy_samples", c.entropy_samples),
    ]
}

impl Report for SimulationReport {
    fn csv_fields(&self) -> Vec<(String, String)> {
        let r = &self.report;
        let mut f = config_fields(&self.config);
        f.extend([
            field("mean_rounds", r.mean_rounds),
            field("mean_bits", r.mean_bits),
            field("acceptance_rate", r.acceptance_rate),
            field("tvd", r.tvd),
            field("chi2_statistic", r.chi_square.statistic),
            field("chi2_dof", r.chi_square.dof),
            field("chi2_pvalue", r.chi_square.p_value),
            field("h_dprime", r.h_dprime),
            field("blockcoded_bits", r.blockcoded_bits),
        ]);
        f.extend(matrix_fields("p", &r.empirical.frequencies()));
        f.extend(matrix_fields("oracle", &r.oracle));
        f
    }
}

impl Report for OracleReport {
    fn csv_fields(&self) -> Vec<(String, String)> {
        matrix_fields("p", self.joint.matrix())
            .chain(vector_fields("marginal_a", &self.marginal_a))
            .chain(vector_fields("marginal_b", &self.marginal_b))
            .collect()
    }
}

impl Report for ChshReport {
    fn csv_fields(&self) -> Vec<(String, String)> {
        let mut f = vec![field("seed", self.seed), field("trials_per_setting", self.trials_per_setting)];
        for t in &self.terms {
            f.push(field(format!("E_{}", t.label), t.correlation));
            f.push(field(format!("se_{}", t.label), t.standard_error));
        }
        f.extend([
            field("s", self.s),
            field("s_standard_error", self.s_standard_error),
            field("oracle_s", self.oracle_s),
        ]);
        f
    }
}

impl Report for CostReport {
    fn csv_fields(&self) -> Vec<(String, String)> {
        let mut f = config_fields(&self.config);
        f.extend([
            field("mean_rounds", self.mean_rounds),
            field("plain_bits", self.plain_bits),
            field("acceptance_rate", self.acceptance_rate),
            field("h_dprime", self.h_dprime),
            field("blockcoded_bits", self.blockcoded_bits),
        ]);
        f.extend(vector_fields("rounds", &self.round_histogram));
        f
    }
}
