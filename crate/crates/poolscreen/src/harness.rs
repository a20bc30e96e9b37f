//! The screening-experiment driver: simulate, infer, score, repeat.
//!
//! An experiment fixes a design, a prior, and a readout channel, then for
//! each requested positive count k runs many independent trials: plant k
//! positives, push the pools through the noisy channel, recover marginals
//! with the surrogate solver, apply the curvature correction, and score both
//! against a reference engine (exhaustive enumeration where feasible, Gibbs
//! sampling beyond that) by averaged Kullback–Leibler divergence. Trials
//! draw from per-trial random streams, so any run is reproducible bit for
//! bit from its master seed and trials may execute concurrently.
//!
//! Configs are flat `key = value` text files; outputs are a per-trial CSV
//! log, a summary CSV, and an aligned text table of mean KL per positive
//! count and estimator.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::bias::{bias_correction, BiasError};
use crate::bp::{bp_solve, BpError, BpOptions};
use crate::design::{
    catalog_blocks, replicate_randomized, DesignError, PoolingDesign,
};
use crate::exact::{exact_marginals, ExactError, EXACT_MAX_CLONES};
use crate::mcmc::{gibbs_marginals, ChainOptions, McmcError};
use crate::model::{
    place_positives, potentials_from_observations, sample_observations, trial_rng,
    ModelError, ObservationModel, PriorModel, StreamRole,
};

/// Errors from configuration, scoring, and experiment execution.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config key `{key}` is required")]
    MissingKey { key: &'static str },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config value for `{key}` is unusable: `{value}`")]
    BadValue { key: String, value: String },
    #[error("exactly one of design_file and design_catalog must be set")]
    AmbiguousDesignSource,
    #[error("trials must be at least 1")]
    ZeroTrials,
    #[error("positives must list at least one count")]
    NoPositiveCounts,
    #[error("prior must lie strictly inside (0, 1), got {p}")]
    PriorOutOfRange { p: f64 },
    #[error("exact reference requires at most {cap} clones, design has {n}")]
    ReferenceTooLarge { n: usize, cap: usize },
    #[error("marginal vectors disagree in length: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("estimated marginal {value} for clone {index} sits on the boundary; clamp before scoring")]
    EstimateAtBoundary { index: usize, value: f64 },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
}

/// Where the design comes from: a file in the pool-per-line format, or a
/// catalog entry replicated and dualized on the fly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DesignSource {
    File(PathBuf),
    Catalog { name: String, replicate: usize, seed: u64 },
}

/// Which engine supplies the reference marginals each trial is scored
/// against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceEngine {
    Exact,
    Mcmc,
}

/// A full experiment specification. Parsed from a flat `key = value` file by
/// [`ExperimentConfig::parse`]; see that method for the key list.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub design: DesignSource,
    pub prior: f64,
    /// Readout channel file; the built-in calibrated channel when absent.
    pub obs_file: Option<PathBuf>,
    /// Positive counts to sweep, e.g. 1..=4.
    pub positives: Vec<usize>,
    /// Trials per positive count.
    pub trials: usize,
    pub master_seed: u64,
    pub reference: ReferenceEngine,
    pub bp: BpOptions,
    /// Reference chain controls, used only when `reference = mcmc`.
    pub chain: ChainOptions,
    /// Drop trials whose surrogate solver did not converge from the summary
    /// means (they stay in the trial log, flagged).
    pub exclude_nonconverged: bool,
    /// Where to write the trial log and summaries; nothing is written when
    /// absent.
    pub out_dir: Option<PathBuf>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| HarnessError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_count_list(key: &str, value: &str) -> Result<Vec<usize>, HarnessError> {
    let items: Result<Vec<usize>, _> = value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_value(key, t))
        .collect();
    items
}

impl ExperimentConfig {
    /// Parses a flat `key = value` config. Blank lines and `#` comments are
    /// skipped; keys are:
    ///
    /// | key | meaning | default |
    /// |---|---|---|
    /// | `design_file` | pooling-design file | — |
    /// | `design_catalog` | catalog entry to replicate and dualize | — |
    /// | `design_replicate` | copies of the catalog base | 1 |
    /// | `design_seed` | randomization seed for the copies | 0 |
    /// | `prior` | per-clone positive probability | required |
    /// | `obs_file` | readout-channel file | built-in channel |
    /// | `positives` | positive counts, space or comma separated | required |
    /// | `trials` | trials per positive count | required |
    /// | `master_seed` | seed behind every per-trial stream | required |
    /// | `reference` | `exact` or `mcmc` | `exact` |
    /// | `bp_damping`, `bp_tol`, `bp_max_sweeps` | surrogate solver controls | solver defaults |
    /// | `mcmc_burnin`, `mcmc_keep`, `mcmc_thin` | reference chain controls | chain defaults |
    /// | `exclude_nonconverged` | drop non-converged trials from means | `false` |
    /// | `out_dir` | output directory | none |
    ///
    /// Exactly one of `design_file` and `design_catalog` must be present.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut design_file: Option<PathBuf> = None;
        let mut design_catalog: Option<String> = None;
        let mut design_replicate = 1usize;
        let mut design_seed = 0u64;
        let mut prior: Option<f64> = None;
        let mut obs_file: Option<PathBuf> = None;
        let mut positives: Option<Vec<usize>> = None;
        let mut trials: Option<usize> = None;
        let mut master_seed: Option<u64> = None;
        let mut reference = ReferenceEngine::Exact;
        let mut bp = BpOptions::default();
        let mut chain = ChainOptions::default();
        let mut exclude_nonconverged = false;
        let mut out_dir: Option<PathBuf> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| HarnessError::Config {
                line,
                msg: format!("expected `key = value`, got `{trimmed}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "design_file" => design_file = Some(PathBuf::from(value)),
                "design_catalog" => design_catalog = Some(value.to_string()),
                "design_replicate" => design_replicate = parse_value(key, value)?,
                "design_seed" => design_seed = parse_value(key, value)?,
                "prior" => prior = Some(parse_value(key, value)?),
                "obs_file" => obs_file = Some(PathBuf::from(value)),
                "positives" => positives = Some(parse_count_list(key, value)?),
                "trials" => trials = Some(parse_value(key, value)?),
                "master_seed" => master_seed = Some(parse_value(key, value)?),
                "reference" => {
                    reference = match value {
                        "exact" => ReferenceEngine::Exact,
                        "mcmc" => ReferenceEngine::Mcmc,
                        _ => {
                            return Err(HarnessError::BadValue {
                                key: key.to_string(),
                                value: value.to_string(),
                            })
                        }
                    }
                }
                "bp_damping" => bp.damping = parse_value(key, value)?,
                "bp_tol" => bp.tol = parse_value(key, value)?,
                "bp_max_sweeps" => bp.max_sweeps = parse_value(key, value)?,
                "mcmc_burnin" => chain.burn_in = parse_value(key, value)?,
                "mcmc_keep" => chain.keep = parse_value(key, value)?,
                "mcmc_thin" => chain.thin = parse_value(key, value)?,
                "exclude_nonconverged" => exclude_nonconverged = parse_value(key, value)?,
                "out_dir" => out_dir = Some(PathBuf::from(value)),
                _ => {
                    return Err(HarnessError::UnknownKey { line, key: key.to_string() })
                }
            }
        }

        let design = match (design_file, design_catalog) {
            (Some(path), None) => DesignSource::File(path),
            (None, Some(name)) => DesignSource::Catalog {
                name,
                replicate: design_replicate,
                seed: design_seed,
            },
            _ => return Err(HarnessError::AmbiguousDesignSource),
        };
        let cfg = Self {
            design,
            prior: prior.ok_or(HarnessError::MissingKey { key: "prior" })?,
            obs_file,
            positives: positives.ok_or(HarnessError::MissingKey { key: "positives" })?,
            trials: trials.ok_or(HarnessError::MissingKey { key: "trials" })?,
            master_seed: master_seed.ok_or(HarnessError::MissingKey { key: "master_seed" })?,
            reference,
            bp,
            chain,
            exclude_nonconverged,
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Checks the scalar invariants; design-dependent checks happen once the
    /// design is loaded.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::ZeroTrials);
        }
        if self.positives.is_empty() {
            return Err(HarnessError::NoPositiveCounts);
        }
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(HarnessError::PriorOutOfRange { p: self.prior });
        }
        self.bp.validate()?;
        self.chain.validate()?;
        Ok(())
    }

    /// Materializes the design from its source.
    pub fn load_design(&self) -> Result<PoolingDesign, HarnessError> {
        match &self.design {
            DesignSource::File(path) => {
                Ok(PoolingDesign::parse(&std::fs::read_to_string(path)?)?)
            }
            DesignSource::Catalog { name, replicate, seed } => {
                let base = catalog_blocks(name)?;
                Ok(replicate_randomized(&base, *replicate, *seed)?)
            }
        }
    }

    /// Loads the readout channel, falling back to the built-in calibration.
    pub fn load_channel(&self) -> Result<ObservationModel, HarnessError> {
        match &self.obs_file {
            Some(path) => Ok(ObservationModel::parse(&std::fs::read_to_string(path)?)?),
            None => Ok(ObservationModel::default()),
        }
    }
}

/// One scored trial. `positives` and `observations` are echoed into the
/// trial log so any row can be reproduced in isolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Number of planted positives.
    pub k: usize,
    /// Trial index within this positive count.
    pub trial: usize,
    /// Sorted indices of the planted positive clones.
    pub positives: Vec<usize>,
    /// Readout level per pool.
    pub observations: Vec<u8>,
    /// Whether the surrogate solver met its tolerance.
    pub converged: bool,
    /// Sweeps the surrogate solver used.
    pub sweeps: usize,
    /// Mean per-clone KL from the reference to the surrogate marginals.
    pub kl_bp: f64,
    /// Same, for the curvature-corrected marginals.
    pub kl_corrected: f64,
    /// Largest reference standard error (Gibbs reference only).
    pub ref_se_max: Option<f64>,
}

/// Mean scores for one positive count.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub k: usize,
    pub trials_total: usize,
    /// Trials entering the means (all of them, unless non-converged trials
    /// are excluded).
    pub trials_used: usize,
    pub nonconverged: usize,
    pub mean_kl_bp: f64,
    pub mean_kl_corrected: f64,
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Per-clone Kullback–Leibler divergence from reference marginals `qref` to
/// estimated marginals `qest`, averaged over clones:
///
///   (1/n) Σ_i [ q_i ln(q_i/q̂_i) + (1−q_i) ln((1−q_i)/(1−q̂_i)) ],
///
/// with 0·ln 0 = 0 on the reference side. Estimates must lie strictly
/// inside (0, 1) — clamp upstream — or the divergence would be infinite.
pub fn kl_bernoulli_avg(qref: &[f64], qest: &[f64]) -> Result<f64, HarnessError> {
    if qref.len() != qest.len() {
        return Err(HarnessError::LengthMismatch { expected: qref.len(), got: qest.len() });
    }
    let mut total = 0.0;
    for (i, (&q, &qe)) in qref.iter().zip(qest).enumerate() {
        if !(qe > 0.0 && qe < 1.0) {
            return Err(HarnessError::EstimateAtBoundary { index: i, value: qe });
        }
        if q > 0.0 {
            total += q * (q / qe).ln();
        }
        if q < 1.0 {
            total += (1.0 - q) * ((1.0 - q) / (1.0 - qe)).ln();
        }
    }
    Ok(total / qref.len().max(1) as f64)
}

fn run_trial(
    design: &PoolingDesign,
    channel: &ObservationModel,
    prior: &PriorModel,
    cfg: &ExperimentConfig,
    k: usize,
    trial: usize,
    global: u64,
) -> Result<TrialRecord, HarnessError> {
    let labels = {
        let mut rng = trial_rng(cfg.master_seed, global, StreamRole::Labels);
        place_positives(design.n(), k, &mut rng)?
    };
    let observations = {
        let mut rng = trial_rng(cfg.master_seed, global, StreamRole::Observations);
        sample_observations(design, &labels, channel, &mut rng)?
    };
    let pots = potentials_from_observations(design, channel, &observations)?;
    let (bp, state) = bp_solve(design, prior.fields(), &pots, &cfg.bp)?;
    let report = bias_correction(design, &bp, &pots)?;
    let (reference, ref_se_max) = match cfg.reference {
        ReferenceEngine::Exact => (exact_marginals(design, prior.fields(), &pots)?, None),
        ReferenceEngine::Mcmc => {
            let mut rng = trial_rng(cfg.master_seed, global, StreamRole::Mcmc);
            let est = gibbs_marginals(design, prior.fields(), &pots, &cfg.chain, &mut rng)?;
            let se_max = est
                .std_err
                .as_deref()
                .map(|se| se.iter().fold(0.0f64, |a, &b| a.max(b)));
            (est, se_max)
        }
    };
    let kl_bp = kl_bernoulli_avg(&reference.q, &bp.q)?;
    let kl_corrected = kl_bernoulli_avg(&reference.q, &report.corrected.q)?;
    Ok(TrialRecord {
        k,
        trial,
        positives: labels
            .iter()
            .enumerate()
            .filter_map(|(i, &x)| x.then_some(i))
            .collect(),
        observations,
        converged: state.converged,
        sweeps: state.iterations,
        kl_bp,
        kl_corrected,
        ref_se_max,
    })
}

fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<SummaryRow> {
    cfg.positives
        .iter()
        .map(|&k| {
            let rows = records.iter().filter(|r| r.k == k);
            let mut total = 0usize;
            let mut nonconverged = 0usize;
            let mut used = 0usize;
            let mut sum_bp = 0.0;
            let mut sum_corrected = 0.0;
            for r in rows {
                total += 1;
                if !r.converged {
                    nonconverged += 1;
                    if cfg.exclude_nonconverged {
                        continue;
                    }
                }
                used += 1;
                sum_bp += r.kl_bp;
                sum_corrected += r.kl_corrected;
            }
            SummaryRow {
                k,
                trials_total: total,
                trials_used: used,
                nonconverged,
                mean_kl_bp: sum_bp / used as f64,
                mean_kl_corrected: sum_corrected / used as f64,
            }
        })
        .collect()
}

/// Header of the per-trial CSV log. `positives` and `observations` are
/// space-separated integers within their fields.
pub const TRIAL_CSV_HEADER: &str =
    "k,trial,positives,observations,converged,sweeps,kl_bp,kl_corrected,ref_se_max";

/// Header of the summary CSV.
pub const SUMMARY_CSV_HEADER: &str =
    "k,trials_total,trials_used,nonconverged,mean_kl_bp,mean_kl_corrected";

fn join_ints<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Renders the trial log as CSV, one row per trial in (k, trial) order.
pub fn trial_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(TRIAL_CSV_HEADER);
    out.push('\n');
    for r in records {
        let se = r.ref_se_max.map(|s| format!("{s:e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{:e},{:e},{}",
            r.k,
            r.trial,
            join_ints(&r.positives),
            join_ints(&r.observations),
            r.converged,
            r.sweeps,
            r.kl_bp,
            r.kl_corrected,
            se
        )
        .expect("string write");
    }
    out
}

/// Renders the summary as CSV, one row per positive count.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:e},{:e}",
            r.k, r.trials_total, r.trials_used, r.nonconverged, r.mean_kl_bp, r.mean_kl_corrected
        )
        .expect("string write");
    }
    out
}

/// Renders the summary as an aligned text table.
pub fn summary_text(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:>4} {:>8} {:>8} {:>8} {:>16} {:>16}\n",
        "k", "trials", "used", "nonconv", "mean KL (surr)", "mean KL (corr)"
    );
    for r in rows {
        writeln!(
            out,
            "{:>4} {:>8} {:>8} {:>8} {:>16.5e} {:>16.5e}",
            r.k, r.trials_total, r.trials_used, r.nonconverged, r.mean_kl_bp, r.mean_kl_corrected
        )
        .expect("string write");
    }
    out
}

/// Runs the full protocol: for every positive count, `cfg.trials`
/// independent trials, each simulated and scored on its own random streams
/// derived from the master seed. Trials run concurrently; the log is in
/// (k, trial) order regardless of scheduling, so results are bit-for-bit
/// reproducible. When `out_dir` is set, writes `trials.csv`, `summary.csv`,
/// and `summary.txt` there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let design = cfg.load_design()?;
    let channel = cfg.load_channel()?;
    if cfg.reference == ReferenceEngine::Exact && design.n() > EXACT_MAX_CLONES {
        return Err(HarnessError::ReferenceTooLarge { n: design.n(), cap: EXACT_MAX_CLONES });
    }
    let prior = PriorModel::uniform(design.n(), cfg.prior)?;

    let jobs: Vec<(usize, usize, u64)> = cfg
        .positives
        .iter()
        .enumerate()
        .flat_map(|(ki, &k)| {
            (0..cfg.trials).map(move |t| (k, t, (ki * cfg.trials + t) as u64))
        })
        .collect();
    let records: Vec<TrialRecord> = jobs
        .into_par_iter()
        .map(|(k, t, global)| run_trial(&design, &channel, &prior, cfg, k, t, global))
        .collect::<Result<_, _>>()?;

    let summary = summarize(cfg, &records);
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trials.csv"), trial_csv(&records))?;
        std::fs::write(dir.join("summary.csv"), summary_csv(&summary))?;
        std::fs::write(dir.join("summary.txt"), summary_text(&summary))?;
    }
    Ok(ExperimentResult { records, summary })
}

/// Wall-clock time of one surrogate solve and one short reference chain on
/// a given design.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    pub bp_seconds: f64,
    pub mcmc_seconds: f64,
}

/// Measures inference wall time across design sizes: for each (design,
/// prior) case, simulates one single-positive screen on fixed streams, then
/// times the surrogate solver and a short Gibbs chain. Callers assert only
/// qualitative facts (positivity, growth with size) — absolute numbers are
/// host-dependent.
pub fn timing_smoke(cases: &[(PoolingDesign, f64)]) -> Result<Vec<TimingRow>, HarnessError> {
    let channel = ObservationModel::default();
    let mut rows = Vec::with_capacity(cases.len());
    for (design, p) in cases {
        let prior = PriorModel::uniform(design.n(), *p)?;
        let labels = {
            let mut rng = trial_rng(0, 0, StreamRole::Labels);
            place_positives(design.n(), 1, &mut rng)?
        };
        let observations = {
            let mut rng = trial_rng(0, 0, StreamRole::Observations);
            sample_observations(design, &labels, &channel, &mut rng)?
        };
        let pots = potentials_from_observations(design, &channel, &observations)?;

        let start = Instant::now();
        let _ = bp_solve(design, prior.fields(), &pots, &BpOptions::default())?;
        let bp_seconds = start.elapsed().as_secs_f64();

        let opts = ChainOptions { burn_in: 100, keep: 400, thin: 1 };
        let mut rng = trial_rng(0, 0, StreamRole::Mcmc);
        let start = Instant::now();
        let _ = gibbs_marginals(design, prior.fields(), &pots, &opts, &mut rng)?;
        let mcmc_seconds = start.elapsed().as_secs_f64();

        rows.push(TimingRow { n: design.n(), bp_seconds, mcmc_seconds });
    }
    Ok(rows)
}
