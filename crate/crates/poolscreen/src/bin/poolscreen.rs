//! Command-line front end: design plumbing, screen simulation, marginal
//! inference, curvature correction, and the experiment driver. Every
//! subcommand is a thin wrapper over the library; outputs go to stdout
//! unless a command offers `--out`.

use std::error::Error;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poolscreen::bias::{bias_correction, bias_upper_bound};
use poolscreen::bp::{bp_solve, BpOptions};
use poolscreen::design::{
    catalog, catalog_blocks, check_near_optimal, dualize, profile, replicate_randomized,
    verify_bibd, BibdParams, BlockList, PoolingDesign,
};
use poolscreen::exact::{exact_marginals, MarginalVector, Method};
use poolscreen::harness::{run_experiment, summary_text, ExperimentConfig};
use poolscreen::mcmc::{gibbs_marginals, ChainOptions};
use poolscreen::model::{
    place_positives, potentials_from_observations, sample_observations, sigmoid, trial_rng,
    ObservationModel, PoolPotential, PriorModel, StreamRole,
};

/// Pooled-screening designs, simulation, and posterior inference.
#[derive(Parser)]
#[command(name = "poolscreen", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect, transpose, and replicate pooling designs.
    #[command(subcommand)]
    Design(DesignCmd),
    /// Simulate one screen: plant positives, read out the pools.
    Simulate(SimulateArgs),
    /// Posterior clone marginals by one of the inference engines.
    #[command(subcommand)]
    Infer(InferCmd),
    /// Curvature correction of surrogate marginals, and its magnitude bound.
    #[command(subcommand)]
    Bias(BiasCmd),
    /// Multi-trial screening experiments from a config file.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

/// Source of a block list: a file or a built-in catalog entry.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct BlockSource {
    /// Block-list file: header `v b`, then one block per line.
    #[arg(long)]
    blocks: Option<PathBuf>,
    /// Name of a built-in catalog entry (see `design catalog`).
    #[arg(long)]
    catalog: Option<String>,
}

impl BlockSource {
    fn load(&self) -> Result<BlockList, Box<dyn Error>> {
        match (&self.blocks, &self.catalog) {
            (Some(path), None) => Ok(BlockList::parse(&std::fs::read_to_string(path)?)?),
            (None, Some(name)) => Ok(catalog_blocks(name)?),
            _ => unreachable!("clap enforces exactly one source"),
        }
    }
}

#[derive(Subcommand)]
enum DesignCmd {
    /// Check a block list against the balanced-incomplete-block conditions.
    Verify {
        #[command(flatten)]
        source: BlockSource,
    },
    /// List the built-in catalog entries.
    Catalog,
    /// Transpose a block list into a pooling design (pools = points).
    Dualize {
        #[command(flatten)]
        source: BlockSource,
        /// Write the design here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicate a block list t times with randomized copies, then dualize.
    Replicate {
        #[command(flatten)]
        source: BlockSource,
        /// Number of copies.
        #[arg(long)]
        t: usize,
        /// Randomization seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the design here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pool sizes, overlaps, clone degrees, and near-optimality of a design.
    Profile {
        /// Pooling-design file: header `n m`, then one pool per line.
        #[arg(long)]
        design: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Pooling-design file.
    #[arg(long)]
    design: PathBuf,
    /// Per-clone prior positive probability.
    #[arg(long)]
    prior: f64,
    /// Number of positives to plant (uniform over clone subsets).
    #[arg(long)]
    k: usize,
    /// Readout-channel file; built-in calibration when omitted.
    #[arg(long)]
    obs: Option<PathBuf>,
    /// Master seed behind the per-trial streams.
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    /// Trial index to simulate.
    #[arg(long, default_value_t = 0)]
    trial: u64,
}

/// Arguments shared by every inference engine.
#[derive(Args)]
struct ScreenArgs {
    /// Pooling-design file.
    #[arg(long)]
    design: PathBuf,
    /// Per-clone prior positive probability.
    #[arg(long)]
    prior: f64,
    /// Readout-channel file; built-in calibration when omitted.
    #[arg(long)]
    obs: Option<PathBuf>,
    /// Observed readout levels, one per pool, space or comma separated.
    #[arg(long)]
    s: String,
}

#[derive(Subcommand)]
enum InferCmd {
    /// Exhaustive enumeration (the ground truth; needs few enough clones).
    Exact {
        #[command(flatten)]
        screen: ScreenArgs,
    },
    /// Message passing on the independent surrogate.
    Bp {
        #[command(flatten)]
        screen: ScreenArgs,
        /// Weight kept on the old message each update, in [0, 1).
        #[arg(long, default_value_t = BpOptions::default().damping)]
        damping: f64,
        /// Convergence threshold on the field residual.
        #[arg(long, default_value_t = BpOptions::default().tol)]
        tol: f64,
        /// Sweep limit.
        #[arg(long = "max-iter", default_value_t = BpOptions::default().max_sweeps)]
        max_iter: usize,
        /// Write the converged solver state here for `bias correct`.
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// Gibbs sampling (slow reference for large designs).
    Mcmc {
        #[command(flatten)]
        screen: ScreenArgs,
        /// Discarded warm-up sweeps.
        #[arg(long, default_value_t = ChainOptions::default().burn_in)]
        burnin: usize,
        /// Recorded samples.
        #[arg(long, default_value_t = ChainOptions::default().keep)]
        sweeps: usize,
        /// Sweeps between recorded samples.
        #[arg(long, default_value_t = ChainOptions::default().thin)]
        thin: usize,
        /// Chain seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BiasCmd {
    /// Apply the curvature correction to a saved solver state.
    Correct {
        /// Pooling-design file.
        #[arg(long)]
        design: PathBuf,
        /// Solver state written by `infer bp --state-out`.
        #[arg(long)]
        state: PathBuf,
    },
    /// Analytic per-pair magnitude bound for two pools.
    Bound {
        /// Pooling-design file; the bound uses its size-d pools and largest
        /// pairwise overlap.
        #[arg(long)]
        design: PathBuf,
        /// Bound on the canonical coefficient products.
        #[arg(long = "C")]
        c: f64,
        /// Bound on the anchor gaps, strictly inside (0, 1).
        #[arg(long)]
        delta: f64,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run the full protocol described by a `key = value` config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_levels(s: &str) -> Result<Vec<u8>, Box<dyn Error>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u8>()
                .map_err(|_| format!("unusable readout level `{t}`").into())
        })
        .collect()
}

fn load_design(path: &PathBuf) -> Result<PoolingDesign, Box<dyn Error>> {
    Ok(PoolingDesign::parse(&std::fs::read_to_string(path)?)?)
}

fn load_channel(path: &Option<PathBuf>) -> Result<ObservationModel, Box<dyn Error>> {
    match path {
        Some(p) => Ok(ObservationModel::parse(&std::fs::read_to_string(p)?)?),
        None => Ok(ObservationModel::default()),
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Box<dyn Error>> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

/// Derives the balanced-design parameters a block list claims: v and b from
/// the header, k from the first block, then r = bk/v and λ = r(k−1)/(v−1).
fn infer_bibd_params(blocks: &BlockList) -> Result<BibdParams, Box<dyn Error>> {
    let v = blocks.v();
    let b = blocks.b();
    let k = blocks
        .blocks()
        .first()
        .ok_or("cannot infer parameters from an empty block list")?
        .len();
    if (b * k) % v != 0 {
        return Err(format!("bk = {} is not divisible by v = {v}", b * k).into());
    }
    let r = b * k / v;
    if v < 2 {
        return Err("need at least two points to speak of pairs".into());
    }
    if (r * (k - 1)) % (v - 1) != 0 {
        return Err(format!(
            "r(k-1) = {} is not divisible by v-1 = {}",
            r * (k - 1),
            v - 1
        )
        .into());
    }
    let lambda = r * (k - 1) / (v - 1);
    Ok(BibdParams { v, r, b, k, lambda })
}

fn marginal_csv(m: &MarginalVector) -> String {
    let mut out = String::new();
    if m.method == Method::Mcmc {
        out.push_str("clone,marginal,std_err\n");
        let se = m.std_err.as_deref().unwrap_or(&[]);
        for (i, (&q, &e)) in m.q.iter().zip(se).enumerate() {
            writeln!(out, "{i},{q:e},{e:e}").expect("string write");
        }
    } else {
        out.push_str("clone,marginal\n");
        for (i, &q) in m.q.iter().enumerate() {
            writeln!(out, "{i},{q:e}").expect("string write");
        }
    }
    out
}

/// Solver state file: header `n m`, a line of n prior fields, a line of n
/// accumulated message fields, then m lines `c0 c1` of pool potentials.
fn render_state(h: &[f64], theta: &[f64], pots: &[PoolPotential]) -> String {
    let join = |xs: &[f64]| {
        xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
    };
    let mut out = format!("{} {}\n{}\n{}\n", h.len(), pots.len(), join(h), join(theta));
    for p in pots {
        writeln!(out, "{:e} {:e}", p.c0, p.c1).expect("string write");
    }
    out
}

type SolverState = (Vec<f64>, Vec<f64>, Vec<PoolPotential>);

fn parse_state(text: &str) -> Result<SolverState, Box<dyn Error>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let mut next = |what: &str| -> Result<&str, Box<dyn Error>> {
        lines.next().ok_or_else(|| format!("state file ends before {what}").into())
    };
    let header = next("the `n m` header")?;
    let mut it = header.split_whitespace();
    let n: usize = it.next().and_then(|t| t.parse().ok()).ok_or("unusable state header")?;
    let m: usize = it.next().and_then(|t| t.parse().ok()).ok_or("unusable state header")?;
    let floats = |line: &str, what: &str, want: usize| -> Result<Vec<f64>, Box<dyn Error>> {
        let xs: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let xs = xs.map_err(|_| format!("unusable {what} line"))?;
        if xs.len() != want {
            return Err(format!("{what} line holds {} values, expected {want}", xs.len()).into());
        }
        Ok(xs)
    };
    let h = floats(next("the prior fields")?, "prior-field", n)?;
    let theta = floats(next("the message fields")?, "message-field", n)?;
    let mut pots = Vec::with_capacity(m);
    for r in 0..m {
        let pair = floats(next("the pool potentials")?, "potential", 2)?;
        let _ = r;
        pots.push(PoolPotential { c0: pair[0], c1: pair[1] });
    }
    Ok((h, theta, pots))
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.cmd {
        Command::Design(cmd) => match cmd {
            DesignCmd::Verify { source } => {
                let blocks = source.load()?;
                let params = infer_bibd_params(&blocks)?;
                params.validate()?;
                print!("{}", verify_bibd(&blocks, &params).render());
            }
            DesignCmd::Catalog => {
                for e in catalog() {
                    let BibdParams { v, r, b, k, lambda } = e.params;
                    println!("{}  v={v} r={r} b={b} k={k} lambda={lambda}", e.name);
                }
            }
            DesignCmd::Dualize { source, out } => {
                let design = dualize(&source.load()?)?;
                emit(&out, &design.emit())?;
            }
            DesignCmd::Replicate { source, t, seed, out } => {
                let design = replicate_randomized(&source.load()?, t, seed)?;
                emit(&out, &design.emit())?;
            }
            DesignCmd::Profile { design } => {
                let d = load_design(&design)?;
                let prof = profile(&d);
                println!("clones {}  pools {}", d.n(), d.m());
                let span = |xs: &[usize]| match (xs.iter().min(), xs.iter().max()) {
                    (Some(lo), Some(hi)) => format!("{lo}..{hi}"),
                    _ => "-".into(),
                };
                println!("pool sizes   {}", span(&prof.pool_sizes));
                println!("clone degrees {}", span(&prof.degrees));
                println!("max overlap  {}", prof.lambda_max);
                match check_near_optimal(&d) {
                    Ok(opt) => println!(
                        "near-optimal {} (target overlaps {}/{}, degrees {}/{})",
                        if opt.ok { "yes" } else { "no" },
                        opt.lambda_bar.saturating_sub(1),
                        opt.lambda_bar,
                        opt.k_bar.saturating_sub(1),
                        opt.k_bar,
                    ),
                    Err(e) => println!("near-optimal n/a ({e})"),
                }
            }
        },
        Command::Simulate(a) => {
            let d = load_design(&a.design)?;
            let prior = PriorModel::uniform(d.n(), a.prior)?;
            let channel = load_channel(&a.obs)?;
            let labels = {
                let mut rng = trial_rng(a.master_seed, a.trial, StreamRole::Labels);
                place_positives(prior.n(), a.k, &mut rng)?
            };
            let s = {
                let mut rng = trial_rng(a.master_seed, a.trial, StreamRole::Observations);
                sample_observations(&d, &labels, &channel, &mut rng)?
            };
            let ints = |xs: Vec<String>| xs.join(" ");
            println!("labels {}", ints(labels.iter().map(|&x| (x as u8).to_string()).collect()));
            println!("observations {}", ints(s.iter().map(u8::to_string).collect()));
        }
        Command::Infer(cmd) => match cmd {
            InferCmd::Exact { screen } => {
                let d = load_design(&screen.design)?;
                let prior = PriorModel::uniform(d.n(), screen.prior)?;
                let channel = load_channel(&screen.obs)?;
                let pots = potentials_from_observations(&d, &channel, &parse_levels(&screen.s)?)?;
                let q = exact_marginals(&d, prior.fields(), &pots)?;
                print!("{}", marginal_csv(&q));
            }
            InferCmd::Bp { screen, damping, tol, max_iter, state_out } => {
                let d = load_design(&screen.design)?;
                let prior = PriorModel::uniform(d.n(), screen.prior)?;
                let channel = load_channel(&screen.obs)?;
                let pots = potentials_from_observations(&d, &channel, &parse_levels(&screen.s)?)?;
                let opts = BpOptions { damping, tol, max_sweeps: max_iter };
                let (q, state) = bp_solve(&d, prior.fields(), &pots, &opts)?;
                if let Some(path) = state_out {
                    std::fs::write(path, render_state(prior.fields(), &state.theta, &pots))?;
                }
                println!("# converged {}", state.converged);
                println!("# sweeps {}", state.iterations);
                println!("# residual {:e}", state.residual);
                print!("{}", marginal_csv(&q));
            }
            InferCmd::Mcmc { screen, burnin, sweeps, thin, seed } => {
                let d = load_design(&screen.design)?;
                let prior = PriorModel::uniform(d.n(), screen.prior)?;
                let channel = load_channel(&screen.obs)?;
                let pots = potentials_from_observations(&d, &channel, &parse_levels(&screen.s)?)?;
                let opts = ChainOptions { burn_in: burnin, keep: sweeps, thin };
                let mut rng = trial_rng(seed, 0, StreamRole::Mcmc);
                let q = gibbs_marginals(&d, prior.fields(), &pots, &opts, &mut rng)?;
                print!("{}", marginal_csv(&q));
            }
        },
        Command::Bias(cmd) => match cmd {
            BiasCmd::Correct { design, state } => {
                let d = load_design(&design)?;
                let (h, theta, pots) = parse_state(&std::fs::read_to_string(state)?)?;
                let q: Vec<f64> =
                    h.iter().zip(&theta).map(|(&a, &b)| sigmoid(a + b)).collect();
                let surrogate = MarginalVector::new(q, Method::Bp);
                let report = bias_correction(&d, &surrogate, &pots)?;
                println!("clone,bp,delta,corrected_raw,corrected_clamped");
                for i in 0..d.n() {
                    println!(
                        "{i},{:e},{:e},{:e},{:e}",
                        surrogate.q[i],
                        report.delta[i],
                        report.corrected_raw[i],
                        report.corrected.q[i]
                    );
                }
            }
            BiasCmd::Bound { design, c, delta } => {
                let d = load_design(&design)?;
                // every pool pair shares at most the design's maximum overlap,
                // so the widest per-pair bound uses the two largest pools
                let prof = profile(&d);
                let mut sizes = prof.pool_sizes.clone();
                sizes.sort_unstable();
                let (a, b) = match sizes.len() {
                    0 => return Err("design has no pools to bound".into()),
                    1 => (sizes[0], sizes[0]),
                    l => (sizes[l - 2], sizes[l - 1]),
                };
                let r: Vec<usize> = (0..a).collect();
                let s: Vec<usize> = (0..prof.lambda_max).chain(a..a + b - prof.lambda_max).collect();
                println!("{:e}", bias_upper_bound(&r, &s, c, delta)?);
            }
        },
        Command::Experiment(ExperimentCmd::Run { config }) => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let result = run_experiment(&cfg)?;
            print!("{}", summary_text(&result.summary));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
