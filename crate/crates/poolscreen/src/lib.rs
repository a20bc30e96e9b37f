//! Inference toolkit for pooled library screens: which clones are positive,
//! given noisy per-pool readouts?
//!
//! A screen assigns each of n clones a hidden binary label and reads out
//! pools of clones on a small ordinal scale (here four levels). A pool's
//! readout depends on its labels only through whether *any* member is
//! positive, so the posterior over labels factorizes into independent priors
//! times one potential per pool. This crate covers the full workflow around
//! that posterior:
//!
//! - [`design`] — pooling designs: parsing, verification of balanced
//!   incomplete block designs, dualization (blocks ↔ pools), randomized
//!   replication for larger screens, and a near-optimality check on pool
//!   overlaps and clone degrees. A small verified catalog ships built in.
//! - [`model`] — the probabilistic pieces: clone priors, the calibrated
//!   four-level readout channel, log-potentials from observations, and
//!   reproducible per-trial random streams.
//! - [`exact`] — ground-truth marginals by stable exhaustive enumeration
//!   (feasible to [`exact::EXACT_MAX_CLONES`] clones).
//! - [`bp`] — damped message passing on an independent surrogate; each pool
//!   update is closed form, so a sweep costs O(Σ pool sizes).
//! - [`bias`] — the curvature correction: a closed-form tensor quantifying
//!   how pairs of overlapping pools bias the surrogate marginals, the
//!   corrected marginals, and analytic magnitude bounds. Pools sharing at
//!   most one clone contribute exactly zero, which is what makes
//!   low-overlap designs attractive.
//! - [`mcmc`] — Gibbs sampling with batch-means error bars, the reference
//!   when enumeration is out of reach.
//! - [`harness`] — multi-trial experiments: simulate screens, run the
//!   estimators, score them against a reference by average Kullback–Leibler
//!   divergence, and write trial logs and summaries.
//!
//! Everything random takes an explicit seed and every estimator is
//! deterministic given one, so runs are reproducible bit for bit.
//!
//! # Quick start
//!
//! Exact posterior marginals for a three-pool screen whose first pool reads
//! strongly positive while the overlapping pools read clean — the readout
//! is probably a false positive, and the posterior says so:
//!
//! ```
//! use poolscreen::design::PoolingDesign;
//! use poolscreen::exact::exact_marginals;
//! use poolscreen::model::{potentials_from_observations, ObservationModel, PriorModel};
//!
//! let design = PoolingDesign::new(4, vec![vec![0, 1], vec![0, 2], vec![1, 2, 3]])?;
//! let prior = PriorModel::uniform(4, 0.1)?;
//! let channel = ObservationModel::default();
//! let potentials = potentials_from_observations(&design, &channel, &[3, 0, 0])?;
//! let posterior = exact_marginals(&design, prior.fields(), &potentials)?;
//! assert!(posterior.q.iter().all(|&q| q < 0.06));
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! # Examples
//!
//! The `examples/` directory is the guided tour; each file is a runnable
//! walkthrough of one capability, ordered here from first contact to the
//! full experiment protocol:
//!
//! ```text
//! examples/
//! ├── posterior_small_design.rs   # read a 4-clone screen's posteriors
//! ├── design_catalog.rs           # verify, dualize, profile, replicate
//! ├── bp_vs_exact.rs              # surrogate accuracy vs pool overlap
//! ├── bias_correction.rs          # correct one screen's marginals
//! ├── bias_bound.rs               # measured tensors vs the analytic bound
//! ├── gibbs_oracle.rs             # sampler agreement with enumeration
//! └── screening_experiment.rs     # multi-trial KL scoring, both designs
//! ```
//!
//! - **`posterior_small_design`** — a complete tiny screen: observations
//!   in, clone-wise posteriors out, with the readouts varied to show how
//!   evidence combines across overlapping pools.
//! - **`design_catalog`** — the shipped block designs: verification against
//!   the balance conditions, dualization into pooling designs, profiles
//!   (pool sizes, overlaps, degrees), and randomized replication.
//! - **`bp_vs_exact`** — message passing matches enumeration to near
//!   machine precision on a packing design, then drifts measurably once
//!   pools overlap in two clones.
//! - **`bias_correction`** — the curvature correction applied to one
//!   simulated 24-clone screen: per-clone shifts and the KL improvement.
//! - **`bias_bound`** — how the per-pair bound scales with pool overlap,
//!   compared against the largest tensor entries actually measured.
//! - **`gibbs_oracle`** — Gibbs marginals with error bars next to exact
//!   values, z-scores included.
//! - **`screening_experiment`** — the full protocol on a packing design
//!   (where the correction is provably inert) and an overlapping one
//!   (where it wins), hundreds of trials each.
//!
//! Run any of them with:
//!
//! ```bash
//! cargo run -p poolscreen --example posterior_small_design
//! ```
//!
//! # Command line
//!
//! The `poolscreen` binary exposes the same workflow as subcommands:
//! `design {verify,catalog,dualize,replicate,profile}`, `simulate`,
//! `infer {exact,bp,mcmc}`, `bias {correct,bound}`, and
//! `experiment run --config FILE`. File formats are plain text throughout:
//! whitespace-separated design and channel files, `key = value` experiment
//! configs, CSV outputs.

pub mod bias;
pub mod bp;
pub mod design;
pub mod exact;
pub mod harness;
pub mod mcmc;
pub mod model;
