//! Probabilistic model of a pooled screen: clone priors, the noisy readout
//! channel, forward simulation, and the per-pool log-likelihood potentials
//! that all inference routines consume.
//!
//! Clone labels are independent Bernoulli a priori: x_i ~ Bern(p_i). A pool
//! r is truly positive when any member clone is positive, z_r = max_{i∈r}
//! x_i. The assay does not report z_r directly; it reports a discretized
//! signal s_r ∈ {0,1,2,3} (e.g. binned colony counts) drawn from a 4×2
//! conditional table p(s|z). Bayes' rule then couples the clones through
//! per-pool potentials
//!
//!   c_r(x) = ln p(s_r | z_r(x)),
//!
//! which take exactly two values, `c0` on configurations where the pool is
//! all-negative and `c1` otherwise. The posterior over labels is
//!
//!   p(x | s) ∝ exp{ Σ_i h_i x_i + Σ_r c_r(x) },  h_i = logit(p_i),
//!
//! and everything downstream — exact enumeration, belief propagation, the
//! bias correction, Gibbs sampling — works from the pair (h, {c_r}).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::design::PoolingDesign;

/// Number of distinct readout levels.
pub const READOUT_LEVELS: usize = 4;

/// Errors from model construction and observation-file parsing.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("clone {index} has prior probability {p} outside [0, 1]")]
    PriorOutOfRange { index: usize, p: f64 },
    #[error("channel entry p(s={s}|z={z}) = {p} is not a probability")]
    ChannelEntryOutOfRange { s: u8, z: u8, p: f64 },
    #[error("channel column z={z} sums to {sum}, expected 1")]
    ChannelColumnNotNormalized { z: u8, sum: f64 },
    #[error("pool {pool}: readout {s} has zero likelihood under z={z}; its log-potential is undefined")]
    ZeroLikelihood { pool: usize, s: u8, z: u8 },
    #[error("readout value {s} is outside 0..={}", READOUT_LEVELS - 1)]
    ReadoutOutOfRange { s: u8 },
    #[error("cannot place {k} positives among {n} clones")]
    TooManyPositives { k: usize, n: usize },
    #[error("expected {expected} observations for {expected} pools, got {got}")]
    ObservationCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} labels for {expected} clones, got {got}")]
    LabelCountMismatch { expected: usize, got: usize },
}

/// The log-odds transform, ln(p / (1−p)). Maps 0 ↦ −∞ and 1 ↦ +∞.
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// The logistic function σ(x) = 1/(1+e^{−x}), computed without overflow for
/// any argument.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x), the softplus, accurate across the whole line: for large x it
/// returns x + e^{−x} − …, for very negative x it returns e^x without
/// cancellation.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(e^x − 1) for x ≥ 0. Returns −∞ at 0; uses expm1 for moderate x and
/// the asymptote x + ln(1 − e^{−x}) once e^x would overflow the mantissa.
pub fn log_expm1(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "log_expm1 domain is x >= 0, got {x}");
    if x == 0.0 {
        f64::NEG_INFINITY
    } else if x < 30.0 {
        x.exp_m1().ln()
    } else {
        x + (-(-x).exp()).ln_1p()
    }
}

/// ln(e^a + e^b), stable for any pair including infinities of either sign.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Independent Bernoulli priors over clone labels, stored both as
/// probabilities and as the field (log-odds) form used by the potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    p: Vec<f64>,
    h: Vec<f64>,
}

impl PriorModel {
    /// Same prior probability for every clone.
    pub fn uniform(n: usize, p: f64) -> Result<Self, ModelError> {
        Self::from_probs(vec![p; n])
    }

    /// Per-clone prior probabilities, each in the closed interval [0, 1].
    /// Endpoint probabilities yield infinite fields, which forward
    /// simulation and exact enumeration handle; iterative methods expect
    /// interior priors.
    pub fn from_probs(p: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &pi) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&pi) {
                return Err(ModelError::PriorOutOfRange { index, p: pi });
            }
        }
        let h = p.iter().map(|&pi| logit(pi)).collect();
        Ok(Self { p, h })
    }

    /// Number of clones.
    pub fn n(&self) -> usize {
        self.p.len()
    }

    /// Prior probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    /// Prior log-odds h_i = logit(p_i).
    pub fn fields(&self) -> &[f64] {
        &self.h
    }
}

/// The readout channel: a 4×2 table of conditional probabilities
/// `table[s][z] = p(s|z)`, each column a distribution over the four levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    table: [[f64; 2]; READOUT_LEVELS],
}

/// Normalization slack tolerated in each channel column.
const COLUMN_SUM_TOL: f64 = 1e-9;

impl ObservationModel {
    /// Validates that every entry is a probability and each column sums
    /// to 1 within a small tolerance.
    pub fn new(table: [[f64; 2]; READOUT_LEVELS]) -> Result<Self, ModelError> {
        for z in 0..2 {
            let mut sum = 0.0;
            for (s, row) in table.iter().enumerate() {
                let p = row[z];
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return Err(ModelError::ChannelEntryOutOfRange { s: s as u8, z: z as u8, p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(ModelError::ChannelColumnNotNormalized { z: z as u8, sum });
            }
        }
        Ok(Self { table })
    }

    /// p(s|z).
    pub fn likelihood(&self, s: u8, z: u8) -> f64 {
        self.table[s as usize][z as usize]
    }

    /// The full table, rows indexed by s, columns by z.
    pub fn table(&self) -> &[[f64; 2]; READOUT_LEVELS] {
        &self.table
    }

    /// Parses the channel file format: four lines `s p(s|0) p(s|1)`, one per
    /// readout level, in any order; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut table = [[f64::NAN; 2]; READOUT_LEVELS];
        let mut seen = [false; READOUT_LEVELS];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(ModelError::Parse {
                    line,
                    msg: format!("expected \"s p(s|0) p(s|1)\", got {} fields", fields.len()),
                });
            }
            let s: usize = fields[0].parse().map_err(|e| ModelError::Parse {
                line,
                msg: format!("bad readout level: {e}"),
            })?;
            if s >= READOUT_LEVELS {
                return Err(ModelError::Parse {
                    line,
                    msg: format!("readout level {s} outside 0..={}", READOUT_LEVELS - 1),
                });
            }
            if seen[s] {
                return Err(ModelError::Parse {
                    line,
                    msg: format!("readout level {s} listed twice"),
                });
            }
            seen[s] = true;
            for z in 0..2 {
                table[s][z] = fields[1 + z].parse().map_err(|e| ModelError::Parse {
                    line,
                    msg: format!("bad probability: {e}"),
                })?;
            }
        }
        if let Some(s) = seen.iter().position(|&ok| !ok) {
            return Err(ModelError::Parse {
                line: 0,
                msg: format!("readout level {s} missing"),
            });
        }
        Self::new(table)
    }

    /// Renders the channel in the same format [`ObservationModel::parse`]
    /// reads.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (s, row) in self.table.iter().enumerate() {
            out.push_str(&format!("{s} {} {}\n", row[0], row[1]));
        }
        out
    }
}

impl Default for ObservationModel {
    /// The calibrated colony-count channel used throughout the examples:
    /// a clean pool most often reads level 0, a positive pool most often
    /// reads level 3, but both distributions have heavy cross-talk.
    fn default() -> Self {
        Self {
            table: [
                [0.871, 0.05],
                [0.016, 0.11],
                [0.035, 0.27],
                [0.078, 0.57],
            ],
        }
    }
}

/// The two-valued log-potential of one pool: `c0 = ln p(s|0)` on all-negative
/// configurations, `c1 = ln p(s|1)` otherwise. Both values are finite by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolPotential {
    pub c0: f64,
    pub c1: f64,
}

impl PoolPotential {
    /// The evidence swing ρ = c1 − c0: positive when the readout favors the
    /// pool containing a positive, negative when it favors a clean pool.
    pub fn rho(&self) -> f64 {
        self.c1 - self.c0
    }

    /// Value on a configuration with `any_positive` indicating z_r.
    pub fn value(&self, any_positive: bool) -> f64 {
        if any_positive {
            self.c1
        } else {
            self.c0
        }
    }
}

/// True pool state z_r = max over member labels.
pub fn pool_state(labels: &[bool], pool: &[usize]) -> bool {
    pool.iter().any(|&i| labels[i])
}

/// Draws independent labels x_i ~ Bern(p_i).
pub fn sample_labels(prior: &PriorModel, rng: &mut impl Rng) -> Vec<bool> {
    prior.probs().iter().map(|&p| rng.gen_bool(p)).collect()
}

/// Draws a label vector with exactly `k` positives, uniform over the
/// k-subsets of the clones.
pub fn place_positives(n: usize, k: usize, rng: &mut impl Rng) -> Result<Vec<bool>, ModelError> {
    if k > n {
        return Err(ModelError::TooManyPositives { k, n });
    }
    let mut labels = vec![false; n];
    for i in rand::seq::index::sample(rng, n, k) {
        labels[i] = true;
    }
    Ok(labels)
}

/// Simulates one screen: computes each pool's true state from the labels and
/// draws its readout from the channel column for that state.
pub fn sample_observations(
    design: &PoolingDesign,
    labels: &[bool],
    channel: &ObservationModel,
    rng: &mut impl Rng,
) -> Result<Vec<u8>, ModelError> {
    if labels.len() != design.n() {
        return Err(ModelError::LabelCountMismatch { expected: design.n(), got: labels.len() });
    }
    let mut observations = Vec::with_capacity(design.m());
    for pool in design.pools() {
        let z = pool_state(labels, pool) as u8;
        // inverse-CDF draw over the four levels; the final level absorbs
        // residual rounding so the draw always lands
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut s = (READOUT_LEVELS - 1) as u8;
        for level in 0..READOUT_LEVELS {
            acc += channel.likelihood(level as u8, z);
            if u < acc {
                s = level as u8;
                break;
            }
        }
        observations.push(s);
    }
    Ok(observations)
}

/// Converts a vector of observed readouts into per-pool log-potentials.
/// Errors when any required likelihood is zero, since its logarithm (and
/// hence the potential) would be unusable by every inference routine.
pub fn potentials_from_observations(
    design: &PoolingDesign,
    channel: &ObservationModel,
    observations: &[u8],
) -> Result<Vec<PoolPotential>, ModelError> {
    if observations.len() != design.m() {
        return Err(ModelError::ObservationCountMismatch {
            expected: design.m(),
            got: observations.len(),
        });
    }
    let mut potentials = Vec::with_capacity(observations.len());
    for (pool, &s) in observations.iter().enumerate() {
        if s as usize >= READOUT_LEVELS {
            return Err(ModelError::ReadoutOutOfRange { s });
        }
        for z in 0..2u8 {
            if channel.likelihood(s, z) == 0.0 {
                return Err(ModelError::ZeroLikelihood { pool, s, z });
            }
        }
        potentials.push(PoolPotential {
            c0: channel.likelihood(s, 0).ln(),
            c1: channel.likelihood(s, 1).ln(),
        });
    }
    Ok(potentials)
}

/// Distinct random-number roles within one simulated trial. Each role gets
/// its own ChaCha stream so that, e.g., changing the MCMC sweep count can
/// never perturb which labels were drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Labels = 0,
    Observations = 1,
    Mcmc = 2,
}

/// Number of stream slots reserved per trial (one per [`StreamRole`], with
/// room to spare).
pub const STREAMS_PER_TRIAL: u64 = 4;

/// A deterministic per-trial, per-role generator: every (master_seed, trial,
/// role) triple names an independent ChaCha8 stream, so trials can run in
/// any order or in parallel and still reproduce bit-for-bit.
pub fn trial_rng(master_seed: u64, trial: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial * STREAMS_PER_TRIAL + role as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::PoolingDesign;
    use proptest::prelude::*;

    #[test]
    fn default_channel_columns_are_distributions() {
        let ch = ObservationModel::default();
        for z in 0..2u8 {
            let sum: f64 = (0..READOUT_LEVELS as u8).map(|s| ch.likelihood(s, z)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_parse_emit_round_trip() {
        let ch = ObservationModel::default();
        let back = ObservationModel::parse(&ch.emit()).unwrap();
        assert_eq!(ch, back);
    }

    #[test]
    fn channel_parse_accepts_comments_and_any_order() {
        let text = "# channel\n3 0.078 0.57\n0 0.871 0.05\n1 0.016 0.11\n2 0.035 0.27\n";
        assert_eq!(ObservationModel::parse(text).unwrap(), ObservationModel::default());
    }

    #[test]
    fn channel_parse_rejects_malformed_input() {
        assert!(ObservationModel::parse("0 0.9\n").is_err());
        assert!(ObservationModel::parse("0 0.9 0.1\n0 0.9 0.1\n1 0.0 0.1\n2 0.1 0.8\n").is_err());
        assert!(ObservationModel::parse("5 0.9 0.1\n").is_err());
        // missing level 3
        let text = "0 0.9 0.1\n1 0.05 0.2\n2 0.05 0.7\n";
        assert!(ObservationModel::parse(text).is_err());
        // column does not normalize
        let text = "0 0.9 0.1\n1 0.05 0.2\n2 0.05 0.3\n3 0.5 0.4\n";
        assert!(ObservationModel::parse(text).is_err());
    }

    #[test]
    fn pool_state_is_disjunction() {
        let labels = vec![false, true, false, false];
        assert!(pool_state(&labels, &[0, 1]));
        assert!(!pool_state(&labels, &[0, 2, 3]));
    }

    #[test]
    fn potentials_match_log_likelihood_ratios() {
        let d = PoolingDesign::new(4, vec![vec![0, 1], vec![0, 2], vec![1, 2, 3]]).unwrap();
        let ch = ObservationModel::default();
        let pots = potentials_from_observations(&d, &ch, &[3, 0, 0]).unwrap();
        assert!((pots[0].c0 - 0.078f64.ln()).abs() < 1e-15);
        assert!((pots[0].c1 - 0.57f64.ln()).abs() < 1e-15);
        assert!((pots[0].rho() - (0.57f64 / 0.078).ln()).abs() < 1e-12);
        assert!(pots[1].rho() < 0.0, "level 0 should favor a clean pool");
    }

    #[test]
    fn potentials_reject_zero_likelihood() {
        let d = PoolingDesign::new(2, vec![vec![0, 1]]).unwrap();
        let ch = ObservationModel::new([
            [1.0, 0.0],
            [0.0, 0.2],
            [0.0, 0.3],
            [0.0, 0.5],
        ])
        .unwrap();
        let err = potentials_from_observations(&d, &ch, &[0]).unwrap_err();
        assert!(matches!(err, ModelError::ZeroLikelihood { pool: 0, s: 0, z: 1 }));
    }

    #[test]
    fn prior_accepts_endpoints_and_rejects_outside() {
        let prior = PriorModel::from_probs(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(prior.fields()[0], f64::NEG_INFINITY);
        assert_eq!(prior.fields()[1], 0.0);
        assert_eq!(prior.fields()[2], f64::INFINITY);
        assert!(PriorModel::from_probs(vec![1.1]).is_err());
        assert!(PriorModel::from_probs(vec![-0.1]).is_err());
    }

    #[test]
    fn place_positives_places_exactly_k() {
        let mut rng = trial_rng(11, 0, StreamRole::Labels);
        for k in 0..=5 {
            let labels = place_positives(5, k, &mut rng).unwrap();
            assert_eq!(labels.iter().filter(|&&x| x).count(), k);
        }
        assert!(place_positives(3, 4, &mut rng).is_err());
    }

    #[test]
    fn sampled_label_frequency_tracks_prior() {
        let prior = PriorModel::uniform(1, 0.1).unwrap();
        let mut rng = trial_rng(5, 0, StreamRole::Labels);
        let hits: usize = (0..20_000)
            .filter(|_| sample_labels(&prior, &mut rng)[0])
            .count();
        let freq = hits as f64 / 20_000.0;
        assert!((freq - 0.1).abs() < 0.01, "frequency {freq} far from 0.1");
    }

    #[test]
    fn observation_frequencies_track_channel() {
        let d = PoolingDesign::new(1, vec![vec![0]]).unwrap();
        let ch = ObservationModel::default();
        let mut rng = trial_rng(9, 0, StreamRole::Observations);
        let mut counts = [0usize; READOUT_LEVELS];
        let trials = 40_000;
        for _ in 0..trials {
            let obs = sample_observations(&d, &[true], &ch, &mut rng).unwrap();
            counts[obs[0] as usize] += 1;
        }
        for s in 0..READOUT_LEVELS {
            let freq = counts[s] as f64 / trials as f64;
            let want = ch.likelihood(s as u8, 1);
            assert!((freq - want).abs() < 0.01, "s={s}: {freq} vs {want}");
        }
    }

    #[test]
    fn trial_streams_are_reproducible_and_distinct() {
        let draw = |trial, role| -> Vec<u64> {
            let mut rng = trial_rng(100, trial, role);
            (0..4).map(|_| rand::RngCore::next_u64(&mut rng)).collect()
        };
        let a = draw(3, StreamRole::Labels);
        let b = draw(3, StreamRole::Labels);
        let c = draw(3, StreamRole::Observations);
        let d = draw(4, StreamRole::Labels);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    proptest! {
        #[test]
        fn logit_sigmoid_round_trip(p in 1e-6f64..=0.999_999) {
            let back = sigmoid(logit(p));
            prop_assert!((back - p).abs() < 1e-12);
        }

        #[test]
        fn log1p_exp_matches_naive_in_safe_range(x in -30.0f64..30.0) {
            let naive = (1.0 + x.exp()).ln();
            prop_assert!((log1p_exp(x) - naive).abs() < 1e-12);
        }

        #[test]
        fn log_expm1_matches_naive_in_safe_range(x in 1e-3f64..25.0) {
            let naive = (x.exp() - 1.0).ln();
            prop_assert!((log_expm1(x) - naive).abs() < 1e-10);
        }

        #[test]
        fn log_expm1_inverts_log1p_exp(x in -20.0f64..20.0) {
            // softplus then its inverse gives back x
            let back = log_expm1(log1p_exp(x));
            prop_assert!((back - x).abs() < 1e-9);
        }

        #[test]
        fn log_add_exp_is_stable_and_correct(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let m = a.max(b);
            let naive = m + ((a - m).exp() + (b - m).exp()).ln();
            prop_assert!((log_add_exp(a, b) - naive).abs() < 1e-12);
        }
    }
}
