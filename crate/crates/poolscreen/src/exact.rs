//! Exact posterior marginals by exhaustive enumeration.
//!
//! For n clones the posterior is a distribution over 2^n label vectors,
//!
//!   p(x | s) ∝ exp{ Σ_i h_i x_i + Σ_r c_r(x) },
//!
//! and for n up to the mid-twenties it is entirely practical to visit every
//! configuration. This module does so carefully enough to serve as the
//! ground-truth reference for the approximate methods: log-domain weights
//! with a global max subtraction, a deterministic chunked accumulation
//! (results are bit-identical however many Rayon threads run), and
//! per-configuration cost reduced to three table lookups by splitting the
//! label mask into low/high halves with precomputed field sums and pool-hit
//! patterns.
//!
//! The same enumeration machinery, restricted to a single pool, powers
//! [`exact_pool_tilted_marginals`] — the oracle against which the
//! closed-form belief-propagation pool marginals are validated.

use rayon::prelude::*;
use thiserror::Error;

use crate::design::PoolingDesign;
use crate::model::PoolPotential;

/// Largest clone count accepted by [`exact_marginals`]: 2^26 configurations
/// is around a second of work; each further clone doubles it.
pub const EXACT_MAX_CLONES: usize = 26;

/// Largest pool size accepted by [`exact_pool_tilted_marginals`].
pub const TILTED_MAX_POOL: usize = 25;

/// Configurations whose log-weight trails the maximum by more than this are
/// dropped from the accumulation pass; exp(−60) ≈ 9e−27, so even 2^26 such
/// terms perturb nothing at double precision.
const LOG_WEIGHT_CUTOFF: f64 = 60.0;

/// Masks per parallel work unit. Fixed so that the floating-point merge
/// order never depends on the thread count.
const CHUNK_BITS: usize = 16;

/// Fields are clamped to ±this before enumeration. e±700 is far beyond any
/// weight ratio double precision can distinguish, and keeping the values
/// finite lets endpoint priors (p = 0 or 1) flow through the table
/// machinery without spawning NaNs.
const FIELD_CLAMP: f64 = 700.0;

/// Errors from the exact-enumeration routines.
#[derive(Debug, Error)]
pub enum ExactError {
    #[error("exact enumeration supports at most {cap} clones, got {n}")]
    TooManyClones { n: usize, cap: usize },
    #[error("tilted pool enumeration supports pools of at most {cap} clones, got {size}")]
    PoolTooLarge { size: usize, cap: usize },
    #[error("expected {expected} fields for {expected} clones, got {got}")]
    FieldCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} potentials for {expected} pools, got {got}")]
    PotentialCountMismatch { expected: usize, got: usize },
}

/// Which inference route produced a marginal vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Bp,
    BpBias,
    Mcmc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Bp => "bp",
            Method::BpBias => "bp+bias",
            Method::Mcmc => "mcmc",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Method::Exact),
            "bp" => Ok(Method::Bp),
            "bp+bias" => Ok(Method::BpBias),
            "mcmc" => Ok(Method::Mcmc),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

/// Per-clone posterior marginals q_i = P(x_i = 1 | s), tagged with the
/// method that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalVector {
    /// Marginal probabilities, one per clone.
    pub q: Vec<f64>,
    /// Producing method.
    pub method: Method,
    /// Per-clone standard errors; present only for Monte Carlo estimates.
    pub std_err: Option<Vec<f64>>,
    /// Pre-clamp values when `q` had to be clipped into (0, 1); present only
    /// for bias-corrected marginals.
    pub raw: Option<Vec<f64>>,
}

impl MarginalVector {
    /// A plain marginal vector with no auxiliary data.
    pub fn new(q: Vec<f64>, method: Method) -> Self {
        Self { q, method, std_err: None, raw: None }
    }

    /// Number of clones.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    /// True when there are no clones.
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Precomputed lookup tables that reduce one configuration's log-weight to
/// `hsum_lo[lo] + hsum_hi[hi] + csum[plo[lo] | phi[hi]]`.
struct PatternTables {
    lo_bits: usize,
    hsum_lo: Vec<f64>,
    hsum_hi: Vec<f64>,
    plo: Vec<u32>,
    phi: Vec<u32>,
    csum: Vec<f64>,
}

impl PatternTables {
    fn build(d: &PoolingDesign, h: &[f64], pots: &[PoolPotential]) -> Self {
        let n = d.n();
        let m = d.m();
        let lo_bits = n.min(12);
        let hi_bits = n - lo_bits;

        // per-clone mask of containing pools
        let mut pool_mask = vec![0u32; n];
        for (r, pool) in d.pools().iter().enumerate() {
            for &i in pool {
                pool_mask[i] |= 1 << r;
            }
        }

        let build_half = |offset: usize, bits: usize| -> (Vec<f64>, Vec<u32>) {
            let size = 1usize << bits;
            let mut hsum = vec![0.0; size];
            let mut pat = vec![0u32; size];
            for mask in 1..size {
                let low = mask.trailing_zeros() as usize;
                let rest = mask & (mask - 1);
                hsum[mask] = hsum[rest] + h[offset + low].clamp(-FIELD_CLAMP, FIELD_CLAMP);
                pat[mask] = pat[rest] | pool_mask[offset + low];
            }
            (hsum, pat)
        };
        let (hsum_lo, plo) = build_half(0, lo_bits);
        let (hsum_hi, phi) = build_half(lo_bits, hi_bits);

        // c-sum over every pool-hit pattern: start all pools clean, add the
        // evidence swing of each hit pool
        let mut csum = vec![0.0; 1usize << m];
        csum[0] = pots.iter().map(|p| p.c0).sum();
        for pattern in 1..csum.len() {
            let low = pattern.trailing_zeros() as usize;
            csum[pattern] = csum[pattern & (pattern - 1)] + pots[low].rho();
        }

        Self { lo_bits, hsum_lo, hsum_hi, plo, phi, csum }
    }

    #[inline]
    fn log_weight(&self, mask: usize) -> f64 {
        let lo = mask & ((1 << self.lo_bits) - 1);
        let hi = mask >> self.lo_bits;
        self.hsum_lo[lo]
            + self.hsum_hi[hi]
            + self.csum[(self.plo[lo] | self.phi[hi]) as usize]
    }
}

/// Fallback log-weight evaluation when the pool count is too large for a
/// full pattern table: scan every pool per configuration.
struct DirectScan {
    clone_masks: Vec<u64>,
    c0: Vec<f64>,
    rho: Vec<f64>,
    lo_bits: usize,
    hsum_lo: Vec<f64>,
    hsum_hi: Vec<f64>,
}

impl DirectScan {
    fn build(d: &PoolingDesign, h: &[f64], pots: &[PoolPotential]) -> Self {
        let n = d.n();
        let h_clamped: Vec<f64> = h.iter().map(|&x| x.clamp(-FIELD_CLAMP, FIELD_CLAMP)).collect();
        let clone_masks = d
            .pools()
            .iter()
            .map(|pool| pool.iter().fold(0u64, |acc, &i| acc | (1 << i)))
            .collect();
        let lo_bits = n.min(12);
        let hi_bits = n - lo_bits;
        let mut hsum_lo = vec![0.0; 1 << lo_bits];
        for mask in 1..hsum_lo.len() {
            let low = mask.trailing_zeros() as usize;
            hsum_lo[mask] = hsum_lo[mask & (mask - 1)] + h_clamped[low];
        }
        let mut hsum_hi = vec![0.0; 1 << hi_bits];
        for mask in 1..hsum_hi.len() {
            let low = mask.trailing_zeros() as usize;
            hsum_hi[mask] = hsum_hi[mask & (mask - 1)] + h_clamped[lo_bits + low];
        }
        Self {
            clone_masks,
            c0: pots.iter().map(|p| p.c0).collect(),
            rho: pots.iter().map(|p| p.rho()).collect(),
            lo_bits,
            hsum_lo,
            hsum_hi,
        }
    }

    #[inline]
    fn log_weight(&self, mask: usize) -> f64 {
        let lo = mask & ((1 << self.lo_bits) - 1);
        let hi = mask >> self.lo_bits;
        let mut w = self.hsum_lo[lo] + self.hsum_hi[hi];
        let mask = mask as u64;
        for (r, &cm) in self.clone_masks.iter().enumerate() {
            w += self.c0[r];
            if mask & cm != 0 {
                w += self.rho[r];
            }
        }
        w
    }
}

enum WeightEval {
    Tables(PatternTables),
    Direct(DirectScan),
}

impl WeightEval {
    #[inline]
    fn log_weight(&self, mask: usize) -> f64 {
        match self {
            WeightEval::Tables(t) => t.log_weight(mask),
            WeightEval::Direct(d) => d.log_weight(mask),
        }
    }
}

/// The pattern tables with every entry pre-exponentiated (each table
/// normalized by its maximum, so all factors lie in [0, 1]). One
/// configuration's weight is then `wlo[lo] · whi[hi] · wc[pattern]` — two
/// multiplies, no exp — which is what makes full 2^24 enumeration cheap
/// enough to serve as a per-trial reference.
struct ProductTables {
    lo_bits: usize,
    wlo: Vec<f64>,
    whi: Vec<f64>,
    wc: Vec<f64>,
    plo: Vec<u32>,
    phi: Vec<u32>,
}

impl ProductTables {
    /// Returns None when any entry fails to exponentiate to a finite value
    /// (wildly scaled fields or potentials); callers fall back to the
    /// log-domain path.
    fn try_build(t: &PatternTables) -> Option<Self> {
        let exp_normalized = |logs: &[f64]| -> Option<Vec<f64>> {
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return None;
            }
            let out: Vec<f64> = logs.iter().map(|&x| (x - max).exp()).collect();
            out.iter().all(|x| x.is_finite()).then_some(out)
        };
        Some(Self {
            lo_bits: t.lo_bits,
            wlo: exp_normalized(&t.hsum_lo)?,
            whi: exp_normalized(&t.hsum_hi)?,
            wc: exp_normalized(&t.csum)?,
            plo: t.plo.clone(),
            phi: t.phi.clone(),
        })
    }
}

/// Enumerates all 2^n configurations through the product tables,
/// accumulating the normalizer and per-clone numerators hierarchically:
/// only the low 8 mask bits are walked per configuration, while bits 8–12,
/// 12–16 and ≥16 receive their block, sub-block and chunk totals wholesale.
/// Returns None when the normalizer degenerates (total underflow), in which
/// case the caller reruns in log domain.
fn product_accumulate(n: usize, pt: &ProductTables) -> Option<(f64, Vec<f64>)> {
    let total = 1usize << n;
    let chunk_size = total.min(1 << CHUNK_BITS);
    let n_chunks = total / chunk_size;
    let sub_size = chunk_size.min(1 << 12);
    let subs_per_chunk = chunk_size / sub_size;
    let block_size = sub_size.min(1 << 8);
    let blocks_per_sub = sub_size / block_size;
    let lo_mask = (1usize << pt.lo_bits) - 1;

    let partials: Vec<(f64, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut num = vec![0.0; n];
            let mut chunk_z = 0.0;
            for sub in 0..subs_per_chunk {
                let sub_base = c * chunk_size + sub * sub_size;
                // bits ≥ 12 are constant across the sub-block
                let hi = sub_base >> pt.lo_bits;
                let wh = pt.whi[hi];
                let ph = pt.phi[hi];
                let mut sub_z = 0.0;
                for block in 0..blocks_per_sub {
                    let block_base = sub_base + block * block_size;
                    let mut block_z = 0.0;
                    for mask in block_base..block_base + block_size {
                        let lo = mask & lo_mask;
                        let w = wh * pt.wlo[lo] * pt.wc[(pt.plo[lo] | ph) as usize];
                        block_z += w;
                        let mut bits = mask & 0xFF;
                        while bits != 0 {
                            num[bits.trailing_zeros() as usize] += w;
                            bits &= bits - 1;
                        }
                    }
                    sub_z += block_z;
                    let mut bits = block;
                    while bits != 0 {
                        num[8 + bits.trailing_zeros() as usize] += block_z;
                        bits &= bits - 1;
                    }
                }
                chunk_z += sub_z;
                let mut bits = sub;
                while bits != 0 {
                    num[12 + bits.trailing_zeros() as usize] += sub_z;
                    bits &= bits - 1;
                }
            }
            let mut bits = c;
            while bits != 0 {
                num[CHUNK_BITS + bits.trailing_zeros() as usize] += chunk_z;
                bits &= bits - 1;
            }
            (chunk_z, num)
        })
        .collect();

    let mut z = 0.0;
    let mut num = vec![0.0; n];
    for (pz, pn) in partials {
        z += pz;
        for (acc, x) in num.iter_mut().zip(pn) {
            *acc += x;
        }
    }
    (z.is_finite() && z > 0.0).then_some((z, num))
}

/// Largest pool count for which the full 2^m pattern table is built; beyond
/// it the per-configuration pool scan is used instead.
const PATTERN_TABLE_MAX_POOLS: usize = 20;

/// Computes every clone's exact posterior marginal by enumerating all 2^n
/// label configurations.
///
/// `h` holds the prior fields h_i = logit(p_i); `pots` the per-pool
/// log-potentials. Endpoint priors (infinite fields) are honored: the
/// corresponding marginals come out exactly 0 or 1. The result is
/// deterministic — bit-identical across runs and thread counts.
pub fn exact_marginals(
    d: &PoolingDesign,
    h: &[f64],
    pots: &[PoolPotential],
) -> Result<MarginalVector, ExactError> {
    let n = d.n();
    if n > EXACT_MAX_CLONES {
        return Err(ExactError::TooManyClones { n, cap: EXACT_MAX_CLONES });
    }
    if h.len() != n {
        return Err(ExactError::FieldCountMismatch { expected: n, got: h.len() });
    }
    if pots.len() != d.m() {
        return Err(ExactError::PotentialCountMismatch { expected: d.m(), got: pots.len() });
    }

    let (z, num) = if d.m() <= PATTERN_TABLE_MAX_POOLS {
        let tables = PatternTables::build(d, h, pots);
        let fast = ProductTables::try_build(&tables).and_then(|pt| product_accumulate(n, &pt));
        match fast {
            Some(zn) => zn,
            None => log_domain_accumulate(n, &WeightEval::Tables(tables)),
        }
    } else {
        log_domain_accumulate(n, &WeightEval::Direct(DirectScan::build(d, h, pots)))
    };

    let mut q: Vec<f64> = num.iter().map(|&x| x / z).collect();
    // endpoint priors are certainties; pin them so the clamp's residual
    // e^{-700}-scale mass cannot leak into the reported marginal
    for (qi, &hi) in q.iter_mut().zip(h) {
        if hi == f64::NEG_INFINITY {
            *qi = 0.0;
        } else if hi == f64::INFINITY {
            *qi = 1.0;
        }
    }
    Ok(MarginalVector::new(q, Method::Exact))
}

/// The robust enumeration path: two passes in log domain (global max, then
/// exp-accumulate), immune to any scaling the clamped fields allow.
fn log_domain_accumulate(n: usize, eval: &WeightEval) -> (f64, Vec<f64>) {
    let total = 1usize << n;
    let chunk = (1usize << CHUNK_BITS).min(total);
    let n_chunks = total / chunk;

    // pass 1: global maximum log-weight
    let max_log = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = f64::NEG_INFINITY;
            for mask in c * chunk..(c + 1) * chunk {
                local = local.max(eval.log_weight(mask));
            }
            local
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);

    // pass 2: normalizer and per-clone numerators, merged in chunk order
    let partials: Vec<(f64, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut z = 0.0;
            let mut num = vec![0.0; n];
            for mask in c * chunk..(c + 1) * chunk {
                let lw = eval.log_weight(mask) - max_log;
                if lw < -LOG_WEIGHT_CUTOFF {
                    continue;
                }
                let w = lw.exp();
                z += w;
                let mut bits = mask;
                while bits != 0 {
                    num[bits.trailing_zeros() as usize] += w;
                    bits &= bits - 1;
                }
            }
            (z, num)
        })
        .collect();

    let mut z = 0.0;
    let mut num = vec![0.0; n];
    for (pz, pn) in partials {
        z += pz;
        for (acc, x) in num.iter_mut().zip(pn) {
            *acc += x;
        }
    }
    (z, num)
}

/// Marginals of a single pool's members under the tilted local distribution
///
///   q(u) ∝ exp{ Σ_j η_j u_j + c(u) },  u ∈ {0,1}^|r|,
///
/// where `eta[j]` is the effective field of the pool's j-th member and the
/// potential takes `pot.c0` on u = 0 and `pot.c1` otherwise. This is the
/// brute-force oracle for the closed-form pool update used by belief
/// propagation.
pub fn exact_pool_tilted_marginals(
    eta: &[f64],
    pot: &PoolPotential,
) -> Result<Vec<f64>, ExactError> {
    let k = eta.len();
    if k > TILTED_MAX_POOL {
        return Err(ExactError::PoolTooLarge { size: k, cap: TILTED_MAX_POOL });
    }
    let mut max_log = f64::NEG_INFINITY;
    let log_weight = |mask: usize| -> f64 {
        let mut w = if mask == 0 { pot.c0 } else { pot.c1 };
        let mut bits = mask;
        while bits != 0 {
            w += eta[bits.trailing_zeros() as usize];
            bits &= bits - 1;
        }
        w
    };
    for mask in 0..1usize << k {
        max_log = max_log.max(log_weight(mask));
    }
    let mut z = 0.0;
    let mut num = vec![0.0; k];
    for mask in 0..1usize << k {
        let w = (log_weight(mask) - max_log).exp();
        z += w;
        let mut bits = mask;
        while bits != 0 {
            num[bits.trailing_zeros() as usize] += w;
            bits &= bits - 1;
        }
    }
    Ok(num.iter().map(|&x| x / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        potentials_from_observations, sigmoid, ObservationModel, PriorModel,
    };
    use proptest::prelude::*;

    fn fig_design() -> PoolingDesign {
        PoolingDesign::new(4, vec![vec![0, 1], vec![0, 2], vec![1, 2, 3]]).unwrap()
    }

    /// Plain reference enumeration, written independently of the table
    /// machinery: per-configuration pool membership is rechecked from the
    /// design itself.
    fn naive_marginals(d: &PoolingDesign, h: &[f64], pots: &[PoolPotential]) -> Vec<f64> {
        let n = d.n();
        let mut weights = Vec::with_capacity(1 << n);
        let mut max_log = f64::NEG_INFINITY;
        for mask in 0..1usize << n {
            let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let mut lw: f64 = (0..n).filter(|&i| labels[i]).map(|i| h[i]).sum();
            for (r, pool) in d.pools().iter().enumerate() {
                lw += pots[r].value(pool.iter().any(|&i| labels[i]));
            }
            max_log = max_log.max(lw);
            weights.push(lw);
        }
        let mut z = 0.0;
        let mut num = vec![0.0; n];
        for (mask, lw) in weights.iter().enumerate() {
            let w = (lw - max_log).exp();
            z += w;
            for (i, acc) in num.iter_mut().enumerate() {
                if mask >> i & 1 == 1 {
                    *acc += w;
                }
            }
        }
        num.iter().map(|&x| x / z).collect()
    }

    #[test]
    fn three_pool_screen_matches_hand_checked_marginals() {
        let d = fig_design();
        let prior = PriorModel::uniform(4, 0.1).unwrap();
        let ch = ObservationModel::default();
        let cases: [(&[u8], [f64; 4]); 4] = [
            (&[3, 0, 0], [0.043, 0.047, 0.001, 0.011]),
            (&[2, 2, 0], [0.853, 0.019, 0.019, 0.009]),
            (&[0, 1, 3], [0.020, 0.016, 0.760, 0.180]),
            (&[0, 0, 3], [0.001, 0.027, 0.027, 0.429]),
        ];
        for (obs, expected) in cases {
            let pots = potentials_from_observations(&d, &ch, obs).unwrap();
            let mv = exact_marginals(&d, prior.fields(), &pots).unwrap();
            for (i, &want) in expected.iter().enumerate() {
                assert!(
                    (mv.q[i] - want).abs() <= 5e-4,
                    "obs {obs:?} clone {i}: {} vs {want}",
                    mv.q[i]
                );
            }
        }
    }

    #[test]
    fn no_pools_returns_the_prior() {
        let d = PoolingDesign::new(3, vec![vec![0]]).unwrap();
        // exercise m = 0 by passing a design with zero pools
        let d0 = PoolingDesign::new(3, vec![]).unwrap();
        let prior = PriorModel::from_probs(vec![0.2, 0.5, 0.9]).unwrap();
        let mv = exact_marginals(&d0, prior.fields(), &[]).unwrap();
        for (qi, &pi) in mv.q.iter().zip(prior.probs()) {
            assert!((qi - pi).abs() < 1e-14);
        }
        drop(d);
    }

    #[test]
    fn singleton_pool_matches_logistic_formula() {
        let d = PoolingDesign::new(1, vec![vec![0]]).unwrap();
        let h = [logit_of(0.3)];
        let pot = PoolPotential { c0: -0.7, c1: -0.2 };
        let mv = exact_marginals(&d, &h, &[pot]).unwrap();
        let want = sigmoid(h[0] + pot.rho());
        assert!((mv.q[0] - want).abs() < 1e-14);
    }

    fn logit_of(p: f64) -> f64 {
        crate::model::logit(p)
    }

    #[test]
    fn disjoint_pools_factorize() {
        let d = PoolingDesign::new(2, vec![vec![0], vec![1]]).unwrap();
        let h = [logit_of(0.1), logit_of(0.4)];
        let pots = [
            PoolPotential { c0: -0.1, c1: -1.3 },
            PoolPotential { c0: -2.0, c1: -0.4 },
        ];
        let mv = exact_marginals(&d, &h, &pots).unwrap();
        for i in 0..2 {
            let want = sigmoid(h[i] + pots[i].rho());
            assert!((mv.q[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn endpoint_priors_give_exact_zero_and_one() {
        let d = PoolingDesign::new(3, vec![vec![0, 1, 2]]).unwrap();
        let prior = PriorModel::from_probs(vec![0.0, 0.5, 1.0]).unwrap();
        let pot = PoolPotential { c0: -2.0, c1: -0.5 };
        let mv = exact_marginals(&d, prior.fields(), &[pot]).unwrap();
        assert_eq!(mv.q[0], 0.0);
        assert_eq!(mv.q[2], 1.0);
        // the certain positive makes the pool potential constant, so the
        // middle clone keeps its prior
        assert!((mv.q[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_oversized_instances() {
        let d = PoolingDesign::new(EXACT_MAX_CLONES + 1, vec![vec![0]]).unwrap();
        let h = vec![0.0; EXACT_MAX_CLONES + 1];
        let err = exact_marginals(&d, &h, &[PoolPotential { c0: 0.0, c1: 0.0 }]).unwrap_err();
        assert!(matches!(err, ExactError::TooManyClones { .. }));

        let eta = vec![0.0; TILTED_MAX_POOL + 1];
        let err =
            exact_pool_tilted_marginals(&eta, &PoolPotential { c0: 0.0, c1: 0.0 }).unwrap_err();
        assert!(matches!(err, ExactError::PoolTooLarge { .. }));
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let d = fig_design();
        assert!(matches!(
            exact_marginals(&d, &[0.0; 3], &[PoolPotential { c0: 0.0, c1: 0.0 }; 3]),
            Err(ExactError::FieldCountMismatch { .. })
        ));
        assert!(matches!(
            exact_marginals(&d, &[0.0; 4], &[PoolPotential { c0: 0.0, c1: 0.0 }; 2]),
            Err(ExactError::PotentialCountMismatch { .. })
        ));
    }

    #[test]
    fn agrees_with_naive_reference_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::model::trial_rng(23, 0, crate::model::StreamRole::Labels);
        for _ in 0..5 {
            let n = rng.gen_range(5..11);
            let m = rng.gen_range(1..7);
            let pools: Vec<Vec<usize>> = (0..m)
                .map(|_| {
                    let size = rng.gen_range(1..=n.min(4));
                    rand::seq::index::sample(&mut rng, n, size).into_vec()
                })
                .collect();
            let d = PoolingDesign::new(n, pools).unwrap();
            let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let pots: Vec<PoolPotential> = (0..m)
                .map(|_| PoolPotential {
                    c0: rng.gen_range(-3.0..0.0),
                    c1: rng.gen_range(-3.0..0.0),
                })
                .collect();
            let fast = exact_marginals(&d, &h, &pots).unwrap();
            let slow = naive_marginals(&d, &h, &pots);
            for (a, b) in fast.q.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn extreme_scales_fall_back_to_log_domain_and_agree_with_naive() {
        // fields of +700 with a −1500 pool potential underflow every
        // product-table weight, forcing the two-pass log-domain path
        let d = PoolingDesign::new(2, vec![vec![0, 1]]).unwrap();
        let h = [700.0, 700.0];
        let pots = [PoolPotential { c0: 0.0, c1: -1500.0 }];
        let mv = exact_marginals(&d, &h, &pots).unwrap();
        let naive = naive_marginals(&d, &h, &pots);
        for (a, b) in mv.q.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            assert!(a.is_finite());
        }
    }

    #[test]
    fn tilted_singleton_matches_logistic_formula() {
        let pot = PoolPotential { c0: -1.1, c1: -0.3 };
        let q = exact_pool_tilted_marginals(&[0.4], &pot).unwrap();
        assert!((q[0] - sigmoid(0.4 + pot.rho())).abs() < 1e-14);
    }

    #[test]
    fn tilted_triple_matches_direct_sum() {
        let eta = [0.3, -1.0, 0.7];
        let pot = PoolPotential { c0: -0.2, c1: -1.9 };
        let q = exact_pool_tilted_marginals(&eta, &pot).unwrap();
        // direct: weight of each of the 8 states
        let mut z = 0.0;
        let mut num = [0.0; 3];
        for mask in 0..8usize {
            let mut lw = if mask == 0 { pot.c0 } else { pot.c1 };
            for (j, e) in eta.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    lw += e;
                }
            }
            let w = lw.exp();
            z += w;
            for (j, acc) in num.iter_mut().enumerate() {
                if mask >> j & 1 == 1 {
                    *acc += w;
                }
            }
        }
        for (a, b) in q.iter().zip(num.iter().map(|&x| x / z)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let d = fig_design();
        let prior = PriorModel::uniform(4, 0.1).unwrap();
        let ch = ObservationModel::default();
        let pots = potentials_from_observations(&d, &ch, &[3, 1, 2]).unwrap();
        let a = exact_marginals(&d, prior.fields(), &pots).unwrap();
        let b = exact_marginals(&d, prior.fields(), &pots).unwrap();
        assert_eq!(a.q, b.q);
    }

    /// Not a correctness test: prints per-call wall time for the workhorse
    /// 24-clone enumeration so budget regressions are easy to spot.
    /// Run with `cargo test -- --ignored --nocapture exact_timing_probe`.
    #[test]
    #[ignore = "timing probe, run on demand"]
    fn exact_timing_probe_24_clones() {
        use crate::design::{catalog_blocks, replicate_randomized};
        use crate::model::{sample_observations, place_positives, trial_rng, StreamRole};

        let base = catalog_blocks("bibd_9_4_12_3_1").unwrap();
        let d = replicate_randomized(&base, 2, 1).unwrap();
        let prior = PriorModel::uniform(d.n(), 0.1).unwrap();
        let ch = ObservationModel::default();
        let mut label_rng = trial_rng(1, 0, StreamRole::Labels);
        let labels = place_positives(d.n(), 2, &mut label_rng).unwrap();
        let mut obs_rng = trial_rng(1, 0, StreamRole::Observations);
        let obs = sample_observations(&d, &labels, &ch, &mut obs_rng).unwrap();
        let pots = potentials_from_observations(&d, &ch, &obs).unwrap();

        for run in 0..5 {
            let start = std::time::Instant::now();
            let mv = exact_marginals(&d, prior.fields(), &pots).unwrap();
            println!(
                "run {run}: n={} in {:?} (q0={:.6})",
                d.n(),
                start.elapsed(),
                mv.q[0]
            );
        }
    }

    #[test]
    fn method_tags_round_trip_through_strings() {
        for m in [Method::Exact, Method::Bp, Method::BpBias, Method::Mcmc] {
            let s = m.to_string();
            assert_eq!(s.parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    proptest! {
        /// Shifting both values of one pool's potential by a constant only
        /// rescales the normalizer; marginals must not move.
        #[test]
        fn potential_shift_invariance(
            delta in -5.0f64..5.0,
            h0 in -2.0f64..2.0,
            h1 in -2.0f64..2.0,
            h2 in -2.0f64..2.0,
        ) {
            let d = PoolingDesign::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
            let h = [h0, h1, h2];
            let base = [
                PoolPotential { c0: -0.4, c1: -1.2 },
                PoolPotential { c0: -2.1, c1: -0.3 },
            ];
            let shifted = [
                PoolPotential { c0: base[0].c0 + delta, c1: base[0].c1 + delta },
                base[1],
            ];
            let a = exact_marginals(&d, &h, &base).unwrap();
            let b = exact_marginals(&d, &h, &shifted).unwrap();
            for (x, y) in a.q.iter().zip(&b.q) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        /// Raising a clone's field strictly raises its marginal (monotone
        /// in the prior evidence).
        #[test]
        fn marginal_monotone_in_field(bump in 0.1f64..3.0) {
            let d = PoolingDesign::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
            let h = [-1.0, 0.2, 0.5];
            let pots = [
                PoolPotential { c0: -0.4, c1: -1.2 },
                PoolPotential { c0: -2.1, c1: -0.3 },
            ];
            let base = exact_marginals(&d, &h, &pots).unwrap();
            let mut h2 = h;
            h2[1] += bump;
            let bumped = exact_marginals(&d, &h2, &pots).unwrap();
            prop_assert!(bumped.q[1] > base.q[1]);
        }
    }
}
