//! Gibbs sampling on the pooled-screening posterior.
//!
//! A slow, assumption-free Monte Carlo reference for designs too large to
//! enumerate: the single-site conditional is available in closed form
//! because a pool's potential depends on clone i only through whether the
//! pool holds any *other* positive. Flipping x_i changes pool r's potential
//! exactly when the rest of r is clean, so
//!
//!   P(x_i = 1 | x_{−i}) = σ( h_i + Σ_{r∋i, pivotal} ρ_r ),
//!
//! with ρ_r = c1 − c0 and "pivotal" meaning no other member of r is
//! positive. The sampler sweeps clones in index order, maintains per-pool
//! positive counts incrementally, and reports batch-means standard errors
//! alongside the marginal estimates.

use rand::Rng;
use thiserror::Error;

use crate::design::PoolingDesign;
use crate::exact::{MarginalVector, Method};
use crate::model::{sigmoid, PoolPotential};

/// Errors from chain configuration and sampling.
#[derive(Debug, Error)]
pub enum McmcError {
    #[error("keep must be at least 1")]
    ZeroSamples,
    #[error("thin must be at least 1")]
    ZeroThin,
    #[error("expected {expected} fields for {expected} clones, got {got}")]
    FieldCountMismatch { expected: usize, got: usize },
    #[error("field for clone {index} is {value}; the sampler needs finite fields")]
    NonFiniteField { index: usize, value: f64 },
    #[error("expected {expected} potentials for {expected} pools, got {got}")]
    PotentialCountMismatch { expected: usize, got: usize },
}

/// Chain length controls. `burn_in` sweeps are discarded, then `keep`
/// samples are recorded with `thin` sweeps between consecutive samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainOptions {
    pub burn_in: usize,
    pub keep: usize,
    pub thin: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { burn_in: 1_000, keep: 10_000, thin: 1 }
    }
}

impl ChainOptions {
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.keep == 0 {
            return Err(McmcError::ZeroSamples);
        }
        if self.thin == 0 {
            return Err(McmcError::ZeroThin);
        }
        Ok(())
    }
}

/// One full systematic sweep: resample every clone in index order given the
/// rest, keeping the per-pool positive counts in step.
fn sweep(
    state: &mut [bool],
    pos_count: &mut [usize],
    pools_of: &[Vec<usize>],
    h: &[f64],
    rho: &[f64],
    rng: &mut impl Rng,
) {
    for i in 0..state.len() {
        let xi = state[i] as usize;
        let mut field = h[i];
        for &r in &pools_of[i] {
            // pool r notices x_i only when every *other* member is negative
            if pos_count[r] - xi == 0 {
                field += rho[r];
            }
        }
        let new = rng.gen_bool(sigmoid(field));
        if new != state[i] {
            state[i] = new;
            for &r in &pools_of[i] {
                if new {
                    pos_count[r] += 1;
                } else {
                    pos_count[r] -= 1;
                }
            }
        }
    }
}

/// Estimates clone marginals by systematic-scan Gibbs sampling. The chain
/// starts from the all-negative configuration; `opts.burn_in` sweeps are
/// discarded before `opts.keep` samples are averaged. Standard errors come
/// from non-overlapping batch means with batch length ⌊√keep⌋, floored at
/// 1/keep so a frozen chain still reports nonzero uncertainty.
pub fn gibbs_marginals(
    d: &PoolingDesign,
    h: &[f64],
    pots: &[PoolPotential],
    opts: &ChainOptions,
    rng: &mut impl Rng,
) -> Result<MarginalVector, McmcError> {
    opts.validate()?;
    let n = d.n();
    if h.len() != n {
        return Err(McmcError::FieldCountMismatch { expected: n, got: h.len() });
    }
    if let Some((i, &v)) = h.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(McmcError::NonFiniteField { index: i, value: v });
    }
    if pots.len() != d.m() {
        return Err(McmcError::PotentialCountMismatch { expected: d.m(), got: pots.len() });
    }

    let pools_of = d.pools_of_clones();
    let rho: Vec<f64> = pots.iter().map(PoolPotential::rho).collect();
    let mut state = vec![false; n];
    let mut pos_count = vec![0usize; d.m()];

    for _ in 0..opts.burn_in {
        sweep(&mut state, &mut pos_count, &pools_of, h, &rho, rng);
    }

    let batch_len = (opts.keep as f64).sqrt().floor() as usize;
    let batches = opts.keep / batch_len;
    let mut totals = vec![0.0f64; n];
    let mut batch_total = vec![0.0f64; n];
    // per-clone means of the completed batches, for the variance estimate
    let mut batch_means = vec![Vec::with_capacity(batches); n];

    for sample in 0..opts.keep {
        for _ in 0..opts.thin {
            sweep(&mut state, &mut pos_count, &pools_of, h, &rho, rng);
        }
        debug_assert_eq!(
            pos_count,
            d.pools()
                .iter()
                .map(|p| p.iter().filter(|&&i| state[i]).count())
                .collect::<Vec<_>>(),
            "incremental pool counts drifted from the state"
        );
        for (i, &x) in state.iter().enumerate() {
            let v = x as usize as f64;
            totals[i] += v;
            batch_total[i] += v;
        }
        if (sample + 1) % batch_len == 0 && (sample + 1) / batch_len <= batches {
            for i in 0..n {
                batch_means[i].push(batch_total[i] / batch_len as f64);
                batch_total[i] = 0.0;
            }
        }
    }

    let q: Vec<f64> = totals.iter().map(|&t| t / opts.keep as f64).collect();
    let floor = 1.0 / opts.keep as f64;
    let std_err: Vec<f64> = batch_means
        .iter()
        .map(|means| {
            if means.len() < 2 {
                return floor;
            }
            let nb = means.len() as f64;
            let mean = means.iter().sum::<f64>() / nb;
            let var = means.iter().map(|&b| (b - mean) * (b - mean)).sum::<f64>()
                / (nb * (nb - 1.0));
            var.sqrt().max(floor)
        })
        .collect();

    Ok(MarginalVector { q, method: Method::Mcmc, std_err: Some(std_err), raw: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_marginals;
    use crate::model::{
        potentials_from_observations, sigmoid, trial_rng, ObservationModel, PriorModel,
        StreamRole,
    };

    fn mcmc_rng(trial: u64) -> rand_chacha::ChaCha8Rng {
        trial_rng(20240817, trial, StreamRole::Mcmc)
    }

    /// Brute-force conditional P(x_i = 1 | x_{−i}) from the unnormalized
    /// joint, for validating the pivotal-field shortcut.
    fn conditional_by_enumeration(
        d: &PoolingDesign,
        h: &[f64],
        pots: &[PoolPotential],
        state: &[bool],
        i: usize,
    ) -> f64 {
        let log_weight = |labels: &[bool]| -> f64 {
            let mut lw = 0.0;
            for (j, &x) in labels.iter().enumerate() {
                if x {
                    lw += h[j];
                }
            }
            for (pool, pot) in d.pools().iter().zip(pots) {
                lw += pot.value(pool.iter().any(|&j| labels[j]));
            }
            lw
        };
        let mut on = state.to_vec();
        on[i] = true;
        let mut off = state.to_vec();
        off[i] = false;
        let (a, b) = (log_weight(&on), log_weight(&off));
        let m = a.max(b);
        ((a - m).exp()) / ((a - m).exp() + (b - m).exp())
    }

    #[test]
    fn pivotal_field_matches_enumerated_conditional() {
        let d = PoolingDesign::new(
            6,
            vec![vec![0, 1, 2], vec![1, 2, 3], vec![0, 3, 4, 5], vec![2, 5]],
        )
        .unwrap();
        let h = [-2.0, -1.5, 0.3, -0.7, -2.2, 1.0];
        let pots = [
            PoolPotential { c0: -0.1, c1: -2.3 },
            PoolPotential { c0: -1.9, c1: -0.2 },
            PoolPotential { c0: -0.5, c1: -0.6 },
            PoolPotential { c0: -2.0, c1: -0.1 },
        ];
        let pools_of = d.pools_of_clones();
        let rho: Vec<f64> = pots.iter().map(PoolPotential::rho).collect();
        // every state of the six clones, every site
        for mask in 0..1usize << 6 {
            let state: Vec<bool> = (0..6).map(|j| mask >> j & 1 == 1).collect();
            let pos_count: Vec<usize> = d
                .pools()
                .iter()
                .map(|p| p.iter().filter(|&&j| state[j]).count())
                .collect();
            for i in 0..6 {
                let xi = state[i] as usize;
                let mut field = h[i];
                for &r in &pools_of[i] {
                    if pos_count[r] - xi == 0 {
                        field += rho[r];
                    }
                }
                let want = conditional_by_enumeration(&d, &h, &pots, &state, i);
                assert!(
                    (sigmoid(field) - want).abs() < 1e-12,
                    "state {mask:06b} site {i}"
                );
            }
        }
    }

    #[test]
    fn singleton_pool_matches_closed_form() {
        let d = PoolingDesign::new(1, vec![vec![0]]).unwrap();
        let h = [-1.2];
        let pots = [PoolPotential { c0: -2.0, c1: -0.3 }];
        let want = sigmoid(h[0] + pots[0].rho());
        let got = gibbs_marginals(&d, &h, &pots, &ChainOptions::default(), &mut mcmc_rng(0))
            .unwrap();
        let se = got.std_err.as_ref().unwrap()[0];
        assert!(
            (got.q[0] - want).abs() < 4.0 * se + 0.005,
            "q = {} vs {want}, se = {se}",
            got.q[0]
        );
    }

    #[test]
    fn three_pool_screen_agrees_with_exact_enumeration() {
        let d = PoolingDesign::new(4, vec![vec![0, 1], vec![0, 2], vec![1, 2, 3]]).unwrap();
        let prior = PriorModel::uniform(4, 0.1).unwrap();
        let ch = ObservationModel::default();
        let pots = potentials_from_observations(&d, &ch, &[3, 0, 0]).unwrap();
        let exact = exact_marginals(&d, prior.fields(), &pots).unwrap();
        let opts = ChainOptions { burn_in: 2_000, keep: 40_000, thin: 1 };
        let got = gibbs_marginals(&d, prior.fields(), &pots, &opts, &mut mcmc_rng(1)).unwrap();
        let se = got.std_err.as_ref().unwrap();
        for i in 0..4 {
            assert!(
                (got.q[i] - exact.q[i]).abs() < 4.0 * se[i] + 0.004,
                "clone {i}: gibbs {} vs exact {}, se {}",
                got.q[i],
                exact.q[i],
                se[i]
            );
        }
    }

    #[test]
    fn empty_design_recovers_the_prior() {
        let d = PoolingDesign::new(3, vec![]).unwrap();
        let h = [-2.0, 0.0, 1.0];
        let got =
            gibbs_marginals(&d, &h, &[], &ChainOptions::default(), &mut mcmc_rng(2)).unwrap();
        let se = got.std_err.as_ref().unwrap();
        for i in 0..3 {
            assert!((got.q[i] - sigmoid(h[i])).abs() < 4.0 * se[i] + 0.01);
        }
    }

    #[test]
    fn chains_are_deterministic_given_the_stream() {
        let d = PoolingDesign::new(4, vec![vec![0, 1], vec![1, 2, 3]]).unwrap();
        let h = [-2.2; 4];
        let pots = [
            PoolPotential { c0: -1.0, c1: -0.4 },
            PoolPotential { c0: -0.3, c1: -1.8 },
        ];
        let opts = ChainOptions { burn_in: 100, keep: 2_000, thin: 2 };
        let a = gibbs_marginals(&d, &h, &pots, &opts, &mut mcmc_rng(7)).unwrap();
        let b = gibbs_marginals(&d, &h, &pots, &opts, &mut mcmc_rng(7)).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.std_err, b.std_err);
        let c = gibbs_marginals(&d, &h, &pots, &opts, &mut mcmc_rng(8)).unwrap();
        assert_ne!(a.q, c.q);
    }

    #[test]
    fn frozen_chain_reports_the_floor_error() {
        // field −50: the chain never leaves the all-negative state
        let d = PoolingDesign::new(2, vec![vec![0, 1]]).unwrap();
        let h = [-50.0, -50.0];
        let pots = [PoolPotential { c0: -0.5, c1: -0.5 }];
        let opts = ChainOptions { burn_in: 10, keep: 400, thin: 1 };
        let got = gibbs_marginals(&d, &h, &pots, &opts, &mut mcmc_rng(3)).unwrap();
        assert_eq!(got.q, vec![0.0, 0.0]);
        assert_eq!(got.std_err.unwrap(), vec![1.0 / 400.0, 1.0 / 400.0]);
    }

    #[test]
    fn standard_errors_shrink_with_chain_length() {
        let d = PoolingDesign::new(3, vec![vec![0, 1, 2]]).unwrap();
        let h = [-1.0; 3];
        let pots = [PoolPotential { c0: -1.0, c1: -0.2 }];
        let short = ChainOptions { burn_in: 200, keep: 1_000, thin: 1 };
        let long = ChainOptions { burn_in: 200, keep: 64_000, thin: 1 };
        let a = gibbs_marginals(&d, &h, &pots, &short, &mut mcmc_rng(4)).unwrap();
        let b = gibbs_marginals(&d, &h, &pots, &long, &mut mcmc_rng(4)).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&b.std_err.unwrap()) < mean(&a.std_err.unwrap()) / 3.0);
    }

    #[test]
    fn options_and_inputs_are_validated() {
        let d = PoolingDesign::new(2, vec![vec![0, 1]]).unwrap();
        let pots = [PoolPotential { c0: -0.5, c1: -0.5 }];
        let ok = ChainOptions { burn_in: 0, keep: 10, thin: 1 };
        assert!(matches!(
            gibbs_marginals(
                &d,
                &[0.0, 0.0],
                &pots,
                &ChainOptions { keep: 0, ..ok.clone() },
                &mut mcmc_rng(5)
            ),
            Err(McmcError::ZeroSamples)
        ));
        assert!(matches!(
            gibbs_marginals(
                &d,
                &[0.0, 0.0],
                &pots,
                &ChainOptions { thin: 0, ..ok.clone() },
                &mut mcmc_rng(5)
            ),
            Err(McmcError::ZeroThin)
        ));
        assert!(matches!(
            gibbs_marginals(&d, &[0.0], &pots, &ok, &mut mcmc_rng(5)),
            Err(McmcError::FieldCountMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            gibbs_marginals(&d, &[0.0, f64::NEG_INFINITY], &pots, &ok, &mut mcmc_rng(5)),
            Err(McmcError::NonFiniteField { index: 1, .. })
        ));
        assert!(matches!(
            gibbs_marginals(&d, &[0.0, 0.0], &[], &ok, &mut mcmc_rng(5)),
            Err(McmcError::PotentialCountMismatch { expected: 1, got: 0 })
        ));
    }

    #[test]
    fn marginal_estimate_carries_the_method_tag() {
        let d = PoolingDesign::new(2, vec![vec![0, 1]]).unwrap();
        let got = gibbs_marginals(
            &d,
            &[-1.0, -1.0],
            &[PoolPotential { c0: -0.5, c1: -0.5 }],
            &ChainOptions { burn_in: 10, keep: 100, thin: 1 },
            &mut mcmc_rng(6),
        )
        .unwrap();
        assert_eq!(got.method, Method::Mcmc);
        assert!(got.raw.is_none());
        assert_eq!(got.std_err.unwrap().len(), 2);
    }
}
