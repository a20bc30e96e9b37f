//! Loopy belief propagation with closed-form pool updates.
//!
//! The posterior p(x|s) ∝ exp{h·x + Σ_r c_r(x)} is approximated by an
//! independent surrogate q̄(x; θ) ∝ exp{(h+θ)·x}, with the correction field
//! θ split into per-pool messages, θ_i = Σ_r ξ_ri. One sweep visits each
//! pool in index order and replaces its message by the KL-projection of the
//! pool's tilted distribution: form the cavity fields η_j = h_j + θ_j −
//! ξ_rj, tilt them by the pool potential, and moment-match the result back
//! onto an independent distribution.
//!
//! Because a pool potential takes only two values (all-clean vs hit), the
//! projection never needs a 2^|r| enumeration. With the softplus sum
//! S_{−j} = Σ_{k≠j} ln(1+e^{η_k}), the tilted marginal logit of member j is
//!
//!   m_j = η_j + c1 + S_{−j} − ln( e^{c1}(e^{S_{−j}} − 1) + e^{c0} ),
//!
//! and the new message is ξ̄_rj = m_j − η_j. The log-domain evaluation via
//! [`log_expm1`](crate::model::log_expm1) stays accurate for pools of any
//! size and potentials of any strength: a singleton pool reproduces ξ̄ =
//! c1 − c0 exactly, and a constant potential (c0 = c1) yields exactly zero.
//!
//! On designs whose pools overlap in at most one clone the fixed point is
//! exact; larger overlaps introduce a systematic bias that the companion
//! bias module removes to leading order.

use thiserror::Error;

use crate::design::PoolingDesign;
use crate::exact::{MarginalVector, Method};
use crate::model::{log_add_exp, log_expm1, log1p_exp, sigmoid, PoolPotential};

/// Errors from belief-propagation setup. Non-convergence is not an error:
/// it is reported through [`BpState::converged`].
#[derive(Debug, Error)]
pub enum BpError {
    #[error("damping must lie in [0, 1), got {gamma}")]
    DampingOutOfRange { gamma: f64 },
    #[error("tolerance must be positive and finite, got {tol}")]
    BadTolerance { tol: f64 },
    #[error("sweep limit must be at least 1")]
    ZeroSweepLimit,
    #[error("clone {index} has a non-finite field {h}; message passing needs interior priors")]
    NonFiniteField { index: usize, h: f64 },
    #[error("expected {expected} fields for {expected} clones, got {got}")]
    FieldCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} potentials for {expected} pools, got {got}")]
    PotentialCountMismatch { expected: usize, got: usize },
}

/// Knobs for the message-passing loop. The schedule is fixed: pools are
/// visited sequentially in index order, so runs are deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    /// Damping γ: each message keeps γ of its old value and takes 1−γ of
    /// the fresh projection. 0 is undamped; values near 1 move slowly.
    pub damping: f64,
    /// Convergence threshold on the sup-norm change of θ over one sweep.
    pub tol: f64,
    /// Maximum number of full sweeps before giving up.
    pub max_sweeps: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-8, max_sweeps: 1000 }
    }
}

impl BpOptions {
    pub fn validate(&self) -> Result<(), BpError> {
        if !(0.0..1.0).contains(&self.damping) || !self.damping.is_finite() {
            return Err(BpError::DampingOutOfRange { gamma: self.damping });
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(BpError::BadTolerance { tol: self.tol });
        }
        if self.max_sweeps == 0 {
            return Err(BpError::ZeroSweepLimit);
        }
        Ok(())
    }
}

/// Terminal state of a message-passing run.
#[derive(Debug, Clone, PartialEq)]
pub struct BpState {
    /// Messages ξ_rj, indexed [pool][member position], member order matching
    /// the design's sorted pools.
    pub xi: Vec<Vec<f64>>,
    /// Total correction field θ_i = Σ_r ξ_ri per clone.
    pub theta: Vec<f64>,
    /// Full sweeps performed.
    pub iterations: usize,
    /// Whether the final sweep moved θ by at most the tolerance.
    pub converged: bool,
    /// Sup-norm θ change of the final sweep.
    pub residual: f64,
}

/// Marginals of one pool's tilted distribution, as logits. `eta[j]` is the
/// effective (cavity) field of the pool's j-th member.
fn pool_marginal_logits(eta: &[f64], pot: &PoolPotential) -> Vec<f64> {
    let softplus: Vec<f64> = eta.iter().map(|&e| log1p_exp(e)).collect();
    let total: f64 = softplus.iter().sum();
    eta.iter()
        .zip(&softplus)
        .map(|(&e, &sp)| {
            let s_without = (total - sp).max(0.0);
            e + pot.c1 + s_without - log_add_exp(pot.c1 + log_expm1(s_without), pot.c0)
        })
        .collect()
}

/// Marginal probabilities of a single pool's tilted distribution,
///
///   q(u) ∝ exp{ Σ_j η_j u_j + c(u) },
///
/// evaluated in closed form. Agrees with brute-force enumeration
/// ([`exact_pool_tilted_marginals`](crate::exact::exact_pool_tilted_marginals))
/// to near machine precision but costs O(|r|) instead of O(2^|r|).
pub fn pool_marginals_closed_form(eta: &[f64], pot: &PoolPotential) -> Vec<f64> {
    pool_marginal_logits(eta, pot).into_iter().map(sigmoid).collect()
}

/// The projected message of one pool: ξ̄_j = m_j − η_j, where m_j is the
/// tilted marginal logit. Replacing a pool's message by this vector is one
/// step of the sequential schedule; at a fixed point every pool's tilted
/// marginals coincide with the surrogate's.
pub fn pool_update(eta: &[f64], pot: &PoolPotential) -> Vec<f64> {
    pool_marginal_logits(eta, pot)
        .into_iter()
        .zip(eta)
        .map(|(m, &e)| m - e)
        .collect()
}

/// Runs damped sequential message passing to convergence (or the sweep
/// limit) and returns the surrogate marginals q̄_i = σ(h_i + θ_i) together
/// with the final state. Non-convergence is flagged in the state, not
/// raised: the marginals of a stalled run are still often usable.
pub fn bp_solve(
    d: &PoolingDesign,
    h: &[f64],
    pots: &[PoolPotential],
    opts: &BpOptions,
) -> Result<(MarginalVector, BpState), BpError> {
    opts.validate()?;
    let n = d.n();
    if h.len() != n {
        return Err(BpError::FieldCountMismatch { expected: n, got: h.len() });
    }
    if pots.len() != d.m() {
        return Err(BpError::PotentialCountMismatch { expected: d.m(), got: pots.len() });
    }
    if let Some((index, &hi)) = h.iter().enumerate().find(|(_, hi)| !hi.is_finite()) {
        return Err(BpError::NonFiniteField { index, h: hi });
    }

    let mut xi: Vec<Vec<f64>> = d.pools().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut theta = vec![0.0; n];
    let mut eta = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;

    let mut theta_before = vec![0.0; n];
    while iterations < opts.max_sweeps {
        theta_before.copy_from_slice(&theta);
        for (r, pool) in d.pools().iter().enumerate() {
            eta.clear();
            eta.extend(pool.iter().zip(&xi[r]).map(|(&i, &x)| h[i] + theta[i] - x));
            let fresh = pool_update(&eta, &pots[r]);
            for ((&i, x), f) in pool.iter().zip(xi[r].iter_mut()).zip(fresh) {
                let updated = opts.damping * *x + (1.0 - opts.damping) * f;
                theta[i] += updated - *x;
                *x = updated;
            }
        }
        iterations += 1;
        residual = theta
            .iter()
            .zip(&theta_before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }

    let q = theta.iter().zip(h).map(|(&t, &hi)| sigmoid(hi + t)).collect();
    let state = BpState { xi, theta, iterations, converged, residual };
    Ok((MarginalVector::new(q, Method::Bp), state))
}
