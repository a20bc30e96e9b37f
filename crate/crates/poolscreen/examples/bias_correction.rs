//! The closed-form curvature correction on a 24-clone screen.
//!
//! Builds the overlap-2 screening design (two randomized copies of the
//! 9-point catalog entry, transposed so the 24 blocks become clones),
//! simulates one screen with two positive clones, and compares three
//! estimates of the posterior marginals: the message-passing surrogate,
//! the curvature-corrected surrogate, and exhaustive enumeration as ground
//! truth. The correction is pure arithmetic on the converged surrogate —
//! no extra message passing — and cuts the average divergence roughly in
//! half on this design.
//!
//! Run with: cargo run --release -p poolscreen --example bias_correction

use poolscreen::bias::bias_correction;
use poolscreen::bp::{bp_solve, BpOptions};
use poolscreen::design::{catalog_blocks, profile, replicate_randomized};
use poolscreen::exact::exact_marginals;
use poolscreen::harness::kl_bernoulli_avg;
use poolscreen::model::{
    place_positives, potentials_from_observations, sample_observations, trial_rng,
    ObservationModel, PriorModel, StreamRole,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = catalog_blocks("bibd_9_4_12_3_1")?;
    let design = replicate_randomized(&base, 2, 1)?;
    let prof = profile(&design);
    println!(
        "design: {} clones in {} pools of size {}, max pairwise overlap {}",
        design.n(),
        design.m(),
        prof.pool_sizes[0],
        prof.lambda_max
    );

    let prior = PriorModel::uniform(design.n(), 0.1)?;
    let channel = ObservationModel::default();
    let labels = {
        let mut rng = trial_rng(7, 0, StreamRole::Labels);
        place_positives(design.n(), 2, &mut rng)?
    };
    let observations = {
        let mut rng = trial_rng(7, 0, StreamRole::Observations);
        sample_observations(&design, &labels, &channel, &mut rng)?
    };
    let truly: Vec<usize> = (0..design.n()).filter(|&i| labels[i]).collect();
    println!("planted positives: {truly:?}");
    println!("pool readouts:     {observations:?}\n");

    let pots = potentials_from_observations(&design, &channel, &observations)?;
    let (bp, state) = bp_solve(&design, prior.fields(), &pots, &BpOptions::default())?;
    assert!(state.converged, "surrogate solver should converge here");
    let report = bias_correction(&design, &bp, &pots)?;
    let exact = exact_marginals(&design, prior.fields(), &pots)?;

    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>11}",
        "clone", "exact", "surrogate", "corrected", "delta"
    );
    for i in 0..design.n() {
        // show the planted clones plus the largest corrections
        if labels[i] || report.delta[i].abs() > 2e-4 {
            println!(
                "{i:>5} {:>10.6} {:>10.6} {:>10.6} {:>11.2e} {}",
                exact.q[i],
                bp.q[i],
                report.corrected.q[i],
                report.delta[i],
                if labels[i] { "<- positive" } else { "" }
            );
        }
    }

    let kl_bp = kl_bernoulli_avg(&exact.q, &bp.q)?;
    let kl_corrected = kl_bernoulli_avg(&exact.q, &report.corrected.q)?;
    println!("\nmean KL to ground truth:");
    println!("  surrogate  {kl_bp:.4e}");
    println!("  corrected  {kl_corrected:.4e}");
    println!(
        "  ratio      {:.2}x {}",
        kl_bp / kl_corrected,
        if kl_corrected < kl_bp { "(improvement)" } else { "(no improvement on this draw)" }
    );
    Ok(())
}
