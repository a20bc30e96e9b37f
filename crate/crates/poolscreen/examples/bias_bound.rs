//! How big can the curvature term get? Analytic bounds vs. reality.
//!
//! The per-pair tensor B_rsi admits a closed-form magnitude bound in terms
//! of the canonical coefficient budget C, the anchor-gap bound δ, and the
//! pool sizes and overlap. This example sweeps the overlap of two
//! eight-clone pools, compares the worst actual |B_rsi| (at a uniform
//! surrogate mean) against the bound, and finishes with the design-level
//! bound on the accumulated correction for the 24-clone screen.
//!
//! Run with: cargo run --release -p poolscreen --example bias_bound

use poolscreen::bias::{
    b_tensor_closed, bias_upper_bound, design_bias_bound, CanonicalPotential,
};
use poolscreen::design::{catalog_blocks, replicate_randomized};
use poolscreen::model::PoolPotential;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xbar = 0.1; // uniform surrogate mean, as after a quiet screen
    let size = 8;
    let pot = PoolPotential { c0: -0.3, c1: -1.9 }; // a dark-pool readout
    let c = pot.rho() * pot.rho(); // coefficient budget for this pair
    let delta = 1.0 - xbar; // group-test anchors sit at 1

    println!("two pools of {size} clones, readout swing rho = {:.2}:", pot.rho());
    println!(
        "{:>8} {:>14} {:>14} {:>8}",
        "overlap", "max |B|", "bound", "slack"
    );
    for overlap in 0..=size {
        // pools 0..8 and (8-overlap)..(16-overlap) share `overlap` clones
        let r: Vec<usize> = (0..size).collect();
        let s: Vec<usize> = (size - overlap..2 * size - overlap).collect();
        let n = 2 * size - overlap;
        let cr = CanonicalPotential::group_test(&r, &pot)?;
        let cs = CanonicalPotential::group_test(&s, &pot)?;
        let means = vec![xbar; n];
        let mut worst = 0.0f64;
        for i in 0..n {
            worst = worst.max(b_tensor_closed(&cr, &cs, i, &means)?.abs());
        }
        let bound = bias_upper_bound(&r, &s, c, delta)?;
        let slack = if worst == 0.0 {
            "-".to_string()
        } else {
            format!("{:.0}x", bound / worst)
        };
        println!("{overlap:>8} {worst:>14.3e} {bound:>14.3e} {slack:>8}");
    }

    println!("\noverlap 0 and 1 vanish identically — pools must share at least two");
    println!("clones before the surrogate picks up any curvature error. Past that,");
    println!("the bound tracks the growth; its slack buys independence from the");
    println!("particular readout and surrogate state.");

    let base = catalog_blocks("bibd_9_4_12_3_1")?;
    let design = replicate_randomized(&base, 2, 1)?;
    let aggregate = design_bias_bound(&design, c, delta)?;
    println!(
        "\n24-clone screen, all {} pool pairs together: |correction| <= {aggregate:.3e}",
        design.m() * (design.m() - 1) / 2
    );
    println!("deliberately worst-case (every pair at its extreme simultaneously);");
    println!("measured corrections sit orders of magnitude below it. Its value is");
    println!("structural: the δ^(2d-2) factor says wider pools damp the accumulated");
    println!("curvature geometrically, while the overlap exponent isolates the one");
    println!("design knob that feeds it.");
    Ok(())
}
