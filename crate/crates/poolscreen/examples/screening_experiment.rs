//! A multi-trial screening experiment, configured in code.
//!
//! The experiment driver sweeps positive counts, runs many simulated
//! screens per count on independent random streams, and reports the mean
//! divergence of the surrogate and corrected marginals from ground truth.
//! Here: the 12-clone dual of the 9-point catalog entry (a packing design,
//! where the correction provably does nothing) against its 24-clone
//! overlap-2 replicate (where it earns its keep). Everything is
//! reproducible bit for bit from the master seed.
//!
//! The same experiment runs from a config file via
//! `poolscreen experiment run --config FILE`.
//!
//! Run with: cargo run --release -p poolscreen --example screening_experiment

use poolscreen::bp::BpOptions;
use poolscreen::harness::{
    run_experiment, summary_text, DesignSource, ExperimentConfig, ReferenceEngine,
};
use poolscreen::mcmc::ChainOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig {
        design: DesignSource::Catalog {
            name: "bibd_9_4_12_3_1".into(),
            replicate: 1,
            seed: 5,
        },
        prior: 0.1,
        obs_file: None,
        positives: vec![1, 2, 3],
        trials: 200,
        master_seed: 20240817,
        reference: ReferenceEngine::Exact,
        bp: BpOptions::default(),
        chain: ChainOptions::default(),
        exclude_nonconverged: false,
        out_dir: None,
    };

    println!("overlap-1 packing design (12 clones, 9 pools of 4):");
    let packing = run_experiment(&cfg)?;
    print!("{}", summary_text(&packing.summary));
    let inert = packing
        .records
        .iter()
        .all(|r| r.kl_bp == r.kl_corrected);
    println!("correction inert on every trial: {inert}\n");

    cfg.design = DesignSource::Catalog {
        name: "bibd_9_4_12_3_1".into(),
        replicate: 2,
        seed: 5,
    };
    cfg.trials = 100;
    println!("overlap-2 replicate (24 clones, 9 pools of 8):");
    let looped = run_experiment(&cfg)?;
    print!("{}", summary_text(&looped.summary));
    for row in &looped.summary {
        println!(
            "  k={}: corrected/surrogate KL ratio {:.2}",
            row.k,
            row.mean_kl_corrected / row.mean_kl_bp
        );
    }
    println!("\non the packing design both columns agree exactly; on the");
    println!("overlap-2 design the corrected estimator is consistently closer");
    println!("to the enumerated truth.");
    Ok(())
}
