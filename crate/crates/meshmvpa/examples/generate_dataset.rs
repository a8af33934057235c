//! Generate a synthetic dataset bundle, reload it, and inspect its
//! structure — including the hemodynamic label shift and run splits.
//!
//! Run with: `cargo run --example generate_dataset`

use meshmvpa::dataset::{load_dataset, shift_labels, split_by_run};
use meshmvpa::synthgen::{write_synthetic_bundle, SynthConfig};

fn main() -> meshmvpa::Result<()> {
    let out = std::env::temp_dir().join("meshmvpa_example_bundle");
    let cfg = SynthConfig {
        grid: [4, 4, 4],
        n_classes: 4,
        n_runs: 5,
        trials_per_run: 16,
        p_gen: 6,
        noise_sigma: 0.1,
        smoothness: 0.6,
        seed: 7,
    };
    write_synthetic_bundle(&cfg, &out)?;
    println!("bundle written to {}", out.display());

    let d = load_dataset(&out)?;
    println!(
        "loaded: {} voxels, {} samples, {} classes, runs {:?}",
        d.n_voxels(),
        d.n_samples(),
        d.n_classes(),
        d.runs()
    );

    // shift labels forward to absorb response lag; each run shrinks by lag
    let lag = 3;
    let shifted = shift_labels(&d, lag)?;
    println!(
        "after lag {lag}: {} samples ({} per run)",
        shifted.n_samples(),
        shifted.run_sample_indices(0).len()
    );

    // hold out one run for testing
    let (train, test) = split_by_run(&shifted, 2)?;
    println!(
        "hold out run 2: {} train samples, {} test samples",
        train.n_samples(),
        test.n_samples()
    );
    Ok(())
}
