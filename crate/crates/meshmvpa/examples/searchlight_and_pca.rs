//! The two baseline feature pipelines: searchlight voxel selection with
//! GNB scoring, and PCA with the deterministic sign convention.
//!
//! Run with: `cargo run --example searchlight_and_pca`

use meshmvpa::baselines::searchlight::{write_mask_csv, write_scores_csv};
use meshmvpa::baselines::{
    pca_fit_auto, pca_transform, searchlight_scores, searchlight_select, SearchlightConfig,
};
use meshmvpa::synthgen::{generate_synthetic, SynthConfig};

fn main() -> meshmvpa::Result<()> {
    let d = generate_synthetic(&SynthConfig {
        grid: [4, 4, 4],
        n_classes: 4,
        n_runs: 4,
        trials_per_run: 16,
        p_gen: 6,
        noise_sigma: 0.1,
        smoothness: 0.6,
        seed: 2,
    })?;

    // score every voxel by inner-CV GNB accuracy of its 2x2x2 block
    let folds: Vec<Vec<usize>> = d
        .runs()
        .into_iter()
        .map(|r| d.run_sample_indices(r))
        .collect();
    let scores = searchlight_scores(&d, &SearchlightConfig::default(), &folds)?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let max = scores.iter().cloned().fold(0.0f64, f64::max);
    println!(
        "searchlight scores: mean {mean:.3}, max {max:.3} (chance = {:.3})",
        1.0 / d.n_classes() as f64
    );
    let threshold = 0.3;
    match searchlight_select(&scores, threshold) {
        Ok(mask) => println!(
            "threshold {threshold}: {} of {} voxels kept",
            mask.len(),
            scores.len()
        ),
        Err(_) => {
            println!("threshold {threshold}: empty mask (caller falls back to the top voxel)")
        }
    }
    let scores_csv = std::env::temp_dir().join("meshmvpa_example_scores.csv");
    write_scores_csv(&scores, &scores_csv)?;
    if let Ok(mask) = searchlight_select(&scores, 0.2) {
        let mask_csv = std::env::temp_dir().join("meshmvpa_example_mask.csv");
        write_mask_csv(&mask, &mask_csv)?;
        println!(
            "exports: {} and {}",
            scores_csv.display(),
            mask_csv.display()
        );
    }

    // PCA on the raw intensities
    let model = pca_fit_auto(d.intensities())?;
    let projected = pca_transform(&model, d.intensities())?;
    let total: f64 = model.explained_variance.iter().sum();
    let top3: f64 = model.explained_variance.iter().take(3).sum();
    println!(
        "pca: {} components (numerical rank), top 3 explain {:.1}% of variance, projection {}x{}",
        model.components.rows(),
        100.0 * top3 / total,
        projected.rows(),
        projected.cols()
    );
    Ok(())
}
